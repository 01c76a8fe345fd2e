import numpy as np
import pytest
from loguru import logger

import config
from backend.dataset import DesignBox, TrainingDataset
from backend.exceptions import SurrogateError
from backend.pointmodel import neutron_prior_mean
from backend.surrogate import (SURROGATE_KINDS, GPConfig, GPSurrogate, LmcLikelihood, StructuralMean, add_points,
                               load_surrogate, save_surrogate, train_gp, train_surrogate_kind)

from tests.conftest import smooth_outputs


def line_dataset():
    box = DesignBox(("a",), (0.0,), (1.0,))
    X = np.linspace(0.0, 1.0, 5)[:, None]
    return TrainingDataset(X, np.sin(3.0 * X) + 2.0, ("a",), ("f",), box)


def fixed_gp(dataset, length_scale, mixing, fixed_noise=1e-4):
    n_latent = np.shape(mixing)[1]
    lik = LmcLikelihood(np.zeros((1, len(dataset.input_names))), np.zeros((1, dataset.n_outputs)), n_latent,
                        fixed_noise)
    theta = lik.pack(np.full((n_latent, len(dataset.input_names)), length_scale), mixing, None)
    return GPSurrogate(dataset, theta, n_latent, fixed_noise=fixed_noise)


def test_interpolates_noise_free_data():
    ds = line_dataset()
    gp = fixed_gp(ds, 0.3, [[1.0]], fixed_noise=1e-10)
    np.testing.assert_allclose(gp.predict_mean(ds.inputs), ds.outputs, atol=1e-4)
    _, covs = gp.predict_batch(ds.inputs)
    assert np.all(covs[:, 0, 0] < 1e-6 * gp.output_scaler.scale_[0] ** 2)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    U, Y = rng.random((8, 2)), rng.normal(size=(8, 2))
    lik = LmcLikelihood(U, Y, n_latent=2)
    theta = lik.pack(rng.uniform(0.3, 0.8, (2, 2)), rng.normal(size=(2, 2)), np.full(2, 0.1))
    _, grad = lik(theta, eval_gradient=True)
    h = 1e-6
    numeric = np.array([
        (lik(theta + h * e, eval_gradient=False) - lik(theta - h * e, eval_gradient=False)) / (2 * h)
        for e in np.eye(theta.size)
    ])
    np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-6)


def test_pack_unpack_layout():
    lik = LmcLikelihood(np.zeros((3, 2)), np.zeros((3, 3)), n_latent=2)
    assert lik.n_params == 2 * 2 + 3 * 2 + 3
    ls, mixing, noise = lik.unpack(lik.pack(np.full((2, 2), 0.5), np.arange(6.0).reshape(3, 2), np.full(3, 0.01)))
    np.testing.assert_allclose(ls, 0.5)
    np.testing.assert_allclose(mixing, [[0, 1], [2, 3], [4, 5]])
    np.testing.assert_allclose(noise, 0.01)
    assert LmcLikelihood(np.zeros((3, 2)), np.zeros((3, 3)), 2, fixed_noise=1e-6).n_params == 10


def test_training_improves_likelihood(smooth_dataset):
    start = train_gp(smooth_dataset, GPConfig(optimize=False))
    fitted = train_gp(smooth_dataset, GPConfig(n_restarts=2, max_iter=100), workers=2)
    assert fitted.n_latent == smooth_dataset.n_outputs
    assert fitted.log_marginal_likelihood() >= start.log_marginal_likelihood() - 1e-6


def test_prediction_is_invariant_to_row_order(smooth_dataset):
    perm = np.random.default_rng(1).permutation(len(smooth_dataset))
    shuffled = smooth_dataset.subset(perm)
    a = train_gp(smooth_dataset, GPConfig(optimize=False))
    b = train_gp(shuffled, GPConfig(optimize=False))
    X = np.random.default_rng(2).random((10, 2))
    mean_a, cov_a = a.predict_batch(X)
    mean_b, cov_b = b.predict_batch(X)
    np.testing.assert_allclose(mean_a, mean_b, rtol=1e-7, atol=1e-10)
    np.testing.assert_allclose(cov_a, cov_b, rtol=1e-6, atol=1e-10)


def test_predictive_covariance_is_symmetric_psd(smooth_dataset):
    gp = train_gp(smooth_dataset, GPConfig(n_restarts=2, max_iter=100), workers=2)
    X = np.random.default_rng(3).random((25, 2))
    means, covs = gp.predict_batch(X)
    assert means.shape == (25, 2) and covs.shape == (25, 2, 2)
    np.testing.assert_allclose(covs, np.swapaxes(covs, 1, 2))
    scale = np.max(gp.output_scaler.scale_) ** 2
    assert np.all(np.linalg.eigvalsh(covs) >= -1e-9 * scale)
    np.testing.assert_allclose(gp.predict_mean(X), means, rtol=1e-9, atol=1e-12)


def test_mean_tracks_smooth_function(smooth_dataset):
    gp = train_gp(smooth_dataset, GPConfig(n_restarts=2, max_iter=200), workers=2)
    X = np.random.default_rng(4).uniform(0.1, 0.9, (20, 2))
    error = np.abs(gp.predict_mean(X) - smooth_outputs(X))
    assert np.mean(error) < 0.05


def test_far_field_reverts_to_prior(smooth_dataset):
    gp = train_gp(smooth_dataset, GPConfig(optimize=False))
    far = np.array([50.0, 50.0])
    mean, cov = gp.predict(far)
    np.testing.assert_allclose(mean, gp.prior_mean(far)[0], rtol=1e-8)
    np.testing.assert_allclose(cov, gp.prior_covariance(), rtol=1e-8)


def test_noise_only_widens_the_diagonal(smooth_dataset):
    gp = train_gp(smooth_dataset, GPConfig(optimize=False))
    x = np.array([0.3, 0.6])
    _, latent = gp.predict(x)
    _, noisy = gp.predict(x, include_noise=True)
    np.testing.assert_allclose(noisy - latent, np.diag(gp.noise * gp.output_scaler.scale_**2), atol=1e-12)


def test_single_latent_gives_perfect_correlation(smooth_dataset):
    gp = fixed_gp(smooth_dataset, 0.5, [[1.0], [-0.7]])
    for cov in (gp.prior_covariance(), gp.predict(np.array([0.45, 0.55]))[1]):
        corr = cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1])
        assert corr == pytest.approx(-1.0, abs=1e-6)


def test_input_checks(smooth_dataset):
    gp = fixed_gp(smooth_dataset, 0.5, [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(SurrogateError):
        gp.predict_mean(np.ones((2, 3)))
    with pytest.raises(SurrogateError):
        gp.predict(np.ones((2, 2)))
    with pytest.raises(SurrogateError):
        GPSurrogate(smooth_dataset, np.zeros(3), 2, fixed_noise=1e-4)


def test_outside_box_only_warns(smooth_dataset):
    gp = fixed_gp(smooth_dataset, 0.5, [[1.0, 0.0], [0.0, 1.0]])
    messages = []
    logger.add(messages.append, level="WARNING")
    gp.predict(np.array([1.5, 0.5]))
    assert any("outside the design box" in str(m) for m in messages)


def test_add_points_reduces_variance(smooth_dataset):
    cfg = GPConfig(optimize=False)
    gp = train_gp(smooth_dataset, cfg)
    new = np.array([[0.05, 0.95], [0.95, 0.05]])
    before = np.trace(gp.predict_batch(new)[1], axis1=1, axis2=2)
    refit = add_points(gp, new, smooth_outputs(new), cfg)
    after = np.trace(refit.predict_batch(new)[1], axis1=1, axis2=2)
    assert len(refit.dataset) == len(smooth_dataset) + 2
    np.testing.assert_array_equal(refit.theta, gp.theta)
    assert np.all(after < before)


def test_add_points_edge_cases(smooth_dataset):
    gp = train_gp(smooth_dataset, GPConfig(optimize=False))
    assert add_points(gp, np.empty((0, 2)), np.empty((0, 2))) is gp
    with pytest.raises(SurrogateError, match="duplicates a training input"):
        add_points(gp, smooth_dataset.inputs[:1], smooth_dataset.outputs[:1])
    twice = np.array([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(SurrogateError, match="contain a duplicate"):
        add_points(gp, twice, np.ones((2, 2)))


def test_save_and_load(tmp_path, smooth_dataset):
    gp = train_gp(smooth_dataset, GPConfig(optimize=False))
    path = save_surrogate(gp, tmp_path / "gp.json")
    loaded = load_surrogate(path)
    X = np.random.default_rng(5).random((5, 2))
    np.testing.assert_allclose(loaded.predict_batch(X)[0], gp.predict_batch(X)[0], rtol=1e-10)
    assert loaded.content_hash() == gp.content_hash()


def test_load_detects_changed_training_data(tmp_path, smooth_dataset):
    gp = train_gp(smooth_dataset, GPConfig(optimize=False))
    path = save_surrogate(gp, tmp_path / "gp.json")
    data_path = path.with_suffix(".data.csv")
    frame = smooth_dataset.to_frame()
    frame.loc[0, "f"] += 1.0
    frame.to_csv(data_path, index=False)
    with pytest.raises(SurrogateError, match="does not match"):
        load_surrogate(path)


def test_surrogate_kind_dimensions():
    assert {kind: (len(i), len(o), q) for kind, (i, o, q) in SURROGATE_KINDS.items()} == {
        "NSM": (4, 3, 3), "GSM": (5, 3, 3), "JSM": (6, 6, 4),
    }


def test_unknown_surrogate_kind(smooth_dataset):
    with pytest.raises(SurrogateError):
        train_surrogate_kind(smooth_dataset, "XSM")


def test_point_model_mean_on_neutron_outputs(nuclear):
    rng = np.random.default_rng(6)
    box = DesignBox.default(config.NEUTRON_INPUTS)
    X = box.sample(4, rng)
    mean = StructuralMean(config.NEUTRON_INPUTS, config.NEUTRON_OUTPUTS, "point-model", nuclear)
    np.testing.assert_allclose(mean(X), neutron_prior_mean(X, nuclear))

    gamma = StructuralMean(config.GAMMA_INPUTS, config.GAMMA_OUTPUTS, "zero")
    np.testing.assert_array_equal(gamma(np.ones((3, 5))), np.zeros((3, 3)))


def test_structural_mean_errors():
    with pytest.raises(SurrogateError):
        StructuralMean(config.NEUTRON_INPUTS, config.NEUTRON_OUTPUTS, "point-model")
    with pytest.raises(SurrogateError):
        StructuralMean(config.NEUTRON_INPUTS, config.NEUTRON_OUTPUTS, "quadratic")
