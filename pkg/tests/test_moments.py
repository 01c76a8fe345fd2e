import numpy as np
import pytest

from backend.exceptions import EstimationError
from backend.moments import (FeynmanCurve, ObservationVector, empirical_covariance, extract_asymptote,
                             feynman_from_counts, observation_from_timelist, observations_from_timelists,
                             sequential_binning, triggered_binning)
from backend.pointmodel import asymptotics, gamma_multiplication
from backend.simulator import MaterialInput, TimeList, simulate_timelist


def neutron_list(times, duration, histories=None):
    times = np.asarray(times, dtype=float)
    histories = np.arange(times.size) if histories is None else histories
    return TimeList(duration, times, np.zeros(times.size), histories)


def curve_from(y, x=None, low=None):
    y = np.asarray(y, dtype=float)
    return FeynmanCurve(
        base_window=1.0,
        kind="neutron",
        rate=1.0,
        gates=2.0 ** np.arange(y.size),
        y=y,
        x=np.ones_like(y) if x is None else np.asarray(x, dtype=float),
        windows=np.full(y.size, 1000),
        low_statistics=np.zeros(y.size, dtype=bool) if low is None else np.asarray(low),
    )


def test_sequential_binning_hand_case():
    # windows of 1 s hold counts [0, 2, 1, 1]
    t = neutron_list([1.2, 1.5, 2.5, 3.5], duration=4.0)
    curve = sequential_binning(t, "neutron", 1.0, 1)
    np.testing.assert_array_equal(curve.windows, [4, 2])
    np.testing.assert_allclose(curve.y, [-0.5, -1.0])
    np.testing.assert_allclose(curve.x, [0.5, 2.0])
    assert curve.rate == pytest.approx(1.0)


@pytest.mark.parametrize("counts, expected", [([0, 2], (0.0, -1.0)), ([3, 3, 3], (-1.0, 2.0))])
def test_feynman_from_counts(counts, expected):
    assert feynman_from_counts(counts) == pytest.approx(expected)


def test_zero_mean_counts_are_undefined():
    y, x = feynman_from_counts([0, 0, 0])
    assert np.isnan(y) and np.isnan(x)


def test_events_past_last_full_window_are_dropped():
    t = neutron_list([4.2], duration=4.5)
    curve = sequential_binning(t, "neutron", 1.0, 0)
    assert curve.windows[0] == 4
    assert not curve.defined[0]


def test_odd_window_dropped_when_merging():
    t = neutron_list([0.5, 1.5, 2.5], duration=3.0)
    curve = sequential_binning(t, "neutron", 1.0, 1)
    np.testing.assert_array_equal(curve.windows, [3, 1])
    # the single merged window holds 2 counts
    assert curve.y[1] == pytest.approx(-1.0)


def test_merged_level_equals_wider_base_window():
    rng = np.random.default_rng(2)
    t = neutron_list(np.sort(rng.uniform(0.0, 8.0, 3000)), duration=8.0)
    fine = sequential_binning(t, "neutron", 0.125, 3)
    coarse = sequential_binning(t, "neutron", 0.25, 2)
    np.testing.assert_allclose(fine.y[1:], coarse.y, rtol=1e-12)
    np.testing.assert_allclose(fine.x[1:], coarse.x, rtol=1e-12)


def test_uncorrelated_events_give_flat_zero_curve():
    rng = np.random.default_rng(4)
    t = neutron_list(np.sort(rng.uniform(0.0, 100.0, 200_000)), duration=100.0)
    curve = sequential_binning(t, "neutron", 1e-3, 4)
    assert np.all(np.abs(curve.y) < 0.08)


def test_no_complete_window_raises():
    t = neutron_list([0.1, 0.2], duration=1.0)
    with pytest.raises(EstimationError):
        sequential_binning(t, "neutron", 2.0, 0)
    with pytest.raises(EstimationError):
        sequential_binning(t, "neutron", 0.25, 3)


def test_invalid_binning_arguments():
    t = neutron_list([0.1], duration=1.0)
    with pytest.raises(EstimationError):
        sequential_binning(t, "neutron", 0.0, 1)
    with pytest.raises(EstimationError):
        sequential_binning(t, "gamma", 0.1, 1)


def test_low_statistics_levels_flagged():
    t = neutron_list(np.linspace(0.01, 0.99, 50), duration=1.0)
    curve = sequential_binning(t, "neutron", 1.0 / 64, 6, low_statistics_windows=30)
    np.testing.assert_array_equal(curve.low_statistics, curve.windows < 30)
    assert curve.low_statistics[-1] and not curve.low_statistics[0]


def test_triggered_binning_single_history():
    t = neutron_list([0.1, 0.2, 0.3], duration=1.0, histories=[5, 5, 5])
    y, x, n_det = triggered_binning(t, "neutron", 1.0)
    assert (y, x, n_det) == (pytest.approx(2.0), pytest.approx(2.0), 3)


def test_triggered_binning_respects_window_and_history():
    t = neutron_list([0.1, 0.2, 0.3], duration=1.0)
    y, x, _ = triggered_binning(t, "neutron", 1.0)
    assert y == 0.0 and x == 0.0

    same = neutron_list([0.1, 0.5], duration=1.0, histories=[0, 0])
    assert triggered_binning(same, "neutron", 0.3)[0] == 0.0
    assert triggered_binning(same, "neutron", 0.45)[0] == pytest.approx(1.0)


def test_triggered_binning_needs_detections():
    t = neutron_list([0.1], duration=1.0)
    with pytest.raises(EstimationError):
        triggered_binning(t, "gamma", 1.0)
    with pytest.raises(EstimationError):
        triggered_binning(t, "neutron", 0.0)


def test_plateau_detected():
    y_inf, x_inf, converged = extract_asymptote(curve_from([0.70, 0.71, 0.712, 0.711]), 3, 0.02)
    assert converged
    assert y_inf == pytest.approx(0.711)
    assert x_inf == pytest.approx(1.0)


def test_plateau_skips_noisy_tail():
    curve = curve_from([0.5, 0.7, 0.7, 0.7, 0.5], low=[False, False, False, False, True])
    y_inf, _, converged = extract_asymptote(curve, 3, 0.01)
    assert converged
    assert y_inf == pytest.approx(0.7)


def test_growing_curve_not_converged():
    y_inf, _, converged = extract_asymptote(curve_from([0.1, 0.2, 0.4, 0.8]), 3, 0.05)
    assert not converged
    assert y_inf == pytest.approx((0.2 + 0.4 + 0.8) / 3)


def test_plateau_errors():
    with pytest.raises(EstimationError):
        extract_asymptote(curve_from([0.7, 0.7, 0.7], low=[True, True, True]))
    with pytest.raises(EstimationError):
        extract_asymptote(curve_from([0.7, 0.7]))


def test_empirical_covariance():
    same = [np.array([1.0, 2.0, 3.0])] * 4
    np.testing.assert_array_equal(empirical_covariance(same), np.zeros((3, 3)))
    np.testing.assert_allclose(empirical_covariance([[0.0], [2.0]]), [[2.0]])

    rng = np.random.default_rng(0)
    cov = empirical_covariance(rng.normal(size=(20, 3)))
    np.testing.assert_allclose(cov, cov.T)


def test_empirical_covariance_needs_two_rows():
    with pytest.raises(EstimationError):
        empirical_covariance([[1.0, 2.0, 3.0]])
    with pytest.raises(EstimationError):
        empirical_covariance([[1.0, 2.0], [1.0, 2.0, 3.0]])


def test_observation_vector_validation():
    n = ObservationVector([100.0, 0.5, 1.0], "neutron")
    g = ObservationVector([400.0, 2.0, 9.0], "gamma", converged=False)
    joint = ObservationVector.joint(n, g)
    assert joint.values.shape == (6,)
    assert not joint.converged
    with pytest.raises(EstimationError):
        ObservationVector([100.0, 0.5], "neutron")
    with pytest.raises(EstimationError):
        ObservationVector([0.0, 0.5, 1.0], "neutron")
    with pytest.raises(EstimationError):
        ObservationVector([100.0, np.nan, 1.0], "gamma")


def test_observation_method_checks():
    t = neutron_list(np.linspace(0.01, 0.99, 100), duration=1.0)
    with pytest.raises(EstimationError):
        observation_from_timelist(t, "neutron", method="sequential")
    with pytest.raises(EstimationError):
        observation_from_timelist(t, "neutron", method="triggered")
    with pytest.raises(EstimationError):
        observation_from_timelist(t, "neutron", method="bogus", base_window=0.01)


def test_simulated_moments_match_point_model(nuclear):
    x = MaterialInput(k_p=0.85, eps_f=0.05, s_intensity=5e3, x_s=0.5, m_gamma=40.0, eps_gamma=0.05)
    y_inf, _ = asymptotics(x.point_params(nuclear))
    estimates = [
        observation_from_timelist(simulate_timelist(x, nuclear, duration=4.0, seed=seed, workers=2), "neutron",
                                  method="triggered", long_window=20.0 / nuclear.alpha).values[1]
        for seed in range(21, 29)
    ]
    standard_error = np.std(estimates, ddof=1) / np.sqrt(len(estimates))
    assert abs(np.mean(estimates) - y_inf) < 4.0 * standard_error


def test_observations_from_timelists_joint():
    rng = np.random.default_rng(6)

    def recording(seed):
        r = np.random.default_rng(seed)
        times = np.sort(r.uniform(0.0, 1.0, 4000))
        kinds = r.integers(0, 2, times.size)
        return TimeList(1.0, times, kinds, np.arange(times.size))

    lists = [recording(s) for s in rng.integers(0, 1000, 3)]
    obs = observations_from_timelists(lists, "joint", workers=2, method="sequential", base_window=1e-3,
                                      n_doublings=4)
    assert len(obs) == 3
    assert all(o.kind == "joint" and o.values.shape == (6,) for o in obs)


def test_poisson_feynman_curve_within_statistical_band():
    # mean count 20 per base window keeps Var(Y) close to 2/W
    exceed, worst = 0, 0.0
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        t = neutron_list(np.sort(rng.uniform(0.0, 4.0, rng.poisson(80_000))), duration=4.0)
        curve = sequential_binning(t, "neutron", 1e-3, 6)
        z = np.abs(curve.y) / np.sqrt(2.0 / curve.windows)
        exceed += int(np.count_nonzero(z >= 3.0))
        worst = max(worst, float(z.max()))
    assert exceed <= 3
    assert worst < 4.5


def test_triggered_estimates_ignore_history_placement(nuclear):
    m_gamma = 1.1 * float(gamma_multiplication(0.9, 0.02, 0.5, 0.0, nuclear))
    x = MaterialInput(k_p=0.9, eps_f=0.02, s_intensity=5e3, x_s=0.5, m_gamma=m_gamma, eps_gamma=0.05)
    t = simulate_timelist(x, nuclear, duration=2.0, seed=31, workers=2)
    offsets = np.random.default_rng(5).uniform(0.0, t.duration, t.n_histories)
    shifted = t.times + offsets[t.histories]
    order = np.argsort(shifted, kind="stable")
    shuffled = TimeList(2.0 * t.duration, shifted[order], t.kinds[order], t.histories[order], t.n_histories)
    window = 20.0 / nuclear.alpha
    for kind in ("neutron", "gamma"):
        assert triggered_binning(shuffled, kind, window) == triggered_binning(t, kind, window)


@pytest.mark.slow
@pytest.mark.parametrize("k_p, eps_f, x_s", [(0.7, 0.02, 0.5), (0.8, 0.01, 0.2), (0.85, 0.02, 0.8),
                                             (0.9, 0.015, 0.5), (0.95, 0.01, 0.3)])
def test_sequential_and_triggered_asymptotes_agree(nuclear, k_p, eps_f, x_s):
    m_gamma = 1.1 * float(gamma_multiplication(k_p, eps_f, x_s, 0.0, nuclear))
    x = MaterialInput(k_p=k_p, eps_f=eps_f, s_intensity=1e4, x_s=x_s, m_gamma=m_gamma, eps_gamma=0.05)
    sequential, triggered = [], []
    for seed in range(6):
        t = simulate_timelist(x, nuclear, duration=10.0, seed=200 + seed, workers=4)
        sequential.append(observation_from_timelist(t, "neutron", base_window=0.1 / nuclear.alpha,
                                                    n_doublings=12).values[1])
        triggered.append(observation_from_timelist(t, "neutron", method="triggered",
                                                   long_window=20.0 / nuclear.alpha).values[1])
    combined = np.sqrt((np.var(sequential, ddof=1) + np.var(triggered, ddof=1)) / len(sequential))
    assert abs(np.mean(sequential) - np.mean(triggered)) < 4.0 * combined
