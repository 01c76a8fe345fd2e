import numpy as np
import pytest

import config
from backend.exceptions import ParameterError, SimulationError
from backend.moments import triggered_binning
from backend.pointmodel import asymptotics, count_rate, gamma_multiplication
from backend.simulator import (FacilityParams, MaterialInput, TimeList, chain_plan, facility_latent,
                               facility_to_inputs, generate_dataset, observe_replicates, simulate_timelist)


@pytest.fixture
def material():
    return MaterialInput(k_p=0.85, eps_f=0.02, s_intensity=5e3, x_s=0.5, m_gamma=40.0, eps_gamma=0.05)


@pytest.fixture
def timelist(material, nuclear):
    return simulate_timelist(material, nuclear, duration=4.0, seed=7, workers=2)


def test_timelist_invariants(timelist):
    assert len(timelist) > 0
    assert np.all(np.diff(timelist.times) >= 0.0)
    assert timelist.times[0] >= 0.0 and timelist.times[-1] <= timelist.duration
    assert timelist.histories.max() < timelist.n_histories
    assert set(np.unique(timelist.kinds)) == {0, 1}


def test_same_seed_is_bit_identical(material, nuclear, timelist):
    again = simulate_timelist(material, nuclear, duration=4.0, seed=7, workers=1)
    np.testing.assert_array_equal(again.times, timelist.times)
    np.testing.assert_array_equal(again.kinds, timelist.kinds)
    np.testing.assert_array_equal(again.histories, timelist.histories)
    assert again.config_hash == timelist.config_hash


def test_other_seed_differs(material, nuclear, timelist):
    other = simulate_timelist(material, nuclear, duration=4.0, seed=8, workers=2)
    assert len(other) != len(timelist) or not np.array_equal(other.times, timelist.times)


def test_count_rate_matches_point_model(material, nuclear, timelist):
    params = material.point_params(nuclear)
    expected = count_rate(params)
    y_inf, _ = asymptotics(params)
    # counts are overdispersed by (1 + Y), so the standard error widens accordingly
    standard_error = np.sqrt(expected * timelist.duration * (1.0 + y_inf)) / timelist.duration
    assert abs(timelist.count_rate("neutron") - expected) < 4.0 * standard_error


def test_tallied_gamma_efficiency(material, nuclear):
    t = simulate_timelist(material, nuclear, duration=10.0, seed=3, workers=2)
    assert t.tallied_eps_gamma() == pytest.approx(material.eps_gamma, rel=0.05)
    assert t.tallied_m_gamma() == pytest.approx(material.m_gamma, rel=0.05)


def test_weak_multiplication_is_nearly_poisson(nuclear):
    x = MaterialInput(k_p=0.01, eps_f=10.0, s_intensity=5e3, x_s=0.0, m_gamma=1.0, eps_gamma=0.001)
    t = simulate_timelist(x, nuclear, duration=2.0, seed=1, workers=1)
    y_hat, _, n_det = triggered_binning(t, "neutron", 20.0 / nuclear.alpha)
    assert n_det > 100
    assert abs(y_hat) < 0.05


def test_gamma_floor_violation_rejected(nuclear):
    x = MaterialInput(k_p=0.95, eps_f=0.01, s_intensity=5e3, x_s=0.5, m_gamma=10.0, eps_gamma=0.05)
    with pytest.raises(SimulationError, match="floor"):
        chain_plan(x, nuclear, 1.0)


def test_zero_expected_source_events_rejected(material, nuclear):
    with pytest.raises(SimulationError):
        simulate_timelist(material, nuclear, duration=1e-5, seed=0)


def test_scalar_only_data_cannot_simulate(material, scalar_data):
    with pytest.raises(SimulationError, match="PMF"):
        simulate_timelist(material, scalar_data, duration=1.0, seed=0)


def test_timelist_rejects_unsorted_times():
    with pytest.raises(SimulationError):
        TimeList(1.0, [0.5, 0.2], [0, 0], [0, 1])


def test_material_input_validation():
    with pytest.raises(ParameterError):
        MaterialInput(1.0, 0.01, 5e3, 0.5, 40.0, 0.05)
    with pytest.raises(ParameterError):
        MaterialInput.from_array([0.9, 0.01, 5e3])


def test_material_projections(material):
    np.testing.assert_array_equal(material.neutron, [0.85, 0.02, 5e3, 0.5])
    np.testing.assert_array_equal(material.gamma, [0.85, 5e3, 0.5, 40.0, 0.05])


def test_facility_passes_source_through(nuclear):
    f = FacilityParams((0.3, 0.6, 0.25, 0.7, 0.4, 0.5))
    x = facility_to_inputs(f, 10_000, seed=2, data=nuclear)
    latent = facility_latent(f, nuclear)
    assert x.s_intensity == latent.s_intensity == pytest.approx(1e3 + 9e3 * 0.25)
    assert x.x_s == latent.x_s == 0.7


def test_facility_converges_with_histories(nuclear):
    f = FacilityParams((0.5,) * 6)
    latent = facility_latent(f, nuclear)
    x = facility_to_inputs(f, 1_000_000, seed=4, data=nuclear)
    assert abs(x.k_p - latent.k_p) < 1e-3


def test_facility_noise_scales_with_histories(nuclear):
    f = FacilityParams((0.5,) * 6)
    coarse = [facility_to_inputs(f, 10_000, seed=s, data=nuclear).k_p for s in range(100)]
    fine = [facility_to_inputs(f, 100_000, seed=1000 + s, data=nuclear).k_p for s in range(100)]
    ratio = np.std(coarse) / np.std(fine)
    assert 2.3 < ratio < 4.3


def test_detector_knob_increases_efficiency(nuclear):
    knobs = np.full(6, 0.5)
    values = []
    for level in (0.1, 0.4, 0.7, 1.0):
        knobs[1] = level
        values.append(facility_latent(FacilityParams.from_array(knobs), nuclear).eps_f)
    assert np.all(np.diff(values) > 0.0)


def test_latent_map_stays_in_design_box(nuclear):
    rng = np.random.default_rng(0)
    for knobs in rng.random((200, 6)):
        x = facility_latent(FacilityParams.from_array(knobs), nuclear)
        for name, value in x.to_dict().items():
            lo, hi = config.DESIGN_BOX[name]
            if name != "m_gamma":
                assert lo <= value <= hi


@pytest.mark.parametrize("knobs", [(1.2, 0, 0, 0, 0, 0), (-0.1, 0, 0, 0, 0, 0), (0.5,) * 5])
def test_facility_knobs_validated(knobs):
    with pytest.raises(ParameterError):
        FacilityParams(knobs)


def test_facility_histories_lower_bound(nuclear):
    with pytest.raises(ParameterError):
        facility_to_inputs(FacilityParams((0.5,) * 6), 50, seed=0, data=nuclear)


def test_facility_tallies_are_unbiased_at_the_box_edge(nuclear):
    f = FacilityParams((1.0, 0.5, 0.5, 0.5, 0.0, 0.5))
    latent = facility_latent(f, nuclear)
    assert latent.k_p == pytest.approx(config.DESIGN_BOX["k_p"][1])
    tallies = [facility_to_inputs(f, 1000, seed=s, data=nuclear) for s in range(400)]
    k_p = np.array([x.k_p for x in tallies])
    assert abs(k_p.mean() - latent.k_p) < 0.0015
    assert 0.4 < np.mean(k_p > latent.k_p) < 0.6
    outside = next(x for x in tallies if x.k_p > config.DESIGN_BOX["k_p"][1])
    with pytest.raises(ParameterError, match="k_p"):
        outside.check_box(config.DESIGN_BOX)


def test_generate_small_dataset(nuclear):
    ds = generate_dataset(config.DESIGN_BOX, n=4, duration=0.5, histories=100_000, seed=5, data=nuclear,
                          min_detections=5, workers=2)
    assert len(ds) == 4
    assert ds.input_names == tuple(config.JOINT_INPUTS)
    assert ds.output_names == tuple(config.JOINT_OUTPUTS)
    rates = ds.outputs[:, [0, 3]]
    assert np.all(rates > 0.0)
    assert set(ds.provenance.columns) == {"seed", "histories"}
    assert np.all(ds.box.contains(ds.inputs))


def test_dataset_needs_two_instances(nuclear):
    with pytest.raises(ParameterError):
        generate_dataset(config.DESIGN_BOX, n=1, duration=0.5, histories=1000, seed=0, data=nuclear)


def test_observe_replicates_shape(material, nuclear):
    values = observe_replicates(material, 3, nuclear, duration=2.0, seed=9, kind="joint", n_doublings=10,
                                workers=1)
    assert values.shape == (3, 6)
    assert np.all(values[:, [0, 3]] > 0.0)


@pytest.mark.slow
@pytest.mark.parametrize("k_p", [0.7, 0.8, 0.85, 0.9, 0.95])
def test_long_run_matches_closed_forms(nuclear, k_p):
    m_gamma = 1.1 * float(gamma_multiplication(k_p, 0.01, 0.5, 0.0, nuclear))
    x = MaterialInput(k_p=k_p, eps_f=0.01, s_intensity=1e4, x_s=0.5, m_gamma=m_gamma, eps_gamma=0.05)
    t = simulate_timelist(x, nuclear, duration=100.0, seed=17, workers=4)
    params = x.point_params(nuclear)
    y_inf, x_inf = asymptotics(params)
    rate = count_rate(params)
    standard_error = np.sqrt(rate * t.duration * (1.0 + y_inf)) / t.duration
    assert abs(t.count_rate("neutron") - rate) < 3.0 * standard_error
    y_hat, x_hat, _ = triggered_binning(t, "neutron", 20.0 / nuclear.alpha)
    assert y_hat == pytest.approx(y_inf, rel=0.10)
    assert x_hat == pytest.approx(x_inf, rel=0.25)
