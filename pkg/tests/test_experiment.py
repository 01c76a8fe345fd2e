import json

import pytest

import config
from backend.exceptions import ConfigError
from backend.experiment import config_from_dict, load_config


def test_defaults():
    experiment = load_config()
    assert experiment.seed == 0
    assert experiment.simulation.dataset_size == config.DATASET_SIZE
    assert experiment.csq.h == config.CSQ_SLACK
    assert experiment.box.names == tuple(config.JOINT_INPUTS)
    assert experiment.observations.n_neutron == config.N_NEUTRON_OBSERVATIONS
    assert set(experiment.to_dict()) >= {"seed", "box", "simulation", "surrogate", "mcmc", "csq"}


def test_overrides_are_applied():
    experiment = config_from_dict({
        "seed": 7,
        "simulation": {"dataset_size": 20, "duration": 2},
        "mcmc": {"n_steps": 1000},
        "box": {"k_p": [0.85, 0.95]},
    })
    assert experiment.seed == 7
    assert experiment.simulation.duration == 2.0
    assert isinstance(experiment.simulation.duration, float)
    assert experiment.mcmc.n_steps == 1000
    assert experiment.box.lower[0] == 0.85
    assert experiment.box.upper[1] == config.DESIGN_BOX["eps_f"][1]


def test_unknown_keys_reported():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"csq": {"hh": 3.0}, "extra": 1})
    assert "Unknown key 'csq.hh'" in info.value.problems
    assert "Unknown key 'extra'" in info.value.problems


def test_bounds_out_of_order():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"box": {"k_p": [0.95, 0.80]}})
    assert any("box.k_p bounds out of order" in p for p in info.value.problems)


def test_truth_outside_box():
    with pytest.raises(ConfigError, match="outside the box"):
        config_from_dict({"box": {"k_p": [0.80, 0.85]}})


def test_every_problem_is_collected():
    raw = {"seed": -1, "mcmc": {"n_steps": "many"}, "simulation": {"duration": -1.0}}
    with pytest.raises(ConfigError) as info:
        config_from_dict(raw)
    problems = info.value.problems
    assert "seed must be a non-negative integer" in problems
    assert "mcmc.n_steps must be an integer" in problems
    assert "simulation.duration must be > 0" in problems


def test_section_validation_errors_surface():
    with pytest.raises(ConfigError, match="cooling"):
        config_from_dict({"csq": {"cooling": 2.0}})
    with pytest.raises(ConfigError, match="kde_mode"):
        config_from_dict({"observations": {"kde_mode": "histogram"}})


def test_load_from_file(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({"seed": 3, "output_dir": str(tmp_path / "run")}))
    experiment = load_config(path)
    assert experiment.seed == 3
    assert experiment.output_dir == tmp_path / "run"


def test_unparseable_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{seed: 3")
    with pytest.raises(ConfigError, match="Cannot parse"):
        load_config(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(path)


def test_missing_nuclear_data_file(tmp_path):
    with pytest.raises(ConfigError, match="nuclear_data file not found"):
        config_from_dict({"nuclear_data": str(tmp_path / "absent.json")})
