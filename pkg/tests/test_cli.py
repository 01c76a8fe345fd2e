import json
from types import SimpleNamespace

import numpy as np
import pytest

import app
from app import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, run_subcommand
from backend.design import CsqAudit
from backend.exceptions import FissidError, SimulationError
from backend.experiment import load_config
from backend.inference import PosteriorSamples
from backend.storage import read_json, read_timelist, verify_manifest, write_posterior
from config import DESIGN_BOX, JOINT_INPUTS


@pytest.fixture
def experiment_file(isolated_config):
    path = isolated_config / "experiment.json"
    path.write_text(json.dumps({
        "seed": 1,
        "output_dir": str(isolated_config / "run"),
        "observations": {"duration": 0.5},
    }))
    return path


def test_missing_subcommand_is_a_usage_error(isolated_config):
    assert run_subcommand([]) == EXIT_USAGE
    assert run_subcommand(["invert", "--mode", "sideways"]) == EXIT_USAGE


def test_help_exits_cleanly(isolated_config):
    assert run_subcommand(["--help"]) == EXIT_OK


def test_invalid_configuration(isolated_config):
    path = isolated_config / "bad.json"
    path.write_text(json.dumps({"csq": {"hh": 1}}))
    assert run_subcommand(["--config", str(path), "simulate"]) == EXIT_USAGE


def test_missing_upstream_artifact(experiment_file):
    assert run_subcommand(["--config", str(experiment_file), "invert", "--mode", "neutron"]) == EXIT_FAILURE
    assert run_subcommand(["--config", str(experiment_file), "report"]) == EXIT_FAILURE
    assert run_subcommand(["--config", str(experiment_file), "moments"]) == EXIT_FAILURE


def test_simulate_writes_manifest(experiment_file, isolated_config):
    assert run_subcommand(["--config", str(experiment_file), "simulate"]) == EXIT_OK
    run = isolated_config / "run"
    timelist = read_timelist(run / "simulate" / "timelist.tsv")
    assert timelist.duration == 0.5
    assert len(timelist) > 0
    manifest = read_json(run / "manifest.json")
    assert manifest["master_seed"] == 1
    assert "simulate/timelist.tsv" in manifest["stages"]["simulate"]["artifacts"]
    assert verify_manifest(run) == []


def test_output_dir_override(experiment_file, isolated_config):
    other = isolated_config / "other"
    args = ["--config", str(experiment_file), "--output-dir", str(other), "simulate", "--duration", "0.2"]
    assert run_subcommand(args) == EXIT_OK
    assert read_timelist(other / "simulate" / "timelist.tsv").duration == 0.2


def test_updated_surrogate_only_for_joint_mode(experiment_file):
    args = ["--config", str(experiment_file), "invert", "--mode", "neutron", "--surrogate", "updated"]
    assert run_subcommand(args) == EXIT_USAGE
    args = ["--config", str(experiment_file), "invert", "--mode", "joint", "--surrogate", "updated"]
    assert run_subcommand(args) == EXIT_FAILURE


def _posterior(chain):
    return PosteriorSamples(names=tuple(JOINT_INPUTS), chain=chain, log_posterior=np.zeros(len(chain)),
                            acceptance_rate=0.3, map_point=chain[0], map_log_posterior=0.0,
                            provenance={"seed": 1})


def test_report_compares_joint_posteriors_before_and_after_csq(experiment_file, isolated_config):
    lower = np.array([DESIGN_BOX[name][0] for name in JOINT_INPUTS])
    upper = np.array([DESIGN_BOX[name][1] for name in JOINT_INPUTS])
    chain = lower + (upper - lower) * (0.25 + 0.5 * np.random.default_rng(0).random((400, 6)))
    narrowed = chain.copy()
    centre = 0.5 * (lower[0] + upper[0])
    narrowed[:, 0] = centre + 0.5 * (chain[:, 0] - centre)
    invert_dir = isolated_config / "run" / "invert"
    write_posterior(_posterior(chain), invert_dir / "posterior_joint.csv")
    write_posterior(_posterior(narrowed), invert_dir / "posterior_joint_updated.csv")

    assert run_subcommand(["--config", str(experiment_file), "report"]) == EXIT_OK
    report = read_json(isolated_config / "run" / "report" / "report.json")
    assert set(report["csq_std_ratios"]) == set(JOINT_INPUTS)
    assert report["csq_std_ratios"]["k_p"] == pytest.approx(0.5)
    assert report["csq_std_ratios"]["x_s"] == pytest.approx(1.0)
    assert (isolated_config / "run" / "report" / "summary_joint_updated.csv").exists()


def test_aborted_csq_reports_points_actually_added(experiment_file, monkeypatch):
    def fake_surrogate(n):
        return SimpleNamespace(dataset=[None] * n)

    def fake_loop(gp, *args, **kwargs):
        audit = CsqAudit()
        audit.log({"iteration": 0})
        audit.log({"iteration": 1})
        audit.abort("simulate", SimulationError("M_gamma below the floor"))
        return fake_surrogate(len(gp.dataset) + 2), audit

    def fake_save(gp, path):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("{}")
        path.with_suffix(".data.csv").write_text("")
        return path

    monkeypatch.setattr(app.Pipeline, "_surrogate", lambda self, kind: fake_surrogate(10))
    monkeypatch.setattr(app.Pipeline, "_dataset", lambda self, name: SimpleNamespace(
        select=lambda inputs, outputs: SimpleNamespace(inputs=np.zeros((3, 6)))))
    monkeypatch.setattr(app.Pipeline, "_observations", lambda self, kind: None)
    monkeypatch.setattr(app, "csq_loop", fake_loop)
    monkeypatch.setattr(app, "validate_surrogate", lambda gp, test: SimpleNamespace(
        mcd=1.0, to_dict=lambda: {"metrics": {}}))
    monkeypatch.setattr(app, "save_surrogate", fake_save)

    pipeline = app.Pipeline(load_config(experiment_file))
    with pytest.raises(FissidError) as error:
        pipeline.csq(5)
    assert error.value.context["added"] == 2
    assert read_json(pipeline.path("csq", "summary.json"))["points_added"] == 2
