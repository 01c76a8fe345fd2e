import pytest
from loguru import logger

from backend.exceptions import SimulationError
from utils.logger_setup import log_error, log_function_call, log_stage, setup_logging, timed


@pytest.fixture
def records():
    messages = []
    logger.add(lambda message: messages.append(message.record), level="DEBUG")
    return messages


def test_sinks_route_records(tmp_path):
    handlers = setup_logging("warning", logs_dir=tmp_path)
    assert len(handlers) == 4
    log_stage("simulate", seed=3)
    logger.info("Generated dataset with 10 instances")
    logger.error("Cache write failed")
    logger.remove()

    pipeline = (tmp_path / "pipeline.log").read_text()
    assert "Stage simulate | seed=3" in pipeline
    assert "Generated dataset" not in pipeline
    errors = (tmp_path / "errors.log").read_text()
    assert "Cache write failed" in errors
    assert "Stage simulate" not in errors
    main = (tmp_path / "fissid.log").read_text()
    assert "Generated dataset" in main
    assert "Stage simulate" in main


def test_setup_twice_does_not_duplicate(tmp_path):
    setup_logging(logs_dir=tmp_path)
    setup_logging(logs_dir=tmp_path)
    log_stage("report")
    logger.remove()
    assert (tmp_path / "pipeline.log").read_text().count("Stage report") == 1


def test_log_error_merges_context(records):
    log_error(SimulationError("M_gamma below the floor", {"floor": 12.0, "stage": "dataset"}), {"stage": "csq"})
    messages = [r["message"] for r in records]
    assert messages[0] == "SimulationError: M_gamma below the floor (floor=12.0, stage=dataset)"
    assert messages[1] == "Context: floor=12.0 | stage=csq"


def test_log_function_call(records):
    @log_function_call
    def square(x):
        return x * x

    @log_function_call
    def broken():
        raise ValueError("bad input")

    assert square(3) == 9
    with pytest.raises(ValueError):
        broken()
    levels = [(r["level"].name, r["message"].split()[0]) for r in records]
    assert levels[0] == ("DEBUG", "Calling")
    assert any(level == "ERROR" for level, _ in levels)


def test_timed_logs_even_on_failure(records):
    with pytest.raises(RuntimeError):
        with timed("dataset generation", n=5):
            raise RuntimeError("stop")
    assert records[-1]["message"].startswith("Performance: dataset generation took")
    assert records[-1]["message"].endswith("| n=5")
