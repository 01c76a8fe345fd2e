"""
Experiment
Validated experiment configuration loaded from JSON
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger

import config
from backend.dataset import DesignBox
from backend.design import CsqConfig
from backend.exceptions import ConfigError, FissidError
from backend.inference import AMConfig
from backend.surrogate import GPConfig


@dataclass(frozen=True)
class SimulationConfig:
    """Training-set generation"""

    dataset_size: int = config.DATASET_SIZE
    duration: float = 10.0
    histories: int = config.FULL_HISTORIES
    min_detections: int = 200
    long_window: Optional[float] = None
    test_fraction: float = config.TEST_FRACTION

    def __post_init__(self):
        if self.dataset_size < 2:
            raise ConfigError(["simulation.dataset_size must be >= 2"])
        if self.duration <= 0.0:
            raise ConfigError(["simulation.duration must be > 0"])
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(["simulation.test_fraction must lie in (0, 1)"])


@dataclass(frozen=True)
class MomentsConfig:
    """Sequential binning and plateau extraction"""

    base_window: Optional[float] = None
    n_doublings: int = 12
    plateau_levels: int = config.PLATEAU_LEVELS
    plateau_tolerance: float = config.PLATEAU_TOLERANCE
    low_statistics_windows: int = config.LOW_STATISTICS_WINDOWS

    def __post_init__(self):
        if self.base_window is not None and self.base_window <= 0.0:
            raise ConfigError(["moments.base_window must be > 0"])
        if self.plateau_levels < 1 or self.n_doublings < 2:
            raise ConfigError(["moments needs plateau_levels >= 1 and n_doublings >= 2"])


@dataclass(frozen=True)
class ObservationConfig:
    """Synthetic measured assembly and its replicated observations"""

    truth: Dict[str, float] = field(default_factory=lambda: {
        "k_p": 0.90, "eps_f": 0.01, "s_intensity": 5.0e3, "x_s": 0.6, "m_gamma": 40.0, "eps_gamma": 0.05,
    })
    n_neutron: int = config.N_NEUTRON_OBSERVATIONS
    n_joint: int = config.N_JOINT_OBSERVATIONS
    duration: float = 10.0
    kde_mode: str = "joint"
    order: str = "neutron-first"

    def __post_init__(self):
        problems = []
        missing = [name for name in config.JOINT_INPUTS if name not in self.truth]
        unknown = [name for name in self.truth if name not in config.JOINT_INPUTS]
        if missing:
            problems.append(f"observations.truth lacks {missing}")
        if unknown:
            problems.append(f"observations.truth has unknown inputs {unknown}")
        if self.n_neutron < 2 or self.n_joint < 2:
            problems.append("observations need n_neutron >= 2 and n_joint >= 2")
        if self.kde_mode not in ("joint", "marginal-product"):
            problems.append(f"observations.kde_mode '{self.kde_mode}' is not joint or marginal-product")
        if self.order not in ("neutron-first", "gamma-first"):
            problems.append(f"observations.order '{self.order}' is not neutron-first or gamma-first")
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Full configuration of a run

    Attributes:
        seed: Master seed; every stage seed derives from it
        output_dir: Directory of all artefacts
        nuclear_data: Nuclear data JSON file
        box: Joint design box
        simulation: Training-set generation
        moments: Observation reduction
        surrogate: GP training
        mcmc: Adaptive Metropolis
        csq: Active learning
        observations: Synthetic measured assembly
    """

    seed: int = 0
    output_dir: Path = config.OUTPUT_DIR
    nuclear_data: Path = config.NUCLEAR_DATA_FILE
    box: DesignBox = field(default_factory=DesignBox.default)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    moments: MomentsConfig = field(default_factory=MomentsConfig)
    surrogate: GPConfig = field(default_factory=GPConfig)
    mcmc: AMConfig = field(default_factory=AMConfig)
    csq: CsqConfig = field(default_factory=CsqConfig)
    observations: ObservationConfig = field(default_factory=ObservationConfig)

    def to_dict(self) -> Dict[str, Any]:
        payload = {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}
        payload.update({
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "nuclear_data": str(self.nuclear_data),
            "box": {name: list(bounds) for name, bounds in self.box.to_dict().items()},
        })
        return payload


SECTIONS = {
    "simulation": SimulationConfig,
    "moments": MomentsConfig,
    "surrogate": GPConfig,
    "mcmc": AMConfig,
    "csq": CsqConfig,
    "observations": ObservationConfig,
}
TOP_LEVEL = {"seed", "output_dir", "nuclear_data", "box", *SECTIONS}


def _check_value(section: str, name: str, value: Any, default: Any, problems: List[str]) -> Any:
    where = f"{section}.{name}"
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where} must be a number")
            return value
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list):
            problems.append(f"{where} must be a list")
            return value
        return tuple(value)
    if isinstance(default, str) and not isinstance(value, str):
        problems.append(f"{where} must be a string")
    return value


def _build_section(section: str, cls, raw: Any, problems: List[str]):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        problems.append(f"{section} must be an object")
        return None
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in known:
            problems.append(f"Unknown key '{section}.{key}'")
    values = {
        key: _check_value(section, key, value, getattr(defaults, key), problems)
        for key, value in raw.items() if key in known
    }
    try:
        return cls(**values)
    except ConfigError as e:
        problems.extend(e.problems)
    except (FissidError, TypeError, ValueError) as e:
        problems.append(f"{section}: {e}")
    return None


def _build_box(raw: Any, problems: List[str]) -> Optional[DesignBox]:
    bounds = dict(config.DESIGN_BOX)
    if raw is None:
        return DesignBox.default()
    if not isinstance(raw, dict):
        problems.append("box must be an object")
        return None
    before = len(problems)
    for name, pair in raw.items():
        if name not in config.JOINT_INPUTS:
            problems.append(f"Unknown key 'box.{name}'")
            continue
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(v, (int, float)) for v in pair)):
            problems.append(f"box.{name} must be [lower, upper]")
            continue
        if not pair[0] < pair[1]:
            problems.append(f"box.{name} bounds out of order: {pair[0]} >= {pair[1]}")
            continue
        bounds[name] = (float(pair[0]), float(pair[1]))
    if len(problems) > before:
        return None
    return DesignBox.from_dict(bounds, config.JOINT_INPUTS)


def config_from_dict(raw: Dict[str, Any], path: Optional[str] = None) -> ExperimentConfig:
    """Validate a configuration mapping, collecting every problem before raising"""
    problems: List[str] = []
    for key in raw:
        if key not in TOP_LEVEL:
            problems.append(f"Unknown key '{key}'")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        problems.append("seed must be a non-negative integer")

    nuclear_data = Path(raw.get("nuclear_data", config.NUCLEAR_DATA_FILE))
    if path is not None and not nuclear_data.is_absolute():
        nuclear_data = Path(path).parent / nuclear_data
    if not nuclear_data.exists():
        problems.append(f"nuclear_data file not found: {nuclear_data}")

    box = _build_box(raw.get("box"), problems)
    sections = {name: _build_section(name, cls, raw.get(name), problems) for name, cls in SECTIONS.items()}

    if box is not None and sections["observations"] is not None:
        truth = sections["observations"].truth
        outside = [name for name in box.names if name in truth and not
                   box.lower[box.names.index(name)] <= truth[name] <= box.upper[box.names.index(name)]]
        if outside:
            problems.append(f"observations.truth outside the box for {outside}")

    if problems:
        raise ConfigError(problems, path)
    return ExperimentConfig(
        seed=seed,
        output_dir=Path(raw.get("output_dir", config.OUTPUT_DIR)),
        nuclear_data=nuclear_data,
        box=box,
        **sections,
    )


def load_config(path: Optional[Path] = None) -> ExperimentConfig:
    """
    Load and validate an experiment configuration

    Args:
        path: JSON file; None gives the defaults

    Returns:
        ExperimentConfig with defaults filled for absent keys
    """
    if path is None:
        return config_from_dict({})
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError([f"Cannot parse configuration: {e}"], str(path)) from e
    if not isinstance(raw, dict):
        raise ConfigError(["Configuration must be a JSON object"], str(path))
    experiment = config_from_dict(raw, str(path))
    logger.info(f"Configuration loaded from {path} (seed {experiment.seed})")
    return experiment
