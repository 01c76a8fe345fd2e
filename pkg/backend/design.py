"""
Design
Constraint Set Query acquisition, Sobol weighting and facility input matching for active learning
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Protocol, Tuple

import numpy as np
from loguru import logger
from scipy.stats import sobol_indices, uniform

import config
from backend.dataset import DesignBox
from backend.exceptions import DesignError, FissidError
from backend.inference import (AMConfig, ObservationSet, PriorSpec, posterior_target, sample_posterior)
from backend.nuclear_data import NuclearData
from backend.simulator import (KNOB_NAMES, FacilityParams, MaterialInput, facility_to_inputs, simulate_timelist)
from backend.storage import append_jsonl
from utils.logger_setup import log_error, log_function_call, log_stage
from utils.seeding import stage_seed

LogDensity = Callable[[np.ndarray], float]

# Knob driving each input and the sign of its effect
SENSITIVITY_SIGNS = {
    "k_p": ("enrichment", 1.0),
    "eps_f": ("detector_size", 1.0),
    "s_intensity": ("source_rate", 1.0),
    "x_s": ("source_mix", 1.0),
    "m_gamma": ("capture_loading", 1.0),
    "eps_gamma": ("gamma_detector_size", 1.0),
}

UNREACHABLE_TOLERANCE = 0.05


@dataclass(frozen=True)
class CsqConfig:
    """
    Active-learning settings

    Attributes:
        h: Log-posterior slack of the constraint set
        restarts: Independent annealing runs
        steps: Annealing steps per run
        initial_temperature: Temperature of the first step (log-det units)
        cooling: Geometric cooling factor per step
        step_scale: Proposal standard deviation in unit-box coordinates at the initial temperature
        sobol_samples: Base sample size of the Sobol estimator (power of 2)
        match_iterations: Knob-adjustment iterations
        match_histories: Tally histories during matching
        full_histories: Tally histories of the final instance
    """

    h: float = config.CSQ_SLACK
    restarts: int = 8
    steps: int = 400
    initial_temperature: float = 1.0
    cooling: float = 0.99
    step_scale: float = 0.1
    sobol_samples: int = 2**14
    match_iterations: int = config.MATCH_ITERATIONS
    match_histories: int = config.MATCH_HISTORIES
    full_histories: int = config.FULL_HISTORIES

    def __post_init__(self):
        if self.h < 0.0:
            raise DesignError("CSQ slack h must be >= 0", {"h": self.h})
        if self.restarts < 1 or self.steps < 1:
            raise DesignError("CSQ needs at least one restart and one step")
        if not 0.0 < self.cooling <= 1.0:
            raise DesignError("Cooling factor must lie in (0, 1]", {"cooling": self.cooling})


class Acquisition(Protocol):
    """Selects the next training input from a surrogate and a log posterior"""

    def __call__(self, gp, target: LogDensity, map_point: np.ndarray, cfg: CsqConfig,
                 box: DesignBox, seed: int) -> np.ndarray:
        ...


def log_det_predictive(gp, x: np.ndarray) -> float:
    """log det C(x) of the latent predictive covariance"""
    if hasattr(gp, "log_det_cov"):
        return float(gp.log_det_cov(np.atleast_2d(x))[0])
    _, cov = gp.predict(np.asarray(x, dtype=float))
    sign, logdet = np.linalg.slogdet(np.atleast_2d(cov))
    return float(logdet) if sign > 0 else -np.inf


def constraint_violation(x: np.ndarray, target: LogDensity, map_value: float, h: float) -> float:
    """Amount by which log p(x_m|y) - log p(x|y) exceeds h (0 inside the set)"""
    value = target(x)
    if not np.isfinite(value):
        return np.inf
    return max(0.0, map_value - value - h)


def in_constraint_set(x: np.ndarray, target: LogDensity, map_value: float, h: float) -> bool:
    return constraint_violation(x, target, map_value, h) == 0.0


def _anneal(gp, target: LogDensity, start: np.ndarray, map_value: float, cfg: CsqConfig,
            box: DesignBox, seed: int) -> Tuple[Optional[np.ndarray], float, float]:
    rng = np.random.default_rng(seed)
    current = box.to_unit(start)
    current_value = log_det_predictive(gp, start)
    best, best_value = (start.copy(), current_value) if in_constraint_set(start, target, map_value, cfg.h) \
        else (None, -np.inf)
    smallest_violation = np.inf
    temperature = cfg.initial_temperature

    for _ in range(cfg.steps):
        spread = cfg.step_scale * np.sqrt(max(temperature / cfg.initial_temperature, 0.01))
        candidate = np.clip(current + spread * rng.standard_normal(current.size), 0.0, 1.0)
        x = box.clip(box.from_unit(candidate))
        violation = constraint_violation(x, target, map_value, cfg.h)
        if violation > 0.0:
            smallest_violation = min(smallest_violation, violation)
            temperature *= cfg.cooling
            continue
        value = log_det_predictive(gp, x)
        if value >= current_value or rng.random() < np.exp((value - current_value) / temperature):
            current, current_value = candidate, value
        if value > best_value:
            best, best_value = x.copy(), value
        temperature *= cfg.cooling

    return best, best_value, smallest_violation


def csq_query(gp, target: LogDensity, map_point: np.ndarray, cfg: CsqConfig = CsqConfig(),
              box: Optional[DesignBox] = None, seed: int = 0, workers: Optional[int] = None) -> np.ndarray:
    """
    Constraint Set Query

    Maximizes log det C(x) over the set where the log posterior is within h
    of its value at the MAP. Restarts of a simulated-annealing walk run from
    the MAP; infeasible proposals are rejected.

    Args:
        gp: Surrogate providing predict or log_det_cov
        target: Log posterior
        map_point: MAP estimate of target
        cfg: Acquisition settings
        box: Search box (defaults to the surrogate box)
        seed: Random seed
        workers: Threads running restarts

    Returns:
        New input x_new inside the constraint set
    """
    box = box or gp.box
    map_point = box.clip(np.asarray(map_point, dtype=float))
    map_value = target(map_point)
    if not np.isfinite(map_value):
        raise DesignError("Log posterior is not finite at the MAP", {"map": map_point.tolist()})

    def run(restart: int):
        return _anneal(gp, target, map_point, map_value, cfg, box, stage_seed(seed, "csq", restart))

    with ThreadPoolExecutor(max_workers=workers or config.WORKERS) as executor:
        results = list(executor.map(run, range(cfg.restarts)))

    feasible = [(value, x) for x, value, _ in results if x is not None]
    if not feasible:
        raise DesignError("No feasible point found within the annealing budget",
                          {"smallest_violation": min(r[2] for r in results)})
    best_value, x_new = max(feasible, key=lambda item: item[0])
    if not in_constraint_set(x_new, target, map_value, cfg.h):
        raise DesignError("CSQ point violates the constraint set", {"x": x_new.tolist()})
    logger.info(f"CSQ selected {np.round(x_new, 5).tolist()} with log det C = {best_value:.4f}")
    return x_new


def sobol_weights(f: Callable[[np.ndarray], np.ndarray], box: DesignBox, obs: ObservationSet,
                  n: int = 2**14, seed: int = 0) -> np.ndarray:
    """
    Input weights of the matching loss from first-order Sobol indices

    omega_j is proportional to sum_i s_ji * ybar_i^2 / sigma_i^2, with s_ji
    the first-order index of output i with respect to input j under
    independent uniform inputs over the box.

    Args:
        f: Vectorised map (m, p) -> (m, d), typically a surrogate mean
        box: Input box
        obs: Observations providing ybar and the variances sigma_i^2
        n: Base sample size (power of 2)
        seed: Random seed

    Returns:
        Normalised weight vector of length p
    """
    variances = np.diag(obs.covariance)
    if np.any(variances <= 0.0):
        raise DesignError("Observation variance is zero for some output",
                          {"outputs": np.flatnonzero(variances <= 0.0).tolist()})

    dists = [uniform(loc=lo, scale=hi - lo) for lo, hi in zip(box.lower, box.upper)]
    with np.errstate(divide="ignore", invalid="ignore"):
        result = sobol_indices(func=lambda x: np.asarray(f(x.T)).reshape(x.shape[1], -1).T, n=n, dists=dists,
                               random_state=np.random.default_rng(seed))
    first_order = np.nan_to_num(np.atleast_2d(result.first_order), nan=0.0, posinf=0.0, neginf=0.0)
    first_order = np.clip(first_order, 0.0, None)
    if first_order.shape != (obs.dim, box.dim):
        raise DesignError("Map and observations differ in output dimension",
                          {"indices": first_order.shape, "outputs": obs.dim})

    raw = (obs.mean**2 / variances) @ first_order
    if raw.sum() <= 0.0:
        raise DesignError("Every Sobol weight is zero")
    weights = raw / raw.sum()
    logger.info(f"Sobol weights: {dict(zip(box.names, np.round(weights, 4)))}")
    return weights


@dataclass
class MatchResult:
    """
    Outcome of facility input matching

    Attributes:
        knobs: Best facility configuration
        achieved: Material input of that configuration at full histories
        loss: Weighted squared error in unit-box coordinates
        relative_errors: (achieved - target) / target per input
        history: Per-iteration knobs, inputs and losses
    """

    knobs: FacilityParams
    achieved: MaterialInput
    loss: float
    relative_errors: Dict[str, float]
    history: List[Dict] = field(default_factory=list)


def matching_loss(x: np.ndarray, x_target: np.ndarray, weights: np.ndarray, box: DesignBox) -> float:
    error = box.to_unit(x) - box.to_unit(x_target)
    return float(np.sum(weights * error**2))


def _relative_errors(x: np.ndarray, x_target: np.ndarray, names) -> Dict[str, float]:
    denominator = np.where(np.abs(x_target) > 1e-12, np.abs(x_target), 1.0)
    return dict(zip(names, ((x - x_target) / denominator).tolist()))


def match_inputs(x_target: np.ndarray, weights: np.ndarray, seed: int, data: NuclearData,
                 box: Optional[DesignBox] = None, cfg: CsqConfig = CsqConfig()) -> MatchResult:
    """
    Find facility knobs reproducing a target material input

    Each iteration tallies the current knobs at reduced histories and moves
    every knob against the error of the input it drives: a secant step once
    two evaluations with a usable slope exist, otherwise a signed step that
    halves when the error changes sign. The best knobs are re-tallied at
    full histories.

    Args:
        x_target: Target joint input (inside the box)
        weights: Loss weights per input
        seed: Random seed of the tallies
        data: Nuclear data
        box: Joint design box
        cfg: Iteration and history budgets

    Returns:
        MatchResult
    """
    box = box or DesignBox.default()
    x_target = np.asarray(x_target, dtype=float)
    if not box.contains(x_target):
        raise DesignError("Matching target outside the design box", {"target": x_target.tolist()})
    names = box.names
    knob_index = [KNOB_NAMES.index(SENSITIVITY_SIGNS[name][0]) for name in names]
    signs = np.array([SENSITIVITY_SIGNS[name][1] for name in names])
    target_unit = box.to_unit(x_target)

    knobs = np.full(len(KNOB_NAMES), 0.5)
    steps = np.full(len(names), 0.25)
    previous = None
    history = []
    best_loss, best_knobs = np.inf, knobs.copy()

    for iteration in range(cfg.match_iterations):
        x = facility_to_inputs(FacilityParams.from_array(knobs), cfg.match_histories,
                               stage_seed(seed, "match", iteration), data).as_array()
        error = box.to_unit(x) - target_unit
        loss = float(np.sum(weights * error**2))
        history.append({"iteration": iteration, "knobs": knobs.tolist(), "x": x.tolist(), "loss": loss})
        if loss < best_loss:
            best_loss, best_knobs = loss, knobs.copy()

        updated = knobs.copy()
        for j, k in enumerate(knob_index):
            step = None
            if previous is not None:
                dk = knobs[k] - previous[0][k]
                de = error[j] - previous[1][j]
                slope = de / dk if abs(dk) > 1e-9 else 0.0
                if slope * signs[j] > 1e-6:
                    step = float(np.clip(-error[j] / slope, -0.5, 0.5))
                if np.sign(error[j]) != np.sign(previous[1][j]):
                    steps[j] *= 0.5
            if step is None:
                step = -signs[j] * np.sign(error[j]) * steps[j]
            updated[k] = np.clip(knobs[k] + step, 0.0, 1.0)
        previous = (knobs, error)
        knobs = updated

    best = FacilityParams.from_array(best_knobs)
    achieved = facility_to_inputs(best, cfg.full_histories, stage_seed(seed, "match", "full"), data)
    x = achieved.as_array()
    result = MatchResult(best, achieved, matching_loss(x, x_target, weights, box),
                         _relative_errors(x, x_target, names), history)

    unit_error = np.abs(box.to_unit(x) - target_unit)
    if np.any(unit_error > UNREACHABLE_TOLERANCE):
        logger.warning(f"Facility could not reach the target on "
                       f"{[n for n, e in zip(names, unit_error) if e > UNREACHABLE_TOLERANCE]}")
    logger.info(f"Matched target with loss {result.loss:.3e}, k_p relative error "
                f"{result.relative_errors.get('k_p', np.nan):.3%}")
    return result


class CsqAudit:
    """Per-iteration record of the active-learning loop, optionally mirrored to JSON lines"""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path is not None else None
        self.records: List[Dict] = []
        self.aborted: Optional[str] = None
        if self.path is not None and self.path.exists():
            self.path.unlink()
        logger.debug("CsqAudit initialized")

    def log(self, record: Dict):
        self.records.append(record)
        if self.path is not None:
            append_jsonl(record, self.path)

    def abort(self, stage: str, error: Exception):
        self.aborted = stage
        self.log({"aborted": stage, "error": str(error)})

    def __len__(self) -> int:
        return len(self.records)


def _simulate_outputs(x: MaterialInput, data: NuclearData, duration: float, seed: int,
                      long_window: float, workers: Optional[int]) -> np.ndarray:
    from backend.moments import triggered_binning

    timelist = simulate_timelist(x, data, duration, seed, workers=workers)
    outputs = []
    for kind in ("neutron", "gamma"):
        y_hat, x_hat, _ = triggered_binning(timelist, kind, long_window)
        outputs.extend([timelist.count_rate(kind), y_hat, x_hat])
    return np.asarray(outputs)


@log_function_call
def csq_loop(gp, obs: ObservationSet, prior: PriorSpec, n_new: int, seed: int, data: NuclearData,
             duration: float, cfg: CsqConfig = CsqConfig(), am_cfg: AMConfig = AMConfig(),
             long_window: Optional[float] = None, test_inputs: Optional[np.ndarray] = None,
             audit_path: Optional[Path] = None, workers: Optional[int] = None):
    """
    Active-learning loop of the joint surrogate

    Each iteration samples the joint posterior, refines its MAP, queries a
    CSQ point, matches it with facility knobs, simulates the matched input
    and adds the reduced outputs to the surrogate.
    The audit records the predictive log-determinant at the queried point
    and at the matched input, before and after the update.

    Args:
        gp: Joint surrogate
        obs: Joint observations
        prior: Prior of the joint inverse problem
        n_new: Number of points to add
        seed: Master seed of the loop
        data: Nuclear data
        duration: Simulated duration of each new instance
        cfg: Acquisition and matching settings
        am_cfg: Sampler settings of the per-iteration posterior
        long_window: Triggered-binning window (defaults to 20/alpha)
        test_inputs: Optional inputs at which the MCD is tracked
        audit_path: JSON-lines audit file
        workers: Threads for simulation and restarts

    Returns:
        Tuple (updated surrogate, CsqAudit); on a stage error the loop stops
        and returns what was added so far
    """
    from backend.metrics import mcd
    from backend.surrogate import add_points

    if n_new < 0:
        raise DesignError("n_new must be >= 0", {"n_new": n_new})
    audit = CsqAudit(audit_path)
    long_window = long_window or 20.0 / data.alpha
    box = prior.box
    weights = None

    for iteration in range(n_new):
        log_stage("csq-iteration", iteration=iteration, n=len(gp.dataset))
        stage = "posterior"
        try:
            samples = sample_posterior(obs, gp, prior, stage_seed(seed, "posterior", iteration), am_cfg,
                                       stage=f"csq-{iteration}")
            target = posterior_target(obs, gp, prior)

            stage = "query"
            x_new = csq_query(gp, target, samples.map_point, cfg, box, stage_seed(seed, "query", iteration), workers)

            stage = "sobol"
            if weights is None:
                weights = sobol_weights(gp.predict_mean, box, obs, cfg.sobol_samples, stage_seed(seed, "sobol"))

            stage = "match"
            match = match_inputs(x_new, weights, stage_seed(seed, "match", iteration), data, box, cfg)

            stage = "simulate"
            sim_seed = stage_seed(seed, "simulate", iteration)
            outputs = _simulate_outputs(match.achieved, data, duration, sim_seed, long_window, workers)

            stage = "update"
            achieved = match.achieved.as_array()
            before = log_det_predictive(gp, achieved)
            query_before = log_det_predictive(gp, x_new)
            mcd_before = mcd(gp, test_inputs) if test_inputs is not None else None
            gp = add_points(gp, achieved[None, :], outputs[None, :], workers=workers)
            after = log_det_predictive(gp, achieved)
            query_after = log_det_predictive(gp, x_new)
        except FissidError as e:
            log_error(e, {"iteration": iteration, "stage": stage})
            audit.abort(stage, e)
            return gp, audit

        record = {
            "iteration": iteration,
            "map": samples.map_point,
            "target": x_new,
            "achieved": achieved,
            "knobs": match.knobs.to_dict(),
            "loss": match.loss,
            "relative_errors": match.relative_errors,
            "outputs": outputs,
            "log_det_before": before,
            "log_det_after": after,
            "log_det_query_before": query_before,
            "log_det_query_after": query_after,
            "seeds": {"simulate": sim_seed},
        }
        if test_inputs is not None:
            record["mcd_before"] = mcd_before
            record["mcd_after"] = mcd(gp, test_inputs)
        audit.log(record)
        logger.info(f"CSQ iteration {iteration + 1}/{n_new}: log det C {before:.3f} -> {after:.3f}")

    return gp, audit
