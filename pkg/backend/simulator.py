"""
Simulator
Point-model branching Monte Carlo producing neutron and gamma detection time lists
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.stats import qmc

import config
from backend.exceptions import ParameterError, SimulationError
from backend.nuclear_data import NuclearData
from backend.pointmodel import NeutronPointParams, capture_gamma_yield, capture_probability, gamma_multiplication
from utils.seeding import block_rng, stage_seed

NEUTRON = 0
GAMMA = 1
KIND_CODES = {"neutron": NEUTRON, "gamma": GAMMA}
KIND_NAMES = {code: name for name, code in KIND_CODES.items()}

# Source events per simulation block; fixed so results do not depend on worker count
BLOCK_SIZE = 10_000
# Warm-up before t = 0 in units of 1/alpha
WARM_UP_DECAYS = 20.0

TALLY_KEYS = ("source_events", "source_neutrons", "induced_fissions", "gammas_created",
              "neutron_detections", "gamma_detections")

KNOB_NAMES = ("enrichment", "detector_size", "source_rate", "source_mix",
              "capture_loading", "gamma_detector_size")


def parse_kind(kind) -> int:
    """Particle kind code from a name or code"""
    if isinstance(kind, str):
        if kind not in KIND_CODES:
            raise ParameterError(f"Unknown particle kind '{kind}'", {"allowed": list(KIND_CODES)})
        return KIND_CODES[kind]
    if int(kind) not in KIND_NAMES:
        raise ParameterError(f"Unknown particle kind code {kind}")
    return int(kind)


@dataclass(frozen=True)
class MaterialInput:
    """Joint input x = (k_p, eps_f, S, x_s, M_gamma, eps_gamma)"""

    k_p: float
    eps_f: float
    s_intensity: float
    x_s: float
    m_gamma: float
    eps_gamma: float

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise ParameterError("Material input has non-finite components", self.to_dict())
        if not 0.0 < self.k_p < 1.0:
            raise ParameterError("k_p must lie in (0, 1)", {"k_p": self.k_p})
        if not 0.0 <= self.x_s <= 1.0:
            raise ParameterError("x_s must lie in [0, 1]", {"x_s": self.x_s})
        for name in ("eps_f", "s_intensity", "m_gamma", "eps_gamma"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be > 0", {name: getattr(self, name)})

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "MaterialInput":
        values = np.asarray(values, dtype=float)
        if values.shape != (6,):
            raise ParameterError("Material input needs 6 components", {"shape": values.shape})
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([self.k_p, self.eps_f, self.s_intensity, self.x_s, self.m_gamma, self.eps_gamma])

    def to_dict(self) -> Dict[str, float]:
        return dict(zip(config.JOINT_INPUTS, self.as_array().tolist()))

    @property
    def neutron(self) -> np.ndarray:
        """Neutron projection (k_p, eps_f, S, x_s)"""
        return self.as_array()[[0, 1, 2, 3]]

    @property
    def gamma(self) -> np.ndarray:
        """Gamma projection (k_p, S, x_s, M_gamma, eps_gamma)"""
        return self.as_array()[[0, 2, 3, 4, 5]]

    def point_params(self, data: NuclearData) -> NeutronPointParams:
        return NeutronPointParams(self.k_p, self.eps_f, self.s_intensity, self.x_s, data)

    def check_box(self, box: Dict[str, Tuple[float, float]]):
        """Raise ParameterError naming every component outside the design box"""
        outside = {
            name: value
            for name, value in self.to_dict().items()
            if name in box and not box[name][0] <= value <= box[name][1]
        }
        if outside:
            raise ParameterError("Material input outside the design box", outside)


@dataclass
class TimeList:
    """
    Detection events of one simulated measurement

    Attributes:
        duration: Recorded window length in seconds
        times: Detection instants, non-decreasing, in [0, duration]
        kinds: Particle kind code per event (NEUTRON or GAMMA)
        histories: Source-event index per event
        n_histories: Number of source events generated (warm-up included)
        tallies: Counters over the recorded window
        config_hash: Digest of the generating configuration
    """

    duration: float
    times: np.ndarray
    kinds: np.ndarray
    histories: np.ndarray
    n_histories: int = 0
    tallies: Dict[str, float] = field(default_factory=dict)
    config_hash: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.kinds = np.asarray(self.kinds, dtype=np.int8)
        self.histories = np.asarray(self.histories, dtype=np.int64)
        if not (self.times.shape == self.kinds.shape == self.histories.shape):
            raise SimulationError("Time list arrays differ in length")
        if self.duration <= 0.0:
            raise SimulationError("Time list duration must be > 0", {"duration": self.duration})
        if self.times.size:
            if np.any(np.diff(self.times) < 0.0):
                raise SimulationError("Time list is not sorted")
            if self.times[0] < 0.0 or self.times[-1] > self.duration:
                raise SimulationError("Detection times outside [0, duration]")
            if np.any(self.histories < 0):
                raise SimulationError("Negative history id")
            if self.n_histories and self.histories.max() >= self.n_histories:
                raise SimulationError("History id references a missing source event")

    def __len__(self) -> int:
        return int(self.times.size)

    def select(self, kind) -> Tuple[np.ndarray, np.ndarray]:
        """(times, histories) of one particle kind"""
        mask = self.kinds == parse_kind(kind)
        return self.times[mask], self.histories[mask]

    def count(self, kind) -> int:
        return int(np.count_nonzero(self.kinds == parse_kind(kind)))

    def count_rate(self, kind) -> float:
        return self.count(kind) / self.duration

    def tallied_m_gamma(self) -> float:
        """Gammas created per source neutron over the recorded window"""
        return self.tallies.get("gammas_created", 0.0) / max(self.tallies.get("source_neutrons", 0.0), 1.0)

    def tallied_eps_f(self) -> float:
        return self.tallies.get("neutron_detections", 0.0) / max(self.tallies.get("induced_fissions", 0.0), 1.0)

    def tallied_eps_gamma(self) -> float:
        return self.tallies.get("gamma_detections", 0.0) / max(self.tallies.get("induced_fissions", 0.0), 1.0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "time_s": self.times,
            "kind": [KIND_NAMES[int(k)] for k in self.kinds],
            "history_id": self.histories,
        })


@dataclass(frozen=True)
class _ChainPlan:
    """Per-particle probabilities derived from a material input"""

    duration: float
    lifetime: float
    q_spontaneous: float
    p_fission: float
    p_detect: float
    capture_yield: float
    p_gamma: float
    induced_pmf: np.ndarray
    spont_pmf: np.ndarray
    gamma_pmf: np.ndarray
    gamma_spont_pmf: np.ndarray


def chain_plan(x: MaterialInput, data: NuclearData, duration: float) -> _ChainPlan:
    """
    Derive the branching probabilities of a material input

    A neutron lives an exponential time of rate alpha / (1 - k_p), then
    either fissions (k_p / nu), is detected (eps_f * k_p / nu) or is
    captured. Captured neutrons emit Poisson capture gammas whose mean
    reproduces M_gamma; each gamma is detected with a probability giving
    eps_gamma detections per induced fission.
    """
    if not data.has_pmfs:
        raise SimulationError("Simulation requires all four multiplicity PMFs")

    p_fission = x.k_p / data.nu_bar
    p_detect = x.eps_f * x.k_p / data.nu_bar
    if p_fission + p_detect > 1.0:
        raise SimulationError(
            "Neutron detection probability overflows",
            {"p_fission": p_fission, "p_detect": p_detect},
        )

    capture_yield = float(capture_gamma_yield(x.k_p, x.eps_f, x.x_s, x.m_gamma, data))
    if capture_yield < 0.0:
        raise SimulationError(
            "M_gamma below the prompt fission gamma floor",
            {"m_gamma": x.m_gamma, "floor": float(gamma_multiplication(x.k_p, x.eps_f, x.x_s, 0.0, data))},
        )
    if capture_probability(x.k_p, x.eps_f, data) <= 0.0 and capture_yield > 0.0:
        raise SimulationError("Capture gammas requested with zero capture probability")

    p_gamma = x.eps_gamma * x.k_p / (data.nu_bar * (1.0 - x.k_p) * x.m_gamma)
    if p_gamma > 1.0:
        logger.warning(f"Gamma detection probability {p_gamma:.3f} truncated to 1 (eps_gamma={x.eps_gamma})")
        p_gamma = 1.0

    q = x.x_s / (x.x_s + data.nu_bar_s * (1.0 - x.x_s))
    return _ChainPlan(
        duration=duration,
        lifetime=(1.0 - x.k_p) / data.alpha,
        q_spontaneous=q,
        p_fission=p_fission,
        p_detect=p_detect,
        capture_yield=capture_yield,
        p_gamma=p_gamma,
        induced_pmf=np.asarray(data.induced_pmf),
        spont_pmf=np.asarray(data.spont_pmf),
        gamma_pmf=np.asarray(data.gamma_pmf),
        gamma_spont_pmf=np.asarray(data.gamma_spont_pmf),
    )


class _BlockRecorder:
    """Collects detections and window tallies of one block"""

    def __init__(self, plan: _ChainPlan, rng: np.random.Generator):
        self.plan = plan
        self.rng = rng
        self.times: List[np.ndarray] = []
        self.histories: List[np.ndarray] = []
        self.kinds: List[np.ndarray] = []
        self.tallies = dict.fromkeys(TALLY_KEYS, 0)

    def in_window(self, t: np.ndarray) -> np.ndarray:
        return (t >= 0.0) & (t <= self.plan.duration)

    def record(self, t: np.ndarray, h: np.ndarray, kind: int):
        if t.size:
            self.times.append(t)
            self.histories.append(h)
            self.kinds.append(np.full(t.size, kind, dtype=np.int8))

    def emit_gammas(self, t: np.ndarray, h: np.ndarray, created: np.ndarray):
        self.tallies["gammas_created"] += int(created[self.in_window(t)].sum())
        detected = self.rng.binomial(created, self.plan.p_gamma)
        self.record(np.repeat(t, detected), np.repeat(h, detected), GAMMA)


def _run_block(plan: _ChainPlan, seed: int, block: int, source_times: np.ndarray,
               source_ids: np.ndarray) -> _BlockRecorder:
    rng = block_rng(seed, block)
    rec = _BlockRecorder(plan, rng)

    spontaneous = rng.random(source_times.size) < plan.q_spontaneous
    n_spont = int(spontaneous.sum())
    emitted = np.ones(source_times.size, dtype=np.int64)
    emitted[spontaneous] = rng.choice(plan.spont_pmf.size, size=n_spont, p=plan.spont_pmf)

    window = rec.in_window(source_times)
    rec.tallies["source_events"] += int(window.sum())
    rec.tallies["source_neutrons"] += int(emitted[window].sum())
    rec.emit_gammas(
        source_times[spontaneous],
        source_ids[spontaneous],
        rng.choice(plan.gamma_spont_pmf.size, size=n_spont, p=plan.gamma_spont_pmf),
    )

    birth = np.repeat(source_times, emitted)
    owner = np.repeat(source_ids, emitted)
    while birth.size:
        death = birth + rng.exponential(plan.lifetime, size=birth.size)
        u = rng.random(birth.size)
        fission = u < plan.p_fission
        detect = ~fission & (u < plan.p_fission + plan.p_detect)
        capture = ~(fission | detect)

        rec.record(death[detect], owner[detect], NEUTRON)

        if plan.capture_yield > 0.0:
            n_capture = int(capture.sum())
            rec.emit_gammas(death[capture], owner[capture], rng.poisson(plan.capture_yield, size=n_capture))

        fission_times = death[fission]
        fission_owner = owner[fission]
        rec.tallies["induced_fissions"] += int(rec.in_window(fission_times).sum())
        rec.emit_gammas(
            fission_times,
            fission_owner,
            rng.choice(plan.gamma_pmf.size, size=fission_times.size, p=plan.gamma_pmf),
        )

        progeny = rng.choice(plan.induced_pmf.size, size=fission_times.size, p=plan.induced_pmf)
        birth = np.repeat(fission_times, progeny)
        owner = np.repeat(fission_owner, progeny)
        # neutrons born after the window cannot produce recorded detections
        alive = birth <= plan.duration
        birth, owner = birth[alive], owner[alive]

    return rec


def timelist_hash(x: MaterialInput, data: NuclearData, duration: float, seed: int) -> str:
    payload = {"input": x.to_dict(), "data": data.to_dict(), "duration": duration, "seed": int(seed)}
    return hashlib.md5(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def simulate_timelist(x: MaterialInput, data: NuclearData, duration: float, seed: int,
                      workers: Optional[int] = None) -> TimeList:
    """
    Simulate a measurement of a subcritical assembly

    Source events arrive as a Poisson process of rate S over
    [-20/alpha, duration] so the recorded window is stationary. Histories
    are split into fixed-size blocks, each with its own random stream, so
    the result is bit-identical for any number of workers.

    Args:
        x: Material input
        data: Nuclear data with multiplicity PMFs
        duration: Recorded window in seconds
        seed: Random seed
        workers: Thread count (defaults to config.WORKERS)

    Returns:
        TimeList sorted by time
    """
    if not np.isfinite(duration) or duration <= 0.0:
        raise SimulationError("Duration must be > 0", {"duration": duration})
    if x.s_intensity * duration < 1.0:
        raise SimulationError(
            "Duration produces no expected source event",
            {"s_intensity": x.s_intensity, "duration": duration},
        )

    plan = chain_plan(x, data, duration)
    warm_up = WARM_UP_DECAYS / data.alpha

    master = np.random.default_rng(np.random.SeedSequence(int(seed)))
    n_sources = int(master.poisson(x.s_intensity * (duration + warm_up)))
    source_times = np.sort(master.uniform(-warm_up, duration, size=n_sources))
    source_ids = np.arange(n_sources, dtype=np.int64)

    starts = list(range(0, n_sources, BLOCK_SIZE))
    workers = workers or config.WORKERS
    logger.debug(f"Simulating {n_sources} source events in {len(starts)} blocks ({workers} workers)")

    def run(block: int) -> _BlockRecorder:
        start = starts[block]
        chunk = slice(start, start + BLOCK_SIZE)
        return _run_block(plan, seed, block, source_times[chunk], source_ids[chunk])

    with ThreadPoolExecutor(max_workers=workers) as executor:
        records = list(executor.map(run, range(len(starts))))

    tallies = dict.fromkeys(TALLY_KEYS, 0)
    times, histories, kinds = [], [], []
    for rec in records:
        for key, value in rec.tallies.items():
            tallies[key] += value
        times.extend(rec.times)
        histories.extend(rec.histories)
        kinds.extend(rec.kinds)

    times = np.concatenate(times) if times else np.empty(0)
    histories = np.concatenate(histories) if histories else np.empty(0, dtype=np.int64)
    kinds = np.concatenate(kinds) if kinds else np.empty(0, dtype=np.int8)

    keep = (times >= 0.0) & (times <= duration)
    times, histories, kinds = times[keep], histories[keep], kinds[keep]
    order = np.lexsort((kinds, histories, times))
    times, histories, kinds = times[order], histories[order], kinds[order]

    tallies["neutron_detections"] = int(np.count_nonzero(kinds == NEUTRON))
    tallies["gamma_detections"] = int(np.count_nonzero(kinds == GAMMA))

    timelist = TimeList(
        duration=float(duration),
        times=times,
        kinds=kinds,
        histories=histories,
        n_histories=n_sources,
        tallies={key: float(value) for key, value in tallies.items()},
        config_hash=timelist_hash(x, data, duration, seed),
    )
    logger.debug(
        f"Simulated {tallies['neutron_detections']} neutron and "
        f"{tallies['gamma_detections']} gamma detections over {duration}s"
    )
    return timelist


# --- Facility map -----------------------------------------------------------

@dataclass(frozen=True)
class FacilityParams:
    """Abstract facility controls, each in [0, 1]"""

    knobs: Tuple[float, ...]

    def __post_init__(self):
        knobs = np.asarray(self.knobs, dtype=float)
        if knobs.shape != (len(KNOB_NAMES),):
            raise ParameterError(f"Facility needs {len(KNOB_NAMES)} knobs", {"shape": knobs.shape})
        if not np.all(np.isfinite(knobs)) or np.any(knobs < 0.0) or np.any(knobs > 1.0):
            raise ParameterError("Facility knobs must lie in [0, 1]", dict(zip(KNOB_NAMES, knobs.tolist())))
        object.__setattr__(self, "knobs", tuple(float(v) for v in knobs))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FacilityParams":
        return cls(tuple(values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.knobs, dtype=float)

    def to_dict(self) -> Dict[str, float]:
        return dict(zip(KNOB_NAMES, self.knobs))


def facility_latent(f: FacilityParams, data: NuclearData) -> MaterialInput:
    """
    Noise-free facility map

    enrichment        -> k_p   = 0.80 + 0.15 f0^0.9 (1 - 0.04 f4)
    detector_size     -> eps_f = 0.002 + 0.018 f1^1.2 (0.9 + 0.5 (k_p - 0.80))
    source_rate       -> S     = 1e3 + 9e3 f2
    source_mix        -> x_s   = f3
    capture_loading   -> M_gamma through a capture-gamma yield 0.5 + 4.5 f4
    gamma_detector    -> eps_gamma = 0.01 + 0.09 f5^1.1
    """
    f0, f1, f2, f3, f4, f5 = f.knobs
    k_p = 0.80 + 0.15 * f0**0.9 * (1.0 - 0.04 * f4)
    eps_f = 0.002 + 0.018 * f1**1.2 * (0.9 + 0.5 * (k_p - 0.80))
    s_intensity = 1.0e3 + 9.0e3 * f2
    x_s = f3
    m_gamma = float(gamma_multiplication(k_p, eps_f, x_s, 0.5 + 4.5 * f4, data))
    eps_gamma = 0.01 + 0.09 * f5**1.1
    return MaterialInput(k_p, eps_f, s_intensity, x_s, m_gamma, eps_gamma)


def facility_to_inputs(f: FacilityParams, histories: int, seed: int, data: NuclearData) -> MaterialInput:
    """
    Tallied material input of a facility configuration

    The tallied components (k_p, eps_f, M_gamma, eps_gamma) carry zero-mean
    estimation noise with standard deviation proportional to 1/sqrt(histories);
    S and x_s are returned exactly. Tallies are not confined to the design
    box; callers reject out-of-box instances.

    Args:
        f: Facility knobs
        histories: Number of tally histories (>= 100)
        seed: Random seed of the tally noise
        data: Nuclear data

    Returns:
        MaterialInput
    """
    if histories < 100:
        raise ParameterError("histories must be >= 100", {"histories": histories})
    latent = facility_latent(f, data)
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(histories)

    k_p = latent.k_p + 0.2 * scale * rng.standard_normal()
    eps_f = latent.eps_f * (1.0 + 3.0 * scale * rng.standard_normal())
    m_gamma = latent.m_gamma * (1.0 + 3.0 * scale * rng.standard_normal())
    eps_gamma = latent.eps_gamma * (1.0 + 3.0 * scale * rng.standard_normal())

    return MaterialInput(float(k_p), float(eps_f), latent.s_intensity, latent.x_s, float(m_gamma), float(eps_gamma))


# --- Datasets and replicated observations -------------------------------------

def _training_row(x: MaterialInput, data: NuclearData, duration: float, seed: int,
                  long_window: float, workers: Optional[int]) -> Dict[str, float]:
    from backend.moments import triggered_binning

    timelist = simulate_timelist(x, data, duration, seed, workers=workers)
    row = {"n_neutron": timelist.count("neutron"), "n_gamma": timelist.count("gamma")}
    for kind, columns in (("neutron", config.NEUTRON_OUTPUTS), ("gamma", config.GAMMA_OUTPUTS)):
        if row[f"n_{kind}"] == 0:
            continue
        y_hat, x_hat, _ = triggered_binning(timelist, kind, long_window)
        row.update(zip(columns, (timelist.count_rate(kind), y_hat, x_hat)))
    return row


def generate_dataset(box: Dict[str, Tuple[float, float]], n: int, duration: float, histories: int,
                     seed: int, data: NuclearData, min_detections: int = 200,
                     long_window: Optional[float] = None, max_attempts: int = 20,
                     workers: Optional[int] = None, cache=None):
    """
    Generate a training dataset of simulated instances

    Facility knobs are drawn by Latin hypercube sampling; each instance is
    tallied, simulated and reduced to its six outputs by triggered binning
    at a long window. Instances outside the box or with fewer than
    min_detections detections of either kind are resampled.

    Args:
        box: Design box per input name
        n: Number of instances (>= 2)
        duration: Simulated duration per instance (s)
        histories: Tally histories of the facility map
        seed: Master seed of the dataset
        data: Nuclear data
        min_detections: Minimum detections per particle kind
        long_window: Triggered-binning window (defaults to 20/alpha)
        max_attempts: Resampling budget per instance
        workers: Simulation threads
        cache: Optional CacheManager memoising simulated rows

    Returns:
        TrainingDataset with provenance columns
    """
    from backend.dataset import TrainingDataset

    if n < 2:
        raise ParameterError("Dataset needs n >= 2", {"n": n})
    long_window = long_window or 20.0 / data.alpha
    knobs = qmc.LatinHypercube(d=len(KNOB_NAMES), seed=stage_seed(seed, "dataset", "lhs")).random(n)

    rows = []
    for i in range(n):
        f = FacilityParams.from_array(knobs[i])
        for attempt in range(max_attempts):
            if attempt:
                resample = np.random.default_rng(stage_seed(seed, "dataset", "resample", i, attempt))
                f = FacilityParams.from_array(resample.random(len(KNOB_NAMES)))
            sim_seed = stage_seed(seed, "dataset", "simulate", i, attempt)
            try:
                x = facility_to_inputs(f, histories, stage_seed(seed, "dataset", "tally", i, attempt), data)
                x.check_box(box)
            except ParameterError as e:
                logger.warning(f"Instance {i} attempt {attempt} resampled: {e}")
                continue

            args = (x, data, duration, sim_seed, long_window, workers)
            try:
                if cache is not None:
                    fields = {"x": x.to_dict(), "data": data.to_dict(), "duration": duration, "seed": sim_seed,
                              "long_window": long_window}
                    row = cache.memoize("training_row", fields, _training_row, *args)
                else:
                    row = _training_row(*args)
            except SimulationError as e:
                logger.warning(f"Instance {i} attempt {attempt} resampled: {e}")
                continue

            if row is None or min(row["n_neutron"], row["n_gamma"]) < max(min_detections, 1):
                logger.warning(f"Instance {i} attempt {attempt} resampled: too few detections")
                continue
            rows.append({**x.to_dict(), **{c: row[c] for c in config.JOINT_OUTPUTS},
                         "seed": sim_seed, "histories": histories})
            break
        else:
            raise SimulationError(f"Instance {i} could not be generated", {"attempts": max_attempts})

        if (i + 1) % 20 == 0:
            logger.info(f"Dataset progress: {i + 1}/{n} instances")

    frame = pd.DataFrame(rows)
    logger.info(f"Generated dataset with {len(frame)} instances")
    return TrainingDataset.from_frame(frame, box=box)


def _replicate(x: MaterialInput, data: NuclearData, duration: float, seed: int, kinds: Sequence[str],
               moment_options: Dict[str, float], workers: Optional[int]) -> List[float]:
    from backend.moments import observation_from_timelist

    timelist = simulate_timelist(x, data, duration, seed, workers=workers)
    values: List[float] = []
    for particle in kinds:
        obs = observation_from_timelist(timelist, particle, method="sequential", **moment_options)
        values.extend(float(v) for v in obs.values)
    return values


def observe_replicates(x: MaterialInput, n: int, data: NuclearData, duration: float, seed: int,
                       kind: str = "joint", base_window: Optional[float] = None,
                       n_doublings: int = 12, plateau_levels: int = config.PLATEAU_LEVELS,
                       plateau_tolerance: float = config.PLATEAU_TOLERANCE,
                       workers: Optional[int] = None, cache=None) -> np.ndarray:
    """
    Independent sequential-binning observations of a fixed material

    Args:
        x: Material input of the measured assembly
        n: Number of replicated measurements
        data: Nuclear data
        duration: Duration of each measurement (s)
        seed: Master seed
        kind: 'neutron', 'gamma' or 'joint'
        base_window: Base gate width T0 (defaults to 0.1/alpha)
        n_doublings: Number of gate doublings
        plateau_levels: Trailing levels of the plateau rule
        plateau_tolerance: Relative spread of the plateau rule
        workers: Simulation threads
        cache: Optional CacheManager memoising each replicate

    Returns:
        (n, 3) matrix, or (n, 6) for kind='joint'
    """
    if kind not in ("neutron", "gamma", "joint"):
        raise ParameterError(f"Unknown observation kind '{kind}'")
    kinds = ["neutron", "gamma"] if kind == "joint" else [kind]
    base_window = base_window or 0.1 / data.alpha

    options = {"base_window": base_window, "n_doublings": n_doublings, "plateau_levels": plateau_levels,
               "plateau_tolerance": plateau_tolerance}

    observations = []
    for r in range(n):
        args = (x, data, duration, stage_seed(seed, "replicate", r), kinds, options, workers)
        if cache is not None:
            fields = {"x": x.to_dict(), "data": data.to_dict(), "duration": duration, "seed": args[3],
                      "kinds": kinds, "options": options}
            observations.append(cache.memoize("replicate", fields, _replicate, *args))
        else:
            observations.append(_replicate(*args))
    logger.info(f"Observed {n} {kind} replicates of {x.to_dict()}")
    return np.asarray(observations, dtype=float)
