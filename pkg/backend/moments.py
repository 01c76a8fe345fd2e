"""
Moments
Sequential and triggered binning estimators of count rates and Feynman moments
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

import config
from backend.exceptions import EstimationError
from backend.simulator import TimeList, parse_kind


@dataclass
class FeynmanCurve:
    """
    Feynman moments over doubling gate widths T = 2^k T0

    Attributes:
        base_window: T0 in seconds
        kind: Particle kind name
        rate: Total detections / duration
        gates: Gate widths per level
        y: Y(T) per level (NaN when undefined)
        x: X(T) per level (NaN when undefined)
        windows: Window count W per level
        low_statistics: Levels with W below the configured threshold
    """

    base_window: float
    kind: str
    rate: float
    gates: np.ndarray
    y: np.ndarray
    x: np.ndarray
    windows: np.ndarray
    low_statistics: np.ndarray

    def __len__(self) -> int:
        return int(self.gates.size)

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.y) & np.isfinite(self.x)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "gate_s": self.gates,
            "y": self.y,
            "x": self.x,
            "windows": self.windows,
            "low_statistics": self.low_statistics,
        })


@dataclass
class ObservationVector:
    """(R, Y_inf, X_inf) of one particle kind, or the 6-vector joint form"""

    values: np.ndarray
    kind: str
    converged: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = 6 if self.kind == "joint" else 3
        if self.values.shape != (expected,):
            raise EstimationError(f"{self.kind} observation must have {expected} entries",
                                  {"shape": self.values.shape})
        if not np.all(np.isfinite(self.values)):
            raise EstimationError("Observation has non-finite entries", {"values": self.values.tolist()})
        rates = self.values[[0, 3]] if self.kind == "joint" else self.values[[0]]
        if np.any(rates <= 0.0):
            raise EstimationError("Observed count rate must be > 0", {"values": self.values.tolist()})

    @classmethod
    def joint(cls, neutron: "ObservationVector", gamma: "ObservationVector") -> "ObservationVector":
        return cls(np.concatenate([neutron.values, gamma.values]), "joint",
                   neutron.converged and gamma.converged)


def _moments_of_counts(counts: np.ndarray) -> Tuple[float, float]:
    m1 = counts.mean()
    if m1 == 0.0:
        return np.nan, np.nan
    m2 = np.mean(counts**2)
    m3 = np.mean(counts**3)
    y = m2 / m1 - m1 - 1.0
    x = m3 / m1 + 2.0 * (m1**2 + 1.0) - 3.0 * (m2 / m1 + m2 - m1)
    return y, x


def feynman_from_counts(counts: Sequence[float]) -> Tuple[float, float]:
    """
    Sequential-binning estimates (Y, X) from per-window counts

    Returns (NaN, NaN) when the mean count is zero.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        raise EstimationError("No windows to estimate from")
    return _moments_of_counts(counts)


def sequential_binning(t: TimeList, kind, base_window: float, n_doublings: int,
                       low_statistics_windows: int = config.LOW_STATISTICS_WINDOWS) -> FeynmanCurve:
    """
    Feynman curve by sequential binning

    The recording is split into W = floor(duration/T0) contiguous windows;
    each doubling merges windows two by two, dropping an unpaired last one.

    Args:
        t: Time list
        kind: Particle kind
        base_window: T0 in seconds
        n_doublings: Number of doublings after the base level
        low_statistics_windows: Levels with fewer windows are flagged

    Returns:
        FeynmanCurve with n_doublings + 1 levels
    """
    if base_window <= 0.0:
        raise EstimationError("Base window must be > 0", {"base_window": base_window})
    if n_doublings < 0:
        raise EstimationError("n_doublings must be >= 0", {"n_doublings": n_doublings})

    code = parse_kind(kind)
    times, _ = t.select(code)
    if times.size == 0:
        raise EstimationError(f"Time list has no {kind} detections")

    n_windows = int(np.floor(t.duration / base_window))
    if n_windows == 0:
        raise EstimationError("Base window longer than the recording", {"base_window": base_window})
    index = np.floor(times / base_window).astype(np.int64)
    counts = np.bincount(index[index < n_windows], minlength=n_windows).astype(float)

    gates, ys, xs, windows = [], [], [], []
    for level in range(n_doublings + 1):
        if level:
            counts = counts[: 2 * (counts.size // 2)].reshape(-1, 2).sum(axis=1)
        if counts.size == 0:
            raise EstimationError(
                "No complete window at this gate width",
                {"level": level, "gate": base_window * 2**level},
            )
        y, x = _moments_of_counts(counts)
        gates.append(base_window * 2**level)
        ys.append(y)
        xs.append(x)
        windows.append(counts.size)

    windows = np.asarray(windows)
    curve = FeynmanCurve(
        base_window=float(base_window),
        kind=kind if isinstance(kind, str) else str(kind),
        rate=times.size / t.duration,
        gates=np.asarray(gates),
        y=np.asarray(ys),
        x=np.asarray(xs),
        windows=windows,
        low_statistics=windows < low_statistics_windows,
    )
    undefined = int(np.count_nonzero(~curve.defined))
    if undefined:
        logger.warning(f"{undefined} Feynman levels undefined (zero mean count)")
    return curve


def triggered_binning(t: TimeList, kind, T: float) -> Tuple[float, float, int]:
    """
    Filtered triggered binning

    A window (t_k, t_k + T] is opened at each detection and only later
    detections of the same history are counted. Simultaneous detections
    are ordered by the sort so that each pair is counted once.

    Args:
        t: Time list with history ids
        kind: Particle kind
        T: Window width in seconds

    Returns:
        Tuple (Y, X, N_det) with Y = 2 sum(n_k)/N_det and X = 3 sum(n_k(n_k-1))/N_det
    """
    if T <= 0.0:
        raise EstimationError("Window width must be > 0", {"T": T})
    times, histories = t.select(kind)
    n_det = int(times.size)
    if n_det == 0:
        raise EstimationError(f"Time list has no {kind} detections")
    if histories.size != n_det or np.any(histories < 0):
        raise EstimationError("Triggered binning requires history ids on every detection")

    order = np.lexsort((times, histories))
    times, histories = times[order], histories[order]

    followers = np.zeros(n_det, dtype=np.int64)
    active = np.arange(n_det - 1)
    offset = 1
    while active.size:
        partner = active + offset
        inside = partner < n_det
        active, partner = active[inside], partner[inside]
        hit = (histories[partner] == histories[active]) & (times[partner] - times[active] <= T)
        active = active[hit]
        followers[active] += 1
        offset += 1

    pairs = followers.sum()
    triples = np.sum(followers * (followers - 1))
    return 2.0 * pairs / n_det, 3.0 * triples / n_det, n_det


def extract_asymptote(c: FeynmanCurve, levels: int = config.PLATEAU_LEVELS,
                      tolerance: float = config.PLATEAU_TOLERANCE) -> Tuple[float, float, bool]:
    """
    Asymptotic (Y_inf, X_inf) from the plateau of a Feynman curve

    Scans trailing runs of `levels` usable levels from the longest gate
    backwards and returns the mean of the first run whose relative spread
    of Y is within `tolerance`. Without a plateau the mean of the last
    usable run is returned with converged=False.
    """
    if len(c) < 3:
        raise EstimationError("Plateau extraction needs at least 3 levels", {"levels": len(c)})
    usable = np.flatnonzero(c.defined & ~c.low_statistics)
    if usable.size == 0:
        raise EstimationError("Every Feynman level is low-statistics or undefined")
    if usable.size < levels:
        logger.warning(f"Only {usable.size} usable Feynman levels for a plateau of {levels}")
        return float(np.mean(c.y[usable])), float(np.mean(c.x[usable])), False

    for end in range(usable.size, levels - 1, -1):
        run = usable[end - levels:end]
        y = c.y[run]
        mean = np.mean(y)
        if mean != 0.0 and (y.max() - y.min()) / abs(mean) <= tolerance:
            return float(mean), float(np.mean(c.x[run])), True

    run = usable[-levels:]
    logger.warning(f"No {c.kind} plateau within {tolerance:.0%}; using the last {levels} levels")
    return float(np.mean(c.y[run])), float(np.mean(c.x[run])), False


def empirical_covariance(obs: Sequence[Union[ObservationVector, Sequence[float]]]) -> np.ndarray:
    """
    Unbiased sample covariance of replicated observations

    Args:
        obs: N >= 2 observations of equal dimension

    Returns:
        Symmetric d x d covariance (divisor N - 1)
    """
    rows = [o.values if isinstance(o, ObservationVector) else np.asarray(o, dtype=float) for o in obs]
    if len(rows) < 2:
        raise EstimationError("Empirical covariance needs at least 2 observations", {"n": len(rows)})
    if len({row.shape for row in rows}) != 1:
        raise EstimationError("Observations differ in dimension")
    matrix = np.atleast_2d(np.cov(np.vstack(rows), rowvar=False, ddof=1))
    return 0.5 * (matrix + matrix.T)


def observation_from_timelist(t: TimeList, kind: str, method: str = "sequential",
                              base_window: Optional[float] = None, n_doublings: int = 12,
                              plateau_levels: int = config.PLATEAU_LEVELS,
                              plateau_tolerance: float = config.PLATEAU_TOLERANCE,
                              long_window: Optional[float] = None,
                              low_statistics_windows: int = config.LOW_STATISTICS_WINDOWS) -> ObservationVector:
    """
    Reduce a time list to (R, Y_inf, X_inf) of one particle kind

    Args:
        t: Time list
        kind: 'neutron' or 'gamma'
        method: 'sequential' (plateau of the Feynman curve) or 'triggered'
        base_window: T0 of sequential binning
        n_doublings: Doublings of sequential binning
        plateau_levels: Trailing levels of the plateau rule
        plateau_tolerance: Relative spread of the plateau rule
        long_window: Window of triggered binning
        low_statistics_windows: Low-statistics threshold

    Returns:
        ObservationVector
    """
    rate = t.count_rate(kind)
    if method == "sequential":
        if base_window is None:
            raise EstimationError("Sequential binning needs a base window")
        curve = sequential_binning(t, kind, base_window, n_doublings, low_statistics_windows)
        y_inf, x_inf, converged = extract_asymptote(curve, plateau_levels, plateau_tolerance)
        return ObservationVector(np.array([rate, y_inf, x_inf]), kind, converged)
    if method == "triggered":
        if long_window is None:
            raise EstimationError("Triggered binning needs a window width")
        y_inf, x_inf, _ = triggered_binning(t, kind, long_window)
        return ObservationVector(np.array([rate, y_inf, x_inf]), kind)
    raise EstimationError(f"Unknown estimation method '{method}'")


def observations_from_timelists(timelists: Sequence[TimeList], kind: str, workers: Optional[int] = None,
                                **kwargs) -> List[ObservationVector]:
    """Reduce several time lists in parallel; kind 'joint' stacks neutron and gamma"""

    def reduce(t: TimeList) -> ObservationVector:
        if kind == "joint":
            return ObservationVector.joint(
                observation_from_timelist(t, "neutron", **kwargs),
                observation_from_timelist(t, "gamma", **kwargs),
            )
        return observation_from_timelist(t, kind, **kwargs)

    with ThreadPoolExecutor(max_workers=workers or config.WORKERS) as executor:
        return list(executor.map(reduce, timelists))
