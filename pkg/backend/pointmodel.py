"""
Point Model
Closed-form neutron count rate and Feynman moments of a subcritical point reactor
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from backend.exceptions import ParameterError
from backend.nuclear_data import NuclearData

ArrayLike = Union[float, np.ndarray]

# Below this value of alpha*T the time factors use their Taylor expansions
SMALL_ALPHA_T = 1e-4


@dataclass(frozen=True)
class NeutronPointParams:
    """
    Parameters of the neutron point model

    Attributes:
        k_p: Prompt multiplication factor, 0 < k_p < 1
        eps_f: Feynman efficiency (detections per induced fission)
        s_intensity: Source events per second
        x_s: Fraction of source neutrons born in spontaneous fissions
        data: Reference nuclear data
    """

    k_p: float
    eps_f: float
    s_intensity: float
    x_s: float
    data: NuclearData

    def __post_init__(self):
        _validate(np.asarray(self.k_p), np.asarray(self.eps_f),
                  np.asarray(self.s_intensity), np.asarray(self.x_s))

    @property
    def rho(self) -> float:
        """Prompt reactivity (k_p - 1) / k_p, strictly negative"""
        return (self.k_p - 1.0) / self.k_p


def _validate(k_p: np.ndarray, eps_f: np.ndarray, s_intensity: np.ndarray, x_s: np.ndarray):
    if not np.all(np.isfinite(k_p)) or np.any(k_p <= 0.0) or np.any(k_p >= 1.0):
        raise ParameterError("k_p must lie in (0, 1) (subcritical)", {"k_p": k_p.tolist()})
    if not np.all(np.isfinite(eps_f)) or np.any(eps_f <= 0.0):
        raise ParameterError("eps_f must be > 0", {"eps_f": eps_f.tolist()})
    if not np.all(np.isfinite(s_intensity)) or np.any(s_intensity <= 0.0):
        raise ParameterError("s_intensity must be > 0", {"s_intensity": s_intensity.tolist()})
    if not np.all(np.isfinite(x_s)) or np.any(x_s < 0.0) or np.any(x_s > 1.0):
        raise ParameterError("x_s must lie in [0, 1]", {"x_s": x_s.tolist()})


def _check_time(T: ArrayLike) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T)) or np.any(T < 0.0):
        raise ParameterError("Gate width T must be finite and >= 0", {"T": T.tolist()})
    return T


def _source_mix(x_s: ArrayLike, data: NuclearData) -> np.ndarray:
    mix = np.asarray(x_s + data.nu_bar_s - x_s * data.nu_bar_s, dtype=float)
    if np.any(mix <= 0.0):
        raise ParameterError("Degenerate source mix x_s + nu_s - x_s*nu_s <= 0", {"x_s": x_s})
    return mix


def _rate(k_p, eps_f, s_intensity, x_s, data: NuclearData) -> np.ndarray:
    rho = (k_p - 1.0) / k_p
    return -(1.0 / _source_mix(x_s, data)) * eps_f * data.nu_bar_s * s_intensity / (rho * data.nu_bar)


def _y_infinity(k_p, eps_f, x_s, data: NuclearData) -> np.ndarray:
    rho = (k_p - 1.0) / k_p
    correction = 1.0 - x_s * rho * data.nu_bar_s * data.d2_s / (data.nu_bar * data.d2)
    return eps_f * data.d2 / rho**2 * correction


def _x_infinity_terms(k_p, eps_f, x_s, data: NuclearData) -> Tuple[np.ndarray, np.ndarray]:
    rho = (k_p - 1.0) / k_p
    y_inf = _y_infinity(k_p, eps_f, x_s, data)
    correction = 1.0 - x_s * rho * (data.nu_bar_s / data.nu_bar) ** 3 * data.d3_s / data.d3
    pair_term = 3.0 * y_inf * eps_f * data.d2 / rho**2
    triple_term = -(eps_f**2) * data.d3 / rho**3 * correction
    return pair_term, triple_term


def _y_time_factor(alpha_t: np.ndarray) -> np.ndarray:
    """1 - (1 - e^-aT)/(aT)"""
    small = alpha_t < SMALL_ALPHA_T
    safe = np.where(small, 1.0, alpha_t)
    exact = 1.0 + np.expm1(-safe) / safe
    series = alpha_t / 2.0 - alpha_t**2 / 6.0
    return np.where(small, series, exact)


def _x_time_factors(alpha_t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(1 + e^-aT - 2(1 - e^-aT)/(aT), 1 - (3 - 4e^-aT + e^-2aT)/(2aT))"""
    small = alpha_t < SMALL_ALPHA_T
    safe = np.where(small, 1.0, alpha_t)
    one_minus = -np.expm1(-safe)
    decay = np.exp(-safe)
    first = 1.0 + decay - 2.0 * one_minus / safe
    # 3 - 4e + e^2 = (1 - e)(3 - e)
    second = 1.0 - one_minus * (3.0 - decay) / (2.0 * safe)
    first_series = alpha_t**2 / 6.0 - alpha_t**3 / 12.0
    second_series = alpha_t**2 / 3.0
    return np.where(small, first_series, first), np.where(small, second_series, second)


def _scalar_or_array(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


def count_rate(p: NeutronPointParams) -> float:
    """
    Average neutron count rate

    Args:
        p: Point-model parameters

    Returns:
        Detections per second, strictly positive
    """
    return float(_rate(p.k_p, p.eps_f, p.s_intensity, p.x_s, p.data))


def feynman_y(p: NeutronPointParams, T: ArrayLike) -> ArrayLike:
    """
    Second Feynman moment Y(T)

    Args:
        p: Point-model parameters
        T: Gate width(s) in seconds, T >= 0

    Returns:
        Y(T) with the same shape as T
    """
    T = _check_time(T)
    value = _y_infinity(p.k_p, p.eps_f, p.x_s, p.data) * _y_time_factor(p.data.alpha * T)
    return _scalar_or_array(value)


def feynman_x(p: NeutronPointParams, T: ArrayLike) -> ArrayLike:
    """
    Third Feynman moment X(T), including both time-dependent terms

    Args:
        p: Point-model parameters
        T: Gate width(s) in seconds, T >= 0

    Returns:
        X(T) with the same shape as T
    """
    T = _check_time(T)
    pair_term, triple_term = _x_infinity_terms(p.k_p, p.eps_f, p.x_s, p.data)
    first, second = _x_time_factors(p.data.alpha * T)
    return _scalar_or_array(pair_term * first + triple_term * second)


def asymptotics(p: NeutronPointParams) -> Tuple[float, float]:
    """
    Closed-form T -> infinity limits of the Feynman moments

    Returns:
        Tuple (Y_inf, X_inf)
    """
    pair_term, triple_term = _x_infinity_terms(p.k_p, p.eps_f, p.x_s, p.data)
    return float(_y_infinity(p.k_p, p.eps_f, p.x_s, p.data)), float(pair_term + triple_term)


def feynman_curve(p: NeutronPointParams, T_grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised (Y(T), X(T)) over a grid of gate widths"""
    T_grid = np.atleast_1d(np.asarray(T_grid, dtype=float))
    return np.asarray(feynman_y(p, T_grid)), np.asarray(feynman_x(p, T_grid))


def neutron_prior_mean(x: np.ndarray, data: NuclearData) -> np.ndarray:
    """
    Point-model map (k_p, eps_f, S, x_s) -> (R, Y_inf, X_inf)

    Accepts a single 4-vector or an (n, 4) matrix and returns a 3-vector
    or an (n, 3) matrix respectively.

    Args:
        x: Neutron sub-input(s)
        data: Reference nuclear data

    Returns:
        Point-model outputs
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != 4:
        raise ParameterError("Neutron input must have 4 components", {"shape": x.shape})
    k_p, eps_f, s_intensity, x_s = x.T
    _validate(k_p, eps_f, s_intensity, x_s)

    rate = _rate(k_p, eps_f, s_intensity, x_s, data)
    y_inf = _y_infinity(k_p, eps_f, x_s, data)
    pair_term, triple_term = _x_infinity_terms(k_p, eps_f, x_s, data)
    out = np.column_stack([rate, y_inf, pair_term + triple_term])
    return out[0] if single else out


def induced_fissions_per_source_neutron(k_p: ArrayLike, data: NuclearData) -> ArrayLike:
    """Expected induced fissions in the chain started by one source neutron"""
    return k_p / (data.nu_bar * (1.0 - k_p))


def capture_probability(k_p: ArrayLike, eps_f: ArrayLike, data: NuclearData) -> ArrayLike:
    """Probability that a neutron ends its life neither fissioning nor detected"""
    return 1.0 - k_p * (1.0 + eps_f) / data.nu_bar


def fission_gamma_floor(k_p: ArrayLike, x_s: ArrayLike, data: NuclearData) -> ArrayLike:
    """
    Prompt fission gammas created per source neutron

    Spontaneous fissions contribute x_s * mu_s / nu_s, the induced chain
    k_p * mu / (nu * (1 - k_p)). Any gamma multiplication above this floor
    is carried by capture gammas.
    """
    return x_s * data.mu_bar_s / data.nu_bar_s + data.mu_bar * induced_fissions_per_source_neutron(k_p, data)


def capture_gamma_yield(k_p: ArrayLike, eps_f: ArrayLike, x_s: ArrayLike, m_gamma: ArrayLike,
                        data: NuclearData) -> ArrayLike:
    """
    Mean capture gammas per captured neutron reproducing a gamma multiplication

    Returns:
        Yield c solving M_gamma = floor + c * p_c / (1 - k_p); negative when
        M_gamma lies below the fission floor
    """
    floor = fission_gamma_floor(k_p, x_s, data)
    captured = capture_probability(k_p, eps_f, data) / (1.0 - k_p)
    return (m_gamma - floor) / captured


def gamma_multiplication(k_p: ArrayLike, eps_f: ArrayLike, x_s: ArrayLike, capture_yield: ArrayLike,
                         data: NuclearData) -> ArrayLike:
    """Gammas created per source neutron for a given capture-gamma yield"""
    captured = capture_probability(k_p, eps_f, data) / (1.0 - k_p)
    return fission_gamma_floor(k_p, x_s, data) + capture_yield * captured
