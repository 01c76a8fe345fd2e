"""
Nuclear Data
Fission multiplicity data and the JSON loader for the reference file
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

import config
from backend.exceptions import NuclearDataError
from utils.logger_setup import log_function_call

PMF_SUM_TOLERANCE = 1e-12
MOMENT_TOLERANCE = 1e-9

PMF_FIELDS = ("induced_pmf", "spont_pmf", "gamma_pmf", "gamma_spont_pmf")


def pmf_moments(pmf: Sequence[float]) -> Tuple[float, float, float]:
    """
    Mean and second/third Diven factors of a multiplicity distribution

    Args:
        pmf: Probabilities of 0, 1, 2, ... particles

    Returns:
        Tuple (mean, D2, D3) with D2 = E[v(v-1)]/E[v]^2 and D3 = E[v(v-1)(v-2)]/E[v]^3
    """
    p = np.asarray(pmf, dtype=float)
    nu = np.arange(p.size, dtype=float)
    mean = float(np.dot(nu, p))
    if mean <= 0.0:
        raise NuclearDataError("Multiplicity distribution has zero mean", {"pmf": list(p)})
    second = float(np.dot(nu * (nu - 1.0), p))
    third = float(np.dot(nu * (nu - 1.0) * (nu - 2.0), p))
    return mean, second / mean**2, third / mean**3


@dataclass(frozen=True)
class NuclearData:
    """Multiplicity data of induced and spontaneous fission"""

    nu_bar: float
    d2: float
    d3: float
    nu_bar_s: float
    d2_s: float
    d3_s: float
    alpha: float
    induced_pmf: Tuple[float, ...] = field(default=())
    spont_pmf: Tuple[float, ...] = field(default=())
    gamma_pmf: Tuple[float, ...] = field(default=())
    gamma_spont_pmf: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        for name in ("nu_bar", "nu_bar_s", "alpha"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise NuclearDataError(f"{name} must be finite and > 0", {name: value})
        for name in ("d2", "d3", "d2_s", "d3_s"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise NuclearDataError(f"{name} must be finite and >= 0", {name: value})

        for name in PMF_FIELDS:
            pmf = getattr(self, name)
            if not pmf:
                continue
            p = np.asarray(pmf, dtype=float)
            if np.any(p < 0.0) or not np.all(np.isfinite(p)):
                raise NuclearDataError(f"{name} has negative or non-finite entries")
            if abs(p.sum() - 1.0) > PMF_SUM_TOLERANCE:
                raise NuclearDataError(f"{name} does not sum to 1", {"sum": float(p.sum())})

        self._check_moments("induced_pmf", self.nu_bar, self.d2, self.d3)
        self._check_moments("spont_pmf", self.nu_bar_s, self.d2_s, self.d3_s)

    def _check_moments(self, name: str, nu_bar: float, d2: float, d3: float):
        pmf = getattr(self, name)
        if not pmf:
            return
        mean, d2_pmf, d3_pmf = pmf_moments(pmf)
        for label, stored, derived in (("mean", nu_bar, mean), ("D2", d2, d2_pmf), ("D3", d3, d3_pmf)):
            if abs(stored - derived) > MOMENT_TOLERANCE:
                raise NuclearDataError(
                    f"{name} {label} disagrees with the stored value",
                    {"stored": stored, "from_pmf": derived},
                )

    @classmethod
    def from_pmfs(cls, alpha: float, induced_pmf: Sequence[float], spont_pmf: Sequence[float],
                  gamma_pmf: Sequence[float] = (), gamma_spont_pmf: Sequence[float] = ()) -> "NuclearData":
        """Build a record whose scalar moments are derived from the neutron PMFs"""
        nu_bar, d2, d3 = pmf_moments(induced_pmf)
        nu_bar_s, d2_s, d3_s = pmf_moments(spont_pmf)
        return cls(
            nu_bar=nu_bar, d2=d2, d3=d3,
            nu_bar_s=nu_bar_s, d2_s=d2_s, d3_s=d3_s,
            alpha=float(alpha),
            induced_pmf=tuple(float(v) for v in induced_pmf),
            spont_pmf=tuple(float(v) for v in spont_pmf),
            gamma_pmf=tuple(float(v) for v in gamma_pmf),
            gamma_spont_pmf=tuple(float(v) for v in gamma_spont_pmf),
        )

    @classmethod
    def from_dict(cls, payload: Dict) -> "NuclearData":
        """
        Build a record from the JSON schema of the nuclear-data file

        Scalar moments absent from the payload are derived from the PMFs;
        present ones are validated against them.
        """
        known = {"schema_version", "description", "alpha", "nu_bar", "d2", "d3",
                 "nu_bar_s", "d2_s", "d3_s", *PMF_FIELDS}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise NuclearDataError("Unknown keys in nuclear data", {"keys": unknown})
        if "alpha" not in payload:
            raise NuclearDataError("Nuclear data requires 'alpha'")

        pmfs = {name: tuple(float(v) for v in payload.get(name, ())) for name in PMF_FIELDS}
        scalars = {}
        for prefix, pmf_name, suffix in (("", "induced_pmf", ""), ("_s", "spont_pmf", "_s")):
            keys = (f"nu_bar{suffix}", f"d2{suffix}", f"d3{suffix}")
            if pmfs[pmf_name]:
                derived = pmf_moments(pmfs[pmf_name])
                for key, value in zip(keys, derived):
                    scalars[key] = float(payload.get(key, value))
            else:
                missing = [key for key in keys if key not in payload]
                if missing:
                    raise NuclearDataError(f"{pmf_name} absent and scalars missing", {"keys": missing})
                scalars.update({key: float(payload[key]) for key in keys})

        return cls(alpha=float(payload["alpha"]), **scalars, **pmfs)

    def to_dict(self) -> Dict:
        """JSON-serialisable representation"""
        payload = {
            "schema_version": 1,
            "alpha": self.alpha,
            "nu_bar": self.nu_bar, "d2": self.d2, "d3": self.d3,
            "nu_bar_s": self.nu_bar_s, "d2_s": self.d2_s, "d3_s": self.d3_s,
        }
        for name in PMF_FIELDS:
            if getattr(self, name):
                payload[name] = list(getattr(self, name))
        return payload

    @property
    def has_pmfs(self) -> bool:
        return all(getattr(self, name) for name in PMF_FIELDS)

    @property
    def mu_bar(self) -> float:
        """Mean prompt gammas per induced fission"""
        return pmf_moments(self.gamma_pmf)[0]

    @property
    def mu_bar_s(self) -> float:
        """Mean prompt gammas per spontaneous fission"""
        return pmf_moments(self.gamma_spont_pmf)[0]


@log_function_call
def load_nuclear_data(path: Optional[Path] = None) -> NuclearData:
    """
    Load and validate a nuclear-data JSON file

    Args:
        path: File path (defaults to config.NUCLEAR_DATA_FILE)

    Returns:
        Validated NuclearData
    """
    path = Path(path or config.NUCLEAR_DATA_FILE)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise NuclearDataError(f"Cannot read nuclear data file {path}: {e}") from e
    data = NuclearData.from_dict(payload)
    logger.debug(f"Nuclear data loaded from {path} (nu_bar={data.nu_bar:.4f}, alpha={data.alpha})")
    return data
