"""
Metrics
Validation of surrogate predictions on a held-out test set
"""

from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.special import gammaincinv

from backend.dataset import TrainingDataset
from backend.exceptions import EstimationError, SurrogateError

DEFAULT_ALPHAS = tuple(np.round(np.arange(0.05, 1.0, 0.05), 2))
JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)

TestSet = Union[TrainingDataset, Tuple[np.ndarray, np.ndarray]]


def _unpack(test: TestSet) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(test, TrainingDataset):
        return test.inputs, test.outputs
    inputs, outputs = test
    return np.atleast_2d(np.asarray(inputs, dtype=float)), np.atleast_2d(np.asarray(outputs, dtype=float))


def _predict_all(gp, X: np.ndarray, include_noise: bool) -> Tuple[np.ndarray, np.ndarray]:
    if hasattr(gp, "predict_batch"):
        return gp.predict_batch(X, include_noise=include_noise)
    means, covs = zip(*(gp.predict(x) for x in X))
    return np.asarray(means), np.asarray([np.atleast_2d(c) for c in covs])


def chi2_quantile(alpha: float, dof: int) -> float:
    """Quantile of the chi-squared distribution by regularised incomplete gamma inversion"""
    if not 0.0 < alpha < 1.0:
        raise EstimationError("Confidence level must lie in (0, 1)", {"alpha": alpha})
    return float(2.0 * gammaincinv(0.5 * dof, alpha))


def regression_metrics(gp, test: TestSet) -> pd.DataFrame:
    """
    NMAE, NRMSE and Q2 per output

    NMAE and NRMSE are normalised by the mean of the test outputs; Q2 is
    one minus the residual sum of squares over the total sum of squares.

    Returns:
        Frame indexed by output with columns nmae, nrmse, q2
    """
    X, Z = _unpack(test)
    if X.shape[0] < 2:
        raise EstimationError("Regression metrics need at least 2 test points", {"n": X.shape[0]})
    M = gp.predict_mean(X) if hasattr(gp, "predict_mean") else _predict_all(gp, X, False)[0]
    names = list(getattr(gp, "output_names", [f"y{j}" for j in range(Z.shape[1])]))

    z_mean = Z.mean(axis=0)
    if np.any(z_mean == 0.0):
        zero = [names[j] for j in np.flatnonzero(z_mean == 0.0)]
        raise EstimationError("Test outputs have zero mean", {"outputs": zero})
    residual = M - Z
    frame = pd.DataFrame({
        "nmae": np.mean(np.abs(residual), axis=0) / z_mean,
        "nrmse": np.sqrt(np.mean(residual**2, axis=0)) / z_mean,
        "q2": 1.0 - np.sum(residual**2, axis=0) / np.sum((Z - z_mean) ** 2, axis=0),
    }, index=names)
    frame.index.name = "output"
    return frame


def mahalanobis_squared(residual: np.ndarray, covariance: np.ndarray) -> float:
    scale = float(np.mean(np.abs(np.diag(covariance)))) or 1.0
    for level in JITTER_LEVELS:
        try:
            L = np.linalg.cholesky(covariance + level * scale * np.eye(covariance.shape[0]))
        except np.linalg.LinAlgError:
            continue
        z = np.linalg.solve(L, residual)
        return float(z @ z)
    raise SurrogateError("Predictive covariance is singular after jitter escalation")


def coverage_curve(gp, test: TestSet, alphas: Sequence[float] = DEFAULT_ALPHAS) -> pd.DataFrame:
    """
    Coverage probabilities of the predictive ellipsoids

    C_p(alpha) is the fraction of test outputs z with
    (z - m(x))^T C(x)^-1 (z - m(x)) <= q_alpha, q_alpha the chi-squared
    quantile at d degrees of freedom. C(x) includes the output noise.

    Returns:
        Frame with columns alpha and coverage
    """
    X, Z = _unpack(test)
    means, covs = _predict_all(gp, X, include_noise=True)
    distances = np.array([mahalanobis_squared(z - m, c) for z, m, c in zip(Z, means, covs)])
    d = Z.shape[1]
    coverage = [float(np.mean(distances <= chi2_quantile(a, d))) for a in alphas]
    return pd.DataFrame({"alpha": np.asarray(alphas, dtype=float), "coverage": coverage})


def mcd(gp, test: Union[TestSet, np.ndarray]) -> float:
    """Mean over the test inputs of det C(x)"""
    X = test if isinstance(test, np.ndarray) else _unpack(test)[0]
    X = np.atleast_2d(X)
    if X.shape[0] == 0:
        raise EstimationError("MCD needs at least one test input")
    _, covs = _predict_all(gp, X, include_noise=False)
    return float(np.mean(np.linalg.det(covs)))


@dataclass
class ValidationReport:
    """
    Validation of one surrogate on a test set

    Attributes:
        kind: Surrogate label
        n_test: Test-set size
        metrics: Per-output nmae, nrmse, q2
        coverage: Coverage curve (alpha, coverage)
        mcd: Mean covariance determinant
    """

    kind: str
    n_test: int
    metrics: pd.DataFrame
    coverage: pd.DataFrame
    mcd: float
    extra: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "n_test": self.n_test,
            "metrics": self.metrics.to_dict(orient="index"),
            "coverage": self.coverage.to_dict(orient="list"),
            "mcd": self.mcd,
            **self.extra,
        }

    @staticmethod
    def compare(old: "ValidationReport", new: "ValidationReport") -> float:
        """MCD ratio old / new"""
        if new.mcd <= 0.0:
            raise EstimationError("New MCD must be > 0", {"mcd": new.mcd})
        return old.mcd / new.mcd


def validate_surrogate(gp, test: TestSet, alphas: Sequence[float] = DEFAULT_ALPHAS) -> ValidationReport:
    """Regression metrics, coverage curve and MCD of a surrogate"""
    X, _ = _unpack(test)
    report = ValidationReport(
        kind=getattr(gp, "kind", "custom"),
        n_test=int(X.shape[0]),
        metrics=regression_metrics(gp, test),
        coverage=coverage_curve(gp, test, alphas),
        mcd=mcd(gp, X),
    )
    logger.info(f"Validated {report.kind} on {report.n_test} points: "
                f"min Q2 {report.metrics['q2'].min():.4f}, MCD {report.mcd:.4e}")
    return report
