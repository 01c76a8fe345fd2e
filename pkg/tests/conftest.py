"""
Shared fixtures: reference nuclear data, toy forward models and small datasets
"""

import numpy as np
import pytest
from loguru import logger

import config
from backend.dataset import DesignBox, TrainingDataset
from backend.nuclear_data import NuclearData, load_nuclear_data


@pytest.fixture(autouse=True)
def quiet_logs():
    logger.remove()
    yield
    logger.remove()


@pytest.fixture
def isolated_config(tmp_path, monkeypatch):
    """Logs, cache and outputs under a temporary directory, cache disabled"""
    monkeypatch.setattr(config, "LOGS_DIR", tmp_path / "logs")
    monkeypatch.setattr(config, "LOG_FILE", tmp_path / "logs" / "fissid.log")
    monkeypatch.setattr(config, "CACHE_DIR", tmp_path / "cache")
    monkeypatch.setattr(config, "CACHE_ENABLED", False)
    monkeypatch.setattr(config, "WORKERS", 2)
    return tmp_path


@pytest.fixture(scope="session")
def nuclear():
    return load_nuclear_data(config.NUCLEAR_DATA_FILE)


@pytest.fixture(scope="session")
def scalar_data():
    """Scalar-only record used by the closed-form oracle values"""
    return NuclearData(nu_bar=2.43, d2=0.8, d3=0.5, nu_bar_s=2.16, d2_s=0.8, d3_s=0.5, alpha=5000.0)


class LinearModel:
    """m(x) = A x + b with a constant predictive covariance"""

    def __init__(self, A, b=None, cov=None, box=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.zeros(self.A.shape[0]) if b is None else np.asarray(b, dtype=float)
        self.cov = np.zeros((self.A.shape[0],) * 2) if cov is None else np.atleast_2d(np.asarray(cov, dtype=float))
        self.box = box

    def predict(self, x, include_noise=False):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.A @ x + self.b, self.cov.copy()

    def predict_mean(self, X):
        return np.atleast_2d(X) @ self.A.T + self.b


@pytest.fixture
def linear_model():
    return LinearModel


def smooth_outputs(X: np.ndarray) -> np.ndarray:
    """Two smooth responses over the unit square"""
    return np.column_stack([
        1.0 + np.sin(3.0 * X[:, 0]) + X[:, 1] ** 2,
        2.0 + np.cos(2.0 * X[:, 1]) * X[:, 0],
    ])


@pytest.fixture
def smooth_dataset():
    box = DesignBox(("a", "b"), (0.0, 0.0), (1.0, 1.0))
    rng = np.random.default_rng(3)
    X = rng.random((30, 2))
    return TrainingDataset(X, smooth_outputs(X), ("a", "b"), ("f", "g"), box)
