"""
Surrogate
Multi-output Gaussian-process regression with a linear model of coregionalization
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from sklearn.gaussian_process.kernels import Matern
from sklearn.preprocessing import MinMaxScaler, StandardScaler

import config
from backend.dataset import DUPLICATE_TOLERANCE, DesignBox, TrainingDataset
from backend.exceptions import SurrogateError
from backend.nuclear_data import NuclearData
from backend.pointmodel import neutron_prior_mean

SERIALIZATION_VERSION = 1
MATERN_NU = 2.5
JITTER_LEVELS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
PREDICT_CHUNK = 256

SURROGATE_KINDS = {
    "NSM": (tuple(config.NEUTRON_INPUTS), tuple(config.NEUTRON_OUTPUTS), 3),
    "GSM": (tuple(config.GAMMA_INPUTS), tuple(config.GAMMA_OUTPUTS), 3),
    "JSM": (tuple(config.JOINT_INPUTS), tuple(config.JOINT_OUTPUTS), 4),
}


@dataclass(frozen=True)
class GPConfig:
    """
    Training settings of a surrogate

    Attributes:
        n_latent: Number of latent GPs Q (None: default of the surrogate kind)
        n_restarts: Optimizer starts (the first from the default initialisation)
        length_scale_bounds: Bounds of the length-scales in unit-box coordinates
        mixing_bound: Symmetric bound of the mixing coefficients
        noise_bounds: Bounds of the per-output noise variance (standardized units)
        fixed_noise: Noise variance held fixed instead of optimized
        optimize: Optimize hyperparameters (False keeps the initial values)
        max_iter: L-BFGS-B iteration budget per start
        prior_mean: 'auto' (point model for neutron outputs), 'point-model' or 'zero'
        seed: Seed of the random starts
    """

    n_latent: Optional[int] = None
    n_restarts: int = 5
    length_scale_bounds: Tuple[float, float] = (1e-2, 1e2)
    mixing_bound: float = 10.0
    noise_bounds: Tuple[float, float] = (1e-8, 1.0)
    fixed_noise: Optional[float] = None
    optimize: bool = True
    max_iter: int = 500
    prior_mean: str = "auto"
    seed: int = 0


def _cholesky(K: np.ndarray) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor with jitter escalation"""
    scale = float(np.mean(np.diag(K)))
    for level in JITTER_LEVELS:
        jitter = level * scale
        try:
            L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True, check_finite=True)
            return L, jitter
        except (LinAlgError, ValueError):
            continue
    raise LinAlgError("Kernel matrix not positive definite after jitter escalation")


class LmcLikelihood:
    """
    Exact log-marginal likelihood of an LMC model and its gradient

    K = sum_q kron(a_q a_q^T, K_q) + kron(diag(noise), I) with unit-variance
    Matern latent kernels; the hyperparameter vector stacks log length-scales
    (Q x p), the mixing matrix (d x Q) and log noise variances (d).
    """

    def __init__(self, U: np.ndarray, Y: np.ndarray, n_latent: int, fixed_noise: Optional[float] = None):
        self.U = np.asarray(U, dtype=float)
        self.Y = np.asarray(Y, dtype=float)
        self.n, self.p = self.U.shape
        self.d = self.Y.shape[1]
        self.Q = int(n_latent)
        self.fixed_noise = fixed_noise
        self.y = self.Y.T.ravel()

    @property
    def n_params(self) -> int:
        return self.Q * self.p + self.d * self.Q + (0 if self.fixed_noise is not None else self.d)

    def unpack(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        n_ls = self.Q * self.p
        length_scales = np.exp(theta[:n_ls]).reshape(self.Q, self.p)
        mixing = theta[n_ls:n_ls + self.d * self.Q].reshape(self.d, self.Q)
        if self.fixed_noise is not None:
            noise = np.full(self.d, float(self.fixed_noise))
        else:
            noise = np.exp(theta[n_ls + self.d * self.Q:])
        return length_scales, mixing, noise

    def pack(self, length_scales: np.ndarray, mixing: np.ndarray, noise: np.ndarray) -> np.ndarray:
        parts = [np.log(np.asarray(length_scales, dtype=float)).ravel(), np.asarray(mixing, dtype=float).ravel()]
        if self.fixed_noise is None:
            parts.append(np.log(np.asarray(noise, dtype=float)))
        return np.concatenate(parts)

    def bounds(self, cfg: GPConfig) -> List[Tuple[float, float]]:
        ls = [tuple(np.log(cfg.length_scale_bounds))] * (self.Q * self.p)
        mix = [(-cfg.mixing_bound, cfg.mixing_bound)] * (self.d * self.Q)
        noise = [] if self.fixed_noise is not None else [tuple(np.log(cfg.noise_bounds))] * self.d
        return ls + mix + noise

    def latent_kernels(self, length_scales: np.ndarray, eval_gradient: bool = False):
        kernels = []
        for q in range(self.Q):
            kernel = Matern(length_scale=length_scales[q], nu=MATERN_NU)
            kernels.append(kernel(self.U, eval_gradient=eval_gradient))
        return kernels

    def covariance(self, theta: np.ndarray, eval_gradient: bool = False):
        length_scales, mixing, noise = self.unpack(theta)
        latent = self.latent_kernels(length_scales, eval_gradient)
        K = np.zeros((self.d * self.n, self.d * self.n))
        for q in range(self.Q):
            K_q = latent[q][0] if eval_gradient else latent[q]
            K += np.kron(np.outer(mixing[:, q], mixing[:, q]), K_q)
        K[np.diag_indices_from(K)] += np.repeat(noise, self.n)
        return K, latent

    def __call__(self, theta: np.ndarray, eval_gradient: bool = True):
        """
        Log-marginal likelihood at theta

        Returns:
            lml, or (lml, gradient) when eval_gradient is True
        """
        K, latent = self.covariance(theta, eval_gradient)
        L, _ = _cholesky(K)
        alpha = cho_solve((L, True), self.y)
        lml = (-0.5 * self.y @ alpha - np.log(np.diag(L)).sum()
               - 0.5 * self.y.size * np.log(2.0 * np.pi))
        if not eval_gradient:
            return lml

        _, mixing, noise = self.unpack(theta)
        W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(K.shape[0]))
        W4 = W.reshape(self.d, self.n, self.d, self.n)

        grad_ls = np.zeros((self.Q, self.p))
        grad_mix = np.zeros((self.d, self.Q))
        for q in range(self.Q):
            K_q, dK_q = latent[q]
            a_q = mixing[:, q]
            M_q = np.einsum("ik,iakb->ab", np.outer(a_q, a_q), W4)
            grad_ls[q] = 0.5 * np.einsum("ab,abj->j", M_q, dK_q)
            S_q = np.einsum("iakb,ab->ik", W4, K_q)
            grad_mix[:, q] = S_q @ a_q

        parts = [grad_ls.ravel(), grad_mix.ravel()]
        if self.fixed_noise is None:
            parts.append(0.5 * noise * np.einsum("iaia->i", W4))
        return lml, np.concatenate(parts)


class StructuralMean:
    """Prior mean before standardization: point model on neutron outputs, 0 elsewhere"""

    def __init__(self, input_names: Sequence[str], output_names: Sequence[str], kind: str = "zero",
                 nuclear: Optional[NuclearData] = None):
        if kind not in ("point-model", "zero"):
            raise SurrogateError(f"Unknown prior mean '{kind}'")
        self.kind = kind
        self.nuclear = nuclear
        self.n_outputs = len(output_names)
        self.columns: Optional[Tuple[List[int], List[int], List[int]]] = None
        if kind == "point-model":
            if nuclear is None:
                raise SurrogateError("Point-model prior mean needs nuclear data")
            names = list(input_names)
            if not all(name in names for name in config.NEUTRON_INPUTS):
                raise SurrogateError("Point-model prior mean needs the neutron inputs", {"inputs": names})
            outputs = [i for i, name in enumerate(output_names) if name in config.NEUTRON_OUTPUTS]
            if not outputs:
                raise SurrogateError("Point-model prior mean needs neutron outputs")
            self.columns = (
                [names.index(name) for name in config.NEUTRON_INPUTS],
                outputs,
                [config.NEUTRON_OUTPUTS.index(output_names[i]) for i in outputs],
            )

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        mean = np.zeros((X.shape[0], self.n_outputs))
        if self.columns is not None:
            inputs, outputs, point_index = self.columns
            mean[:, outputs] = neutron_prior_mean(X[:, inputs], self.nuclear)[:, point_index]
        return mean


def _standardize(dataset: TrainingDataset, structural: StructuralMean):
    """Fitted input/output scalers and the standardized training matrices"""
    input_scaler = MinMaxScaler().fit(dataset.box.corners())
    residuals = dataset.outputs - structural(dataset.inputs)
    output_scaler = StandardScaler().fit(residuals)
    return input_scaler, output_scaler, input_scaler.transform(dataset.inputs), output_scaler.transform(residuals)


class GPSurrogate:
    """Trained LMC Gaussian process over a design box"""

    def __init__(self, dataset: TrainingDataset, theta: np.ndarray, n_latent: int,
                 prior_mean: str = "zero", nuclear: Optional[NuclearData] = None,
                 fixed_noise: Optional[float] = None, kind: str = "custom"):
        """
        Initialize a surrogate from fixed hyperparameters

        Args:
            dataset: Training pairs
            theta: Packed hyperparameters (see LmcLikelihood)
            n_latent: Number of latent GPs
            prior_mean: 'point-model' or 'zero'
            nuclear: Reference nuclear data of the point-model prior mean
            fixed_noise: Noise variance held fixed during training
            kind: Surrogate label (NSM, GSM, JSM or custom)
        """
        if len(dataset) < dataset.n_outputs:
            raise SurrogateError("Dataset needs at least as many rows as outputs",
                                 {"n": len(dataset), "d": dataset.n_outputs})
        self.dataset = dataset
        self.kind = kind
        self.n_latent = int(n_latent)
        self.prior_mean_kind = prior_mean
        self.nuclear = nuclear
        self.fixed_noise = fixed_noise

        self._structural_mean = StructuralMean(dataset.input_names, dataset.output_names, prior_mean, nuclear)
        self.input_scaler, self.output_scaler, U, Y = _standardize(dataset, self._structural_mean)
        self.likelihood = LmcLikelihood(U, Y, self.n_latent, fixed_noise)

        self.theta = np.asarray(theta, dtype=float)
        if self.theta.size != self.likelihood.n_params:
            raise SurrogateError("Hyperparameter vector has the wrong size",
                                 {"expected": self.likelihood.n_params, "got": self.theta.size})
        self.length_scales, self.mixing, self.noise = self.likelihood.unpack(self.theta)
        self._factorize()
        logger.info(f"GP surrogate {kind} initialized (n={len(dataset)}, d={dataset.n_outputs}, Q={self.n_latent})")

    def _factorize(self):
        K, _ = self.likelihood.covariance(self.theta)
        try:
            self._L, self._jitter = _cholesky(K)
        except LinAlgError as e:
            raise SurrogateError(
                "Kernel matrix not positive definite after jitter escalation",
                {"length_scales": self.length_scales.tolist(), "noise": self.noise.tolist()},
            ) from e
        self._alpha = cho_solve((self._L, True), self.likelihood.y)
        alpha = self._alpha.reshape(self.dataset.n_outputs, -1)
        # v_q[b] = sum_k A_kq alpha[k, b]
        self._mean_weights = self.mixing.T @ alpha
        if self._jitter:
            logger.warning(f"Surrogate {self.kind} factorized with jitter {self._jitter:.2e}")

    # --- properties -------------------------------------------------------------

    @property
    def input_names(self) -> Tuple[str, ...]:
        return self.dataset.input_names

    @property
    def output_names(self) -> Tuple[str, ...]:
        return self.dataset.output_names

    @property
    def box(self) -> DesignBox:
        return self.dataset.box

    @property
    def n_outputs(self) -> int:
        return self.dataset.n_outputs

    def log_marginal_likelihood(self, theta: Optional[np.ndarray] = None, eval_gradient: bool = False):
        """Log-marginal likelihood of the standardized training data"""
        return self.likelihood(self.theta if theta is None else theta, eval_gradient)

    # --- prediction -------------------------------------------------------------

    def _check_inputs(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.input_names):
            raise SurrogateError("Input dimension mismatch", {"expected": len(self.input_names), "got": X.shape[1]})
        if not np.all(np.isfinite(X)):
            raise SurrogateError("Non-finite surrogate input", {"x": X.tolist()[:3]})
        outside = ~self.box.contains(X)
        if np.any(outside):
            logger.warning(f"{int(np.count_nonzero(outside))} prediction inputs outside the design box")
        return X

    def _cross_kernels(self, U: np.ndarray) -> np.ndarray:
        """Latent cross-covariances k_q(U, U_train), shape (Q, m, n)"""
        return np.stack([
            Matern(length_scale=self.length_scales[q], nu=MATERN_NU)(U, self.likelihood.U)
            for q in range(self.n_latent)
        ])

    def prior_mean(self, X: np.ndarray) -> np.ndarray:
        """Mean far from every training point"""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._structural_mean(X) + self.output_scaler.mean_

    def prior_covariance(self) -> np.ndarray:
        scale = self.output_scaler.scale_
        return np.outer(scale, scale) * (self.mixing @ self.mixing.T)

    def predict_mean(self, X: np.ndarray) -> np.ndarray:
        """Predictive means of a batch, shape (m, d)"""
        X = self._check_inputs(X)
        means = []
        for start in range(0, X.shape[0], 4 * PREDICT_CHUNK):
            chunk = X[start:start + 4 * PREDICT_CHUNK]
            k = self._cross_kernels(self.input_scaler.transform(chunk))
            latent = np.einsum("qmb,qb->mq", k, self._mean_weights)
            standardized = latent @ self.mixing.T
            means.append(self._structural_mean(chunk) + self.output_scaler.inverse_transform(standardized))
        return np.vstack(means)

    def predict_batch(self, X: np.ndarray, include_noise: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """
        Predictive means (m, d) and covariances (m, d, d) of a batch

        Args:
            X: Inputs, shape (m, p)
            include_noise: Add the fitted output noise (distribution of a
                simulated output rather than of the latent map)
        """
        X = self._check_inputs(X)
        d, n = self.n_outputs, self.likelihood.n
        scale = self.output_scaler.scale_
        B = np.einsum("iq,kq->qik", self.mixing, self.mixing)
        prior = B.sum(axis=0)
        if include_noise:
            prior = prior + np.diag(self.noise)

        means, covs = [], []
        for start in range(0, X.shape[0], PREDICT_CHUNK):
            chunk = X[start:start + PREDICT_CHUNK]
            k = self._cross_kernels(self.input_scaler.transform(chunk))
            m = chunk.shape[0]
            # cross[m, i, (k, b)] = sum_q A_iq A_kq k_q(x_m, b)
            cross = np.einsum("qik,qmb->mikb", B, k).reshape(m, d, d * n)
            mean_std = cross @ self._alpha
            V = solve_triangular(self._L, cross.reshape(m * d, d * n).T, lower=True)
            V = V.reshape(d * n, m, d)
            reduction = np.einsum("nmi,nmk->mik", V, V)
            cov_std = prior[None, :, :] - reduction
            cov_std = 0.5 * (cov_std + np.swapaxes(cov_std, 1, 2))
            means.append(self._structural_mean(chunk) + self.output_scaler.inverse_transform(mean_std))
            covs.append(cov_std * np.outer(scale, scale)[None, :, :])
        return np.vstack(means), np.concatenate(covs, axis=0)

    def predict(self, x: np.ndarray, include_noise: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """
        Gaussian predictive distribution at one input

        Args:
            x: Input vector of length p
            include_noise: Add the fitted output noise

        Returns:
            Tuple (mean d-vector, covariance d x d)
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise SurrogateError("predict expects a single input vector", {"shape": x.shape})
        means, covs = self.predict_batch(x[None, :], include_noise)
        return means[0], covs[0]

    def log_det_cov(self, X: np.ndarray, include_noise: bool = False) -> np.ndarray:
        """log det C(x) per input; -inf where C(x) is numerically singular"""
        _, covs = self.predict_batch(X, include_noise)
        sign, logdet = np.linalg.slogdet(covs)
        return np.where(sign > 0, logdet, -np.inf)

    # --- persistence ------------------------------------------------------------

    def to_dict(self) -> Dict:
        return {
            "version": SERIALIZATION_VERSION,
            "kind": self.kind,
            "n_latent": self.n_latent,
            "prior_mean": self.prior_mean_kind,
            "fixed_noise": self.fixed_noise,
            "input_names": list(self.input_names),
            "output_names": list(self.output_names),
            "box": {name: list(bounds) for name, bounds in self.box.to_dict().items()},
            "theta": self.theta.tolist(),
            "length_scales": self.length_scales.tolist(),
            "mixing": self.mixing.tolist(),
            "noise": self.noise.tolist(),
            "output_mean": self.output_scaler.mean_.tolist(),
            "output_scale": self.output_scaler.scale_.tolist(),
            "nuclear_data": self.nuclear.to_dict() if self.nuclear is not None else None,
            "dataset_hash": self.dataset.content_hash(),
        }

    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _resolve_prior_mean(cfg: GPConfig, dataset: TrainingDataset) -> str:
    if cfg.prior_mean != "auto":
        return cfg.prior_mean
    has_neutron = all(name in dataset.input_names for name in config.NEUTRON_INPUTS)
    has_outputs = any(name in config.NEUTRON_OUTPUTS for name in dataset.output_names)
    return "point-model" if has_neutron and has_outputs else "zero"


def _initial_theta(likelihood: LmcLikelihood, cfg: GPConfig, rng: np.random.Generator, start: int) -> np.ndarray:
    Q, p, d = likelihood.Q, likelihood.p, likelihood.d
    if start == 0:
        length_scales = np.full((Q, p), 0.5)
        mixing = np.full((d, Q), 1.0 / np.sqrt(Q)) * np.linspace(1.0, 0.5, Q)[None, :]
        mixing[:, 1:] *= np.where(np.arange(d)[:, None] % 2 == 0, 1.0, -1.0)
        noise = np.full(d, 1e-2)
    else:
        length_scales = np.exp(rng.uniform(np.log(0.1), np.log(2.0), size=(Q, p)))
        mixing = rng.normal(scale=1.0 / np.sqrt(Q), size=(d, Q))
        noise = np.exp(rng.uniform(np.log(1e-4), np.log(1e-1), size=d))
    lo, hi = np.log(cfg.noise_bounds)
    noise = np.exp(np.clip(np.log(noise), lo, hi))
    return likelihood.pack(length_scales, np.clip(mixing, -cfg.mixing_bound, cfg.mixing_bound), noise)


def train_gp(data: TrainingDataset, cfg: GPConfig = GPConfig(), nuclear: Optional[NuclearData] = None,
             kind: str = "custom", warm_start: Optional[np.ndarray] = None,
             workers: Optional[int] = None) -> GPSurrogate:
    """
    Fit an LMC surrogate by multi-start L-BFGS-B on the exact log-marginal likelihood

    Args:
        data: Training dataset
        cfg: Training settings
        nuclear: Reference nuclear data (point-model prior mean)
        kind: Surrogate label; NSM/GSM/JSM select the default latent count
        warm_start: Hyperparameters used as the first start
        workers: Threads running optimizer starts

    Returns:
        Fitted GPSurrogate
    """
    n_latent = cfg.n_latent or SURROGATE_KINDS.get(kind, (None, None, data.n_outputs))[2]
    prior_mean = _resolve_prior_mean(cfg, data)
    structural = StructuralMean(data.input_names, data.output_names, prior_mean, nuclear)
    _, _, U, Y = _standardize(data, structural)
    likelihood = LmcLikelihood(U, Y, n_latent, cfg.fixed_noise)
    rng = np.random.default_rng(cfg.seed)
    starts = [_initial_theta(likelihood, cfg, rng, s) for s in range(max(cfg.n_restarts, 1))]
    if warm_start is not None:
        starts[0] = np.asarray(warm_start, dtype=float)
    if not cfg.optimize:
        return GPSurrogate(data, starts[0], n_latent, prior_mean, nuclear, cfg.fixed_noise, kind)

    bounds = likelihood.bounds(cfg)
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])

    def objective(theta):
        try:
            lml, grad = likelihood(theta, eval_gradient=True)
        except LinAlgError:
            return np.inf, np.zeros_like(theta)
        if not np.isfinite(lml) or not np.all(np.isfinite(grad)):
            return np.inf, np.zeros_like(theta)
        return -lml, -grad

    def run(start: np.ndarray):
        start = np.clip(start, lower, upper)
        if not np.isfinite(objective(start)[0]):
            return None
        result = minimize(objective, start, jac=True, method="L-BFGS-B", bounds=bounds,
                          options={"maxiter": cfg.max_iter})
        if not np.isfinite(result.fun):
            return None
        return result

    logger.info(f"Training {kind} surrogate: n={len(data)}, d={data.n_outputs}, Q={n_latent}, "
                f"{len(starts)} starts")
    with ThreadPoolExecutor(max_workers=workers or config.WORKERS) as executor:
        results = list(executor.map(run, starts))

    finished = [(i, r) for i, r in enumerate(results) if r is not None]
    failed = len(results) - len(finished)
    if failed:
        logger.warning(f"{failed} optimizer starts hit a non-finite objective")
    if not finished:
        raise SurrogateError("Every optimizer start failed", {"starts": len(starts), "kind": kind})

    best_index, best = min(finished, key=lambda item: (item[1].fun, item[0]))
    logger.info(f"{kind} surrogate trained: log-marginal likelihood {-best.fun:.3f} (start {best_index})")
    return GPSurrogate(data, best.x, n_latent, prior_mean, nuclear, cfg.fixed_noise, kind)


def train_surrogate_kind(dataset: TrainingDataset, kind: str, cfg: GPConfig = GPConfig(),
                         nuclear: Optional[NuclearData] = None, **kwargs) -> GPSurrogate:
    """Train NSM, GSM or JSM on the matching projection of a joint dataset"""
    if kind not in SURROGATE_KINDS:
        raise SurrogateError(f"Unknown surrogate kind '{kind}'", {"allowed": list(SURROGATE_KINDS)})
    inputs, outputs, _ = SURROGATE_KINDS[kind]
    return train_gp(dataset.select(inputs, outputs), cfg, nuclear, kind=kind, **kwargs)


def add_points(gp: GPSurrogate, inputs: np.ndarray, outputs: np.ndarray, cfg: Optional[GPConfig] = None,
               workers: Optional[int] = None) -> GPSurrogate:
    """
    Refit a surrogate on its data plus new pairs

    Hyperparameters are re-optimized from the current values.

    Args:
        gp: Current surrogate
        inputs: New inputs (k, p)
        outputs: New outputs (k, d)
        cfg: Training settings (single warm start by default)

    Returns:
        Refit GPSurrogate, or gp itself when no pairs are given
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, len(gp.input_names))
    outputs = np.asarray(outputs, dtype=float).reshape(-1, gp.n_outputs)
    if inputs.shape[0] == 0:
        return gp

    unit_old = gp.box.to_unit(gp.dataset.inputs)
    unit_new = gp.box.to_unit(inputs)
    for index, row in enumerate(unit_new):
        if np.any(np.max(np.abs(unit_old - row), axis=1) <= DUPLICATE_TOLERANCE):
            raise SurrogateError("New input duplicates a training input", {"index": index})
        if index and np.any(np.max(np.abs(unit_new[:index] - row), axis=1) <= DUPLICATE_TOLERANCE):
            raise SurrogateError("New inputs contain a duplicate", {"index": index})

    cfg = cfg or GPConfig(n_latent=gp.n_latent, n_restarts=1, fixed_noise=gp.fixed_noise,
                          prior_mean=gp.prior_mean_kind)
    cfg = replace(cfg, n_latent=gp.n_latent, fixed_noise=gp.fixed_noise, prior_mean=gp.prior_mean_kind)
    union = gp.dataset.extend(inputs, outputs)
    logger.info(f"Refitting {gp.kind} surrogate with {inputs.shape[0]} new points (n={len(union)})")
    return train_gp(union, cfg, gp.nuclear, kind=gp.kind, warm_start=gp.theta, workers=workers)


def save_surrogate(gp: GPSurrogate, path: Path) -> Path:
    """
    Write a surrogate as versioned JSON plus its training data CSV

    Returns:
        Path of the JSON document
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data_path = path.with_suffix(".data.csv")
    gp.dataset.to_frame().to_csv(data_path, index=False, float_format="%.17g")
    payload = gp.to_dict()
    payload["dataset_file"] = data_path.name
    path.write_text(json.dumps(payload, indent=2))
    logger.info(f"Surrogate {gp.kind} saved to {path}")
    return path


def load_surrogate(path: Path) -> GPSurrogate:
    """Read a surrogate written by save_surrogate, verifying the dataset hash"""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise SurrogateError(f"Cannot read surrogate {path}: {e}") from e
    if payload.get("version") != SERIALIZATION_VERSION:
        raise SurrogateError("Unsupported surrogate version", {"version": payload.get("version")})

    frame = pd.read_csv(path.parent / payload["dataset_file"], float_precision="round_trip")
    box = DesignBox.from_dict(payload["box"], payload["input_names"])
    dataset = TrainingDataset.from_frame(frame, box, payload["input_names"], payload["output_names"])
    if dataset.content_hash() != payload["dataset_hash"]:
        raise SurrogateError("Training data does not match the surrogate", {"file": payload["dataset_file"]})

    nuclear = NuclearData.from_dict(payload["nuclear_data"]) if payload.get("nuclear_data") else None
    return GPSurrogate(dataset, np.asarray(payload["theta"]), payload["n_latent"], payload["prior_mean"],
                       nuclear, payload.get("fixed_noise"), payload.get("kind", "custom"))
