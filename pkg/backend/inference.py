"""
Inference
Bayesian inverse problems: surrogate likelihood, priors, Adaptive Metropolis and the three pipelines
"""

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.optimize import minimize
from scipy.stats import gaussian_kde, qmc

import config
from backend.dataset import DesignBox
from backend.exceptions import InferenceError
from backend.moments import empirical_covariance

LOG_2PI = np.log(2.0 * np.pi)
JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)
KDE_NAMES = ("k_p", "s_intensity", "x_s")

LogDensity = Callable[[np.ndarray], float]


class ForwardModel(Protocol):
    """Anything returning a Gaussian predictive distribution (mean, covariance) at x"""

    def predict(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ...


@dataclass
class ObservationSet:
    """
    Replicated observations of one measured assembly

    Attributes:
        values: N x d observation matrix
        kind: 'neutron', 'gamma' or 'joint'
        covariance: C_obs, empirical unless supplied
    """

    values: np.ndarray
    kind: str
    covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] == 0:
            raise InferenceError("Observation set is empty")
        if not np.all(np.isfinite(self.values)):
            raise InferenceError("Observation set has non-finite entries")
        if self.covariance is None:
            if self.values.shape[0] < 2:
                raise InferenceError(
                    "Fewer than 2 observations: supply an observation covariance",
                    {"n": self.values.shape[0], "kind": self.kind},
                )
            self.covariance = empirical_covariance(self.values)
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if self.covariance.shape != (self.dim, self.dim):
            raise InferenceError("Observation covariance has the wrong shape", {"shape": self.covariance.shape})

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def subset(self, columns: Sequence[int], kind: str) -> "ObservationSet":
        """Observations restricted to some outputs (e.g. the neutron half of joint data)"""
        columns = list(columns)
        return ObservationSet(self.values[:, columns], kind, self.covariance[np.ix_(columns, columns)])

    def content_hash(self) -> str:
        digest = hashlib.sha256(np.ascontiguousarray(self.values).tobytes())
        digest.update(np.ascontiguousarray(self.covariance).tobytes())
        return digest.hexdigest()


class KdeDensity:
    """Gaussian kernel density with Scott's bandwidth, joint or as a product of marginals"""

    def __init__(self, samples: np.ndarray, mode: str = "joint", bw_method="scott"):
        """
        Fit a KDE

        Args:
            samples: (N, k) sample matrix, N >= 50
            mode: 'joint' (one k-dimensional KDE) or 'marginal-product'
            bw_method: Bandwidth rule passed to scipy.stats.gaussian_kde
        """
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[0] == 1 and samples.shape[1] > 1:
            samples = samples.T
        if samples.shape[0] < 50:
            raise InferenceError("KDE needs at least 50 samples", {"n": samples.shape[0]})
        spread = samples.std(axis=0)
        if np.any(spread <= 0.0):
            raise InferenceError("KDE sample set has a zero-variance dimension",
                                 {"dimensions": np.flatnonzero(spread <= 0.0).tolist()})
        if mode not in ("joint", "marginal-product"):
            raise InferenceError(f"Unknown KDE mode '{mode}'")
        self.mode = mode
        self.dim = samples.shape[1]
        if mode == "joint":
            self.kdes = [gaussian_kde(samples.T, bw_method=bw_method)]
        else:
            self.kdes = [gaussian_kde(samples[:, j], bw_method=bw_method) for j in range(self.dim)]
        logger.debug(f"KDE initialized ({mode}, n={samples.shape[0]}, dim={self.dim})")

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.mode == "joint":
            return self.kdes[0].logpdf(x.T)
        return np.sum([kde.logpdf(x[:, j]) for j, kde in enumerate(self.kdes)], axis=0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def resample(self, n: int, seed: int) -> np.ndarray:
        if self.mode == "joint":
            return self.kdes[0].resample(n, seed=seed).T
        rng = np.random.default_rng(seed)
        return np.column_stack([kde.resample(n, seed=rng).ravel() for kde in self.kdes])


def kde_fit(samples: np.ndarray, bw_method="scott", mode: str = "joint") -> KdeDensity:
    """Gaussian KDE evaluator of a sample set"""
    return KdeDensity(samples, mode=mode, bw_method=bw_method)


@dataclass
class PriorSpec:
    """
    Prior over a named input space

    Attributes:
        box: Support of the prior
        kind: 'uniform' or 'kde-product'
        kde: Density over kde_names (kind 'kde-product')
        kde_names: Inputs covered by the KDE; the others are uniform
    """

    box: DesignBox
    kind: str = "uniform"
    kde: Optional[KdeDensity] = None
    kde_names: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("uniform", "kde-product"):
            raise InferenceError(f"Unknown prior kind '{self.kind}'")
        if self.kind == "kde-product":
            if self.kde is None or not self.kde_names:
                raise InferenceError("kde-product prior needs a fitted KDE and its input names")
            missing = [name for name in self.kde_names if name not in self.box.names]
            if missing:
                raise InferenceError("KDE inputs outside the prior box", {"names": missing})
        self._kde_index = [self.box.names.index(name) for name in self.kde_names]
        self._uniform_index = [i for i in range(self.box.dim) if i not in self._kde_index]
        self._log_uniform = -float(np.sum(np.log(self.box.widths[self._uniform_index])))

    @classmethod
    def uniform(cls, box: DesignBox) -> "PriorSpec":
        return cls(box)

    @classmethod
    def from_samples(cls, box: DesignBox, samples: np.ndarray, sample_names: Sequence[str],
                     kde_names: Sequence[str] = KDE_NAMES, mode: str = "joint",
                     max_samples: int = 2000, seed: int = 0) -> "PriorSpec":
        """
        KDE over some coordinates of a previous posterior times a uniform density

        Args:
            box: Support of the new prior
            samples: Chain of the previous stage
            sample_names: Column names of the chain
            kde_names: Coordinates carried over through the KDE
            mode: 'joint' or 'marginal-product'
            max_samples: Random subset size used to fit the KDE
            seed: Seed of the subset
        """
        columns = [list(sample_names).index(name) for name in kde_names]
        subset = np.asarray(samples)[:, columns]
        if subset.shape[0] > max_samples:
            rng = np.random.default_rng(seed)
            subset = subset[np.sort(rng.choice(subset.shape[0], size=max_samples, replace=False))]
        return cls(box, "kde-product", kde_fit(subset, mode=mode), tuple(kde_names))

    def log_density(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if not self.box.contains(x):
            return -np.inf
        if self.kind == "uniform":
            return self._log_uniform
        return self._log_uniform + float(self.kde.logpdf(x[self._kde_index])[0])

    def sample(self, n: int, seed: int) -> np.ndarray:
        """n draws inside the box; the uniform coordinates are Latin-hypercube stratified"""
        uniform = self.box.from_unit(qmc.LatinHypercube(d=self.box.dim, seed=seed).random(n))
        if self.kind == "uniform":
            return uniform
        draws = np.empty((0, len(self._kde_index)))
        lower = self.box.lower_array[self._kde_index]
        upper = self.box.upper_array[self._kde_index]
        for attempt in range(100):
            batch = self.kde.resample(2 * n, seed + attempt + 1)
            inside = np.all((batch >= lower) & (batch <= upper), axis=1)
            draws = np.vstack([draws, batch[inside]])
            if draws.shape[0] >= n:
                break
        else:
            raise InferenceError("KDE prior mass lies outside its box")
        uniform[:, self._kde_index] = draws[:n]
        return uniform


@dataclass
class PosteriorSamples:
    """
    Post-burn-in MCMC chain over named inputs

    Attributes:
        names: Input names
        chain: Samples (M, p)
        log_posterior: Log-posterior per sample
        acceptance_rate: Fraction of accepted proposals
        map_point: MAP estimate x_m
        map_log_posterior: Log-posterior at x_m
        provenance: Seeds and content hashes
        parent: Samples of the previous stage (sequential pipeline)
    """

    names: Tuple[str, ...]
    chain: np.ndarray
    log_posterior: np.ndarray
    acceptance_rate: float
    map_point: np.ndarray
    map_log_posterior: float
    provenance: Dict[str, object] = field(default_factory=dict)
    parent: Optional["PosteriorSamples"] = None

    def __post_init__(self):
        self.names = tuple(self.names)
        if self.map_log_posterior < np.max(self.log_posterior):
            best = int(np.argmax(self.log_posterior))
            self.map_point = self.chain[best].copy()
            self.map_log_posterior = float(self.log_posterior[best])

    def __len__(self) -> int:
        return int(self.chain.shape[0])

    def column(self, name: str) -> np.ndarray:
        return self.chain[:, self.names.index(name)]

    def mean(self) -> np.ndarray:
        return self.chain.mean(axis=0)

    def std(self) -> np.ndarray:
        return self.chain.std(axis=0, ddof=1)

    def covariance(self) -> np.ndarray:
        return np.atleast_2d(np.cov(self.chain, rowvar=False))

    def summary(self) -> pd.DataFrame:
        return pd.DataFrame({
            "mean": self.mean(),
            "std": self.std(),
            "q05": np.quantile(self.chain, 0.05, axis=0),
            "q95": np.quantile(self.chain, 0.95, axis=0),
            "map": self.map_point,
        }, index=list(self.names))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.chain, columns=self.names)
        frame["log_posterior"] = self.log_posterior
        return frame


@dataclass(frozen=True)
class AMConfig:
    """
    Adaptive Metropolis settings (unit-box coordinates)

    Attributes:
        n_steps: Chain length including burn-in
        burn_in: Discarded fraction
        warm_up: Steps with the initial proposal before adaptation
        epsilon: Regularisation added to the adapted covariance
        initial_scale: Proposal standard deviation before adaptation
        adapt_interval: Steps between proposal-covariance updates
        init_draws: Prior draws screened for the chain start
        map_restarts: Local searches of find_map
    """

    n_steps: int = config.MCMC_STEPS
    burn_in: float = config.MCMC_BURN_IN
    warm_up: int = 2000
    epsilon: float = 1e-8
    initial_scale: float = 0.05
    adapt_interval: int = 10
    init_draws: int = 256
    map_restarts: int = 5

    def __post_init__(self):
        if self.n_steps < 1 or not 0.0 <= self.burn_in < 1.0:
            raise InferenceError("AM needs n_steps >= 1 and burn_in in [0, 1)",
                                 {"n_steps": self.n_steps, "burn_in": self.burn_in})
        if self.initial_scale <= 0.0 or self.epsilon < 0.0 or self.adapt_interval < 1:
            raise InferenceError("Invalid AM proposal settings")


def _chol_with_jitter(matrix: np.ndarray) -> np.ndarray:
    scale = float(np.mean(np.abs(np.diag(matrix)))) or 1.0
    for level in JITTER_LEVELS:
        try:
            return np.linalg.cholesky(matrix + level * scale * np.eye(matrix.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise InferenceError("Combined covariance is singular after jitter escalation",
                         {"diag": np.diag(matrix).tolist()})


def gaussian_log_likelihood(residual: np.ndarray, covariance: np.ndarray) -> float:
    """log N(residual; 0, covariance) including the -d/2 log(2 pi) constant"""
    L = _chol_with_jitter(covariance)
    z = np.linalg.solve(L, residual)
    return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * residual.size * LOG_2PI)


def log_likelihood(x: np.ndarray, obs: ObservationSet, model: ForwardModel) -> float:
    """
    Surrogate likelihood of replicated observations

    The N observations enter through their mean with covariance
    C(x) + C_obs / N, where C(x) is the surrogate predictive covariance.
    """
    mean, cov = model.predict(np.asarray(x, dtype=float))
    if mean.shape != (obs.dim,):
        raise InferenceError("Surrogate and observations differ in dimension",
                             {"surrogate": mean.shape, "observations": obs.dim})
    return gaussian_log_likelihood(obs.mean - mean, cov + obs.covariance / obs.n)


def log_posterior(x: np.ndarray, obs: ObservationSet, gp: ForwardModel, prior: PriorSpec) -> float:
    """Unnormalised log posterior; -inf outside the prior support"""
    log_prior = prior.log_density(x)
    if not np.isfinite(log_prior):
        return -np.inf
    return log_prior + log_likelihood(x, obs, gp)


def posterior_target(obs: ObservationSet, gp: ForwardModel, prior: PriorSpec) -> LogDensity:
    def target(x: np.ndarray) -> float:
        return log_posterior(x, obs, gp, prior)
    return target


def adapted_proposal_cov(sigma: np.ndarray, epsilon: float) -> np.ndarray:
    """s_d Sigma + epsilon I with s_d = 2.38^2 / dim"""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    dim = sigma.shape[0]
    return 2.38**2 / dim * sigma + epsilon * np.eye(dim)


def run_adaptive_metropolis(target: LogDensity, init: np.ndarray, n_steps: int, seed: int,
                            cfg: AMConfig = AMConfig(), initial_cov: Optional[np.ndarray] = None,
                            names: Optional[Sequence[str]] = None) -> PosteriorSamples:
    """
    Adaptive Metropolis random walk

    Proposals are Gaussian with covariance s_d Sigma_t + epsilon I,
    s_d = 2.38^2 / dim, where Sigma_t is the running covariance of the
    chain; the initial covariance is used during the warm-up.

    Args:
        target: Log density
        init: Starting point (target must be finite there)
        n_steps: Number of steps including burn-in
        seed: Random seed
        cfg: Sampler settings
        initial_cov: Proposal covariance of the warm-up
        names: Coordinate names

    Returns:
        PosteriorSamples after burn-in
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(init, dtype=float).copy()
    dim = x.size
    lp = target(x)
    if not np.isfinite(lp):
        raise InferenceError("Target is not finite at the initial point", {"init": x.tolist()})

    cov0 = np.eye(dim) * cfg.initial_scale**2 if initial_cov is None else np.asarray(initial_cov, dtype=float)
    proposal_chol = np.linalg.cholesky(cov0)
    mean = x.copy()
    scatter = np.zeros((dim, dim))
    count = 1

    chain = np.empty((n_steps, dim))
    log_values = np.empty(n_steps)
    accepted = 0
    report_every = max(n_steps // 10, 1)

    for t in range(n_steps):
        if t >= cfg.warm_up and t % cfg.adapt_interval == 0:
            adapted = adapted_proposal_cov(scatter / max(count - 1, 1), cfg.epsilon)
            try:
                proposal_chol = np.linalg.cholesky(adapted)
            except np.linalg.LinAlgError:
                pass

        candidate = x + proposal_chol @ rng.standard_normal(dim)
        lp_candidate = target(candidate)
        if np.isnan(lp_candidate):
            lp_candidate = -np.inf
        if np.log(rng.random()) < lp_candidate - lp:
            x, lp = candidate, lp_candidate
            accepted += 1

        chain[t] = x
        log_values[t] = lp
        count += 1
        delta = x - mean
        mean += delta / count
        scatter += np.outer(delta, x - mean)

        if (t + 1) % report_every == 0:
            logger.debug(f"AM step {t + 1}/{n_steps}, acceptance {accepted / (t + 1):.3f}")

    if accepted == 0:
        raise InferenceError("No proposal accepted; rescale the initial proposal covariance",
                             {"n_steps": n_steps, "initial_scale": cfg.initial_scale})

    start = int(np.floor(cfg.burn_in * n_steps))
    kept, kept_lp = chain[start:], log_values[start:]
    best = int(np.argmax(kept_lp))
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(dim))
    logger.info(f"AM finished: {n_steps} steps, acceptance {accepted / n_steps:.3f}")
    return PosteriorSamples(names, kept, kept_lp, accepted / n_steps, kept[best].copy(), float(kept_lp[best]),
                            {"seed": int(seed), "n_steps": int(n_steps)})


def find_map(target: LogDensity, samples: Optional[PosteriorSamples] = None, restarts: int = 5,
             seed: int = 0, box: Optional[DesignBox] = None) -> Tuple[np.ndarray, float]:
    """
    Maximum-a-posteriori point by multi-start local ascent

    Starts from the highest distinct chain samples (or box draws without a
    chain); each start runs L-BFGS-B inside the box, falling back to
    Nelder-Mead. The result is never worse than the best chain sample.

    Returns:
        Tuple (x_m, log target at x_m)
    """
    rng = np.random.default_rng(seed)
    if samples is not None and len(samples):
        order = np.argsort(samples.log_posterior)[::-1]
        _, first = np.unique(samples.chain[order], axis=0, return_index=True)
        starts = samples.chain[order][np.sort(first)][:restarts]
        best_x = samples.chain[order[0]].copy()
        best_value = float(samples.log_posterior[order[0]])
    elif box is not None:
        starts = box.sample(restarts, rng)
        best_x, best_value = starts[0].copy(), float(target(starts[0]))
    else:
        raise InferenceError("find_map needs a chain or a box to start from")

    bounds = list(zip(box.lower, box.upper)) if box is not None else None

    def objective(x):
        value = target(x)
        return -value if np.isfinite(value) else 1e300

    improved = False
    for start in starts:
        for method in ("L-BFGS-B", "Nelder-Mead"):
            try:
                result = minimize(objective, start, method=method, bounds=bounds)
            except (ValueError, FloatingPointError):
                continue
            value = target(result.x)
            if np.isfinite(value) and value > best_value:
                best_x, best_value, improved = result.x.copy(), float(value), True
            if result.success:
                break

    if not improved:
        logger.warning("MAP search did not improve on the best chain sample")
    return best_x, best_value


def _unit_target(target: LogDensity, box: DesignBox) -> LogDensity:
    def unit(u: np.ndarray) -> float:
        if np.any(u < 0.0) or np.any(u > 1.0):
            return -np.inf
        return target(box.from_unit(u))
    return unit


def sample_posterior(obs: ObservationSet, model: ForwardModel, prior: PriorSpec, seed: int,
                     cfg: AMConfig = AMConfig(), stage: str = "posterior") -> PosteriorSamples:
    """
    Sample a surrogate posterior with Adaptive Metropolis in unit-box coordinates

    The chain starts from the best of cfg.init_draws stratified prior draws;
    the MAP is refined by find_map.
    """
    box = prior.box
    target = posterior_target(obs, model, prior)
    draws = prior.sample(cfg.init_draws, seed)
    values = np.array([target(x) for x in draws])
    if not np.any(np.isfinite(values)):
        raise InferenceError(f"Stage {stage}: posterior is not finite at any prior draw")
    init = draws[int(np.nanargmax(np.where(np.isfinite(values), values, -np.inf)))]

    unit_target = _unit_target(target, box)
    unit_box = DesignBox(box.names, (0.0,) * box.dim, (1.0,) * box.dim)
    unit_samples = run_adaptive_metropolis(unit_target, box.to_unit(init), cfg.n_steps, seed, cfg, names=box.names)
    unit_map, map_value = find_map(unit_target, unit_samples, cfg.map_restarts, seed, unit_box)
    map_point = box.from_unit(unit_map)
    samples = PosteriorSamples(box.names, box.from_unit(unit_samples.chain), unit_samples.log_posterior,
                               unit_samples.acceptance_rate, map_point, map_value)
    samples.provenance = {
        "stage": stage,
        "seed": int(seed),
        "observations_hash": obs.content_hash(),
        "surrogate_hash": model.content_hash() if hasattr(model, "content_hash") else "",
        "n_steps": int(cfg.n_steps),
    }
    logger.info(f"Stage {stage} sampled: acceptance {samples.acceptance_rate:.3f}, "
                f"MAP {dict(zip(box.names, np.round(map_point, 5)))}")
    return samples


def neutron_pipeline(y_n: ObservationSet, gp_n: ForwardModel, box: DesignBox, seed: int,
                     cfg: AMConfig = AMConfig()) -> PosteriorSamples:
    """Neutron-only posterior over (k_p, eps_f, S, x_s) with a uniform prior"""
    prior = PriorSpec.uniform(box.sub(config.NEUTRON_INPUTS))
    return sample_posterior(y_n, gp_n, prior, seed, cfg, stage="neutron")


def sequential_pipeline(y_n: ObservationSet, y_g: ObservationSet, gp_n: ForwardModel, gp_g: ForwardModel,
                        box: DesignBox, seed: int, cfg: AMConfig = AMConfig(),
                        order: str = "neutron-first", kde_mode: str = "joint") -> PosteriorSamples:
    """
    Two-stage posterior: the first stage's posterior over (k_p, S, x_s)
    becomes, through a KDE, the prior of the second stage

    Args:
        y_n: Neutron observations
        y_g: Gamma observations
        gp_n: Neutron surrogate (NSM)
        gp_g: Gamma surrogate (GSM)
        box: Joint design box
        seed: Master seed of the pipeline
        cfg: Sampler settings
        order: 'neutron-first' or 'gamma-first'
        kde_mode: 'joint' or 'marginal-product' KDE of the carried-over coordinates

    Returns:
        Second-stage samples; first-stage samples in .parent
    """
    if order not in ("neutron-first", "gamma-first"):
        raise InferenceError(f"Unknown pipeline order '{order}'")
    first, second = (("neutron", y_n, gp_n, config.NEUTRON_INPUTS), ("gamma", y_g, gp_g, config.GAMMA_INPUTS))
    if order == "gamma-first":
        first, second = second, first

    name_1, obs_1, model_1, inputs_1 = first
    try:
        stage_1 = sample_posterior(obs_1, model_1, PriorSpec.uniform(box.sub(inputs_1)), seed, cfg,
                                   stage=f"sequential-{name_1}")
    except InferenceError as e:
        raise InferenceError(f"Sequential stage 1 ({name_1}) failed: {e.message}", e.context) from e

    name_2, obs_2, model_2, inputs_2 = second
    prior_2 = PriorSpec.from_samples(box.sub(inputs_2), stage_1.chain, stage_1.names, KDE_NAMES,
                                     mode=kde_mode, seed=seed)
    stage_2 = sample_posterior(obs_2, model_2, prior_2, seed + 1, cfg, stage=f"sequential-{name_2}")
    stage_2.parent = stage_1
    stage_2.provenance["kde_mode"] = kde_mode
    stage_2.provenance["order"] = order
    return stage_2


def joint_pipeline(y_ng: ObservationSet, gp_joint: ForwardModel, prior: PriorSpec, seed: int,
                   cfg: AMConfig = AMConfig()) -> PosteriorSamples:
    """Posterior over the six joint inputs from 6-vector observations"""
    if y_ng.dim != 6:
        raise InferenceError("Joint pipeline needs 6-vector observations", {"dim": y_ng.dim})
    return sample_posterior(y_ng, gp_joint, prior, seed, cfg, stage="joint")


def marginal_grid(samples: PosteriorSamples, pair: Tuple[str, str] = ("k_p", "s_intensity"), bins: int = 50,
                  box: Optional[DesignBox] = None) -> pd.DataFrame:
    """
    2-D marginal posterior density on a regular grid

    Returns:
        Long-format frame with the bin centres of both inputs and the density
    """
    i, j = (samples.names.index(name) for name in pair)
    if box is not None:
        ranges = [box.to_dict()[pair[0]], box.to_dict()[pair[1]]]
    else:
        ranges = [(samples.chain[:, k].min(), samples.chain[:, k].max()) for k in (i, j)]
    density, x_edges, y_edges = np.histogram2d(samples.chain[:, i], samples.chain[:, j], bins=bins,
                                               range=ranges, density=True)
    x_centres = 0.5 * (x_edges[1:] + x_edges[:-1])
    y_centres = 0.5 * (y_edges[1:] + y_edges[:-1])
    grid_x, grid_y = np.meshgrid(x_centres, y_centres, indexing="ij")
    return pd.DataFrame({pair[0]: grid_x.ravel(), pair[1]: grid_y.ravel(), "density": density.ravel()})


def posterior_std_ratio(a: PosteriorSamples, b: PosteriorSamples, name: str = "k_p") -> float:
    """std(a) / std(b) of one input, e.g. sequential over neutron-only"""
    return float(np.std(a.column(name), ddof=1) / np.std(b.column(name), ddof=1))
