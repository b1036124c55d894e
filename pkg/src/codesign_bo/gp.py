"""Gaussian-process regression with a squared-exponential (ARD) kernel.

The model works internally in normalised coordinates: inputs are mapped to
the unit box of a declared :class:`~codesign_bo.domain.BoxDomain` and rewards
are standardised (zero mean, unit sample standard deviation).  Hyper-parameters
therefore live in that normalised space; predictions are returned in raw
reward units.

Typical use::

    model = fit(Dataset(X, y), FitConfig(domain=domain, seed=0))
    mean, var = model.predict(X_query)
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .domain import BoxDomain

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))

JITTER_START = 1e-10
JITTER_MAX = 1e-4
# relative variance below which a prediction is treated as exact (rounding level)
VARIANCE_ROUNDING = 1e-12


class NumericDegeneracyError(ArithmeticError):
    """Covariance matrix stayed indefinite after the full jitter escalation."""


class FitFailureError(RuntimeError):
    """Every hyper-parameter restart failed; ``best`` holds the best partial result."""

    def __init__(self, message: str, best: "Hyperparameters | None" = None):
        super().__init__(message)
        self.best = best


class _ClampCounter:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.count = 0

    def bump(self, n: int) -> None:
        with self._lock:
            self.count += n


_variance_clamps = _ClampCounter()


def variance_clamp_warnings() -> int:
    """Number of predictive variances that were below ``-1e-6 * sigma0^2`` before clamping."""
    return _variance_clamps.count


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed ``(input, reward)`` pairs.

    ``noise_variance`` is the known observation-noise variance in raw reward
    units (0 for a deterministic simulator). A fitted model never uses less
    noise than this.
    """

    inputs: np.ndarray
    rewards: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self) -> None:
        X = np.array(self.inputs, dtype=float, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.rewards, dtype=float, copy=True).reshape(-1)
        if X.ndim != 2:
            raise ValueError("inputs must be a 2-D array of shape (t, d)")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} rewards")
        if not np.all(np.isfinite(X)):
            raise ValueError("inputs must be finite")
        if not np.all(np.isfinite(y)):
            raise ValueError("rewards must be finite")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "rewards", y)

    @property
    def size(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def dim(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def best_reward(self) -> float:
        return float(np.max(self.rewards))

    @property
    def best_input(self) -> np.ndarray:
        return self.inputs[int(np.argmax(self.rewards))]

    def extend(self, inputs, rewards) -> "Dataset":
        X = np.atleast_2d(np.asarray(inputs, dtype=float))
        y = np.atleast_1d(np.asarray(rewards, dtype=float))
        if self.size:
            X = np.vstack([self.inputs, X])
            y = np.concatenate([self.rewards, y])
        return Dataset(X, y, self.noise_variance)


@dataclass(frozen=True)
class Hyperparameters:
    signal_variance: float
    lengthscales: tuple[float, ...]
    noise_variance: float = 0.0

    def __post_init__(self) -> None:
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be > 0")
        if not ls or min(ls) <= 0:
            raise ValueError("lengthscales must be > 0")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def log_vector(self) -> np.ndarray:
        """``[log sigma0^2, log lambda_1..d, log sigma_eps^2]`` (noise floored at 1e-300)."""
        return np.log(
            np.r_[self.signal_variance, self.lengthscales, max(self.noise_variance, 1e-300)]
        )

    @classmethod
    def from_log_vector(cls, v: np.ndarray) -> "Hyperparameters":
        v = np.exp(np.asarray(v, dtype=float))
        return cls(v[0], tuple(v[1:-1]), v[-1])


# ---------------------------------------------------------------------------
# Kernel and likelihood
# ---------------------------------------------------------------------------


def _check_dim(x: np.ndarray, hyper: Hyperparameters) -> None:
    if x.shape[-1] != hyper.dim:
        raise ValueError(f"input has dimension {x.shape[-1]}, kernel expects {hyper.dim}")


def kernel_eval(a, b, hyper: Hyperparameters) -> float:
    """Squared-exponential covariance between two points."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    _check_dim(a, hyper)
    r = (a - b) / np.asarray(hyper.lengthscales)
    return float(hyper.signal_variance * np.exp(-0.5 * np.dot(r, r)))


def kernel_matrix(A: np.ndarray, B: np.ndarray, hyper: Hyperparameters) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    _check_dim(A, hyper)
    _check_dim(B, hyper)
    ls = np.asarray(hyper.lengthscales)
    As, Bs = A / ls, B / ls
    sq = (
        np.sum(As**2, axis=1)[:, None]
        + np.sum(Bs**2, axis=1)[None, :]
        - 2.0 * As @ Bs.T
    )
    return hyper.signal_variance * np.exp(-0.5 * np.maximum(sq, 0.0))


def cholesky_with_jitter(K: np.ndarray, signal_variance: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, escalating diagonal jitter on failure.

    Jitter starts at ``1e-10 * signal_variance`` and grows by 10x up to
    ``1e-4 * signal_variance``.
    """
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START * signal_variance
    eye = np.eye(K.shape[0])
    while jitter <= JITTER_MAX * signal_variance * (1 + 1e-12):
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericDegeneracyError(
        f"covariance not positive definite after jitter {JITTER_MAX * signal_variance:g}"
    )


def log_marginal_likelihood(data: Dataset, hyper: Hyperparameters) -> float:
    """Zero-mean GP log evidence of ``data.rewards`` at ``data.inputs``.

    Inputs and rewards are used exactly as given; :func:`fit` normalises them
    before calling this.
    """
    if data.size == 0:
        raise ValueError("dataset is empty")
    X, y = data.inputs, data.rewards
    K = kernel_matrix(X, X, hyper) + hyper.noise_variance * np.eye(data.size)
    L, _ = cholesky_with_jitter(K, hyper.signal_variance)
    a = cho_solve((L, True), y)
    return float(-0.5 * y @ a - np.sum(np.log(np.diag(L))) - 0.5 * data.size * LOG_2PI)


def _neg_lml_and_grad(theta, X, y, noise_fixed):
    """Negative log evidence and its gradient w.r.t. log hyper-parameters.

    ``theta`` = [log s2, log ls..., (log noise)]; the noise entry is absent
    when ``noise_fixed`` is not None.
    """
    t, d = X.shape
    s2 = np.exp(theta[0])
    ls = np.exp(theta[1 : 1 + d])
    noise = noise_fixed if noise_fixed is not None else np.exp(theta[1 + d])

    diff2 = ((X[:, None, :] - X[None, :, :]) / ls) ** 2  # (t, t, d)
    Kf = s2 * np.exp(-0.5 * diff2.sum(axis=2))
    K = Kf + noise * np.eye(t)
    try:
        L, _ = cholesky_with_jitter(K, s2)
    except NumericDegeneracyError:
        return 1e25, np.zeros_like(theta)
    a = cho_solve((L, True), y)
    nll = 0.5 * y @ a + np.sum(np.log(np.diag(L))) + 0.5 * t * LOG_2PI

    W = np.outer(a, a) - cho_solve((L, True), np.eye(t))
    grad = np.empty_like(theta)
    grad[0] = 0.5 * np.sum(W * Kf)
    for k in range(d):
        grad[1 + k] = 0.5 * np.sum(W * Kf * diff2[:, :, k])
    if noise_fixed is None:
        grad[1 + d] = 0.5 * noise * np.trace(W)
    return float(nll), -grad


# ---------------------------------------------------------------------------
# Fitted model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GpModel:
    """Conditioned GP. Immutable; safe to share between threads for prediction."""

    dataset: Dataset
    hyper: Hyperparameters
    domain: BoxDomain
    y_mean: float
    y_std: float
    unit_inputs: np.ndarray
    chol_factor: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    log_likelihood: float = field(default=float("nan"))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def incumbent_best(self) -> float:
        return self.dataset.best_reward

    def _units(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        U = self.domain.to_unit(np.atleast_2d(X))
        if U.shape[1] != self.dim:
            raise ValueError(f"query has dimension {U.shape[1]}, model expects {self.dim}")
        return U

    def predict_unit(self, U, standardized: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance at points given in unit-box coordinates (shape (m, d))."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if U.shape[1] != self.dim:
            raise ValueError(f"query has dimension {U.shape[1]}, model expects {self.dim}")
        Ks = kernel_matrix(U, self.unit_inputs, self.hyper)
        mean = Ks @ self.alpha
        v = solve_triangular(self.chol_factor, Ks.T, lower=True)
        var = self.hyper.signal_variance - np.einsum("ij,ij->j", v, v)
        bad = int(np.count_nonzero(var < -1e-6 * self.hyper.signal_variance))
        if bad:
            _variance_clamps.bump(bad)
            log.warning("%d predictive variances below tolerance clamped to 0", bad)
        var = np.where(var < VARIANCE_ROUNDING * self.hyper.signal_variance, 0.0, var)
        if standardized:
            return mean, var
        return self.y_mean + self.y_std * mean, self.y_std**2 * var

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and (latent, noise-free) variance at raw inputs.

        A single point (1-D array) returns scalars.
        """
        single = np.asarray(X).ndim <= 1
        mean, var = self.predict_unit(self._units(X))
        if single:
            return float(mean[0]), float(var[0])
        return mean, var

    def mean_gradient_unit(self, U) -> np.ndarray:
        """Gradient of the predictive mean w.r.t. unit-box coordinates, raw reward units."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        ls2 = np.asarray(self.hyper.lengthscales) ** 2
        Ks = kernel_matrix(U, self.unit_inputs, self.hyper)  # (m, t)
        diff = U[:, None, :] - self.unit_inputs[None, :, :]  # (m, t, d)
        g = -np.einsum("mt,t,mtd->md", Ks, self.alpha, diff) / ls2
        return self.y_std * g

    def predict_mean_gradient(self, query) -> np.ndarray:
        """Analytic gradient of the posterior mean at a raw query point.

        The derivative is taken with respect to the *normalised* coordinates
        (so its norm is the Lipschitz estimate used by local penalisation).
        """
        return self.mean_gradient_unit(self._units(query))[0]


def _standardize(y: np.ndarray, enabled: bool) -> tuple[float, float]:
    if not enabled:
        return 0.0, 1.0
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not np.isfinite(std) or std < 1e-12 * max(1.0, abs(mean)):
        std = 1.0
    return mean, std


def condition(
    data: Dataset,
    hyper: Hyperparameters,
    domain: BoxDomain | None = None,
    standardize: bool = True,
) -> GpModel:
    """Condition a GP with fixed hyper-parameters (given in normalised units) on ``data``."""
    if data.size == 0:
        raise ValueError("cannot condition on an empty dataset")
    if domain is None:
        domain = BoxDomain.unit(data.dim)
    if domain.dim != data.dim:
        raise ValueError(f"domain has dimension {domain.dim}, data has {data.dim}")
    if hyper.dim != data.dim:
        raise ValueError(f"hyper-parameters have dimension {hyper.dim}, data has {data.dim}")
    U = domain.to_unit(data.inputs)
    y_mean, y_std = _standardize(data.rewards, standardize)
    ys = (data.rewards - y_mean) / y_std
    K = kernel_matrix(U, U, hyper) + hyper.noise_variance * np.eye(data.size)
    L, jitter = cholesky_with_jitter(K, hyper.signal_variance)
    alpha = cho_solve((L, True), ys)
    lml = float(-0.5 * ys @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * data.size * LOG_2PI)
    U.setflags(write=False)
    L.setflags(write=False)
    alpha.setflags(write=False)
    return GpModel(data, hyper, domain, y_mean, y_std, U, L, alpha, jitter, lml)


# ---------------------------------------------------------------------------
# Hyper-parameter fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit`.

    ``noise_variance=None`` fits the noise (floored at ``noise_floor``);
    a number pins it (normalised units). ``seed`` drives the multistart draws.
    """

    domain: BoxDomain | None = None
    n_restarts: int = 8
    noise_variance: float | None = None
    noise_floor: float = 1e-8
    init_range: tuple[float, float] = (1e-2, 1e1)
    lengthscale_bounds: tuple[float, float] = (5e-2, 1e3)
    signal_bounds: tuple[float, float] = (1e-4, 1e4)
    noise_upper: float = 1e1
    max_iter: int = 200
    standardize: bool = True
    seed: object = 0

    def with_seed(self, seed) -> "FitConfig":
        return replace(self, seed=seed)


def fit(data: Dataset, config: FitConfig = FitConfig()) -> GpModel:
    """Fit hyper-parameters by multistart maximisation of the log evidence.

    Each restart draws lengthscales and signal variance log-uniformly from
    ``config.init_range`` and runs L-BFGS-B in log space with analytic
    gradients. The best evidence over all starting points and optimised
    end points wins.
    """
    if data.size < 2:
        raise ValueError("fit needs at least 2 observations")
    domain = config.domain if config.domain is not None else _bounding_box(data.inputs)
    if domain.dim != data.dim:
        raise ValueError(f"domain has dimension {domain.dim}, data has {data.dim}")

    U = domain.to_unit(data.inputs)
    y_mean, y_std = _standardize(data.rewards, config.standardize)
    ys = (data.rewards - y_mean) / y_std
    d = data.dim

    noise_floor = max(config.noise_floor, data.noise_variance / y_std**2)
    noise_fixed = config.noise_variance
    bounds = [tuple(np.log(config.signal_bounds))] + [tuple(np.log(config.lengthscale_bounds))] * d
    if noise_fixed is None:
        bounds.append((np.log(noise_floor), np.log(max(config.noise_upper, noise_floor * 10))))

    rng = np.random.default_rng(config.seed)
    lo, hi = np.log(config.init_range)
    best_theta, best_val = None, np.inf
    failures = 0
    for _ in range(max(1, config.n_restarts)):
        theta0 = rng.uniform(lo, hi, size=1 + d)
        if noise_fixed is None:
            theta0 = np.r_[theta0, rng.uniform(np.log(max(noise_floor, 1e-6)), np.log(1e-1))]
        theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
        f0, _ = _neg_lml_and_grad(theta0, U, ys, noise_fixed)
        if np.isfinite(f0) and f0 < best_val:
            best_theta, best_val = theta0, f0
        try:
            res = minimize(
                _neg_lml_and_grad,
                theta0,
                args=(U, ys, noise_fixed),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": config.max_iter},
            )
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failures += 1
            log.debug("restart failed: %s", exc)
            continue
        if not np.isfinite(res.fun) or res.fun >= 1e24:
            failures += 1
            continue
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun

    if best_theta is None or best_val >= 1e24:
        raise FitFailureError(f"all {config.n_restarts} restarts failed")

    if noise_fixed is None:
        hyper = Hyperparameters.from_log_vector(best_theta)
    else:
        v = np.exp(best_theta)
        hyper = Hyperparameters(v[0], tuple(v[1:]), noise_fixed)
    try:
        return condition(data, hyper, domain, config.standardize)
    except NumericDegeneracyError as exc:
        raise FitFailureError(str(exc), best=hyper) from exc


def _bounding_box(X: np.ndarray) -> BoxDomain:
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return BoxDomain(tuple(lo), tuple(lo + span))
