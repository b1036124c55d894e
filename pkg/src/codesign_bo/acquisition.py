"""Expected improvement and global maximisation of acquisition surfaces."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np
from scipy.special import ndtr

from .domain import BoxDomain, sobol_unit
from .gp import GpModel

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class SearchConfig:
    """Two-stage search: quasi-random screening, then compass-search refinement.

    ``screen_per_dim * d`` screening points (rounded up to a power of two),
    ``n_starts`` refinements of at most ``max_iter`` poll rounds each.
    """

    screen_per_dim: int = 2048
    n_starts: int = 5
    max_iter: int = 200
    initial_step: float = 0.05
    min_step: float = 1e-9
    seed: object = 0

    def with_seed(self, seed) -> "SearchConfig":
        return replace(self, seed=seed)


def ei_from_moments(mean, std, incumbent_best: float) -> np.ndarray:
    """Closed-form EI from predictive mean/std; exactly 0 where ``std == 0``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    imp = mean - incumbent_best
    out = np.zeros(np.broadcast(mean, std).shape)
    pos = std > 0
    if np.any(pos):
        s = np.broadcast_to(std, out.shape)[pos]
        d = np.broadcast_to(imp, out.shape)[pos]
        with np.errstate(over="ignore"):  # subnormal sigma: z -> +-inf is fine
            z = d / s
            out[pos] = d * ndtr(z) + s * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    # cancellation for very negative z can leave tiny negatives
    return np.maximum(out, 0.0)


def expected_improvement(model: GpModel, query, incumbent_best: float):
    """EI of ``model`` over ``incumbent_best`` at raw ``query`` point(s)."""
    single = np.asarray(query).ndim <= 1
    mean, var = model.predict(np.atleast_2d(query))
    ei = ei_from_moments(mean, np.sqrt(var), incumbent_best)
    return float(ei[0]) if single else ei


def positive_transform(value):
    """Softplus ``log(1 + exp(v))``; overflow-safe and strictly positive."""
    out = np.logaddexp(0.0, value)
    return float(out) if np.ndim(out) == 0 else out


class Penalizer(Protocol):
    center_unit: np.ndarray

    def __call__(self, U: np.ndarray, variance: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class AcquisitionSurface:
    """EI surface, optionally transformed and multiplied by local penalizers.

    With no penalizers the surface is plain EI. With penalizers it is
    ``softplus(EI / y_std) * prod(phi_j)``; EI is taken in standardised
    reward units so the transform does not depend on the reward scale.
    ``degenerate`` swaps EI for the standardised posterior variance, used
    when EI vanishes everywhere.
    """

    model: GpModel
    incumbent_best: float
    penalizers: tuple = ()
    degenerate: bool = False

    @classmethod
    def from_model(cls, model: GpModel, penalizers: Sequence[Penalizer] = ()) -> "AcquisitionSurface":
        return cls(model, model.incumbent_best, tuple(penalizers))

    def evaluate_unit(self, U: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Surface value, raw EI and raw variance at model-unit coordinates."""
        mean, var = self.model.predict_unit(U)
        ei = ei_from_moments(mean, np.sqrt(var), self.incumbent_best)
        if self.degenerate:
            base = var / self.model.y_std**2
        elif self.penalizers:
            base = positive_transform(ei / self.model.y_std)
        else:
            base = ei
        base = np.array(base, dtype=float, copy=True)
        for pen in self.penalizers:
            base *= pen(U, var)
        return base, ei, var

    def __call__(self, X) -> np.ndarray:
        U = self.model.domain.to_unit(np.atleast_2d(X))
        return self.evaluate_unit(U)[0]


@dataclass(frozen=True)
class SearchResult:
    point: np.ndarray
    value: float
    variance: float
    degenerate: bool
    screen_best: float


def _compass_search(f, starts: np.ndarray, f0: np.ndarray, config: SearchConfig):
    """Maximise ``f`` from several starts at once by bounded coordinate polling.

    ``f`` maps (m, d) unit points to (values, variances). Accepts only strict
    improvements, halves the step on failure.
    """
    x = starts.copy()
    fx = f0.copy()
    s, d = x.shape
    step = np.full(s, config.initial_step)
    active = np.ones(s, dtype=bool)
    dirs = np.vstack([np.eye(d), -np.eye(d)])  # (2d, d)
    for _ in range(config.max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        polls = np.clip(x[idx, None, :] + step[idx, None, None] * dirs[None], 0.0, 1.0)
        vals, _ = f(polls.reshape(-1, d))
        vals = vals.reshape(len(idx), 2 * d)
        j = np.argmax(vals, axis=1)
        best = vals[np.arange(len(idx)), j]
        improved = best > fx[idx]
        for k, i in enumerate(idx):
            if improved[k]:
                x[i] = polls[k, j[k]]
                fx[i] = best[k]
            else:
                step[i] *= 0.5
                if step[i] < config.min_step:
                    active[i] = False
    return x, fx


def _ranked(values: np.ndarray, variances: np.ndarray) -> np.ndarray:
    # descending value, ties broken by larger variance
    return np.lexsort((-variances, -values))


def search_surface(
    surface: AcquisitionSurface,
    domain: BoxDomain,
    config: SearchConfig,
    avoid: Sequence[np.ndarray] = (),
    min_separation: float = 1e-9,
) -> SearchResult:
    """Two-stage maximisation of ``surface`` over ``domain``.

    ``avoid`` holds model-unit points the result must stay more than
    ``min_separation`` away from. If EI is zero at every screening point the
    surface is switched to its degenerate (variance) form.
    """
    model = surface.model
    d = domain.dim
    if d != model.dim:
        raise ValueError(f"domain has dimension {d}, model expects {model.dim}")
    to_model = lambda U: model.domain.to_unit(domain.from_unit(U))  # noqa: E731

    U0 = sobol_unit(config.screen_per_dim * d, d, config.seed)
    vals, ei, var = surface.evaluate_unit(to_model(U0))
    if not surface.degenerate and not np.any(ei > 0):
        surface = replace(surface, degenerate=True)
        vals, ei, var = surface.evaluate_unit(to_model(U0))

    avoid_arr = np.asarray(avoid, dtype=float).reshape(-1, d) if len(avoid) else None

    def far_enough(Um: np.ndarray) -> np.ndarray:
        if avoid_arr is None:
            return np.ones(len(Um), dtype=bool)
        dist = np.linalg.norm(Um[:, None, :] - avoid_arr[None], axis=2)
        return dist.min(axis=1) > min_separation

    ok = far_enough(to_model(U0))
    order = [i for i in _ranked(vals, var) if ok[i]]
    if not order:
        raise RuntimeError("every screening point lies within the exclusion radius")
    screen_best = float(vals[order[0]])
    starts = U0[order[: config.n_starts]]

    def f(U):
        v, _, s2 = surface.evaluate_unit(to_model(U))
        v = np.where(far_enough(to_model(U)), v, -np.inf)
        return v, s2

    x, fx = _compass_search(f, starts, vals[order[: config.n_starts]], config)
    _, xvar = f(x)
    pick = _ranked(fx, xvar)[0]
    u = x[pick]
    return SearchResult(
        point=domain.clip(domain.from_unit(u)),
        value=float(fx[pick]),
        variance=float(xvar[pick]),
        degenerate=surface.degenerate,
        screen_best=screen_best,
    )


def maximize_acquisition(
    surface: AcquisitionSurface, domain: BoxDomain, config: SearchConfig = SearchConfig()
) -> np.ndarray:
    """Best point of ``surface`` over ``domain`` (raw coordinates)."""
    return search_surface(surface, domain, config).point
