"""Batch selection by local penalisation of the acquisition surface."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .acquisition import (
    AcquisitionSurface,
    SearchConfig,
    _compass_search,
    search_surface,
)
from .domain import BoxDomain, sobol_unit
from .gp import GpModel

LIPSCHITZ_FLOOR = 1e-4
VARIANCE_FLOOR = 1e-12
MIN_SEPARATION = 1e-9


@dataclass(frozen=True)
class PenalizerParams:
    """Lipschitz estimate (reward per unit of normalised distance) and reward maximum."""

    lipschitz: float
    reward_max: float

    def __post_init__(self) -> None:
        if not self.lipschitz > 0:
            raise ValueError("lipschitz must be > 0")


def _phi(dist, center_mean, variance, params: PenalizerParams):
    s2 = np.maximum(variance, VARIANCE_FLOOR)
    z = (params.lipschitz * dist - params.reward_max + center_mean) / np.sqrt(2.0 * s2)
    return 0.5 * erfc(-z)


@dataclass(frozen=True, eq=False)
class LocalPenalizer:
    """Penalizer centred on an already chosen batch element (model-unit coordinates)."""

    center_unit: np.ndarray
    center_mean: float
    params: PenalizerParams

    @classmethod
    def at(cls, model: GpModel, center, params: PenalizerParams) -> "LocalPenalizer":
        c = model.domain.to_unit(np.asarray(center, dtype=float))
        mean, _ = model.predict(center)
        return cls(np.asarray(c, dtype=float), float(mean), params)

    def __call__(self, U: np.ndarray, variance: np.ndarray) -> np.ndarray:
        dist = np.linalg.norm(np.atleast_2d(U) - self.center_unit, axis=1)
        return _phi(dist, self.center_mean, variance, self.params)

    @property
    def radius(self) -> float:
        """Radius of the exclusion ball, ``(R_M - mu(center)) / L`` (0 if the center is optimal)."""
        return max(0.0, (self.params.reward_max - self.center_mean) / self.params.lipschitz)


def local_penalizer(query, center, model: GpModel, params: PenalizerParams) -> float:
    """Probability that ``query`` lies outside the exclusion ball around ``center``."""
    pen = LocalPenalizer.at(model, center, params)
    _, var = model.predict(query)
    U = model.domain.to_unit(np.atleast_2d(query))
    return float(pen(U, np.atleast_1d(var))[0])


def estimate_penalizer_params(
    model: GpModel, domain: BoxDomain, config: SearchConfig = SearchConfig()
) -> PenalizerParams:
    """Reward maximum = best observation; Lipschitz = max gradient norm of the mean.

    The gradient norm is screened on ``1024 * d`` Sobol points and refined by
    compass search from the five largest values.
    """
    d = domain.dim
    to_model = lambda U: model.domain.to_unit(domain.from_unit(U))  # noqa: E731

    def gnorm(U):
        g = model.mean_gradient_unit(to_model(U))
        return np.linalg.norm(g, axis=1), np.zeros(len(U))

    U0 = sobol_unit(1024 * d, d, config.seed)
    vals, _ = gnorm(U0)
    top = np.argsort(-vals, kind="stable")[: config.n_starts]
    _, fx = _compass_search(gnorm, U0[top], vals[top], config)
    lip = max(float(np.max(vals)), float(np.max(fx)), LIPSCHITZ_FLOOR)
    return PenalizerParams(lipschitz=lip, reward_max=model.dataset.best_reward)


@dataclass(frozen=True)
class Batch:
    """Ordered candidates chosen in one outer iteration."""

    elements: np.ndarray
    iteration_index: int = 0
    degenerate: bool = False
    params: PenalizerParams | None = None
    values: tuple[float, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.elements)


def select_batch(
    model: GpModel,
    domain: BoxDomain,
    n_b: int,
    config: SearchConfig = SearchConfig(),
    iteration: int = 0,
) -> Batch:
    """Greedy local-penalisation batch of ``n_b`` points.

    Element 1 maximises EI. Element k maximises
    ``softplus(EI) * prod_{j<k} phi(.; p_j)`` with the penalizer parameters
    estimated once from the pre-batch model. When EI vanishes everywhere the
    variance replaces it and ``degenerate`` is set on the result.
    """
    if n_b < 1:
        raise ValueError("n_b must be >= 1")
    first = search_surface(AcquisitionSurface.from_model(model), domain, config)
    elements = [first.point]
    values = [first.value]
    degenerate = first.degenerate
    params = None
    if n_b > 1:
        params = estimate_penalizer_params(model, domain, config)
        penalizers: list[LocalPenalizer] = []
        for _ in range(1, n_b):
            penalizers.append(LocalPenalizer.at(model, elements[-1], params))
            surface = AcquisitionSurface(
                model, model.incumbent_best, tuple(penalizers), degenerate=degenerate
            )
            res = search_surface(
                surface,
                domain,
                config,
                avoid=[p.center_unit for p in penalizers],
                min_separation=MIN_SEPARATION,
            )
            degenerate = degenerate or res.degenerate
            elements.append(res.point)
            values.append(res.value)
    return Batch(
        elements=np.vstack(elements),
        iteration_index=iteration,
        degenerate=degenerate,
        params=params,
        values=tuple(values),
    )
