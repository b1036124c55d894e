"""Box-bounded search domains and low-discrepancy sampling helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``lower <= x <= upper``.

    Everything downstream of the GP works in the unit cube; this class owns
    the affine map between raw coordinates and ``[0, 1]^d``.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise ValueError(f"bound lengths differ: {len(lo)} vs {len(hi)}")
        if not lo:
            raise ValueError("domain must have at least one dimension")
        for d, (a, b) in enumerate(zip(lo, hi)):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ValueError(f"dimension {d}: bounds must be finite")
            if not a < b:
                raise ValueError(f"dimension {d}: lower ({a}) must be < upper ({b})")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def width(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @classmethod
    def unit(cls, dim: int) -> "BoxDomain":
        return cls((0.0,) * dim, (1.0,) * dim)

    def to_unit(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.lo) / self.width

    def from_unit(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.lo + u * self.width

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= np.asarray(self.upper) + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, np.asarray(self.upper))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.width))


def sobol_unit(n: int, dim: int, seed) -> np.ndarray:
    """At least ``n`` scrambled Sobol points in ``[0, 1)^dim``.

    The count is rounded up to a power of two so the sequence keeps its
    balance properties.
    """
    m = max(0, int(np.ceil(np.log2(max(n, 1)))))
    sampler = qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(seed))
    return sampler.random_base2(m)


def initial_design(domain: BoxDomain, n: int, seed) -> np.ndarray:
    """First ``n`` points of a seeded scrambled Sobol sequence, in raw coordinates."""
    sampler = qmc.Sobol(d=domain.dim, scramble=True, seed=np.random.default_rng(seed))
    m = max(1, int(np.ceil(np.log2(max(n, 1)))))
    u = sampler.random_base2(m)[:n]
    return domain.from_unit(u)
