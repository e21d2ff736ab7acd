"""Price grid arithmetic and exact Bertrand payoff computations.

Prices live on the grid {0, 1/K, ..., 1} and are stored as integer indices
so that trigger predicates ("priced below 1") are exact. All expectations
here are computed in closed form against independent opponent distributions
with uniform tie splitting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MASS_TOL = 1e-12


class GridMismatchError(ValueError):
    """Distributions from different grids were mixed in one computation."""


@dataclass(frozen=True)
class PriceGrid:
    """Discrete price set {0, 1/K, ..., 1} with K+1 points."""

    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"grid resolution must be at least 2, got {self.k}")

    @property
    def size(self) -> int:
        return self.k + 1

    def price(self, index: int) -> float:
        if not 0 <= index <= self.k:
            raise ValueError(f"price index {index} outside [0, {self.k}]")
        return index / self.k

    def prices(self) -> np.ndarray:
        return np.arange(self.k + 1) / self.k


def floor_to_grid(x: float, grid: PriceGrid) -> int:
    """Largest grid index whose price is <= x.

    Uses a small relative tolerance so that exact grid points such as
    x = 1/3 on K = 3 round to themselves.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"price {x} outside [0, 1]")
    scaled = x * grid.k
    idx = int(np.floor(scaled))
    if (idx + 1) - scaled < 1e-9:
        idx += 1
    return min(idx, grid.k)


def ceil_to_grid(x: float, grid: PriceGrid) -> int:
    """Smallest grid index whose price is >= x."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"price {x} outside [0, 1]")
    scaled = x * grid.k
    idx = int(np.ceil(scaled))
    if scaled - (idx - 1) < 1e-9:
        idx -= 1
    return max(idx, 0)


class PriceDist:
    """Probability distribution over the price grid.

    The mass vector has K+1 entries, sums to one within 1e-12, and is
    renormalized on construction when floating drift exceeds that tolerance.
    """

    __slots__ = ("grid", "mass")

    def __init__(self, grid: PriceGrid, mass: Sequence[float] | np.ndarray):
        arr = np.asarray(mass, dtype=float)
        if arr.shape != (grid.k + 1,):
            raise ValueError(
                f"mass vector has shape {arr.shape}, expected ({grid.k + 1},)"
            )
        if np.any(arr < -MASS_TOL):
            raise ValueError("negative probability mass")
        arr = np.clip(arr, 0.0, None)
        total = arr.sum()
        if abs(total - 1.0) > MASS_TOL:
            if total <= 0:
                raise ValueError("mass vector sums to zero")
            arr = arr / total
        self.grid = grid
        self.mass = arr

    @classmethod
    def point(cls, grid: PriceGrid, index: int) -> "PriceDist":
        mass = np.zeros(grid.k + 1)
        mass[index] = 1.0
        return cls(grid, mass)

    @classmethod
    def uniform(cls, grid: PriceGrid) -> "PriceDist":
        return cls(grid, np.full(grid.k + 1, 1.0 / (grid.k + 1)))

    def survival(self) -> np.ndarray:
        """survival[g] = Pr[X >= g/K] for g = 0..K."""
        return np.cumsum(self.mass[::-1])[::-1]

    def expectation(self) -> float:
        return float(self.mass @ self.grid.prices())

    def sample(self, rng: np.random.Generator, size: int | None = None):
        return rng.choice(self.grid.k + 1, size=size, p=self.mass)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PriceDist)
            and self.grid == other.grid
            and np.array_equal(self.mass, other.mass)
        )

    def __repr__(self) -> str:
        support = np.flatnonzero(self.mass > 0)
        if len(support) == 1:
            return f"PriceDist(point {support[0]}/{self.grid.k})"
        return f"PriceDist(K={self.grid.k}, support={len(support)} pts)"


@dataclass(frozen=True)
class RealizedProfile:
    """One round of realized prices, one grid index per player."""

    indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)


def bertrand_payoffs(profile: RealizedProfile | Sequence[int], grid: PriceGrid) -> np.ndarray:
    """Per-player payoffs under the Bertrand rule with uniform tie splitting.

    The lowest-priced player earns that price; an m-way tie at the minimum
    earns each tied player price/m. Payoffs always sum to the minimum price.
    """
    idx = np.asarray(
        profile.indices if isinstance(profile, RealizedProfile) else profile, dtype=int
    )
    if np.any(idx < 0) or np.any(idx > grid.k):
        raise ValueError("price index outside grid")
    low = idx.min()
    winners = idx == low
    payoffs = np.zeros(len(idx))
    payoffs[winners] = (low / grid.k) / winners.sum()
    return payoffs


def _above_equal_arrays(opponents: Sequence[PriceDist]) -> tuple[np.ndarray, np.ndarray]:
    grid = opponents[0].grid
    for d in opponents[1:]:
        if d.grid != grid:
            raise GridMismatchError("opponent distributions on different grids")
    above = np.empty((len(opponents), grid.k + 1))
    equal = np.empty((len(opponents), grid.k + 1))
    for j, d in enumerate(opponents):
        surv = d.survival()
        above[j, :-1] = surv[1:]
        above[j, -1] = 0.0
        equal[j] = d.mass
    return above, equal


def expected_payoff_vector(opponents: Sequence[PriceDist]) -> np.ndarray:
    """Exact expected payoff of every fixed price against independent opponents.

    Runs a dynamic program over opponents tracking the number of ties at the
    candidate price, conditioned on no opponent pricing strictly below it.
    Cost O(N^2) per price, vectorized over the whole grid.
    """
    if not opponents:
        raise ValueError("need at least one opponent")
    grid = opponents[0].grid
    above, equal = _above_equal_arrays(opponents)
    n = len(opponents)
    # ties[t][p] = Pr[t opponents tie at p, the rest price strictly above]
    ties = np.zeros((n + 1, grid.k + 1))
    ties[0] = 1.0
    for j in range(n):
        prev = ties.copy()
        ties[0] = prev[0] * above[j]
        for t in range(1, n + 1):
            ties[t] = prev[t] * above[j] + prev[t - 1] * equal[j]
    shares = 1.0 / (1.0 + np.arange(n + 1))
    win_prob = shares @ ties
    return grid.prices() * win_prob


def expected_utility_fixed_price(p_index: int, opponents: Sequence[PriceDist]) -> float:
    """E[u_i(p, P_-i)] for one fixed price against independent opponents."""
    grid = opponents[0].grid
    if not 0 <= p_index <= grid.k:
        raise ValueError(f"price index {p_index} outside grid")
    return float(expected_payoff_vector(opponents)[p_index])


def expected_min(dists: Sequence[PriceDist]) -> float:
    """E[min_i X_i] for independent draws, exact to floating precision.

    Uses E[min] = (1/K) * sum_{g=1..K} prod_i Pr[X_i >= g/K].
    """
    if not dists:
        raise ValueError("expected_min requires a nonempty list")
    grid = dists[0].grid
    prod = np.ones(grid.k + 1)
    for d in dists:
        if d.grid != grid:
            raise GridMismatchError("distributions on different grids")
        prod *= d.survival()
    return float(prod[1:].sum() / grid.k)
