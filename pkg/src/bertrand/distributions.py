"""Equal-revenue price distributions and the extremal CCE program.

Contains the discretized equal-revenue distribution (grid distribution whose
fixed-price revenue is constant across its support under favorable ties), a
perturbed variant whose one-shot best response is the second-highest grid
price, the grid discretization map, and a linear program computing the
highest expected minimum price any symmetric coarse correlated equilibrium
of M players can sustain.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from bertrand.grid import PriceGrid, PriceDist, bertrand_payoffs, expected_payoff_vector
from bertrand.simplex import linprog_maximize


def harmonic(n: int) -> float:
    """H_n = sum_{j=1..n} 1/j."""
    if n < 1:
        raise ValueError("harmonic number needs n >= 1")
    return float(np.sum(1.0 / np.arange(1, n + 1)))


@dataclass(frozen=True)
class DERDParams:
    """Parameters of the discretized equal-revenue distribution.

    The revenue level c = m/K must be grid aligned with 1 <= m <= K-1.
    """

    grid: PriceGrid
    m: int

    def __post_init__(self):
        if not 1 <= self.m <= self.grid.k - 1:
            raise ValueError(
                f"revenue index m={self.m} outside [1, {self.grid.k - 1}]"
            )

    @property
    def c(self) -> float:
        return self.m / self.grid.k


def derd_pmf(params: DERDParams) -> PriceDist:
    """Discretized equal-revenue distribution.

    Mass c at price 1, mass c*(1/p_i - 1/p_{i+1}) at p_i for m <= i <= K-1,
    zero below the support. The masses telescope to one exactly.
    """
    k = params.grid.k
    c = params.c
    mass = np.zeros(k + 1)
    i = np.arange(params.m, k)
    mass[i] = c * k / (i * (i + 1.0))
    mass[k] = c
    return PriceDist(params.grid, mass)


def favorable_tie_revenue(dist: PriceDist, p_index: int) -> float:
    """Revenue p * Pr[X >= p] of a fixed price when ties favor the deviator."""
    return dist.grid.price(p_index) * float(dist.survival()[p_index])


@dataclass(frozen=True)
class PerturbedERD:
    """Equal-revenue distribution with extra mass on price 1.

    The inflation makes the second-highest grid price the unique one-shot
    best response. `gap` is the closed-form margin (perturb - (1-perturb)/K)/2
    used as the construction's validity condition; `margin()` returns the
    actual best-response margin computed from the pmf, which is the quantity
    a learner's concentration rate depends on.
    """

    base: DERDParams
    perturb: float

    def __post_init__(self):
        if not 0.0 <= self.perturb < 1.0:
            raise ValueError("perturbation must lie in [0, 1)")
        if self.perturb > 0 and self.gap <= 0:
            raise ValueError(
                f"perturbation {self.perturb} too small for K={self.base.grid.k}: "
                "the closed-form margin (perturb - (1-perturb)/K)/2 is not positive"
            )

    @property
    def gap(self) -> float:
        k = self.base.grid.k
        return (self.perturb - (1.0 - self.perturb) / k) / 2.0

    def pmf(self) -> PriceDist:
        return perturbed_erd_pmf(self)

    def one_shot_utilities(self) -> np.ndarray:
        """u(p, X) = p Pr[X>p] + (p/2) Pr[X=p] for every grid price p."""
        return expected_payoff_vector([self.pmf()])

    def best_response(self) -> int:
        return int(np.argmax(self.one_shot_utilities()))

    def margin(self) -> float:
        """Actual gap between the best and second-best one-shot utility."""
        u = self.one_shot_utilities()
        best = int(np.argmax(u))
        rest = np.delete(u, best)
        return float(u[best] - rest.max())


def perturbed_erd_pmf(p: PerturbedERD) -> PriceDist:
    base = derd_pmf(p.base)
    mass = base.mass * (1.0 - p.perturb)
    mass[-1] += p.perturb
    return PriceDist(p.base.grid, mass)


def discretize_distribution(
    values: np.ndarray, weights: np.ndarray, grid: PriceGrid
) -> PriceDist:
    """Pushforward of a distribution on (0, 1] under floor-to-grid.

    An atom at exactly 1 maps to 1 - 1/K, so the output never has mass at
    the top grid price and a profile of such draws always registers as a
    simultaneous multi-deviation from the all-ones path.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape:
        raise ValueError("values and weights must align")
    if np.any(values <= 0) or np.any(values > 1):
        raise ValueError("input distribution must live on (0, 1]")
    mass = np.zeros(grid.k + 1)
    idx = np.floor(values * grid.k).astype(int)
    exact = np.isclose(values * grid.k, np.round(values * grid.k), atol=1e-12)
    idx[exact] = np.round(values[exact] * grid.k).astype(int)
    idx[idx >= grid.k] = grid.k - 1
    np.add.at(mass, idx, weights)
    return PriceDist(grid, mass)


# --- extremal CCE program ---------------------------------------------------


def _orbits(n_values: int, m_players: int) -> np.ndarray:
    """All multisets (sorted tuples) of size M over indices 0..n_values-1."""
    combos = list(itertools.combinations_with_replacement(range(n_values), m_players))
    return np.array(combos, dtype=int)


def _pair_table(grid: PriceGrid, pairs: np.ndarray) -> np.ndarray:
    """u(p, {x, y}) for every grid price p and every sorted pair, in one array."""
    k = grid.k
    prices = grid.prices()[:, None]
    x = pairs[:, 0][None, :]
    y = pairs[:, 1][None, :]
    p = np.arange(k + 1)[:, None]
    win = (p < x).astype(float)
    tie_two = (p == x) & (x < y)
    tie_three = (p == x) & (x == y)
    return prices * (win + 0.5 * tie_two + (1.0 / 3.0) * tie_three)


@dataclass
class CceSolution:
    """Symmetric joint distribution maximizing the expected minimum price.

    `orbits` lists sorted index multisets over the grid without the top
    price; `probs` are their total probabilities. Sampling mode `correlated`
    draws one multiset per round and deals its entries to the defectors;
    `iid` has each defector draw independently from the symmetric marginal.
    """

    m_players: int
    grid: PriceGrid
    orbits: np.ndarray
    probs: np.ndarray
    objective: float
    tolerance: float
    mode: str = "correlated"
    iterations: int = 0
    max_violation: float = field(default=0.0)

    def equilibrium_payoff(self) -> float:
        return self.objective / self.m_players

    def marginal(self) -> PriceDist:
        mass = np.zeros(self.grid.k + 1)
        for orbit, q in zip(self.orbits, self.probs):
            for v in orbit:
                mass[v] += q / self.m_players
        return PriceDist(self.grid, mass)

    def others_marginal(
        self, n_keep: int | None = None
    ) -> list[tuple[tuple[int, ...], float]]:
        """Distribution of a uniformly chosen sub-multiset of co-defector draws.

        With the default n_keep = M-1 this is the view one defector has of
        the rest of the group; smaller n_keep arises when some group members
        have stopped playing their coordinate.
        """
        m = self.m_players
        if n_keep is None:
            n_keep = m - 1
        if not 0 <= n_keep <= m - 1:
            raise ValueError("n_keep must lie in [0, M-1]")
        acc: dict[tuple[int, ...], float] = {}
        subsets = list(itertools.combinations(range(m), n_keep))
        for orbit, q in zip(self.orbits, self.probs):
            if q <= 0:
                continue
            for keep in subsets:
                rest = tuple(orbit[j] for j in keep)
                acc[rest] = acc.get(rest, 0.0) + q / len(subsets)
        return sorted(acc.items())

    def deviation_values(self) -> np.ndarray:
        """Expected payoff of every fixed price against the co-defectors."""
        k = self.grid.k
        vals = np.zeros(k + 1)
        for rest, prob in self.others_marginal():
            for p in range(k + 1):
                vals[p] += prob * bertrand_payoffs([p, *rest], self.grid)[0]
        return vals

    def sample_round(self, rng: np.random.Generator) -> np.ndarray:
        """One correlated draw: a multiset dealt uniformly to the M players."""
        cdf = np.cumsum(self.probs)
        orbit = self.orbits[int(np.searchsorted(cdf, rng.random()))]
        return rng.permutation(orbit)

    def to_json(self) -> dict:
        return {
            "m_players": self.m_players,
            "k": self.grid.k,
            "orbits": self.orbits.tolist(),
            "probs": self.probs.tolist(),
            "objective": self.objective,
            "tolerance": self.tolerance,
            "mode": self.mode,
            "marginal": self.marginal().mass.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CceSolution":
        sol = cls(
            m_players=int(doc["m_players"]),
            grid=PriceGrid(int(doc["k"])),
            orbits=np.array(doc["orbits"], dtype=int),
            probs=np.array(doc["probs"], dtype=float),
            objective=float(doc["objective"]),
            tolerance=float(doc["tolerance"]),
            mode=doc.get("mode", "correlated"),
        )
        return sol

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


def solve_extremal_cce(
    m_players: int, grid: PriceGrid, tolerance: float = 1e-8
) -> CceSolution:
    """Maximize E[min price] over symmetric M-player joints that are CCEs.

    Constraints: for every fixed grid price p, the deviation payoff against
    the co-defectors' marginal does not exceed the symmetric equilibrium
    payoff E[min]/M by more than `tolerance`. The joint is restricted to
    prices strictly below 1 so that its draws always undercut the all-ones
    path simultaneously. The certified solution is re-verified against an
    independent constraint evaluator before being returned.
    """
    if m_players < 2:
        raise ValueError("need at least two defectors")
    k = grid.k
    n_values = k  # indices 0..K-1; the top price is excluded
    orbits = _orbits(n_values, m_players)
    n_orb = orbits.shape[0]
    if n_orb > 40000:
        raise ValueError(
            f"orbit table with {n_orb} entries exceeds the desk-scale budget"
        )
    obj = orbits[:, 0] / k  # min of a sorted multiset is its first entry

    if m_players == 2:
        prices = grid.prices()[:, None]
        p = np.arange(k + 1)[:, None]
        single = prices * ((p < np.arange(n_values)[None, :]).astype(float)
                           + 0.5 * (p == np.arange(n_values)[None, :]))
        dev = 0.5 * (single[:, orbits[:, 0]] + single[:, orbits[:, 1]])
    else:
        pairs = _orbits(n_values, m_players - 1)
        pair_id = {tuple(pr): i for i, pr in enumerate(pairs)}
        table = _pair_table(grid, pairs)
        cols = np.empty((m_players, n_orb), dtype=int)
        for drop in range(m_players):
            rest = np.delete(orbits, drop, axis=1)
            rest.sort(axis=1)
            cols[drop] = [pair_id[tuple(r)] for r in rest]
        dev = sum(table[:, cols[d]] for d in range(m_players)) / m_players

    a_ub = dev - (obj / m_players)[None, :]
    b_ub = np.full(k + 1, tolerance)
    a_eq = np.ones((1, n_orb))
    b_eq = np.array([1.0])
    result = linprog_maximize(obj, a_ub, b_ub, a_eq, b_eq)
    if result.status != "optimal":
        raise RuntimeError(f"CCE program did not solve: {result.status}")

    sol = CceSolution(
        m_players=m_players,
        grid=grid,
        orbits=orbits,
        probs=result.x,
        objective=result.value,
        tolerance=tolerance,
        iterations=result.iterations,
    )
    sol.max_violation = certify_cce(sol)
    if sol.max_violation > tolerance + 1e-9:
        raise RuntimeError(
            f"certification failed: constraint violation {sol.max_violation:.3e}"
        )
    return sol


def certify_cce(sol: CceSolution) -> float:
    """Re-verify the CCE constraints via direct payoff enumeration.

    Independent of the LP assembly: equilibrium and deviation payoffs are
    recomputed from realized Bertrand payoffs over the orbit support.
    """
    total = sol.probs.sum()
    if abs(total - 1.0) > 1e-7:
        raise RuntimeError(f"solution mass {total} not normalized")
    eq_payoff = 0.0
    for orbit, q in zip(sol.orbits, sol.probs):
        if q <= 0:
            continue
        payoffs = bertrand_payoffs(list(orbit), sol.grid)
        eq_payoff += q * payoffs.mean()
    dev = sol.deviation_values()
    return float(dev.max() - eq_payoff)
