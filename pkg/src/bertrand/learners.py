"""No-regret learners over the price grid with full-information feedback.

Every learner consumes the exact expected payoff of each fixed price against
the opponents' current distributions, so regret accounting is deterministic
given the opponents' state path. Hedge is the canonical instantiation; the
guarded wrapper plays a fixed base distribution while its measured regret
stays under a threshold and then switches to Hedge for good.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bertrand.grid import PriceGrid


def hedge_learning_rate(grid: PriceGrid, horizon: int) -> float:
    return float(np.sqrt(8.0 * np.log(grid.k + 1.0) / horizon))


def hedge_regret_bound(grid: PriceGrid, horizon: int) -> float:
    """Worst-case Hedge regret sqrt(T ln(K+1) / 2) at the tuned rate."""
    return float(np.sqrt(horizon * np.log(grid.k + 1.0) / 2.0))


@dataclass
class RegretRecord:
    measured_regret: float
    theoretical_bound: float
    best_fixed_price: int


def best_fixed_price(payoff_history: np.ndarray) -> tuple[int, float]:
    """Best fixed price in hindsight and its cumulative payoff.

    Accepts either a (T, K+1) stack of per-round payoff vectors or the
    already-summed (K+1,) vector. Ties break to the lowest index.
    """
    arr = np.asarray(payoff_history, dtype=float)
    if arr.ndim == 2:
        arr = arr.sum(axis=0)
    elif arr.ndim != 1:
        raise ValueError("payoff history must be 1- or 2-dimensional")
    if arr.size == 0:
        raise ValueError("empty payoff history")
    idx = int(np.argmax(arr))
    return idx, float(arr[idx])


def count_bad_rounds(pstar_mass_by_round: np.ndarray, p_star: int | None = None) -> float:
    """Total probability mass placed off the best-response price.

    Accepts either the (T,) series of P_t(p*) or a (T, K+1) stack of output
    distributions together with the best-response index.
    """
    arr = np.asarray(pstar_mass_by_round, dtype=float)
    if arr.ndim == 2:
        if p_star is None:
            raise ValueError("p_star required with full distributions")
        arr = arr[:, p_star]
    return float(np.sum(1.0 - arr))


class HedgeLearner:
    """Multiplicative-weights learner with weights kept in log space."""

    def __init__(self, grid: PriceGrid, horizon: int, learning_rate: float | None = None):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.grid = grid
        self.horizon = horizon
        self.learning_rate = (
            hedge_learning_rate(grid, horizon) if learning_rate is None else learning_rate
        )
        self.log_weights = np.zeros(grid.k + 1)
        self.cumulative_payoff_per_price = np.zeros(grid.k + 1)
        self.cumulative_obtained = 0.0
        self.rounds_seen = 0

    def next_dist(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    def update(self, payoff_vector: np.ndarray, obtained: float | None = None) -> None:
        v = np.asarray(payoff_vector, dtype=float)
        if v.shape != (self.grid.k + 1,):
            raise ValueError("payoff vector length must be K+1")
        if v.min() < -1e-12 or v.max() > 1.0 + 1e-12:
            raise ValueError(f"payoff vector outside [0, 1]: [{v.min()}, {v.max()}]")
        played = self.next_dist()
        if obtained is None:
            obtained = float(played @ v)
        self.cumulative_payoff_per_price += v
        self.cumulative_obtained += obtained
        self.rounds_seen += 1
        self.log_weights += self.learning_rate * v
        self.log_weights -= self.log_weights.max()

    def measured_regret(self) -> float:
        if self.rounds_seen == 0:
            return 0.0
        return float(self.cumulative_payoff_per_price.max() - self.cumulative_obtained)

    def theoretical_bound(self) -> float:
        return hedge_regret_bound(self.grid, self.horizon)

    def record(self) -> RegretRecord:
        idx, _ = best_fixed_price(self.cumulative_payoff_per_price)
        return RegretRecord(self.measured_regret(), self.theoretical_bound(), idx)

    def clone(self) -> "HedgeLearner":
        other = HedgeLearner(self.grid, self.horizon, self.learning_rate)
        other.log_weights = self.log_weights.copy()
        other.cumulative_payoff_per_price = self.cumulative_payoff_per_price.copy()
        other.cumulative_obtained = self.cumulative_obtained
        other.rounds_seen = self.rounds_seen
        return other


class GuardedLearner:
    """Plays a base distribution until measured regret breaches a threshold.

    In `rate` mode the guard allows cumulative regret up to threshold_rate * t
    after t rounds; `absolute` mode compares against threshold_rate directly.
    Once breached the learner hands every future round to a fresh Hedge
    instance and never returns to the base.
    """

    def __init__(
        self,
        grid: PriceGrid,
        horizon: int,
        base: np.ndarray,
        threshold_rate: float | None = None,
        threshold_mode: str = "rate",
    ):
        base = np.asarray(base, dtype=float)
        if base.shape != (grid.k + 1,):
            raise ValueError("base distribution length must be K+1")
        if threshold_mode not in ("rate", "absolute"):
            raise ValueError(f"unknown threshold mode {threshold_mode!r}")
        self.grid = grid
        self.horizon = horizon
        self.base = base / base.sum()
        self.threshold_rate = 2.0 / grid.k if threshold_rate is None else threshold_rate
        self.threshold_mode = threshold_mode
        self.hedge = HedgeLearner(grid, horizon)
        self.breached = False
        self.breach_round: int | None = None
        self.cumulative_payoff_per_price = np.zeros(grid.k + 1)
        self.cumulative_obtained = 0.0
        self.rounds_seen = 0

    def next_dist(self) -> np.ndarray:
        return self.hedge.next_dist() if self.breached else self.base

    def _allowance(self) -> float:
        if self.threshold_mode == "rate":
            return self.threshold_rate * self.rounds_seen
        return self.threshold_rate

    def update(self, payoff_vector: np.ndarray, obtained: float | None = None) -> None:
        v = np.asarray(payoff_vector, dtype=float)
        if v.min() < -1e-12 or v.max() > 1.0 + 1e-12:
            raise ValueError("payoff vector outside [0, 1]")
        played = self.next_dist()
        if obtained is None:
            obtained = float(played @ v)
        self.cumulative_payoff_per_price += v
        self.cumulative_obtained += obtained
        self.rounds_seen += 1
        if self.breached:
            self.hedge.update(v, obtained)
        elif self.measured_regret() > self._allowance():
            self.breached = True
            self.breach_round = self.rounds_seen

    def measured_regret(self) -> float:
        if self.rounds_seen == 0:
            return 0.0
        return float(self.cumulative_payoff_per_price.max() - self.cumulative_obtained)

    def theoretical_bound(self) -> float:
        # pre-breach slack + the breach round itself + the Hedge guarantee
        rate_part = (
            self.threshold_rate * self.horizon
            if self.threshold_mode == "rate"
            else self.threshold_rate
        )
        return rate_part + 1.0 + hedge_regret_bound(self.grid, self.horizon)

    def record(self) -> RegretRecord:
        idx, _ = best_fixed_price(self.cumulative_payoff_per_price)
        return RegretRecord(self.measured_regret(), self.theoretical_bound(), idx)

    def clone(self) -> "GuardedLearner":
        other = GuardedLearner(
            self.grid,
            self.horizon,
            self.base,
            self.threshold_rate,
            self.threshold_mode,
        )
        other.hedge = self.hedge.clone()
        other.breached = self.breached
        other.breach_round = self.breach_round
        other.cumulative_payoff_per_price = self.cumulative_payoff_per_price.copy()
        other.cumulative_obtained = self.cumulative_obtained
        other.rounds_seen = self.rounds_seen
        return other
