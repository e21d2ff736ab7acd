"""Strategy descriptors and factory constructors for every threat profile.

Strategies are immutable descriptors; the engine owns all mutable run state.
Threat automata transition on predicates of the realized integer price
profile only, so replaying a trace reproduces the exact state sequence.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from bertrand.distributions import (
    CceSolution,
    DERDParams,
    PerturbedERD,
    perturbed_erd_pmf,
)
from bertrand.grid import PriceDist, PriceGrid, RealizedProfile, floor_to_grid
from bertrand.learners import hedge_regret_bound


class ConstructionError(ValueError):
    """A factory was asked for parameters its theorem does not cover."""


# --- event predicates -------------------------------------------------------


@dataclass(frozen=True)
class EventPredicate:
    """Trigger predicate over one round's realized price indices.

    kind is one of:
      anyone_below      some watched player priced strictly below threshold
      exactly_one_below exactly one watched player priced strictly below
      target_below      the given player priced strictly below threshold
      own_below         the automaton's owner priced strictly below threshold
    The threshold is a grid index; threshold == K means "below price 1".
    """

    kind: str
    threshold: int
    subset: tuple[int, ...] | None = None
    target: int | None = None

    def evaluate_batch(self, prices: np.ndarray, owner: int) -> np.ndarray:
        """Vectorized evaluation on an (R, N) array of price indices."""
        below = prices < self.threshold
        if self.kind == "anyone_below":
            cols = below if self.subset is None else below[:, list(self.subset)]
            return cols.any(axis=1)
        if self.kind == "exactly_one_below":
            cols = below if self.subset is None else below[:, list(self.subset)]
            return cols.sum(axis=1) == 1
        if self.kind == "target_below":
            return below[:, self.target]
        if self.kind == "own_below":
            return below[:, owner]
        raise ValueError(f"unknown predicate kind {self.kind!r}")

    def evaluate(self, profile: RealizedProfile | Sequence[int], owner: int) -> bool:
        idx = profile.indices if isinstance(profile, RealizedProfile) else tuple(profile)
        return bool(self.evaluate_batch(np.asarray([idx]), owner)[0])

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "threshold": self.threshold,
            "subset": list(self.subset) if self.subset is not None else None,
            "target": self.target,
        }


@dataclass(frozen=True)
class EventOutcome:
    """Truth assignment to an automaton's predicates for one round."""

    values: tuple[bool, ...]


# --- strategy descriptors ---------------------------------------------------


@dataclass(frozen=True)
class Automaton:
    """Finite-state strategy: output per state, transitions on event outcomes."""

    player: int
    n_players: int
    grid: PriceGrid
    states: tuple[str, ...]
    start: str
    outputs: dict[str, PriceDist]
    predicates: tuple[EventPredicate, ...]
    transitions: dict[tuple[str, tuple[bool, ...]], str]

    def __post_init__(self):
        outcomes = list(itertools.product([False, True], repeat=len(self.predicates)))
        for state in self.states:
            if state not in self.outputs:
                raise ValueError(f"state {state!r} has no output")
            for outcome in outcomes:
                if (state, outcome) not in self.transitions:
                    raise ValueError(
                        f"transition missing for state {state!r}, outcome {outcome}"
                    )
        if self.start not in self.states:
            raise ValueError("start state unknown")

    def output(self, state: str) -> PriceDist:
        return self.outputs[state]

    def outcome(self, profile: RealizedProfile | Sequence[int]) -> tuple[bool, ...]:
        return tuple(p.evaluate(profile, self.player) for p in self.predicates)

    def step(self, state: str, profile: RealizedProfile | Sequence[int]) -> str:
        return self.transitions[(state, self.outcome(profile))]

    def max_threshold(self) -> int:
        return max((p.threshold for p in self.predicates), default=0)

    def only_below_one_triggers(self) -> bool:
        return all(p.threshold == self.grid.k for p in self.predicates)


@dataclass(frozen=True)
class FixedSequence:
    """Plays a scripted sequence of price indices, repeating the last entry."""

    player: int
    grid: PriceGrid
    indices: tuple[int, ...]

    def __post_init__(self):
        if not self.indices:
            raise ValueError("empty price sequence")
        for i in self.indices:
            if not 0 <= i <= self.grid.k:
                raise ValueError("sequence index outside grid")

    def index_at(self, t: int) -> int:
        return self.indices[min(t, len(self.indices) - 1)]

    def output(self, t: int) -> PriceDist:
        return PriceDist.point(self.grid, self.index_at(t))


@dataclass(frozen=True)
class HedgeSpec:
    """A defector running Hedge with the horizon-tuned learning rate."""

    learning_rate: float | None = None


@dataclass(frozen=True)
class GuardedSpec:
    """A defector playing a CCE base behind a regret guard.

    Defectors sharing the same `group` and a `correlated` solution draw one
    joint outcome per round from a common device; `iid` mode draws each
    round independently from the symmetric marginal.
    """

    cce: CceSolution
    group: int = 0
    threshold_rate: float | None = None
    threshold_mode: str = "rate"


@dataclass(frozen=True)
class DesignatedSlot:
    """Placeholder for the player a defection-aware profile is built around."""


StrategySpec = Automaton | FixedSequence | HedgeSpec | GuardedSpec | DesignatedSlot


@dataclass(frozen=True)
class DefectionSpec:
    """Which players swap their profile strategy for which replacement."""

    defectors: tuple[int, ...]
    replacements: dict[int, StrategySpec]

    def __post_init__(self):
        if len(set(self.defectors)) != len(self.defectors):
            raise ValueError("duplicate defector indices")
        for i in self.defectors:
            if i not in self.replacements:
                raise ValueError(f"defector {i} has no replacement strategy")


@dataclass
class Profile:
    """A named strategy profile plus the parameters that built it."""

    name: str
    n_players: int
    grid: PriceGrid
    strategies: list[StrategySpec]
    params: dict = field(default_factory=dict)

    def with_defection(self, defection: DefectionSpec | None) -> list[StrategySpec]:
        out = list(self.strategies)
        if defection is not None:
            for i in defection.defectors:
                if not 0 <= i < self.n_players:
                    raise ValueError(f"defector {i} outside [0, {self.n_players})")
                out[i] = defection.replacements[i]
        for i, s in enumerate(out):
            if isinstance(s, DesignatedSlot):
                raise ValueError(
                    f"player {i} is a designated slot and needs a replacement strategy"
                )
        return out

    def to_json(self) -> dict:
        return {
            "construction": self.name,
            "n_players": self.n_players,
            "k": self.grid.k,
            "params": self.params,
        }


# --- history ----------------------------------------------------------------


@dataclass
class RoundRecord:
    profile: RealizedProfile
    dists: list[PriceDist] | None
    payoff_vectors: dict[int, np.ndarray] | None


class History:
    """Append-only per-round records of play."""

    def __init__(self, grid: PriceGrid):
        self.grid = grid
        self._records: list[RoundRecord] = []

    def append(self, record: RoundRecord) -> None:
        if record.payoff_vectors is not None:
            for vec in record.payoff_vectors.values():
                if vec.shape != (self.grid.k + 1,):
                    raise ValueError("payoff vector length must be K+1")
        self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, r: int) -> RoundRecord:
        return self._records[r]


# --- factory helpers --------------------------------------------------------


def _grim_automaton(
    player: int,
    n: int,
    grid: PriceGrid,
    watched: tuple[int, ...] | None,
    punish: PriceDist,
    coop: PriceDist | None = None,
) -> Automaton:
    coop = coop or PriceDist.point(grid, grid.k)
    pred = EventPredicate("anyone_below", grid.k, subset=watched)
    transitions = {
        ("COOPERATE", (False,)): "COOPERATE",
        ("COOPERATE", (True,)): "PUNISH",
        ("PUNISH", (False,)): "PUNISH",
        ("PUNISH", (True,)): "PUNISH",
    }
    return Automaton(
        player=player,
        n_players=n,
        grid=grid,
        states=("COOPERATE", "PUNISH"),
        start="COOPERATE",
        outputs={"COOPERATE": coop, "PUNISH": punish},
        predicates=(pred,),
        transitions=transitions,
    )


def _constant_automaton(player: int, n: int, grid: PriceGrid, output: PriceDist) -> Automaton:
    return Automaton(
        player=player,
        n_players=n,
        grid=grid,
        states=("FIXED",),
        start="FIXED",
        outputs={"FIXED": output},
        predicates=(),
        transitions={("FIXED", ()): "FIXED"},
    )


# --- constructions ----------------------------------------------------------


def make_simple_grim(n: int, grid: PriceGrid) -> Profile:
    """Price 1 until anyone undercuts, then the rounded 1/N threat forever."""
    if n < 2:
        raise ConstructionError("need at least two players")
    punish_idx = floor_to_grid(1.0 / n, grid)
    punish = PriceDist.point(grid, punish_idx)
    strategies = [_grim_automaton(i, n, grid, None, punish) for i in range(n)]
    return Profile("simple_grim", n, grid, strategies, {"punish_index": punish_idx})


def make_zero_grim(n: int, grid: PriceGrid) -> Profile:
    """Price 1 until anyone undercuts, then price 0 forever."""
    if n < 2:
        raise ConstructionError("need at least two players")
    punish = PriceDist.point(grid, 0)
    strategies = [_grim_automaton(i, n, grid, None, punish) for i in range(n)]
    return Profile("zero_grim", n, grid, strategies, {"punish_index": 0})


def make_pathological(i_star: int, n: int, grid: PriceGrid) -> Profile:
    """High-profit player fixed at 1 - 1/K; the rest grim on each other only.

    The others' trigger ignores i_star entirely, so i_star's defection leaves
    them pricing at one forever.
    """
    if n < 3:
        raise ConstructionError("the high-profit construction needs at least 3 players")
    if not 0 <= i_star < n:
        raise ConstructionError("designated player outside range")
    others = tuple(j for j in range(n) if j != i_star)
    punish = PriceDist.point(grid, 0)
    strategies: list[StrategySpec] = []
    for i in range(n):
        if i == i_star:
            strategies.append(
                _constant_automaton(i, n, grid, PriceDist.point(grid, grid.k - 1))
            )
        else:
            strategies.append(_grim_automaton(i, n, grid, others, punish))
    return Profile("pathological", n, grid, strategies, {"i_star": i_star})


def cyclic_perturbation_default(n: int, grid: PriceGrid, horizon: int) -> float:
    """perturb = sqrt((r(T)/T) / (ln N + 1)) with the Hedge regret bound."""
    r = hedge_regret_bound(grid, horizon)
    return float(np.sqrt((r / horizon) / (np.log(n) + 1.0)))


def make_cyclic_erd(
    n: int,
    grid: PriceGrid,
    perturb: float | None = None,
    horizon: int | None = None,
) -> Profile:
    """Cyclic threats: player (i+1) mod N alone punishes player i's deviation.

    The punisher switches to i.i.d. draws from the perturbed equal-revenue
    distribution with revenue level floor(1/N - 2*delta). Everyone else keeps
    pricing at one, so a defector faces an effectively two-player game.
    """
    if n < 2:
        raise ConstructionError("need at least two players")
    if perturb is None:
        if horizon is None:
            raise ConstructionError("need either an explicit perturbation or a horizon")
        perturb = cyclic_perturbation_default(n, grid, horizon)
    k = grid.k
    delta = (perturb - (1.0 - perturb) / k) / 2.0
    if delta <= 0:
        raise ConstructionError(
            f"perturbation {perturb:.4g} too small for K={k}: margin would be nonpositive"
        )
    c_target = 1.0 / n - 2.0 * delta
    if c_target <= 0:
        raise ConstructionError(
            f"threat revenue 1/N - 2*delta = {c_target:.4g} is nonpositive; "
            f"the grid is too coarse for N={n} (small-grid degeneracy)"
        )
    m = floor_to_grid(c_target, grid)
    if m < 1:
        raise ConstructionError(
            f"threat revenue {c_target:.4g} rounds to zero on a K={k} grid "
            "(small-grid degeneracy)"
        )
    high = PerturbedERD(DERDParams(grid, m), perturb)
    punish_dist = perturbed_erd_pmf(high)
    one = PriceDist.point(grid, k)
    strategies: list[StrategySpec] = []
    for i in range(n):
        target = (i + 1) % n
        preds = (
            EventPredicate("target_below", k, target=target),
            EventPredicate("anyone_below", k),
        )
        transitions = {}
        for state in ("COOPERATE", "DORMANT", "PUNISH"):
            for outcome in itertools.product([False, True], repeat=2):
                if state == "COOPERATE":
                    tgt_below, any_below = outcome
                    if tgt_below:
                        nxt = "PUNISH"
                    elif any_below:
                        nxt = "DORMANT"
                    else:
                        nxt = "COOPERATE"
                else:
                    nxt = state
                transitions[(state, outcome)] = nxt
        strategies.append(
            Automaton(
                player=i,
                n_players=n,
                grid=grid,
                states=("COOPERATE", "DORMANT", "PUNISH"),
                start="COOPERATE",
                outputs={"COOPERATE": one, "DORMANT": one, "PUNISH": punish_dist},
                predicates=preds,
                transitions=transitions,
            )
        )
    return Profile(
        "cyclic_erd",
        n,
        grid,
        strategies,
        {"perturb": perturb, "delta": delta, "m": m, "c": m / k},
    )


def make_multidefector_base(n: int, grid: PriceGrid) -> Profile:
    """Tolerate simultaneous multi-deviations, punish a lone deviator with 0."""
    if n < 2:
        raise ConstructionError("need at least two players")
    one = PriceDist.point(grid, grid.k)
    zero = PriceDist.point(grid, 0)
    preds = (
        EventPredicate("anyone_below", grid.k),
        EventPredicate("exactly_one_below", grid.k),
    )
    strategies: list[StrategySpec] = []
    for i in range(n):
        transitions = {}
        for state in ("COOPERATE", "TOLERATE", "PUNISH"):
            for outcome in itertools.product([False, True], repeat=2):
                if state == "COOPERATE":
                    any_below, exactly_one = outcome
                    if not any_below:
                        nxt = "COOPERATE"
                    elif exactly_one:
                        nxt = "PUNISH"
                    else:
                        nxt = "TOLERATE"
                else:
                    nxt = state
                transitions[(state, outcome)] = nxt
        strategies.append(
            Automaton(
                player=i,
                n_players=n,
                grid=grid,
                states=("COOPERATE", "TOLERATE", "PUNISH"),
                start="COOPERATE",
                outputs={"COOPERATE": one, "TOLERATE": one, "PUNISH": zero},
                predicates=preds,
                transitions=transitions,
            )
        )
    return Profile("multidefector_base", n, grid, strategies, {})


def make_defection_aware(i: int, n: int, grid: PriceGrid) -> Profile:
    """Grim among everyone except the designated player, whose slot stays open.

    The designated player's prices never enter any trigger, so the profile is
    an equilibrium of the reduced game no matter what that player runs.
    """
    if n < 2:
        raise ConstructionError("need at least two players")
    if not 0 <= i < n:
        raise ConstructionError("designated player outside range")
    watched = tuple(j for j in range(n) if j != i)
    punish = PriceDist.point(grid, 0)
    strategies: list[StrategySpec] = [
        DesignatedSlot() if j == i else _grim_automaton(j, n, grid, watched, punish)
        for j in range(n)
    ]
    return Profile("defection_aware", n, grid, strategies, {"ignored_player": i})


def make_welfare_aware(
    i: int,
    leader: int,
    n: int,
    grid: PriceGrid,
    m: int | None = None,
    perturb: float = 0.05,
) -> Profile:
    """Defection-aware profile where a leader keeps a constant welfare share.

    Followers grim-trigger on each other only; the leader plays i.i.d.
    perturbed equal-revenue draws every round, reducing play against the
    defector to a two-player game the leader wins a constant fraction of.
    """
    if n < 4:
        raise ConstructionError("the welfare-sharing construction needs at least 4 players")
    if i == leader:
        raise ConstructionError("leader must differ from the designated player")
    if not (0 <= i < n and 0 <= leader < n):
        raise ConstructionError("player index outside range")
    if m is None:
        m = max(1, floor_to_grid(1.0 / np.e, grid))
    high = PerturbedERD(DERDParams(grid, m), perturb)
    leader_dist = perturbed_erd_pmf(high)
    followers = tuple(j for j in range(n) if j not in (i, leader))
    punish = PriceDist.point(grid, 0)
    strategies: list[StrategySpec] = []
    for j in range(n):
        if j == i:
            strategies.append(DesignatedSlot())
        elif j == leader:
            strategies.append(_constant_automaton(j, n, grid, leader_dist))
        else:
            strategies.append(_grim_automaton(j, n, grid, followers, punish))
    return Profile(
        "welfare_aware",
        n,
        grid,
        strategies,
        {"ignored_player": i, "leader": leader, "m": m, "perturb": perturb},
    )


def make_random_trigger(
    n: int, grid: PriceGrid, rng: np.random.Generator, seed_note: int | None = None
) -> Profile:
    """Random grim-style automata: random trigger prices, punish distributions.

    Used by the market-share cap sweep; nothing here needs to be an
    equilibrium.
    """
    if n < 2:
        raise ConstructionError("need at least two players")
    strategies: list[StrategySpec] = []
    k = grid.k
    for i in range(n):
        tau = int(rng.integers(1, k + 1))
        coop_idx = int(rng.integers(tau, k + 1))
        kind = rng.random()
        if kind < 0.5:
            punish = PriceDist.point(grid, int(rng.integers(0, k + 1)))
        else:
            support = rng.choice(k + 1, size=min(k + 1, 5), replace=False)
            mass = np.zeros(k + 1)
            mass[support] = rng.dirichlet(np.ones(len(support)))
            punish = PriceDist(grid, mass)
        pred = EventPredicate("anyone_below", tau)
        transitions = {
            ("COOPERATE", (False,)): "COOPERATE",
            ("COOPERATE", (True,)): "PUNISH",
            ("PUNISH", (False,)): "PUNISH",
            ("PUNISH", (True,)): "PUNISH",
        }
        strategies.append(
            Automaton(
                player=i,
                n_players=n,
                grid=grid,
                states=("COOPERATE", "PUNISH"),
                start="COOPERATE",
                outputs={"COOPERATE": PriceDist.point(grid, coop_idx), "PUNISH": punish},
                predicates=(pred,),
                transitions=transitions,
            )
        )
    return Profile("random_trigger", n, grid, strategies, {"seed": seed_note})


def median_profit_set(utilities: Sequence[float]) -> list[int]:
    """The floor(N/2) lowest-utility players; ties break to the lowest index."""
    arr = np.asarray(utilities, dtype=float)
    order = np.argsort(arr, kind="stable")
    return sorted(int(j) for j in order[: len(arr) // 2])


# --- serialization ----------------------------------------------------------


def build_profile(doc: dict) -> Profile:
    """Rebuild a named construction from its JSON document."""
    name = doc["construction"]
    n = int(doc["n_players"])
    grid = PriceGrid(int(doc["k"]))
    params = doc.get("params", {})
    if name == "simple_grim":
        return make_simple_grim(n, grid)
    if name == "zero_grim":
        return make_zero_grim(n, grid)
    if name == "pathological":
        return make_pathological(int(params["i_star"]), n, grid)
    if name == "cyclic_erd":
        return make_cyclic_erd(n, grid, perturb=float(params["perturb"]))
    if name == "multidefector_base":
        return make_multidefector_base(n, grid)
    if name == "defection_aware":
        return make_defection_aware(int(params["ignored_player"]), n, grid)
    if name == "welfare_aware":
        return make_welfare_aware(
            int(params["ignored_player"]),
            int(params["leader"]),
            n,
            grid,
            m=int(params["m"]),
            perturb=float(params["perturb"]),
        )
    if name == "random_trigger":
        rng = np.random.default_rng(int(params["seed"]))
        return make_random_trigger(n, grid, rng, seed_note=int(params["seed"]))
    raise ValueError(f"unknown construction {name!r}")
