"""Equilibrium certification by exact best-response dynamic programming.

For automaton opponents the best deviation value is computed by backward
value iteration over (joint opponent state, round): within a round, every
price below one induces the same opponent transition kernel, so the per-round
decision reduces to the best undercutting payoff versus the best at-one
payoff plus their continuation values. Non-automaton environments fall back
to a canonical family of scripted deviations plus a Hedge run.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from bertrand.engine import GameConfig, _payoff_vector_vs, run
from bertrand.grid import PriceGrid
from bertrand.strategies import (
    Automaton,
    DefectionSpec,
    FixedSequence,
    HedgeSpec,
    Profile,
    StrategySpec,
)


@dataclass
class PlayerAudit:
    player: int
    equilibrium_utility: float
    best_deviation_value: float
    gain: float
    witness: str

    def to_json(self) -> dict:
        return {
            "player": self.player,
            "equilibrium_utility": self.equilibrium_utility,
            "best_deviation_value": self.best_deviation_value,
            "gain": self.gain,
            "witness": self.witness,
        }


@dataclass
class AuditReport:
    method: str
    horizon: int
    players: list[PlayerAudit] = field(default_factory=list)

    @property
    def eq_slack(self) -> float:
        """Certified approximation slack: the largest nonnegative gain."""
        if not self.players:
            return 0.0
        return max(0.0, max(p.gain for p in self.players))

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "horizon": self.horizon,
            "eq_slack": self.eq_slack,
            "players": [p.to_json() for p in self.players],
        }


class _OpponentChain:
    """Joint automaton state machine of everyone except the audited player."""

    def __init__(self, opponents: dict[int, Automaton], n_players: int, deviator: int):
        self.opponents = opponents
        self.order = sorted(opponents)
        self.n = n_players
        self.deviator = deviator
        for auto in opponents.values():
            if not auto.only_below_one_triggers():
                raise ValueError("exact audit needs below-one triggers only")

    def start(self) -> tuple[str, ...]:
        return tuple(self.opponents[j].start for j in self.order)

    def dists(self, state: tuple[str, ...]) -> list[np.ndarray]:
        return [
            self.opponents[j].output(s).mass for j, s in zip(self.order, state)
        ]

    def below_probs(self, state: tuple[str, ...]) -> dict[int, float]:
        return {
            j: 1.0 - self.opponents[j].output(s).mass[-1]
            for j, s in zip(self.order, state)
        }

    def kernel(
        self, state: tuple[str, ...], deviator_below: bool
    ) -> list[tuple[tuple[str, ...], float]]:
        """Distribution of the next joint state given the deviator's bit."""
        probs = self.below_probs(state)
        stochastic = [j for j, q in probs.items() if 0.0 < q < 1.0]
        out: dict[tuple[str, ...], float] = {}
        k = self.opponents[self.order[0]].grid.k
        for assignment in itertools.product([False, True], repeat=len(stochastic)):
            weight = 1.0
            bits = {j: probs[j] >= 1.0 for j in self.order}
            for j, below in zip(stochastic, assignment):
                weight *= probs[j] if below else 1.0 - probs[j]
                bits[j] = below
            if weight <= 0.0:
                continue
            prices = np.full((1, self.n), k, dtype=int)
            if deviator_below:
                prices[0, self.deviator] = 0
            for j in self.order:
                if bits[j]:
                    prices[0, j] = 0
            nxt = []
            for j, s in zip(self.order, state):
                auto = self.opponents[j]
                outcome = tuple(
                    bool(p.evaluate_batch(prices, auto.player)[0])
                    for p in auto.predicates
                )
                nxt.append(auto.transitions[(s, outcome)])
            key = tuple(nxt)
            out[key] = out.get(key, 0.0) + weight
        return sorted(out.items())


def _exact_best_response(
    chain: _OpponentChain, grid: PriceGrid, horizon: int
) -> tuple[float, str]:
    """Backward value iteration; returns (total value, witness description)."""
    k = grid.k
    # enumerate reachable joint states
    states = [chain.start()]
    seen = {chain.start()}
    frontier = [chain.start()]
    kernels: dict[tuple, dict[bool, list]] = {}
    while frontier:
        nxt_frontier = []
        for s in frontier:
            kernels[s] = {}
            for bit in (False, True):
                kern = chain.kernel(s, bit)
                kernels[s][bit] = kern
                for s2, _ in kern:
                    if s2 not in seen:
                        seen.add(s2)
                        states.append(s2)
                        nxt_frontier.append(s2)
        frontier = nxt_frontier

    rewards = {}
    for s in states:
        vec = _payoff_vector_vs(chain.dists(s), k)
        best_low = int(np.argmax(vec[:k]))
        rewards[s] = (float(vec[best_low]), best_low, float(vec[k]))

    values = {s: 0.0 for s in states}
    first_choice: dict[tuple, tuple[bool, int]] = {}
    for t in range(horizon - 1, -1, -1):
        nxt = {}
        for s in states:
            r_low, arg_low, r_top = rewards[s]
            cont_low = sum(p * values[s2] for s2, p in kernels[s][True])
            cont_top = sum(p * values[s2] for s2, p in kernels[s][False])
            v_low = r_low + cont_low
            v_top = r_top + cont_top
            if v_low >= v_top:
                nxt[s] = v_low
                choice = (True, arg_low)
            else:
                nxt[s] = v_top
                choice = (False, k)
            if t == 0:
                first_choice[s] = choice
        values = nxt

    # witness: greedy walk along most likely transitions
    s = chain.start()
    desc: list[str] = []
    below, price = first_choice[s]
    desc.append(f"round 1: price index {price}")
    kern = kernels[s][below]
    if kern:
        s2 = max(kern, key=lambda kv: kv[1])[0]
        if s2 != s:
            desc.append(f"then opponents move to {'/'.join(s2)}")
    witness = "; ".join(desc)
    return values[chain.start()], witness


def _equilibrium_utilities(specs: list[StrategySpec], profile: Profile, horizon: int,
                           replicates: int, seed: int) -> np.ndarray:
    shadow = Profile(profile.name, profile.n_players, profile.grid, specs, profile.params)
    has_learner = any(not isinstance(s, (Automaton, FixedSequence)) for s in specs)
    if has_learner:
        _, metrics = run(
            GameConfig(shadow, horizon=horizon, replicates=replicates, seed=seed)
        )
    else:
        _, metrics = run(GameConfig(shadow, horizon=horizon, mode="exact"))
    return metrics.utilities


def audit_exact(
    profile: Profile,
    horizon: int,
    players: list[int] | None = None,
    defection: DefectionSpec | None = None,
    replicates: int = 3,
    seed: int = 0,
) -> AuditReport:
    """Certify the profile's equilibrium slack by exact best-response DP.

    Falls back to canonical deviations with a warning when any opponent is
    not an automaton with below-one triggers.
    """
    specs = profile.with_defection(defection)
    targets = players if players is not None else list(range(profile.n_players))
    exact_ok = all(
        isinstance(s, Automaton) and s.only_below_one_triggers() for s in specs
    )
    if not exact_ok:
        warnings.warn(
            "non-automaton strategy present: falling back to canonical deviations",
            RuntimeWarning,
        )
        return audit_canonical(
            profile, horizon, players=targets, defection=defection,
            replicates=replicates, seed=seed,
        )

    utilities = _equilibrium_utilities(specs, profile, horizon, replicates, seed)
    report = AuditReport(method="exact_dp", horizon=horizon)
    for i in targets:
        opponents = {j: specs[j] for j in range(profile.n_players) if j != i}
        chain = _OpponentChain(opponents, profile.n_players, i)
        total, witness = _exact_best_response(chain, profile.grid, horizon)
        best = total / horizon
        gain = best - float(utilities[i])
        if gain < -1e-9:
            raise RuntimeError(
                f"DP value below equilibrium utility for player {i}: {gain}"
            )
        report.players.append(
            PlayerAudit(
                player=i,
                equilibrium_utility=float(utilities[i]),
                best_deviation_value=float(best),
                gain=float(gain),
                witness=witness,
            )
        )
    return report


def undercut_then_fixed(
    grid: PriceGrid, horizon: int, switch_round: int, tail_index: int | None = None
) -> FixedSequence:
    """Price one until switch_round, undercut once, then a fixed tail price."""
    tail = grid.k - 1 if tail_index is None else tail_index
    seq = [grid.k] * switch_round + [grid.k - 1] + [tail]
    return FixedSequence(0, grid, tuple(seq[: max(horizon, switch_round + 2)]))


def canonical_deviations(grid: PriceGrid, horizon: int) -> list[StrategySpec]:
    """Fixed prices, undercut-once-then-fixed family, and the Hedge learner."""
    devs: list[StrategySpec] = [
        FixedSequence(0, grid, (p,)) for p in range(grid.k + 1)
    ]
    n_switch = min(50, horizon)
    for t in np.linspace(0, horizon - 1, n_switch, dtype=int):
        devs.append(undercut_then_fixed(grid, horizon, int(t)))
    devs.append(HedgeSpec())
    return devs


def audit_canonical(
    profile: Profile,
    horizon: int,
    players: list[int] | None = None,
    defection: DefectionSpec | None = None,
    replicates: int = 3,
    seed: int = 0,
) -> AuditReport:
    """Evaluate the canonical deviation family through the engine."""
    specs = profile.with_defection(defection)
    targets = players if players is not None else list(range(profile.n_players))
    utilities = _equilibrium_utilities(specs, profile, horizon, replicates, seed)
    report = AuditReport(method="canonical_deviations", horizon=horizon)
    for i in targets:
        best_val = -np.inf
        best_desc = ""
        for d_idx, dev in enumerate(canonical_deviations(profile.grid, horizon)):
            dev_specs = list(specs)
            dev_specs[i] = (
                FixedSequence(i, profile.grid, dev.indices)
                if isinstance(dev, FixedSequence)
                else dev
            )
            shadow = Profile(
                profile.name, profile.n_players, profile.grid, dev_specs, profile.params
            )
            _, metrics = run(
                GameConfig(
                    shadow, horizon=horizon, replicates=replicates, seed=seed + d_idx
                )
            )
            if metrics.utilities[i] > best_val:
                best_val = float(metrics.utilities[i])
                best_desc = (
                    f"fixed sequence starting {dev.indices[:3]}"
                    if isinstance(dev, FixedSequence)
                    else "hedge learner"
                )
        gain = best_val - float(utilities[i])
        report.players.append(
            PlayerAudit(
                player=i,
                equilibrium_utility=float(utilities[i]),
                best_deviation_value=best_val,
                gain=gain,
                witness=best_desc,
            )
        )
    return report


def audit_adoption(
    profile: Profile,
    horizon: int,
    players: list[int] | None = None,
    replicates: int = 5,
    seed: int = 0,
) -> AuditReport:
    """Gain from unilaterally adopting the Hedge learner, per player."""
    specs = profile.with_defection(None)
    targets = players if players is not None else list(range(profile.n_players))
    utilities = _equilibrium_utilities(specs, profile, horizon, replicates, seed)
    report = AuditReport(method="noregret_only", horizon=horizon)
    for i in targets:
        _, metrics = run(
            GameConfig(
                profile,
                horizon=horizon,
                defection=DefectionSpec((i,), {i: HedgeSpec()}),
                replicates=replicates,
                seed=seed + 1000 + i,
            )
        )
        gain = float(metrics.utilities[i]) - float(utilities[i])
        report.players.append(
            PlayerAudit(
                player=i,
                equilibrium_utility=float(utilities[i]),
                best_deviation_value=float(metrics.utilities[i]),
                gain=gain,
                witness="hedge learner",
            )
        )
    return report


def audit_defection_aware(
    profile: Profile,
    designated: int,
    designated_strategy: StrategySpec,
    horizon: int,
    replicates: int = 3,
    seed: int = 0,
) -> AuditReport:
    """Audit the reduced game among everyone except the designated player.

    The designated player's strategy is folded into the environment; each
    remaining player's best deviation is certified by the exact DP when the
    whole environment is automata, otherwise by canonical deviations.
    """
    defection = DefectionSpec((designated,), {designated: designated_strategy})
    others = [j for j in range(profile.n_players) if j != designated]
    return audit_exact(
        profile,
        horizon,
        players=others,
        defection=defection,
        replicates=replicates,
        seed=seed,
    )
