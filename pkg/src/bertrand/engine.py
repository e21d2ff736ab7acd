"""Repeated-game execution engine.

Replicates that share the same trigger history are grouped into nodes: all
randomness that matters to any strategy flows through realized trigger
events, so learner states, price distributions, and conditional expectations
are identical within a node and are computed once. Monte Carlo mode samples
realized prices only to drive transitions (and, when a correlation device is
present, the device draws); prices and payoffs are recorded as exact
conditional expectations, which keeps the welfare identity exact per round.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from bertrand.distributions import CceSolution
from bertrand.grid import PriceGrid
from bertrand.learners import GuardedLearner, HedgeLearner, RegretRecord
from bertrand.strategies import (
    Automaton,
    DefectionSpec,
    FixedSequence,
    GuardedSpec,
    HedgeSpec,
    Profile,
    StrategySpec,
)

WELFARE_TOL = 1e-9


class ConfigError(ValueError):
    pass


@dataclass
class GameConfig:
    profile: Profile
    horizon: int
    defection: DefectionSpec | None = None
    mode: str = "monte_carlo"
    replicates: int = 100
    seed: int = 0
    record_rounds: bool = False
    record_profiles: bool = False
    record_learner_dists: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.replicates < 1:
            raise ConfigError("need at least one replicate")
        if self.mode not in ("monte_carlo", "exact"):
            raise ConfigError(f"unknown mode {self.mode!r}")


@dataclass
class Trace:
    seed: int
    mode: str
    horizon: int
    n_players: int
    k: int
    round_price_mean: np.ndarray | None = None
    realized_profiles: np.ndarray | None = None
    learner_dists: np.ndarray | None = None
    learner_player: int | None = None

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "mode": self.mode,
            "horizon": self.horizon,
            "n_players": self.n_players,
            "k": self.k,
            "round_price_mean": (
                self.round_price_mean.tolist() if self.round_price_mean is not None else None
            ),
            "realized_profiles": (
                self.realized_profiles.tolist() if self.realized_profiles is not None else None
            ),
            "learner_player": self.learner_player,
        }


@dataclass
class RunMetrics:
    market_price: float
    stderr: float
    utilities: np.ndarray
    utilities_stderr: np.ndarray
    regret: dict[int, RegretRecord]
    breach_rounds: dict[int, int | None]
    welfare_residual: float
    mode: str
    replicates: int

    def as_row(self) -> dict:
        return {
            "market_price": self.market_price,
            "stderr": self.stderr,
            "utilities": self.utilities.tolist(),
        }


@dataclass
class Lemma2Cap:
    """Closed-form market-price ceiling given a no-regret player's utility."""

    value: float
    clamped: float
    vacuous: bool


def lemma2_cap(c: float, r_over_t: float, grid: PriceGrid) -> Lemma2Cap:
    """cap = c + 1/K + (c + r/T)(1 + ln(1/c)); vacuous when c <= 0."""
    if c <= 0.0:
        return Lemma2Cap(value=1.0, clamped=1.0, vacuous=True)
    raw = c + 1.0 / grid.k + (c + r_over_t) * (1.0 + np.log(1.0 / c))
    return Lemma2Cap(value=float(raw), clamped=float(min(raw, 1.0)), vacuous=raw >= 1.0)


# --- compiled players ---------------------------------------------------------


class _AutomatonRuntime:
    def __init__(self, auto: Automaton):
        if len(auto.states) > 16:
            raise ConfigError("automata are limited to 16 states per player")
        self.auto = auto
        self.states = list(auto.states)
        self.state_id = {s: i for i, s in enumerate(self.states)}
        self.start = self.state_id[auto.start]
        self.n_outcomes = 2 ** len(auto.predicates)
        self.table = np.empty((len(self.states), self.n_outcomes), dtype=int)
        for (state, outcome), nxt in auto.transitions.items():
            code = sum(bit << j for j, bit in enumerate(outcome))
            self.table[self.state_id[state], code] = self.state_id[nxt]
        self.masses = [auto.outputs[s].mass for s in self.states]
        self.points = [
            int(np.argmax(m)) if np.max(m) == 1.0 else None for m in self.masses
        ]
        self.below_one_prob = [1.0 - m[-1] for m in self.masses]

    def outcome_codes(self, prices: np.ndarray) -> np.ndarray:
        codes = np.zeros(prices.shape[0], dtype=int)
        for j, pred in enumerate(self.auto.predicates):
            codes += pred.evaluate_batch(prices, self.auto.player).astype(int) << j
        return codes


class _Device:
    """Shared correlated sampler for a group of guarded defectors."""

    def __init__(self, solution: CceSolution, members: list[int]):
        if len(members) != solution.m_players:
            raise ConfigError(
                f"correlated group has {len(members)} members but the solution "
                f"was built for {solution.m_players}"
            )
        self.solution = solution
        self.members = members
        self.orbit_cdf = np.cumsum(solution.probs)
        self.orbits = solution.orbits
        self.perms = np.array(
            list(itertools.permutations(range(solution.m_players))), dtype=int
        )

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """(n, M) correlated price indices, columns aligned with members."""
        u = rng.random(n)
        oidx = np.searchsorted(self.orbit_cdf, u, side="left")
        oidx = np.minimum(oidx, len(self.orbits) - 1)
        pidx = rng.integers(0, len(self.perms), n)
        return self.orbits[oidx[:, None], self.perms[pidx]]


class _Node:
    """One trajectory-equivalence class of replicates."""

    __slots__ = ("auto_states", "learners", "members", "weight", "uid")

    def __init__(self, auto_states, learners, members, weight, uid):
        self.auto_states = auto_states  # dict player -> state id
        self.learners = learners  # dict player -> learner object
        self.members = members  # replicate indices (MC) or None (exact)
        self.weight = weight  # probability (exact) or None (MC)
        self.uid = uid


# --- conditional-expectation accounting --------------------------------------


def _tie_share_weights(above: list[float], equal: list[float]) -> tuple[float, ...]:
    """(w_0, ..., w_D): w_t = Pr[t of the dense players tie, rest strictly above]."""
    weights = [1.0]
    for a, e in zip(above, equal):
        nxt = [0.0] * (len(weights) + 1)
        for t, w in enumerate(weights):
            nxt[t] += w * a
            nxt[t + 1] += w * e
        weights = nxt
    return tuple(weights)


def _payoff_vector_vs(opponents_masses: list[np.ndarray], k: int) -> np.ndarray:
    """Expected payoff of every fixed price against independent opponents."""
    n = len(opponents_masses)
    prices = np.arange(k + 1) / k
    ties = np.zeros((n + 1, k + 1))
    ties[0] = 1.0
    for mass in opponents_masses:
        surv = np.cumsum(mass[::-1])[::-1]
        above = np.empty(k + 1)
        above[:-1] = surv[1:]
        above[-1] = 0.0
        prev = ties.copy()
        ties[0] = prev[0] * above
        for t in range(1, n + 1):
            ties[t] = prev[t] * above + prev[t - 1] * mass
    shares = 1.0 / (1.0 + np.arange(n + 1))
    return prices * (shares @ ties)


def _node_accounting(
    point_idx: dict[int, int],
    dense: dict[int, np.ndarray],
    k: int,
    known_vectors: dict[int, np.ndarray] | None = None,
) -> tuple[float, dict[int, float], dict[int, np.ndarray]]:
    """Exact conditional price, per-player payoffs, and dense payoff vectors.

    Point players are at fixed indices; dense players mix over the grid.
    Returns (expected min price, payoff per player, payoff vector per dense
    player). The payoffs sum to the price exactly. Callers that already hold
    a dense player's payoff vector pass it through known_vectors.
    """
    payoffs: dict[int, float] = {}
    vectors: dict[int, np.ndarray] = {}

    dense_surv = {}
    for i, mass in dense.items():
        dense_surv[i] = np.cumsum(mass[::-1])[::-1]
    prod_surv = np.ones(k + 1)
    for surv in dense_surv.values():
        prod_surv = prod_surv * surv
    a_min = min(point_idx.values()) if point_idx else k
    price = float(prod_surv[1 : a_min + 1].sum() / k) if a_min >= 1 else 0.0

    for i in dense:
        if known_vectors is not None and i in known_vectors:
            vec = known_vectors[i]
        else:
            others = [dense[j] for j in dense if j != i]
            for j, a in point_idx.items():
                point_mass = np.zeros(k + 1)
                point_mass[a] = 1.0
                others.append(point_mass)
            vec = _payoff_vector_vs(others, k) if others else np.arange(k + 1) / k
        vectors[i] = vec
        payoffs[i] = float(dense[i] @ vec)

    if point_idx:
        values = list(point_idx.values())
        low = min(values)
        c = values.count(low)
        above = []
        equal = []
        for i in dense:
            surv = dense_surv[i]
            above.append(float(surv[low + 1]) if low < k else 0.0)
            equal.append(float(dense[i][low]))
        tie_w = _tie_share_weights(above, equal)
        shared = (low / k) * sum(w / (c + t) for t, w in enumerate(tie_w))
        for j, a in point_idx.items():
            payoffs[j] = shared if a == low else 0.0

    total = sum(payoffs.values())
    if abs(total - price) > 1e-6:
        raise RuntimeError(f"welfare identity broke: {total} vs {price}")
    return price, payoffs, vectors


def _realized_accounting(
    prices: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Bertrand payoffs for an (R, N) matrix of realized indices."""
    low = prices.min(axis=1)
    winners = prices == low[:, None]
    shares = (low / k) / winners.sum(axis=1)
    payoffs = winners * shares[:, None]
    return low / k, payoffs


# --- the engine ---------------------------------------------------------------


class _Runner:
    def __init__(self, config: GameConfig):
        self.config = config
        self.grid = config.profile.grid
        self.k = self.grid.k
        self.n = config.profile.n_players
        self.specs: list[StrategySpec] = config.profile.with_defection(config.defection)
        self.rng = np.random.default_rng(config.seed)

        self.autos: dict[int, _AutomatonRuntime] = {}
        self.fixed: dict[int, FixedSequence] = {}
        self.learner_specs: dict[int, HedgeSpec | GuardedSpec] = {}
        guarded_groups: dict[int, list[int]] = {}
        for i, spec in enumerate(self.specs):
            if isinstance(spec, Automaton):
                self.autos[i] = _AutomatonRuntime(spec)
            elif isinstance(spec, FixedSequence):
                self.fixed[i] = spec
            elif isinstance(spec, HedgeSpec):
                self.learner_specs[i] = spec
            elif isinstance(spec, GuardedSpec):
                self.learner_specs[i] = spec
                if spec.cce.mode == "correlated":
                    guarded_groups.setdefault(spec.group, []).append(i)
            else:
                raise ConfigError(f"player {i} has unsupported spec {type(spec)}")

        self.device: _Device | None = None
        if guarded_groups:
            if len(guarded_groups) > 1:
                raise ConfigError("at most one correlated group per run")
            group = next(iter(guarded_groups))
            members = sorted(guarded_groups[group])
            sol = self.specs[members[0]].cce
            self.device = _Device(sol, members)
            non_members = [i for i in self.learner_specs if i not in members]
            if non_members:
                raise ConfigError(
                    "learners outside the correlated group are not supported"
                )

        if config.mode == "exact":
            if self.learner_specs:
                raise ConfigError("exact mode cannot run learner strategies")
            for runtime in self.autos.values():
                if not runtime.auto.only_below_one_triggers():
                    raise ConfigError(
                        "exact mode requires triggers that depend only on "
                        "prices below 1"
                    )

        self._uid = itertools.count()
        self._device_cache: dict[tuple, np.ndarray] = {}
        self._device_eq_cache: dict[tuple, float] = {}
        self._vec_cache: dict[tuple, np.ndarray] = {}

    # -- learner construction --

    def _fresh_learner(self, player: int):
        spec = self.learner_specs[player]
        horizon = self.config.horizon
        if isinstance(spec, HedgeSpec):
            return HedgeLearner(self.grid, horizon, spec.learning_rate)
        base = spec.cce.marginal().mass
        return GuardedLearner(
            self.grid,
            horizon,
            base,
            threshold_rate=spec.threshold_rate,
            threshold_mode=spec.threshold_mode,
        )

    # -- per-node views --

    def _generic_learner_vecs(
        self, node: _Node, points: dict[int, int], dense: dict[int, np.ndarray]
    ) -> dict[int, np.ndarray]:
        """Feedback vectors for learners outside the correlated-device path.

        A learner's vector depends only on its opponents, so nodes whose
        non-learner opponents are static reuse a cached copy keyed by the
        joint automaton state and the fixed-price layout.
        """
        out: dict[int, np.ndarray] = {}
        any_unbreached = self.device is not None and any(
            not node.learners[j].breached for j in self.device.members
        )
        for i in node.learners:
            if self.device is not None and i in self.device.members and any_unbreached:
                continue  # device path supplies this learner's feedback
            other_learners = [j for j in dense if j != i and j in node.learners]
            key = None
            if not other_learners:
                key = (
                    i,
                    tuple(sorted(points.items())),
                    tuple(sorted((j, node.auto_states[j]) for j in dense if j != i)),
                )
                cached = self._vec_cache.get(key)
                if cached is not None:
                    out[i] = cached
                    continue
            others = [dense[j] for j in dense if j != i]
            for _, a in sorted(points.items()):
                m = np.zeros(self.k + 1)
                m[a] = 1.0
                others.append(m)
            vec = _payoff_vector_vs(others, self.k) if others else self.grid.prices()
            if key is not None:
                self._vec_cache[key] = vec
            out[i] = vec
        return out

    def _node_dists(self, node: _Node, t: int) -> tuple[dict[int, int], dict[int, np.ndarray]]:
        """Current (point indices, dense masses) for every non-device player."""
        points: dict[int, int] = {}
        dense: dict[int, np.ndarray] = {}
        for i, rt in self.autos.items():
            s = node.auto_states[i]
            if rt.points[s] is not None:
                points[i] = rt.points[s]
            else:
                dense[i] = rt.masses[s]
        for i, seq in self.fixed.items():
            points[i] = seq.index_at(t)
        for i, learner in node.learners.items():
            if self.device is not None and i in self.device.members:
                if learner.breached:
                    dense[i] = learner.next_dist()
                # unbreached device members are realized separately
            else:
                dense[i] = learner.next_dist()
        return points, dense

    def _bystander_masses(self, points, dense) -> list[np.ndarray]:
        out = []
        for _, a in sorted(points.items()):
            m = np.zeros(self.k + 1)
            m[a] = 1.0
            out.append(m)
        out.extend(dense[i] for i in sorted(dense))
        return out

    def _device_key(self, points, dense, keep) -> tuple:
        return (
            keep,
            tuple(sorted(points.items())),
            tuple(sorted(dense)),
            tuple(np.round(dense[i], 12).tobytes() for i in sorted(dense)),
        )

    def _device_vec(
        self, points: dict[int, int], dense: dict[int, np.ndarray], keep: int
    ) -> np.ndarray:
        """Expected payoff of each fixed price against `keep` correlated
        co-draws plus the bystanders. Cached per signature."""
        key = self._device_key(points, dense, keep)
        hit = self._device_cache.get(key)
        if hit is not None:
            return hit
        sol = self.device.solution
        k = self.k
        vec = np.zeros(k + 1)
        bystanders = self._bystander_masses(points, dense)
        for rest, prob in sol.others_marginal(keep):
            opp = list(bystanders)
            for a in rest:
                m = np.zeros(k + 1)
                m[a] = 1.0
                opp.append(m)
            if opp:
                vec += prob * _payoff_vector_vs(opp, k)
            else:
                vec += prob * self.grid.prices()
        self._device_cache[key] = vec
        return vec

    def _device_eq_payoff(
        self, points: dict[int, int], dense: dict[int, np.ndarray], keep: int
    ) -> float:
        """Pre-draw expected payoff of an unbreached member's own coordinate."""
        key = self._device_key(points, dense, keep)
        hit = self._device_eq_cache.get(key)
        if hit is not None:
            return hit
        sol = self.device.solution
        k = self.k
        bystanders = self._bystander_masses(points, dense)
        if not dense and keep == sol.m_players - 1:
            # all bystanders at fixed prices: realized accounting vectorizes
            n_orb = len(sol.orbits)
            mat = np.empty((n_orb, sol.m_players + len(points)), dtype=int)
            mat[:, : sol.m_players] = sol.orbits
            mat[:, sol.m_players :] = np.fromiter(
                (a for _, a in sorted(points.items())), dtype=int, count=len(points)
            )
            _, payoffs = _realized_accounting(mat, k)
            eq_payoff = float(sol.probs @ payoffs[:, : sol.m_players].mean(axis=1))
        else:
            # average over the member's own coordinate of its payoff against
            # the kept co-draws and the bystanders
            eq_payoff = 0.0
            if keep + 1 == sol.m_players:
                own_and_rest = [
                    (tuple(orbit), q)
                    for orbit, q in zip(sol.orbits, sol.probs)
                    if q > 0
                ]
            else:
                own_and_rest = sol.others_marginal(keep + 1)
            for combo, prob in own_and_rest:
                for own_pos in range(len(combo)):
                    opp = list(bystanders)
                    for s2, a in enumerate(combo):
                        if s2 != own_pos:
                            m = np.zeros(k + 1)
                            m[a] = 1.0
                            opp.append(m)
                    if opp:
                        one = _payoff_vector_vs(opp, k)[combo[own_pos]]
                    else:
                        one = combo[own_pos] / k
                    eq_payoff += prob * one / len(combo)
        self._device_eq_cache[key] = eq_payoff
        return eq_payoff

    # -- main loop --

    def run(self) -> tuple[Trace, RunMetrics]:
        if self.config.mode == "exact":
            return self._run_exact()
        return self._run_monte_carlo()

    def _run_monte_carlo(self) -> tuple[Trace, RunMetrics]:
        cfg = self.config
        n_rep = cfg.replicates
        t_max = cfg.horizon
        learners0 = {i: self._fresh_learner(i) for i in self.learner_specs}
        root = _Node(
            auto_states={i: rt.start for i, rt in self.autos.items()},
            learners=learners0,
            members=np.arange(n_rep),
            weight=None,
            uid=next(self._uid),
        )
        nodes = [root]

        price_acc = np.zeros(n_rep)
        util_acc = np.zeros((n_rep, self.n))
        welfare_residual = 0.0
        round_mean = np.zeros(t_max) if cfg.record_rounds else None
        realized_log = (
            np.zeros((t_max, self.n), dtype=int) if cfg.record_profiles else None
        )
        learner_player = min(self.learner_specs) if self.learner_specs else None
        dist_log = (
            np.zeros((t_max, self.k + 1)) if cfg.record_learner_dists and learner_player is not None else None
        )

        for t in range(t_max):
            new_nodes: list[_Node] = []
            for node in nodes:
                points, dense = self._node_dists(node, t)
                learner_vecs = self._generic_learner_vecs(node, points, dense)
                r_node = len(node.members)
                realized = np.empty((r_node, self.n), dtype=int)
                for i, a in points.items():
                    realized[:, i] = a
                for i, mass in dense.items():
                    cdf = np.cumsum(mass)
                    u = self.rng.random(r_node)
                    realized[:, i] = np.minimum(
                        np.searchsorted(cdf, u, side="left"), self.k
                    )
                device_draws = None
                unbreached_members = []
                if self.device is not None:
                    device_draws = self.device.draw(self.rng, r_node)
                    for col, i in enumerate(self.device.members):
                        if not node.learners[i].breached:
                            realized[:, i] = device_draws[:, col]
                            unbreached_members.append(i)

                if unbreached_members:
                    # Condition on every realized draw: exact identity per row.
                    prices_r, payoffs_r = _realized_accounting(realized, self.k)
                    price_acc[node.members] += prices_r
                    util_acc[node.members] += payoffs_r
                    price_for_mean = prices_r.mean() if r_node else 0.0
                else:
                    price, payoffs, _ = _node_accounting(
                        points, dense, self.k, known_vectors=learner_vecs
                    )
                    price_acc[node.members] += price
                    for i, u_i in payoffs.items():
                        util_acc[node.members, i] += u_i
                    welfare_residual = max(
                        welfare_residual, abs(sum(payoffs.values()) - price)
                    )
                    price_for_mean = price

                if round_mean is not None:
                    round_mean[t] += price_for_mean * r_node / n_rep
                if realized_log is not None and 0 in node.members:
                    row = int(np.nonzero(node.members == 0)[0][0])
                    realized_log[t] = realized[row]
                if dist_log is not None and 0 in node.members:
                    lp = node.learners[learner_player]
                    dist_log[t] = lp.next_dist()

                # learner feedback and updates (shared across the node)
                for i, learner in node.learners.items():
                    # once the whole group has breached, the device is moot and
                    # the members are ordinary independent learners
                    if (
                        self.device is not None
                        and i in self.device.members
                        and unbreached_members
                    ):
                        n_unb = len(unbreached_members)
                        keep = n_unb - 1 if not learner.breached else n_unb
                        other_dense = {j: d for j, d in dense.items() if j != i}
                        vec = self._device_vec(points, other_dense, keep)
                        if learner.breached:
                            learner.update(vec)
                        else:
                            learner.update(
                                vec,
                                obtained=self._device_eq_payoff(
                                    points, other_dense, keep
                                ),
                            )
                    else:
                        learner.update(learner_vecs[i])

                # transitions
                if self.autos:
                    next_states = np.empty((r_node, len(self.autos)), dtype=int)
                    auto_ids = sorted(self.autos)
                    for col, i in enumerate(auto_ids):
                        rt = self.autos[i]
                        codes = rt.outcome_codes(realized)
                        next_states[:, col] = rt.table[node.auto_states[i], codes]
                    packed = np.zeros(r_node, dtype=np.int64)
                    for col in range(len(auto_ids)):
                        packed = packed * 16 + next_states[:, col]
                    uniq, inverse = np.unique(packed, return_inverse=True)
                    orig_members = node.members
                    for b, _code in enumerate(uniq):
                        rows = np.nonzero(inverse == b)[0]
                        states = {
                            i: int(next_states[rows[0], col])
                            for col, i in enumerate(auto_ids)
                        }
                        if b == 0:
                            node.auto_states = states
                            node.members = orig_members[rows]
                            new_nodes.append(node)
                        else:
                            new_nodes.append(
                                _Node(
                                    auto_states=states,
                                    learners={
                                        i: lr.clone() for i, lr in node.learners.items()
                                    },
                                    members=orig_members[rows],
                                    weight=None,
                                    uid=next(self._uid),
                                )
                            )
                else:
                    new_nodes.append(node)
            nodes = [nd for nd in new_nodes if len(nd.members)]

        price_by_rep = price_acc / t_max
        util_by_rep = util_acc / t_max
        market = float(price_by_rep.mean())
        stderr = (
            float(price_by_rep.std(ddof=1) / np.sqrt(n_rep)) if n_rep > 1 else 0.0
        )
        util_mean = util_by_rep.mean(axis=0)
        util_se = (
            util_by_rep.std(axis=0, ddof=1) / np.sqrt(n_rep)
            if n_rep > 1
            else np.zeros(self.n)
        )

        regret: dict[int, RegretRecord] = {}
        breach: dict[int, int | None] = {}
        for i in self.learner_specs:
            per_node = [(len(nd.members), nd.learners[i]) for nd in nodes]
            worst = max(per_node, key=lambda kv: kv[1].measured_regret())[1]
            regret[i] = worst.record()
            if isinstance(worst, GuardedLearner):
                rounds = [
                    nd.learners[i].breach_round
                    for nd in nodes
                    if nd.learners[i].breached
                ]
                breach[i] = min(rounds) if rounds else None

        trace = Trace(
            seed=cfg.seed,
            mode=cfg.mode,
            horizon=t_max,
            n_players=self.n,
            k=self.k,
            round_price_mean=round_mean,
            realized_profiles=realized_log,
            learner_dists=dist_log,
            learner_player=learner_player,
        )
        metrics = RunMetrics(
            market_price=market,
            stderr=stderr,
            utilities=util_mean,
            utilities_stderr=util_se,
            regret=regret,
            breach_rounds=breach,
            welfare_residual=welfare_residual,
            mode=cfg.mode,
            replicates=n_rep,
        )
        return trace, metrics

    def _run_exact(self) -> tuple[Trace, RunMetrics]:
        cfg = self.config
        t_max = cfg.horizon
        root = _Node(
            auto_states={i: rt.start for i, rt in self.autos.items()},
            learners={},
            members=None,
            weight=1.0,
            uid=next(self._uid),
        )
        nodes: dict[tuple, _Node] = {self._state_key(root): root}
        price_total = 0.0
        util_total = np.zeros(self.n)
        welfare_residual = 0.0
        round_mean = np.zeros(t_max) if cfg.record_rounds else None

        for t in range(t_max):
            merged: dict[tuple, _Node] = {}
            for node in nodes.values():
                points, dense = self._node_dists(node, t)
                price, payoffs, _ = _node_accounting(points, dense, self.k)
                price_total += node.weight * price
                for i, u_i in payoffs.items():
                    util_total[i] += node.weight * u_i
                welfare_residual = max(
                    welfare_residual, abs(sum(payoffs.values()) - price)
                )
                if round_mean is not None:
                    round_mean[t] += node.weight * price

                below_prob = {}
                for i, a in points.items():
                    below_prob[i] = 1.0 if a < self.k else 0.0
                for i, mass in dense.items():
                    below_prob[i] = 1.0 - mass[-1]
                stochastic = [i for i, q in below_prob.items() if 0.0 < q < 1.0]
                fixed_bits = {i: q >= 1.0 for i, q in below_prob.items() if i not in stochastic}
                for assignment in itertools.product([False, True], repeat=len(stochastic)):
                    prob = node.weight
                    bits = dict(fixed_bits)
                    for i, val in zip(stochastic, assignment):
                        q = below_prob[i]
                        prob *= q if val else (1.0 - q)
                        bits[i] = val
                    if prob <= 0.0:
                        continue
                    synthetic = np.array(
                        [[0 if bits[i] else self.k for i in range(self.n)]]
                    )
                    states = {}
                    for i, rt in self.autos.items():
                        code = int(rt.outcome_codes(synthetic)[0])
                        states[i] = int(rt.table[node.auto_states[i], code])
                    key = tuple(sorted(states.items()))
                    if key in merged:
                        merged[key].weight += prob
                    else:
                        merged[key] = _Node(
                            auto_states=states,
                            learners={},
                            members=None,
                            weight=prob,
                            uid=next(self._uid),
                        )
            nodes = merged

        trace = Trace(
            seed=cfg.seed,
            mode=cfg.mode,
            horizon=t_max,
            n_players=self.n,
            k=self.k,
            round_price_mean=round_mean,
        )
        metrics = RunMetrics(
            market_price=price_total / t_max,
            stderr=0.0,
            utilities=util_total / t_max,
            utilities_stderr=np.zeros(self.n),
            regret={},
            breach_rounds={},
            welfare_residual=welfare_residual,
            mode=cfg.mode,
            replicates=1,
        )
        return trace, metrics

    def _state_key(self, node: _Node) -> tuple:
        return tuple(sorted(node.auto_states.items()))


_residual_log: list[float] | None = None


@contextmanager
def record_welfare_residuals():
    """Collect the welfare-identity residual of every run in scope."""
    global _residual_log
    outer = _residual_log
    _residual_log = [] if outer is None else outer
    try:
        yield _residual_log
    finally:
        _residual_log = outer


def run(config: GameConfig) -> tuple[Trace, RunMetrics]:
    """Execute the repeated game described by the config."""
    trace, metrics = _Runner(config).run()
    if _residual_log is not None:
        _residual_log.append(metrics.welfare_residual)
    return trace, metrics


@dataclass
class DefectedPriceResult:
    defected: RunMetrics
    baseline: RunMetrics | None
    trace: Trace

    @property
    def baseline_price(self) -> float | None:
        return self.baseline.market_price if self.baseline is not None else None

    @property
    def market_price(self) -> float:
        return self.defected.market_price


def defected_price(
    profile: Profile,
    defection: DefectionSpec,
    horizon: int,
    replicates: int = 100,
    seed: int = 0,
    record_rounds: bool = False,
    record_learner_dists: bool = False,
) -> DefectedPriceResult:
    """Run a defection and its no-defection baseline on the same profile.

    The baseline runs in exact mode whenever the profile is all-automaton,
    which it is for every shipped construction. Defection-aware profiles
    have no baseline: their designated slot only exists under a defection.
    """
    baseline = None
    try:
        baseline_cfg = GameConfig(
            profile=profile, horizon=horizon, defection=None, mode="exact"
        )
        _, baseline = run(baseline_cfg)
    except ValueError:
        baseline = None
    trace, defected = run(
        GameConfig(
            profile=profile,
            horizon=horizon,
            defection=defection,
            mode="monte_carlo",
            replicates=replicates,
            seed=seed,
            record_rounds=record_rounds,
            record_learner_dists=record_learner_dists,
        )
    )
    return DefectedPriceResult(defected=defected, baseline=baseline, trace=trace)
