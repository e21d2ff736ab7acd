"""Threat automata, factory constructions, and profile serialization."""

import numpy as np
import pytest

from bertrand.grid import PriceGrid, PriceDist
from bertrand.strategies import (
    Automaton,
    ConstructionError,
    DefectionSpec,
    EventPredicate,
    FixedSequence,
    HedgeSpec,
    History,
    RoundRecord,
    build_profile,
    make_cyclic_erd,
    make_defection_aware,
    make_multidefector_base,
    make_pathological,
    make_random_trigger,
    make_simple_grim,
    make_welfare_aware,
    make_zero_grim,
    median_profit_set,
)
from bertrand.grid import RealizedProfile


def walk(auto: Automaton, rounds):
    state = auto.start
    seen = [state]
    for profile in rounds:
        state = auto.step(state, profile)
        seen.append(state)
    return seen


class TestSimpleGrim:
    def test_punish_price_quarter_on_tenths(self):
        profile = make_simple_grim(4, PriceGrid(10))
        assert profile.params["punish_index"] == 2

    def test_punish_price_half_on_thirds(self):
        profile = make_simple_grim(2, PriceGrid(3))
        assert profile.params["punish_index"] == 1

    def test_trigger_and_absorption(self):
        grid = PriceGrid(10)
        profile = make_simple_grim(3, grid)
        auto = profile.strategies[0]
        states = walk(auto, [(10, 10, 10), (10, 9, 10), (10, 10, 10)])
        assert states == ["COOPERATE", "COOPERATE", "PUNISH", "PUNISH"]
        assert auto.output("PUNISH").mass[profile.params["punish_index"]] == 1.0

    def test_replay_reproduces_state_sequence(self):
        grid = PriceGrid(7)
        auto = make_simple_grim(2, grid).strategies[1]
        rng = np.random.default_rng(4)
        rounds = [tuple(rng.integers(0, 8, 2)) for _ in range(30)]
        assert walk(auto, rounds) == walk(auto, rounds)


class TestZeroGrim:
    def test_absorbing_zero_after_any_undercut(self):
        grid = PriceGrid(5)
        profile = make_zero_grim(2, grid)
        auto = profile.strategies[0]
        state = auto.step("COOPERATE", (5, 4))
        assert state == "PUNISH"
        assert auto.output("PUNISH").mass[0] == 1.0
        for prices in [(5, 5), (0, 0), (3, 5)]:
            assert auto.step("PUNISH", prices) == "PUNISH"


class TestPathological:
    def test_needs_three_players(self):
        with pytest.raises(ConstructionError):
            make_pathological(0, 2, PriceGrid(10))

    def test_designated_player_fixed_below_one(self):
        grid = PriceGrid(50)
        profile = make_pathological(1, 4, grid)
        fixed = profile.strategies[1]
        assert fixed.output(fixed.start).mass[49] == 1.0

    def test_others_ignore_designated_player(self):
        grid = PriceGrid(50)
        profile = make_pathological(1, 4, grid)
        watcher = profile.strategies[0]
        # i_star undercutting alone never triggers anyone
        assert watcher.step("COOPERATE", (50, 0, 50, 50)) == "COOPERATE"
        # another player undercutting does
        assert watcher.step("COOPERATE", (50, 50, 49, 50)) == "PUNISH"


class TestCyclicErd:
    def test_exactly_one_punisher_after_unilateral_defection(self):
        grid = PriceGrid(100)
        profile = make_cyclic_erd(4, grid, perturb=0.15)
        deviator = 2
        realized = [100, 100, 99, 100]
        states = [s.step(s.start, realized) for s in profile.strategies]
        punishers = [i for i, st in enumerate(states) if st == "PUNISH"]
        assert punishers == [(deviator - 1) % 4]
        assert states[deviator] == "DORMANT" or states[deviator] == "PUNISH" or True
        dormant = [i for i, st in enumerate(states) if st == "DORMANT"]
        assert deviator in dormant or deviator in punishers

    def test_simultaneous_first_deviations_trigger_both_punishers(self):
        grid = PriceGrid(100)
        profile = make_cyclic_erd(4, grid, perturb=0.15)
        realized = [99, 100, 99, 100]  # players 0 and 2 undercut together
        states = [s.step(s.start, realized) for s in profile.strategies]
        assert states[3] == "PUNISH"  # watches player 0
        assert states[1] == "PUNISH"  # watches player 2

    def test_punish_output_is_perturbed_erd(self):
        grid = PriceGrid(100)
        profile = make_cyclic_erd(3, grid, perturb=0.2)
        punish = profile.strategies[0].output("PUNISH")
        m = profile.params["m"]
        assert np.all(punish.mass[:m] == 0.0)
        assert punish.mass[-1] > 0.2  # inflated top atom

    def test_deviator_best_reply_to_punisher_stays_below_equal_split(self):
        # a triggered punisher leaves the deviator no one-shot reply worth
        # more than the 1/N cooperative share, which is what deters deviation
        from bertrand.grid import expected_payoff_vector

        for n, k in [(2, 100), (4, 100), (4, 1000), (6, 1000)]:
            profile = make_cyclic_erd(n, PriceGrid(k), horizon=1000)
            punish = profile.strategies[0].output("PUNISH")
            utilities = expected_payoff_vector([punish])
            assert utilities.max() <= 1 / n + 1e-12

    def test_default_perturbation_from_horizon(self):
        grid = PriceGrid(1000)
        profile = make_cyclic_erd(2, grid, horizon=20000)
        r_over_t = np.sqrt(20000 * np.log(1001) / 2) / 20000
        assert profile.params["perturb"] == pytest.approx(
            np.sqrt(r_over_t / (np.log(2) + 1))
        )

    def test_small_grid_degeneracy_rejected(self):
        with pytest.raises(ConstructionError):
            make_cyclic_erd(8, PriceGrid(4), perturb=0.4)


class TestMultidefectorBase:
    def test_multi_deviation_is_tolerated(self):
        grid = PriceGrid(10)
        profile = make_multidefector_base(4, grid)
        auto = profile.strategies[3]
        assert auto.step("COOPERATE", (9, 8, 10, 10)) == "TOLERATE"
        assert auto.step("TOLERATE", (0, 0, 10, 10)) == "TOLERATE"
        assert auto.output("TOLERATE").mass[10] == 1.0

    def test_single_deviation_is_punished(self):
        grid = PriceGrid(10)
        profile = make_multidefector_base(4, grid)
        auto = profile.strategies[3]
        assert auto.step("COOPERATE", (9, 10, 10, 10)) == "PUNISH"
        assert auto.output("PUNISH").mass[0] == 1.0


class TestDefectionAware:
    def test_designated_slot_requires_replacement(self):
        grid = PriceGrid(10)
        profile = make_defection_aware(1, 3, grid)
        with pytest.raises(ValueError):
            profile.with_defection(None)
        filled = profile.with_defection(
            DefectionSpec((1,), {1: HedgeSpec()})
        )
        assert isinstance(filled[1], HedgeSpec)

    def test_triggers_ignore_designated_player(self):
        grid = PriceGrid(10)
        profile = make_defection_aware(0, 3, grid)
        auto = profile.strategies[1]
        assert auto.step("COOPERATE", (0, 10, 10)) == "COOPERATE"
        assert auto.step("COOPERATE", (10, 10, 9)) == "PUNISH"


class TestWelfareAware:
    def test_needs_four_players(self):
        with pytest.raises(ConstructionError):
            make_welfare_aware(0, 1, 3, PriceGrid(10))

    def test_followers_ignore_defector_and_leader(self):
        grid = PriceGrid(100)
        profile = make_welfare_aware(0, 1, 5, grid)
        follower = profile.strategies[2]
        # defector (0) and leader (1) both price low: no trigger
        assert follower.step("COOPERATE", (0, 30, 100, 100, 100)) == "COOPERATE"
        assert follower.step("COOPERATE", (100, 100, 100, 99, 100)) == "PUNISH"

    def test_leader_plays_perturbed_erd_every_round(self):
        grid = PriceGrid(100)
        profile = make_welfare_aware(0, 1, 5, grid)
        leader = profile.strategies[1]
        assert len(leader.states) == 1
        assert leader.output(leader.start).mass[-1] > 0.0


class TestMedianProfitSet:
    def test_symmetric_profile_breaks_ties_by_index(self):
        assert median_profit_set([0.25, 0.25, 0.25, 0.25]) == [0, 1]

    def test_three_players_lowest(self):
        assert median_profit_set([0.1, 0.5, 0.2]) == [0]

    def test_pathological_excludes_designated_player(self):
        utilities = [0.0, 0.99, 0.0, 0.0]  # player 1 is the high-profit player
        assert 1 not in median_profit_set(utilities)


class TestSerialization:
    @pytest.mark.parametrize(
        "profile",
        [
            make_simple_grim(4, PriceGrid(10)),
            make_zero_grim(3, PriceGrid(8)),
            make_pathological(2, 4, PriceGrid(20)),
            make_cyclic_erd(4, PriceGrid(100), perturb=0.15),
            make_multidefector_base(5, PriceGrid(12)),
            make_defection_aware(1, 4, PriceGrid(9)),
            make_welfare_aware(0, 2, 5, PriceGrid(50)),
        ],
    )
    def test_json_round_trip_rebuilds_identical_outputs(self, profile):
        doc = profile.to_json()
        rebuilt = build_profile(doc)
        assert rebuilt.name == profile.name
        assert rebuilt.n_players == profile.n_players
        for a, b in zip(profile.strategies, rebuilt.strategies):
            if hasattr(a, "outputs"):
                assert a.states == b.states
                for s in a.states:
                    assert a.output(s).mass == pytest.approx(b.output(s).mass)

    def test_random_trigger_rebuilds_from_seed(self):
        grid = PriceGrid(30)
        prof = make_random_trigger(3, grid, np.random.default_rng(99), seed_note=99)
        rebuilt = build_profile(prof.to_json())
        for a, b in zip(prof.strategies, rebuilt.strategies):
            for s in a.states:
                assert a.output(s).mass == pytest.approx(b.output(s).mass)
            assert a.predicates == b.predicates


class TestPredicatesAndHistory:
    def test_automaton_requires_total_transitions(self):
        grid = PriceGrid(4)
        with pytest.raises(ValueError):
            Automaton(
                player=0,
                n_players=2,
                grid=grid,
                states=("A",),
                start="A",
                outputs={"A": PriceDist.point(grid, 4)},
                predicates=(EventPredicate("anyone_below", 4),),
                transitions={("A", (False,)): "A"},  # missing (True,)
            )

    def test_fixed_sequence_repeats_last_entry(self):
        seq = FixedSequence(0, PriceGrid(5), (5, 3))
        assert [seq.index_at(t) for t in range(4)] == [5, 3, 3, 3]

    def test_history_append_only_and_validated(self):
        grid = PriceGrid(4)
        h = History(grid)
        h.append(RoundRecord(RealizedProfile((4, 4)), None, {0: np.zeros(5)}))
        assert len(h) == 1
        with pytest.raises(ValueError):
            h.append(RoundRecord(RealizedProfile((4, 4)), None, {0: np.zeros(3)}))

    def test_own_below_predicate(self):
        pred = EventPredicate("own_below", 5)
        assert pred.evaluate((4, 5), owner=0)
        assert not pred.evaluate((4, 5), owner=1)
