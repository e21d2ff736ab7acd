"""Equal-revenue distributions, discretization, and the CCE program."""

import itertools

import numpy as np
import pytest

from bertrand.distributions import (
    CceSolution,
    DERDParams,
    PerturbedERD,
    certify_cce,
    derd_pmf,
    discretize_distribution,
    favorable_tie_revenue,
    harmonic,
    perturbed_erd_pmf,
    solve_extremal_cce,
)
from bertrand.grid import PriceGrid, PriceDist, bertrand_payoffs, expected_payoff_vector
from bertrand.simplex import linprog_maximize


class TestHarmonic:
    def test_first_values(self):
        assert harmonic(1) == 1.0
        assert harmonic(4) == pytest.approx(25 / 12)

    def test_log_bounds_on_differences(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            m = int(rng.integers(1, 200))
            n = int(rng.integers(m + 1, 400))
            diff = harmonic(n) - harmonic(m)
            assert np.log((n + 1) / (m + 1)) <= diff + 1e-12
            assert diff <= np.log(n / m) + 1e-12

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            harmonic(0)


class TestDerd:
    def test_half_on_two_point_grid(self):
        params = DERDParams(PriceGrid(2), m=1)
        dist = derd_pmf(params)
        assert dist.mass == pytest.approx([0.0, 0.5, 0.5])
        assert dist.expectation() == pytest.approx(0.75)
        # harmonic-number closed form
        assert dist.expectation() == pytest.approx(0.5 * (harmonic(2) - harmonic(1) + 1))

    def test_mass_telescopes_to_one(self):
        for k, m in [(10, 3), (100, 37), (1000, 368), (7, 6)]:
            dist = derd_pmf(DERDParams(PriceGrid(k), m))
            assert abs(dist.mass.sum() - 1.0) < 1e-12
            assert np.all(dist.mass[:m] == 0.0)

    def test_favorable_tie_revenue_constant_on_support(self):
        params = DERDParams(PriceGrid(40), m=13)
        dist = derd_pmf(params)
        for i in range(params.m, 41):
            assert favorable_tie_revenue(dist, i) == pytest.approx(params.c, abs=1e-12)

    def test_uniform_tie_revenue_within_grid_step_of_c(self):
        params = DERDParams(PriceGrid(30), m=9)
        dist = derd_pmf(params)
        utilities = expected_payoff_vector([dist])
        for i in range(params.m, 30):
            assert abs(utilities[i] - params.c) <= 1 / 30

    def test_expectation_within_harmonic_bounds(self):
        for k, m in [(25, 5), (100, 36), (400, 113)]:
            params = DERDParams(PriceGrid(k), m)
            c = params.c
            e = derd_pmf(params).expectation()
            assert c * (np.log((k + 1) / (m + 1)) + 1) <= e + 1e-12
            assert e <= c * (np.log(k / m) + 1) + 1e-12

    def test_m_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            DERDParams(PriceGrid(10), m=0)
        with pytest.raises(ValueError):
            DERDParams(PriceGrid(10), m=10)


class TestPerturbedErd:
    def test_zero_perturbation_reduces_to_base(self):
        params = DERDParams(PriceGrid(20), m=6)
        plain = derd_pmf(params)
        perturbed = perturbed_erd_pmf(PerturbedERD(params, 0.0))
        assert perturbed.mass == pytest.approx(plain.mass)

    def test_top_mass_inflated_and_rest_scaled(self):
        params = DERDParams(PriceGrid(20), m=6)
        eps = 0.2
        base = derd_pmf(params)
        high = perturbed_erd_pmf(PerturbedERD(params, eps))
        assert high.mass[-1] == pytest.approx((1 - eps) * base.mass[-1] + eps)
        assert high.mass[:-1] == pytest.approx((1 - eps) * base.mass[:-1])

    def test_second_highest_price_is_unique_best_response(self):
        for k, m, eps in [(50, 15, 0.1), (100, 30, 0.3), (20, 5, 0.25)]:
            dist = PerturbedERD(DERDParams(PriceGrid(k), m), eps)
            assert dist.best_response() == k - 1
            assert dist.margin() > 0.0

    def test_stochastic_dominance_lifts_expectation(self):
        params = DERDParams(PriceGrid(100), m=30)
        c = params.c
        high = perturbed_erd_pmf(PerturbedERD(params, 0.1))
        assert high.expectation() >= c * (np.log(1 / c) + 1) - 1 / 100
        base = derd_pmf(params)
        # survival dominance at every grid point
        assert np.all(
            PriceDist(params.grid, high.mass).survival()
            >= PriceDist(params.grid, base.mass).survival() - 1e-12
        )

    def test_too_small_perturbation_rejected(self):
        with pytest.raises(ValueError):
            PerturbedERD(DERDParams(PriceGrid(4), m=2), 0.2)  # gap would be 0


class TestDiscretize:
    def test_atom_at_one_maps_below_top(self):
        grid = PriceGrid(10)
        dist = discretize_distribution(np.array([1.0]), np.array([1.0]), grid)
        assert dist.mass[9] == pytest.approx(1.0)
        assert dist.mass[10] == 0.0

    def test_grid_aligned_values_unchanged(self):
        grid = PriceGrid(8)
        dist = discretize_distribution(
            np.array([1 / 8, 3 / 8, 5 / 8]), np.array([0.2, 0.3, 0.5]), grid
        )
        assert dist.mass[1] == pytest.approx(0.2)
        assert dist.mass[3] == pytest.approx(0.3)
        assert dist.mass[5] == pytest.approx(0.5)

    def test_never_mass_at_top_price(self):
        rng = np.random.default_rng(8)
        grid = PriceGrid(25)
        for _ in range(20):
            n = rng.integers(1, 12)
            values = rng.uniform(1e-6, 1.0, n)
            values[0] = 1.0
            weights = rng.dirichlet(np.ones(n))
            dist = discretize_distribution(values, weights, grid)
            assert dist.mass[-1] == 0.0

    def test_fixed_price_utilities_shift_by_at_most_grid_step(self):
        # The O(1/K) shift presumes a bounded density; heavy atoms crossing a
        # grid point move tie mass discontinuously, so test smooth-ish inputs.
        rng = np.random.default_rng(13)
        fine = PriceGrid(400)
        coarse = PriceGrid(40)
        for _ in range(10):
            values = np.arange(1, 401) / 400.0
            weights = rng.uniform(0.5, 1.5, 400)
            weights /= weights.sum()
            exact = discretize_distribution(values, weights, fine)
            rounded = discretize_distribution(values, weights, coarse)
            u_fine = expected_payoff_vector([exact])
            u_coarse = expected_payoff_vector([rounded])
            # compare on the coarse grid's prices
            for i in range(41):
                assert abs(u_coarse[i] - u_fine[i * 10]) <= 3 / 40

    def test_rejects_values_outside_unit_interval(self):
        grid = PriceGrid(5)
        with pytest.raises(ValueError):
            discretize_distribution(np.array([0.0]), np.array([1.0]), grid)
        with pytest.raises(ValueError):
            discretize_distribution(np.array([1.1]), np.array([1.0]), grid)


class TestSimplex:
    def test_known_two_variable_lp(self):
        res = linprog_maximize(
            np.array([1.0, 1.0]),
            a_ub=np.array([[1.0, 2.0], [3.0, 1.0]]),
            b_ub=np.array([4.0, 6.0]),
        )
        assert res.status == "optimal"
        assert res.value == pytest.approx(2.8)
        assert res.x == pytest.approx([1.6, 1.2])

    def test_equality_constraint(self):
        res = linprog_maximize(
            np.array([2.0, 1.0]),
            a_ub=np.array([[1.0, 0.0]]),
            b_ub=np.array([0.75]),
            a_eq=np.array([[1.0, 1.0]]),
            b_eq=np.array([1.0]),
        )
        assert res.value == pytest.approx(2 * 0.75 + 0.25)

    def test_infeasible_detected(self):
        res = linprog_maximize(
            np.array([1.0]),
            a_ub=np.array([[1.0], [-1.0]]),
            b_ub=np.array([1.0, -2.0]),
        )
        assert res.status == "infeasible"

    def test_random_lps_match_vertex_enumeration(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            n, m = 2, int(rng.integers(2, 6))
            a = rng.uniform(0.1, 1.5, (m, n))
            b = rng.uniform(0.5, 2.0, m)
            c = rng.uniform(0.1, 1.0, n)
            res = linprog_maximize(c, a_ub=a, b_ub=b)
            # oracle: enumerate all vertices of {x >= 0, Ax <= b}
            rows = np.vstack([a, -np.eye(n)])
            rhs = np.concatenate([b, np.zeros(n)])
            best = 0.0  # origin is feasible
            for i, j in itertools.combinations(range(len(rows)), 2):
                mat = rows[[i, j]]
                if abs(np.linalg.det(mat)) < 1e-9:
                    continue
                x = np.linalg.solve(mat, rhs[[i, j]])
                if np.all(rows @ x <= rhs + 1e-9):
                    best = max(best, float(c @ x))
            assert res.value == pytest.approx(best, abs=1e-7)


def mesh_oracle_two_player_k2(steps=50, tolerance=1e-8):
    """Brute-force search over symmetric joints on the 3-point grid.

    Support is restricted to prices below 1 to match the program's
    multi-deviation convention. Probabilities are scanned on a steps x steps
    simplex mesh; feasibility is evaluated by direct payoff enumeration.
    """
    grid = PriceGrid(2)
    best = 0.0
    cells = [(0, 0), (0, 1), (1, 1)]
    for a_steps in range(steps + 1):
        a = a_steps / steps  # P(both at 1/2)
        for b_steps in range(steps + 1 - a_steps):
            b = b_steps / steps  # P(one at 0, one at 1/2), split over both orders
            rest = 1.0 - a - b
            table = {(1, 1): a, (0, 1): b / 2, (1, 0): b / 2, (0, 0): rest}
            e_min = sum(q * min(cell) / 2 for cell, q in table.items())
            eq_payoff = sum(
                q * bertrand_payoffs(list(cell), grid)[0] for cell, q in table.items()
            )
            feasible = True
            for p in range(3):
                dev = sum(
                    q * bertrand_payoffs([p, cell[1]], grid)[0]
                    for cell, q in table.items()
                )
                if dev > eq_payoff + tolerance + 1e-12:
                    feasible = False
                    break
            if feasible:
                best = max(best, e_min)
    return best


class TestExtremalCce:
    def test_tiny_grid_matches_mesh_oracle(self):
        grid = PriceGrid(2)
        sol = solve_extremal_cce(2, grid)
        oracle = mesh_oracle_two_player_k2()
        assert sol.objective == pytest.approx(oracle, abs=1e-3)

    def test_solution_is_certified_and_normalized(self):
        sol = solve_extremal_cce(2, PriceGrid(20))
        assert sol.max_violation <= sol.tolerance + 1e-9
        assert sol.probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert certify_cce(sol) <= sol.tolerance + 1e-9

    def test_marginal_never_touches_top_price(self):
        sol = solve_extremal_cce(2, PriceGrid(15))
        assert sol.marginal().mass[-1] == 0.0

    def test_two_player_objective_near_continuum_value(self):
        sol = solve_extremal_cce(2, PriceGrid(50))
        target = 2 / np.e
        assert sol.objective >= target - 5 / 50
        assert sol.objective <= target + 5 / 50

    def test_equilibrium_payoff_is_objective_over_m(self):
        sol = solve_extremal_cce(2, PriceGrid(12))
        assert sol.equilibrium_payoff() == pytest.approx(sol.objective / 2)

    def test_json_round_trip(self):
        sol = solve_extremal_cce(2, PriceGrid(8))
        doc = sol.to_json()
        back = CceSolution.from_json(doc)
        assert back.objective == pytest.approx(sol.objective)
        assert np.array_equal(back.orbits, sol.orbits)
        assert back.probs == pytest.approx(sol.probs)
        assert certify_cce(back) <= sol.tolerance + 1e-9

    def test_others_marginal_masses_sum_to_one(self):
        sol = solve_extremal_cce(3, PriceGrid(6))
        rest = sol.others_marginal()
        assert sum(p for _, p in rest) == pytest.approx(1.0, abs=1e-9)
        assert all(len(s) == 2 for s, _ in rest)

    def test_rejects_single_player(self):
        with pytest.raises(ValueError):
            solve_extremal_cce(1, PriceGrid(5))
