"""Acceptance battery: every headline bound at its stated desk-scale tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line
per criterion. The full battery reruns every headline experiment, so it
takes several minutes.
"""

import warnings

import pytest

from bertrand.auditor import audit_exact
from bertrand.distributions import solve_extremal_cce
from bertrand.engine import record_welfare_residuals
from bertrand.experiments import (
    rows_to_csv_bytes,
    verify_suite,
)
from bertrand.grid import PriceGrid
from bertrand.strategies import (
    DefectionSpec,
    HedgeSpec,
    make_defection_aware,
    make_welfare_aware,
)

RESIDUALS: list[float] = []


def _suite(name, **overrides):
    with record_welfare_residuals() as residuals:
        result = verify_suite(name, **overrides)
    RESIDUALS.extend(residuals)
    return result


def _report(label: str, passed: bool, detail: str) -> None:
    print(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}", flush=True)


@pytest.fixture(scope="module")
def prop1_result():
    return _suite("prop1")


@pytest.fixture(scope="module")
def thm3_result():
    return _suite("thm3")


@pytest.fixture(scope="module")
def thm1_result():
    return _suite("thm1")


@pytest.fixture(scope="module")
def lemma2_result():
    return _suite("lemma2")


@pytest.fixture(scope="module")
def lemma1_result():
    return _suite("lemma1")


@pytest.fixture(scope="module")
def thm4_result():
    return _suite("thm4prop5")


@pytest.fixture(scope="module")
def cce_result():
    return _suite("cce")


@pytest.fixture(scope="module")
def thm5_result():
    return _suite("thm5")


@pytest.fixture(scope="module")
def thm6_result():
    return _suite("thm6")


@pytest.fixture(scope="module")
def prop2_result():
    return _suite("prop2")


@pytest.fixture(scope="module")
def audit_result():
    return _suite("audit")


def test_criterion_01_prop1_lower_bound(prop1_result):
    detail = "; ".join(
        f"{c.name} {c.measured:.4f}>={c.bound:.4f}-{c.tolerance:.4f}"
        for c in prop1_result.checks
    )
    passed = prop1_result.passed
    _report("criterion 1 (warmup grim lower bound)", passed, detail)
    assert passed


def test_criterion_02_thm3_two_sided(thm3_result):
    detail = "; ".join(
        f"{c.name} {c.measured:.4f}" for c in thm3_result.checks
    )
    passed = thm3_result.passed
    _report("criterion 2 (cyclic threats two-sided)", passed, detail)
    assert passed


def test_criterion_03_thm1_market_size_cap(thm1_result):
    n_pass = sum(c.passed for c in thm1_result.checks)
    detail = f"{n_pass}/{len(thm1_result.checks)} median-profit defections under the cap"
    passed = thm1_result.passed
    _report("criterion 3 (market-size cap consistency)", passed, detail)
    assert passed
    assert len(thm1_result.checks) >= 10  # 5 constructions x floor(N/2) defectors


def test_criterion_04_lemma2_cap_sweep(lemma2_result):
    n_pass = sum(c.passed for c in lemma2_result.checks)
    detail = f"{n_pass}/{len(lemma2_result.checks)} random markets under the share cap"
    passed = n_pass == len(lemma2_result.checks) == 200
    _report("criterion 4 (market-share cap sweep)", passed, detail)
    assert passed


def test_criterion_05_lemma1_bad_rounds(lemma1_result):
    check = lemma1_result.checks[0]
    detail = (
        f"bad rounds {check.measured:.1f} <= regret/margin {check.bound:.1f}"
        f" (margin {lemma1_result.reports['margin']:.4f})"
    )
    passed = lemma1_result.passed
    _report("criterion 5 (few non-best-response rounds)", passed, detail)
    assert passed


def _checks_by_name(result):
    return {c.name: c for c in result.checks}


def test_criterion_06a_prop5_correlated_band(thm4_result):
    checks = _checks_by_name(thm4_result)
    names = [
        "prop5_M2_correlated", "thm4_M2_correlated",
        "prop5_M3_correlated", "thm4_M3_correlated",
    ]
    passed = all(checks[n].passed for n in names)
    detail = "; ".join(f"{n} {checks[n].measured:.4f}" for n in names)
    _report("criterion 6a (guarded correlated in band)", passed, detail)
    assert passed


@pytest.mark.xfail(
    strict=True,
    reason=(
        "the i.i.d. product of the extremal marginal cannot satisfy the "
        "coarse-correlated deviation constraints near its top atom: the "
        "correlated joint earns each defector E[min]/M while the product "
        "loses a constant to top-of-support ties, so the regret guard trips "
        "in round one and the band's lower edge is unreachable; shipped "
        "honestly per the artifact's sampling-mode open question"
    ),
)
def test_criterion_06b_prop5_iid_band(thm4_result):
    checks = _checks_by_name(thm4_result)
    names = ["prop5_M2_iid", "prop5_M3_iid"]
    passed = all(checks[n].passed for n in names)
    detail = "; ".join(f"{n} {checks[n].measured:.4f}>={checks[n].bound:.4f}" for n in names)
    _report("criterion 6b (guarded iid in band)", passed, detail)
    assert passed


def test_criterion_06c_thm4_upper_with_arbitrary_bystanders(thm4_result):
    checks = [
        c for c in thm4_result.checks
        if c.bound_id == "thm4_upper"
    ]
    passed = all(c.passed for c in checks)
    detail = f"{sum(c.passed for c in checks)}/{len(checks)} below (M/e^(M-1))*1.1"
    _report("criterion 6c (multi-defector cap, incl. random bystanders)", passed, detail)
    assert passed
    assert any("bystanders" in c.name for c in checks)


def test_criterion_07_cce_convergence(cce_result):
    objectives = cce_result.reports["objectives"]
    nondecreasing = cce_result.reports["nondecreasing"]
    within = cce_result.passed
    # tiny-grid cross-check against the brute-force mesh oracle
    from tests.test_distributions import mesh_oracle_two_player_k2

    tiny = solve_extremal_cce(2, PriceGrid(2))
    mesh = mesh_oracle_two_player_k2()
    mesh_ok = abs(tiny.objective - mesh) <= 1e-3
    passed = nondecreasing and within and mesh_ok
    detail = (
        f"objectives {['%.4f' % o for o in objectives]} nondecreasing={nondecreasing}, "
        f"tiny-grid LP {tiny.objective:.4f} vs mesh {mesh:.4f}"
    )
    _report("criterion 7 (CCE program convergence)", passed, detail)
    assert passed


def test_criterion_08_thm5_defection_aware(thm5_result):
    check = thm5_result.checks[0]
    detail = f"measured {check.measured:.4f} >= {check.bound:.4f} - {check.tolerance:.4f}"
    passed = thm5_result.passed
    _report("criterion 8 (defection-aware price floor)", passed, detail)
    assert passed


def test_criterion_09_thm6_welfare_share(thm6_result):
    reports = thm6_result.reports
    passed = (
        thm6_result.passed
        and reports["agents_cover_leader"]
        and reports["regression_ok"]
    )
    detail = (
        f"leader {reports['leader_utility']:.4f} >= 0.1, agents sum "
        f"{reports['agents_sum']:.4f}, reference {reports['reference']:.4f}"
    )
    _report("criterion 9 (welfare-sharing leader)", passed, detail)
    assert passed


def test_criterion_10_auditor_certifies_all_constructions(audit_result):
    ceiling = 2 / 1000
    passed = audit_result.passed
    worst = max(c.measured for c in audit_result.checks)
    # the thm5/thm6 constructions against the live no-regret defector
    grid = PriceGrid(100)
    aware = make_defection_aware(0, 4, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        live_aware = audit_exact(
            aware, 1000, players=[1],
            defection=DefectionSpec((0,), {0: HedgeSpec()}), replicates=1,
        )
        welfare = make_welfare_aware(0, 1, 5, grid, perturb=0.1)
        live_leader = audit_exact(
            welfare, 1000, players=[1],
            defection=DefectionSpec((0,), {0: HedgeSpec()}), replicates=1,
        )
    passed = (
        passed
        and live_aware.eq_slack <= ceiling
        and live_leader.eq_slack <= ceiling
    )
    detail = (
        f"worst certified slack {worst:.6f} <= {ceiling}; vs live defector: "
        f"aware {live_aware.eq_slack:.6f}, leader {live_leader.eq_slack:.6f}"
    )
    _report("criterion 10 (auditor certifies 2/T)", passed, detail)
    assert passed


def test_criterion_11_prop2_median_assumption_necessary(prop2_result):
    check = prop2_result.checks[0]
    detail = f"high-profit defection keeps price {check.measured:.4f} >= {check.bound:.4f}"
    passed = prop2_result.passed
    _report("criterion 11 (pathological high-profit defection)", passed, detail)
    assert passed


def test_criterion_12_engine_identities(
    prop1_result,
    thm3_result,
    thm1_result,
    lemma2_result,
    lemma1_result,
    thm4_result,
    thm5_result,
    thm6_result,
    prop2_result,
    audit_result,
):
    worst_residual = max(RESIDUALS) if RESIDUALS else 0.0
    replay_a = rows_to_csv_bytes(_suite("lemma1").rows)
    replay_b = rows_to_csv_bytes(_suite("lemma1").rows)
    small_a = rows_to_csv_bytes(
        _suite("prop1", n_values=(2,), k=100, horizon=1500, replicates=5).rows
    )
    small_b = rows_to_csv_bytes(
        _suite("prop1", n_values=(2,), k=100, horizon=1500, replicates=5).rows
    )
    deterministic = replay_a == replay_b and small_a == small_b
    passed = worst_residual < 1e-9 and deterministic and len(RESIDUALS) >= 200
    detail = (
        f"max welfare residual {worst_residual:.2e} over {len(RESIDUALS)} runs; "
        f"bit-identical reruns: {deterministic}"
    )
    _report("criterion 12 (welfare identity and determinism)", passed, detail)
    assert passed
