"""Command-line interface: run games, sweeps, audits, CCE solves, suites.

Exit codes: 0 success, 1 usage or configuration error, 2 a bound check or
audit ceiling failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from bertrand.auditor import audit_adoption, audit_exact
from bertrand.distributions import CceSolution, solve_extremal_cce
from bertrand.engine import GameConfig, run as engine_run
from bertrand.experiments import (
    SUITE_NAMES,
    SweepSpec,
    emit_csv,
    run_sweep,
    verify_suite,
    _row,
    _regret_fields,
)
from bertrand.grid import PriceGrid
from bertrand.strategies import (
    DefectionSpec,
    GuardedSpec,
    HedgeSpec,
    build_profile,
)


class UsageError(Exception):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc


def _field(doc: dict, path: str, default=None, required=False):
    node = doc
    crumbs = path.split(".")
    for crumb in crumbs:
        if not isinstance(node, dict) or crumb not in node:
            if required:
                raise UsageError(f"config field missing: {path}")
            return default
        node = node[crumb]
    return node


def _defection_from_config(doc: dict, grid: PriceGrid) -> DefectionSpec | None:
    raw = doc.get("defection")
    if raw is None:
        return None
    defectors = raw.get("defectors")
    if not defectors:
        raise UsageError("config field missing: defection.defectors")
    learner = raw.get("learner", {"kind": "hedge"})
    kind = learner.get("kind", "hedge")
    if kind == "hedge":
        replacements = {int(d): HedgeSpec() for d in defectors}
    elif kind == "guarded":
        cce_doc = learner.get("cce")
        if cce_doc is not None:
            sol = CceSolution.from_json(cce_doc)
        else:
            sol = solve_extremal_cce(len(defectors), grid)
        mode = learner.get("sampling_mode", "correlated")
        sol = dataclasses.replace(sol, mode=mode)
        replacements = {
            int(d): GuardedSpec(
                sol, threshold_rate=learner.get("threshold_rate")
            )
            for d in defectors
        }
    else:
        raise UsageError(f"unknown learner kind in defection.learner.kind: {kind!r}")
    return DefectionSpec(tuple(int(d) for d in defectors), replacements)


def cmd_run(args) -> int:
    doc = _load_config(args.config)
    profile_doc = _field(doc, "profile", required=True)
    try:
        profile = build_profile(profile_doc)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad profile config: {exc}") from exc
    horizon = int(_field(doc, "T", required=True))
    mode = args.mode or _field(doc, "mode", default="monte_carlo")
    replicates = args.replicates or int(_field(doc, "replicates", default=100))
    seed = args.seed if args.seed is not None else int(_field(doc, "seed", default=0))
    defection = _defection_from_config(doc, profile.grid)
    config = GameConfig(
        profile=profile,
        horizon=horizon,
        defection=defection,
        mode=mode,
        replicates=replicates,
        seed=seed,
        record_rounds=True,
    )
    trace, metrics = engine_run(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.json", "w") as fh:
        json.dump(trace.to_json(), fh)
    meas_r, bnd_r = _regret_fields(metrics)
    defectors = defection.defectors if defection else ()
    row = _row(
        "run", profile.name, profile.n_players, profile.grid.k, horizon,
        len(defectors), defectors,
        "hedge" if defection else "", mode, "", replicates, seed,
        metrics.market_price, metrics.stderr, None,
        float(np.mean([metrics.utilities[d] for d in defectors])) if defectors else "",
        meas_r, bnd_r, None,
    )
    emit_csv([row], out / "metrics.csv")
    print(f"market_price={metrics.market_price:.6f} stderr={metrics.stderr:.6f}")
    print(f"wrote {out / 'trace.json'} and {out / 'metrics.csv'}")
    return 0


def cmd_sweep(args) -> int:
    doc = _load_config(args.config)
    try:
        spec = SweepSpec(
            construction=_field(doc, "construction", required=True),
            n_values=tuple(_field(doc, "N", required=True)),
            k_values=tuple(_field(doc, "K", required=True)),
            horizon=int(_field(doc, "T", required=True)),
            m_defectors=int(_field(doc, "M", default=1)),
            defector_rule=_field(doc, "defector_rule", default="fixed_index"),
            learner=_field(doc, "learner", default="hedge"),
            replicates=args.replicates or int(_field(doc, "replicates", default=20)),
            seed=args.seed if args.seed is not None else int(_field(doc, "seed", default=0)),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad sweep config: {exc}") from exc
    rows = run_sweep(spec, out_dir=args.out)
    print(f"wrote {len(rows)} rows to {Path(args.out) / f'sweep_{spec.construction}.csv'}")
    return 0


def cmd_audit(args) -> int:
    doc = _load_config(args.profile)
    try:
        profile = build_profile(doc)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad profile config: {exc}") from exc
    if args.adoption:
        report = audit_adoption(profile, args.T, seed=args.seed or 0)
    else:
        report = audit_exact(profile, args.T, seed=args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"audit_{profile.name}.json"
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
    print(
        f"method={report.method} eq_slack={report.eq_slack:.6g} "
        f"ceiling={args.ceiling}"
    )
    print(f"wrote {path}")
    if args.ceiling is not None and report.eq_slack > args.ceiling:
        return 2
    return 0


def cmd_cce(args) -> int:
    sol = solve_extremal_cce(args.M, PriceGrid(args.K), tolerance=args.tolerance)
    target = args.M / np.e ** (args.M - 1)
    print(
        f"objective={sol.objective:.6f} target={target:.6f} "
        f"violation={sol.max_violation:.2e} iterations={sol.iterations}"
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"cce_M{args.M}_K{args.K}.json"
        sol.save(path)
        print(f"wrote {path}")
    return 0


def cmd_verify(args) -> int:
    overrides = {}
    if args.N:
        key = "n" if args.suite in ("thm1", "thm5", "thm6", "prop2", "audit") else "n_values"
        overrides[key] = args.N[0] if key == "n" else tuple(args.N)
    if args.K:
        key = "k_values" if args.suite == "cce" else "k"
        overrides[key] = tuple(args.K) if key == "k_values" else args.K[0]
    if args.T:
        overrides["horizon"] = args.T
    if args.replicates:
        overrides["replicates"] = args.replicates
    if args.seed is not None:
        overrides["seed"] = args.seed
    result = verify_suite(args.suite, out_dir=args.out, **overrides)
    for check in result.checks:
        status = "PASS" if check.passed else "FAIL"
        rel = ">=" if check.direction == "lower" else "<="
        print(
            f"[{status}] {check.name}: measured={check.measured:.6f} "
            f"{rel} bound={check.bound:.6f} (tol={check.tolerance:.4f})"
        )
    n_fail = sum(not c.passed for c in result.checks)
    print(f"{len(result.checks) - n_fail}/{len(result.checks)} checks passed")
    return 2 if n_fail else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bertrand",
        description="Repeated Bertrand pricing games: simulate, audit, verify bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one game from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--mode", choices=["monte_carlo", "exact"])
    p_run.add_argument("--replicates", type=int)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep a construction over N and K")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default="out")
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--replicates", type=int)
    p_sweep.set_defaults(func=cmd_sweep)

    p_audit = sub.add_parser("audit", help="certify a profile's equilibrium slack")
    p_audit.add_argument("--profile", required=True, help="profile JSON file")
    p_audit.add_argument("--T", type=int, default=1000)
    p_audit.add_argument("--ceiling", type=float, help="exit 2 if slack exceeds this")
    p_audit.add_argument("--adoption", action="store_true")
    p_audit.add_argument("--out", default="out")
    p_audit.add_argument("--seed", type=int)
    p_audit.set_defaults(func=cmd_audit)

    p_cce = sub.add_parser("cce", help="solve the extremal CCE program")
    p_cce.add_argument("--M", type=int, required=True)
    p_cce.add_argument("--K", type=int, required=True)
    p_cce.add_argument("--tolerance", type=float, default=1e-8)
    p_cce.add_argument("--out")
    p_cce.set_defaults(func=cmd_cce)

    p_verify = sub.add_parser("verify", help="run a named bound-verification suite")
    p_verify.add_argument("--suite", required=True, choices=sorted(SUITE_NAMES))
    p_verify.add_argument("--N", type=int, nargs="*")
    p_verify.add_argument("--K", type=int, nargs="*")
    p_verify.add_argument("--T", type=int)
    p_verify.add_argument("--replicates", type=int)
    p_verify.add_argument("--seed", type=int)
    p_verify.add_argument("--out", default="out")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
