"""Suites, CSV schema, sweeps, and the command-line interface."""

import csv
import json

import pytest

from bertrand.cli import main
from bertrand.experiments import (
    BOUND_IDS,
    CSV_COLUMNS,
    BoundCheck,
    SweepSpec,
    emit_csv,
    rows_to_csv_bytes,
    run_sweep,
    verify_suite,
)
from bertrand.strategies import make_simple_grim
from bertrand.grid import PriceGrid


class TestBoundCheck:
    def test_lower_direction_semantics(self):
        check = BoundCheck("x", "prop1_lower", measured=0.5, bound=0.52,
                           direction="lower", tolerance=0.03)
        assert check.passed
        check = BoundCheck("x", "prop1_lower", measured=0.5, bound=0.52,
                           direction="lower", tolerance=0.01)
        assert not check.passed

    def test_upper_direction_semantics(self):
        check = BoundCheck("x", "thm4_upper", measured=0.9, bound=0.85,
                           direction="upper", tolerance=0.01)
        assert not check.passed

    def test_unknown_bound_id_rejected(self):
        with pytest.raises(ValueError):
            BoundCheck("x", "nonsense", 0.0, 0.0, "lower", 0.0)


class TestCsv:
    def test_empty_rows_give_header_only(self, tmp_path):
        path = emit_csv([], tmp_path / "empty.csv")
        text = path.read_text()
        lines = text.strip().splitlines()
        assert len(lines) == 1
        assert lines[0].split(",") == CSV_COLUMNS

    def test_schema_columns_exact(self):
        assert CSV_COLUMNS == [
            "experiment_id", "construction", "N", "K", "T", "M", "defectors",
            "learner", "mode", "sampling_mode", "replicates", "seed",
            "market_price", "stderr", "baseline_price", "defector_utility_mean",
            "regret_measured_max", "regret_bound", "bound_id", "bound_value",
            "pass",
        ]

    def test_rfc4180_quoting(self, tmp_path):
        row = {c: "" for c in CSV_COLUMNS}
        row["experiment_id"] = 'has,comma and "quote"'
        path = emit_csv([row], tmp_path / "q.csv")
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["experiment_id"] == 'has,comma and "quote"'

    def test_suite_csv_is_byte_deterministic(self):
        a = rows_to_csv_bytes(verify_suite("lemma1").rows)
        b = rows_to_csv_bytes(verify_suite("lemma1").rows)
        assert a == b


class TestSuites:
    def test_unknown_suite_rejected(self):
        with pytest.raises(ValueError):
            verify_suite("not_a_suite")

    def test_prop1_small_scale_passes_and_writes(self, tmp_path):
        res = verify_suite(
            "prop1", out_dir=tmp_path, n_values=(2,), k=100, horizon=2000,
            replicates=10,
        )
        assert res.passed
        with open(tmp_path / "prop1.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["construction"] == "simple_grim"
        assert rows[0]["pass"] == "True"
        assert rows[0]["bound_id"] == "prop1_lower"
        assert float(rows[0]["baseline_price"]) == 1.0

    def test_thm5_row_has_blank_baseline(self, tmp_path):
        res = verify_suite(
            "thm5", out_dir=tmp_path, n=3, k=50, horizon=1500, replicates=5
        )
        assert res.passed
        with open(tmp_path / "thm5.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["baseline_price"] == ""

    def test_every_row_bound_id_is_registered(self):
        res = verify_suite("cce", k_values=(8, 12))
        for row in res.rows:
            assert row["bound_id"] in BOUND_IDS

    def test_cce_suite_monotone_and_two_sided(self):
        res = verify_suite("cce")
        assert res.passed
        assert res.reports["nondecreasing"]

    def test_lemma1_bound_holds_deterministically(self):
        res = verify_suite("lemma1")
        assert res.passed
        check = res.checks[0]
        assert check.measured <= check.bound + 1e-6

    def test_interleaving_order_independence(self):
        first = verify_suite("lemma1").checks[0].measured
        _ = verify_suite("cce", k_values=(8,))
        second = verify_suite("lemma1").checks[0].measured
        assert first == second


class TestSweep:
    def test_sweep_produces_one_row_per_cell(self, tmp_path):
        spec = SweepSpec(
            construction="simple_grim",
            n_values=(2, 3),
            k_values=(40,),
            horizon=400,
            replicates=4,
            seed=5,
        )
        rows = run_sweep(spec, out_dir=tmp_path)
        assert len(rows) == 2
        assert (tmp_path / "sweep_simple_grim.csv").exists()

    def test_median_profit_rule_expands_defectors(self):
        spec = SweepSpec(
            construction="simple_grim",
            n_values=(4,),
            k_values=(40,),
            horizon=300,
            defector_rule="median_profit",
            replicates=3,
            seed=5,
        )
        rows = run_sweep(spec)
        assert len(rows) == 2  # floor(4/2) median-profit defectors

    def test_cells_do_not_share_learner_state(self):
        spec = SweepSpec(
            construction="simple_grim", n_values=(2,), k_values=(30,),
            horizon=300, replicates=4, seed=9,
        )
        alone = run_sweep(spec)[0]["market_price"]
        spec_two = SweepSpec(
            construction="simple_grim", n_values=(3, 2), k_values=(30,),
            horizon=300, replicates=4, seed=9,
        )
        paired = [r for r in run_sweep(spec_two) if r["N"] == 2][0]["market_price"]
        assert alone == paired


class TestCli:
    def test_verify_suite_exit_codes(self, tmp_path, capsys):
        code = main([
            "verify", "--suite", "prop1", "--N", "2", "--K", "100",
            "--T", "1500", "--replicates", "5", "--out", str(tmp_path),
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "[PASS]" in out
        assert (tmp_path / "prop1.csv").exists()

    def test_run_command_writes_trace_and_metrics(self, tmp_path, capsys):
        config = {
            "profile": {"construction": "zero_grim", "n_players": 2, "k": 50},
            "T": 300,
            "replicates": 4,
            "seed": 3,
            "defection": {"defectors": [0], "learner": {"kind": "hedge"}},
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        code = main(["run", "--config", str(cfg_path), "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "trace.json").exists()
        with open(tmp_path / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["construction"] == "zero_grim"
        assert float(rows[0]["market_price"]) < 0.05

    def test_missing_config_is_usage_error(self, capsys):
        assert main(["run", "--config", "/nonexistent.json"]) == 1
        assert "not found" in capsys.readouterr().err

    def test_malformed_config_names_field(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"profile": {"construction": "zero_grim",
                                               "n_players": 2, "k": 50}}))
        assert main(["run", "--config", str(cfg)]) == 1
        assert "T" in capsys.readouterr().err

    def test_audit_ceiling_controls_exit_code(self, tmp_path, capsys):
        prof = tmp_path / "prof.json"
        prof.write_text(json.dumps(make_simple_grim(3, PriceGrid(50)).to_json()))
        code = main([
            "audit", "--profile", str(prof), "--T", "200",
            "--ceiling", "0.01", "--out", str(tmp_path),
        ])
        assert code == 0
        assert (tmp_path / "audit_simple_grim.json").exists()
        code = main([
            "audit", "--profile", str(prof), "--T", "200",
            "--ceiling", "1e-9", "--out", str(tmp_path),
        ])
        assert code == 2

    def test_cce_command_prints_objective(self, capsys):
        code = main(["cce", "--M", "2", "--K", "10"])
        assert code == 0
        out = capsys.readouterr().out
        assert "objective=0.65" in out

    def test_bad_subcommand_is_usage_error(self, capsys):
        assert main(["nonsense"]) == 1
