"""End-to-end tests for the command-line front end.

Everything here goes through ``main()`` with real files in temp directories,
so these tests double as the reproducibility checks: identical inputs must
give byte-identical artifacts, and every artifact directory must carry a
manifest that pins the run.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from slicesched.cli import (
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    SWEEP_HEADER,
    apply_overrides,
    canonical_config,
    config_hash,
    file_sha256,
    main,
)
from slicesched.errors import ConfigError
from slicesched.cli import resolve_config
from slicesched.first_level import POLICY_MAGIC, policy_op_count, vi_op_count
from slicesched.second_level import ASSIGNMENT_LOG_HEADER

REPO_ROOT = Path(__file__).resolve().parents[1]


def tiny_config_dict() -> dict:
    """A small, fast variant of the stock config: 4-slot GOP, 2 cores."""
    cfg = canonical_config()
    cfg["video"]["slots_per_frame_period"] = 1
    cfg["video"]["num_slices"] = 4
    cfg["platform"]["num_processors"] = 2
    cfg["complexity"]["mean_cycles"] = {"I": 3.0e6, "P": 2.0e6, "B": 1.5e6}
    cfg["simulation"]["seed"] = 5
    cfg["simulation"]["num_gops"] = 4
    cfg["sweep"] = {"lambdas": [0.0, 100.0], "cores": [1, 2]}
    return cfg


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(tiny_config_dict(), indent=2) + "\n")
    return path


@pytest.fixture(scope="module")
def trace_dir(cfg_file, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("trace")
    assert main(["trace", "--config", str(cfg_file), "--out", str(out)]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def sim_dir(cfg_file, trace_dir, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("sim")
    rc = main(
        [
            "simulate",
            "--config",
            str(cfg_file),
            "--trace",
            str(trace_dir / "trace.csv"),
            "--out",
            str(out),
        ]
    )
    assert rc == EXIT_OK
    return out


@pytest.fixture(scope="module")
def sweep_dir(cfg_file, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("sweep")
    rc = main(["sweep", "--config", str(cfg_file), "--out", str(out)])
    assert rc == EXIT_OK
    return out


class TestConfig:
    def test_shipped_config_matches_builtin_defaults(self):
        shipped = json.loads((REPO_ROOT / "configs" / "ibpb_cif.json").read_text())
        assert shipped == canonical_config()

    def test_overrides_copy_rather_than_mutate(self):
        raw = canonical_config()
        out = apply_overrides(raw, lam=7.0, cores=2, scheduler="opt_mems")
        assert out["solver"]["lambda"] == 7.0
        assert out["platform"]["num_processors"] == 2
        assert out["simulation"]["scheduler"] == "opt_mems"
        assert raw == canonical_config()

    def test_config_hash_ignores_key_order(self):
        a = {"x": 1, "y": {"b": 2, "a": 3}}
        b = {"y": {"a": 3, "b": 2}, "x": 1}
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash({"x": 1, "y": {"b": 2, "a": 4}})

    def test_resolve_rejects_unknown_frame_type(self):
        raw = tiny_config_dict()
        raw["complexity"]["mean_cycles"] = {"I": 1e6, "Q": 2e6}
        with pytest.raises(ConfigError):
            resolve_config(raw)

    def test_resolve_rejects_missing_mean_for_used_type(self):
        raw = tiny_config_dict()
        raw["complexity"]["mean_cycles"] = {"I": 1e6, "P": 1e6}
        with pytest.raises(ConfigError, match="B"):
            resolve_config(raw)

    def test_resolve_rejects_partial_power_tables(self):
        raw = tiny_config_dict()
        raw["platform"]["core_power_w"] = [0.1, 0.2, 0.4, 0.9]
        with pytest.raises(ConfigError, match="both"):
            resolve_config(raw)


class TestValidate:
    def test_valid_config_exits_zero_and_reports_sizes(self, cfg_file, capsys):
        assert main(["validate", "--config", str(cfg_file)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "ok: config" in out
        assert "4 frames / 4 slots" in out

    def test_non_convex_power_table_lists_violations(self, tmp_path, capsys):
        raw = tiny_config_dict()
        raw["platform"]["core_power_w"] = [0.1, 0.2, 0.3, 0.4]
        raw["platform"]["cache_power_w"] = {
            t: [0.01, 0.02, 0.03, 0.04] for t in ("I", "P", "B")
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        assert main(["validate", "--config", str(path)]) == EXIT_VALIDATION
        out = capsys.readouterr().out
        assert "violation:" in out
        assert "convex" in out

    def test_missing_config_is_an_io_error(self, tmp_path):
        rc = main(["validate", "--config", str(tmp_path / "absent.json")])
        assert rc == EXIT_IO

    def test_malformed_json_is_a_validation_error(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["validate", "--config", str(path)]) == EXIT_VALIDATION
        assert "error:" in capsys.readouterr().err

    def test_trace_is_checked_against_the_config(self, cfg_file, trace_dir, capsys):
        rc = main(
            [
                "validate",
                "--config",
                str(cfg_file),
                "--trace",
                str(trace_dir / "trace.csv"),
            ]
        )
        assert rc == EXIT_OK
        assert "ok: trace" in capsys.readouterr().out

    def test_policy_processor_mismatch_is_flagged(
        self, cfg_file, tmp_path, capsys
    ):
        solve_out = tmp_path / "solve1"
        rc = main(
            [
                "solve",
                "--config",
                str(cfg_file),
                "--cores",
                "1",
                "--out",
                str(solve_out),
            ]
        )
        assert rc == EXIT_OK
        rc = main(
            [
                "validate",
                "--config",
                str(cfg_file),
                "--policy",
                str(solve_out / "policy.csv"),
            ]
        )
        assert rc == EXIT_VALIDATION
        assert "policy solved for 1 processors" in capsys.readouterr().out


class TestSolve:
    def test_artifacts_manifest_and_report_fields(self, cfg_file, tmp_path):
        out = tmp_path / "solve"
        assert main(["solve", "--config", str(cfg_file), "--out", str(out)]) == EXIT_OK

        policy_text = (out / "policy.csv").read_text()
        assert policy_text.startswith(POLICY_MAGIC)

        report = json.loads((out / "solve_report.json").read_text())
        assert report["iterations"] >= 1
        assert report["residual"] <= tiny_config_dict()["solver"]["tolerance"]
        assert report["update_mode"] == "decomposed"
        assert report["never_schedules"] is False
        # dual-route op accounting: the report's model numbers must equal the
        # closed forms for this geometry (4 frames, 4 phases, 4 slices, 4
        # frequencies, 2 processors, fan-in 2)
        assert report["update_ops_model"] == vi_op_count(
            report["iterations"], 4, 4, 4, 4, 2, 2
        )
        assert report["extract_ops_model"] == policy_op_count(4, 4, 4, 2, 4, 2)
        assert report["update_ops"] > 0
        assert report["extract_ops"] > 0

        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "solve"
        assert manifest["outputs"] == ["policy.csv", "solve_report.json"]
        assert manifest["config_sha256"] == config_hash(manifest["config"])

    def test_lambda_zero_reports_a_never_schedule_policy(self, cfg_file, tmp_path):
        out = tmp_path / "solve0"
        rc = main(
            [
                "solve",
                "--config",
                str(cfg_file),
                "--lambda",
                "0",
                "--out",
                str(out),
            ]
        )
        assert rc == EXIT_OK
        report = json.loads((out / "solve_report.json").read_text())
        assert report["lambda"] == 0.0
        assert report["never_schedules"] is True


class TestTrace:
    def test_same_seed_gives_byte_identical_artifacts(
        self, cfg_file, trace_dir, tmp_path
    ):
        again = tmp_path / "again"
        assert main(["trace", "--config", str(cfg_file), "--out", str(again)]) == EXIT_OK
        assert (again / "trace.csv").read_bytes() == (
            trace_dir / "trace.csv"
        ).read_bytes()
        # manifests record inputs by basename + hash, so they match too
        assert (again / "manifest.json").read_bytes() == (
            trace_dir / "manifest.json"
        ).read_bytes()

    def test_seed_override_changes_the_trace(self, cfg_file, trace_dir, tmp_path):
        other = tmp_path / "other"
        rc = main(
            [
                "trace",
                "--config",
                str(cfg_file),
                "--seed",
                "6",
                "--out",
                str(other),
            ]
        )
        assert rc == EXIT_OK
        assert (other / "trace.csv").read_bytes() != (
            trace_dir / "trace.csv"
        ).read_bytes()


class TestSimulate:
    def test_metrics_and_slot_log_artifacts(self, sim_dir):
        metrics = json.loads((sim_dir / "metrics.json").read_text())
        for key in (
            "frame_rate_fps",
            "power_per_core_w",
            "total_power_w",
            "miss_fraction",
            "per_slot_power_w",
        ):
            assert key in metrics
        assert metrics["scheduler"] == "proposed"
        assert metrics["power_per_core_w"] > 0
        assert set(metrics["miss_fraction"]) == {"I", "P", "B"}
        assert len(metrics["per_slot_power_w"]) == metrics["slots"]

        lines = (sim_dir / "slots.csv").read_text().splitlines()
        assert lines[0] == ASSIGNMENT_LOG_HEADER
        rows = [line.split(",") for line in lines[1:]]
        # one row per processor per slot
        assert len(rows) == metrics["slots"] * metrics["processors"]
        assert {int(r[1]) for r in rows} == {0, 1}

        manifest = json.loads((sim_dir / "manifest.json").read_text())
        assert manifest["outputs"] == ["metrics.json", "slots.csv"]
        assert manifest["inputs"]["trace"]["file"] == "trace.csv"

    def test_coordinated_runs_share_one_frequency_per_slot(
        self, cfg_file, trace_dir, tmp_path
    ):
        out = tmp_path / "coord"
        rc = main(
            [
                "simulate",
                "--config",
                str(cfg_file),
                "--trace",
                str(trace_dir / "trace.csv"),
                "--scheduler",
                "proposed_coordinated",
                "--out",
                str(out),
            ]
        )
        assert rc == EXIT_OK
        lines = (out / "slots.csv").read_text().splitlines()[1:]
        by_slot: dict[str, set[str]] = {}
        busy_slots = 0
        for line in lines:
            slot, _proc, freq, frame, _done = line.split(",")
            if frame != "IDLE":
                by_slot.setdefault(slot, set()).add(freq)
        for freqs in by_slot.values():
            busy_slots += 1
            assert len(freqs) == 1
        assert busy_slots > 0

    def test_precomputed_policy_matches_in_process_solve(
        self, cfg_file, trace_dir, sim_dir, tmp_path
    ):
        solve_out = tmp_path / "solve"
        assert (
            main(["solve", "--config", str(cfg_file), "--out", str(solve_out)])
            == EXIT_OK
        )
        out = tmp_path / "withpolicy"
        rc = main(
            [
                "simulate",
                "--config",
                str(cfg_file),
                "--trace",
                str(trace_dir / "trace.csv"),
                "--policy",
                str(solve_out / "policy.csv"),
                "--out",
                str(out),
            ]
        )
        assert rc == EXIT_OK
        assert (out / "metrics.json").read_bytes() == (
            sim_dir / "metrics.json"
        ).read_bytes()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["inputs"]["policy"]["sha256"] == file_sha256(
            solve_out / "policy.csv"
        )

    def test_missing_trace_is_an_io_error(self, cfg_file, tmp_path):
        rc = main(
            [
                "simulate",
                "--config",
                str(cfg_file),
                "--trace",
                str(tmp_path / "absent.csv"),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert rc == EXIT_IO

    def test_policy_for_wrong_processor_count_is_rejected(
        self, cfg_file, trace_dir, tmp_path
    ):
        solve_out = tmp_path / "solve1"
        rc = main(
            [
                "solve",
                "--config",
                str(cfg_file),
                "--cores",
                "1",
                "--out",
                str(solve_out),
            ]
        )
        assert rc == EXIT_OK
        rc = main(
            [
                "simulate",
                "--config",
                str(cfg_file),
                "--trace",
                str(trace_dir / "trace.csv"),
                "--policy",
                str(solve_out / "policy.csv"),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert rc == EXIT_VALIDATION


class TestSweep:
    def test_grid_is_complete_sorted_and_well_formed(self, sweep_dir):
        lines = (sweep_dir / "sweep.csv").read_text().splitlines()
        assert lines[0] == SWEEP_HEADER
        cfg = tiny_config_dict()
        expect = len(cfg["sweep"]["lambdas"]) * len(cfg["sweep"]["cores"])
        assert len(lines) == 1 + expect
        keys = []
        for line in lines[1:]:
            parts = line.split(",")
            keys.append((float(parts[0]), int(parts[1])))
            assert parts[2] == "proposed"
            assert len(parts) == len(SWEEP_HEADER.split(","))
        assert keys == sorted(keys)
        assert set(keys) == {
            (lam, m)
            for lam in cfg["sweep"]["lambdas"]
            for m in cfg["sweep"]["cores"]
        }

    def test_parallel_jobs_match_serial_byte_for_byte(
        self, cfg_file, sweep_dir, tmp_path
    ):
        out = tmp_path / "par"
        rc = main(
            [
                "sweep",
                "--config",
                str(cfg_file),
                "--jobs",
                "2",
                "--out",
                str(out),
            ]
        )
        assert rc == EXIT_OK
        assert (out / "sweep.csv").read_bytes() == (
            sweep_dir / "sweep.csv"
        ).read_bytes()
        assert (out / "manifest.json").read_bytes() == (
            sweep_dir / "manifest.json"
        ).read_bytes()

    def test_external_trace_is_pinned_in_the_manifest(
        self, cfg_file, trace_dir, tmp_path
    ):
        out = tmp_path / "ext"
        rc = main(
            [
                "sweep",
                "--config",
                str(cfg_file),
                "--trace",
                str(trace_dir / "trace.csv"),
                "--lambda",
                "0,100",
                "--cores",
                "2",
                "--out",
                str(out),
            ]
        )
        assert rc == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["inputs"]["trace"]["sha256"] == file_sha256(
            trace_dir / "trace.csv"
        )
        assert manifest["outputs"] == ["sweep.csv"]
        lines = (out / "sweep.csv").read_text().splitlines()
        assert len(lines) == 1 + 2


class TestReport:
    def test_charts_are_rendered_next_to_the_csv(
        self, sweep_dir, sim_dir, tmp_path
    ):
        out = tmp_path / "report"
        rc = main(
            [
                "report",
                "--sweep",
                str(sweep_dir / "sweep.csv"),
                "--metrics",
                str(sim_dir / "metrics.json"),
                "--out",
                str(out),
            ]
        )
        assert rc == EXIT_OK
        for name in (
            "frame_rate.png",
            "power.png",
            "miss_fractions.png",
            "power_timeline.png",
        ):
            png = out / name
            assert png.exists()
            assert png.stat().st_size > 0
            assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_non_sweep_csv_is_rejected(self, trace_dir, tmp_path):
        rc = main(
            [
                "report",
                "--sweep",
                str(trace_dir / "trace.csv"),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert rc == EXIT_VALIDATION


class TestMain:
    def test_unknown_subcommand_is_a_validation_error(self, capsys):
        assert main(["frobnicate"]) == EXIT_VALIDATION
        assert "error:" in capsys.readouterr().err

    def test_missing_required_argument_is_a_validation_error(self):
        assert main(["solve"]) == EXIT_VALIDATION

    def test_unknown_scheduler_override_is_a_validation_error(
        self, cfg_file, trace_dir, tmp_path
    ):
        rc = main(
            [
                "simulate",
                "--config",
                str(cfg_file),
                "--trace",
                str(trace_dir / "trace.csv"),
                "--scheduler",
                "greedy",
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert rc == EXIT_VALIDATION
