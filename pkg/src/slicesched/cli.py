"""Command-line front end: config parsing and artifact emission.

Subcommands
-----------
``validate``   check a config (and optionally a trace / policy file) and list
               violations without producing artifacts.
``solve``      run the per-frame value iteration, write the policy table and
               a solver report (iterations, residual, operation counts).
``trace``      sample a synthetic slice-complexity trace for the configured
               stream and write it as CSV.
``simulate``   replay a trace under one scheduler and write metrics JSON plus
               the per-slot assignment log.
``sweep``      fan out (lambda, cores) runs over a shared trace and merge them
               into one sorted CSV.
``report``     render the sweep CSV (and optionally one metrics JSON) into
               PNG charts next to the delimited output.

Every artifact-producing subcommand writes a ``manifest.json`` that pins the
resolved configuration, its hash, the seed and the content hashes of all
inputs, so a run can be reproduced byte-for-byte from the manifest alone.
Exit codes: 0 success, 1 validation error, 2 IO error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace
from typing import Any, Sequence

from .cost_model import (
    DEFAULT_FREQUENCIES_MHZ,
    LagrangianParams,
    PowerModel,
    SystemModel,
    validate_power_model,
)
from .errors import ConfigError, SliceSchedError
from .first_level import (
    extract_policy,
    frame_value_iteration,
    policy_op_count,
    read_policy_file,
    vi_op_count,
    write_policy_file,
)
from .simulator import (
    SCHEDULERS,
    SimConfig,
    SimMetrics,
    _index_trace,
    generate_synthetic_trace,
    read_trace,
    run_simulation,
    write_trace,
)
from .stochastic_model import ComplexityModel
from .workload_model import (
    FrameType,
    GopStructure,
    canonical_ibpb_gop,
    enumerate_traffic_states,
    joint_action_space_size,
)

TOOL_VERSION = "0.1.0"
SWEEP_HEADER = (
    "lambda,M,scheduler,frame_rate_fps,power_per_core_w,total_power_w,"
    "miss_I,miss_P,miss_B"
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


# ---------------------------------------------------------------------------
# configuration


def canonical_config() -> dict[str, Any]:
    """The stock 30 fps IBPB stream on the four-point DVFS grid."""
    return {
        "video": {
            "slots_per_frame_period": 3,
            "num_slices": 8,
            "slot_duration_s": None,
        },
        "platform": {
            "frequencies_mhz": list(DEFAULT_FREQUENCIES_MHZ),
            "num_processors": 4,
        },
        "complexity": {
            "kind": "truncated",
            "mean_cycles": {"I": 4.0e6, "P": 3.2e6, "B": 2.4e6},
        },
        "solver": {
            "lambda": 400.0,
            "rate_target": 0.0,
            "discount": 0.9,
            "tolerance": 1e-6,
            "max_iterations": 500,
            "update_mode": "decomposed",
        },
        "simulation": {
            "scheduler": "proposed",
            "seed": 2024,
            "num_gops": 40,
            "worst_case_cycles": None,
        },
        "sweep": {
            "lambdas": [0.0, 50.0, 100.0, 200.0, 400.0, 800.0],
            "cores": [1, 2, 4, 8],
        },
    }


def load_config(path: str | Path) -> dict[str, Any]:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return raw


def _section(raw: dict[str, Any], name: str) -> dict[str, Any]:
    section = raw.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return section


def _get(section: dict[str, Any], name: str, key: str, default: Any) -> Any:
    value = section.get(key, default)
    if value is None and default is not None:
        return default
    return value


def _frame_type_map(raw: Any, where: str) -> dict[FrameType, float]:
    if not isinstance(raw, dict) or not raw:
        raise ConfigError(f"{where} must be a non-empty object keyed by I/P/B")
    out: dict[FrameType, float] = {}
    for key, value in raw.items():
        try:
            t = FrameType(key)
        except ValueError:
            raise ConfigError(f"{where}: unknown frame type {key!r}")
        out[t] = float(value)
    return out


@dataclass(frozen=True)
class ResolvedRun:
    """Config dict plus the domain objects built from it."""

    raw: dict[str, Any]
    gop: GopStructure
    system: SystemModel
    params: LagrangianParams
    complexity: ComplexityModel
    scheduler: str
    seed: int
    num_gops: int
    worst_case_cycles: dict[FrameType, float] | None
    tolerance: float
    max_iterations: int
    update_mode: str
    sweep_lambdas: tuple[float, ...]
    sweep_cores: tuple[int, ...]

    @property
    def config_sha256(self) -> str:
        return config_hash(self.raw)

    def sim_config(self) -> SimConfig:
        return SimConfig(
            gop=self.gop,
            system=self.system,
            params=self.params,
            scheduler=self.scheduler,
            seed=self.seed,
            num_gops=self.num_gops,
            complexity=self.complexity,
            worst_case_cycles=self.worst_case_cycles,
        )


def _build_power_tables(
    platform: dict[str, Any],
) -> tuple[tuple[float, ...], tuple[float, ...], dict[FrameType, tuple[float, ...]]]:
    freqs_mhz = _get(platform, "platform", "frequencies_mhz", list(DEFAULT_FREQUENCIES_MHZ))
    freqs = tuple(float(f) * 1e6 for f in freqs_mhz)
    defaults = None
    if "core_power_w" in platform or "cache_power_w" in platform:
        if "core_power_w" not in platform or "cache_power_w" not in platform:
            raise ConfigError(
                "platform must give both core_power_w and cache_power_w or neither"
            )
        core = tuple(float(p) for p in platform["core_power_w"])
        cache_raw = platform["cache_power_w"]
        if not isinstance(cache_raw, dict):
            raise ConfigError("platform.cache_power_w must be an object keyed by I/P/B")
        cache = {}
        for key, table in cache_raw.items():
            try:
                t = FrameType(key)
            except ValueError:
                raise ConfigError(f"platform.cache_power_w: unknown frame type {key!r}")
            cache[t] = tuple(float(s) for s in table)
        return freqs, core, cache
    from .cost_model import default_power_model

    defaults = default_power_model(freqs_mhz)
    return defaults.frequencies, defaults.core_power, dict(defaults.cache_power)


def power_table_violations(raw: dict[str, Any]) -> list[str]:
    """Validate the configured power tables without constructing the model."""
    freqs, core, cache = _build_power_tables(_section(raw, "platform"))
    probe = SimpleNamespace(frequencies=freqs, core_power=core, cache_power=cache)
    return validate_power_model(probe)


def apply_overrides(
    raw: dict[str, Any],
    *,
    lam: float | None = None,
    cores: int | None = None,
    seed: int | None = None,
    scheduler: str | None = None,
    num_gops: int | None = None,
    sweep_lambdas: Sequence[float] | None = None,
    sweep_cores: Sequence[int] | None = None,
) -> dict[str, Any]:
    """Fold command-line overrides into a copy of the config dict."""
    out = copy.deepcopy(raw)
    if lam is not None:
        out.setdefault("solver", {})["lambda"] = lam
    if cores is not None:
        out.setdefault("platform", {})["num_processors"] = cores
    if seed is not None:
        out.setdefault("simulation", {})["seed"] = seed
    if scheduler is not None:
        out.setdefault("simulation", {})["scheduler"] = scheduler
    if num_gops is not None:
        out.setdefault("simulation", {})["num_gops"] = num_gops
    if sweep_lambdas is not None:
        out.setdefault("sweep", {})["lambdas"] = list(sweep_lambdas)
    if sweep_cores is not None:
        out.setdefault("sweep", {})["cores"] = list(sweep_cores)
    return out


def resolve_config(raw: dict[str, Any]) -> ResolvedRun:
    """Build all domain objects from a config dict, validating as we go."""
    video = _section(raw, "video")
    platform = _section(raw, "platform")
    complexity_cfg = _section(raw, "complexity")
    solver = _section(raw, "solver")
    simulation = _section(raw, "simulation")
    sweep = _section(raw, "sweep")

    slots = int(_get(video, "video", "slots_per_frame_period", 3))
    num_slices = int(_get(video, "video", "num_slices", 8))
    slot_duration = video.get("slot_duration_s")
    gop = canonical_ibpb_gop(
        slots_per_frame_period=slots,
        num_slices=num_slices,
        slot_duration=float(slot_duration) if slot_duration else None,
    )

    violations = power_table_violations(raw)
    if violations:
        raise ConfigError("invalid power tables: " + "; ".join(violations))
    freqs, core, cache = _build_power_tables(platform)
    power = PowerModel(frequencies=freqs, core_power=core, cache_power=cache)

    mean_cycles = _frame_type_map(
        complexity_cfg.get("mean_cycles"), "complexity.mean_cycles"
    )
    missing = {f.frame_type for f in gop.frames} - set(mean_cycles)
    if missing:
        raise ConfigError(
            f"complexity.mean_cycles lacks entries for {sorted(t.value for t in missing)}"
        )
    kind = str(_get(complexity_cfg, "complexity", "kind", "truncated"))
    complexity = ComplexityModel(kind=kind, mean_cycles=mean_cycles)

    cores = int(_get(platform, "platform", "num_processors", 4))
    system = SystemModel(power=power, mean_cycles=mean_cycles, num_processors=cores)

    params = LagrangianParams(
        lam=float(_get(solver, "solver", "lambda", 0.0)),
        rate_target=float(_get(solver, "solver", "rate_target", 0.0)),
        discount=float(_get(solver, "solver", "discount", 0.9)),
    )

    scheduler = str(_get(simulation, "simulation", "scheduler", "proposed"))
    if scheduler not in SCHEDULERS:
        raise ConfigError(
            f"simulation.scheduler must be one of {SCHEDULERS}, got {scheduler!r}"
        )
    worst_raw = simulation.get("worst_case_cycles")
    worst = (
        _frame_type_map(worst_raw, "simulation.worst_case_cycles")
        if worst_raw
        else None
    )

    return ResolvedRun(
        raw=raw,
        gop=gop,
        system=system,
        params=params,
        complexity=complexity,
        scheduler=scheduler,
        seed=int(_get(simulation, "simulation", "seed", 0)),
        num_gops=int(_get(simulation, "simulation", "num_gops", 8)),
        worst_case_cycles=worst,
        tolerance=float(_get(solver, "solver", "tolerance", 1e-6)),
        max_iterations=int(_get(solver, "solver", "max_iterations", 500)),
        update_mode=str(_get(solver, "solver", "update_mode", "decomposed")),
        sweep_lambdas=tuple(
            float(v) for v in _get(sweep, "sweep", "lambdas", [0.0])
        ),
        sweep_cores=tuple(int(v) for v in _get(sweep, "sweep", "cores", [1])),
    )


# ---------------------------------------------------------------------------
# manifests and serialization


def config_hash(raw: dict[str, Any]) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: str | Path, payload: dict[str, Any]) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_manifest(
    out_dir: Path,
    subcommand: str,
    resolved: ResolvedRun,
    inputs: dict[str, str | Path],
    outputs: Sequence[str],
) -> Path:
    """Pin everything needed to re-run this command byte-for-byte.

    Input files are recorded by basename and content hash, never by absolute
    path, so manifests from identical runs in different directories are
    themselves byte-identical.
    """
    manifest = {
        "subcommand": subcommand,
        "tool_version": TOOL_VERSION,
        "config_sha256": resolved.config_sha256,
        "config": resolved.raw,
        "seed": resolved.seed,
        "inputs": {
            name: {"file": Path(p).name, "sha256": file_sha256(p)}
            for name, p in sorted(inputs.items())
        },
        "outputs": sorted(outputs),
    }
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path


def metrics_to_dict(resolved: ResolvedRun, metrics: SimMetrics) -> dict[str, Any]:
    return {
        "lambda": resolved.params.lam,
        "processors": resolved.system.num_processors,
        "scheduler": resolved.scheduler,
        "seed": resolved.seed,
        "num_gops": resolved.num_gops,
        "frame_rate_fps": metrics.decoded_frame_rate,
        "power_per_core_w": metrics.avg_power_per_core,
        "total_power_w": metrics.avg_total_power,
        "miss_fraction": {t.value: metrics.miss_fraction[t] for t in FrameType},
        "decoded_slices": metrics.decoded_slices,
        "dropped_slices": metrics.dropped_slices,
        "pending_slices": metrics.pending_slices,
        "decoded_frames": metrics.decoded_frames,
        "counted_frames": metrics.counted_frames,
        "slots": metrics.slots,
        "sim_seconds": metrics.sim_seconds,
        "per_slot_power_w": list(metrics.per_slot_power),
    }


# ---------------------------------------------------------------------------
# shared run plumbing


def _solve(resolved: ResolvedRun):
    values = frame_value_iteration(
        resolved.gop,
        resolved.system,
        resolved.params,
        tolerance=resolved.tolerance,
        max_iterations=resolved.max_iterations,
        update_mode=resolved.update_mode,
    )
    return values, extract_policy(values)


def _max_parents(gop: GopStructure) -> int:
    return max(len(f.parents) for f in gop.frames)


def _solver_report(resolved: ResolvedRun, values, policies) -> dict[str, Any]:
    gop, system = resolved.gop, resolved.system
    never = all(
        all(y == 0 for _, y in action)
        for policy in policies.frames.values()
        for action in policy.actions.values()
    )
    num_f = system.power.num_frequencies
    fan_in = _max_parents(gop)
    return {
        "lambda": resolved.params.lam,
        "discount": resolved.params.discount,
        "processors": system.num_processors,
        "update_mode": values.mode,
        "iterations": values.iterations,
        "residual": values.residual,
        "update_ops": values.update_ops,
        "extract_ops": policies.extract_ops,
        "update_ops_model": vi_op_count(
            values.iterations,
            gop.num_frames,
            gop.period_slots,
            gop.max_slices,
            num_f,
            system.num_processors,
            fan_in,
        ),
        "extract_ops_model": policy_op_count(
            gop.num_frames,
            gop.period_slots,
            gop.max_slices,
            system.num_processors,
            num_f,
            fan_in,
        ),
        "zbar_clamps": policies.zbar_clamps,
        "never_schedules": never,
    }


def _run_one(
    resolved: ResolvedRun,
    trace,
    policy_tables=None,
    assignment_log_path: Path | None = None,
) -> SimMetrics:
    config = resolved.sim_config()
    if resolved.scheduler == "opt_mems":
        return run_simulation(
            config, trace, assignment_log_path=assignment_log_path
        )
    if policy_tables is None:
        _, policies = _solve(resolved)
        policy_tables = policies
    return run_simulation(
        config, trace, policy_tables, assignment_log_path=assignment_log_path
    )


def _sweep_row(resolved: ResolvedRun, metrics: SimMetrics) -> tuple:
    return (
        resolved.params.lam,
        resolved.system.num_processors,
        resolved.scheduler,
        metrics.decoded_frame_rate,
        metrics.avg_power_per_core,
        metrics.avg_total_power,
        metrics.miss_fraction[FrameType.I],
        metrics.miss_fraction[FrameType.P],
        metrics.miss_fraction[FrameType.B],
    )


def _sweep_worker(payload: tuple[str, float, int, str]) -> tuple:
    """Run one (lambda, cores) cell; top-level so process pools can pickle it."""
    config_json, lam, cores, trace_path = payload
    raw = apply_overrides(json.loads(config_json), lam=lam, cores=cores)
    resolved = resolve_config(raw)
    trace = read_trace(trace_path)
    metrics = _run_one(resolved, trace)
    return _sweep_row(resolved, metrics)


def format_sweep_rows(rows: Sequence[tuple]) -> str:
    lines = [SWEEP_HEADER]
    for row in sorted(rows, key=lambda r: (r[0], r[1], r[2])):
        lam, cores, scheduler, *floats = row
        lines.append(
            ",".join([repr(float(lam)), str(int(cores)), scheduler])
            + ","
            + ",".join(repr(float(v)) for v in floats)
        )
    return "\n".join(lines) + "\n"


def _out_dir(value: str) -> Path:
    path = Path(value)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args: argparse.Namespace) -> int:
    raw = load_config(args.config)
    violations = power_table_violations(raw)
    for v in violations:
        print(f"violation: {v}")
    if violations:
        return EXIT_VALIDATION
    resolved = resolve_config(raw)
    gop, system = resolved.gop, resolved.system
    print(f"ok: config {resolved.config_sha256[:12]}")
    print(
        f"ok: stream {gop.num_frames} frames / {gop.period_slots} slots, "
        f"{gop.max_slices} slices per frame"
    )
    print(
        "ok: traffic states "
        f"{enumerate_traffic_states(gop, gop.max_slices)}, joint actions "
        f"{joint_action_space_size(system.num_processors, system.power.num_frequencies)}"
    )
    if args.trace:
        trace = read_trace(args.trace)
        _index_trace(resolved.sim_config(), trace)
        print(f"ok: trace covers {resolved.num_gops} GOPs ({len(trace)} slices)")
    if args.policy:
        _, metadata = read_policy_file(args.policy)
        procs = int(metadata["processors"])
        if procs != system.num_processors:
            print(
                f"violation: policy solved for {procs} processors but config "
                f"has {system.num_processors}"
            )
            return EXIT_VALIDATION
        print(f"ok: policy table for {procs} processors")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    raw = apply_overrides(
        load_config(args.config), lam=args.lam, cores=args.cores, seed=args.seed
    )
    resolved = resolve_config(raw)
    out = _out_dir(args.out)
    values, policies = _solve(resolved)
    policy_path = out / "policy.csv"
    write_policy_file(policy_path, policies)
    report = _solver_report(resolved, values, policies)
    write_json(out / "solve_report.json", report)
    write_manifest(
        out,
        "solve",
        resolved,
        inputs={},
        outputs=["policy.csv", "solve_report.json"],
    )
    print(
        f"solved lambda={resolved.params.lam} M={resolved.system.num_processors}: "
        f"{report['iterations']} iterations, residual {report['residual']:.3e}"
    )
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    raw = apply_overrides(
        load_config(args.config), seed=args.seed, num_gops=args.gops
    )
    resolved = resolve_config(raw)
    out = _out_dir(args.out)
    records = generate_synthetic_trace(
        resolved.gop, resolved.complexity, resolved.num_gops, resolved.seed
    )
    trace_path = out / "trace.csv"
    write_trace(trace_path, records)
    write_manifest(out, "trace", resolved, inputs={}, outputs=["trace.csv"])
    print(f"wrote {len(records)} slice records for {resolved.num_gops} GOPs")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    raw = apply_overrides(
        load_config(args.config),
        lam=args.lam,
        cores=args.cores,
        seed=args.seed,
        scheduler=args.scheduler,
    )
    resolved = resolve_config(raw)
    out = _out_dir(args.out)
    trace = read_trace(args.trace)
    inputs: dict[str, str | Path] = {"trace": args.trace}

    policy_tables = None
    if args.policy and resolved.scheduler != "opt_mems":
        tables, metadata = read_policy_file(args.policy)
        if int(metadata["processors"]) != resolved.system.num_processors:
            raise ConfigError(
                "policy file was solved for a different processor count"
            )
        policy_tables = tables
        inputs["policy"] = args.policy

    log_path = out / "slots.csv"
    metrics = _run_one(resolved, trace, policy_tables, log_path)
    write_json(out / "metrics.json", metrics_to_dict(resolved, metrics))
    write_manifest(
        out,
        "simulate",
        resolved,
        inputs=inputs,
        outputs=["metrics.json", "slots.csv"],
    )
    miss = " ".join(
        f"{t.value}={metrics.miss_fraction[t]:.3f}" for t in FrameType
    )
    print(
        f"{resolved.scheduler}: {metrics.decoded_frame_rate:.3f} fps, "
        f"{metrics.avg_power_per_core:.4f} W/core, miss {miss}"
    )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    raw = apply_overrides(
        load_config(args.config),
        seed=args.seed,
        scheduler=args.scheduler,
        sweep_lambdas=args.lam_list,
        sweep_cores=args.cores_list,
    )
    resolved = resolve_config(raw)
    out = _out_dir(args.out)

    inputs: dict[str, str | Path] = {}
    if args.trace:
        trace_path = Path(args.trace)
        inputs["trace"] = trace_path
    else:
        records = generate_synthetic_trace(
            resolved.gop, resolved.complexity, resolved.num_gops, resolved.seed
        )
        trace_path = out / "trace.csv"
        write_trace(trace_path, records)

    config_json = json.dumps(resolved.raw, sort_keys=True)
    cells = [
        (config_json, lam, cores, str(trace_path))
        for lam in resolved.sweep_lambdas
        for cores in resolved.sweep_cores
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_worker, cells))
    else:
        rows = [_sweep_worker(cell) for cell in cells]

    sweep_path = out / "sweep.csv"
    sweep_path.write_text(format_sweep_rows(rows))
    outputs = ["sweep.csv"] + ([] if args.trace else ["trace.csv"])
    write_manifest(out, "sweep", resolved, inputs=inputs, outputs=outputs)
    print(f"wrote {len(rows)} sweep rows to {sweep_path}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    import csv

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = _out_dir(args.out)
    with open(args.sweep, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SWEEP_HEADER.split(","):
            raise ConfigError(f"{args.sweep} is not a sweep CSV")
        rows = [
            {
                "lambda": float(r["lambda"]),
                "M": int(r["M"]),
                "scheduler": r["scheduler"],
                "frame_rate_fps": float(r["frame_rate_fps"]),
                "power_per_core_w": float(r["power_per_core_w"]),
                "total_power_w": float(r["total_power_w"]),
                "miss": {t: float(r[f"miss_{t}"]) for t in ("I", "P", "B")},
            }
            for r in reader
        ]
    if not rows:
        raise ConfigError(f"{args.sweep} has no data rows")

    groups: dict[tuple[str, int], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["scheduler"], row["M"]), []).append(row)
    for series in groups.values():
        series.sort(key=lambda r: r["lambda"])

    written = []

    def save(fig, name: str) -> None:
        fig.savefig(out / name, dpi=120)
        plt.close(fig)
        written.append(name)

    fig, ax = plt.subplots(figsize=(6, 4))
    for (scheduler, cores), series in sorted(groups.items()):
        ax.plot(
            [r["lambda"] for r in series],
            [r["frame_rate_fps"] for r in series],
            marker="o",
            label=f"{scheduler} M={cores}",
        )
    ax.set_xlabel("lambda")
    ax.set_ylabel("decoded frame rate (fps)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    save(fig, "frame_rate.png")

    fig, ax = plt.subplots(figsize=(6, 4))
    for (scheduler, cores), series in sorted(groups.items()):
        ax.plot(
            [r["lambda"] for r in series],
            [r["total_power_w"] for r in series],
            marker="o",
            label=f"{scheduler} M={cores}",
        )
    ax.set_xlabel("lambda")
    ax.set_ylabel("total power (W)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    save(fig, "power.png")

    fig, ax = plt.subplots(figsize=(6, 4))
    styles = {"I": "-", "P": "--", "B": ":"}
    for (scheduler, cores), series in sorted(groups.items()):
        for t, style in styles.items():
            ax.plot(
                [r["lambda"] for r in series],
                [r["miss"][t] for r in series],
                style,
                marker=".",
                label=f"{scheduler} M={cores} {t}",
            )
    ax.set_xlabel("lambda")
    ax.set_ylabel("deadline miss fraction")
    ax.legend(fontsize=6, ncol=2)
    ax.grid(True, alpha=0.3)
    save(fig, "miss_fractions.png")

    if args.metrics:
        with open(args.metrics) as fh:
            payload = json.load(fh)
        per_slot = payload.get("per_slot_power_w", [])
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(range(len(per_slot)), per_slot, lw=0.8)
        ax.set_xlabel("slot")
        ax.set_ylabel("power (W)")
        ax.grid(True, alpha=0.3)
        save(fig, "power_timeline.png")

    print(f"wrote {', '.join(sorted(written))} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Argparse variant whose usage errors map to the validation exit code."""

    def error(self, message: str):  # noqa: D401 - argparse contract
        raise ConfigError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated float list, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated int list, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slicesched", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=TOOL_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser, out: bool = True) -> None:
        p.add_argument("--config", required=True, help="JSON config file")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("validate", help="check config / trace / policy files")
    common(p, out=False)
    p.add_argument("--trace", help="trace CSV to check against the config")
    p.add_argument("--policy", help="policy table to check against the config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve the per-frame policies")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, help="override solver lambda")
    p.add_argument("--cores", type=int, help="override processor count")
    p.add_argument("--seed", type=int, help="override seed recorded in the manifest")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("trace", help="generate a synthetic complexity trace")
    common(p)
    p.add_argument("--seed", type=int, help="override trace seed")
    p.add_argument("--gops", type=int, help="override number of GOPs")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("simulate", help="replay a trace under one scheduler")
    common(p)
    p.add_argument("--trace", required=True, help="trace CSV to replay")
    p.add_argument("--policy", help="policy table (solved in-process if omitted)")
    p.add_argument("--scheduler", choices=SCHEDULERS, help="override scheduler")
    p.add_argument("--lambda", dest="lam", type=float, help="override solver lambda")
    p.add_argument("--cores", type=int, help="override processor count")
    p.add_argument("--seed", type=int, help="override simulation seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run the (lambda, cores) grid")
    common(p)
    p.add_argument("--trace", help="shared trace CSV (generated when omitted)")
    p.add_argument(
        "--lambda",
        dest="lam_list",
        type=_float_list,
        help="comma-separated lambda grid override",
    )
    p.add_argument(
        "--cores",
        dest="cores_list",
        type=_int_list,
        help="comma-separated core-count grid override",
    )
    p.add_argument("--scheduler", choices=SCHEDULERS, help="override scheduler")
    p.add_argument("--seed", type=int, help="override trace/simulation seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker count")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render sweep / metrics charts")
    p.add_argument("--sweep", required=True, help="sweep CSV to chart")
    p.add_argument("--metrics", help="metrics JSON for a per-slot power chart")
    p.add_argument("--out", required=True, help="output directory for PNGs")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SliceSchedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
