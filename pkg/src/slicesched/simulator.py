"""Time-slotted trace-driven simulation with metrics and baselines.

The engine replays a slice-complexity trace against a configured platform.
Each slot it looks up every live frame's action in the per-frame policy
tables, arbitrates contention (earliest decode deadline first, sticky
in-flight slices, optional shared clock), advances the busy processors
against the trace's *actual* cycle counts with slack reclamation, and drops
whatever is still undecoded when a frame's display deadline passes.  Slice
conservation (arrived = decoded + dropped + pending) is asserted every slot.

Two baselines ship alongside the policy engine:

* ``proposed_coordinated`` — the same policy engine with all processors
  forced onto one shared clock (fastest busy frequency) each slot.
* ``opt_mems`` — a fluid oracle-style DVFS baseline: frames are served one
  at a time in deadline order, split perfectly across all processors, at the
  pair of adjacent grid frequencies whose time-multiplex exactly covers the
  frame's worst-case remaining cycles by its deadline.

Determinism: everything is a pure function of (config, trace, policies);
random tie-breaks come from a generator seeded by the config seed, and the
synthetic trace generator seeds per (seed, gop, frame, slice) so records do
not depend on generation order.

Horizon edge: a frame whose reference chain extends past the simulated
stream (the trailing B of the final GOP references the next GOP's I) can
never become decodable.  Such frames are simulated — they occupy buffer and
power and their slices are conserved as drops — but excluded from the
counted-frame and miss-fraction denominators, so "every counted frame
decoded" corresponds exactly to the nominal display rate.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cost_model import LagrangianParams, SystemModel, processor_power
from .errors import ConfigError, PolicyError, TraceError
from .first_level import FramePolicySet
from .second_level import (
    FrameClaim,
    ProcessorState,
    apply_stickiness,
    coordinate_frequencies,
    edf_assign,
    reclaim_slack,
    write_assignment_log,
)
from .stochastic_model import ComplexityModel, sample_complexity
from .workload_model import FrameType, GopStructure, frame_timing

__all__ = [
    "SCHEDULERS",
    "TRACE_HEADER",
    "SliceTraceRecord",
    "SimConfig",
    "SlotLog",
    "SimMetrics",
    "write_trace",
    "read_trace",
    "generate_synthetic_trace",
    "run_simulation",
    "opt_mems_schedule",
    "compute_metrics",
]

SCHEDULERS = ("proposed", "proposed_coordinated", "opt_mems")

TRACE_HEADER = ("gop", "frame_pos", "frame_type", "slice", "decode_cycles")
TRACE_ENERGY_FIELDS = ("core_mj", "icache_mj", "dcache_mj", "l2_mj")


@dataclass(frozen=True)
class SliceTraceRecord:
    """One slice's actual decode complexity (frequency-independent cycles)."""

    gop_index: int
    frame_position: int
    frame_type: FrameType
    slice_index: int
    decode_cycles: int
    energies: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.decode_cycles <= 0:
            raise TraceError(
                f"decode_cycles must be positive, got {self.decode_cycles} for "
                f"gop {self.gop_index} frame {self.frame_position} "
                f"slice {self.slice_index}"
            )


@dataclass(frozen=True)
class SimConfig:
    """Everything one simulation run depends on."""

    gop: GopStructure
    system: SystemModel
    params: LagrangianParams
    scheduler: str
    seed: int
    num_gops: int
    complexity: ComplexityModel | None = None
    worst_case_cycles: Mapping[FrameType, float] | None = None

    def __post_init__(self) -> None:
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(
                f"scheduler must be one of {SCHEDULERS}, got {self.scheduler!r}"
            )
        if self.num_gops < 0:
            raise ConfigError("num_gops must be >= 0")

    @property
    def num_slots(self) -> int:
        return self.num_gops * self.gop.period_slots

    @property
    def frame_period(self) -> float:
        """Seconds per displayed frame."""
        return self.gop.slot_duration * self.gop.period_slots / self.gop.num_frames


@dataclass(frozen=True)
class SlotLog:
    """Per-slot accounting increments plus the end-of-slot pending count."""

    slot: int
    energy_joules: float
    arrived_slices: int
    decoded_slices: int
    dropped_slices: int
    pending_slices: int
    decoded_frames: dict[FrameType, int]
    missed_frames: dict[FrameType, int]


@dataclass(frozen=True)
class SimMetrics:
    """Aggregate run metrics plus the per-slot power series."""

    avg_power_per_core: float
    avg_total_power: float
    decoded_frame_rate: float
    miss_fraction: dict[FrameType, float]
    decoded_slices: int
    dropped_slices: int
    pending_slices: int
    decoded_frames: int
    counted_frames: int
    slots: int
    sim_seconds: float
    per_slot_power: tuple[float, ...]


# ---------------------------------------------------------------------------
# trace IO and synthesis


def write_trace(path, records: Sequence[SliceTraceRecord]) -> None:
    """Write trace records as CSV, sorted for byte-identical reruns."""
    with_energy = any(r.energies for r in records)
    header = list(TRACE_HEADER) + (list(TRACE_ENERGY_FIELDS) if with_energy else [])
    ordered = sorted(
        records, key=lambda r: (r.gop_index, r.frame_position, r.slice_index)
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in ordered:
            row = [
                r.gop_index,
                r.frame_position,
                str(r.frame_type),
                r.slice_index,
                r.decode_cycles,
            ]
            if with_energy:
                energies = list(r.energies) + [0.0] * (4 - len(r.energies))
                row += [f"{e:g}" for e in energies]
            writer.writerow(row)


def read_trace(path) -> list[SliceTraceRecord]:
    """Read a trace CSV; rejects bad headers, duplicates and bad cycles."""
    records: list[SliceTraceRecord] = []
    seen: set[tuple[int, int, int]] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceError(f"{path} is empty") from None
        if tuple(header[:5]) != TRACE_HEADER:
            raise TraceError(f"{path} has unexpected header {header!r}")
        has_energy = len(header) > 5
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TraceError(f"{path}:{line_no}: wrong column count")
            try:
                gop, pos = int(row[0]), int(row[1])
                ftype = FrameType(row[2])
                slice_idx, cycles = int(row[3]), int(row[4])
                energies = tuple(float(e) for e in row[5:]) if has_energy else ()
            except ValueError as exc:
                raise TraceError(f"{path}:{line_no}: {exc}") from exc
            key = (gop, pos, slice_idx)
            if key in seen:
                raise TraceError(f"{path}:{line_no}: duplicate slice {key}")
            seen.add(key)
            records.append(
                SliceTraceRecord(gop, pos, ftype, slice_idx, cycles, energies)
            )
    return records


def generate_synthetic_trace(
    gop: GopStructure,
    model: ComplexityModel,
    num_gops: int,
    seed: int,
) -> list[SliceTraceRecord]:
    """Sample per-slice complexities, seeded per (seed, gop, frame, slice).

    The per-slice seeding makes every record independent of generation order,
    so regeneration with the same seed is byte-identical.
    """
    records: list[SliceTraceRecord] = []
    for g in range(num_gops):
        for spec in gop.frames:
            for s in range(spec.num_slices):
                rng = np.random.default_rng(
                    np.random.SeedSequence((seed, g, spec.position, s))
                )
                cycles = max(
                    1, int(round(sample_complexity(model, spec.frame_type, rng)))
                )
                records.append(
                    SliceTraceRecord(g, spec.position, spec.frame_type, s, cycles)
                )
    return records


def _index_trace(
    config: SimConfig, trace: Sequence[SliceTraceRecord]
) -> dict[tuple[int, int], list[int]]:
    """Per-instance slice cycle lists; raises on underrun for the run length."""
    gop = config.gop
    cycles: dict[tuple[int, int], dict[int, int]] = {}
    for r in trace:
        cycles.setdefault((r.gop_index, r.frame_position), {})[
            r.slice_index
        ] = r.decode_cycles
    out: dict[tuple[int, int], list[int]] = {}
    for g in range(config.num_gops):
        for spec in gop.frames:
            got = cycles.get((g, spec.position), {})
            missing = [s for s in range(spec.num_slices) if s not in got]
            if missing:
                raise TraceError(
                    f"trace underrun: gop {g} frame {spec.position} lacks "
                    f"slices {missing}"
                )
            out[(g, spec.position)] = [got[s] for s in range(spec.num_slices)]
    return out


# ---------------------------------------------------------------------------
# live frame instances


@dataclass
class _Instance:
    key: tuple[int, int]  # (gop_index, position)
    frame_type: FrameType
    cycles: list[int]
    arrival: int
    decode_deadline: int
    display_deadline: int
    parents: tuple[tuple[int, int], ...]  # in-horizon parent keys
    orphaned: bool  # a parent lies beyond the simulated stream
    undecoded: list[int] = field(default_factory=list)
    fully_decoded: bool = False
    counted: bool = True

    def __post_init__(self) -> None:
        self.undecoded = list(range(len(self.cycles)))


def _build_instances(
    config: SimConfig, cycles: Mapping[tuple[int, int], list[int]]
) -> dict[tuple[int, int], _Instance]:
    gop = config.gop
    instances: dict[tuple[int, int], _Instance] = {}
    for g in range(config.num_gops):
        for spec in gop.frames:
            timing = frame_timing(gop, spec.position, g)
            parents = []
            orphaned = False
            for p_pos, p_gop in gop.parents_of_instance(spec.position, g):
                if p_gop < 0:
                    continue  # before the stream: treated as available
                if p_gop >= config.num_gops:
                    orphaned = True
                    continue
                parents.append((p_gop, p_pos))
            instances[(g, spec.position)] = _Instance(
                key=(g, spec.position),
                frame_type=spec.frame_type,
                cycles=cycles[(g, spec.position)],
                arrival=timing.arrival_slot,
                decode_deadline=timing.decode_deadline,
                display_deadline=timing.display_deadline,
                parents=tuple(parents),
                orphaned=orphaned,
            )
    # counted = this frame and every ancestor can exist inside the horizon
    order = sorted(instances, key=lambda k: instances[k].display_deadline)
    for key in order:
        inst = instances[key]
        inst.counted = not inst.orphaned and all(
            instances[p].counted for p in inst.parents
        )
    return instances


def _decodable(
    inst: _Instance, instances: Mapping[tuple[int, int], _Instance]
) -> bool:
    if inst.orphaned:
        return False
    return all(instances[p].fully_decoded for p in inst.parents)


def _policy_actions(policies, position: int):
    """Accept a FramePolicySet or a plain {position: {state: action}} mapping."""
    if isinstance(policies, FramePolicySet):
        return policies.frames[position].actions
    return policies[position]


# ---------------------------------------------------------------------------
# the policy-driven slot engine


def run_simulation(
    config: SimConfig,
    trace: Sequence[SliceTraceRecord],
    policies=None,
    assignment_log_path=None,
) -> SimMetrics:
    """Simulate one run and return its metrics.

    ``policies`` (per-frame action tables) are required for the policy-driven
    schedulers and ignored by the ``opt_mems`` baseline.
    """
    if config.scheduler == "opt_mems":
        return opt_mems_schedule(config, trace, assignment_log_path)
    if policies is None:
        raise PolicyError(f"scheduler {config.scheduler!r} needs policy tables")
    gop, system = config.gop, config.system
    power = system.power
    num_procs = system.num_processors
    num_f = len(power.frequencies)
    dt = gop.slot_duration
    coordinated = config.scheduler == "proposed_coordinated"
    rng = np.random.default_rng(config.seed)

    cycles = _index_trace(config, trace)
    instances = _build_instances(config, cycles)
    for position in (f.position for f in gop.frames):
        actions = _policy_actions(policies, position)
        for action in actions.values():
            if len(action) != num_procs:
                raise PolicyError(
                    f"policy for frame {position} has {len(action)} processor "
                    f"entries, platform has {num_procs}"
                )
            for f_idx, _ in action:
                if not 0 <= f_idx < num_f:
                    raise ConfigError(
                        f"policy frequency index {f_idx} outside the "
                        f"{num_f}-point grid"
                    )

    proc_states = [ProcessorState(frequency_idx=0) for _ in range(num_procs)]
    in_flight_slice: list[int | None] = [None] * num_procs
    live: dict[tuple[int, int], _Instance] = {}
    logs: list[SlotLog] = []
    log_rows = []
    arrived_total = decoded_total = dropped_total = 0

    for slot in range(config.num_slots):
        phase = slot % gop.period_slots
        arrived_now = 0
        for spec in gop.frames:
            for g in range(config.num_gops):
                inst = instances[(g, spec.position)]
                if inst.arrival == slot:
                    live[inst.key] = inst
                    arrived_now += len(inst.cycles)
        arrived_total += arrived_now

        # desired actions from the live per-frame states
        claims: list[list[FrameClaim]] = [[] for _ in range(num_procs)]
        frame_actions: dict[tuple[int, int], tuple[tuple[int, int], ...]] = {}
        for key, inst in live.items():
            x = len(inst.undecoded)
            r = 1 if _decodable(inst, instances) else 0
            action = _policy_actions(policies, key[1])[(phase, x, r)]
            frame_actions[key] = action
            for j, (f_idx, y) in enumerate(action):
                if y:
                    claims[j].append(
                        FrameClaim(
                            frame=key,
                            deadline=inst.decode_deadline,
                            frequency_idx=f_idx,
                            buffer=x,
                            ready=bool(r),
                        )
                    )

        proposal = edf_assign(claims, rng)
        live_buffers = {k: len(v.undecoded) for k, v in live.items()}
        # Frequency for retained in-flight slices: the policy's per-processor
        # frequencies are meaningful only where the schedule bit is set, so a
        # sticky holder follows the strictest scheduled frequency for its
        # frame; when the policy pauses the frame entirely, the holder keeps
        # its previous frequency (resolved inside apply_stickiness).
        sticky_freqs: dict[tuple[int, int], int] = {}
        for state in proc_states:
            if state.in_flight is None:
                continue
            key = state.in_flight[0]
            if key in live and key not in sticky_freqs:
                wanted = [f for f, y in frame_actions[key] if y]
                if wanted:
                    sticky_freqs[key] = max(wanted)
        assignment = apply_stickiness(
            proc_states, proposal, live_buffers, sticky_freqs
        )
        if coordinated:
            assignment = coordinate_frequencies(assignment)

        # phase 1: resuming processors re-claim their in-flight slices first,
        # so a later-scanned resume can never collide with an earlier
        # processor's fresh pick on the same frame
        claimed_slices: dict[tuple[int, int], set[int]] = {}
        proc_slice: list[int | None] = [None] * num_procs
        for j, (f_idx, key) in enumerate(assignment.processors):
            if key is None:
                continue
            prev = proc_states[j]
            if (
                prev.in_flight is not None
                and prev.in_flight[0] == key
                and in_flight_slice[j] in live[key].undecoded
            ):
                sid = in_flight_slice[j]
                taken = claimed_slices.setdefault(key, set())
                assert sid not in taken, "slice resumed by two processors"
                proc_slice[j] = sid
                taken.add(sid)
        for j, (f_idx, key) in enumerate(assignment.processors):
            if key is None or proc_slice[j] is not None:
                continue
            taken = claimed_slices.setdefault(key, set())
            remaining = [s for s in live[key].undecoded if s not in taken]
            if not remaining:
                continue  # nothing left to start on this processor
            proc_slice[j] = remaining[0]
            taken.add(remaining[0])

        # phase 2: advance each processor against the actual trace cycles
        decoded_now = 0
        energy = 0.0
        new_states: list[ProcessorState] = []
        new_in_flight: list[int | None] = [None] * num_procs
        completed_per_proc = [0] * num_procs
        for j, (f_idx, key) in enumerate(assignment.processors):
            sid = proc_slice[j]
            if key is None or sid is None:
                energy += dt * processor_power(power, f_idx, None)
                new_states.append(ProcessorState(frequency_idx=f_idx))
                continue
            inst = live[key]
            freq_hz = power.frequencies[f_idx]
            prev = proc_states[j]
            done = (
                prev.in_flight[1]
                if prev.in_flight is not None
                and prev.in_flight[0] == key
                and in_flight_slice[j] == sid
                else 0
            )
            remaining = inst.cycles[sid] - done
            budget = freq_hz * dt
            active_power = processor_power(power, f_idx, inst.frame_type)
            idle_power = power.rho(f_idx if coordinated else 0)
            if remaining > budget + 1e-9:
                done += int(math.floor(budget))
                energy += dt * active_power
                new_states.append(
                    ProcessorState(frequency_idx=f_idx, in_flight=(key, done))
                )
                new_in_flight[j] = sid
                continue
            finished_at = remaining / freq_hz
            inst.undecoded.remove(sid)
            decoded_now += 1
            completed_per_proc[j] += 1
            taken = claimed_slices.setdefault(key, set())
            pending = [s for s in inst.undecoded if s not in taken]
            slack = reclaim_slack(
                finished_at, freq_hz, dt, [inst.cycles[s] for s in pending]
            )
            for s in pending[: slack.completed]:
                inst.undecoded.remove(s)
                taken.add(s)
                decoded_now += 1
                completed_per_proc[j] += 1
            if slack.partial_cycles > 0 and slack.completed < len(pending):
                sid_next = pending[slack.completed]
                taken.add(sid_next)
                new_states.append(
                    ProcessorState(
                        frequency_idx=f_idx,
                        in_flight=(key, slack.partial_cycles),
                    )
                )
                new_in_flight[j] = sid_next
            else:
                new_states.append(ProcessorState(frequency_idx=f_idx))
            energy += slack.busy_until * active_power
            energy += (dt - slack.busy_until) * idle_power
            if not inst.undecoded:
                inst.fully_decoded = True

        proc_states = new_states
        in_flight_slice = new_in_flight
        decoded_total += decoded_now

        if assignment_log_path is not None:
            for j, (f_idx, key) in enumerate(assignment.processors):
                log_rows.append(
                    (
                        slot,
                        j,
                        power.frequencies[f_idx] / 1e6,
                        f"g{key[0]}f{key[1]}" if key is not None else None,
                        completed_per_proc[j],
                    )
                )

        # expiry: anything still undecoded at the display deadline is dropped
        dropped_now = 0
        decoded_frames = {t: 0 for t in FrameType}
        missed_frames = {t: 0 for t in FrameType}
        for key in [k for k, v in live.items() if v.display_deadline == slot]:
            inst = live.pop(key)
            if inst.undecoded:
                dropped_now += len(inst.undecoded)
                inst.undecoded.clear()
                if inst.counted:
                    missed_frames[inst.frame_type] += 1
            elif inst.counted:
                decoded_frames[inst.frame_type] += 1
            for j, state in enumerate(proc_states):
                if state.in_flight is not None and state.in_flight[0] == key:
                    proc_states[j] = ProcessorState(
                        frequency_idx=state.frequency_idx
                    )
                    in_flight_slice[j] = None
        dropped_total += dropped_now

        pending = sum(len(v.undecoded) for v in live.values())
        if arrived_total != decoded_total + dropped_total + pending:
            raise AssertionError(
                f"slice conservation broken at slot {slot}: "
                f"{arrived_total} arrived vs {decoded_total} decoded + "
                f"{dropped_total} dropped + {pending} pending"
            )
        logs.append(
            SlotLog(
                slot=slot,
                energy_joules=energy,
                arrived_slices=arrived_now,
                decoded_slices=decoded_now,
                dropped_slices=dropped_now,
                pending_slices=pending,
                decoded_frames=decoded_frames,
                missed_frames=missed_frames,
            )
        )

    if assignment_log_path is not None:
        write_assignment_log(assignment_log_path, log_rows)
    return compute_metrics(config, logs)


# ---------------------------------------------------------------------------
# fluid time-multiplexing baseline


def _worst_case_cycles(
    config: SimConfig, trace: Sequence[SliceTraceRecord]
) -> dict[FrameType, float]:
    if config.worst_case_cycles is not None:
        return dict(config.worst_case_cycles)
    worst: dict[FrameType, float] = {}
    for r in trace:
        worst[r.frame_type] = max(worst.get(r.frame_type, 0.0), float(r.decode_cycles))
    return worst


def _multiplex_split(
    frequencies: Sequence[float], f_req: float
) -> tuple[float, float, float]:
    """(f_hi, f_lo, fraction at f_hi) realizing ``f_req`` on the grid."""
    if f_req <= frequencies[0]:
        return frequencies[0], frequencies[0], 0.0
    if f_req >= frequencies[-1]:
        return frequencies[-1], frequencies[-1], 1.0
    hi = bisect_right(frequencies, f_req)
    f_lo, f_hi = frequencies[hi - 1], frequencies[hi]
    if f_req == f_lo:
        return f_lo, f_lo, 0.0
    return f_hi, f_lo, (f_req - f_lo) / (f_hi - f_lo)


def opt_mems_schedule(
    config: SimConfig,
    trace: Sequence[SliceTraceRecord],
    assignment_log_path=None,
) -> SimMetrics:
    """Fluid worst-case DVFS baseline: one frame at a time across all cores.

    Each decodable frame carries a worst-case cycle budget (undecoded slices
    times the per-type worst case, fixed when the frame first reaches the
    front).  Budgets are served preemptive-EDF — all processors jointly
    (perfect split) work the earliest-(decode deadline, gop, position)
    eligible budget — at the required rate: remaining budget cycles over the
    seconds to the frame's decode deadline, realized by multiplexing the two
    adjacent grid frequencies, high frequency first, re-paced whenever the
    front changes.  Slices decode as soon as their actual cycles are
    delivered (so dependents can unlock and preempt mid-plan), but an early
    finish does not release the cycles: the budget keeps the front until the
    worst-case cycles are fully executed — the provisioning cannot adapt to
    the realized complexity.  A frame whose decode deadline already passed
    is re-paced flat out at the top frequency; eviction at the display
    deadline cancels a residual budget.  Requirements above the grid run at
    the top frequency and accept misses; while no budget is eligible all
    processors idle at the lowest frequency.
    """
    gop, system = config.gop, config.system
    power = system.power
    num_procs = system.num_processors
    dt = gop.slot_duration
    freqs = power.frequencies
    cycles = _index_trace(config, trace)
    instances = _build_instances(config, cycles)
    worst = _worst_case_cycles(config, trace)

    # fluid progress per instance: cycles decoded from the ordered slice pool
    progress: dict[tuple[int, int], float] = {}
    prefix: dict[tuple[int, int], list[float]] = {}
    for key, inst in instances.items():
        acc, sums = 0.0, []
        for c in inst.cycles:
            acc += c
            sums.append(acc)
        prefix[key] = sums
        progress[key] = 0.0

    def slices_done(key: tuple[int, int]) -> int:
        return bisect_right(prefix[key], progress[key] + 1e-9)

    live: dict[tuple[int, int], _Instance] = {}
    logs: list[SlotLog] = []
    log_rows = []
    arrived_total = decoded_total = dropped_total = 0
    decoded_slices_before: dict[tuple[int, int], int] = {}
    # worst-case budgets, fixed at each frame's first front tenure; the
    # active plan ([frequency, seconds remaining] segments, high first) is
    # rebuilt whenever the front frame changes
    budget: dict[tuple[int, int], float] = {}
    plan: list[list[float]] = []
    plan_key: tuple[int, int] | None = None

    for slot in range(config.num_slots):
        arrived_now = 0
        for spec in gop.frames:
            for g in range(config.num_gops):
                inst = instances[(g, spec.position)]
                if inst.arrival == slot:
                    live[inst.key] = inst
                    arrived_now += len(inst.cycles)
        arrived_total += arrived_now

        slot_start = slot * dt
        slot_end = slot_start + dt
        now = slot_start
        energy = 0.0
        decoded_now = 0
        slot_freq_time: dict[float, float] = {}

        if plan_key is not None and plan_key not in live:
            # the planned frame was evicted at its display deadline; the
            # kernel kills the task, releasing the residual reservation
            plan, plan_key = [], None

        while now < slot_end - 1e-12:
            front = None
            for inst in live.values():
                if inst.display_deadline < slot or not _decodable(
                    inst, instances
                ):
                    continue
                b = budget.get(inst.key)
                if b is None:
                    if not inst.undecoded:
                        continue
                elif b <= 1e-6:
                    continue
                if front is None or (inst.decode_deadline, inst.key) < (
                    front.decode_deadline,
                    front.key,
                ):
                    front = inst
            if front is None:
                span = slot_end - now
                energy += span * num_procs * power.rho(0)
                slot_freq_time[freqs[0]] = (
                    slot_freq_time.get(freqs[0], 0.0) + span
                )
                now = slot_end
                plan, plan_key = [], None
                break
            key = front.key
            if key not in budget:
                budget[key] = len(front.undecoded) * worst[front.frame_type]
            if plan_key != key or not plan:
                # (re)pace the residual budget to the decode deadline; a
                # frame that is already late runs flat out instead
                target_end = (front.decode_deadline + 1) * dt
                if target_end <= now + 1e-12:
                    target_end = (front.display_deadline + 1) * dt
                if target_end <= now + 1e-12:
                    f_hi = f_lo = freqs[-1]
                    alpha = 1.0
                else:
                    f_req = budget[key] / (num_procs * (target_end - now))
                    f_hi, f_lo, alpha = _multiplex_split(freqs, f_req)
                if f_hi == f_lo:
                    plan = [[f_hi, budget[key] / (num_procs * f_hi)]]
                else:
                    span = target_end - now
                    plan = [
                        [f_hi, alpha * span],
                        [f_lo, (1.0 - alpha) * span],
                    ]
                plan_key = key

            seg = plan[0]
            if seg[1] <= 1e-12:
                plan.pop(0)
                continue
            f = seg[0]
            advance = min(seg[1], slot_end - now)
            remaining_actual = prefix[key][-1] - progress[key]
            if remaining_actual > 1e-9:
                # stop at the frame's actual completion: the flip may
                # unlock a dependent with an earlier deadline, which then
                # preempts the residual budget
                t_complete = remaining_actual / (num_procs * f)
                advance = min(advance, max(t_complete, 1e-12))
            delivered = num_procs * f * advance
            if remaining_actual > 1e-9 and delivered >= remaining_actual - 1e-9:
                progress[key] = prefix[key][-1]
                if not front.fully_decoded:
                    front.undecoded.clear()
                    front.fully_decoded = True
            elif remaining_actual > 1e-9:
                progress[key] += delivered
            budget[key] -= delivered
            energy += advance * num_procs * processor_power(
                power, freqs.index(f), front.frame_type
            )
            slot_freq_time[f] = slot_freq_time.get(f, 0.0) + advance
            now += advance
            seg[1] -= advance
            if seg[1] <= 1e-12:
                plan.pop(0)
            if budget[key] <= 1e-6:
                plan, plan_key = [], None

        for k, inst in live.items():
            before = decoded_slices_before.get(k, 0)
            after = slices_done(k)
            if after > before:
                newly = after - before
                decoded_now += newly
                for s in list(inst.undecoded[:]):
                    if s < after:
                        inst.undecoded.remove(s)
            decoded_slices_before[k] = after
        decoded_total += decoded_now

        if assignment_log_path is not None:
            for f, span in sorted(slot_freq_time.items()):
                log_rows.append(
                    (slot, -1, f / 1e6, f"fluid_{span:.4f}s", 0)
                )

        dropped_now = 0
        decoded_frames = {t: 0 for t in FrameType}
        missed_frames = {t: 0 for t in FrameType}
        for key in [k for k, v in live.items() if v.display_deadline == slot]:
            inst = live.pop(key)
            decoded_slices_before.pop(key, None)
            if inst.undecoded:
                dropped_now += len(inst.undecoded)
                inst.undecoded.clear()
                if inst.counted:
                    missed_frames[inst.frame_type] += 1
            elif inst.counted:
                decoded_frames[inst.frame_type] += 1
        dropped_total += dropped_now

        pending = sum(len(v.undecoded) for v in live.values())
        if arrived_total != decoded_total + dropped_total + pending:
            raise AssertionError(
                f"slice conservation broken at slot {slot}: "
                f"{arrived_total} arrived vs {decoded_total} decoded + "
                f"{dropped_total} dropped + {pending} pending"
            )
        logs.append(
            SlotLog(
                slot=slot,
                energy_joules=energy,
                arrived_slices=arrived_now,
                decoded_slices=decoded_now,
                dropped_slices=dropped_now,
                pending_slices=pending,
                decoded_frames=decoded_frames,
                missed_frames=missed_frames,
            )
        )

    if assignment_log_path is not None:
        write_assignment_log(assignment_log_path, log_rows)
    return compute_metrics(config, logs)


# ---------------------------------------------------------------------------
# metrics


def compute_metrics(config: SimConfig, logs: Sequence[SlotLog]) -> SimMetrics:
    """Aggregate per-slot logs, re-verifying slice conservation on the way."""
    arrived = decoded = dropped = 0
    decoded_frames = {t: 0 for t in FrameType}
    missed_frames = {t: 0 for t in FrameType}
    pending = 0
    for log in logs:
        arrived += log.arrived_slices
        decoded += log.decoded_slices
        dropped += log.dropped_slices
        pending = log.pending_slices
        if arrived != decoded + dropped + pending:
            raise AssertionError(
                f"slot {log.slot} logs violate slice conservation"
            )
        for t in FrameType:
            decoded_frames[t] += log.decoded_frames.get(t, 0)
            missed_frames[t] += log.missed_frames.get(t, 0)

    sim_seconds = len(logs) * config.gop.slot_duration
    total_energy = sum(log.energy_joules for log in logs)
    num_procs = config.system.num_processors
    avg_total = total_energy / sim_seconds if sim_seconds > 0 else 0.0

    counted = {
        t: decoded_frames[t] + missed_frames[t] for t in FrameType
    }
    miss_fraction = {
        t: (missed_frames[t] / counted[t]) if counted[t] else 0.0
        for t in FrameType
    }
    total_counted = sum(counted.values())
    total_decoded_frames = sum(decoded_frames.values())
    rate = (
        total_decoded_frames / (total_counted * config.frame_period)
        if total_counted
        else 0.0
    )
    return SimMetrics(
        avg_power_per_core=avg_total / num_procs,
        avg_total_power=avg_total,
        decoded_frame_rate=rate,
        miss_fraction=miss_fraction,
        decoded_slices=decoded,
        dropped_slices=dropped,
        pending_slices=pending,
        decoded_frames=total_decoded_frames,
        counted_frames=total_counted,
        slots=len(logs),
        sim_seconds=sim_seconds,
        per_slot_power=tuple(
            log.energy_joules / config.gop.slot_duration for log in logs
        ),
    )
