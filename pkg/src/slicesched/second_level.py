"""Run-time arbitration turning per-frame wishes into one slot assignment.

The per-frame policies are solved independently, so in any given slot several
frames may want the same processor.  This module is the sequential arbiter
that resolves those conflicts:

* ``edf_assign`` gives each contested processor to the candidate frame with
  the earliest decode deadline (seeded random tie-break) and then replays the
  buffer constraint across processors, dropping excess claims on a frame —
  beyond its live undecoded-slice count — from the highest-indexed processor
  first.
* ``apply_stickiness`` pins any slice already in flight to its processor
  until it finishes or its frame expires.  Slices never migrate.  The pinned
  slice runs at whatever frequency the policy currently assigns to its frame
  (the policy may legitimately re-rate an ongoing decode as the state
  evolves); only the slice placement is pinned.
* ``reclaim_slack`` chains further slices of the same frame onto a processor
  that finished early, at the same frequency, and idles the processor at the
  lowest frequency once the frame has no undecoded slices left.
* ``coordinate_frequencies`` models a single shared clock domain: every
  processor — idle ones included — runs at the fastest frequency any busy
  processor selected.

All functions are pure: they return new assignments and never mutate their
inputs.  Determinism comes from the caller's seeded random generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

__all__ = [
    "ProcessorState",
    "FrameClaim",
    "SlotAssignment",
    "SlackResult",
    "edf_assign",
    "apply_stickiness",
    "reclaim_slack",
    "coordinate_frequencies",
    "write_assignment_log",
    "ASSIGNMENT_LOG_HEADER",
]


@dataclass(frozen=True)
class ProcessorState:
    """One processor between slots: frequency, in-flight slice, stickiness.

    ``in_flight`` is ``None`` for an idle processor, else a pair of the frame
    identifier and the cycles already completed on the current slice.  A
    sticky in-flight slice must be retained next slot unless its frame
    expired.
    """

    frequency_idx: int
    in_flight: tuple[Hashable, int] | None = None
    sticky: bool = True

    @property
    def busy(self) -> bool:
        return self.in_flight is not None


@dataclass(frozen=True)
class FrameClaim:
    """One frame's wish for one processor in one slot.

    ``buffer`` and ``ready`` are the frame's live undecoded-slice count and
    dependency bit; claims are only actionable when the frame has a slice to
    decode and its references are available.
    """

    frame: Hashable
    deadline: int
    frequency_idx: int
    buffer: int
    ready: bool = True

    @property
    def actionable(self) -> bool:
        return self.ready and self.buffer >= 1


@dataclass(frozen=True)
class SlotAssignment:
    """Final per-slot mapping: (frequency index, frame or None) per processor."""

    processors: tuple[tuple[int, Hashable | None], ...]

    @property
    def num_processors(self) -> int:
        return len(self.processors)

    @property
    def claimed(self) -> dict[Hashable, int]:
        counts: dict[Hashable, int] = {}
        for _, frame in self.processors:
            if frame is not None:
                counts[frame] = counts.get(frame, 0) + 1
        return counts

    def busy_processors(self) -> tuple[int, ...]:
        return tuple(
            j for j, (_, frame) in enumerate(self.processors) if frame is not None
        )


IDLE_FREQUENCY_IDX = 0


def _enforce_buffer(
    order: Sequence[int],
    chosen: list[tuple[int, Hashable | None]],
    buffers: Mapping[Hashable, int],
) -> None:
    """Drop claims that oversubscribe a frame's buffer, later ``order`` first.

    ``order`` lists processor indices from highest to lowest retention
    priority; claims past a frame's live slice count revert to idle.
    """
    counts: dict[Hashable, int] = {}
    for j in order:
        freq, frame = chosen[j]
        if frame is None:
            continue
        if counts.get(frame, 0) >= buffers.get(frame, 0):
            chosen[j] = (IDLE_FREQUENCY_IDX, None)
        else:
            counts[frame] = counts.get(frame, 0) + 1


def edf_assign(
    claims: Sequence[Sequence[FrameClaim]],
    rng: np.random.Generator,
) -> SlotAssignment:
    """Resolve per-processor contention by earliest decode deadline.

    ``claims[j]`` lists the frames wanting processor ``j`` with their desired
    frequencies.  On each processor the actionable claim with the smallest
    deadline wins; exact ties are broken by the seeded generator.  Afterwards
    the buffer constraint is replayed jointly: a frame keeps at most as many
    processors as it has undecoded slices, dropping the highest-indexed
    processors first.  Processors left without a frame idle at the lowest
    frequency.
    """
    chosen: list[tuple[int, Hashable | None]] = []
    buffers: dict[Hashable, int] = {}
    for per_proc in claims:
        actionable = [c for c in per_proc if c.actionable]
        if not actionable:
            chosen.append((IDLE_FREQUENCY_IDX, None))
            continue
        best = min(c.deadline for c in actionable)
        tied = [c for c in actionable if c.deadline == best]
        pick = tied[int(rng.integers(len(tied)))] if len(tied) > 1 else tied[0]
        chosen.append((pick.frequency_idx, pick.frame))
        buffers[pick.frame] = pick.buffer
    _enforce_buffer(range(len(chosen)), chosen, buffers)
    return SlotAssignment(processors=tuple(chosen))


def apply_stickiness(
    previous: Sequence[ProcessorState],
    proposed: SlotAssignment,
    live_buffers: Mapping[Hashable, int],
    frame_frequencies: Mapping[Hashable, int] | None = None,
) -> SlotAssignment:
    """Retain in-flight slices on their processors, then replay the buffer cap.

    ``live_buffers`` maps each still-live (unexpired) frame to its undecoded
    slice count, which includes slices currently in flight — so it is never
    smaller than the number of processors holding the frame.  An in-flight
    slice whose frame is absent has expired: the processor is freed and the
    proposal passes through.  A retained slice runs at the policy's current
    frequency for its frame — taken from ``frame_frequencies``, else from the
    proposal if it kept the same frame on this processor, else unchanged.
    Sticky slices consume buffer ahead of newly proposed claims, which are
    dropped from the highest-indexed processor first; slices never migrate.
    """
    if len(previous) != proposed.num_processors:
        raise ValueError(
            f"{len(previous)} processor states for "
            f"{proposed.num_processors}-processor assignment"
        )
    frame_frequencies = frame_frequencies or {}
    chosen = [tuple(entry) for entry in proposed.processors]
    sticky_procs: list[int] = []
    for j, state in enumerate(previous):
        if not state.sticky or state.in_flight is None:
            continue
        frame, _ = state.in_flight
        if frame not in live_buffers:
            continue  # expired mid-decode: slice dropped, processor freed
        if frame in frame_frequencies:
            freq = frame_frequencies[frame]
        elif proposed.processors[j][1] == frame:
            freq = proposed.processors[j][0]
        else:
            freq = state.frequency_idx
        chosen[j] = (freq, frame)
        sticky_procs.append(j)
    order = sticky_procs + [
        j for j in range(len(chosen)) if j not in sticky_procs
    ]
    _enforce_buffer(order, chosen, live_buffers)
    return SlotAssignment(processors=tuple(chosen))


@dataclass(frozen=True)
class SlackResult:
    """Outcome of chaining same-frame slices into a processor's slack time.

    ``busy_until`` is the absolute time within the slot when decoding
    activity stops (equal to the slot length while a chained slice is still
    running at the boundary); beyond it the processor idles at the lowest
    frequency.  ``partial_cycles`` is the progress carried into the next slot
    by a chained slice that did not finish.
    """

    completed: int
    partial_cycles: int
    busy_until: float


def reclaim_slack(
    finished_at: float,
    frequency_hz: float,
    slot_duration: float,
    pending_cycles: Sequence[int],
) -> SlackResult:
    """Chain the frame's next undecoded slices into the rest of the slot.

    ``finished_at`` is when the previous slice completed; ``pending_cycles``
    lists the frame's remaining undecoded slice complexities in decode order.
    Slices start back-to-back at the same frequency until the slot ends or
    the frame drains; a slice cut off by the boundary reports its partial
    progress.  A completion exactly at the boundary reclaims nothing.
    """
    if not 0.0 <= finished_at <= slot_duration:
        raise ValueError(
            f"completion time {finished_at} outside slot of {slot_duration}"
        )
    if frequency_hz <= 0:
        raise ValueError("frequency must be positive")
    budget = frequency_hz * (slot_duration - finished_at)
    completed = 0
    for cycles in pending_cycles:
        if cycles <= 0:
            raise ValueError("slice cycle counts must be positive")
        if cycles <= budget + 1e-9:
            completed += 1
            budget -= cycles
        else:
            return SlackResult(
                completed=completed,
                partial_cycles=int(math.floor(budget)),
                busy_until=slot_duration,
            )
    return SlackResult(
        completed=completed,
        partial_cycles=0,
        busy_until=slot_duration - budget / frequency_hz,
    )


def coordinate_frequencies(assignment: SlotAssignment) -> SlotAssignment:
    """Force one shared clock: everyone runs at the fastest busy frequency.

    The shared frequency is the maximum selected among busy processors; idle
    processors are raised too (single clock domain), which is exactly the
    power penalty coordination pays.  With no busy processor everything stays
    at the lowest frequency.
    """
    busy = assignment.busy_processors()
    if not busy:
        return SlotAssignment(
            processors=tuple(
                (IDLE_FREQUENCY_IDX, None) for _ in assignment.processors
            )
        )
    shared = max(assignment.processors[j][0] for j in busy)
    return SlotAssignment(
        processors=tuple((shared, frame) for _, frame in assignment.processors)
    )


ASSIGNMENT_LOG_HEADER = "slot,processor,frequency_mhz,frame,slices_completed"


def write_assignment_log(
    path,
    rows: Sequence[tuple[int, int, float, Hashable | None, int]],
) -> None:
    """Write the per-slot assignment log as CSV.

    Rows are (slot, processor, frequency in MHz, frame id or None, slices
    completed in the slot); idle processors log the frame field as ``IDLE``.
    """
    lines = [ASSIGNMENT_LOG_HEADER]
    for slot, processor, freq_mhz, frame, completed in rows:
        frame_field = "IDLE" if frame is None else str(frame)
        lines.append(
            f"{slot},{processor},{freq_mhz:g},{frame_field},{completed}"
        )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
