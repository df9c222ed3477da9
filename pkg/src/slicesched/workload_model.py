"""Periodic GOP workload model.

A video stream is a periodic sequence of GOPs (groups of pictures).  Each GOP
holds ``K`` frames, displayed in position order at equal spacing, and the slot
clock runs ``T`` slots per GOP (``K`` divides ``T``).  A frame at position
``k`` (1-based) in GOP ``g`` therefore has display deadline

    display(k, g) = k * (T // K) - 1 + g * T,

the last slot in which it can still be decoded in time for its display period.
At slot ``t`` the scheduler looks at the *current frame set*: every frame whose
display deadline falls inside the look-ahead window ``[t, t + W_t]``, where the
window length pattern ``W`` is periodic with period ``T``.  Membership is
contiguous, so each frame instance has a well-defined arrival slot, lifetime,
and per-slot "appearance" index within its lifetime.

Frames reference other frames they depend on (``parents``); a frame may depend
on frames of its own GOP or of the next GOP (closed-GOP B frames reference the
next I frame).  A frame becomes decodable only once every parent is fully
decoded.

The traffic state tracked per slot is ``(phase, x, r)``: the phase selects the
current frame set, ``x`` counts undecoded slices per frame in the set, and
``r`` flags frames whose dependencies are satisfied.  :func:`advance_traffic`
is the one-slot transition used by the solvers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import GopError

__all__ = [
    "FrameType",
    "FrameRef",
    "FrameSpec",
    "FrameTiming",
    "GopStructure",
    "TrafficState",
    "DecodeOutcome",
    "build_gop_schedule",
    "frame_timing",
    "advance_traffic",
    "enumerate_traffic_states",
    "per_frame_state_counts",
    "joint_action_space_size",
    "canonical_ibpb_frames",
    "canonical_ibpb_gop",
]


class FrameType(str, Enum):
    """Closed set of frame types; decode complexity and cache power key off it."""

    I = "I"
    P = "P"
    B = "B"

    def __str__(self) -> str:  # keep CSV/JSON emission compact
        return self.value


@dataclass(frozen=True, order=True)
class FrameRef:
    """A frame instance relative to the current GOP: position plus GOP offset.

    ``gop_delta`` 0 means "this GOP", 1 means "next GOP" (e.g. the next I frame
    showing up inside the current window).
    """

    position: int
    gop_delta: int = 0


@dataclass(frozen=True)
class FrameSpec:
    """Template description of one frame position within the GOP."""

    position: int
    frame_type: FrameType
    num_slices: int
    parents: tuple[FrameRef, ...] = ()
    gop_offset: int = 0

    def __post_init__(self) -> None:
        if self.position < 1:
            raise GopError(f"frame position must be >= 1, got {self.position}")
        if self.num_slices < 1:
            raise GopError(f"frame {self.position}: num_slices must be >= 1")
        if self.gop_offset < 0:
            raise GopError(f"frame {self.position}: gop_offset must be >= 0")
        for p in self.parents:
            if p.gop_delta not in (0, 1):
                raise GopError(
                    f"frame {self.position}: parent {p} must live in this or the "
                    "next GOP (gop_delta 0 or 1)"
                )


@dataclass(frozen=True)
class FrameTiming:
    """Arrival slot, decode deadline and display deadline of a frame instance."""

    arrival_slot: int
    decode_deadline: int
    display_deadline: int

    def __post_init__(self) -> None:
        if not (self.arrival_slot <= self.decode_deadline <= self.display_deadline):
            raise GopError(
                f"timing must satisfy arrival <= decode <= display, got {self}"
            )


@dataclass(frozen=True)
class TrafficState:
    """Per-slot traffic state: phase plus per-frame buffers and dependency bits.

    ``buffers`` and ``deps`` are aligned with the canonical frame order of the
    phase's current frame set (``GopStructure.current_frame_sets[phase]``).
    """

    phase: int
    buffers: tuple[int, ...]
    deps: tuple[int, ...]

    def buffer_map(self, gop: "GopStructure") -> dict[FrameRef, int]:
        return dict(zip(gop.current_frame_sets[self.phase], self.buffers))

    def dep_map(self, gop: "GopStructure") -> dict[FrameRef, int]:
        return dict(zip(gop.current_frame_sets[self.phase], self.deps))

    @classmethod
    def from_maps(
        cls,
        gop: "GopStructure",
        phase: int,
        buffers: Mapping[FrameRef, int],
        deps: Mapping[FrameRef, int],
    ) -> "TrafficState":
        refs = gop.current_frame_sets[phase]
        if set(buffers) != set(refs) or set(deps) != set(refs):
            raise GopError("buffer/dep maps must cover exactly the current frame set")
        return cls(
            phase=phase,
            buffers=tuple(buffers[r] for r in refs),
            deps=tuple(deps[r] for r in refs),
        )


@dataclass(frozen=True)
class DecodeOutcome:
    """Realized slice departures for one slot.

    ``completed[j]`` names the frame whose slice processor ``j`` finished this
    slot, or ``None`` (idle, or the attempt did not finish).  At most one slice
    per processor per slot, so this is the full ``z`` matrix in sparse form.
    """

    completed: tuple[FrameRef | None, ...]

    def totals(self) -> dict[FrameRef, int]:
        out: dict[FrameRef, int] = {}
        for ref in self.completed:
            if ref is not None:
                out[ref] = out.get(ref, 0) + 1
        return out


@dataclass(frozen=True)
class GopStructure:
    """Validated periodic GOP schedule with all derived lookups precomputed."""

    frames: tuple[FrameSpec, ...]
    window_lengths: tuple[int, ...]
    period_slots: int
    slot_duration: float
    # derived, indexed by position-1
    display_slots: tuple[int, ...] = field(repr=False)
    lifetimes: tuple[int, ...] = field(repr=False)
    steady_arrivals: tuple[int, ...] = field(repr=False)  # may be negative
    # derived, indexed by phase
    current_frame_sets: tuple[tuple[FrameRef, ...], ...] = field(repr=False)
    # per phase p: ref in C_p -> ref in C_{p+1 mod T} for the same instance (or None)
    persist_maps: tuple[dict[FrameRef, FrameRef | None], ...] = field(repr=False)
    # per phase p: refs of C_p that are new arrivals relative to C_{p-1 mod T}
    arrival_refs: tuple[tuple[FrameRef, ...], ...] = field(repr=False)
    # per position-1: (child_position, parent_gop_delta) for each dependency edge
    child_edges: tuple[tuple[tuple[int, int], ...], ...] = field(repr=False)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def max_slices(self) -> int:
        return max(f.num_slices for f in self.frames)

    def spec(self, position: int) -> FrameSpec:
        return self.frames[position - 1]

    def display_slot(self, position: int, gop_index: int = 0) -> int:
        return self.display_slots[position - 1] + gop_index * self.period_slots

    def arrival_slot(self, position: int, gop_index: int = 0) -> int:
        """First slot the instance is in the current set (clamped to stream start)."""
        return max(0, self.steady_arrivals[position - 1] + gop_index * self.period_slots)

    def lifetime(self, position: int) -> int:
        return self.lifetimes[position - 1]

    def appearance_at(self, position: int, gop_index: int, slot: int) -> int:
        """Index of ``slot`` within the instance's steady-state lifetime (0-based)."""
        app = slot - (self.steady_arrivals[position - 1] + gop_index * self.period_slots)
        if not 0 <= app < self.lifetimes[position - 1]:
            raise GopError(
                f"slot {slot} outside lifetime of frame {position} in GOP {gop_index}"
            )
        return app

    def phase_of_appearance(self, position: int, app: int) -> int:
        return (self.steady_arrivals[position - 1] + app) % self.period_slots

    def ref_index(self, phase: int, ref: FrameRef) -> int:
        return self.current_frame_sets[phase].index(ref)

    def parents_of_instance(
        self, position: int, gop_index: int
    ) -> tuple[tuple[int, int], ...]:
        """(position, gop_index) pairs of the instance's parents."""
        return tuple(
            (p.position, gop_index + p.gop_delta)
            for p in self.frames[position - 1].parents
        )

    def children_of_instance(
        self, position: int, gop_index: int
    ) -> tuple[tuple[int, int], ...]:
        """(position, gop_index) pairs of existing children instances."""
        out = []
        for child_pos, delta in self.child_edges[position - 1]:
            child_gop = gop_index - delta
            if child_gop >= 0:
                out.append((child_pos, child_gop))
        return tuple(out)


def _membership_deltas(
    position: int,
    phase: int,
    display: int,
    windows: Sequence[int],
    period: int,
) -> list[int]:
    """All gop_deltas of ``position`` whose display deadline lies in the window."""
    lo, hi = phase, phase + windows[phase]
    deltas = []
    delta = 0
    while display + delta * period <= hi:
        if display + delta * period >= lo:
            deltas.append(delta)
        delta += 1
    return deltas


def build_gop_schedule(
    frames: Iterable[FrameSpec],
    window_lengths: Sequence[int],
    period_slots: int,
    slot_duration: float,
) -> GopStructure:
    """Validate the GOP template and precompute the periodic schedule.

    Raises :class:`GopError` for cyclic dependencies, frames that never appear
    in a window, non-contiguous appearances, lifetimes exceeding the period,
    or a period not divisible by the frame count.
    """
    frames = tuple(sorted(frames, key=lambda f: f.position))
    if not frames:
        raise GopError("GOP must contain at least one frame")
    positions = [f.position for f in frames]
    if positions != list(range(1, len(frames) + 1)):
        raise GopError(f"frame positions must be exactly 1..K, got {positions}")
    num_frames = len(frames)
    if period_slots < 1 or period_slots % num_frames != 0:
        raise GopError(
            f"period_slots ({period_slots}) must be a positive multiple of the "
            f"frame count ({num_frames})"
        )
    if slot_duration <= 0:
        raise GopError("slot_duration must be positive")
    window_lengths = tuple(int(w) for w in window_lengths)
    if len(window_lengths) != period_slots:
        raise GopError("window_lengths must have one entry per slot of the period")
    if any(w < 0 for w in window_lengths):
        raise GopError("window lengths must be nonnegative")

    for f in frames:
        for p in f.parents:
            if not 1 <= p.position <= num_frames:
                raise GopError(f"frame {f.position}: parent position {p.position} invalid")
            if p.position == f.position and p.gop_delta == 0:
                raise GopError(f"frame {f.position} cannot depend on itself")

    # Same-GOP dependency cycles are real cycles once the stream is unrolled
    # (cross-GOP edges only ever point forward in time, so they cannot close one).
    same_gop = {f.position: [p.position for p in f.parents if p.gop_delta == 0] for f in frames}
    seen: dict[int, int] = {}  # 0 = visiting, 1 = done

    def _visit(node: int) -> None:
        seen[node] = 0
        for parent in same_gop[node]:
            state = seen.get(parent)
            if state == 0:
                raise GopError("cyclic dependency graph among frames of one GOP")
            if state is None:
                _visit(parent)
        seen[node] = 1

    for pos in positions:
        if pos not in seen:
            _visit(pos)

    spacing = period_slots // num_frames
    display = tuple(k * spacing - 1 for k in positions)

    # Membership per phase straight from the window rule.
    sets: list[tuple[FrameRef, ...]] = []
    for p in range(period_slots):
        refs: list[FrameRef] = []
        for f in frames:
            deltas = _membership_deltas(
                f.position, p, display[f.position - 1], window_lengths, period_slots
            )
            if len(deltas) > 1:
                raise GopError(
                    f"frame {f.position} appears twice in slot {p}'s window; "
                    "lifetime exceeds the period"
                )
            refs.extend(FrameRef(f.position, d) for d in deltas)
        refs.sort(key=lambda r: display[r.position - 1] + r.gop_delta * period_slots)
        sets.append(tuple(refs))

    # Lifetime / arrival from an interior instance; validate contiguity.
    lifetimes = []
    arrivals = []
    probe_gop = 2
    horizon = period_slots * (probe_gop + 2)
    for f in frames:
        d_abs = display[f.position - 1] + probe_gop * period_slots
        member = [
            s
            for s in range(horizon)
            if s <= d_abs <= s + window_lengths[s % period_slots]
        ]
        if not member:
            raise GopError(f"frame {f.position} never appears in any current set")
        if member[-1] - member[0] + 1 != len(member):
            raise GopError(f"frame {f.position}: window membership is not contiguous")
        if len(member) > period_slots:
            raise GopError(
                f"frame {f.position}: lifetime {len(member)} exceeds the period"
            )
        lifetimes.append(len(member))
        arrivals.append(member[0] - probe_gop * period_slots)

    # Persist maps and arrivals between consecutive phases.
    persist: list[dict[FrameRef, FrameRef | None]] = []
    arrival_refs: list[tuple[FrameRef, ...]] = []
    for p in range(period_slots):
        q = (p + 1) % period_slots
        wrap = 1 if q == 0 else 0
        mapping: dict[FrameRef, FrameRef | None] = {}
        persisted_targets = set()
        for ref in sets[p]:
            nxt = FrameRef(ref.position, ref.gop_delta - wrap)
            if nxt.gop_delta >= 0 and nxt in sets[q]:
                mapping[ref] = nxt
                persisted_targets.add(nxt)
            else:
                mapping[ref] = None
        persist.append(mapping)
        arrival_refs.append(tuple(r for r in sets[q] if r not in persisted_targets))
    # arrival_refs[p] currently lists arrivals INTO phase p+1; re-key by phase.
    arrivals_by_phase = tuple(
        arrival_refs[(p - 1) % period_slots] for p in range(period_slots)
    )

    child_edges: list[tuple[tuple[int, int], ...]] = [() for _ in frames]
    for f in frames:
        for par in f.parents:
            child_edges[par.position - 1] = child_edges[par.position - 1] + (
                (f.position, par.gop_delta),
            )

    return GopStructure(
        frames=frames,
        window_lengths=window_lengths,
        period_slots=period_slots,
        slot_duration=float(slot_duration),
        display_slots=display,
        lifetimes=tuple(lifetimes),
        steady_arrivals=tuple(arrivals),
        current_frame_sets=tuple(sets),
        persist_maps=tuple(persist),
        arrival_refs=arrivals_by_phase,
        child_edges=tuple(child_edges),
    )


def frame_timing(gop: GopStructure, position: int, gop_index: int = 0) -> FrameTiming:
    """Timing of one frame instance; GOP indices start at 0 (stream start).

    The decode deadline is the display deadline capped by the earliest display
    deadline among existing children (a parent is useless once any child's
    display slot has passed).  Children in GOPs before the stream start do not
    exist and so do not constrain the first GOP.
    """
    if not 1 <= position <= gop.num_frames:
        raise GopError(f"no frame position {position}")
    if gop_index < 0:
        raise GopError("gop_index must be >= 0")
    display = gop.display_slot(position, gop_index)
    decode = display
    for child_pos, child_gop in gop.children_of_instance(position, gop_index):
        decode = min(decode, gop.display_slot(child_pos, child_gop))
    arrival = gop.arrival_slot(position, gop_index)
    return FrameTiming(
        arrival_slot=arrival, decode_deadline=decode, display_deadline=display
    )


def advance_traffic(
    gop: GopStructure, state: TrafficState, outcome: DecodeOutcome
) -> TrafficState:
    """One-slot traffic transition given realized slice departures.

    Persisting frames keep their buffers minus this slot's departures; newly
    arriving frames enter with a full buffer.  A frame's dependency bit turns 1
    (and latches) once every parent still in the current set drains to zero.
    """
    phase = state.phase
    refs = gop.current_frame_sets[phase]
    if len(state.buffers) != len(refs) or len(state.deps) != len(refs):
        raise GopError("state vectors do not match the phase's current frame set")
    x = dict(zip(refs, state.buffers))
    r = dict(zip(refs, state.deps))
    totals = outcome.totals()
    for ref, tot in totals.items():
        if ref not in x:
            raise GopError(f"outcome names frame {ref} outside the current set")
        if tot > x[ref]:
            raise GopError(f"outcome would drive frame {ref} buffer negative")
        if tot > 0 and r[ref] != 1:
            raise GopError(f"outcome decodes frame {ref} whose dependencies are unmet")

    drained = {ref: (x[ref] - totals.get(ref, 0) == 0) for ref in refs}

    def deps_satisfied(parent_refs_prev: Iterable[FrameRef]) -> bool:
        # Quantified over parents still in the previous slot's set.
        return all(drained[p] for p in parent_refs_prev if p in drained)

    next_phase = (phase + 1) % gop.period_slots
    wrap = 1 if next_phase == 0 else 0
    persist = gop.persist_maps[phase]

    new_buffers: dict[FrameRef, int] = {}
    new_deps: dict[FrameRef, int] = {}
    for ref in refs:
        nxt = persist[ref]
        if nxt is None:
            continue
        new_buffers[nxt] = x[ref] - totals.get(ref, 0)
        if r[ref] == 1:
            new_deps[nxt] = 1
        else:
            parents_prev = tuple(
                FrameRef(p.position, ref.gop_delta + p.gop_delta)
                for p in gop.spec(ref.position).parents
            )
            new_deps[nxt] = 1 if deps_satisfied(parents_prev) else 0
    for ref in gop.current_frame_sets[next_phase]:
        if ref in new_buffers:
            continue
        spec = gop.spec(ref.position)
        new_buffers[ref] = spec.num_slices
        parents_prev = tuple(
            FrameRef(p.position, ref.gop_delta + p.gop_delta + wrap)
            for p in spec.parents
        )
        new_deps[ref] = 1 if deps_satisfied(parents_prev) else 0

    return TrafficState.from_maps(gop, next_phase, new_buffers, new_deps)


def enumerate_traffic_states(gop: GopStructure, slices_per_frame: int) -> int:
    """Nominal traffic-state count: per phase, one buffer level per slice.

    This is the conventional coarse count (``l`` levels per frame in the set,
    dependency bits ignored); the exact enumeration used by the joint solver
    is larger and lives with that solver.
    """
    if slices_per_frame < 1:
        raise GopError("slices_per_frame must be >= 1")
    return sum(
        slices_per_frame ** len(refs) for refs in gop.current_frame_sets
    )


def per_frame_state_counts(
    gop: GopStructure, slices_per_frame: int
) -> dict[int, int]:
    """Per-frame state-space sizes: lifetime x slice levels x dependency bit."""
    if slices_per_frame < 1:
        raise GopError("slices_per_frame must be >= 1")
    return {
        f.position: gop.lifetimes[f.position - 1] * slices_per_frame * 2
        for f in gop.frames
    }


def joint_action_space_size(num_processors: int, num_frequencies: int) -> int:
    """Joint action count: a frequency and a schedule bit per processor."""
    if num_processors < 1 or num_frequencies < 1:
        raise GopError("processor and frequency counts must be >= 1")
    return (num_frequencies**num_processors) * (2**num_processors)


def canonical_ibpb_frames(num_slices: int = 8) -> tuple[FrameSpec, ...]:
    """The four-frame closed-GOP template: I, B, P, B in display order.

    The first B references the I and P around it; the P references the I; the
    trailing B references the P and the *next* GOP's I frame.
    """
    return (
        FrameSpec(1, FrameType.I, num_slices),
        FrameSpec(2, FrameType.B, num_slices, (FrameRef(1), FrameRef(3))),
        FrameSpec(3, FrameType.P, num_slices, (FrameRef(1),)),
        FrameSpec(4, FrameType.B, num_slices, (FrameRef(3), FrameRef(1, 1))),
    )


_BASE_WINDOWS = (2, 3, 2, 3)


def canonical_ibpb_gop(
    slots_per_frame_period: int = 1,
    num_slices: int = 8,
    slot_duration: float | None = None,
) -> GopStructure:
    """The IBPB GOP at ``s`` scheduler slots per display period.

    ``s = 1`` gives the four-set schedule with windows (2, 3, 2, 3); ``s = 3``
    gives the twelve-set variant where each of the four sets repeats three
    consecutive slots.  Windows scale as ``s * W + (s - 1)`` so membership is
    preserved under the finer slot clock.  Default slot duration keeps a 30 fps
    display rate (``1 / (30 s)`` seconds per slot).
    """
    s = slots_per_frame_period
    if s < 1:
        raise GopError("slots_per_frame_period must be >= 1")
    if slot_duration is None:
        slot_duration = 1.0 / (30.0 * s)
    windows = tuple(
        itertools.chain.from_iterable([s * w + (s - 1)] * s for w in _BASE_WINDOWS)
    )
    return build_gop_schedule(
        canonical_ibpb_frames(num_slices),
        windows,
        period_slots=4 * s,
        slot_duration=slot_duration,
    )
