"""Exact dynamic programming over the full joint traffic state.

This module solves the undecomposed control problem: one state couples every
frame in the current set (phase, all buffers, all dependency bits), and one
action picks a frequency and an optional target frame for every processor
simultaneously.  The state and action spaces grow multiplicatively, so this is
only feasible at toy scale — a hard state cap rejects anything larger.  Its
purpose is to be the trusted reference that the decomposed per-frame solver is
measured against.

Value sweeps are Jacobi style (iteration n+1 reads only iteration n), so they
could be parallelized over states without changing results; at the scales this
module accepts, a single pass is instantaneous and we keep it sequential.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .cost_model import (
    LagrangianParams,
    SystemModel,
    lagrangian_stage_cost,
)
from .errors import ConvergenceError, InstanceTooLargeError
from .stochastic_model import decode_prob
from .workload_model import (
    DecodeOutcome,
    FrameRef,
    GopStructure,
    TrafficState,
    advance_traffic,
)

__all__ = [
    "DEFAULT_STATE_CAP",
    "JointAction",
    "JointValueFunction",
    "enumerate_joint_states",
    "joint_value_iteration",
    "joint_greedy_policy",
    "finite_horizon_oracle",
    "write_values_csv",
]

DEFAULT_STATE_CAP = 100_000


@dataclass(frozen=True)
class JointAction:
    """One slot's full control: a frequency index and an optional target per processor.

    ``frequencies[j]`` indexes into the power model's frequency grid;
    ``targets[j]`` names the frame whose slice processor ``j`` works on, or
    ``None`` for idle.  Encoding one target per processor builds the
    one-slice-per-processor constraint into the type.
    """

    frequencies: tuple[int, ...]
    targets: tuple[FrameRef | None, ...]


@dataclass
class JointValueFunction:
    """Converged joint values plus everything needed to act greedily on them."""

    gop: GopStructure
    system: SystemModel
    params: LagrangianParams
    states: tuple[TrafficState, ...]
    values: np.ndarray
    iterations: int
    residual: float
    residual_history: tuple[float, ...]

    def __post_init__(self) -> None:
        self._index = {s: i for i, s in enumerate(self.states)}

    def value(self, state: TrafficState) -> float:
        return float(self.values[self._index[state]])

    def index_of(self, state: TrafficState) -> int:
        return self._index[state]


def enumerate_joint_states(
    gop: GopStructure,
    state_cap: int = DEFAULT_STATE_CAP,
) -> tuple[TrafficState, ...]:
    """All joint traffic states, phase by phase, in deterministic order.

    Buffer ranges come from each frame's own slice count (what an arrival
    refills the buffer to), so the space is closed under the traffic kernel.
    Dependency bits of frames without parents are pinned to 1 (always ready),
    halving the space per such frame.  Raises
    :class:`InstanceTooLargeError` when the count exceeds ``state_cap``.
    """
    caps = {f.position: f.num_slices for f in gop.frames}

    total = 0
    for refs in gop.current_frame_sets:
        count = 1
        for ref in refs:
            free_dep = 2 if gop.spec(ref.position).parents else 1
            count *= (caps[ref.position] + 1) * free_dep
        total += count
    if total > state_cap:
        raise InstanceTooLargeError(
            f"joint state space has {total} states, cap is {state_cap}"
        )

    states: list[TrafficState] = []
    for phase, refs in enumerate(gop.current_frame_sets):
        buffer_ranges = [range(caps[r.position] + 1) for r in refs]
        dep_ranges = [
            (0, 1) if gop.spec(r.position).parents else (1,) for r in refs
        ]
        for buffers in itertools.product(*buffer_ranges):
            for deps in itertools.product(*dep_ranges):
                states.append(TrafficState(phase, buffers, deps))
    return tuple(states)


def _processor_options(
    gop: GopStructure, system: SystemModel, state: TrafficState
) -> list[tuple[int, FrameRef | None]]:
    """Per-processor choices in canonical order: frequency-major, idle first."""
    refs = gop.current_frame_sets[state.phase]
    schedulable = [
        ref
        for ref, x, r in zip(refs, state.buffers, state.deps)
        if x >= 1 and r == 1
    ]
    options: list[tuple[int, FrameRef | None]] = []
    for f_idx in range(len(system.power.frequencies)):
        options.append((f_idx, None))
        options.extend((f_idx, ref) for ref in schedulable)
    return options


def _joint_actions(
    gop: GopStructure, system: SystemModel, state: TrafficState
) -> Iterator[JointAction]:
    """All constraint-satisfying joint actions, in lexicographic option order."""
    options = _processor_options(gop, system, state)
    buffers = state.buffer_map(gop)
    deps = state.dep_map(gop)
    for combo in itertools.product(options, repeat=system.num_processors):
        targets = tuple(t for _, t in combo)
        counts: dict[FrameRef, int] = {}
        for t in targets:
            if t is not None:
                counts[t] = counts.get(t, 0) + 1
        if any(n > buffers[ref] for ref, n in counts.items()):
            continue
        # The three scheduling constraints, re-checked on every action the
        # kernel will ever evaluate: buffer, dependency, one slice/processor.
        assert all(n <= buffers[ref] for ref, n in counts.items())
        assert all(deps[ref] == 1 for ref in counts)
        assert len(targets) == system.num_processors
        yield JointAction(tuple(f for f, _ in combo), targets)


def _action_cost(
    gop: GopStructure,
    system: SystemModel,
    params: LagrangianParams,
    action: JointAction,
) -> float:
    assignment = [
        (f_idx, None if ref is None else gop.spec(ref.position).frame_type)
        for f_idx, ref in zip(action.frequencies, action.targets)
    ]
    return lagrangian_stage_cost(
        system.power, params, gop.slot_duration, assignment, system.mean_cycles
    )


def _outcome_distribution(
    gop: GopStructure, system: SystemModel, state: TrafficState, action: JointAction
) -> list[tuple[float, TrafficState]]:
    """Product-Bernoulli slice departures pushed through the traffic kernel."""
    busy = [
        (j, ref) for j, ref in enumerate(action.targets) if ref is not None
    ]
    thetas = [
        decode_prob(
            system.power.frequencies[action.frequencies[j]],
            gop.slot_duration,
            system.mean_cycles[gop.spec(ref.position).frame_type],
        )
        for j, ref in busy
    ]
    num_procs = system.num_processors
    accum: dict[TrafficState, float] = {}
    for bits in itertools.product((0, 1), repeat=len(busy)):
        prob = 1.0
        completed: list[FrameRef | None] = [None] * num_procs
        for (j, ref), theta, bit in zip(busy, thetas, bits):
            if bit:
                prob *= theta
                completed[j] = ref
            else:
                prob *= 1.0 - theta
        nxt = advance_traffic(gop, state, DecodeOutcome(tuple(completed)))
        accum[nxt] = accum.get(nxt, 0.0) + prob
    return [(prob, nxt) for nxt, prob in accum.items()]


def joint_value_iteration(
    gop: GopStructure,
    system: SystemModel,
    params: LagrangianParams,
    tolerance: float = 1e-10,
    max_iterations: int = 5000,
    state_cap: int = DEFAULT_STATE_CAP,
) -> JointValueFunction:
    """Value-iterate the joint problem to a sup-norm residual below ``tolerance``.

    The transition kernel is built once (costs, successor indices and
    probabilities per action), then swept Jacobi style until the residual
    contracts below tolerance.  Each sweep's residual is recorded so callers
    can check the discount-factor contraction rate.
    """
    states = enumerate_joint_states(gop, state_cap)
    index = {s: i for i, s in enumerate(states)}

    kernel: list[list[tuple[float, np.ndarray, np.ndarray]]] = []
    for state in states:
        entries = []
        for action in _joint_actions(gop, system, state):
            cost = _action_cost(gop, system, params, action)
            dist = _outcome_distribution(gop, system, state, action)
            probs = np.array([p for p, _ in dist])
            succ = np.array([index[s] for _, s in dist], dtype=np.intp)
            entries.append((cost, probs, succ))
        kernel.append(entries)

    gamma = params.discount
    values = np.zeros(len(states))
    history: list[float] = []
    for iteration in range(1, max_iterations + 1):
        new = np.empty_like(values)
        for i, entries in enumerate(kernel):
            new[i] = min(
                cost + gamma * float(probs @ values[succ])
                for cost, probs, succ in entries
            )
        residual = float(np.max(np.abs(new - values)))
        history.append(residual)
        values = new
        if residual < tolerance:
            return JointValueFunction(
                gop=gop,
                system=system,
                params=params,
                states=states,
                values=values,
                iterations=iteration,
                residual=residual,
                residual_history=tuple(history),
            )
    raise ConvergenceError(
        f"joint value iteration still at residual {history[-1]:.3e} "
        f"after {max_iterations} sweeps"
    )


def joint_greedy_policy(
    values: JointValueFunction, state: TrafficState
) -> JointAction:
    """Greedy (one-step lookahead) action for a state under converged values.

    Ties break deterministically toward the lexicographically smallest action
    in (frequency index, frame) option order with idle sorting first, i.e. the
    first minimizer encountered.
    """
    best = None
    best_q = None
    gop, system, params = values.gop, values.system, values.params
    for action in _joint_actions(gop, system, state):
        q = _action_cost(gop, system, params, action)
        for prob, nxt in _outcome_distribution(gop, system, state, action):
            q += params.discount * prob * values.value(nxt)
        if best_q is None or q < best_q - 1e-15:
            best, best_q = action, q
    assert best is not None  # idle-everywhere is always admissible
    return best


def finite_horizon_oracle(
    gop: GopStructure,
    system: SystemModel,
    params: LagrangianParams,
    horizon: int,
    state_cap: int = DEFAULT_STATE_CAP,
) -> dict[TrafficState, float]:
    """Exact H-step discounted cost-to-go by plain backward induction.

    Deliberately naive cross-check for :func:`joint_value_iteration`: no
    precomputed kernel, no vectorization — every level re-derives actions,
    outcome probabilities and expectations from scratch with nested loops.
    """
    states = enumerate_joint_states(gop, state_cap)
    freqs = system.power.frequencies
    level: dict[TrafficState, float] = {s: 0.0 for s in states}
    for _ in range(horizon):
        nxt_level: dict[TrafficState, float] = {}
        for state in states:
            refs = gop.current_frame_sets[state.phase]
            ready = [
                ref
                for ref, x, r in zip(refs, state.buffers, state.deps)
                if x >= 1 and r == 1
            ]
            per_proc = [(f, t) for f in range(len(freqs)) for t in [None, *ready]]
            best = None
            for combo in itertools.product(per_proc, repeat=system.num_processors):
                chosen = [t for _, t in combo if t is not None]
                if any(
                    chosen.count(ref) > state.buffers[refs.index(ref)]
                    for ref in set(chosen)
                ):
                    continue
                cost = lagrangian_stage_cost(
                    system.power,
                    params,
                    gop.slot_duration,
                    [
                        (f, None if t is None else gop.spec(t.position).frame_type)
                        for f, t in combo
                    ],
                    system.mean_cycles,
                )
                expect = 0.0
                working = [(j, f, t) for j, (f, t) in enumerate(combo) if t is not None]
                for bits in itertools.product((0, 1), repeat=len(working)):
                    prob = 1.0
                    done: list[FrameRef | None] = [None] * system.num_processors
                    for (j, f, t), bit in zip(working, bits):
                        theta = decode_prob(
                            freqs[f],
                            gop.slot_duration,
                            system.mean_cycles[gop.spec(t.position).frame_type],
                        )
                        prob *= theta if bit else 1.0 - theta
                        if bit:
                            done[j] = t
                    succ = advance_traffic(gop, state, DecodeOutcome(tuple(done)))
                    expect += prob * level[succ]
                total = cost + params.discount * expect
                if best is None or total < best:
                    best = total
            nxt_level[state] = best if best is not None else 0.0
        level = nxt_level
    return level


def write_values_csv(values: JointValueFunction, path) -> None:
    """Dump converged values to CSV for inspection (one row per state)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "buffers", "deps", "value"])
        for state, value in zip(values.states, values.values):
            writer.writerow(
                [
                    state.phase,
                    ";".join(map(str, state.buffers)),
                    ";".join(map(str, state.deps)),
                    f"{value:.12g}",
                ]
            )
