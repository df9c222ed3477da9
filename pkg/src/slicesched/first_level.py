"""Per-frame value iteration with the per-processor sub-value decomposition.

Instead of one value function over the joint traffic state, each frame gets its
own small MDP over (phase, own buffer, own readiness).  Frames stay coupled two
ways:

* a frame's buffer can drain to zero, which unlocks its dependent frames — the
  drain transition earns the sum of the children's full-buffer values plus the
  frame's own idle-floor annuity for the rest of its window (the stored
  empty-buffer value stays pinned at zero, but the continuation used in
  backups still prices the floor that is paid regardless, so draining never
  looks like an escape from idle power);
* all frames share the M processors, handled not by joint enumeration but by a
  chain of per-processor sub-updates: processor M's update carries the
  discounted future, and each earlier processor adds its own power/throughput
  term and an expectation over its slice departure.

The chain tables are indexed by *remaining* undecoded slices.  A table read at
(buffer x, upstream-departure count c) is exactly the read at remaining x - c,
so the per-count conditional views are shifted gathers of one table
(:meth:`FrameValueFunction.conditional_table`).

Feasibility inside the chain admits scheduling whenever remaining >= 1 —
conditioning is on realized departures, not on upstream claims, so the chained
value is a relaxation: one-step chain updates never exceed the monolithic
update that enumerates all M processors jointly (see
:func:`decomposition_gap`), and they coincide at M = 1.  Extracted policies
re-impose the hard buffer cap (at most x slices claimed per slot).

Iteration is Jacobi style: every frame's update reads only the previous
iteration's tables, so frame order within a sweep cannot change results and
sweeps could be farmed out per frame.  Frames whose dependents reference
later periods couple value tables across the periodic boundary; with the
discount strictly below one and the canonical acyclic structure the sweep
settles geometrically, and a hard iteration cap turns any non-settling
instance into an explicit error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cost_model import LagrangianParams, SystemModel
from .errors import ConvergenceError, InstanceTooLargeError, PolicyError
from .stochastic_model import decode_prob
from .workload_model import FrameRef, GopStructure

__all__ = [
    "FrameValueFunction",
    "FrameValueSet",
    "FramePolicy",
    "FramePolicySet",
    "frame_value_iteration",
    "sub_value_update_last",
    "sub_value_update_mid",
    "sub_value_update_first",
    "decomposition_gap",
    "extract_policy",
    "write_policy_file",
    "read_policy_file",
    "vi_op_count",
    "policy_op_count",
]

MONOLITHIC_ACTION_CAP = 100_000


# ---------------------------------------------------------------------------
# result containers


@dataclass
class FrameValueFunction:
    """Converged values and chain tables for one frame position.

    ``values[p, x, r]`` is the frame's value at phase ``p``; it is zero
    whenever the frame is not in phase ``p``'s current set, ``x`` is zero or
    ``r`` is zero.  ``stage_tables[j-1, p, m]`` is processor ``j``'s chain
    table at ``m`` remaining slices, and ``future_values[p, m]`` is the
    discount-ready future term (own next-phase value, plus the children bonus
    at ``m == 0``).
    """

    position: int
    num_slices: int
    values: np.ndarray
    stage_tables: np.ndarray
    future_values: np.ndarray
    member_phases: tuple[int, ...]

    def value(self, phase: int, x: int, r: int) -> float:
        return float(self.values[phase, x, r])

    def conditional_table(self, processor_j: int) -> np.ndarray:
        """Processor ``j``'s table as (count, phase, x, r) for counts < j.

        Entry [c, p, x, 1] is the chain value with c of the x slices already
        departed upstream; x = 0 and r = 0 rows are zero like the outer value.
        """
        if not 2 <= processor_j <= self.stage_tables.shape[0]:
            raise PolicyError(
                f"conditional tables exist for processors 2..M, got {processor_j}"
            )
        rem_table = self.stage_tables[processor_j - 1]
        num_phases, width = rem_table.shape
        out = np.zeros((processor_j, num_phases, width, 2))
        for count in range(processor_j):
            for x in range(1, width):
                out[count, :, x, 1] = rem_table[:, max(x - count, 0)]
        mask = np.zeros(num_phases, dtype=bool)
        mask[list(self.member_phases)] = True
        out[:, ~mask] = 0.0
        return out


@dataclass
class FrameValueSet:
    """All frames' converged value functions plus solve diagnostics."""

    gop: GopStructure
    system: SystemModel
    params: LagrangianParams
    frames: dict[int, FrameValueFunction]
    mode: str
    iterations: int
    residual: float
    update_ops: int


@dataclass
class FramePolicy:
    """Per-state (frequency index, schedule bit) for each processor."""

    position: int
    actions: dict[tuple[int, int, int], tuple[tuple[int, int], ...]]
    zbar_clamps: int

    def action(self, phase: int, x: int, r: int) -> tuple[tuple[int, int], ...]:
        return self.actions[(phase, x, r)]


@dataclass
class FramePolicySet:
    gop: GopStructure
    params: LagrangianParams
    num_processors: int
    mode: str
    frames: dict[int, FramePolicy]
    extract_ops: int

    @property
    def zbar_clamps(self) -> int:
        return sum(p.zbar_clamps for p in self.frames.values())


# ---------------------------------------------------------------------------
# shared per-instance geometry


@dataclass(frozen=True)
class _FrameGeometry:
    member_phases: tuple[int, ...]
    persists: tuple[bool, ...]  # indexed by phase; False outside membership
    bonus_children: tuple[tuple[int, ...], ...]  # phase -> child positions in next set


def _geometry(gop: GopStructure) -> dict[int, _FrameGeometry]:
    period = gop.period_slots
    next_sets = [set(gop.current_frame_sets[(p + 1) % period]) for p in range(period)]
    out: dict[int, _FrameGeometry] = {}
    member: dict[int, list[int]] = {f.position: [] for f in gop.frames}
    persists: dict[int, list[bool]] = {
        f.position: [False] * period for f in gop.frames
    }
    bonus: dict[int, list[tuple[int, ...]]] = {
        f.position: [()] * period for f in gop.frames
    }
    for p in range(period):
        wrap = 1 if p == period - 1 else 0
        for ref in gop.current_frame_sets[p]:
            member[ref.position].append(p)
            persists[ref.position][p] = gop.persist_maps[p][ref] is not None
            kids = []
            for child_pos, parent_delta in gop.child_edges[ref.position - 1]:
                cand = FrameRef(child_pos, ref.gop_delta - parent_delta - wrap)
                if cand in next_sets[p]:
                    kids.append(child_pos)
            bonus[ref.position][p] = tuple(kids)
    for f in gop.frames:
        out[f.position] = _FrameGeometry(
            member_phases=tuple(sorted(member[f.position])),
            persists=tuple(persists[f.position]),
            bonus_children=tuple(bonus[f.position]),
        )
    return out


@dataclass(frozen=True)
class _CostArrays:
    rho: np.ndarray  # (F,)
    rho_min: float
    # per frame position: immediate scheduled cost rho+sigma-lam*theta, (F,)
    sched_cost: dict[int, np.ndarray]
    theta: dict[int, np.ndarray]  # per frame position, (F,)


def _cost_arrays(
    gop: GopStructure, system: SystemModel, params: LagrangianParams
) -> _CostArrays:
    power = system.power
    rho = np.array(power.core_power)
    sched_cost: dict[int, np.ndarray] = {}
    theta: dict[int, np.ndarray] = {}
    for f in gop.frames:
        th = np.array(
            [
                decode_prob(fr, gop.slot_duration, system.mean_cycles[f.frame_type])
                for fr in power.frequencies
            ]
        )
        sigma = np.array(power.cache_power[f.frame_type])
        sched_cost[f.position] = rho + sigma - params.lam * th
        theta[f.position] = th
    return _CostArrays(
        rho=rho, rho_min=float(rho.min()), sched_cost=sched_cost, theta=theta
    )


def _drain_annuity(
    geo: _FrameGeometry, period: int, discount: float
) -> np.ndarray:
    """Discounted member-slot count from each phase to its window's end.

    ``out[p]`` is ``1 + gamma + ... + gamma^(k-1)`` where ``k`` counts the
    consecutive member slots remaining from ``p`` (inclusive).  A frame that
    never leaves the set gets the infinite-horizon value ``1 / (1 - gamma)``.
    """
    out = np.zeros(period)
    member = set(geo.member_phases)
    ends = [p for p in geo.member_phases if not geo.persists[p]]
    if not ends:
        out[list(member)] = 1.0 / (1.0 - discount)
        return out
    for end in ends:
        out[end] = 1.0
        p = (end - 1) % period
        while p in member and geo.persists[p] and out[p] == 0.0:
            out[p] = 1.0 + discount * out[(p + 1) % period]
            p = (p - 1) % period
    return out


def _future_values(
    gop: GopStructure,
    geometry: Mapping[int, _FrameGeometry],
    values: Mapping[int, np.ndarray],
    position: int,
    num_slices: int,
    system: SystemModel,
    params: LagrangianParams,
) -> np.ndarray:
    """Next-slot value of m remaining slices, per phase.

    The m = 0 column is the drain continuation: the children unlocked next
    slot plus the frame's own idle floor — all processors at the lowest
    frequency — annuitized over the rest of its window.  A fully decoded
    frame's stored value stays pinned at zero, but its continuation must
    still price that floor; otherwise draining the buffer would look like
    an escape from costs that are paid regardless, and the zero-weight
    policy would schedule just to reach the empty state.
    """
    period = gop.period_slots
    geo = geometry[position]
    floor = system.num_processors * float(min(system.power.core_power))
    annuity = _drain_annuity(geo, period, params.discount)
    phi = np.zeros((period, num_slices + 1))
    for p in geo.member_phases:
        nxt = (p + 1) % period
        if geo.persists[p]:
            phi[p, 1:] = values[position][nxt, 1 : num_slices + 1, 1]
        phi[p, 0] = sum(
            values[child][nxt, gop.spec(child).num_slices, 1]
            for child in geo.bonus_children[p]
        )
        if geo.persists[p]:
            phi[p, 0] += floor * annuity[nxt]
    return phi


# ---------------------------------------------------------------------------
# the three chain updates


def _chain_step(
    rho_min: float,
    sched_cost: np.ndarray,
    theta: np.ndarray,
    downstream: np.ndarray,
    member_phases: Sequence[int],
    discount: float | None,
) -> np.ndarray:
    """One processor's min over (frequency, schedule bit) at every remaining count.

    ``downstream[p, m]`` is what the rest of the slot is worth at m remaining
    slices.  ``discount`` is set only for the last processor, whose downstream
    is next-slot value; earlier processors pass through same-slot tables
    undiscounted.
    """
    out = np.zeros_like(downstream)
    for p in member_phases:
        down = downstream[p]
        # one-departure mix per frequency: (1-theta)*stay + theta*drop
        mix = np.empty((len(theta), down.shape[0]))
        mix[:, 0] = down[0]
        mix[:, 1:] = (1.0 - theta)[:, None] * down[None, 1:] + theta[:, None] * down[
            None, :-1
        ]
        if discount is not None:
            idle = rho_min + discount * down
            sched = sched_cost[:, None] + discount * mix
        else:
            idle = rho_min + down
            sched = sched_cost[:, None] + mix
        best_sched = sched.min(axis=0)
        out[p] = idle
        out[p, 1:] = np.minimum(idle[1:], best_sched[1:])
    return out


def sub_value_update_last(
    gop: GopStructure,
    system: SystemModel,
    params: LagrangianParams,
    values: Mapping[int, np.ndarray],
    position: int,
) -> np.ndarray:
    """Last processor's chain table from the previous iteration's values.

    Returns a (phase, remaining) table: the minimized immediate term of the
    last processor plus the discounted future of the frame and of its unlocked
    children.  Reads at (x, count) are reads at remaining = x - count.
    """
    geometry = _geometry(gop)
    costs = _cost_arrays(gop, system, params)
    phi = _future_values(
        gop, geometry, values, position, gop.spec(position).num_slices,
        system, params,
    )
    return _chain_step(
        costs.rho_min,
        costs.sched_cost[position],
        costs.theta[position],
        phi,
        geometry[position].member_phases,
        params.discount,
    )


def sub_value_update_mid(
    gop: GopStructure,
    system: SystemModel,
    params: LagrangianParams,
    position: int,
    processor_j: int,
    downstream: np.ndarray,
) -> np.ndarray:
    """A middle processor's chain table from the next processor's table.

    Adds this processor's own power/throughput term and the expectation over
    its slice departure; no discounting (same slot as downstream).  Only
    defined for processors 2..M-1, so any M = 2 instance never calls this.
    """
    if not 2 <= processor_j <= system.num_processors - 1:
        raise PolicyError(
            f"middle processors run 2..{system.num_processors - 1}, got {processor_j}"
        )
    geometry = _geometry(gop)
    costs = _cost_arrays(gop, system, params)
    return _chain_step(
        costs.rho_min,
        costs.sched_cost[position],
        costs.theta[position],
        downstream,
        geometry[position].member_phases,
        None,
    )


def sub_value_update_first(
    gop: GopStructure,
    system: SystemModel,
    params: LagrangianParams,
    position: int,
    downstream: np.ndarray | Sequence[np.ndarray] | None = None,
    values: Mapping[int, np.ndarray] | None = None,
) -> np.ndarray:
    """First processor's update, producing the next iteration's value table.

    With M >= 2 processors, pass the chain tables built so far, deepest
    (last processor's) first — a bare array is accepted when only the
    second processor's table exists, i.e. M = 2.  With a single processor
    there is no downstream table: pass the value mapping instead and the
    update carries the discounted future directly.  Output is
    (phase, x, r)-indexed with the zero states (non-member phase, x = 0,
    r = 0) pinned to zero; a state with x slices is backed up through the
    first min(x, M) processors only, the surplus processors idling at the
    lowest frequency, so no two processors can ever claim the same slice.
    """
    geometry = _geometry(gop)
    costs = _cost_arrays(gop, system, params)
    member = geometry[position].member_phases
    if downstream is None:
        if values is None:
            raise PolicyError("single-processor update needs the value mapping")
        phi = _future_values(
            gop, geometry, values, position, gop.spec(position).num_slices,
            system, params,
        )
        chains = [
            _chain_step(
                costs.rho_min,
                costs.sched_cost[position],
                costs.theta[position],
                phi,
                member,
                params.discount,
            )
        ]
    else:
        if isinstance(downstream, np.ndarray):
            chains = [downstream]
        else:
            chains = list(downstream)
        if len(chains) != system.num_processors - 1:
            raise PolicyError(
                f"expected {system.num_processors - 1} downstream chain "
                f"tables, got {len(chains)}"
            )
        chains.append(
            _chain_step(
                costs.rho_min,
                costs.sched_cost[position],
                costs.theta[position],
                chains[-1],
                member,
                None,
            )
        )
    return _assemble_values(chains, costs.rho_min, member)


def _assemble_values(
    chains: Sequence[np.ndarray],
    rho_min: float,
    member_phases: Sequence[int],
) -> np.ndarray:
    """x-indexed value table from the chain tables, zero states pinned.

    ``chains[d - 1]`` is the depth-d table: the cost-to-go of d processors
    working the frame.  A state with x slices can usefully employ at most
    min(x, M) processors — each scheduled processor claims a distinct
    slice — so its value reads the depth-min(x, M) table and charges the
    remaining processors idle power at the lowest frequency.
    """
    num_procs = len(chains)
    num_phases, width = chains[0].shape
    values = np.zeros((num_phases, width, 2))
    for p in member_phases:
        for x in range(1, width):
            depth = min(x, num_procs)
            values[p, x, 1] = (
                chains[depth - 1][p, x] + (num_procs - depth) * rho_min
            )
    return values


# ---------------------------------------------------------------------------
# monolithic (all-processor) one-step update, for gap measurement and tests


def _binomial_pmf(thetas: Sequence[float]) -> list[float]:
    """Distribution of the departure count among independently worked slices."""
    pmf = [1.0]
    for th in thetas:
        nxt = [0.0] * (len(pmf) + 1)
        for m, pr in enumerate(pmf):
            nxt[m] += pr * (1.0 - th)
            nxt[m + 1] += pr * th
        pmf = nxt
    return pmf


def _monolithic_entry(
    system: SystemModel,
    params: LagrangianParams,
    costs: _CostArrays,
    position: int,
    phi_row: np.ndarray,
    x: int,
) -> float:
    """Exact min over joint per-processor actions for one frame state.

    Processors are interchangeable, so actions are enumerated as multisets of
    (frequency, schedule) choices; feasibility caps scheduled slices at x.
    """
    num_f = len(costs.rho)
    options = [(f, 0) for f in range(num_f)] + [(f, 1) for f in range(num_f)]
    count = math.comb(len(options) + system.num_processors - 1, system.num_processors)
    if count > MONOLITHIC_ACTION_CAP:
        raise InstanceTooLargeError(
            f"monolithic update enumerates {count} joint actions per state, "
            f"cap is {MONOLITHIC_ACTION_CAP}"
        )
    best = None
    sched_cost = costs.sched_cost[position]
    theta = costs.theta[position]
    for combo in itertools.combinations_with_replacement(
        options, system.num_processors
    ):
        scheduled = [f for f, y in combo if y == 1]
        if len(scheduled) > x:
            continue
        cost = 0.0
        for f, y in combo:
            cost += sched_cost[f] if y else costs.rho[f]
        pmf = _binomial_pmf([theta[f] for f in scheduled])
        future = 0.0
        for m, pr in enumerate(pmf):
            future += pr * phi_row[x - m]
        q = cost + params.discount * future
        if best is None or q < best:
            best = q
    assert best is not None
    return best


def decomposition_gap(
    gop: GopStructure,
    system: SystemModel,
    params: LagrangianParams,
    values: Mapping[int, np.ndarray],
    position: int,
    phase: int,
    x: int,
    r: int = 1,
) -> tuple[float, float]:
    """(monolithic, decomposed) one-step update values from the same tables.

    Both numbers back up the same previous-iteration values for one frame
    state; the decomposed chain is a relaxation, so it can only be lower.
    Asserts decomposed <= monolithic + 1e-12 and returns both.
    """
    geometry = _geometry(gop)
    if (
        x == 0
        or r == 0
        or phase not in geometry[position].member_phases
    ):
        return 0.0, 0.0
    costs = _cost_arrays(gop, system, params)
    phi = _future_values(
        gop, geometry, values, position, gop.spec(position).num_slices,
        system, params,
    )
    mono = _monolithic_entry(system, params, costs, position, phi[phase], x)

    depth = min(x, system.num_processors)
    chain = _chain_step(
        costs.rho_min,
        costs.sched_cost[position],
        costs.theta[position],
        phi,
        (phase,),
        params.discount,
    )
    for _ in range(depth - 1):
        chain = _chain_step(
            costs.rho_min,
            costs.sched_cost[position],
            costs.theta[position],
            chain,
            (phase,),
            None,
        )
    decomposed = float(
        chain[phase, x] + (system.num_processors - depth) * costs.rho_min
    )
    assert decomposed <= mono + 1e-12, (
        f"decomposed update {decomposed} exceeds monolithic {mono}"
    )
    return mono, decomposed


# ---------------------------------------------------------------------------
# the coupled iteration


def frame_value_iteration(
    gop: GopStructure,
    system: SystemModel,
    params: LagrangianParams,
    tolerance: float = 1e-6,
    max_iterations: int = 500,
    update_mode: str = "decomposed",
) -> FrameValueSet:
    """Iterate all frames' coupled value functions to a fixed point.

    Each sweep recomputes every frame's table from the previous sweep's
    tables (which also feed the children-bonus coupling), until the largest
    per-state change drops below ``tolerance``.  ``update_mode`` picks the
    per-processor chain ("decomposed") or the exact joint-action enumeration
    per frame ("monolithic", feasible only for small M x frequency grids).
    """
    if update_mode not in ("decomposed", "monolithic"):
        raise PolicyError(f"unknown update mode {update_mode!r}")
    geometry = _geometry(gop)
    costs = _cost_arrays(gop, system, params)
    period = gop.period_slots
    num_procs = system.num_processors
    num_f = len(costs.rho)

    values: dict[int, np.ndarray] = {
        f.position: np.zeros((period, f.num_slices + 1, 2)) for f in gop.frames
    }
    order = _reverse_topological(gop)
    ops = 0
    for iteration in range(1, max_iterations + 1):
        new_values: dict[int, np.ndarray] = {}
        residual = 0.0
        for position in order:
            num_slices = gop.spec(position).num_slices
            geo = geometry[position]
            phi = _future_values(
                gop, geometry, values, position, num_slices, system, params
            )
            if update_mode == "decomposed":
                chain = _chain_step(
                    costs.rho_min,
                    costs.sched_cost[position],
                    costs.theta[position],
                    phi,
                    geo.member_phases,
                    params.discount,
                )
                chains = [chain]
                ops += len(geo.member_phases) * (num_slices + 1) * num_f * 2
                for _ in range(num_procs - 1):
                    chain = _chain_step(
                        costs.rho_min,
                        costs.sched_cost[position],
                        costs.theta[position],
                        chain,
                        geo.member_phases,
                        None,
                    )
                    chains.append(chain)
                    ops += len(geo.member_phases) * (num_slices + 1) * num_f * 2
                table = _assemble_values(chains, costs.rho_min, geo.member_phases)
            else:
                table = np.zeros((period, num_slices + 1, 2))
                for p in geo.member_phases:
                    for x in range(1, num_slices + 1):
                        table[p, x, 1] = _monolithic_entry(
                            system, params, costs, position, phi[p], x
                        )
                        ops += math.comb(2 * num_f + num_procs - 1, num_procs)
            residual = max(
                residual, float(np.max(np.abs(table - values[position])))
            )
            new_values[position] = table
        values = new_values
        if residual < tolerance:
            break
    else:
        raise ConvergenceError(
            f"frame value iteration at residual {residual:.3e} "
            f"after {max_iterations} sweeps"
        )

    frames: dict[int, FrameValueFunction] = {}
    for f in gop.frames:
        position = f.position
        geo = geometry[position]
        phi = _future_values(
            gop, geometry, values, position, f.num_slices, system, params
        )
        stage_tables = np.zeros((num_procs, period, f.num_slices + 1))
        chain = _chain_step(
            costs.rho_min,
            costs.sched_cost[position],
            costs.theta[position],
            phi,
            geo.member_phases,
            params.discount,
        )
        stage_tables[num_procs - 1] = chain
        for j in range(num_procs - 1, 0, -1):
            chain = _chain_step(
                costs.rho_min,
                costs.sched_cost[position],
                costs.theta[position],
                chain,
                geo.member_phases,
                None,
            )
            stage_tables[j - 1] = chain
        frames[position] = FrameValueFunction(
            position=position,
            num_slices=f.num_slices,
            values=values[position],
            stage_tables=stage_tables,
            future_values=phi,
            member_phases=geo.member_phases,
        )
    return FrameValueSet(
        gop=gop,
        system=system,
        params=params,
        frames=frames,
        mode=update_mode,
        iterations=iteration,
        residual=residual,
        update_ops=ops,
    )


def _reverse_topological(gop: GopStructure) -> list[int]:
    """Frame positions with same-period children ahead of their parents."""
    children: dict[int, list[int]] = {f.position: [] for f in gop.frames}
    for f in gop.frames:
        for parent in f.parents:
            if parent.gop_delta == 0:
                children[parent.position].append(f.position)
    seen: set[int] = set()
    order: list[int] = []

    def visit(pos: int) -> None:
        if pos in seen:
            return
        seen.add(pos)
        for child in children[pos]:
            visit(child)
        order.append(pos)

    for f in gop.frames:
        visit(f.position)
    return order


# ---------------------------------------------------------------------------
# policy extraction


def extract_policy(values: FrameValueSet) -> FramePolicySet:
    """Per-frame policies from converged chain tables.

    A state with x slices engages the first min(x, M) processors — each
    scheduled processor claims a distinct slice, so the surplus processors
    idle at the lowest frequency.  Processor 1 takes its chain argmin at the
    full buffer.  Each later engaged processor conditions on the floor of
    the expected departures from the processors already decided (clamped to
    the buffer, clamps counted), and is additionally forced idle once the
    cumulative claimed slices reach the buffer, so extracted actions always
    satisfy the buffer constraint.  Tie-breaks are lowest frequency first,
    then idle over scheduled.
    """
    gop, system, params = values.gop, values.system, values.params
    costs = _cost_arrays(gop, system, params)
    num_procs = system.num_processors
    num_f = len(costs.rho)
    idle_action = tuple((0, 0) for _ in range(num_procs))
    ops = 0

    frames: dict[int, FramePolicy] = {}
    for position, vf in values.frames.items():
        theta = costs.theta[position]
        sched_cost = costs.sched_cost[position]
        actions: dict[tuple[int, int, int], tuple[tuple[int, int], ...]] = {}
        clamps = 0
        for p in vf.member_phases:
            phi_row = vf.future_values[p]
            for x in range(vf.num_slices + 1):
                actions[(p, x, 0)] = idle_action
                if x == 0:
                    actions[(p, 0, 1)] = idle_action
                    continue
                engaged = min(x, num_procs)
                chosen: list[tuple[int, int]] = []
                expected = 0.0
                claimed = 0
                for j in range(1, num_procs + 1):
                    if j > engaged:
                        chosen.append((0, 0))
                        continue
                    if j == 1:
                        rem = x
                    else:
                        zbar = math.floor(expected)
                        if zbar > x:
                            clamps += 1
                            zbar = x
                        rem = x - zbar
                    if j < engaged:
                        # downstream of processor j among the engaged chain:
                        # the depth-(engaged - j) table
                        down = values.frames[position].stage_tables[
                            num_procs - (engaged - j)
                        ]
                        stay, drop = down[p, rem], down[p, max(rem - 1, 0)]
                        disc = 1.0
                    else:
                        stay, drop = phi_row[rem], phi_row[max(rem - 1, 0)]
                        disc = params.discount
                    best_q, best = None, (0, 0)
                    can_schedule = rem >= 1 and claimed < x
                    for f in range(num_f):
                        for y in (0, 1) if can_schedule else (0,):
                            if y:
                                q = sched_cost[f] + disc * (
                                    (1.0 - theta[f]) * stay + theta[f] * drop
                                )
                            else:
                                q = costs.rho[f] + disc * stay
                            ops += 1
                            if best_q is None or q < best_q - 1e-15:
                                best_q, best = q, (f, y)
                    chosen.append(best)
                    if best[1]:
                        expected += theta[best[0]]
                        claimed += 1
                actions[(p, x, 1)] = tuple(chosen)
        frames[position] = FramePolicy(
            position=position, actions=actions, zbar_clamps=clamps
        )
    return FramePolicySet(
        gop=gop,
        params=params,
        num_processors=num_procs,
        mode=values.mode,
        frames=frames,
        extract_ops=ops,
    )


# ---------------------------------------------------------------------------
# complexity counters


def vi_op_count(
    iterations: int,
    num_frames: int,
    num_phases: int,
    max_slices: int,
    num_frequencies: int,
    num_processors: int,
    max_parents: int,
) -> int:
    """Operation-count model of the coupled value iteration.

    ``max_parents`` is the dependency fan-in: the largest number of reference
    frames any single frame consults per backup (2 for the stock IBPB GOP,
    where each B frame checks both of its anchors).
    """
    return (
        4
        * iterations
        * num_frames
        * num_phases
        * (max_slices + 1)
        * num_frequencies
        * (2 * num_processors**2 + max_parents)
    )


def policy_op_count(
    num_frames: int,
    num_phases: int,
    max_slices: int,
    num_processors: int,
    num_frequencies: int,
    max_parents: int,
) -> int:
    """Operation-count model of policy extraction.

    ``max_parents`` has the same fan-in meaning as in :func:`vi_op_count`.
    """
    return (
        2
        * num_frames
        * num_phases
        * (max_slices + 1)
        * (
            4 * num_processors * num_frequencies
            + 2 * (num_processors - 1)
            + 2 * num_frequencies * max_parents
        )
    )


# ---------------------------------------------------------------------------
# policy file round-trip


POLICY_MAGIC = "# slicesched-policy v1"


def write_policy_file(path, policies: FramePolicySet) -> None:
    """Write policies as a line-oriented table with audit headers."""
    lines = [
        POLICY_MAGIC,
        f"# lambda {policies.params.lam!r}",
        f"# rate_target {policies.params.rate_target!r}",
        f"# discount {policies.params.discount!r}",
        f"# processors {policies.num_processors}",
        f"# mode {policies.mode}",
        f"# zbar_clamps {policies.zbar_clamps}",
    ]
    header = ["frame", "phase", "x", "r"]
    for j in range(1, policies.num_processors + 1):
        header += [f"f{j}", f"y{j}"]
    lines.append(",".join(header))
    for position in sorted(policies.frames):
        policy = policies.frames[position]
        for (p, x, r) in sorted(policy.actions):
            row = [position, p, x, r]
            for f, y in policy.actions[(p, x, r)]:
                row += [f, y]
            lines.append(",".join(map(str, row)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_policy_file(path) -> tuple[dict[int, dict[tuple[int, int, int], tuple[tuple[int, int], ...]]], dict[str, str]]:
    """Read a policy table back as plain mappings plus its header metadata."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != POLICY_MAGIC:
        raise PolicyError(f"{path} is not a policy table file")
    metadata: dict[str, str] = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line.startswith("# "):
            key, _, value = line[2:].partition(" ")
            metadata[key] = value
        else:
            body_start = i
            break
    if body_start is None or not lines[body_start].startswith("frame,"):
        raise PolicyError(f"{path} has no policy table header row")
    try:
        num_procs = int(metadata["processors"])
    except (KeyError, ValueError) as exc:
        raise PolicyError(f"{path} lacks a valid processors header") from exc
    policies: dict[int, dict[tuple[int, int, int], tuple[tuple[int, int], ...]]] = {}
    for line in lines[body_start + 1 :]:
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4 + 2 * num_procs:
            raise PolicyError(f"malformed policy row: {line!r}")
        vals = list(map(int, parts))
        position, phase, x, r = vals[:4]
        pairs = tuple(
            (vals[4 + 2 * j], vals[5 + 2 * j]) for j in range(num_procs)
        )
        policies.setdefault(position, {})[(phase, x, r)] = pairs
    return policies, metadata
