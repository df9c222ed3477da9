"""Fixtures shared across solver test modules.

Frozen constants, derived by hand from the shipped defaults:

* ``FMIN_RHO``: base power at the slowest grid point,
  3.125e-10 * 125e6 * 1.07**2 + 0.02 = 0.06472265625 W.
* ``tiny_system`` complexities are sized so one slot at the top frequency
  completes a slice with probability ~0.75 (I) / ~0.88 (P): uncertain enough
  that deadline pressure shapes the optimal policy.
* ``heavy_system`` complexities are sized so that at every grid frequency the
  cache-power charge for scheduling exceeds the discounted saving from
  draining a frame early (sigma(f) >= gamma * theta(f) * tail value).  In
  that regime the lam = 0 per-frame optimum is to idle at the lowest
  frequency for the frame's whole remaining lifetime, which has a closed
  form used as a test oracle.
"""

from __future__ import annotations

from slicesched.cost_model import (
    LagrangianParams,
    SystemModel,
    default_power_model,
)
from slicesched.workload_model import (
    FrameRef,
    FrameSpec,
    FrameType,
    build_gop_schedule,
)

FMIN_RHO = 0.06472265625
GAMMA = 0.9


def tiny_gop():
    """Two-frame I->P chain, one slice per frame, two-slot period.

    Window length 1 everywhere, so each slot's current set holds two frames:
    phase 0 sees (I, P) of the same period, phase 1 sees the P plus the next
    period's I.
    """
    frames = (
        FrameSpec(position=1, frame_type=FrameType.I, num_slices=1, parents=()),
        FrameSpec(
            position=2,
            frame_type=FrameType.P,
            num_slices=1,
            parents=(FrameRef(1, 0),),
        ),
    )
    return build_gop_schedule(
        frames, window_lengths=(1, 1), period_slots=2, slot_duration=1.0 / 30.0
    )


def tiny_system(num_processors: int = 1) -> SystemModel:
    return SystemModel(
        power=default_power_model((125.0, 500.0)),
        mean_cycles={FrameType.I: 12.0e6, FrameType.P: 8.0e6},
        num_processors=num_processors,
    )


def heavy_system(num_processors: int = 2) -> SystemModel:
    return SystemModel(
        power=default_power_model(),
        mean_cycles={
            FrameType.I: 150.0e6,
            FrameType.P: 120.0e6,
            FrameType.B: 90.0e6,
        },
        num_processors=num_processors,
    )


def lagrangian(lam: float, discount: float = GAMMA) -> LagrangianParams:
    return LagrangianParams(lam=lam, rate_target=0.0, discount=discount)
