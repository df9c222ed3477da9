"""Slice decode-complexity models and per-slot completion probabilities.

Slice workloads are drawn per frame type: exponential with a configured mean,
a truncated-exponential variant (rejection-sampled into a bounded support, by
default ``[0.25 * mean, 4 * mean]``), or an empirical sample pool loaded from a
measured trace.  Under the exponential model the probability that a scheduled
slice finishes within one slot at clock ``f`` is

    completion = 1 - exp(-f * dt / mean_cycles),

independent of any work already spent on the slice (memorylessness).  For
empirical data the same quantity is a conditional probability through the
sample CDF; :func:`conditional_decode_prob` computes it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp
from typing import Mapping

import numpy as np

from .errors import ModelError
from .workload_model import FrameType

__all__ = [
    "TRUNCATION_FACTORS",
    "ComplexityModel",
    "EmpiricalDistribution",
    "decode_prob",
    "departure_pmf",
    "conditional_decode_prob",
    "sample_complexity",
]

# Default truncation support relative to the mean, lower and upper factor.
TRUNCATION_FACTORS = (0.25, 4.0)

_KINDS = ("exponential", "truncated", "empirical")


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted sample pool with a right-continuous step CDF."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ModelError("empirical distribution needs a non-empty 1-d sample set")
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise ModelError("empirical samples must be positive and finite")
        object.__setattr__(self, "samples", np.sort(arr))

    @property
    def w_min(self) -> float:
        return float(self.samples[0])

    @property
    def w_max(self) -> float:
        return float(self.samples[-1])

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    def cdf(self, w: float) -> float:
        """P(W <= w), right-continuous in ``w``."""
        return float(np.searchsorted(self.samples, w, side="right")) / self.samples.size


@dataclass(frozen=True)
class ComplexityModel:
    """Per-frame-type slice complexity distributions.

    ``mean_cycles`` parameterizes the exponential / truncated kinds; the
    empirical kind additionally carries one sample pool per frame type.
    """

    kind: str
    mean_cycles: Mapping[FrameType, float]
    truncation: tuple[float, float] = TRUNCATION_FACTORS
    pools: Mapping[FrameType, EmpiricalDistribution] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ModelError(f"unknown complexity kind {self.kind!r}; want one of {_KINDS}")
        for t, beta in self.mean_cycles.items():
            if beta <= 0:
                raise ModelError(f"mean cycles for {t} must be positive")
        lo, hi = self.truncation
        if not 0 < lo < hi:
            raise ModelError("truncation factors must satisfy 0 < low < high")
        if self.kind == "empirical":
            missing = set(self.mean_cycles) - set(self.pools)
            if missing:
                raise ModelError(f"empirical model lacks sample pools for {missing}")

    def mean(self, frame_type: FrameType) -> float:
        try:
            return float(self.mean_cycles[frame_type])
        except KeyError:
            raise ModelError(f"no mean cycles configured for frame type {frame_type}")

    def bounds(self, frame_type: FrameType) -> tuple[float, float]:
        beta = self.mean(frame_type)
        return (self.truncation[0] * beta, self.truncation[1] * beta)


def decode_prob(frequency: float, slot_duration: float, mean_cycles: float) -> float:
    """Probability a scheduled slice departs within one slot (exponential model)."""
    if frequency <= 0 or slot_duration <= 0 or mean_cycles <= 0:
        raise ModelError("frequency, slot duration and mean cycles must be positive")
    return 1.0 - exp(-frequency * slot_duration / mean_cycles)


def departure_pmf(
    frequency: float,
    slot_duration: float,
    scheduled: int,
    mean_cycles: float,
) -> dict[int, float]:
    """Distribution of the per-processor departure indicator for one slot."""
    if scheduled not in (0, 1):
        raise ModelError("scheduled flag must be 0 or 1")
    if not scheduled:
        return {0: 1.0}
    theta = decode_prob(frequency, slot_duration, mean_cycles)
    return {1: theta, 0: 1.0 - theta}


def conditional_decode_prob(
    dist: EmpiricalDistribution,
    cycles_done: float,
    frequency: float,
    slot_duration: float,
) -> float:
    """Chance an in-progress slice finishes this slot, given work already done.

    Uses the sample CDF ``H``: with ``w0`` cycles spent and ``w1 = w0 + f*dt``,
    the conditional completion probability is ``(H(w1) - H(w0)) / (1 - H(w0))``.
    """
    if cycles_done < 0:
        raise ModelError("cycles_done must be nonnegative")
    if frequency <= 0 or slot_duration <= 0:
        raise ModelError("frequency and slot duration must be positive")
    h0 = dist.cdf(cycles_done)
    if h0 >= 1.0:
        raise ModelError(
            "slice is already certain to be finished (CDF saturated at cycles_done)"
        )
    w1 = cycles_done + frequency * slot_duration
    if w1 >= dist.w_max:
        return 1.0
    if w1 < dist.w_min:
        return 0.0
    return (dist.cdf(w1) - h0) / (1.0 - h0)


def sample_complexity(
    model: ComplexityModel,
    frame_type: FrameType,
    rng: np.random.Generator,
    max_rejects: int = 10_000,
) -> float:
    """Draw one slice complexity in cycles from the configured distribution."""
    beta = model.mean(frame_type)
    if model.kind == "exponential":
        return float(rng.exponential(beta))
    if model.kind == "truncated":
        lo, hi = model.bounds(frame_type)
        for _ in range(max_rejects):
            w = rng.exponential(beta)
            if lo <= w <= hi:
                return float(w)
        # Pathological truncation windows: fall back to clipping.
        return float(min(max(rng.exponential(beta), lo), hi))
    pool = model.pools[frame_type]
    idx = int(rng.integers(0, pool.samples.size))
    return float(pool.samples[idx])
