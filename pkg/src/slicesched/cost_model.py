"""Per-processor power model and the Lagrangian slot cost.

Each processor burns a frequency-dependent base power whether or not it is
decoding (``core_power``, strictly increasing and strictly convex over the
sorted frequency list), plus a frame-type-dependent adder while actively
decoding (``cache_power``, memory/cache activity).  The scheduler trades that
power against decode progress through a scalarized slot cost:

    cost = sum_j power_j - lam * (sum_j expected_departures_j - rate_target)

with ``lam >= 0`` weighting throughput against energy.  Convexity of the base
power is what makes low-frequency operation worthwhile; it is validated with a
strict successive-difference test over the configured frequency grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ModelError
from .workload_model import FrameType
from .stochastic_model import decode_prob

__all__ = [
    "PowerModel",
    "LagrangianParams",
    "processor_power",
    "expected_slice_rate",
    "lagrangian_stage_cost",
    "validate_power_model",
    "default_power_model",
    "SystemModel",
    "DEFAULT_FREQUENCIES_MHZ",
]

DEFAULT_FREQUENCIES_MHZ = (125.0, 166.0, 250.0, 500.0)

# Defaults chosen so the fastest grid point draws 0.42 W base and 0.11 W extra
# while decoding an I frame: dynamic power k*f*V^2 with 20 mW leakage, 1.07 V
# below the top frequency step and 1.6 V at it.
_LEAKAGE_W = 0.02
_KAPPA = (0.42 - _LEAKAGE_W) / (500e6 * 1.6**2)
_VOLT_STEP_HZ = 500e6
_CACHE_SCALE = {FrameType.I: 0.11, FrameType.P: 0.09, FrameType.B: 0.07}


@dataclass(frozen=True)
class PowerModel:
    """Power tables over a sorted frequency grid (Hz)."""

    frequencies: tuple[float, ...]
    core_power: tuple[float, ...]
    cache_power: Mapping[FrameType, tuple[float, ...]]

    def __post_init__(self) -> None:
        violations = validate_power_model(self)
        if violations:
            raise ModelError("invalid power model: " + "; ".join(violations))

    @property
    def num_frequencies(self) -> int:
        return len(self.frequencies)

    @property
    def min_frequency(self) -> float:
        return self.frequencies[0]

    @property
    def max_frequency(self) -> float:
        return self.frequencies[-1]

    def index_of(self, frequency: float) -> int:
        try:
            return self.frequencies.index(frequency)
        except ValueError:
            raise ModelError(f"frequency {frequency} not in the configured grid")

    def rho(self, idx: int) -> float:
        return self.core_power[idx]

    def sigma(self, idx: int, frame_type: FrameType) -> float:
        try:
            return self.cache_power[frame_type][idx]
        except KeyError:
            raise ModelError(f"no cache power configured for frame type {frame_type}")


def validate_power_model(model: PowerModel) -> list[str]:
    """Return human-readable violations; empty list when the model is sound."""
    v: list[str] = []
    f = model.frequencies
    if len(f) < 1:
        return ["no frequencies configured"]
    if any(x <= 0 for x in f):
        v.append("frequencies must be positive")
    if list(f) != sorted(set(f)):
        v.append("frequencies must be strictly increasing")
    rho = model.core_power
    if len(rho) != len(f):
        v.append("core power table length does not match the frequency grid")
        return v
    if any(p <= 0 for p in rho):
        v.append("core power entries must be positive")
    for i in range(1, len(rho)):
        if rho[i] <= rho[i - 1]:
            v.append(
                f"core power not strictly increasing between grid points {i - 1} and {i}"
            )
    diffs = [rho[i + 1] - rho[i] for i in range(len(rho) - 1)]
    for i in range(1, len(diffs)):
        if diffs[i] <= diffs[i - 1]:
            v.append(
                f"core power not strictly convex: difference {i} does not exceed "
                f"difference {i - 1}"
            )
    for t, table in model.cache_power.items():
        if len(table) != len(f):
            v.append(f"cache power table for {t} does not match the frequency grid")
            continue
        if any(s < 0 for s in table):
            v.append(f"cache power for {t} must be nonnegative")
    return v


@dataclass(frozen=True)
class LagrangianParams:
    """Scalarization weight, throughput target and discount factor."""

    lam: float
    rate_target: float = 0.0
    discount: float = 0.9

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ModelError("lam must be nonnegative")
        if self.rate_target < 0:
            raise ModelError("rate_target must be nonnegative")
        if not 0 <= self.discount < 1:
            raise ModelError("discount must lie in [0, 1)")


def processor_power(
    model: PowerModel, frequency_idx: int, frame_type: FrameType | None
) -> float:
    """Watts drawn by one processor this slot; idle processors pay core power only."""
    p = model.rho(frequency_idx)
    if frame_type is not None:
        p += model.sigma(frequency_idx, frame_type)
    return p


def expected_slice_rate(
    frequency: float,
    slot_duration: float,
    scheduled: int,
    mean_cycles: float,
) -> float:
    """Expected departures contributed by one processor this slot."""
    if scheduled not in (0, 1):
        raise ModelError("scheduled flag must be 0 or 1")
    if not scheduled:
        return 0.0
    return decode_prob(frequency, slot_duration, mean_cycles)


def lagrangian_stage_cost(
    model: PowerModel,
    params: LagrangianParams,
    slot_duration: float,
    assignment: Sequence[tuple[int, FrameType | None]],
    mean_cycles: Mapping[FrameType, float],
) -> float:
    """Scalarized one-slot cost of a joint assignment.

    ``assignment`` holds one ``(frequency_idx, frame_type or None)`` pair per
    processor; ``None`` means the processor idles.  Changing ``rate_target``
    shifts every stage cost by the same constant, so argmins are unaffected.
    """
    power = 0.0
    rate = 0.0
    for idx, ft in assignment:
        power += processor_power(model, idx, ft)
        if ft is not None:
            rate += expected_slice_rate(
                model.frequencies[idx], slot_duration, 1, mean_cycles[ft]
            )
    return power - params.lam * (rate - params.rate_target)


def default_power_model(
    frequencies_mhz: Sequence[float] = DEFAULT_FREQUENCIES_MHZ,
) -> PowerModel:
    """Build the default DVFS power tables for a frequency grid in MHz."""
    freqs = tuple(sorted(float(f) * 1e6 for f in frequencies_mhz))
    if not freqs:
        raise ModelError("need at least one frequency")
    f_top = freqs[-1]

    def volt(f: float) -> float:
        return 1.6 if f >= _VOLT_STEP_HZ else 1.07

    rho = tuple(_KAPPA * f * volt(f) ** 2 + _LEAKAGE_W for f in freqs)
    cache = {
        t: tuple(scale * (0.2 + 0.8 * f / f_top) for f in freqs)
        for t, scale in _CACHE_SCALE.items()
    }
    return PowerModel(frequencies=freqs, core_power=rho, cache_power=cache)


@dataclass(frozen=True)
class SystemModel:
    """Platform bundle: processor count, power tables, mean slice complexities."""

    power: PowerModel
    mean_cycles: Mapping[FrameType, float]
    num_processors: int

    def __post_init__(self) -> None:
        if self.num_processors < 1:
            raise ModelError("need at least one processor")
        for t, b in self.mean_cycles.items():
            if b <= 0:
                raise ModelError(f"mean cycles for {t} must be positive")

    def completion_probs(
        self, slot_duration: float, frame_type: FrameType
    ) -> tuple[float, ...]:
        """One-slot completion probability at every frequency grid point."""
        beta = self.mean_cycles[frame_type]
        return tuple(
            decode_prob(f, slot_duration, beta) for f in self.power.frequencies
        )
