"""Exception types shared across the package."""

from __future__ import annotations


class SliceSchedError(Exception):
    """Base class for all package-specific errors."""


class GopError(SliceSchedError):
    """Invalid GOP structure (bad windows, cyclic dependencies, ...)."""


class ModelError(SliceSchedError):
    """Invalid stochastic or power model input."""


class InstanceTooLargeError(SliceSchedError):
    """A solver was asked to enumerate more states/actions than its cap allows."""


class ConvergenceError(SliceSchedError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class TraceError(SliceSchedError):
    """Trace file malformed or does not cover the requested run."""


class ConfigError(SliceSchedError):
    """Configuration file malformed or inconsistent."""


class PolicyError(SliceSchedError):
    """Policy table malformed or inconsistent with the configuration."""
