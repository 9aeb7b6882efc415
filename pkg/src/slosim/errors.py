"""Exception types shared across the simulator."""


class SlosimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SlosimError):
    """Invalid configuration value or missing configuration key."""


class TraceParseError(SlosimError):
    """Malformed trace file; message names the offending line."""


class ValidationError(SlosimError):
    """A domain invariant was violated; message names the field."""


class AllocationError(SlosimError):
    """Block allocation requested beyond free capacity."""


class StateError(SlosimError):
    """Operation applied to a request in the wrong lifecycle state."""


class EngineFault(SlosimError):
    """Internal invariant violation inside the simulation loop.

    Never silently repaired; surfaces as CLI exit code 3.
    """
