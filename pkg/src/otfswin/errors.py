"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A rejected configuration: infeasible layout, bad window request,
    malformed experiment file, unknown keys, out-of-range parameters."""


class NumericalFailure(RuntimeError):
    """A numerical operation that cannot proceed (singular solve,
    failed self-check)."""
