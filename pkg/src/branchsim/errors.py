"""Exception types shared across the package."""


class CapacityError(RuntimeError):
    """Requested object exceeds the configured dimension cap."""


class DegenerateStateError(ValueError):
    """Operation on a (numerically) zero state vector."""


class InvalidPerturbationError(ValueError):
    """Perturbation operator touches the subspace it must leave alone."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""
