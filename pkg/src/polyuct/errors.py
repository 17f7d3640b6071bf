"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A parameter block violates a documented constraint."""


class ResourceError(RuntimeError):
    """A configured node, sample, or search budget was exhausted."""
