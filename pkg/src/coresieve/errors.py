"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class DegenerateClass(ValueError):
    """Some class has no clean samples, so its transition row is undefined."""


class EmptyDataset(ValueError):
    pass


class InvalidWorld(ValueError):
    pass


class DecouplingMismatch(AssertionError):
    """The three decoupled terms do not add up to the exact risk (implementation bug)."""


class TrainingDiverged(RuntimeError):
    pass


class ConfigError(ValueError):
    """Invalid run configuration. ``field`` names the offending key path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
