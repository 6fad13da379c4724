"""Exception types raised across the package."""


class GroupDIRError(Exception):
    """Base class for every error raised by groupdir."""


class ConfigError(GroupDIRError, ValueError):
    """A configuration value or precondition on inputs is invalid."""


class InvalidRangeError(ConfigError):
    pass


class InvalidGroupsError(ConfigError):
    pass


class InvalidGroupError(GroupDIRError, IndexError):
    """A group index lies outside {0..num_groups-1}."""


class OutOfRangeError(GroupDIRError, ValueError):
    """A label lies outside the grouping range."""


class DegenerateDensityError(GroupDIRError, ValueError):
    pass


class NonFiniteInputError(GroupDIRError, ValueError):
    pass


class InvalidPriorError(GroupDIRError, ValueError):
    pass


class ZeroVectorError(GroupDIRError, ValueError):
    pass


class ShapeMismatchError(GroupDIRError, ValueError):
    pass


class EmptyInputError(GroupDIRError, ValueError):
    pass


class ZeroVarianceError(GroupDIRError, ValueError):
    pass


class EmptyDatasetError(GroupDIRError, ValueError):
    pass


class MalformedRowError(GroupDIRError, ValueError):
    """A CSV row has the wrong number of columns or an unparseable value."""

    def __init__(self, line: int, message: str = ""):
        self.line = line
        super().__init__(f"malformed row at line {line}" + (f": {message}" if message else ""))


class CheckpointMismatchError(ConfigError):
    """A checkpoint disagrees with the requested grouping."""
