"""Exception types shared across the package."""


class WavedampError(Exception):
    """Base class for all package errors."""


class DomainError(WavedampError):
    """An input is outside the mathematical domain of an operation."""


class RangeError(WavedampError):
    """A value violates a declared bound (e.g. an action outside its range)."""


class CollisionError(WavedampError):
    """Two vehicles overlapped during integration; the run is aborted."""

    def __init__(self, msg, time=None, vehicle_id=None):
        super().__init__(msg)
        self.time = time
        self.vehicle_id = vehicle_id


class TrajectoryExhausted(WavedampError):
    """The leader trajectory does not cover the requested simulation time."""


class InsufficientHistory(WavedampError):
    """A sliding-window operation was called with too few samples."""


class DegenerateCluster(WavedampError):
    """Too few points to fit a covariance (need at least 3)."""


class ShapeError(WavedampError):
    """An array has the wrong length or shape for the requested variant."""


class NumericalError(WavedampError):
    """A non-finite value appeared where finite math was required."""


class ConfigError(WavedampError):
    """A configuration file failed to parse or validate."""
