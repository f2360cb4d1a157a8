"""Exception hierarchy shared across the package.

Every error raised by voltcraft derives from VoltcraftError so the CLI can
turn any module failure into a machine-readable record with one except clause.
"""


class VoltcraftError(Exception):
    """Base class for all voltcraft errors."""


# network / feeder model
class ParseError(VoltcraftError):
    """Malformed input file."""


class TopologyError(VoltcraftError):
    """Feeder graph is not a rooted tree."""


class UnitError(VoltcraftError):
    """Non-positive or inconsistent base quantities."""


class CapabilityError(VoltcraftError):
    """Inverter apparent capacity below active nameplate."""


class UnknownBus(VoltcraftError):
    """Bus id not present in the model."""


# power flow
class Diverged(VoltcraftError):
    """Sweep iteration failed to reach the residual tolerance."""


class NumericalError(VoltcraftError):
    """Non-physical intermediate quantity (e.g. squared voltage <= 0)."""


class ActionOutOfBounds(VoltcraftError):
    """Reactive setpoint outside the inverter capability box (strict mode)."""


# baseline optimization
class Infeasible(VoltcraftError):
    """No voltage-feasible setpoint exists for the given state."""

    def __init__(self, message, max_violation=None, least_violating=None):
        super().__init__(message)
        self.max_violation = max_violation
        self.least_violating = least_violating


class MaxIterations(VoltcraftError):
    """Solver hit its iteration cap before meeting tolerances."""


class TooManyInverters(VoltcraftError):
    """Grid-search oracle limited to small inverter counts."""


class NoFeasiblePoint(VoltcraftError):
    """Every grid point violates the voltage band."""


# policy
class DimensionMismatch(VoltcraftError):
    """Vector length inconsistent with the model."""


class NonFiniteActivation(VoltcraftError):
    """NaN or infinity produced inside the network forward pass."""


class DegenerateSupport(VoltcraftError):
    """Truncated-Gaussian support carries no probability mass."""


class OutOfSupport(VoltcraftError):
    """Action outside the truncation interval."""


class NonFiniteGradient(VoltcraftError):
    """NaN or infinity in a computed gradient."""


class VersionMismatch(VoltcraftError):
    """Serialized model carries an unsupported version tag."""


# time-series ingestion
class MissingColumn(VoltcraftError):
    """Required CSV column absent."""


class NonMonotoneTime(VoltcraftError):
    """Timestamps not strictly increasing."""
