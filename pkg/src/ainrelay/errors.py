"""Exception types raised by the simulator."""


class AinRelayError(Exception):
    """Base class for all errors raised by this package."""


class ChannelGenerationError(AinRelayError):
    """Too many consecutive numerically singular channel draws."""


class SingularChannelError(AinRelayError):
    """A channel matrix that must be inverted is numerically singular."""


class RankDeficiencyError(AinRelayError):
    """A stacked signal-space matrix has lost rank and cannot be zero-forced."""


class UnsupportedDimensionError(AinRelayError, ValueError):
    """The antenna count is not supported by the construction."""


class DegenerateChannelError(AinRelayError, ValueError):
    """A scalar channel coefficient is zero."""


class EnumerationTooLargeError(AinRelayError):
    """Constellation enumeration would exceed the tuple budget."""

    def __init__(self, q, n_tuples, budget):
        self.q = q
        self.n_tuples = n_tuples
        self.budget = budget
        super().__init__(
            f"constellation with Q={q} has {n_tuples} tuples, exceeding the "
            f"enumeration budget of {budget}; lower Q (raise epsilon or lower "
            f"gamma) or raise the budget"
        )
