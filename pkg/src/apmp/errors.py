"""Exception types shared across the package."""


class APMPError(Exception):
    """Base class for all errors raised by this package."""


class InvalidEnergy(APMPError, ValueError):
    """An energy violates a structural invariant (shape, graph, canonical form)."""


class NonSubmodular(InvalidEnergy):
    def __init__(self, edge, table):
        self.edge = edge
        self.table = table
        super().__init__(
            f"edge {edge} is not submodular: "
            f"{table[0][0]} + {table[1][1]} > {table[0][1]} + {table[1][0]}"
        )


class DimensionMismatch(APMPError, ValueError):
    pass


class TooLarge(APMPError, ValueError):
    pass


class InsufficientCapacity(APMPError):
    pass


class NotConverged(APMPError):
    pass


class PropagationBroken(APMPError):
    """A chain factor failed to pass its incoming message through unchanged."""


class ZeroDenominator(APMPError):
    pass


class IterationCap(APMPError):
    pass


class NoConvergence(APMPError):
    pass


class ConflictingPolarity(APMPError):
    pass


class SplitViolation(APMPError):
    pass
