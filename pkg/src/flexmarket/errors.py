"""Exception types raised by the solvers."""


class MarketError(Exception):
    """Base class for all flexmarket errors."""


class InfeasibleProsumer(MarketError):
    """A prosumer's free flexibility ``-b/a`` exceeds its maximum ``m``."""

    def __init__(self, index, lower, upper):
        self.index = index
        self.lower = lower
        self.upper = upper
        super().__init__(
            f"prosumer {index}: free flexibility {lower!r} exceeds maximum {upper!r}"
        )


class InfeasibleCap(MarketError):
    """Free flexibility exceeds the requested imbalance ("Assumption 1")."""

    def __init__(self, free_flex, f):
        self.free_flex = free_flex
        self.f = f
        super().__init__(
            f"Assumption 1 violated: free flexibility {free_flex!r} exceeds f={f!r}"
        )


class SizeLimit(MarketError):
    """Instance too large for an enumeration-based method."""
