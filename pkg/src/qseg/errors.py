"""exception types shared across the package."""


class InvalidInput(ValueError):
    """malformed construction-time input (empty data, bad level, bad config)."""


class InvalidQuery(ValueError):
    """a structurally valid object was queried with out-of-range arguments."""


class InfeasibleSegment(RuntimeError):
    """a fitted value was requested for a segment whose feasible interval is empty."""


class CacheCorruption(RuntimeError):
    """a critical-value cache file holds conflicting records for the same key."""
