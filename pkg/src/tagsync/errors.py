"""Exception hierarchy shared by all tagsync modules."""


class TagSyncError(Exception):
    """Base class for all tagsync errors."""


class FormatError(TagSyncError):
    """Malformed stream/config file (message carries path and line number)."""


class ValidationError(TagSyncError):
    """Input violates a documented invariant or precondition."""


class RangeError(TagSyncError):
    """Value outside the representable/allowed range (negative tag, overflow)."""


class CapacityError(TagSyncError):
    """Desk-scale guard exceeded (request would be too large to run here)."""


class InsufficientDataError(TagSyncError):
    """Not enough events to run the requested operation."""


class ResolutionError(TagSyncError):
    """Requested scan resolution is below the stream LSB."""


class PeakNotFoundError(TagSyncError):
    """Coarse search found no statistically significant coincidence peak.

    The best (rejected) candidate is attached as ``.best`` so callers can
    report it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NoPeakError(TagSyncError):
    """Histogram has too little contrast/support to attempt a peak fit."""


class DegenerateStatisticsError(TagSyncError):
    """Statistics are undefined (e.g. zero spread in the baseline)."""


class HarnessError(TagSyncError):
    """An experiment run aborted (e.g. too many failed trials)."""
