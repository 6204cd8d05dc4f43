"""Exception types shared across the package."""


class GazefuseError(Exception):
    """Base class for all errors raised by this package."""


class MalformedPath(GazefuseError):
    """Stream path does not follow the canonical namespace layout."""


class DegenerateBox(GazefuseError):
    """Bounding box has no area inside the unit square."""


class ParseError(GazefuseError):
    """Wire line is not syntactically valid."""


class SchemaError(GazefuseError):
    """Wire record fields do not match the channel schema."""


class UnknownTopic(GazefuseError):
    """Wire record topic is not a known stream."""


class InvalidConfig(GazefuseError):
    """Configuration values are out of range or inconsistent."""


class BadRate(GazefuseError):
    """Sampling rate is incompatible with the requested filter."""


class BaselineTooShort(GazefuseError):
    """Pupil baseline spans less than the required 30 seconds."""


class BaselineEmpty(GazefuseError):
    """No gated pupil samples were collected for the baseline."""


class NoBaseline(GazefuseError):
    """Baseline-relative filtering requested before a baseline exists."""


class WindowTooShort(GazefuseError):
    """Signal window is too short for the requested operation."""


class NotEnoughBeats(GazefuseError):
    """RR series too short for the requested HRV feature."""


class InvalidGaze(GazefuseError):
    """Attention resolution called with an invalid gaze sample."""


class IllegalTransition(GazefuseError):
    """Protocol command is not legal in the current state."""


class NoActiveSession(GazefuseError):
    """Operation requires a running session."""


class IoError(GazefuseError):
    """Session log I/O failed."""


class CorruptLog(GazefuseError):
    """Session log is damaged; carries the last readable sequence number."""

    def __init__(self, message: str, last_good_seq: int):
        super().__init__(message)
        self.last_good_seq = last_good_seq


class MissingTask(GazefuseError):
    """Requested task interval is not present in the log."""


class MissingStream(GazefuseError):
    """A channel required for a metric is absent from the log."""

    def __init__(self, channel: str):
        super().__init__(f"stream missing: {channel}")
        self.channel = channel


class EmptyGroup(GazefuseError):
    """No sessions fall into the requested participant group."""


class BacklogExceeded(GazefuseError):
    """A live subscriber fell too far behind and was dropped."""
