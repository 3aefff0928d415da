"""Exception types shared across the library and the campaign service."""

from __future__ import annotations


class TreecrowdError(Exception):
    """Base class for all library errors."""


class CloudParseError(TreecrowdError):
    """A point-cloud or raster file is malformed; records the offending line."""

    def __init__(self, path: str, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class OutOfCoverageError(TreecrowdError):
    """A query point lies outside the terrain raster's node hull."""


class UndefinedMetricError(TreecrowdError):
    """A metric or price has a zero denominator and is undefined."""


class NoWorkAvailable(TreecrowdError):
    """No payload tile can currently be reserved for this worker."""


class ProtocolError(TreecrowdError):
    """Campaign-service protocol violation; subclasses carry distinct codes."""

    code = "protocol_error"


class UnknownCampaignError(ProtocolError):
    code = "unknown_campaign"


class UnknownJobError(ProtocolError):
    code = "unknown_job"


class ExpiredLeaseError(ProtocolError):
    code = "expired_lease"


class DoubleSubmitError(ProtocolError):
    code = "double_submit"


class InvalidJobStateError(ProtocolError):
    code = "invalid_job_state"
