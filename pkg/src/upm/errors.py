"""Error taxonomy shared by every runtime layer.

Each error carries a stable ``variant`` name; the CLI and the wire
protocol report that name verbatim, so it is part of the public contract.
"""

from __future__ import annotations


class UpmError(Exception):
    """Base class for all runtime errors."""

    variant = "UPM_ERROR"

    def __init__(self, detail: str = ""):
        self.detail = detail
        super().__init__(f"{self.variant}: {detail}" if detail else self.variant)


class NotInstalled(UpmError):
    variant = "NOT_INSTALLED"


class AlreadyInstalled(UpmError):
    variant = "ALREADY_INSTALLED"


class DeviceClosed(UpmError):
    variant = "DEVICE_CLOSED"


class IncompatibleModel(UpmError):
    variant = "INCOMPATIBLE_MODEL"


class InfeasibleJob(UpmError):
    variant = "INFEASIBLE_JOB"


class Timeout(UpmError):
    variant = "TIMEOUT"


class ProtocolError(UpmError):
    variant = "PROTOCOL_ERROR"


class BackendFailure(UpmError):
    variant = "BACKEND_FAILURE"


class InvalidManifest(UpmError):
    variant = "INVALID_MANIFEST"


class InvalidSpec(UpmError):
    variant = "INVALID_SPEC"
