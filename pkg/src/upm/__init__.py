"""UPM: drive compute backends as virtual I/O devices through file semantics.

Install a device manifest, open ``upm://<name>``, write job payloads,
read results.  The same runtime classifies and reduces machine
descriptions, assigns job batches to devices, and coordinates coupled
applications over cluster devices.
"""

from .errors import (
    AlreadyInstalled,
    BackendFailure,
    DeviceClosed,
    IncompatibleModel,
    InfeasibleJob,
    InvalidManifest,
    InvalidSpec,
    NotInstalled,
    ProtocolError,
    Timeout,
    UpmError,
)
from .fileapi import DeviceHandle, upm_close, upm_control, upm_open, upm_read, upm_write
from .framing import Frame, FrameKind, decode_frame, encode_frame
from .model import DeviceClass, DeviceDescriptor, TransportKind, TransportSpec, validate_descriptor
from .registry import Registry, default_registry_path, parse_manifest

__version__ = "0.1.0"

__all__ = [
    "AlreadyInstalled",
    "BackendFailure",
    "DeviceClass",
    "DeviceClosed",
    "DeviceDescriptor",
    "DeviceHandle",
    "Frame",
    "FrameKind",
    "IncompatibleModel",
    "InfeasibleJob",
    "InvalidManifest",
    "InvalidSpec",
    "NotInstalled",
    "ProtocolError",
    "Registry",
    "Timeout",
    "TransportKind",
    "TransportSpec",
    "UpmError",
    "decode_frame",
    "default_registry_path",
    "encode_frame",
    "parse_manifest",
    "upm_close",
    "upm_control",
    "upm_open",
    "upm_read",
    "upm_write",
    "validate_descriptor",
    "__version__",
]
