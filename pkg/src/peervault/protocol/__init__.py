from .messages import (
    AccessibleFilesRequest,
    AccessibleFilesResponse,
    FailReason,
    FileRequest,
    FileRequestFailed,
    FileResponse,
    Malformed,
    Message,
    decode,
    encode,
)
from .transfer import PayloadTooLarge, TransferTimeout

__all__ = [
    "AccessibleFilesRequest",
    "AccessibleFilesResponse",
    "FailReason",
    "FileRequest",
    "FileRequestFailed",
    "FileResponse",
    "Malformed",
    "Message",
    "decode",
    "encode",
    "PayloadTooLarge",
    "TransferTimeout",
]
