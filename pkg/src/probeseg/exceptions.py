"""
Custom exception classes with error codes
"""


class ProbesegError(Exception):
    """Base exception for probeseg errors"""

    def __init__(self, message: str, code: str, details: str = ""):
        super().__init__(message)
        self.message = message
        self.code = code
        self.details = details

    def to_dict(self) -> dict[str, str]:
        """Convert to dictionary for JSON output"""
        return {"code": self.code, "message": self.message, "details": self.details}


class ConfigError(ProbesegError):
    """Missing or invalid configuration"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "INVALID_CONFIG", details)


class ShapeMismatchError(ProbesegError):
    """Array shapes do not agree"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "SHAPE_MISMATCH", details)


class ImageFormatError(ProbesegError):
    """Raster file cannot be decoded"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "IMAGE_FORMAT", details)


class SceneFormatError(ProbesegError):
    """Scene file is malformed"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "SCENE_FORMAT", details)


class CheckpointError(ProbesegError):
    """Checkpoint file is truncated or corrupt"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "CHECKPOINT_INVALID", details)


class CheckpointVersionError(ProbesegError):
    """Checkpoint was written by an incompatible format version"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "CHECKPOINT_VERSION", details)


class MissingActivationsError(ProbesegError):
    """Backward requested without a retained forward pass"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "NO_ACTIVATIONS", details)


class ForceTargetError(ProbesegError):
    """Escalation feedback that the protocol cannot produce"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "INVALID_FORCE_TARGET", details)


class BankSampleError(ProbesegError):
    """Memory bank cannot satisfy a sampling request"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "BANK_UNDERFLOW", details)


class FileWriteError(ProbesegError):
    """Cannot write to output directory (permission or I/O error)"""

    def __init__(self, message: str, details: str = ""):
        super().__init__(message, "FILE_WRITE_ERROR", details)
