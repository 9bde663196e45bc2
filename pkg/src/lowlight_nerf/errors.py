"""Exceptions raised by lowlight_nerf.

Every class carries a short machine-parseable ``code`` and the process
``exit_code`` the command line uses when the error reaches the top.

"""

from __future__ import annotations


class LowlightNerfError(Exception):
    code = "E_UNKNOWN"
    exit_code = 1

    def one_line(self) -> str:
        message = " ".join(str(self).split())
        return f"error[{self.code}]: {message}"


class ConfigError(LowlightNerfError):
    code = "E_CONFIG"
    exit_code = 2


class DomainError(LowlightNerfError, ValueError):
    """An argument lies outside the domain of an operation (pixel, patch, shape)."""

    code = "E_DOMAIN"
    exit_code = 2


class DataError(LowlightNerfError):
    code = "E_DATA"
    exit_code = 3


class MissingFileError(DataError):
    code = "E_MISSING_FILE"


class MalformedPoseError(DataError):
    code = "E_MALFORMED_POSE"


class ImageDecodeError(DataError):
    code = "E_IMAGE_DECODE"


class UnsupportedImageFormatError(DataError):
    code = "E_IMAGE_FORMAT"


class UnmatchedFilesError(DataError):
    code = "E_UNMATCHED"

    def __init__(self, missing_in_render: list[str], missing_in_gt: list[str]) -> None:
        self.missing_in_render = missing_in_render
        self.missing_in_gt = missing_in_gt
        parts = []
        if missing_in_render:
            parts.append(f"missing in render dir: {', '.join(missing_in_render)}")
        if missing_in_gt:
            parts.append(f"missing in gt dir: {', '.join(missing_in_gt)}")
        super().__init__("; ".join(parts))


class EmptyDatasetError(DataError):
    code = "E_EMPTY"


class CheckpointError(DataError):
    code = "E_CKPT"


class CheckpointVersionError(CheckpointError):
    code = "E_CKPT_VERSION"


class CheckpointTruncatedError(CheckpointError):
    code = "E_CKPT_TRUNCATED"


class CheckpointShapeError(CheckpointError):
    code = "E_CKPT_SHAPE"


class NumericError(LowlightNerfError):
    code = "E_NUMERIC"
    exit_code = 4


class NonFiniteError(NumericError):
    """A NaN or Inf showed up in a loss, a gradient or a parameter.

    ``where`` names the operation or parameter; ``context`` holds extra details
    such as the patch coordinates of the training iteration that blew up.

    """

    code = "E_NONFINITE"

    def __init__(self, where: str, context: dict | None = None) -> None:
        self.where = where
        self.context = dict(context or {})
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        message = f"non-finite value in {where}"
        if details:
            message = f"{message} ({details})"
        super().__init__(message)
