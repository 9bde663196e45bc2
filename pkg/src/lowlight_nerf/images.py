"""8-bit RGB image files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from lowlight_nerf.errors import (
    DataError,
    DomainError,
    ImageDecodeError,
    MissingFileError,
    UnsupportedImageFormatError,
)

LOSSLESS_SUFFIXES = (".png", ".bmp", ".tif", ".tiff", ".ppm")


def quantize(img: np.ndarray) -> np.ndarray:
    """Bytes of an image in [0, 1], rounding half up."""
    clipped = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def read_image(path: str | Path) -> np.ndarray:
    """[H, W, 3] float64 image with values byte / 255."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"image not found: {path}")
    try:
        with Image.open(path) as img:
            img.load()
            rgb = img.convert("RGB")
    except (UnidentifiedImageError, OSError, SyntaxError) as error:
        raise ImageDecodeError(f"cannot decode {path}: {error}") from error
    return np.asarray(rgb, dtype=np.float64) / 255.0


def write_image(path: str | Path, img: np.ndarray) -> Path:
    """Write an [H, W, 3] (or [H, W] gray) image in [0, 1] to a lossless format."""
    path = Path(path)
    if path.suffix.lower() not in LOSSLESS_SUFFIXES:
        raise UnsupportedImageFormatError(
            f"cannot write {path.suffix or 'files without suffix'}; use one of {LOSSLESS_SUFFIXES}"
        )
    img = np.asarray(img)
    if not (img.ndim == 2 or (img.ndim == 3 and img.shape[-1] == 3)):
        raise DomainError(f"expected an [H, W, 3] or [H, W] image, got shape {img.shape}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(quantize(img)).save(path)
    except OSError as error:
        raise DataError(f"cannot write {path}: {error}") from error
    return path


def list_images(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(f"image directory not found: {directory}")
    return sorted(
        p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in LOSSLESS_SUFFIXES
    )
