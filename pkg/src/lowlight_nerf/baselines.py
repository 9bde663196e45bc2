"""Training-free enhancement baselines for comparison pipelines."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import numpy as np

from lowlight_nerf.errors import ConfigError, DomainError
from lowlight_nerf.images import list_images, quantize, read_image, write_image

logger = logging.getLogger(__name__)


def hist_equalize(img: np.ndarray) -> np.ndarray:
    """Per-channel histogram equalization on 256 bins.

    Each channel is remapped through its normalized cumulative histogram; a
    channel holding a single value is left as it is.

    """
    levels = quantize(img)
    if levels.ndim == 2:
        levels = levels[..., None]
    out = np.empty(levels.shape, dtype=np.float64)
    for channel in range(levels.shape[-1]):
        values = levels[..., channel]
        cdf = np.cumsum(np.bincount(values.ravel(), minlength=256))
        cdf_min = cdf[cdf > 0][0]
        if cdf[-1] == cdf_min:
            out[..., channel] = values / 255.0
            continue
        lut = np.floor((cdf - cdf_min) / (cdf[-1] - cdf_min) * 255.0 + 0.5)
        out[..., channel] = np.clip(lut, 0, 255)[values] / 255.0
    return out.reshape(np.shape(img))


def gamma_correct(img: np.ndarray, gamma: float, gain: float = 1.0) -> np.ndarray:
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    return np.clip(gain * np.asarray(img, dtype=np.float64) ** gamma, 0.0, 1.0)


def gray_world(img: np.ndarray) -> np.ndarray:
    """Scale each channel so that all channel means equal their average."""
    img = np.asarray(img, dtype=np.float64)
    means = img.reshape(-1, img.shape[-1]).mean(axis=0)
    target = means.mean()
    gains = np.where(means > 0, target / np.where(means > 0, means, 1.0), 1.0)
    return np.clip(img * gains, 0.0, 1.0)


METHODS = {
    "he": hist_equalize,
    "gamma": gamma_correct,
    "gray_world": gray_world,
}


def enhance(img: np.ndarray, method: str, **params: Any) -> np.ndarray:
    if method not in METHODS:
        raise ConfigError(f"unknown enhancement {method!r}; choose from {sorted(METHODS)}")
    if method == "gamma":
        return gamma_correct(img, params.get("gamma", 0.5), params.get("gain", 1.0))
    return METHODS[method](img)


def enhance_directory(
    in_dir: str | Path, out_dir: str | Path, method: str, **params: Any
) -> list[Path]:
    """Apply one baseline to every image of ``in_dir``; file names are kept."""
    out_dir = Path(out_dir)
    written = [
        write_image(out_dir / path.name, enhance(read_image(path), method, **params))
        for path in list_images(in_dir)
    ]
    logger.info("%s: enhanced %d images into %s", method, len(written), out_dir)
    return written
