"""Naive reference compositing used to test the renderer and to render ground truth.

Nothing here is shared with ``lowlight_nerf.render``: transmittances are plain
running products, evaluated sample by sample.

"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

from lowlight_nerf.errors import DomainError

if TYPE_CHECKING:
    from collections.abc import Callable

    from lowlight_nerf.render import PatchBuffers


def oracle_composite(
    buffers: PatchBuffers, pixel: tuple[int, int], mode: str
) -> np.ndarray:
    """RGB of one pixel (row, col) of ``buffers``, computed with explicit loops."""
    if mode not in ("lowlight", "normal"):
        raise DomainError(f"unknown mode {mode!r}")
    row, col = pixel
    sigmas = np.asarray(buffers.sigmas, dtype=np.float64)[row, col]
    colors = np.asarray(buffers.colors, dtype=np.float64)[row, col]
    delta = float(buffers.delta)
    if mode == "lowlight":
        omegas = np.asarray(buffers.omegas, dtype=np.float64)[row, col]
        theta_g = np.asarray(buffers.theta_g, dtype=np.float64)

    rgb = [0.0, 0.0, 0.0]
    transmittance = 1.0
    for i in range(len(sigmas)):
        alpha = 1.0 - math.exp(-float(sigmas[i]) * delta)
        for channel in range(3):
            rgb[channel] += transmittance * alpha * float(colors[i, channel])
        transmittance *= math.exp(-float(sigmas[i]) * delta)
        if mode == "lowlight":
            transmittance *= float(omegas[i]) * float(theta_g[i])
    return np.array(rgb)


def oracle_render_rays(
    density: Callable[[np.ndarray], np.ndarray],
    color: Callable[[np.ndarray], np.ndarray],
    origins: np.ndarray,
    directions: np.ndarray,
    t_near: float,
    t_far: float,
    n_samples: int,
    conceal: float = 1.0,
) -> np.ndarray:
    """Render a block of rays against analytic density and color functions.

    Rays are processed together, samples one after another; ``conceal`` is a
    uniform per-sample factor (Omega * Theta_G) applied to the running
    transmittance after each sample. Midpoint depths.

    """
    delta = (t_far - t_near) / n_samples
    shape = origins.shape[:-1]
    rgb = np.zeros((*shape, 3))
    transmittance = np.ones(shape)
    for i in range(n_samples):
        t = t_near + (i + 0.5) * delta
        points = origins + t * directions
        survive = np.exp(-density(points) * delta)
        rgb += (transmittance * (1.0 - survive))[..., None] * color(points)
        transmittance = transmittance * survive
        if conceal != 1.0:
            transmittance = transmittance * conceal
    return rgb
