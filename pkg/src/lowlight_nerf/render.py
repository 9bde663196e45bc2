"""Discrete volume compositing, with and without concealing fields.

Transmittance is accumulated in log space: the exclusive running sum of
-sigma * delta (plus log Omega + log Theta_G in low-light mode) is clamped at
``LOG_TRANSMITTANCE_FLOOR`` and exponentiated once per sample.

"""

from __future__ import annotations

from functools import partial
from typing import TYPE_CHECKING, Literal, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from lowlight_nerf.errors import DomainError, NonFiniteError
from lowlight_nerf.field import (
    FieldConfig,
    eval_color,
    eval_conceal_local,
    eval_density,
    theta_global,
)
from lowlight_nerf.geometry import (
    Camera,
    PatchCoords,
    SampleConfig,
    depths_for_rays,
    rays_for_patch,
)

if TYPE_CHECKING:
    from collections.abc import Iterator

Mode = Literal["lowlight", "normal"]
MODES = ("lowlight", "normal")
LOG_TRANSMITTANCE_FLOOR = -80.0


class CompositeResult(NamedTuple):
    rgb: jax.Array
    weights: jax.Array
    transmittance: jax.Array
    mode: str


class PatchBuffers(NamedTuple):
    sigmas: jax.Array
    colors: jax.Array
    omegas: jax.Array | None
    theta_g: jax.Array | None
    delta: float


class RenderOutput(NamedTuple):
    rgb: jax.Array
    rgb_normal: jax.Array
    buffers: PatchBuffers
    weights: jax.Array
    transmittance: jax.Array


def _check_finite(**arrays: jax.Array | None) -> None:
    for name, value in arrays.items():
        if value is None or isinstance(value, jax.core.Tracer):
            continue
        if not bool(jnp.all(jnp.isfinite(value))):
            raise NonFiniteError(f"composite input '{name}'")


def _composite(
    sigmas: jax.Array,
    colors: jax.Array,
    delta: float,
    log_conceal: jax.Array | None,
) -> tuple[jax.Array, jax.Array, jax.Array]:
    optical = sigmas * delta
    step = -optical if log_conceal is None else -optical + log_conceal
    running = jnp.cumsum(step[..., :-1], axis=-1)
    log_t = jnp.concatenate([jnp.zeros_like(step[..., :1]), running], axis=-1)
    transmittance = jnp.exp(jnp.maximum(log_t, LOG_TRANSMITTANCE_FLOOR))
    weights = transmittance * -jnp.expm1(-optical)
    rgb = jnp.sum(weights[..., None] * colors, axis=-2)
    return rgb, weights, transmittance


def composite_normal(sigmas: jax.Array, colors: jax.Array, delta: float) -> CompositeResult:
    """C = sum_i T_i (1 - exp(-sigma_i delta)) c_i with T_i = exp(-sum_{j<i} sigma_j delta).

    Broadcasts over leading axes: sigmas [..., N], colors [..., N, 3].

    """
    _check_finite(sigmas=sigmas, colors=colors)
    rgb, weights, transmittance = _composite(sigmas, colors, delta, None)
    return CompositeResult(rgb, weights, transmittance, "normal")


def composite_lowlight_rays(
    sigmas: jax.Array,
    colors: jax.Array,
    omegas: jax.Array,
    theta_g: jax.Array,
    delta: float,
) -> CompositeResult:
    """Low-light compositing: T_low_i = T_i * prod_{j<i} Omega_j Theta_G(j)."""
    _check_finite(sigmas=sigmas, colors=colors, omegas=omegas, theta_g=theta_g)
    log_conceal = jnp.log(omegas) + jnp.log(theta_g)
    rgb, weights, transmittance = _composite(sigmas, colors, delta, log_conceal)
    return CompositeResult(rgb, weights, transmittance, "lowlight")


def composite_lowlight(buffers: PatchBuffers, pixel: tuple[int, int]) -> CompositeResult:
    """Low-light composite of one pixel (row, col) of a patch."""
    row, col = pixel
    return composite_lowlight_rays(
        buffers.sigmas[row, col],
        buffers.colors[row, col],
        buffers.omegas[row, col],
        buffers.theta_g,
        buffers.delta,
    )


def _params_dtype(params: dict) -> jnp.dtype:
    return params["density"]["sigma"]["weight"].dtype


@partial(jax.jit, static_argnames=("field_cfg", "sample_cfg", "mode"))
def render_rays(
    params: dict,
    field_cfg: FieldConfig,
    sample_cfg: SampleConfig,
    origins: jax.Array,
    directions: jax.Array,
    mode: Mode,
    key: jax.Array | None = None,
) -> RenderOutput:
    """Render a [ph, pw] block of rays.

    In low-light mode the normal-mode color of the same field evaluation is
    returned as ``rgb_normal``; normal mode never reads the concealing parameters.

    """
    if field_cfg.n_samples != sample_cfg.n_samples:
        raise DomainError(
            f"field has {field_cfg.n_samples} depth slots, sampler draws {sample_cfg.n_samples}"
        )
    block = origins.shape[:-1]
    depths = depths_for_rays(sample_cfg, block, key).astype(origins.dtype)
    points = origins[..., None, :] + depths[..., None] * directions[..., None, :]
    sigmas, hidden = eval_density(params, field_cfg, points)
    colors = eval_color(params, field_cfg, hidden, directions[..., None, :])
    delta = sample_cfg.delta

    normal = composite_normal(sigmas, colors, delta)
    if mode == "normal":
        buffers = PatchBuffers(sigmas, colors, None, None, delta)
        return RenderOutput(normal.rgb, normal.rgb, buffers, normal.weights, normal.transmittance)

    omegas = eval_conceal_local(params, field_cfg, hidden)
    theta_g = theta_global(params)
    low = composite_lowlight_rays(sigmas, colors, omegas, theta_g, delta)
    buffers = PatchBuffers(sigmas, colors, omegas, theta_g, delta)
    return RenderOutput(low.rgb, normal.rgb, buffers, low.weights, low.transmittance)


def render_patch(
    params: dict,
    field_cfg: FieldConfig,
    sample_cfg: SampleConfig,
    camera: Camera,
    patch: PatchCoords,
    mode: Mode,
    key: jax.Array | None = None,
) -> RenderOutput:
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    origins, directions = rays_for_patch(camera, patch)
    dtype = _params_dtype(params)
    return render_rays(
        params,
        field_cfg,
        sample_cfg,
        jnp.asarray(origins, dtype=dtype),
        jnp.asarray(directions, dtype=dtype),
        mode,
        key,
    )


def _tile_edges(size: int, tile: int) -> list[tuple[int, int]]:
    edges = [(start, min(tile, size - start)) for start in range(0, size, tile)]
    if len(edges) > 1 and edges[-1][1] < 2:
        start, length = edges[-2]
        edges[-2:] = [(start, length + edges[-1][1])]
    return edges


def iter_tiles(camera: Camera, tile: int) -> Iterator[PatchCoords]:
    """Patches covering the whole image; no tile is thinner than two pixels."""
    if camera.width < 2 or camera.height < 2:
        raise DomainError("images must be at least 2x2 to render in patches")
    for y0, ph in _tile_edges(camera.height, tile):
        for x0, pw in _tile_edges(camera.width, tile):
            yield PatchCoords(x0=x0, y0=y0, pw=pw, ph=ph)


def render_image(
    params: dict,
    field_cfg: FieldConfig,
    sample_cfg: SampleConfig,
    camera: Camera,
    mode: Mode,
    tile: int = 32,
) -> np.ndarray:
    """Full [H, W, 3] view rendered tile by tile."""
    image = np.zeros((camera.height, camera.width, 3), dtype=np.float64)
    for patch in iter_tiles(camera, tile):
        out = render_patch(params, field_cfg, sample_cfg, camera, patch, mode)
        image[patch.y0 : patch.y0 + patch.ph, patch.x0 : patch.x0 + patch.pw] = np.asarray(
            out.rgb
        )
    return image


def omega_map(
    params: dict,
    field_cfg: FieldConfig,
    sample_cfg: SampleConfig,
    camera: Camera,
    tile: int = 32,
) -> np.ndarray:
    """Depth-averaged local concealing field of a full view, [H, W]."""
    image = np.zeros((camera.height, camera.width), dtype=np.float64)
    for patch in iter_tiles(camera, tile):
        out = render_patch(params, field_cfg, sample_cfg, camera, patch, "lowlight")
        image[patch.y0 : patch.y0 + patch.ph, patch.x0 : patch.x0 + patch.pw] = np.asarray(
            out.buffers.omegas
        ).mean(axis=-1)
    return image
