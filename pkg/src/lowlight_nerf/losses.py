"""Training losses and their weighted total.

All losses are means (never sums), so the weights keep their balance whatever
the patch size.

"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import jax
import jax.numpy as jnp

from lowlight_nerf.errors import ConfigError, DomainError

POOL_SIZE = 64


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1e-4
    lambda2: float = 1e-3
    lambda3: float = 1e-4
    eta: float = 0.1
    color_per_pixel: bool = False

    def __post_init__(self) -> None:
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("loss weights must be non-negative")
        if not self.eta > 0:
            raise ConfigError(f"eta must be larger than 0, got {self.eta}")


class LossBreakdown(NamedTuple):
    nerf: jax.Array
    con: jax.Array
    st: jax.Array
    cc: jax.Array
    total: jax.Array


def _same_shape(a: jax.Array, b: jax.Array) -> None:
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch: {a.shape} vs {b.shape}")


def loss_nerf(pred_low: jax.Array, gt_low: jax.Array) -> jax.Array:
    """Mean over pixels of the squared L2 color difference."""
    _same_shape(pred_low, gt_low)
    return jnp.mean(jnp.sum((pred_low - gt_low) ** 2, axis=-1))


def loss_control(omega: jax.Array, eta: float) -> jax.Array:
    """Keeps the pooled local concealing field close to ``eta``.

    ``omega`` is [ph, pw, N]. Average pooling with window = stride = 64 over the
    pixel plane; a patch side shorter than 64 is pooled as a whole. Pixels that
    do not fill a complete window are dropped. Pooled values are averaged over
    depth before the squared distance to ``eta``.

    """
    if omega.ndim != 3:
        raise DomainError(f"expected omega of shape [ph, pw, N], got {omega.shape}")
    ph, pw, n = omega.shape
    wh, ww = min(POOL_SIZE, ph), min(POOL_SIZE, pw)
    nh, nw = ph // wh, pw // ww
    if (nh * wh, nw * ww) != (ph, pw):
        warnings.warn(
            f"control loss pooling drops the last {ph - nh * wh} rows and {pw - nw * ww} columns",
            stacklevel=2,
        )
    cropped = omega[: nh * wh, : nw * ww]
    cells = cropped.reshape(nh, wh, nw, ww, n).mean(axis=(1, 3, 4))
    return jnp.mean((cells - eta) ** 2)


def loss_structure(pred_nor: jax.Array, gt_low: jax.Array, eta: float) -> jax.Array:
    """Horizontal neighbor differences of the enhanced patch follow 0.5 / eta times the input's."""
    _same_shape(pred_nor, gt_low)
    if pred_nor.ndim != 3 or pred_nor.shape[1] < 3:
        raise DomainError(f"structure loss needs [ph, pw >= 3, 3] patches, got {pred_nor.shape}")
    contrast = 0.5 / eta
    center_pred, center_gt = pred_nor[:, 1:-1], gt_low[:, 1:-1]
    terms = []
    for neighbor_pred, neighbor_gt in (
        (pred_nor[:, :-2], gt_low[:, :-2]),
        (pred_nor[:, 2:], gt_low[:, 2:]),
    ):
        d = (center_pred - neighbor_pred) - contrast * (center_gt - neighbor_gt)
        terms.append(d**2)
    return jnp.mean(jnp.stack(terms))


_CHANNEL_PAIRS = ((0, 1), (1, 2), (2, 0))


def loss_color(pred_nor: jax.Array, per_pixel: bool = False) -> jax.Array:
    """Gray-world prior: the channel means of the enhanced patch agree.

    With ``per_pixel`` the channel differences are taken pixel by pixel and
    averaged, which pushes every pixel towards gray.

    """
    if pred_nor.size == 0:
        raise DomainError("color loss needs a non-empty patch")
    pixels = pred_nor.reshape(-1, 3)
    if per_pixel:
        pair_sums = sum((pixels[:, p] - pixels[:, q]) ** 2 for p, q in _CHANNEL_PAIRS)
        return jnp.mean(pair_sums)
    means = jnp.mean(pixels, axis=0)
    return sum((means[p] - means[q]) ** 2 for p, q in _CHANNEL_PAIRS)


def loss_total(
    nerf: jax.Array,
    con: jax.Array,
    st: jax.Array,
    cc: jax.Array,
    weights: LossWeights,
) -> LossBreakdown:
    total = nerf + weights.lambda1 * con + weights.lambda2 * st + weights.lambda3 * cc
    return LossBreakdown(nerf=nerf, con=con, st=st, cc=cc, total=total)
