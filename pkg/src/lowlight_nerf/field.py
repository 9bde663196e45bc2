"""The learnable scene: density trunk, color head and the concealing fields.

Parameter tree (nested dict, leaves are arrays)::

    density/trunk_<i>/{weight, bias}   ReLU layers on the encoded position
    density/sigma/{weight, bias}       hidden -> raw density
    color/hidden/{weight, bias}        [hidden, encoded direction] -> color_width
    color/rgb/{weight, bias}           color_width -> raw RGB
    conceal/head/{weight, bias}        hidden -> one scalar per sample
    conceal/kernel/{weight, bias}      k x k smoothing over the pixel plane
    conceal/global_logits              one logit per depth index

All evaluators broadcast over leading axes, so a single point and a patch of
samples go through the same code.

"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import jax
import jax.numpy as jnp

from lowlight_nerf.errors import DomainError

GLOBAL_CONCEAL_INIT = 0.3


@dataclass(frozen=True)
class FieldConfig:
    pos_enc_levels: int = 10
    dir_enc_levels: int = 4
    trunk_layers: int = 4
    trunk_width: int = 128
    skip_layer: int = 3
    color_width: int | None = None
    conv_kernel: int = 3
    learnable_kernel: bool = True
    n_samples: int = 64

    def __post_init__(self) -> None:
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise DomainError(f"conv_kernel must be odd and >= 1, got {self.conv_kernel}")
        if self.trunk_layers < 1 or self.trunk_width < 1:
            raise DomainError("trunk_layers and trunk_width must be >= 1")
        if self.pos_enc_levels < 0 or self.dir_enc_levels < 0:
            raise DomainError("encoding levels must be >= 0")
        if self.color_width is not None and self.color_width < 1:
            raise DomainError("color_width must be >= 1")
        if self.n_samples < 1:
            raise DomainError("n_samples must be >= 1")

    @property
    def position_dim(self) -> int:
        return 3 + 6 * self.pos_enc_levels

    @property
    def direction_dim(self) -> int:
        return 3 + 6 * self.dir_enc_levels

    @property
    def head_width(self) -> int:
        return self.color_width or max(1, self.trunk_width // 2)

    def has_skip(self, layer: int) -> bool:
        return 0 < self.skip_layer < self.trunk_layers and layer == self.skip_layer


def positional_encode(v: jax.Array, levels: int) -> jax.Array:
    """[v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(L-1) pi v), cos(2^(L-1) pi v)]."""
    if levels < 0:
        raise DomainError(f"levels must be >= 0, got {levels}")
    v = jnp.asarray(v)
    parts = [v]
    for level in range(levels):
        scaled = (2.0**level) * math.pi * v
        parts.extend([jnp.sin(scaled), jnp.cos(scaled)])
    return jnp.concatenate(parts, axis=-1)


def _dense(layer: dict[str, jax.Array], x: jax.Array) -> jax.Array:
    return x @ layer["weight"] + layer["bias"]


def _uniform_layer(
    key: jax.Array, fan_in: int, fan_out: int, gain: float, dtype: Any
) -> dict[str, jax.Array]:
    bound = gain / math.sqrt(fan_in)
    weight = jax.random.uniform(
        key, (fan_in, fan_out), dtype=dtype, minval=-bound, maxval=bound
    )
    return {"weight": weight, "bias": jnp.zeros((fan_out,), dtype=dtype)}


def init_params(key: jax.Array, cfg: FieldConfig, dtype: Any = jnp.float32) -> dict:
    """Kaiming-uniform (fan-in) weights, zero biases, box-filter kernel, Theta_G = 0.3."""
    relu_gain = math.sqrt(6.0)
    keys = iter(jax.random.split(key, cfg.trunk_layers + 4))

    trunk = {}
    fan_in = cfg.position_dim
    for layer in range(cfg.trunk_layers):
        if cfg.has_skip(layer):
            fan_in += cfg.position_dim
        trunk[f"trunk_{layer}"] = _uniform_layer(
            next(keys), fan_in, cfg.trunk_width, relu_gain, dtype
        )
        fan_in = cfg.trunk_width
    trunk["sigma"] = _uniform_layer(next(keys), cfg.trunk_width, 1, 1.0, dtype)

    color = {
        "hidden": _uniform_layer(
            next(keys), cfg.trunk_width + cfg.direction_dim, cfg.head_width, relu_gain, dtype
        ),
        "rgb": _uniform_layer(next(keys), cfg.head_width, 3, 1.0, dtype),
    }

    k = cfg.conv_kernel
    conceal = {
        "head": _uniform_layer(next(keys), cfg.trunk_width, 1, 1.0, dtype),
        "kernel": {
            "weight": jnp.full((k, k), 1.0 / (k * k), dtype=dtype),
            "bias": jnp.zeros((1,), dtype=dtype),
        },
        "global_logits": jnp.full(
            (cfg.n_samples,),
            math.log(GLOBAL_CONCEAL_INIT / (1.0 - GLOBAL_CONCEAL_INIT)),
            dtype=dtype,
        ),
    }
    return {"density": trunk, "color": color, "conceal": conceal}


def away_from_kinks(params: dict) -> dict:
    """Copy of ``params`` in which every ReLU input is well above zero.

    ReLU layers keep 1% of their weights and get bias 0.5, the raw density bias
    becomes 1, and the smoothing kernel gets a small ramp so its entries differ.
    Central differences with steps far below 0.5 then never straddle a kink.

    """

    def shrink(layer: dict) -> dict:
        return {"weight": 0.01 * layer["weight"], "bias": jnp.full_like(layer["bias"], 0.5)}

    density = {name: shrink(layer) for name, layer in params["density"].items()}
    density["sigma"] = {**density["sigma"], "bias": jnp.ones_like(density["sigma"]["bias"])}
    kernel = params["conceal"]["kernel"]
    weight = kernel["weight"]
    ramp = 0.05 * jnp.arange(weight.size, dtype=weight.dtype).reshape(weight.shape)
    return {
        "density": density,
        "color": {**params["color"], "hidden": shrink(params["color"]["hidden"])},
        "conceal": {**params["conceal"], "kernel": {**kernel, "weight": weight + ramp}},
    }


def eval_density(
    params: dict, cfg: FieldConfig, point: jax.Array
) -> tuple[jax.Array, jax.Array]:
    """Density sigma = ReLU(raw) and the trunk's hidden feature vector."""
    encoded = positional_encode(point, cfg.pos_enc_levels)
    x = encoded
    for layer in range(cfg.trunk_layers):
        if cfg.has_skip(layer):
            x = jnp.concatenate([x, encoded], axis=-1)
        x = jax.nn.relu(_dense(params["density"][f"trunk_{layer}"], x))
    sigma = jax.nn.relu(_dense(params["density"]["sigma"], x))[..., 0]
    return sigma, x


def eval_color(
    params: dict, cfg: FieldConfig, hidden: jax.Array, direction: jax.Array
) -> jax.Array:
    encoded = positional_encode(direction, cfg.dir_enc_levels)
    encoded = jnp.broadcast_to(encoded, (*hidden.shape[:-1], encoded.shape[-1]))
    x = jnp.concatenate([hidden, encoded], axis=-1)
    x = jax.nn.relu(_dense(params["color"]["hidden"], x))
    return jax.nn.sigmoid(_dense(params["color"]["rgb"], x))


def smooth_patch(params: dict, cfg: FieldConfig, values: jax.Array) -> jax.Array:
    """Single-channel k x k convolution of each depth slice of a [ph, pw, N] block.

    Replicate padding keeps the output the size of the input; the kernel and bias
    are shared by all depth slices.

    """
    kernel = params["conceal"]["kernel"]["weight"]
    bias = params["conceal"]["kernel"]["bias"]
    if not cfg.learnable_kernel:
        kernel = jax.lax.stop_gradient(kernel)
        bias = jax.lax.stop_gradient(bias)
    pad = cfg.conv_kernel // 2
    slices = jnp.transpose(values, (2, 0, 1))[:, None]
    slices = jnp.pad(slices, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge")
    out = jax.lax.conv_general_dilated(
        slices,
        kernel[None, None].astype(slices.dtype),
        window_strides=(1, 1),
        padding="VALID",
        precision=jax.lax.Precision.HIGHEST,
    )
    return jnp.transpose(out[:, 0], (1, 2, 0)) + bias[0]


def eval_conceal_local(params: dict, cfg: FieldConfig, hidden_patch: jax.Array) -> jax.Array:
    """Local concealing field Omega in (0, 1) for a [ph, pw, N, W] block of features."""
    if hidden_patch.ndim != 4:
        raise DomainError(f"expected [ph, pw, N, W] features, got shape {hidden_patch.shape}")
    ph, pw = hidden_patch.shape[:2]
    if ph < 2 or pw < 2:
        raise DomainError(f"concealing field needs at least a 2x2 patch, got {ph}x{pw}")
    head = _dense(params["conceal"]["head"], hidden_patch)[..., 0]
    return jax.nn.sigmoid(smooth_patch(params, cfg, head))


def theta_global(params: dict) -> jax.Array:
    return jax.nn.sigmoid(params["conceal"]["global_logits"])
