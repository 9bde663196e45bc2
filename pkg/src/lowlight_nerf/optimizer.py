"""Adam and the stepped cosine learning-rate schedule."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, NamedTuple

import jax
import jax.numpy as jnp

from lowlight_nerf.diffcore import first_non_finite
from lowlight_nerf.errors import DomainError, NonFiniteError

if TYPE_CHECKING:
    from lowlight_nerf.config import TrainConfig

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


class AdamState(NamedTuple):
    mu: dict
    nu: dict
    step: int


def adam_init(params: dict) -> AdamState:
    zeros = jax.tree_util.tree_map(jnp.zeros_like, params)
    return AdamState(mu=zeros, nu=jax.tree_util.tree_map(jnp.zeros_like, params), step=0)


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """Cosine decay from lr0 to lr_min, held constant on plateaus of ``lr_step`` iterations."""
    if not 0 <= iteration <= max(cfg.iters, 0):
        raise DomainError(f"iteration {iteration} outside [0, {cfg.iters}]")
    if cfg.iters == 0:
        return cfg.lr0
    plateau = (iteration // cfg.lr_step) * cfg.lr_step
    if iteration == cfg.iters:
        plateau = cfg.iters
    progress = min(plateau / cfg.iters, 1.0)
    return cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + math.cos(math.pi * progress))


@jax.jit
def _update(
    params: dict,
    grads: dict,
    mu: dict,
    nu: dict,
    lr: float,
    correction1: float,
    correction2: float,
) -> tuple[dict, dict, dict]:
    mu = jax.tree_util.tree_map(lambda m, g: BETA1 * m + (1.0 - BETA1) * g, mu, grads)
    nu = jax.tree_util.tree_map(lambda v, g: BETA2 * v + (1.0 - BETA2) * g * g, nu, grads)
    params = jax.tree_util.tree_map(
        lambda p, m, v: p - lr * (m / correction1) / (jnp.sqrt(v / correction2) + EPSILON),
        params,
        mu,
        nu,
    )
    return params, mu, nu


def adam_step(
    params: dict, grads: dict, state: AdamState, lr: float
) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update (beta1 0.9, beta2 0.999, eps 1e-8)."""
    bad = first_non_finite(grads)
    if bad is not None:
        raise NonFiniteError(f"gradient of {bad}", {"adam_step": state.step + 1})
    step = state.step + 1
    params, mu, nu = _update(
        params,
        grads,
        state.mu,
        state.nu,
        lr,
        1.0 - BETA1**step,
        1.0 - BETA2**step,
    )
    return params, AdamState(mu=mu, nu=nu, step=step)
