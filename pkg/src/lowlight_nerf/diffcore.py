"""Reverse-mode gradients of scalar pipelines and their finite-difference check.

A pipeline is any function ``params -> scalar`` (or ``params -> (scalar, aux)``)
written with ``jax.numpy``. Parameters are nested dicts of arrays; their flat,
qualified names ("density__trunk_0__weight") come from ``dags.tree``.

"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import dags.tree as dt
import jax
import jax.numpy as jnp
import numpy as np

from lowlight_nerf.errors import NonFiniteError

if TYPE_CHECKING:
    from collections.abc import Callable

    ParamStore = dict[str, Any]
    GradStore = dict[str, Any]

logger = logging.getLogger(__name__)


def flat_params(tree: ParamStore) -> dict[str, Any]:
    return dt.flatten_to_qnames(tree)


def nested_params(flat: dict[str, Any]) -> ParamStore:
    return dt.unflatten_from_qnames(flat)


def first_non_finite(tree: ParamStore) -> str | None:
    for name, value in flat_params(tree).items():
        if not bool(jnp.all(jnp.isfinite(value))):
            return name
    return None


def _diagnose(pipeline: Callable, params: ParamStore, has_aux: bool) -> str:
    """Re-run the pipeline with NaN/Inf trapping to name the failing primitive."""
    try:
        with jax.debug_nans(True), jax.debug_infs(True):
            jax.value_and_grad(pipeline, has_aux=has_aux)(params)
    except FloatingPointError as error:
        return str(error).splitlines()[0]
    return "unknown operation"


def eval_loss_and_grads(
    pipeline: Callable,
    params: ParamStore,
    has_aux: bool = False,
) -> tuple[Any, GradStore]:
    """Loss and d(loss)/d(params) for every array of ``params``.

    With ``has_aux`` the pipeline returns ``(loss, aux)`` and the first element
    of the result is that pair.

    Raises
    ------
    NonFiniteError
        The loss or a gradient is NaN/Inf. The message names the primitive that
        produced it first.

    """
    value, grads = jax.value_and_grad(pipeline, has_aux=has_aux)(params)
    loss = value[0] if has_aux else value
    bad_grad = first_non_finite(grads)
    if not bool(jnp.isfinite(loss)) or bad_grad is not None:
        where = _diagnose(pipeline, params, has_aux)
        context = {"gradient": bad_grad} if bad_grad is not None else {}
        raise NonFiniteError(where, context)
    return value, grads


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    n_checked: int


def finite_difference_check(
    pipeline: Callable,
    params: ParamStore,
    epsilon: float = 1e-4,
    grads: GradStore | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences, entry by entry.

    The error of an entry is |analytic - fd| / max(1, |fd|); the report holds the
    largest one and where it occurred. Use 64-bit parameters. Pipelines with ReLU
    are only checked reliably away from the kink: an input within ``epsilon`` of
    zero makes the central difference straddle it.

    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if grads is None:
        _, grads = eval_loss_and_grads(pipeline, params)
    evaluate = jax.jit(pipeline)
    flat = {name: np.array(value) for name, value in flat_params(params).items()}
    flat_grads = {name: np.asarray(value) for name, value in flat_params(grads).items()}

    worst = (0.0, "", -1)
    n_checked = 0
    for name, base in flat.items():
        analytic = flat_grads[name].reshape(-1)
        probe = base.copy().reshape(-1)
        for index in range(probe.size):
            original = probe[index]
            probe[index] = original + epsilon
            f_plus = float(evaluate(_replace(flat, name, probe, base.shape)))
            probe[index] = original - epsilon
            f_minus = float(evaluate(_replace(flat, name, probe, base.shape)))
            probe[index] = original

            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            error = abs(float(analytic[index]) - numeric) / max(1.0, abs(numeric))
            n_checked += 1
            if error > worst[0] or worst[2] < 0:
                worst = (error, name, index)

    logger.info("gradient check: %d entries, max rel error %.3e in %s[%d]",
                n_checked, worst[0], worst[1], worst[2])
    return GradCheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_index=worst[2],
        n_checked=n_checked,
    )


def _replace(
    flat: dict[str, np.ndarray],
    name: str,
    values: np.ndarray,
    shape: tuple[int, ...],
) -> ParamStore:
    updated = dict(flat)
    updated[name] = values.reshape(shape)
    return nested_params({k: jnp.asarray(v) for k, v in updated.items()})
