"""The optimization loop.

Every iteration draws one training view and one contiguous patch of it, renders
the patch in low-light mode (which also yields the unconcealed color from the
same field evaluation) and takes one Adam step on the weighted total loss:
the reconstruction loss on the low-light prediction, the control loss on the
local concealing field, and the structure and color losses on the unconcealed
prediction.

"""

from __future__ import annotations

import csv
import logging
from functools import partial
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np
import pandas as pd

from lowlight_nerf.checkpoint import Checkpoint, save_checkpoint
from lowlight_nerf.diffcore import eval_loss_and_grads
from lowlight_nerf.errors import ConfigError, EmptyDatasetError, NonFiniteError
from lowlight_nerf.field import FieldConfig, init_params
from lowlight_nerf.geometry import SampleConfig, rays_for_patch, sample_patch
from lowlight_nerf.losses import (
    LossBreakdown,
    LossWeights,
    loss_color,
    loss_control,
    loss_nerf,
    loss_structure,
    loss_total,
)
from lowlight_nerf.optimizer import AdamState, adam_init, adam_step, lr_at
from lowlight_nerf.render import render_rays

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from lowlight_nerf.config import TrainConfig
    from lowlight_nerf.data import PosedImage

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "lr", "nerf", "con", "st", "cc", "total")
LOSS_LOG = "loss.csv"
FINAL_CHECKPOINT = "final.ckpt"


class TrainResult(NamedTuple):
    checkpoint: Checkpoint
    log: pd.DataFrame


def checkpoint_name(iteration: int) -> str:
    return f"ckpt_{iteration:06d}.ckpt"


def initial_checkpoint(field_cfg: FieldConfig, train_cfg: TrainConfig) -> Checkpoint:
    """Freshly initialized parameters and Adam state, iteration 0."""
    dtype = jnp.float64 if train_cfg.f64 else jnp.float32
    init_key, _ = jax.random.split(jax.random.PRNGKey(train_cfg.seed))
    params = init_params(init_key, field_cfg, dtype)
    rng = np.random.default_rng(train_cfg.seed)
    return Checkpoint(
        field_config=field_cfg,
        train_config=train_cfg,
        params=params,
        adam=adam_init(params),
        iteration=0,
        rng_state=rng.bit_generator.state,
    )


@partial(jax.jit, static_argnames=("field_cfg", "sample_cfg", "weights", "conceal"))
def patch_objective(
    params: dict,
    origins: jax.Array,
    directions: jax.Array,
    gt_low: jax.Array,
    key: jax.Array | None,
    field_cfg: FieldConfig,
    sample_cfg: SampleConfig,
    weights: LossWeights,
    conceal: bool,
) -> tuple[jax.Array, LossBreakdown]:
    """Total loss of one patch and its breakdown.

    Without ``conceal`` the patch is rendered in normal mode and only the
    reconstruction loss enters; the concealing parameters get zero gradients.

    """
    if not conceal:
        out = render_rays(params, field_cfg, sample_cfg, origins, directions, "normal", key)
        zero = jnp.zeros((), dtype=out.rgb.dtype)
        breakdown = loss_total(loss_nerf(out.rgb, gt_low), zero, zero, zero, weights)
        return breakdown.total, breakdown

    out = render_rays(params, field_cfg, sample_cfg, origins, directions, "lowlight", key)
    breakdown = loss_total(
        loss_nerf(out.rgb, gt_low),
        loss_control(out.buffers.omegas, weights.eta),
        loss_structure(out.rgb_normal, gt_low, weights.eta),
        loss_color(out.rgb_normal, weights.color_per_pixel),
        weights,
    )
    return breakdown.total, breakdown


def _open_log(run_dir: Path | None, start: int) -> Any:
    if run_dir is None:
        return None
    path = run_dir / LOSS_LOG
    kept: list[list[str]] = []
    if start > 0 and path.is_file():
        with open(path, newline="", encoding="utf-8") as file:
            rows = list(csv.reader(file))[1:]
        kept = [row for row in rows if row and int(row[0]) < start]
    file = open(path, "w", newline="", encoding="utf-8")  # noqa: SIM115
    writer = csv.writer(file)
    writer.writerow(LOG_COLUMNS)
    writer.writerows(kept)
    return file


def train(
    dataset: Sequence[PosedImage],
    field_cfg: FieldConfig,
    train_cfg: TrainConfig,
    run_dir: str | Path | None = None,
    resume_from: Checkpoint | None = None,
    on_log: Callable[[dict[str, float]], None] | None = None,
) -> TrainResult:
    """Fit ``field_cfg`` parameters to the low-light images of ``dataset``.

    With ``run_dir`` the loss log goes to ``loss.csv`` (one row per iteration) and
    checkpoints are written every ``checkpoint_every`` iterations and at the end.
    A run resumed from a checkpoint of the same configuration continues with the
    stored parameters, Adam moments and patch sampler state and reproduces the
    uninterrupted run.

    Raises
    ------
    EmptyDatasetError
        ``dataset`` has no frames.
    NonFiniteError
        A loss or gradient turned NaN/Inf; the context names iteration, view
        and patch.

    """
    if not dataset:
        raise EmptyDatasetError("training needs at least one posed image")
    if field_cfg.n_samples != train_cfg.n_samples:
        raise ConfigError(
            f"field has {field_cfg.n_samples} depth slots, training samples {train_cfg.n_samples}"
        )
    first = dataset[0]
    sample_cfg = SampleConfig(
        n_samples=train_cfg.n_samples,
        t_near=first.t_near,
        t_far=first.t_far,
        stratified=train_cfg.stratified,
        seed=train_cfg.seed,
    )
    weights = train_cfg.loss_weights

    ckpt = resume_from or initial_checkpoint(field_cfg, train_cfg)
    if ckpt.field_config != field_cfg:
        raise ConfigError("checkpoint was made with a different field config")
    params, adam = ckpt.params, ckpt.adam
    dtype = params["density"]["sigma"]["weight"].dtype
    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt.rng_state
    _, jitter_key = jax.random.split(jax.random.PRNGKey(train_cfg.seed))

    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    log_file = _open_log(run_dir, ckpt.iteration)
    writer = csv.writer(log_file) if log_file is not None else None

    rows: list[dict[str, float]] = []
    completed = ckpt.iteration
    try:
        for iteration in range(ckpt.iteration, train_cfg.iters):
            view_index = int(rng.integers(len(dataset)))
            view = dataset[view_index]
            patch = sample_patch(
                view.camera.width, view.camera.height, train_cfg.patch_w, train_cfg.patch_h, rng
            )
            origins, directions = rays_for_patch(view.camera, patch)
            gt_low = view.image[patch.y0 : patch.y0 + patch.ph, patch.x0 : patch.x0 + patch.pw]
            key = jax.random.fold_in(jitter_key, iteration) if train_cfg.stratified else None
            objective = partial(
                patch_objective,
                origins=jnp.asarray(origins, dtype=dtype),
                directions=jnp.asarray(directions, dtype=dtype),
                gt_low=jnp.asarray(gt_low, dtype=dtype),
                key=key,
                field_cfg=field_cfg,
                sample_cfg=sample_cfg,
                weights=weights,
                conceal=train_cfg.conceal,
            )
            context = {
                "iteration": iteration,
                "view": view_index,
                "patch": (patch.x0, patch.y0, patch.pw, patch.ph),
            }
            try:
                (_, breakdown), grads = eval_loss_and_grads(objective, params, has_aux=True)
                lr = lr_at(iteration, train_cfg)
                params, adam = adam_step(params, grads, adam, lr)
            except NonFiniteError as error:
                raise NonFiniteError(error.where, {**error.context, **context}) from error

            completed = iteration + 1
            row = {"iter": iteration, "lr": lr}
            row.update({name: float(value) for name, value in breakdown._asdict().items()})
            rows.append(row)
            if writer is not None:
                writer.writerow([row[column] for column in LOG_COLUMNS])
            if completed % train_cfg.log_every == 0:
                logger.info("iter %d total %.6f nerf %.6f", completed, row["total"], row["nerf"])
                if on_log is not None:
                    on_log(row)

            if run_dir is not None and completed % train_cfg.checkpoint_every == 0:
                save_checkpoint(
                    run_dir / checkpoint_name(completed),
                    _snapshot(field_cfg, train_cfg, params, adam, completed, rng),
                )
    finally:
        if log_file is not None:
            log_file.close()

    final = _snapshot(field_cfg, train_cfg, params, adam, completed, rng)
    if run_dir is not None:
        save_checkpoint(run_dir / FINAL_CHECKPOINT, final)
    return TrainResult(checkpoint=final, log=pd.DataFrame(rows, columns=list(LOG_COLUMNS)))


def _snapshot(
    field_cfg: FieldConfig,
    train_cfg: TrainConfig,
    params: dict,
    adam: AdamState,
    iteration: int,
    rng: np.random.Generator,
) -> Checkpoint:
    return Checkpoint(
        field_config=field_cfg,
        train_config=train_cfg,
        params=params,
        adam=adam,
        iteration=iteration,
        rng_state=rng.bit_generator.state,
    )
