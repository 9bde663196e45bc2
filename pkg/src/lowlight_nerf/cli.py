"""Command line: ``lowlight-nerf {synth,train,render,eval,checkgrad,enhance}``.

Errors of the package end the process with one line ``error[<code>]: <message>``
on stderr and the exit code of the error class: 2 configuration, 3 data,
4 numeric.

"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path
from typing import TYPE_CHECKING, Any

from lowlight_nerf.errors import ConfigError, LowlightNerfError, NumericError

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

CHECKGRAD_TOLERANCE = 1e-5


def _banner(title: str) -> None:
    print(f"\n{'=' * 60}")
    print(title)
    print("=" * 60)


def _parse_patch(text: str) -> tuple[int, int]:
    """``"32"`` or ``"32x16"`` (width x height)."""
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError as error:
        msg = f"patch must look like 32 or 32x16, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from error
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) == 2:
        return parts[0], parts[1]
    raise argparse.ArgumentTypeError(f"patch must look like 32 or 32x16, got {text!r}")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML file with field/train/paths/run sections")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--eta", type=float, help="concealing degree (0.05 very dark, 0.1 dark)")
    parser.add_argument("--iters", type=int)
    parser.add_argument("--patch", type=_parse_patch, help="patch size, e.g. 32 or 32x16")
    parser.add_argument("--samples", type=int, help="samples per ray")
    parser.add_argument("--threads", type=int, help="compute threads; 1 is bit-deterministic")
    parser.add_argument("--f64", action="store_true", default=None, help="64-bit floats")
    parser.add_argument("--name", help="run directory name under runs/")
    parser.add_argument("--data", help="dataset directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowlight-nerf",
        description="Radiance fields with concealing fields for low-light multi-view images.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="write a synthetic blob dataset")
    synth.add_argument("--spec", help="YAML scene spec (scene/darken sections)")
    synth.add_argument("--out", required=True, help="output dataset directory")
    synth.add_argument("--seed", type=int, default=0, help="blob seed when no spec is given")
    synth.add_argument("--darken-mode", choices=["field_conceal", "image_gamma"])
    synth.add_argument("--omega", type=float)
    synth.add_argument("--theta", type=float)
    synth.add_argument("--gain", type=float)
    synth.add_argument("--gamma", type=float)
    synth.add_argument("--samples", type=int, default=64, help="samples per ray of the darkening")

    train = commands.add_parser("train", help="train on the low-light training views")
    _add_run_flags(train)
    train.add_argument("--resume", help="checkpoint to continue from")

    render = commands.add_parser("render", help="render the poses of a dataset")
    render.add_argument("--checkpoint", required=True)
    render.add_argument("--data", required=True, help="dataset directory with the poses")
    render.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    render.add_argument("--mode", default="normal", choices=["normal", "lowlight"])
    render.add_argument("--out", help="output directory (default: next to the checkpoint)")
    render.add_argument("--tile", type=int, default=32)
    render.add_argument("--threads", type=int)
    render.add_argument("--f64", action="store_true")

    evaluate = commands.add_parser("eval", help="PSNR/SSIM of renders against ground truth")
    evaluate.add_argument("--render-dir", required=True)
    evaluate.add_argument("--gt-dir", required=True)
    evaluate.add_argument("--label", default="lowlight-nerf")
    evaluate.add_argument("--out", help="report directory (default: the render directory)")

    checkgrad = commands.add_parser("checkgrad", help="finite-difference gradient check")
    _add_run_flags(checkgrad)
    checkgrad.add_argument("--epsilon", type=float, default=1e-4)
    checkgrad.add_argument("--tolerance", type=float, default=CHECKGRAD_TOLERANCE)

    enhance = commands.add_parser("enhance", help="apply a classical enhancement to a directory")
    enhance.add_argument("--in", dest="in_dir", required=True)
    enhance.add_argument("--out", required=True)
    enhance.add_argument("--method", required=True, choices=["he", "gamma", "gray_world"])
    enhance.add_argument("--gamma", type=float, default=0.5)
    enhance.add_argument("--gain", type=float, default=1.0)
    return parser


def configure_threads(threads: int | None) -> None:
    """Must run before the first jax computation."""
    if threads is None:
        return
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    if threads > 1:
        logger.info("running with the default thread pool; only --threads 1 pins it")
        return
    flags = os.environ.get("XLA_FLAGS", "")
    if "xla_cpu_multi_thread_eigen" not in flags:
        os.environ["XLA_FLAGS"] = f"{flags} --xla_cpu_multi_thread_eigen=false".strip()


def enable_x64(enabled: bool) -> None:
    if enabled:
        import jax

        jax.config.update("jax_enable_x64", True)


def run_overrides(args: argparse.Namespace) -> dict[str, dict[str, Any]]:
    train: dict[str, Any] = {
        "seed": args.seed,
        "eta": args.eta,
        "iters": args.iters,
        "n_samples": args.samples,
        "f64": args.f64,
    }
    if args.patch is not None:
        train["patch_w"], train["patch_h"] = args.patch
    return {
        "train": train,
        "field": {"n_samples": args.samples},
        "paths": {"data_dir": args.data},
        "run": {"name": args.name, "threads": args.threads},
    }


def cmd_synth(args: argparse.Namespace) -> int:
    from lowlight_nerf.data import DatasetFrame, write_dataset
    from lowlight_nerf.images import write_image
    from lowlight_nerf.synthetic import (
        DarkenParams,
        darken,
        default_scene_spec,
        load_scene_spec,
        save_scene_spec,
        synth_scene,
    )

    if args.spec is not None:
        spec, darken_params = load_scene_spec(args.spec)
    else:
        spec, darken_params = default_scene_spec(seed=args.seed), None
    overrides = {
        "mode": args.darken_mode,
        "omega": args.omega,
        "theta": args.theta,
        "gain": args.gain,
        "gamma": args.gamma,
    }
    base = darken_params or DarkenParams(n_samples=args.samples)
    darken_params = dataclasses.replace(
        base, **{k: v for k, v in overrides.items() if v is not None}
    )

    _banner(f"Synthesizing {len(spec.blobs)} blobs, {spec.n_cameras} views")
    start = time.time()
    scene = synth_scene(spec)
    lowlight = darken(scene, darken_params)
    frames = [
        DatasetFrame(
            name=f"r_{index:03d}",
            split="test" if index % 8 == 0 else "train",
            pose=camera.pose,
            lowlight=low,
            normal=normal,
        )
        for index, (camera, low, normal) in enumerate(
            zip(scene.cameras, lowlight, scene.images, strict=True)
        )
    ]
    out = Path(args.out)
    write_dataset(out, frames, spec.camera_angle_x, spec.near, spec.far)
    save_scene_spec(out / "scene_spec.yaml", spec, darken_params)
    for frame in frames:
        if frame.split == "test":
            write_image(out / "gt" / f"{frame.name}.png", frame.normal)
    print(f"  darkening: {darken_params.mode}")
    print(f"  wrote {len(frames)} frames to {out} in {time.time() - start:.2f}s")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from lowlight_nerf._monitoring import MemoryTracker, checkpoint_hash
    from lowlight_nerf.checkpoint import load_checkpoint
    from lowlight_nerf.config import resolve_run_config, write_run_config
    from lowlight_nerf.data import load_dataset
    from lowlight_nerf.train import LOSS_LOG, train

    cfg = resolve_run_config(args.config, run_overrides(args))
    if cfg.data_dir is None:
        raise ConfigError("no dataset given: use --data or paths.data_dir")
    configure_threads(cfg.threads)
    enable_x64(cfg.train.f64)

    run_dir = cfg.run_dir
    write_run_config(cfg, run_dir / "config.yaml")
    dataset = load_dataset(cfg.data_dir, "lowlight", splits=("train",))
    resume = load_checkpoint(args.resume) if args.resume else None

    _banner(f"Training run '{cfg.name}': {len(dataset)} views, {cfg.train.iters} iterations")
    print(f"  eta={cfg.train.eta} patch={cfg.train.patch_w}x{cfg.train.patch_h} "
          f"samples={cfg.train.n_samples} seed={cfg.train.seed}")
    print(f"{'iter':>8}{'lr':>12}{'nerf':>12}{'con':>12}{'st':>12}{'cc':>12}{'total':>12}")
    print("-" * 80)

    def report(row: dict[str, float]) -> None:
        print(f"{int(row['iter']) + 1:>8}{row['lr']:>12.3e}{row['nerf']:>12.6f}{row['con']:>12.6f}"
              f"{row['st']:>12.6f}{row['cc']:>12.6f}{row['total']:>12.6f}")

    start = time.time()
    with MemoryTracker() as tracker:
        result = train(dataset, cfg.field, cfg.train, run_dir, resume, on_log=report)
    print("-" * 80)
    print(f"  finished iteration {result.checkpoint.iteration} in {time.time() - start:.1f}s")
    print(f"  checkpoint hash: {checkpoint_hash(result.checkpoint)}")
    print(f"  loss log: {run_dir / LOSS_LOG}")
    print(f"  {tracker.report()}")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    import numpy as np

    configure_threads(args.threads)
    enable_x64(args.f64)

    from lowlight_nerf.checkpoint import load_checkpoint
    from lowlight_nerf.data import load_dataset
    from lowlight_nerf.geometry import SampleConfig
    from lowlight_nerf.images import write_image
    from lowlight_nerf.render import render_image

    ckpt = load_checkpoint(args.checkpoint)
    splits = None if args.split == "all" else (args.split,)
    frames = load_dataset(args.data, "lowlight", splits=splits)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / f"renders_{args.mode}"

    _banner(f"Rendering {len(frames)} views ({args.mode}) from iteration {ckpt.iteration}")
    for frame in frames:
        sample_cfg = SampleConfig(
            n_samples=ckpt.train_config.n_samples, t_near=frame.t_near, t_far=frame.t_far
        )
        image = render_image(
            ckpt.params, ckpt.field_config, sample_cfg, frame.camera, args.mode, args.tile
        )
        path = write_image(out / f"{frame.name}.png", image)
        print(f"  {path}  mean {np.mean(image):.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from lowlight_nerf.evaluation import evaluate

    report = evaluate(args.render_dir, args.gt_dir, args.label, args.out or args.render_dir)
    print(report.summary())
    return 0


def cmd_checkgrad(args: argparse.Namespace) -> int:
    import jax
    import jax.numpy as jnp
    import numpy as np

    from lowlight_nerf.config import resolve_run_config
    from lowlight_nerf.diffcore import finite_difference_check
    from lowlight_nerf.field import away_from_kinks, init_params
    from lowlight_nerf.geometry import PatchCoords, SampleConfig, rays_for_patch, ring_cameras
    from lowlight_nerf.train import patch_objective

    overrides = run_overrides(args)
    if args.config is None:
        # A field small enough to check every entry in seconds.
        overrides["field"].update(trunk_width=8, pos_enc_levels=2, dir_enc_levels=1)
        if args.samples is None:
            overrides["train"]["n_samples"] = overrides["field"]["n_samples"] = 3
        if args.patch is None:
            overrides["train"]["patch_w"] = overrides["train"]["patch_h"] = 3
    cfg = resolve_run_config(args.config, overrides)
    configure_threads(cfg.threads)
    enable_x64(True)

    camera = ring_cameras(1, 4.0, 16, 16, 0.6911112070083618)[0]
    patch = PatchCoords(
        x0=(16 - cfg.train.patch_w) // 2,
        y0=(16 - cfg.train.patch_h) // 2,
        pw=cfg.train.patch_w,
        ph=cfg.train.patch_h,
    )
    origins, directions = rays_for_patch(camera, patch)
    rng = np.random.default_rng(cfg.train.seed)
    gt_low = rng.uniform(0.0, 0.3, size=(patch.ph, patch.pw, 3))
    params = away_from_kinks(
        init_params(jax.random.PRNGKey(cfg.train.seed), cfg.field, jnp.float64)
    )
    sample_cfg = SampleConfig(n_samples=cfg.train.n_samples)

    def pipeline(p: dict) -> jax.Array:
        total, _ = patch_objective(
            p,
            jnp.asarray(origins),
            jnp.asarray(directions),
            jnp.asarray(gt_low),
            None,
            cfg.field,
            sample_cfg,
            cfg.train.loss_weights,
            cfg.train.conceal,
        )
        return total

    _banner(
        f"Gradient check: {patch.pw}x{patch.ph} patch, N={sample_cfg.n_samples}, "
        f"width {cfg.field.trunk_width}, epsilon {args.epsilon}"
    )
    start = time.time()
    report = finite_difference_check(pipeline, params, epsilon=args.epsilon)
    print(f"  entries checked:    {report.n_checked}")
    print(f"  max relative error: {report.max_rel_error:.3e}")
    print(f"  worst parameter:    {report.worst_param}[{report.worst_index}]")
    print(f"  time:               {time.time() - start:.1f}s")
    if report.max_rel_error >= args.tolerance:
        raise NumericError(
            f"gradient check failed: {report.max_rel_error:.3e} >= {args.tolerance:.0e} "
            f"in {report.worst_param}"
        )
    return 0


def cmd_enhance(args: argparse.Namespace) -> int:
    from lowlight_nerf.baselines import enhance_directory

    written = enhance_directory(
        args.in_dir, args.out, args.method, gamma=args.gamma, gain=args.gain
    )
    print(f"  {args.method}: wrote {len(written)} images to {args.out}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "render": cmd_render,
    "eval": cmd_eval,
    "checkgrad": cmd_checkgrad,
    "enhance": cmd_enhance,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except LowlightNerfError as error:
        print(error.one_line(), file=sys.stderr)
        return error.exit_code


if __name__ == "__main__":
    sys.exit(main())
