"""Smoothness of the local concealing field as the convolution kernel grows.

For each kernel size and seed, trains on the synthetic low-light scene and
measures the total variation of the depth-averaged Omega map rendered at the
first held-out pose. The mean over seeds should fall as the kernel widens.
"""
import argparse
import dataclasses
import time
from datetime import datetime

import numpy as np

from experiment_setup import (
    FIELD_DEFAULTS,
    KERNEL_SEEDS,
    KERNEL_SIZES,
    TRAIN_DEFAULTS,
    MemoryTracker,
    checkpoint_hash,
    make_dataset,
    print_banner,
    reset_session_state,
    save_results,
)
from lowlight_nerf.evaluation import total_variation
from lowlight_nerf.geometry import SampleConfig
from lowlight_nerf.render import omega_map
from lowlight_nerf.train import train

KERNEL_ITERS = 1000


def run_kernel(kernel, seed, iters, size):
    print(f"Running kernel {kernel}x{kernel}, seed {seed}, {iters} iterations")
    reset_session_state()
    tracker = MemoryTracker()
    tracker.start_monitoring()

    try:
        spec, frames, held_out = make_dataset(seed, width=size, height=size)
        field_cfg = dataclasses.replace(FIELD_DEFAULTS, conv_kernel=kernel)
        train_cfg = dataclasses.replace(TRAIN_DEFAULTS, iters=iters, seed=seed)

        start = time.time()
        result = train(frames, field_cfg, train_cfg)
        train_time = time.time() - start

        sample_cfg = SampleConfig(n_samples=train_cfg.n_samples, t_near=spec.near, t_far=spec.far)
        omega = omega_map(result.checkpoint.params, field_cfg, sample_cfg, held_out[0]["camera"])
        tracker.stop_monitoring()

        tv = total_variation(omega)
        ckpt_hash = checkpoint_hash(result.checkpoint)
        print(f"  TV {tv:.6f}  mean Omega {omega.mean():.4f}  ({train_time:.1f}s)")
        print(f"  Checkpoint hash: {ckpt_hash}")
        return {
            "kernel": kernel,
            "seed": seed,
            "tv": tv,
            "omega_mean": float(omega.mean()),
            "execution_time": train_time,
            "checkpoint_hash": ckpt_hash,
            "peak_memory": tracker.peak_memory,
        }

    except Exception as e:
        print(f"  ERROR: {e}")
        tracker.stop_monitoring()
        return None


def summarize(runs):
    """Mean total variation per kernel size over the seeds that finished."""
    summary = {}
    for kernel in sorted({run["kernel"] for run in runs if run is not None}):
        values = [run["tv"] for run in runs if run is not None and run["kernel"] == kernel]
        summary[kernel] = float(np.mean(values))
    return summary


def is_decreasing(summary):
    values = [summary[k] for k in sorted(summary)]
    return all(b < a for a, b in zip(values, values[1:]))


def main_cli():
    """Main function for command line interface."""
    parser = argparse.ArgumentParser(description="Concealing-field smoothness vs kernel size")
    parser.add_argument("--kernels", type=int, nargs="+", default=list(KERNEL_SIZES))
    parser.add_argument("--seeds", type=int, nargs="+", default=list(KERNEL_SEEDS))
    parser.add_argument("--iters", type=int, default=KERNEL_ITERS)
    parser.add_argument("--size", type=int, default=64, help="image width and height")
    args = parser.parse_args()

    runs = []
    for kernel in args.kernels:
        print_banner(f"Kernel {kernel}x{kernel}")
        for seed in args.seeds:
            runs.append(run_kernel(kernel, seed, args.iters, args.size))
        print()

    summary = summarize(runs)
    results = {
        "metadata": {
            "timestamp": datetime.now().isoformat(),
            "experiment": "kernel",
            "kernels": args.kernels,
            "seeds": args.seeds,
            "iters": args.iters,
            "size": args.size,
        },
        "runs": runs,
        "mean_tv": {str(k): v for k, v in summary.items()},
        "decreasing": is_decreasing(summary),
    }
    filename = save_results(results, "kernel")

    print_banner("OMEGA MAP TOTAL VARIATION BY KERNEL SIZE", width=60)
    print(f"{'Kernel':<10}{'Mean TV':<14}{'Seeds':<10}")
    print("-" * 60)
    for kernel, tv in summary.items():
        finished = sum(1 for run in runs if run is not None and run["kernel"] == kernel)
        print(f"{kernel:<10}{tv:<14.6f}{finished:<10}")
    print("-" * 60)
    print(f"Monotonically decreasing: {'yes' if results['decreasing'] else 'no'}")
    print(f"Results saved to: {filename}")


if __name__ == "__main__":
    main_cli()
