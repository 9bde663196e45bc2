"""
Shared configuration and utilities for the synthetic low-light experiments.

This module contains the scene and training defaults, dataset construction and
the session/memory helpers used by experiment_recovery.py and
experiment_kernel.py.
"""

import gc
import json
import os
from datetime import datetime

# One Eigen thread keeps repeated runs bit-identical; must precede jax.
os.environ.setdefault("XLA_FLAGS", "--xla_cpu_multi_thread_eigen=false")

import jax
import numpy as np

from lowlight_nerf._monitoring import MemoryTracker, checkpoint_hash, get_memory_usage_mb
from lowlight_nerf.config import TrainConfig
from lowlight_nerf.data import PosedImage
from lowlight_nerf.field import FieldConfig
from lowlight_nerf.synthetic import DarkenParams, darken, default_scene_spec, synth_scene

__all__ = [
    "MemoryTracker",
    "checkpoint_hash",
    "get_memory_usage_mb",
]


# =============================================================================
# SCENE CONFIGURATION
# =============================================================================

SCENE_DEFAULTS = {
    "n_blobs": 3,
    "n_cameras": 16,
    "width": 64,
    "height": 64,
}

# Per-sample concealing of the ground-truth darkening (compounds over N=64).
DARKEN_OMEGA = 0.88
DARKEN_SAMPLES = 64
TEST_EVERY = 8


# =============================================================================
# TRAINING CONFIGURATION
# =============================================================================

# Smaller than the FieldConfig defaults (4x128 trunk, 10/4 frequencies) so a
# 5000-iteration run fits on a desk CPU; 64x64 blob scenes need no more.
FIELD_DEFAULTS = FieldConfig(
    pos_enc_levels=6,
    dir_enc_levels=2,
    trunk_layers=4,
    trunk_width=64,
    skip_layer=2,
    n_samples=64,
)

TRAIN_DEFAULTS = TrainConfig(
    iters=5000,
    lr0=5e-4,
    lr_min=5e-6,
    lr_step=2500,
    patch_w=32,
    patch_h=32,
    eta=0.1,
    n_samples=64,
    log_every=250,
    checkpoint_every=5000,
)

KERNEL_SIZES = (1, 3, 7)
KERNEL_SEEDS = (0, 1, 2)


# =============================================================================
# UTILITY FUNCTIONS
# =============================================================================

def reset_session_state():
    """Drop compiled functions and collect garbage between experiment stages."""
    jax.clear_caches()
    gc.collect()


def make_dataset(seed, omega=DARKEN_OMEGA, **scene_overrides):
    """Synthesize a blob scene and split it into low-light train and held-out test views.

    Returns the training frames (low-light images) and, per held-out view, the
    low-light input and the normal-light ground truth.
    """
    options = {**SCENE_DEFAULTS, **scene_overrides}
    n_blobs = options.pop("n_blobs")
    spec = default_scene_spec(seed=seed, n_blobs=n_blobs, **options)
    scene = synth_scene(spec)
    lowlight = darken(scene, DarkenParams(omega=omega, n_samples=DARKEN_SAMPLES))

    train_frames, held_out = [], []
    for index, (camera, low, normal) in enumerate(
        zip(scene.cameras, lowlight, scene.images, strict=True)
    ):
        name = f"r_{index:03d}"
        if index % TEST_EVERY == 0:
            held_out.append({"name": name, "camera": camera, "lowlight": low, "normal": normal})
        else:
            train_frames.append(
                PosedImage(
                    image=low,
                    camera=camera,
                    name=name,
                    t_near=spec.near,
                    t_far=spec.far,
                )
            )
    return spec, train_frames, held_out


def save_results(results, prefix):
    """Write results next to the script as <prefix>_results_<timestamp>.json."""
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    filename = f"{prefix}_results_{timestamp}.json"
    with open(filename, "w") as f:
        json.dump(results, f, indent=2, default=_json_default)
    return filename


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def print_banner(title, width=60):
    print(f"\n{'=' * width}")
    print(title)
    print("=" * width)
