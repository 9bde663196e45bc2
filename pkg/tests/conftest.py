from __future__ import annotations

import os

# Single-threaded Eigen keeps repeated runs bit-identical; must precede jax.
os.environ.setdefault("XLA_FLAGS", "--xla_cpu_multi_thread_eigen=false")

from pathlib import Path

import jax
import pytest
import yaml

from lowlight_nerf.config import TrainConfig
from lowlight_nerf.data import PosedImage
from lowlight_nerf.field import FieldConfig
from lowlight_nerf.synthetic import default_scene_spec, synth_scene

jax.config.update("jax_enable_x64", True)

TEST_DATA = Path(__file__).parent / "test_data"

TINY_FIELD = FieldConfig(
    pos_enc_levels=2,
    dir_enc_levels=1,
    trunk_layers=2,
    trunk_width=8,
    skip_layer=1,
    n_samples=8,
)


def load_cases(name: str) -> dict:
    with open(TEST_DATA / f"{name}.yaml", encoding="utf-8") as file:
        return yaml.safe_load(file)


@pytest.fixture
def tiny_field() -> FieldConfig:
    return TINY_FIELD


@pytest.fixture
def tiny_train() -> TrainConfig:
    return TrainConfig(
        iters=4,
        lr0=1e-3,
        lr_min=1e-4,
        lr_step=2,
        patch_w=4,
        patch_h=4,
        n_samples=TINY_FIELD.n_samples,
        checkpoint_every=2,
        log_every=1,
    )


@pytest.fixture(scope="session")
def tiny_scene():
    spec = default_scene_spec(seed=0, n_cameras=4, width=8, height=8)
    return synth_scene(spec, n_samples=64)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_scene) -> list[PosedImage]:
    return [
        PosedImage(image=image, camera=camera, name=f"r_{index:03d}")
        for index, (camera, image) in enumerate(
            zip(tiny_scene.cameras, tiny_scene.images, strict=True)
        )
    ]
