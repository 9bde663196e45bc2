"""Radiance fields with concealing fields for low-light multi-view images."""

from __future__ import annotations

from lowlight_nerf.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from lowlight_nerf.config import RunConfig, TrainConfig, resolve_run_config
from lowlight_nerf.data import PosedImage, load_dataset
from lowlight_nerf.evaluation import evaluate, psnr, ssim, total_variation
from lowlight_nerf.field import FieldConfig, init_params
from lowlight_nerf.geometry import Camera, PatchCoords, Ray, SampleConfig
from lowlight_nerf.render import render_image, render_patch, render_rays
from lowlight_nerf.train import train

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "Checkpoint",
    "FieldConfig",
    "PatchCoords",
    "PosedImage",
    "Ray",
    "RunConfig",
    "SampleConfig",
    "TrainConfig",
    "__version__",
    "evaluate",
    "init_params",
    "load_checkpoint",
    "load_dataset",
    "psnr",
    "render_image",
    "render_patch",
    "render_rays",
    "resolve_run_config",
    "save_checkpoint",
    "ssim",
    "total_variation",
    "train",
]
