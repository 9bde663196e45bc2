"""Posed image datasets in the "transforms" layout.

A dataset directory holds ``transforms_train.json`` / ``transforms_val.json`` /
``transforms_test.json`` (or a single ``transforms.json``) next to the images::

    {
      "camera_angle_x": 0.69,
      "near": 2.0, "far": 6.0,
      "frames": [
        {"file_path": "train/r_0.png", "normal_file_path": "train/r_0_normal.png",
         "transform_matrix": [[...], [...], [...], [0, 0, 0, 1]]}
      ]
    }

``file_path`` points at the low-light capture, ``normal_file_path`` (optional) at
the normal-light one. Paths without suffix get ``.png`` appended.

"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

import numpy as np

from lowlight_nerf.errors import (
    DataError,
    DomainError,
    EmptyDatasetError,
    MalformedPoseError,
    MissingFileError,
)
from lowlight_nerf.geometry import Camera, focal_from_fov, orthonormality_error
from lowlight_nerf.images import read_image, write_image

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

Split = Literal["train", "val", "test"]
Exposure = Literal["lowlight", "normal"]
SPLITS = ("train", "val", "test")
POSE_TOLERANCE = 1e-3
TEST_EVERY = 8
_PATH_KEYS = {"lowlight": "file_path", "normal": "normal_file_path"}


@dataclass(frozen=True)
class PosedImage:
    image: np.ndarray = field(repr=False)
    camera: Camera
    split: Split = "train"
    exposure_tag: Exposure = "lowlight"
    name: str = ""
    t_near: float = 2.0
    t_far: float = 6.0

    def __post_init__(self) -> None:
        image = np.asarray(self.image, dtype=np.float64)
        if image.shape != (self.camera.height, self.camera.width, 3):
            raise DomainError(
                f"image of shape {image.shape} does not match a "
                f"{self.camera.width}x{self.camera.height} camera"
            )
        object.__setattr__(self, "image", np.clip(image, 0.0, 1.0))


@dataclass(frozen=True)
class DatasetFrame:
    """One frame to be written by ``write_dataset``."""

    name: str
    split: Split
    pose: np.ndarray = field(repr=False)
    lowlight: np.ndarray = field(repr=False)
    normal: np.ndarray | None = field(default=None, repr=False)


def _manifests(directory: Path) -> list[tuple[Path, Split | None]]:
    per_split = [
        (directory / f"transforms_{split}.json", split)
        for split in SPLITS
        if (directory / f"transforms_{split}.json").is_file()
    ]
    if per_split:
        return per_split
    single = directory / "transforms.json"
    if single.is_file():
        return [(single, None)]
    raise MissingFileError(
        f"no transforms_{{train,val,test}}.json or transforms.json in {directory}"
    )


def _read_json(path: Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as file:
            content = json.load(file)
    except json.JSONDecodeError as error:
        raise DataError(f"cannot parse {path}: {error}") from error
    if not isinstance(content, dict):
        raise DataError(f"{path} must hold a JSON object")
    return content


def _checked_pose(raw: Any, where: str) -> np.ndarray:
    try:
        pose = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError) as error:
        raise MalformedPoseError(f"{where}: transform_matrix is not numeric") from error
    if pose.shape != (4, 4) or not np.all(np.isfinite(pose)):
        raise MalformedPoseError(f"{where}: transform_matrix must be a finite 4x4 matrix")
    if not np.allclose(pose[3], [0.0, 0.0, 0.0, 1.0], atol=POSE_TOLERANCE):
        raise MalformedPoseError(f"{where}: last row must be [0, 0, 0, 1]")
    if orthonormality_error(pose[:3, :3]) > POSE_TOLERANCE:
        raise MalformedPoseError(f"{where}: rotation is not orthonormal within {POSE_TOLERANCE}")
    # Snap to the nearest rotation; cameras require 1e-5.
    u, _, vt = np.linalg.svd(pose[:3, :3])
    clean = np.eye(4)
    clean[:3, :3] = u @ vt
    clean[:3, 3] = pose[:3, 3]
    return clean


def _image_path(directory: Path, frame: dict[str, Any], key: str, where: str) -> Path:
    if key not in frame:
        raise MissingFileError(f"{where}: frame has no '{key}'")
    path = directory / frame[key]
    if not path.suffix:
        path = path.with_suffix(".png")
    return path


def load_dataset(
    directory: str | Path,
    exposure: Exposure = "lowlight",
    splits: Sequence[Split] | None = None,
) -> list[PosedImage]:
    """All frames of a dataset directory, optionally restricted to ``splits``.

    The split of a frame comes from the manifest it is listed in; frames of a
    single ``transforms.json`` use their ``split`` entry, or else every 8th frame
    (starting with the first) goes to the test split.

    Raises
    ------
    MissingFileError
        No manifest, or a referenced image is missing.
    MalformedPoseError
        A transform is not 4x4 or its rotation is off by more than 1e-3.
    ImageDecodeError
        An image cannot be decoded.
    EmptyDatasetError
        The manifests list no frames (before filtering by ``splits``).

    """
    directory = Path(directory)
    if exposure not in _PATH_KEYS:
        raise DomainError(f"exposure must be 'lowlight' or 'normal', got {exposure!r}")
    key = _PATH_KEYS[exposure]

    jobs = []
    for manifest_path, manifest_split in _manifests(directory):
        manifest = _read_json(manifest_path)
        if "camera_angle_x" not in manifest:
            raise DataError(f"{manifest_path} has no camera_angle_x")
        angle = float(manifest["camera_angle_x"])
        near = float(manifest.get("near", 2.0))
        far = float(manifest.get("far", 6.0))
        for index, frame in enumerate(manifest.get("frames", [])):
            where = f"{manifest_path.name} frame {index}"
            if "transform_matrix" not in frame:
                raise MalformedPoseError(f"{where}: no transform_matrix")
            split = manifest_split or frame.get("split")
            if split is None:
                split = "test" if index % TEST_EVERY == 0 else "train"
            if split not in SPLITS:
                raise DataError(f"{where}: unknown split {split!r}")
            jobs.append(
                {
                    "pose": _checked_pose(frame["transform_matrix"], where),
                    "path": _image_path(directory, frame, key, where),
                    "name": Path(str(frame.get("file_path", frame.get(key, "")))).stem,
                    "split": split,
                    "angle": angle,
                    "near": near,
                    "far": far,
                }
            )
    if not jobs:
        raise EmptyDatasetError(f"no frames listed in {directory}")

    with ThreadPoolExecutor() as pool:
        images = list(pool.map(lambda job: read_image(job["path"]), jobs))

    frames = []
    for job, image in zip(jobs, images, strict=True):
        if splits is not None and job["split"] not in splits:
            continue
        height, width = image.shape[:2]
        camera = Camera(width, height, focal_from_fov(width, job["angle"]), job["pose"])
        frames.append(
            PosedImage(
                image=image,
                camera=camera,
                split=job["split"],
                exposure_tag=exposure,
                name=job["name"],
                t_near=job["near"],
                t_far=job["far"],
            )
        )
    logger.info("loaded %d %s frames from %s", len(frames), exposure, directory)
    return frames


def write_dataset(
    directory: str | Path,
    frames: Sequence[DatasetFrame],
    camera_angle_x: float,
    near: float = 2.0,
    far: float = 6.0,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write images and one ``transforms_<split>.json`` per split present in ``frames``."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise DataError(f"cannot create {directory}: {error}") from error

    manifests: dict[str, dict[str, Any]] = {}
    for frame in frames:
        if frame.split not in SPLITS:
            raise DataError(f"frame {frame.name}: unknown split {frame.split!r}")
        entry: dict[str, Any] = {
            "file_path": f"{frame.split}/{frame.name}.png",
            "transform_matrix": np.asarray(frame.pose, dtype=np.float64).tolist(),
        }
        write_image(directory / entry["file_path"], frame.lowlight)
        if frame.normal is not None:
            entry["normal_file_path"] = f"{frame.split}/{frame.name}_normal.png"
            write_image(directory / entry["normal_file_path"], frame.normal)
        manifest = manifests.setdefault(
            frame.split,
            {
                "camera_angle_x": camera_angle_x,
                "near": near,
                "far": far,
                **(extra or {}),
                "frames": [],
            },
        )
        manifest["frames"].append(entry)

    for split, manifest in manifests.items():
        with open(directory / f"transforms_{split}.json", "w", encoding="utf-8") as file:
            json.dump(manifest, file, indent=2)
    logger.info("wrote %d frames to %s", len(frames), directory)
    return directory
