"""Synthetic blob scenes with analytic ground truth, and low-light synthesis.

The density of a scene is a sum of isotropic gaussian blobs, its color the
density-weighted blend of the blob colors. Normal-light views are rendered by
the reference compositor at 256 samples per ray.

"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml

from lowlight_nerf.errors import ConfigError, DomainError, MissingFileError
from lowlight_nerf.geometry import Camera, PatchCoords, rays_for_patch, ring_cameras
from lowlight_nerf.oracle import oracle_render_rays

GT_SAMPLES = 256
BLENDER_CAMERA_ANGLE_X = 0.6911112070083618


@dataclass(frozen=True)
class Blob:
    center: tuple[float, float, float]
    radius: float
    peak_density: float
    color: tuple[float, float, float]

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise DomainError(f"blob radius must be positive, got {self.radius}")
        if not self.peak_density > 0:
            raise DomainError(f"peak_density must be positive, got {self.peak_density}")
        if len(self.center) != 3 or len(self.color) != 3:
            raise DomainError("blob center and color need three components")
        if not all(0.0 <= c <= 1.0 for c in self.color):
            raise DomainError(f"blob color must lie in [0, 1], got {self.color}")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    blobs: tuple[Blob, ...] = ()
    bounds: float = 1.0
    n_cameras: int = 16
    width: int = 64
    height: int = 64
    radius: float = 4.0
    elevation: float = 0.0
    camera_angle_x: float = BLENDER_CAMERA_ANGLE_X
    near: float = 2.0
    far: float = 6.0
    seed: int = 0

    def __post_init__(self) -> None:
        for blob in self.blobs:
            if max(abs(c) for c in blob.center) > self.bounds:
                raise DomainError(
                    f"blob center {blob.center} outside [-{self.bounds}, {self.bounds}]^3"
                )
        if self.n_cameras < 1 or self.width < 2 or self.height < 2:
            raise DomainError("need at least one camera and 2x2 images")
        if not self.far > self.near >= 0:
            raise DomainError(f"need 0 <= near < far, got [{self.near}, {self.far}]")


def default_scene_spec(seed: int = 0, n_blobs: int = 3, **overrides: Any) -> SyntheticSceneSpec:
    """Randomly placed blobs inside the central half of the unit cube."""
    rng = np.random.default_rng(seed)
    blobs = tuple(
        Blob(
            center=tuple(float(c) for c in rng.uniform(-0.5, 0.5, size=3)),
            radius=float(rng.uniform(0.2, 0.35)),
            peak_density=float(rng.uniform(20.0, 40.0)),
            color=tuple(float(c) for c in rng.uniform(0.2, 1.0, size=3)),
        )
        for _ in range(n_blobs)
    )
    return SyntheticSceneSpec(blobs=blobs, seed=seed, **overrides)


@dataclass
class SyntheticScene:
    spec: SyntheticSceneSpec
    cameras: list[Camera]
    images: list[np.ndarray] = field(repr=False)

    def density(self, points: np.ndarray) -> np.ndarray:
        return sum(self._blob_densities(points), np.zeros(np.shape(points)[:-1]))

    def color(self, points: np.ndarray) -> np.ndarray:
        parts = self._blob_densities(points)
        total = sum(parts, np.zeros(np.shape(points)[:-1]))
        weighted = sum(
            (
                p[..., None] * np.asarray(blob.color)
                for p, blob in zip(parts, self.spec.blobs, strict=True)
            ),
            np.zeros((*np.shape(points)[:-1], 3)),
        )
        safe = np.where(total > 0, total, 1.0)
        return np.where(total[..., None] > 0, weighted / safe[..., None], 0.0)

    def _blob_densities(self, points: np.ndarray) -> list[np.ndarray]:
        points = np.asarray(points, dtype=np.float64)
        return [
            blob.peak_density
            * np.exp(
                -np.sum((points - np.asarray(blob.center)) ** 2, axis=-1)
                / (2.0 * blob.radius**2)
            )
            for blob in self.spec.blobs
        ]

    def render(
        self, camera: Camera, n_samples: int = GT_SAMPLES, conceal: float = 1.0
    ) -> np.ndarray:
        origins, directions = rays_for_patch(
            camera, PatchCoords(0, 0, camera.width, camera.height)
        )
        return oracle_render_rays(
            self.density,
            self.color,
            origins,
            directions,
            self.spec.near,
            self.spec.far,
            n_samples,
            conceal,
        )


def synth_scene(spec: SyntheticSceneSpec, n_samples: int = GT_SAMPLES) -> SyntheticScene:
    cameras = ring_cameras(
        spec.n_cameras,
        spec.radius,
        spec.width,
        spec.height,
        spec.camera_angle_x,
        spec.elevation,
    )
    scene = SyntheticScene(spec=spec, cameras=cameras, images=[])
    scene.images = [scene.render(camera, n_samples) for camera in cameras]
    return scene


@dataclass(frozen=True)
class DarkenParams:
    """Low-light synthesis.

    ``field_conceal`` re-renders the scene with the uniform per-sample factor
    ``omega * theta`` in the transmittance; ``image_gamma`` maps each pixel to
    ``gain * x ** gamma``.

    """

    mode: Literal["field_conceal", "image_gamma"] = "field_conceal"
    omega: float = 0.88
    theta: float = 1.0
    n_samples: int = GT_SAMPLES
    gain: float = 0.2
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in ("field_conceal", "image_gamma"):
            raise ConfigError(f"unknown darken mode {self.mode!r}")
        if not (0 < self.omega <= 1 and 0 < self.theta <= 1):
            raise ConfigError("omega and theta must lie in (0, 1]")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if not (self.gain >= 0 and self.gamma > 0):
            raise ConfigError("need gain >= 0 and gamma > 0")


def gamma_darken(img: np.ndarray, gain: float, gamma: float) -> np.ndarray:
    if gain > 1:
        warnings.warn(
            f"darkening gain {gain} > 1 brightens; output is clamped to [0, 1]", stacklevel=2
        )
    return np.clip(gain * np.asarray(img, dtype=np.float64) ** gamma, 0.0, 1.0)


def darken(scene: SyntheticScene, params: DarkenParams) -> list[np.ndarray]:
    """Low-light counterparts of ``scene.images``."""
    if params.mode == "image_gamma":
        return [gamma_darken(img, params.gain, params.gamma) for img in scene.images]
    factor = params.omega * params.theta
    return [scene.render(camera, params.n_samples, factor) for camera in scene.cameras]


def scene_spec_to_dict(spec: SyntheticSceneSpec, darken_params: DarkenParams | None = None) -> dict:
    content: dict[str, Any] = {"scene": dataclasses.asdict(spec)}
    content["scene"]["blobs"] = [
        {
            "center": list(blob.center),
            "radius": blob.radius,
            "peak_density": blob.peak_density,
            "color": list(blob.color),
        }
        for blob in spec.blobs
    ]
    if darken_params is not None:
        content["darken"] = dataclasses.asdict(darken_params)
    return content


def save_scene_spec(
    path: str | Path, spec: SyntheticSceneSpec, darken_params: DarkenParams | None = None
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        yaml.safe_dump(scene_spec_to_dict(spec, darken_params), file, sort_keys=False)
    return path


def load_scene_spec(path: str | Path) -> tuple[SyntheticSceneSpec, DarkenParams | None]:
    """Scene and darkening parameters from a YAML file.

    The ``scene`` section takes the fields of ``SyntheticSceneSpec``; when it has
    no ``blobs`` entry, blobs are drawn from ``seed`` (``n_blobs`` of them,
    default 3).

    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"scene spec not found: {path}")
    with open(path, encoding="utf-8") as file:
        content = yaml.safe_load(file) or {}
    scene = dict(content.get("scene") or {})
    try:
        if "blobs" in scene:
            scene["blobs"] = tuple(
                Blob(
                    center=tuple(float(c) for c in blob["center"]),
                    radius=float(blob["radius"]),
                    peak_density=float(blob["peak_density"]),
                    color=tuple(float(c) for c in blob["color"]),
                )
                for blob in scene["blobs"]
            )
            spec = SyntheticSceneSpec(**scene)
        else:
            n_blobs = int(scene.pop("n_blobs", 3))
            seed = int(scene.pop("seed", 0))
            spec = default_scene_spec(seed=seed, n_blobs=n_blobs, **scene)
        darken_params = DarkenParams(**content["darken"]) if content.get("darken") else None
    except (KeyError, TypeError, DomainError) as error:
        raise ConfigError(f"invalid scene spec {path}: {error}") from error
    return spec, darken_params
