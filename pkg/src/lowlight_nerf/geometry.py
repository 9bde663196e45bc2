"""Pinhole cameras, rays, depth samples and pixel patches.

Conventions follow the "transforms" pose files of the NeRF synthetic scenes: the
pose is camera-to-world, the camera looks along its local -z axis, local +y is up
on the image and image rows grow downwards. A pixel (px, py) is hit at its center
(px + 0.5, py + 0.5).

"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import jax
import jax.numpy as jnp
import numpy as np

from lowlight_nerf.errors import DomainError

if TYPE_CHECKING:
    from collections.abc import Sequence

ORTHONORMAL_TOLERANCE = 1e-5


@dataclass(frozen=True)
class Camera:
    width: int
    height: int
    focal: float
    pose: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        pose = np.asarray(self.pose, dtype=np.float64)
        if pose.shape != (4, 4):
            raise DomainError(f"pose must be 4x4, got {pose.shape}")
        if self.width < 1 or self.height < 1:
            raise DomainError(f"image size must be positive, got {self.width}x{self.height}")
        if not self.focal > 0:
            raise DomainError(f"focal must be positive, got {self.focal}")
        if not np.allclose(pose[3], [0.0, 0.0, 0.0, 1.0]):
            raise DomainError("last pose row must be [0, 0, 0, 1]")
        if orthonormality_error(pose[:3, :3]) > ORTHONORMAL_TOLERANCE:
            raise DomainError("pose rotation is not orthonormal")
        object.__setattr__(self, "pose", pose)

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.pose[:3, 3]


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self) -> None:
        if not self.t_near >= 0:
            raise DomainError(f"t_near must be >= 0, got {self.t_near}")
        if not self.t_far > self.t_near:
            raise DomainError(f"t_far ({self.t_far}) must exceed t_near ({self.t_near})")
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-6:
            raise DomainError("ray direction must be unit length")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class SampleConfig:
    """Uniform depth sampling between the near and far planes.

    ``delta`` is the bin width used by the compositing formula, also when the
    sample positions are jittered.

    """

    n_samples: int = 64
    t_near: float = 2.0
    t_far: float = 6.0
    stratified: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise DomainError(f"n_samples must be >= 1, got {self.n_samples}")
        if not self.t_far > self.t_near >= 0:
            raise DomainError(f"need 0 <= t_near < t_far, got [{self.t_near}, {self.t_far}]")

    @property
    def delta(self) -> float:
        return (self.t_far - self.t_near) / self.n_samples


@dataclass(frozen=True)
class PatchCoords:
    x0: int
    y0: int
    pw: int
    ph: int

    def __post_init__(self) -> None:
        if self.pw < 2 or self.ph < 2:
            raise DomainError(f"patch must be at least 2x2, got {self.pw}x{self.ph}")
        if self.x0 < 0 or self.y0 < 0:
            raise DomainError(f"patch origin must be non-negative, got ({self.x0}, {self.y0})")

    def fits(self, width: int, height: int) -> bool:
        return self.x0 + self.pw <= width and self.y0 + self.ph <= height


def orthonormality_error(rotation: np.ndarray) -> float:
    rotation = np.asarray(rotation, dtype=np.float64)
    return float(np.abs(rotation.T @ rotation - np.eye(3)).max())


def focal_from_fov(width: int, camera_angle_x: float) -> float:
    return 0.5 * width / math.tan(0.5 * camera_angle_x)


def _camera_directions(camera: Camera, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # u, v are image-plane coordinates (pixel centers already added).
    local = np.stack(
        [
            (u - 0.5 * camera.width) / camera.focal,
            -(v - 0.5 * camera.height) / camera.focal,
            -np.ones_like(u),
        ],
        axis=-1,
    )
    world = local @ camera.rotation.T
    return world / np.linalg.norm(world, axis=-1, keepdims=True)


def ray_for_pixel(
    camera: Camera,
    px: float,
    py: float,
    t_near: float = 2.0,
    t_far: float = 6.0,
) -> Ray:
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise DomainError(
            f"pixel ({px}, {py}) outside image of size {camera.width}x{camera.height}"
        )
    direction = _camera_directions(
        camera, np.asarray(px + 0.5), np.asarray(py + 0.5)
    )
    return Ray(
        origin=camera.position.copy(),
        direction=direction,
        t_near=t_near,
        t_far=t_far,
    )


def rays_for_patch(
    camera: Camera, patch: PatchCoords
) -> tuple[np.ndarray, np.ndarray]:
    """Origins and unit directions of all rays of a patch, each [ph, pw, 3]."""
    if not patch.fits(camera.width, camera.height):
        raise DomainError(
            f"patch {patch} does not fit into {camera.width}x{camera.height} image"
        )
    u, v = np.meshgrid(
        np.arange(patch.x0, patch.x0 + patch.pw, dtype=np.float64) + 0.5,
        np.arange(patch.y0, patch.y0 + patch.ph, dtype=np.float64) + 0.5,
    )
    directions = _camera_directions(camera, u, v)
    origins = np.broadcast_to(camera.position, directions.shape).copy()
    return origins, directions


def project_point(camera: Camera, point: Sequence[float]) -> tuple[float, float]:
    """Image-plane coordinates (u, v) of a world point in front of the camera."""
    local = camera.rotation.T @ (np.asarray(point, dtype=np.float64) - camera.position)
    if local[2] >= 0:
        raise DomainError("point is behind the camera")
    depth = -local[2]
    u = camera.focal * local[0] / depth + 0.5 * camera.width
    v = -camera.focal * local[1] / depth + 0.5 * camera.height
    return float(u), float(v)


def look_at_pose(
    eye: Sequence[float],
    target: Sequence[float] = (0.0, 0.0, 0.0),
    up: Sequence[float] = (0.0, 1.0, 0.0),
) -> np.ndarray:
    eye = np.asarray(eye, dtype=np.float64)
    backward = eye - np.asarray(target, dtype=np.float64)
    backward /= np.linalg.norm(backward)
    right = np.cross(np.asarray(up, dtype=np.float64), backward)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise DomainError("viewing direction is parallel to the up vector")
    right /= norm
    true_up = np.cross(backward, right)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = true_up
    pose[:3, 2] = backward
    pose[:3, 3] = eye
    return pose


def ring_cameras(
    n_cameras: int,
    radius: float,
    width: int,
    height: int,
    camera_angle_x: float,
    elevation: float = 0.0,
) -> list[Camera]:
    """Cameras evenly spaced on a horizontal circle, all looking at the origin.

    Camera 0 sits on the +z axis; the others follow counter-clockwise seen from
    above (+y).

    """
    focal = focal_from_fov(width, camera_angle_x)
    cameras = []
    for i in range(n_cameras):
        azimuth = 2.0 * math.pi * i / n_cameras
        eye = (
            radius * math.cos(elevation) * math.sin(azimuth),
            radius * math.sin(elevation),
            radius * math.cos(elevation) * math.cos(azimuth),
        )
        cameras.append(Camera(width, height, focal, look_at_pose(eye)))
    return cameras


def _bin_depths(
    t_near: float,
    t_far: float,
    n_samples: int,
    jitter: jax.Array | None,
    shape: tuple[int, ...],
) -> jax.Array:
    delta = (t_far - t_near) / n_samples
    index = jnp.arange(n_samples)
    if jitter is None:
        offsets = jnp.broadcast_to(index + 0.5, (*shape, n_samples))
    else:
        offsets = index + jitter
    return t_near + offsets * delta


def sample_depths(ray: Ray, cfg: SampleConfig, key: jax.Array | None = None) -> jax.Array:
    """Depths t_1 < ... < t_N along one ray.

    Midpoints of N equal bins, or one uniform draw per bin when ``cfg.stratified``.
    Without an explicit ``key`` the jitter is drawn from ``cfg.seed``.

    """
    jitter = None
    if cfg.stratified:
        if key is None:
            key = jax.random.PRNGKey(cfg.seed)
        jitter = jax.random.uniform(key, (cfg.n_samples,))
    return _bin_depths(ray.t_near, ray.t_far, cfg.n_samples, jitter, ())


def depths_for_rays(
    cfg: SampleConfig, shape: tuple[int, ...], key: jax.Array | None = None
) -> jax.Array:
    """Batched ``sample_depths`` for rays sharing the bounds of ``cfg``: [*shape, N]."""
    jitter = None
    if cfg.stratified:
        if key is None:
            key = jax.random.PRNGKey(cfg.seed)
        jitter = jax.random.uniform(key, (*shape, cfg.n_samples))
    return _bin_depths(cfg.t_near, cfg.t_far, cfg.n_samples, jitter, shape)


def sample_patch(
    image_w: int,
    image_h: int,
    pw: int,
    ph: int,
    rng: np.random.Generator,
) -> PatchCoords:
    if pw > image_w or ph > image_h:
        raise DomainError(f"patch {pw}x{ph} larger than image {image_w}x{image_h}")
    x0 = int(rng.integers(0, image_w - pw + 1))
    y0 = int(rng.integers(0, image_h - ph + 1))
    return PatchCoords(x0=x0, y0=y0, pw=pw, ph=ph)
