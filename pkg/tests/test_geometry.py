from __future__ import annotations

import math

import jax
import numpy as np
import pytest
from conftest import load_cases
from scipy.stats import chisquare

from lowlight_nerf.errors import DomainError
from lowlight_nerf.geometry import (
    Camera,
    PatchCoords,
    Ray,
    SampleConfig,
    focal_from_fov,
    project_point,
    ray_for_pixel,
    rays_for_patch,
    ring_cameras,
    sample_depths,
    sample_patch,
)

CASES = load_cases("geometry")


def _translation(offset) -> np.ndarray:
    pose = np.eye(4)
    pose[:3, 3] = offset
    return pose


@pytest.mark.parametrize("case", CASES["midpoint_depths"])
def test_sample_depths_midpoints(case):
    ray = Ray(np.zeros(3), np.array([0.0, 0.0, -1.0]), case["t_near"], case["t_far"])
    cfg = SampleConfig(n_samples=case["n_samples"], t_near=case["t_near"], t_far=case["t_far"])
    np.testing.assert_allclose(sample_depths(ray, cfg), case["expected"], atol=1e-12)


@pytest.mark.parametrize("name", sorted(CASES["pixel_rays"]))
def test_ray_for_pixel(name):
    case = CASES["pixel_rays"][name]
    camera = Camera(case["width"], case["height"], case["focal"], _translation(case["translation"]))
    ray = ray_for_pixel(camera, case["px"], case["py"])
    np.testing.assert_allclose(ray.origin, case["origin"], atol=1e-12)
    np.testing.assert_allclose(ray.direction, case["direction"], atol=1e-12)
    assert abs(np.linalg.norm(ray.direction) - 1.0) < 1e-12


@pytest.mark.parametrize(("px", "py"), [(-1, 0), (0, -0.5), (100, 0), (0, 100)])
def test_ray_for_pixel_outside_image(px, py):
    camera = Camera(100, 100, 50.0, np.eye(4))
    with pytest.raises(DomainError):
        ray_for_pixel(camera, px, py)


def test_reprojection_recovers_pixel_center():
    rng = np.random.default_rng(3)
    for camera in ring_cameras(5, 4.0, 40, 30, 0.69, elevation=0.3):
        for _ in range(20):
            px, py = int(rng.integers(40)), int(rng.integers(30))
            ray = ray_for_pixel(camera, px, py)
            for t in (0.1, 2.0, 7.5):
                u, v = project_point(camera, ray.at(t))
                assert abs(u - (px + 0.5)) < 1e-4
                assert abs(v - (py + 0.5)) < 1e-4


def test_rays_for_patch_match_single_rays():
    camera = ring_cameras(3, 4.0, 12, 10, 0.69)[1]
    patch = PatchCoords(x0=3, y0=2, pw=5, ph=4)
    origins, directions = rays_for_patch(camera, patch)
    assert origins.shape == directions.shape == (4, 5, 3)
    for row in range(patch.ph):
        for col in range(patch.pw):
            ray = ray_for_pixel(camera, patch.x0 + col, patch.y0 + row)
            np.testing.assert_allclose(origins[row, col], ray.origin, atol=1e-12)
            np.testing.assert_allclose(directions[row, col], ray.direction, atol=1e-12)


def test_rays_for_patch_outside_image():
    camera = Camera(8, 8, 10.0, np.eye(4))
    with pytest.raises(DomainError):
        rays_for_patch(camera, PatchCoords(x0=5, y0=0, pw=4, ph=4))


def test_focal_from_right_angle_field_of_view():
    assert focal_from_fov(100, math.pi / 2) == pytest.approx(50.0, abs=1e-12)


def test_ring_camera_zero_sits_on_positive_z_looking_at_origin():
    camera = ring_cameras(4, 4.0, 8, 8, 0.69)[0]
    np.testing.assert_allclose(camera.position, [0.0, 0.0, 4.0], atol=1e-12)
    center = ray_for_pixel(camera, 3.5, 3.5)
    np.testing.assert_allclose(center.direction, [0.0, 0.0, -1.0], atol=1e-12)


@pytest.mark.parametrize(
    "pose",
    [
        np.diag([2.0, 1.0, 1.0, 1.0]),
        np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 1, 1]], dtype=float),
        np.eye(3),
    ],
)
def test_camera_rejects_invalid_pose(pose):
    with pytest.raises(DomainError):
        Camera(8, 8, 10.0, pose)


def test_camera_rejects_nonpositive_focal():
    with pytest.raises(DomainError):
        Camera(8, 8, 0.0, np.eye(4))


def test_ray_requires_unit_direction_and_ordered_bounds():
    with pytest.raises(DomainError):
        Ray(np.zeros(3), np.array([0.0, 0.0, -2.0]), 2.0, 6.0)
    with pytest.raises(DomainError):
        Ray(np.zeros(3), np.array([0.0, 0.0, -1.0]), 6.0, 2.0)


def test_stratified_depths_reproducible_from_seed():
    ray = Ray(np.zeros(3), np.array([0.0, 0.0, -1.0]), 0.0, 1.0)
    cfg = SampleConfig(n_samples=4, t_near=0.0, t_far=1.0, stratified=True, seed=11)
    np.testing.assert_array_equal(sample_depths(ray, cfg), sample_depths(ray, cfg))
    other = SampleConfig(n_samples=4, t_near=0.0, t_far=1.0, stratified=True, seed=12)
    assert not np.array_equal(sample_depths(ray, cfg), sample_depths(ray, other))


def test_stratified_depths_stay_in_their_bins():
    ray = Ray(np.zeros(3), np.array([0.0, 0.0, -1.0]), 2.0, 6.0)
    cfg = SampleConfig(n_samples=16, stratified=True)
    for seed in range(20):
        depths = np.asarray(sample_depths(ray, cfg, jax.random.PRNGKey(seed)))
        bins = np.floor((depths - cfg.t_near) / cfg.delta)
        np.testing.assert_array_equal(bins, np.arange(16))
        assert np.all(np.diff(depths) > 0)
        assert np.max(np.diff(depths)) <= 2 * cfg.delta
        assert cfg.t_near <= depths[0] and depths[-1] <= cfg.t_far


def test_midpoint_spacing_is_delta():
    ray = Ray(np.zeros(3), np.array([0.0, 0.0, -1.0]), 2.0, 6.0)
    cfg = SampleConfig(n_samples=64)
    np.testing.assert_allclose(np.diff(sample_depths(ray, cfg)), cfg.delta, atol=1e-12)


def test_sample_config_rejects_empty_range():
    with pytest.raises(DomainError):
        SampleConfig(n_samples=0)
    with pytest.raises(DomainError):
        SampleConfig(t_near=3.0, t_far=3.0)


def test_sample_patch_full_image_has_one_placement():
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert sample_patch(64, 64, 64, 64, rng) == PatchCoords(0, 0, 64, 64)


def test_sample_patch_positions_are_uniform():
    rng = np.random.default_rng(1)
    draws = [sample_patch(64, 64, 16, 16, rng) for _ in range(10_000)]
    counts = np.bincount([patch.x0 for patch in draws], minlength=49)
    assert len(counts) == 49
    assert chisquare(counts).pvalue > 1e-3
    assert all(patch.fits(64, 64) for patch in draws)


def test_sample_patch_reproducible_from_seed():
    first = [sample_patch(64, 48, 8, 8, np.random.default_rng(5)) for _ in range(3)]
    second = [sample_patch(64, 48, 8, 8, np.random.default_rng(5)) for _ in range(3)]
    assert first == second


def test_sample_patch_larger_than_image():
    with pytest.raises(DomainError):
        sample_patch(64, 64, 65, 16, np.random.default_rng(0))


def test_patch_needs_two_pixels_per_side():
    with pytest.raises(DomainError):
        PatchCoords(0, 0, 1, 4)
