from __future__ import annotations

import numpy as np
import pytest

from lowlight_nerf.errors import (
    DomainError,
    ImageDecodeError,
    MissingFileError,
    UnsupportedImageFormatError,
)
from lowlight_nerf.images import list_images, quantize, read_image, write_image


@pytest.mark.parametrize(
    ("value", "expected"),
    [(0.0, 0), (1.0, 255), (-0.3, 0), (1.7, 255), (0.6 / 255, 1), (0.4 / 255, 0), (0.5, 128)],
)
def test_quantize(value, expected):
    assert quantize(np.array([value]))[0] == expected


def test_png_round_trip_is_quantization(tmp_path):
    img = np.random.default_rng(0).uniform(size=(5, 7, 3))
    path = write_image(tmp_path / "sub" / "img.png", img)
    restored = read_image(path)
    assert restored.shape == (5, 7, 3)
    assert restored.dtype == np.float64
    np.testing.assert_array_equal(restored, quantize(img) / 255.0)


def test_byte_exact_images_survive_unchanged(tmp_path):
    img = np.random.default_rng(1).integers(0, 256, size=(4, 4, 3)) / 255.0
    np.testing.assert_array_equal(read_image(write_image(tmp_path / "a.png", img)), img)


def test_gray_images_are_read_as_rgb(tmp_path):
    gray = np.linspace(0.0, 1.0, 12).reshape(3, 4)
    restored = read_image(write_image(tmp_path / "gray.png", gray))
    assert restored.shape == (3, 4, 3)
    np.testing.assert_array_equal(restored[..., 0], restored[..., 2])


@pytest.mark.parametrize("name", ["img.jpg", "img"])
def test_lossy_or_unknown_formats_are_refused(tmp_path, name):
    with pytest.raises(UnsupportedImageFormatError):
        write_image(tmp_path / name, np.zeros((2, 2, 3)))


def test_wrong_shape(tmp_path):
    with pytest.raises(DomainError):
        write_image(tmp_path / "img.png", np.zeros((2, 2, 4)))


def test_missing_image(tmp_path):
    with pytest.raises(MissingFileError):
        read_image(tmp_path / "nope.png")


def test_undecodable_image(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"definitely not a png")
    with pytest.raises(ImageDecodeError):
        read_image(path)


def test_list_images_sorted_and_filtered(tmp_path):
    for name in ("b.png", "a.png", "c.bmp"):
        write_image(tmp_path / name, np.zeros((2, 2, 3)))
    (tmp_path / "notes.txt").write_text("x")
    (tmp_path / "sub.png").mkdir()
    assert [p.name for p in list_images(tmp_path)] == ["a.png", "b.png", "c.bmp"]


def test_list_images_of_missing_directory(tmp_path):
    with pytest.raises(MissingFileError):
        list_images(tmp_path / "nope")
