"""Full-reference image metrics and directory evaluation reports."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import convolve2d

from lowlight_nerf.errors import DomainError, EmptyDatasetError, UnmatchedFilesError
from lowlight_nerf.images import list_images, read_image

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
LUMA = np.array([0.299, 0.587, 0.114])
REPORT_CSV = "report.csv"
SUMMARY_TXT = "summary.txt"


def _pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"images differ in shape: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1], capped at 99 dB."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def total_variation(img: np.ndarray) -> float:
    """Mean absolute difference between horizontally and vertically adjacent pixels."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim < 2 or min(img.shape[:2]) < 2:
        raise DomainError(f"total variation needs at least 2x2 pixels, got {img.shape}")
    dx = np.abs(np.diff(img, axis=1)).mean()
    dy = np.abs(np.diff(img, axis=0)).mean()
    return float(dx + dy)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img[..., :3] @ LUMA


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity of the luma channels, mean over all valid 11x11 windows."""
    a, b = _pair(a, b)
    x, y = to_gray(a), to_gray(b)
    if min(x.shape) < SSIM_WINDOW:
        raise DomainError(
            f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}"
        )
    window = gaussian_window()

    def filt(img: np.ndarray) -> np.ndarray:
        return convolve2d(img, window, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    var_x = filt(x * x) - mu_x**2
    var_y = filt(y * y) - mu_y**2
    cov = filt(x * y) - mu_x * mu_y
    score = ((2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    )
    return float(score.mean())


@dataclass
class EvalReport:
    """Per-image PSNR / SSIM of one pipeline (columns ``image``, ``psnr``, ``ssim``)."""

    label: str
    per_image: pd.DataFrame

    @property
    def mean_psnr(self) -> float:
        return float(self.per_image["psnr"].mean())

    @property
    def mean_ssim(self) -> float:
        return float(self.per_image["ssim"].mean())

    def table(self) -> pd.DataFrame:
        """Per-image rows followed by a ``mean`` row."""
        mean = pd.DataFrame(
            [{"image": "mean", "psnr": self.mean_psnr, "ssim": self.mean_ssim}]
        )
        out = pd.concat([self.per_image, mean], ignore_index=True)
        out.insert(0, "pipeline", self.label)
        return out

    def summary(self) -> str:
        lines = [
            "=" * 60,
            f"Evaluation: {self.label}",
            "=" * 60,
            f"{'image':<30} {'PSNR (dB)':>12} {'SSIM':>10}",
            "-" * 60,
        ]
        for row in self.per_image.itertuples(index=False):
            lines.append(f"{row.image:<30} {row.psnr:>12.3f} {row.ssim:>10.4f}")
        lines.append("-" * 60)
        lines.append(f"{'mean':<30} {self.mean_psnr:>12.3f} {self.mean_ssim:>10.4f}")
        return "\n".join(lines)

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / REPORT_CSV
        self.table().to_csv(csv_path, index=False)
        txt_path = out_dir / SUMMARY_TXT
        txt_path.write_text(self.summary() + "\n", encoding="utf-8")
        return csv_path, txt_path


def match_files(render_dir: str | Path, gt_dir: str | Path) -> list[tuple[Path, Path]]:
    """Pairs of images with the same stem in both directories."""
    renders = {path.stem: path for path in list_images(render_dir)}
    gts = {path.stem: path for path in list_images(gt_dir)}
    missing_in_render = sorted(set(gts) - set(renders))
    missing_in_gt = sorted(set(renders) - set(gts))
    if missing_in_render or missing_in_gt:
        raise UnmatchedFilesError(missing_in_render, missing_in_gt)
    if not renders:
        raise EmptyDatasetError(f"no images in {render_dir} or {gt_dir}")
    return [(renders[stem], gts[stem]) for stem in sorted(renders)]


def evaluate(
    render_dir: str | Path,
    gt_dir: str | Path,
    label: str = "lowlight-nerf",
    out_dir: str | Path | None = None,
) -> EvalReport:
    """Compare every rendered image with its ground truth namesake.

    With ``out_dir`` the report is written as ``report.csv`` and ``summary.txt``.

    """
    rows = []
    for render_path, gt_path in match_files(render_dir, gt_dir):
        render, gt = read_image(render_path), read_image(gt_path)
        rows.append({"image": render_path.stem, "psnr": psnr(render, gt), "ssim": ssim(render, gt)})
    per_image = pd.DataFrame(rows, columns=["image", "psnr", "ssim"])
    report = EvalReport(label=label, per_image=per_image)
    logger.info("%s: mean PSNR %.3f dB, mean SSIM %.4f over %d images",
                label, report.mean_psnr, report.mean_ssim, len(rows))
    if out_dir is not None:
        report.write(out_dir)
    return report
