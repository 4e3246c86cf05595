"""Full-reference quality metrics and the per-segment color-consistency score.

All metrics operate on (H, W, 3) float arrays in [0, 1] and are computed in
double precision.  SSIM is the standard single-scale variant: 11x11 Gaussian
window (sigma 1.5), K1 = 0.01, K2 = 0.03, evaluated on Rec. 601 luma over
valid window positions and mean-pooled.  PSNR of identical images is capped at
100 dB.  NIQE and LPIPS need external statistics or pretrained networks and
are reported as ``n/a`` to keep the table shape stable.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

CSV_COLUMNS = ["image", "psnr_db", "ssim", "segment_color_error", "niqe", "lpips"]


def _check_pair(a, b, min_dim=1):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"image dims differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[-1] != 3:
        raise InputError(f"expected (H, W, 3) images, got {a.shape}")
    if min(a.shape[:2]) < min_dim:
        raise InputError(f"images must be at least {min_dim}px on each side, got {a.shape[:2]}")
    return a, b


def psnr(a, b):
    """Peak signal-to-noise ratio in dB for [0, 1] images; identical pairs cap at 100."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size, sigma):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _windowed_moments(x, kernel):
    """Means of x under the kernel at every valid window position."""
    size = kernel.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(x, (size, size))
    return np.tensordot(windows, kernel, axes=([2, 3], [0, 1]))


def ssim(a, b):
    """Single-scale structural similarity on luma, mean over valid windows."""
    a, b = _check_pair(a, b, min_dim=SSIM_WINDOW)
    xa = a @ LUMA_WEIGHTS
    xb = b @ LUMA_WEIGHTS
    kernel = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)

    mu_a = _windowed_moments(xa, kernel)
    mu_b = _windowed_moments(xb, kernel)
    var_a = _windowed_moments(xa * xa, kernel) - mu_a**2
    var_b = _windowed_moments(xb * xb, kernel) - mu_b**2
    cov = _windowed_moments(xa * xb, kernel) - mu_a * mu_b

    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def segment_color_error(enhanced, target, label_map):
    """Mean over segments of the L2 distance between per-segment mean colors."""
    a, b = _check_pair(enhanced, target)
    lab = np.asarray(label_map)
    if lab.shape != a.shape[:2]:
        raise InputError(f"label map dims {lab.shape} do not match image dims {a.shape[:2]}")
    errs = []
    for c in np.unique(lab):
        mask = lab == c
        diff = a[mask].mean(axis=0) - b[mask].mean(axis=0)
        errs.append(float(np.linalg.norm(diff)))
    return float(np.mean(errs))


@dataclass
class MetricsReport:
    per_image: list = field(default_factory=list)  # [(image_id, psnr, ssim, sce-or-None)]

    @property
    def psnr_mean(self):
        return float(np.mean([r[1] for r in self.per_image]))

    @property
    def ssim_mean(self):
        return float(np.mean([r[2] for r in self.per_image]))

    @property
    def segment_color_error_mean(self):
        vals = [r[3] for r in self.per_image if r[3] is not None]
        return float(np.mean(vals)) if vals else None


def evaluate_pairs(triples) -> MetricsReport:
    """triples: iterable of (image_id, enhanced, target, label_map-or-None)."""
    report = MetricsReport()
    for image_id, enhanced, target, label_map in triples:
        sce = segment_color_error(enhanced, target, label_map) if label_map is not None else None
        report.per_image.append((image_id, psnr(enhanced, target), ssim(enhanced, target), sce))
    if not report.per_image:
        raise InputError("no image pairs to evaluate")
    return report


def _fmt(value):
    return "n/a" if value is None else f"{value:.6f}"


def write_metrics_csv(report: MetricsReport, path):
    """One row per image plus an aggregate ``mean`` footer; fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for image_id, p, s, sce in report.per_image:
            writer.writerow([image_id, _fmt(p), _fmt(s), _fmt(sce), "n/a", "n/a"])
        writer.writerow(
            [
                "mean",
                _fmt(report.psnr_mean),
                _fmt(report.ssim_mean),
                _fmt(report.segment_color_error_mean),
                "n/a",
                "n/a",
            ]
        )
    return path
