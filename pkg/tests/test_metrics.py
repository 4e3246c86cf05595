import csv
import math

import numpy as np
import pytest

from seglow.errors import InputError
from seglow.metrics import (
    CSV_COLUMNS,
    evaluate_pairs,
    psnr,
    segment_color_error,
    ssim,
    write_metrics_csv,
)


def reference_psnr(a, b):
    """Scalar double-loop reimplementation."""
    total = 0.0
    n = 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            for c in range(3):
                total += (a[y, x, c] - b[y, x, c]) ** 2
                n += 1
    mse = total / n
    return 100.0 if mse == 0 else 10.0 * math.log10(1.0 / mse)


def reference_ssim(a, b):
    """Windowed scalar reference: explicit loops over valid window positions."""
    w = np.array([0.299, 0.587, 0.114])
    xa = a @ w
    xb = b @ w
    size, sigma = 11, 1.5
    coords = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2 * sigma**2))
    kern = np.outer(g, g)
    kern /= kern.sum()
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for y in range(a.shape[0] - size + 1):
        for x in range(a.shape[1] - size + 1):
            pa = xa[y : y + size, x : x + size]
            pb = xb[y : y + size, x : x + size]
            mu_a = (pa * kern).sum()
            mu_b = (pb * kern).sum()
            va = (pa * pa * kern).sum() - mu_a**2
            vb = (pb * pb * kern).sum() - mu_b**2
            cov = (pa * pb * kern).sum() - mu_a * mu_b
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
            )
    return float(np.mean(vals))


def test_psnr_identical_capped():
    img = np.random.default_rng(0).random((16, 16, 3))
    assert psnr(img, img.copy()) == 100.0


def test_psnr_uniform_difference_exact():
    a = np.full((8, 8, 3), 0.4)
    b = np.full((8, 8, 3), 0.5)
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-12)


def test_psnr_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a = rng.random((12, 12, 3))
        b = rng.random((12, 12, 3))
        assert psnr(a, b) == pytest.approx(reference_psnr(a, b), abs=1e-9)


def test_psnr_symmetry_and_monotonicity():
    rng = np.random.default_rng(2)
    a = rng.random((16, 16, 3))
    err = rng.random((16, 16, 3)) * 0.1
    assert psnr(a, a + err) == pytest.approx(psnr(a + err, a), abs=1e-12)
    assert psnr(a, a + 2 * err) < psnr(a, a + err)


def test_psnr_dim_mismatch():
    with pytest.raises(InputError):
        psnr(np.zeros((8, 8, 3)), np.zeros((4, 4, 3)))


def test_ssim_identical_is_one():
    img = np.random.default_rng(3).random((16, 16, 3))
    assert ssim(img, img.copy()) == pytest.approx(1.0, abs=1e-12)


def test_ssim_negative_image_below_one():
    img = np.random.default_rng(4).random((16, 16, 3))
    assert ssim(img, 1.0 - img) < 1.0


def test_ssim_matches_windowed_reference():
    rng = np.random.default_rng(5)
    for _ in range(3):
        a = rng.random((16, 16, 3))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-6)


def test_ssim_symmetry():
    rng = np.random.default_rng(6)
    a = rng.random((16, 16, 3))
    b = rng.random((16, 16, 3))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_window_size_guard():
    small = np.zeros((8, 8, 3))
    with pytest.raises(InputError):
        ssim(small, small)


def test_segment_color_error_basic():
    img = np.random.default_rng(7).random((16, 16, 3))
    lab = np.zeros((16, 16), dtype=int)
    assert segment_color_error(img, img.copy(), lab) == 0.0
    shifted = img.copy()
    shifted[..., 0] += 0.1
    assert segment_color_error(shifted, img, lab) == pytest.approx(0.1, abs=1e-12)


def test_segment_color_error_matches_accumulation_oracle():
    rng = np.random.default_rng(8)
    a = rng.random((16, 16, 3))
    b = rng.random((16, 16, 3))
    lab = rng.integers(0, 3, (16, 16))
    got = segment_color_error(a, b, lab)

    errs = []
    for c in np.unique(lab):
        suma = np.zeros(3)
        sumb = np.zeros(3)
        n = 0
        for y in range(16):
            for x in range(16):
                if lab[y, x] == c:
                    suma += a[y, x]
                    sumb += b[y, x]
                    n += 1
        errs.append(np.sqrt((((suma - sumb) / n) ** 2).sum()))
    assert got == pytest.approx(float(np.mean(errs)), abs=1e-12)


def test_segment_color_error_permutation_invariant():
    rng = np.random.default_rng(9)
    a = rng.random((16, 16, 3))
    b = rng.random((16, 16, 3))
    lab = np.zeros((16, 16), dtype=int)
    lab[:, 8:] = 1
    base = segment_color_error(a, b, lab)
    a2, b2 = a.copy(), b.copy()
    for c in (0, 1):
        mask = lab == c
        a2[mask] = a[mask][rng.permutation(mask.sum())]
        b2[mask] = b[mask][rng.permutation(mask.sum())]
    assert segment_color_error(a2, b2, lab) == pytest.approx(base, abs=1e-12)


def test_report_aggregates_and_csv(tmp_path):
    rng = np.random.default_rng(10)
    triples = []
    for i in range(3):
        t = rng.random((16, 16, 3))
        e = np.clip(t + rng.normal(0, 0.05, t.shape), 0, 1)
        lab = rng.integers(0, 2, (16, 16))
        triples.append((f"img{i}", e, t, lab))
    report = evaluate_pairs(triples)
    assert report.psnr_mean == pytest.approx(np.mean([r[1] for r in report.per_image]))

    path = write_metrics_csv(report, tmp_path / "metrics.csv")
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 5  # header + 3 images + mean footer
    assert rows[-1][0] == "mean"
    assert rows[1][4] == "n/a" and rows[1][5] == "n/a"
