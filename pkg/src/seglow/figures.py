"""Matplotlib figure renderers saved next to the delimited outputs."""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, body


def save_loss_curves(loss_csv, path):
    header, body = _read_csv(loss_csv)
    if not body:
        return None
    steps = [int(r[0]) for r in body]
    fig, ax = plt.subplots(figsize=(7, 4))
    for col, label in ((1, "recon"), (2, "hist"), (3, "adv"), (4, "total")):
        vals = [float(r[col]) for r in body]
        if any(v != 0.0 for v in vals):
            ax.plot(steps, vals, label=label, linewidth=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("training losses")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_validation_curve(val_csv, path):
    header, body = _read_csv(val_csv)
    if not body:
        return None
    steps = [int(r[0]) for r in body]
    psnr = [float(r[1]) for r in body]
    ssim = [float(r[2]) for r in body]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(steps, psnr, marker="o", markersize=3)
    ax1.set_xlabel("step")
    ax1.set_ylabel("PSNR (dB)")
    ax2.plot(steps, ssim, marker="o", markersize=3, color="tab:orange")
    ax2.set_xlabel("step")
    ax2.set_ylabel("SSIM")
    fig.suptitle("validation")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_ablation_figure(results, rows, seeds, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    xs = np.arange(len(rows))
    psnr = np.array([[m["psnr"] for m in results[row]] for row in rows])
    sce = np.array([[m["segment_color_error"] for m in results[row]] for row in rows])
    ax1.bar(xs, psnr.mean(axis=1), yerr=psnr.std(axis=1), capsize=3, color="tab:blue")
    ax1.set_xticks(xs, rows, rotation=20)
    ax1.set_ylabel("test PSNR (dB)")
    ax2.bar(xs, sce.mean(axis=1), yerr=sce.std(axis=1), capsize=3, color="tab:red")
    ax2.set_xticks(xs, rows, rotation=20)
    ax2.set_ylabel("segment color error")
    fig.suptitle(f"component study over {len(seeds)} seeds")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_metrics_figure(report, path):
    ids = [r[0] for r in report.per_image]
    psnr = [r[1] for r in report.per_image]
    ssim = [r[2] for r in report.per_image]
    xs = np.arange(len(ids))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(max(6, len(ids) * 0.25), 5), sharex=True)
    ax1.bar(xs, psnr, color="tab:blue")
    ax1.axhline(report.psnr_mean, color="k", linestyle="--", linewidth=1)
    ax1.set_ylabel("PSNR (dB)")
    ax2.bar(xs, ssim, color="tab:orange")
    ax2.axhline(report.ssim_mean, color="k", linestyle="--", linewidth=1)
    ax2.set_ylabel("SSIM")
    ax2.set_xlabel("image index")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_histogram_figure(hists_by_class, path):
    """hists_by_class: {class_id: (3, 256) array}."""
    n = len(hists_by_class)
    fig, axes = plt.subplots(n, 1, figsize=(7, 2.2 * n), sharex=True, squeeze=False)
    colors = ("tab:red", "tab:green", "tab:blue")
    for ax, (cid, hist) in zip(axes[:, 0], sorted(hists_by_class.items())):
        for ch in range(3):
            ax.plot(np.asarray(hist)[ch], color=colors[ch], linewidth=0.8, label="RGB"[ch])
        ax.set_ylabel(f"class {cid}")
    axes[0, 0].legend(ncol=3, fontsize=8)
    axes[-1, 0].set_xlabel("intensity bin")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
