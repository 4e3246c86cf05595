"""Command-line interface: dataset generation, training, inference, evaluation,
gradient checks, component studies, and histogram inspection.

Report-producing commands write delimited (CSV) tables and render the matching
matplotlib figures next to them.  Every failure class exits with its own code:
usage errors 2, bad inputs 3, bad configuration 4, corrupt data files 5,
training aborts 6, and failed gradient checks 1.
"""

import sys
from dataclasses import fields
from pathlib import Path

import click
import numpy as np
import torch

from . import figures, gradcheck
from .data import (
    DatasetConfig,
    DegradeConfig,
    SceneConfig,
    build_dataset,
    load_dataset,
    save_dataset,
)
from .errors import InputError, SeglowError
from .histogram import segment_histograms
from .metrics import evaluate_pairs, write_metrics_csv
from .nets import build_enhancer, make_provider
from .trainer import (
    TrainConfig,
    ablate,
    config_from_checkpoint,
    load_checkpoint,
    parse_config,
    train,
    _make_enhancer_config,
    _prepare_samples,
)


@click.group()
def cli():
    """Segmentation-guided low-light image enhancement toolkit."""


# ------------------------------------------------------------------ generate-data


@cli.command("generate-data")
@click.option("--out", required=True, type=click.Path(), help="Dataset directory to create.")
@click.option("--train", "train_n", default=400, show_default=True)
@click.option("--val", "val_n", default=50, show_default=True)
@click.option("--test", "test_n", default=50, show_default=True)
@click.option("--height", default=64, show_default=True)
@click.option("--width", default=64, show_default=True)
@click.option("--classes", default=4, show_default=True)
@click.option("--texture-sigma", default=0.02, show_default=True)
@click.option("--color-min", default=0.05, show_default=True)
@click.option("--color-max", default=0.95, show_default=True)
@click.option("--gamma-min", default=2.0, show_default=True)
@click.option("--gamma-max", default=4.0, show_default=True)
@click.option("--scale-min", default=0.10, show_default=True)
@click.option("--scale-max", default=0.40, show_default=True)
@click.option("--noise-sigma", default=0.01, show_default=True)
@click.option("--seed", default=0, show_default=True)
def generate_data_cmd(out, train_n, val_n, test_n, height, width, classes, texture_sigma,
                      color_min, color_max, gamma_min, gamma_max, scale_min, scale_max,
                      noise_sigma, seed):
    """Generate a synthetic paired low/normal dataset with exact segmentation."""
    config = DatasetConfig(
        scene=SceneConfig(height=height, width=width, class_count=classes,
                          texture_sigma=texture_sigma, color_range=(color_min, color_max)),
        degrade=DegradeConfig(
            gamma_range=(gamma_min, gamma_max),
            scale_range=(scale_min, scale_max),
            noise_sigma=noise_sigma,
        ),
        train=train_n,
        val=val_n,
        test=test_n,
        master_seed=seed,
    )
    save_dataset(out, build_dataset(config))
    click.echo(f"wrote {train_n + val_n + test_n} pairs to {out}")


# ------------------------------------------------------------------ train


def _config_options(fn):
    for f in reversed(fields(TrainConfig)):
        flag = "--" + f.name.replace("_", "-")
        fn = click.option(flag, f.name, default=None, help=f"Override config key {f.name}.")(fn)
    return fn


@cli.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="key=value config file.")
@click.option("--resume", "resume_from", type=click.Path(exists=True), default=None,
              help="Checkpoint to resume from.")
@_config_options
def train_cmd(config_path, resume_from, **overrides):
    """Train the enhancer; flags mirror config-file keys and take precedence."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "data_root" not in overrides and config_path is None:
        import os

        env_root = os.environ.get("SEGLOW_DATA_ROOT")
        if env_root:
            overrides["data_root"] = env_root
    config = parse_config(config_path, overrides)
    result = train(config, resume_from=resume_from)
    click.echo(
        f"finished {result.steps_run} steps; best val PSNR {result.best_val_psnr:.3f} dB; "
        f"outputs in {result.out_dir}"
    )


# ------------------------------------------------------------------ enhance


def _load_image_file(path):
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path)
    else:
        from PIL import Image

        arr = np.asarray(Image.open(path), dtype=np.float64) / 255.0
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise InputError(f"{path}: expected an RGB image, got shape {arr.shape}")
    return arr.astype(np.float64)


def _load_label_file(path):
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).astype(np.int64)
    from PIL import Image

    return np.asarray(Image.open(path).convert("L"), dtype=np.int64)


def _save_png(path, img):
    from PIL import Image

    Image.fromarray(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)).save(path)


@cli.command("enhance")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--data", "data_root", required=True, type=click.Path(exists=True),
              envvar="SEGLOW_DATA_ROOT")
@click.option("--split", default="test", show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--limit", default=0, show_default=True, help="Stop after N images (0 = all).")
def enhance_cmd(checkpoint, data_root, split, out, limit):
    """Map low-light images of a dataset split through a trained checkpoint."""
    payload = load_checkpoint(checkpoint)
    config = config_from_checkpoint(payload)
    dataset = load_dataset(data_root)
    provider = make_provider(
        config.provider,
        num_classes=dataset.num_classes,
        feature_channels=config.semantic_channels,
        confidence=config.provider_confidence,
        seed=config.master_seed,
        root=config.provider_root or None,
    )
    net = build_enhancer(_make_enhancer_config(config, dataset.num_classes), seed=config.master_seed)
    net.load_state_dict(payload["model"])

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = dataset.split(split)
    if limit:
        pairs = pairs[:limit]
    samples = _prepare_samples(pairs, provider, False, config.alpha, 0)
    with torch.no_grad():
        for pair, sample in zip(pairs, samples):
            feats = sample.features if net.se_enabled else None
            result = net(sample.low, feats)
            img = result.permute(1, 2, 0).double().numpy()
            np.save(out_dir / f"{pair.pair_id}.npy", img)
            _save_png(out_dir / f"{pair.pair_id}.png", img)
            np.save(out_dir / f"{pair.pair_id}.labels.npy", pair.label_map.astype(np.int64))
    click.echo(f"enhanced {len(pairs)} images into {out_dir}")


# ------------------------------------------------------------------ eval


@cli.command("eval")
@click.option("--pred", required=True, type=click.Path(exists=True), help="Directory of predictions.")
@click.option("--target", "target_dir", type=click.Path(exists=True), default=None,
              help="Directory of reference images matched by filename stem.")
@click.option("--data", "data_root", type=click.Path(exists=True), default=None,
              envvar="SEGLOW_DATA_ROOT", help="Dataset root to take references from instead.")
@click.option("--split", default="test", show_default=True)
@click.option("--labels", "labels_dir", type=click.Path(exists=True), default=None,
              help="Directory of label maps for the segment color metric.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Report directory [default: the prediction directory].")
def eval_cmd(pred, target_dir, data_root, split, labels_dir, out_dir):
    """Full-reference metrics table (CSV) with a rendered summary figure."""
    pred_dir = Path(pred)
    out_dir = Path(out_dir) if out_dir else pred_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    pred_files = sorted(
        p for p in pred_dir.iterdir() if p.suffix in (".npy", ".png") and not p.name.endswith(".labels.npy")
    )
    if not pred_files:
        raise InputError(f"no .npy or .png predictions under {pred_dir}")

    triples = []
    if target_dir is not None:
        target_dir = Path(target_dir)
        for pf in pred_files:
            stem = pf.name[: -len(pf.suffix)]
            tf = target_dir / pf.name
            if not tf.exists():
                candidates = [target_dir / f"{stem}{ext}" for ext in (".npy", ".png")]
                tf = next((c for c in candidates if c.exists()), None)
                if tf is None:
                    raise InputError(f"no reference found for {pf.name} in {target_dir}")
            labels = None
            if labels_dir is not None:
                lf = Path(labels_dir) / f"{stem}.labels.npy"
                if lf.exists():
                    labels = _load_label_file(lf)
            triples.append((stem, _load_image_file(pf), _load_image_file(tf), labels))
    elif data_root is not None:
        dataset = load_dataset(data_root)
        by_id = {p.pair_id: p for p in dataset.split(split)}
        for pf in pred_files:
            stem = pf.name[: -len(pf.suffix)]
            if stem not in by_id:
                raise InputError(f"prediction {stem} not present in dataset split {split}")
            pair = by_id[stem]
            triples.append((stem, _load_image_file(pf), pair.normal, pair.label_map))
    else:
        raise InputError("provide either --target or --data for references")

    report = evaluate_pairs(triples)
    csv_path = write_metrics_csv(report, out_dir / "metrics.csv")
    figures.save_metrics_figure(report, out_dir / "metrics.png")
    click.echo(
        f"PSNR {report.psnr_mean:.3f} dB, SSIM {report.ssim_mean:.4f} over {len(triples)} images; "
        f"report in {csv_path}"
    )


# ------------------------------------------------------------------ gradcheck


@cli.command("gradcheck")
@click.pass_context
def gradcheck_cmd(ctx):
    """Finite-difference suites for the histogram loss and the embedding block."""
    ok = gradcheck.run_all(echo=click.echo)
    if not ok:
        ctx.exit(1)
    click.echo("all gradient checks passed")


# ------------------------------------------------------------------ ablate


@cli.command("ablate")
@click.option("--data", "data_root", required=True, type=click.Path(exists=True),
              envvar="SEGLOW_DATA_ROOT")
@click.option("--out", required=True, type=click.Path())
@click.option("--rows", default="baseline,sch,se,sch+se,all", show_default=True)
@click.option("--seeds", default="0,1,2,3,4", show_default=True)
@click.option("--steps", default=2000, show_default=True)
@click.option("--batch-size", default=4, show_default=True)
@click.option("--channels", default="16,32,64", show_default=True)
@click.option("--patch-size", default=64, show_default=True)
@click.option("--disc-width", default=32, show_default=True)
@click.option("--lambda-sch", default=None, type=float, help="Histogram loss weight override.")
@click.option("--workers", default=1, show_default=True,
              help="Parallel worker processes (each runs single-threaded).")
def ablate_cmd(data_root, out, rows, seeds, steps, batch_size, channels, patch_size,
               disc_width, lambda_sch, workers):
    """Component study over the toggle grid; writes ablation.csv and a bar chart."""
    base = TrainConfig(
        data_root=data_root,
        steps=steps,
        batch_size=batch_size,
        channels=tuple(int(c) for c in channels.split(",")),
        patch_size=patch_size,
        disc_width=disc_width,
        torch_threads=1 if workers > 1 else 2,
    )
    if lambda_sch is not None:
        base.lambda_sch = lambda_sch
    row_list = [r.strip() for r in rows.split(",") if r.strip()]
    seed_list = [int(s) for s in seeds.split(",")]
    results = ablate(base, row_list, seed_list, out, workers=workers)
    click.echo(f"{'row':<10} {'PSNR':>8} {'SSIM':>8} {'seg-err':>9} {'params':>9}")
    for row in row_list:
        cells = results[row]
        psnr = np.mean([m["psnr"] for m in cells])
        ssim = np.mean([m["ssim"] for m in cells])
        sce = np.mean([m["segment_color_error"] for m in cells])
        click.echo(f"{row:<10} {psnr:8.3f} {ssim:8.4f} {sce:9.4f} {cells[0]['parameter_count']:9d}")
    click.echo(f"full table in {Path(out) / 'ablation.csv'}")


# ------------------------------------------------------------------ histogram debug


@cli.command("histogram")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--alpha", default=400.0, show_default=True)
@click.option("--erosion-radius", default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=".", show_default=True)
def histogram_cmd(image_path, labels_path, alpha, erosion_radius, out_dir):
    """Per-(class, channel) soft histograms as 256-row CSV files plus a figure."""
    img = torch.from_numpy(_load_image_file(image_path))
    labels = torch.from_numpy(_load_label_file(labels_path))
    ids, hists = segment_histograms(img, labels, alpha, erosion_radius)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_class = {}
    for cid, hist in zip(ids, hists):
        by_class[cid] = hist.numpy()
        for ch, ch_name in enumerate("rgb"):
            path = out / f"hist_c{cid}_{ch_name}.csv"
            with open(path, "w") as fh:
                fh.write("bin,value\n")
                for i in range(256):
                    fh.write(f"{i},{hist[ch, i].item():.9e}\n")
    figures.save_histogram_figure(by_class, out / "histograms.png")
    click.echo(f"wrote {3 * len(ids)} histogram CSVs and histograms.png to {out}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)
    except SeglowError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(e.exit_code)
    return 0


if __name__ == "__main__":
    sys.exit(main())
