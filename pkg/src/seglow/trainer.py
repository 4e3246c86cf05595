"""Loss composition, alternating generator/discriminator training, and ablations.

The total objective is

    L = L_recon + lambda_hist * L_hist + lambda_adv * L_adv

where L_recon is a plain l1/mse reconstruction term, L_hist the per-segment
color histogram loss, and L_adv the sum of the local worst-patch and global
segmentation-conditioned adversarial generator terms.  Disabled components
contribute exactly zero and allocate nothing (no embedding parameters, no
discriminators).

Every run is deterministic given the master seed and a fixed thread count: all
runtime randomness flows through one numpy generator whose state is saved in
checkpoints, the semantic provider is frozen, and log lines carry no
timestamps, so identical configs produce byte-identical logs and a resumed run
reproduces the uninterrupted trajectory bit for bit.
"""

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import torch

from . import figures
from .adversarial import (
    PatchDiscriminator,
    crop_real_patches,
    extract_fake_patches,
    global_adversarial_losses,
    local_adversarial_losses,
    sa_loss,
)
from .data import load_dataset
from .errors import ConfigurationError, DataFormatError, InputError, NoCandidatesError, TrainingAbort
from .histogram import erode_mask, grouped_soft_histogram, segment_histograms
from .metrics import evaluate_pairs
from .nets import (
    EnhancerConfig,
    build_enhancer,
    component_seed,
    count_parameters,
    make_provider,
    parameter_hash,
    seeded_init_,
    widen_to_match,
)

CHECKPOINT_VERSION = 1

RECON_LOSSES = ("l1", "mse")


@dataclass
class TrainConfig:
    data_root: str = ""
    out_dir: str = ""
    steps: int = 2000
    batch_size: int = 8
    lr_g: float = 2e-4
    lr_d: float = 1e-4
    recon_loss: str = "l1"
    lambda_sch: float = 1e-4
    lambda_sa: float = 0.01
    alpha: float = 400.0
    erosion_radius: int = 2
    use_se: bool = True
    use_sch: bool = True
    use_sa: bool = True
    channels: tuple = (32, 64, 128)
    semantic_channels: int = 16
    disc_width: int = 32
    patch_size: int = 64
    gan_label_convention: str = "standard"
    provider: str = "oracle"
    provider_confidence: float = 6.0
    provider_root: str = ""
    master_seed: int = 0
    eval_interval: int = 250
    checkpoint_interval: int = 500
    torch_threads: int = 2
    large_control: bool = False

    def validate(self):
        if not self.data_root:
            raise ConfigurationError("data_root is required")
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.lambda_sch < 0 or self.lambda_sa < 0:
            raise ConfigurationError("loss weights must be nonnegative")
        if self.recon_loss not in RECON_LOSSES:
            raise ConfigurationError(f"recon_loss must be one of {RECON_LOSSES}")
        if self.alpha <= 0:
            raise ConfigurationError("alpha must be positive")
        if self.erosion_radius < 0:
            raise ConfigurationError("erosion_radius must be >= 0")
        if self.large_control and self.use_se:
            raise ConfigurationError("large_control is a no-embedding control; set use_se=false")
        if len(self.channels) != 3:
            raise ConfigurationError("channels must have three entries")
        return self


def _coerce(value: str, target_type, key: str):
    if target_type is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"cannot parse boolean config value {key}={value!r}")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type is tuple:
        return tuple(int(v) for v in value.replace(",", " ").split())
    return value


def parse_config(path=None, overrides=None) -> TrainConfig:
    """Build a TrainConfig from a flat key=value file plus CLI-style overrides.

    File format: one ``key = value`` per line, ``#`` starts a comment,
    unknown keys are rejected.
    """
    known = {f.name: f.type for f in fields(TrainConfig)}
    type_of = {
        name: (tuple if name == "channels" else TrainConfig.__dataclass_fields__[name].default.__class__)
        for name in known
    }
    values = {}
    if path is not None:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigurationError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(value, type_of[key], key)
    for key, value in (overrides or {}).items():
        if key not in known:
            raise ConfigurationError(f"unknown config key {key!r}")
        values[key] = _coerce(value, type_of[key], key) if isinstance(value, str) else value
    return TrainConfig(**values)


def config_to_text(config: TrainConfig):
    lines = []
    for f in fields(TrainConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def total_loss(recon, sch, sa, lambda_sch, lambda_sa, step=None):
    """Weighted sum of the loss components; aborts naming any non-finite term."""
    for name, value in (("recon", recon), ("sch", sch), ("sa", sa)):
        v = float(value.detach()) if torch.is_tensor(value) else float(value)
        if not math.isfinite(v):
            raise TrainingAbort(name, step if step is not None else -1, v)
    return recon + lambda_sch * sch + lambda_sa * sa


# ------------------------------------------------------------------ caches


@dataclass
class _SampleCache:
    low: torch.Tensor  # (3, H, W) float32
    normal: torch.Tensor  # (3, H, W)
    normal_hwc: torch.Tensor  # (H, W, 3) view for patch ops
    labels: torch.Tensor  # (H, W) long
    logits: torch.Tensor  # (K, H, W)
    features: list  # three (C, h, w) tensors
    sch_idx: torch.Tensor | None = None  # (N,) flat pixel indices of eroded segments
    sch_groups: torch.Tensor | None = None  # (N*3,) group ids
    sch_groups_count: int = 0
    sch_gt: torch.Tensor | None = None  # (G*3, 256) target histograms


def _build_sch_cache(sample: _SampleCache, alpha, radius):
    lab = sample.labels
    h, w = lab.shape
    idx_chunks, seg_sizes = [], []
    for cid in torch.unique(lab).tolist():
        mask = erode_mask(lab == cid, radius)
        flat = torch.nonzero(mask.reshape(-1), as_tuple=True)[0]
        if flat.numel() == 0:
            continue
        idx_chunks.append(flat)
        seg_sizes.append(flat.numel())
    if not idx_chunks:
        sample.sch_idx = torch.zeros(0, dtype=torch.long)
        sample.sch_groups = torch.zeros(0, dtype=torch.long)
        sample.sch_groups_count = 0
        sample.sch_gt = torch.zeros(0, 256)
        return
    sample.sch_idx = torch.cat(idx_chunks)
    seg_index = torch.repeat_interleave(torch.arange(len(seg_sizes)), torch.tensor(seg_sizes))
    sample.sch_groups = (seg_index[:, None] * 3 + torch.arange(3)[None, :]).reshape(-1)
    sample.sch_groups_count = len(seg_sizes) * 3
    _, gt = segment_histograms(sample.normal_hwc, lab, alpha, radius)
    sample.sch_gt = gt.reshape(-1, 256).to(torch.float32)


def batch_sch_loss(out, batch_samples, alpha):
    """Mean per-image histogram loss for a batch, using cached masks and targets.

    Numerically the same computation as ``histogram.sch_loss`` (the cache only
    pre-gathers mask indices and target histograms); equivalence is covered by
    tests.
    """
    out_hwc = out.permute(0, 2, 3, 1)
    vals, groups, gts = [], [], []
    offset = 0
    for b, sample in enumerate(batch_samples):
        if sample.sch_groups_count == 0:
            continue
        v = out_hwc[b].reshape(-1, 3)[sample.sch_idx]
        vals.append(v.reshape(-1))
        groups.append(sample.sch_groups + offset)
        gts.append(sample.sch_gt)
        offset += sample.sch_groups_count
    if not vals:
        return out.sum() * 0.0
    hist = grouped_soft_histogram(torch.cat(vals), torch.cat(groups), offset, alpha)
    return (hist - torch.cat(gts)).abs().sum() / len(batch_samples)


def _prepare_samples(pairs, provider, use_sch, alpha, radius):
    out = []
    for pair in pairs:
        low = torch.from_numpy(pair.low).float()
        normal = torch.from_numpy(pair.normal).float()
        labels = torch.from_numpy(pair.label_map.astype(np.int64))
        prior = provider.provide(low, label_map=labels, key=pair.pair_id)
        sample = _SampleCache(
            low=low.permute(2, 0, 1).contiguous(),
            normal=normal.permute(2, 0, 1).contiguous(),
            normal_hwc=normal,
            labels=prior.label_map,
            logits=prior.logits,
            features=prior.features,
        )
        if use_sch:
            _build_sch_cache(sample, alpha, radius)
        out.append(sample)
    return out


# ------------------------------------------------------------------ checkpoints


def save_checkpoint(path, *, config, step, net, disc_local, disc_global, optim_g, optim_d,
                    data_rng, best_val_psnr, provider_hash):
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(config),
        "step": step,
        "model": net.state_dict(),
        "disc_local": disc_local.state_dict() if disc_local is not None else None,
        "disc_global": disc_global.state_dict() if disc_global is not None else None,
        "optim_g": optim_g.state_dict(),
        "optim_d": optim_d.state_dict() if optim_d is not None else None,
        "data_rng_state": data_rng.bit_generator.state,
        "torch_rng_state": torch.get_rng_state(),
        "best_val_psnr": best_val_psnr,
        "provider_hash": provider_hash,
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as e:
        raise DataFormatError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported checkpoint format "
            f"(version {payload.get('format_version') if isinstance(payload, dict) else '?'})"
        )
    return payload


def config_from_checkpoint(payload) -> TrainConfig:
    raw = dict(payload["config"])
    raw["channels"] = tuple(raw["channels"])
    return TrainConfig(**raw)


# ------------------------------------------------------------------ training


@dataclass
class TrainResult:
    out_dir: Path
    steps_run: int
    best_val_psnr: float
    final_val: dict
    loss_log: Path
    val_log: Path
    best_checkpoint: Path
    last_checkpoint: Path
    parameter_count: int


def _make_enhancer_config(config: TrainConfig, num_classes) -> EnhancerConfig:
    base = EnhancerConfig(
        channels=tuple(config.channels),
        num_classes=num_classes,
        semantic_channels=config.semantic_channels,
        use_se=config.use_se,
    )
    if config.large_control:
        se_twin = dataclasses.replace(base, use_se=True)
        return widen_to_match(se_twin)
    return base


def _stack_features(samples, batch_idx):
    return [
        torch.stack([samples[i].features[level] for i in batch_idx]) for level in range(3)
    ]


def _validate(net, samples, batch=16):
    triples = []
    with torch.no_grad():
        for start in range(0, len(samples), batch):
            chunk = samples[start : start + batch]
            low = torch.stack([s.low for s in chunk])
            feats = [torch.stack([s.features[level] for s in chunk]) for level in range(3)]
            out = net(low, feats if net.se_enabled else None)
            for i, s in enumerate(chunk):
                triples.append(
                    (
                        f"val{start + i:05d}",
                        out[i].permute(1, 2, 0).double().numpy(),
                        s.normal_hwc.double().numpy(),
                        s.labels.numpy(),
                    )
                )
    report = evaluate_pairs(triples)
    return {
        "psnr": report.psnr_mean,
        "ssim": report.ssim_mean,
        "segment_color_error": report.segment_color_error_mean,
    }


def train(config: TrainConfig, resume_from=None) -> TrainResult:
    config.validate()
    torch.set_num_threads(config.torch_threads)
    out_dir = Path(config.out_dir) if config.out_dir else Path("run")
    out_dir.mkdir(parents=True, exist_ok=True)

    dataset = load_dataset(config.data_root)
    num_classes = dataset.num_classes
    provider = make_provider(
        config.provider,
        num_classes=num_classes,
        feature_channels=config.semantic_channels,
        confidence=config.provider_confidence,
        seed=config.master_seed,
        root=config.provider_root or None,
    )
    provider_hash = parameter_hash(provider) if hasattr(provider, "named_parameters") else ""

    train_samples = _prepare_samples(
        dataset.split("train"), provider, config.use_sch, config.alpha, config.erosion_radius
    )
    val_samples = _prepare_samples(dataset.split("val"), provider, False, config.alpha, 0)
    if not train_samples:
        raise InputError("training split is empty")

    torch.manual_seed(config.master_seed)
    net_config = _make_enhancer_config(config, num_classes)
    net = build_enhancer(net_config, seed=config.master_seed)
    optim_g = torch.optim.Adam(net.parameters(), lr=config.lr_g)

    disc_local = disc_global = optim_d = None
    if config.use_sa:
        disc_local = PatchDiscriminator(3, config.disc_width)
        disc_global = PatchDiscriminator(3 + num_classes, config.disc_width)
        seeded_init_(disc_local, component_seed(config.master_seed, "disc-local"))
        seeded_init_(disc_global, component_seed(config.master_seed, "disc-global"))
        optim_d = torch.optim.Adam(
            list(disc_local.parameters()) + list(disc_global.parameters()), lr=config.lr_d
        )

    data_rng = np.random.default_rng([config.master_seed, 0xD47A])
    start_step = 0
    best_val_psnr = -math.inf

    if resume_from is not None:
        payload = load_checkpoint(resume_from)
        stored = config_from_checkpoint(payload)
        skip = {"steps", "out_dir"}
        for f in fields(TrainConfig):
            if f.name in skip:
                continue
            if getattr(stored, f.name) != getattr(config, f.name):
                raise ConfigurationError(
                    f"checkpoint config mismatch on {f.name!r}: "
                    f"{getattr(stored, f.name)!r} != {getattr(config, f.name)!r}"
                )
        net.load_state_dict(payload["model"])
        optim_g.load_state_dict(payload["optim_g"])
        if config.use_sa:
            disc_local.load_state_dict(payload["disc_local"])
            disc_global.load_state_dict(payload["disc_global"])
            optim_d.load_state_dict(payload["optim_d"])
        data_rng.bit_generator.state = payload["data_rng_state"]
        torch.set_rng_state(payload["torch_rng_state"])
        start_step = payload["step"]
        best_val_psnr = payload["best_val_psnr"]

    (out_dir / "config.txt").write_text(config_to_text(config))
    loss_log = out_dir / "loss_log.csv"
    val_log = out_dir / "val_log.csv"
    mode = "a" if resume_from is not None else "w"
    loss_fh = open(loss_log, mode)
    val_fh = open(val_log, mode)
    if mode == "w":
        loss_fh.write("step,recon,sch,sa,total\n")
        val_fh.write("step,psnr,ssim,segment_color_error\n")

    best_ck = out_dir / "best.pt"
    last_ck = out_dir / "last.pt"
    recon_fn = torch.nn.functional.l1_loss if config.recon_loss == "l1" else torch.nn.functional.mse_loss
    n_train = len(train_samples)
    real_label = 1.0 if config.gan_label_convention == "standard" else 0.0

    def checkpoint(path, step):
        save_checkpoint(
            path,
            config=config,
            step=step,
            net=net,
            disc_local=disc_local,
            disc_global=disc_global,
            optim_g=optim_g,
            optim_d=optim_d,
            data_rng=data_rng,
            best_val_psnr=best_val_psnr,
            provider_hash=provider_hash,
        )

    def adversarial_g_terms(out, batch, batch_idx):
        """Local worst-patch and global generator losses for one batch."""
        out_hwc = out.permute(0, 2, 3, 1)
        local_terms = []
        for b, sample in enumerate(batch):
            try:
                cands = extract_fake_patches(
                    out_hwc[b], sample.labels, config.patch_size, config.erosion_radius
                )
            except NoCandidatesError:
                continue
            reals = crop_real_patches(
                [s.normal_hwc for s in batch], len(cands), config.patch_size, data_rng
            )
            res = local_adversarial_losses(
                reals, cands, disc_local, config.gan_label_convention
            )
            local_terms.append(res.loss_g)
        local_g = torch.stack(local_terms).mean() if local_terms else out.sum() * 0.0
        logits = torch.stack([s.logits for s in batch])
        normal = torch.stack([s.normal for s in batch])
        _, global_g = global_adversarial_losses(
            normal, out, logits, logits, disc_global, config.gan_label_convention
        )
        return local_g, global_g

    final_val = None
    try:
        for step in range(start_step + 1, config.steps + 1):
            batch_idx = data_rng.integers(0, n_train, size=config.batch_size).tolist()
            batch = [train_samples[i] for i in batch_idx]
            low = torch.stack([s.low for s in batch])
            normal = torch.stack([s.normal for s in batch])
            feats = _stack_features(train_samples, batch_idx) if net.se_enabled else None

            if config.use_sa:
                with torch.no_grad():
                    fake = net(low, feats)
                fake_hwc = fake.permute(0, 2, 3, 1)
                d_terms = []
                for b, sample in enumerate(batch):
                    try:
                        cands = extract_fake_patches(
                            fake_hwc[b], sample.labels, config.patch_size, config.erosion_radius
                        )
                    except NoCandidatesError:
                        continue
                    reals = crop_real_patches(
                        [s.normal_hwc for s in batch], len(cands), config.patch_size, data_rng
                    )
                    res = local_adversarial_losses(
                        reals, cands, disc_local, config.gan_label_convention
                    )
                    d_terms.append(res.loss_d)
                local_d = torch.stack(d_terms).mean() if d_terms else torch.zeros(())
                logits = torch.stack([s.logits for s in batch])
                global_d, _ = global_adversarial_losses(
                    normal, fake, logits, logits, disc_global, config.gan_label_convention
                )
                loss_d = local_d + global_d
                optim_d.zero_grad()
                loss_d.backward()
                optim_d.step()

            out = net(low, feats)
            recon = recon_fn(out, normal)
            sch = batch_sch_loss(out, batch, config.alpha) if config.use_sch else out.sum() * 0.0
            if config.use_sa:
                for p in disc_local.parameters():
                    p.requires_grad_(False)
                for p in disc_global.parameters():
                    p.requires_grad_(False)
                local_g, global_g = adversarial_g_terms(out, batch, batch_idx)
                sa = sa_loss(local_g, global_g)
            else:
                sa = out.sum() * 0.0
            loss = total_loss(recon, sch, sa, config.lambda_sch, config.lambda_sa, step)
            optim_g.zero_grad()
            loss.backward()
            optim_g.step()
            if config.use_sa:
                for p in disc_local.parameters():
                    p.requires_grad_(True)
                for p in disc_global.parameters():
                    p.requires_grad_(True)

            loss_fh.write(
                f"{step},{float(recon.detach()):.9e},{float(sch.detach()):.9e},"
                f"{float(sa.detach()):.9e},{float(loss.detach()):.9e}\n"
            )

            if step % config.eval_interval == 0 or step == config.steps:
                metrics = _validate(net, val_samples)
                final_val = metrics
                val_fh.write(
                    f"{step},{metrics['psnr']:.9e},{metrics['ssim']:.9e},"
                    f"{metrics['segment_color_error']:.9e}\n"
                )
                val_fh.flush()
                if metrics["psnr"] > best_val_psnr:
                    best_val_psnr = metrics["psnr"]
                    checkpoint(best_ck, step)
            if step % config.checkpoint_interval == 0 or step == config.steps:
                checkpoint(last_ck, step)
                loss_fh.flush()
    finally:
        loss_fh.close()
        val_fh.close()

    if hasattr(provider, "named_parameters") and parameter_hash(provider) != provider_hash:
        raise TrainingAbort("provider", config.steps, None)

    figures.save_loss_curves(loss_log, out_dir / "loss_curves.png")
    figures.save_validation_curve(val_log, out_dir / "validation.png")

    return TrainResult(
        out_dir=out_dir,
        steps_run=config.steps - start_step,
        best_val_psnr=best_val_psnr,
        final_val=final_val or {},
        loss_log=loss_log,
        val_log=val_log,
        best_checkpoint=best_ck if best_ck.exists() else last_ck,
        last_checkpoint=last_ck,
        parameter_count=count_parameters(net),
    )


# ------------------------------------------------------------------ evaluation of checkpoints


def load_net_for_inference(checkpoint_path):
    payload = load_checkpoint(checkpoint_path)
    config = config_from_checkpoint(payload)
    # class count is embedded in the global discriminator width when present;
    # rebuild the provider from the dataset at call sites instead.
    return payload, config


def evaluate_on_split(checkpoint_path, data_root, split="test"):
    """PSNR/SSIM/segment-color-error of a checkpoint over one dataset split."""
    payload, config = load_net_for_inference(checkpoint_path)
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
    samples = _prepare_samples(dataset.split(split), provider, False, config.alpha, 0)
    metrics = _validate(net, samples)
    metrics["parameter_count"] = count_parameters(net)
    return metrics


# ------------------------------------------------------------------ ablation harness

ABLATION_ROWS = {
    # row -> (use_sch, use_sa, use_se, large_control)
    "baseline": (False, False, False, False),
    "sch": (True, False, False, False),
    "sa": (False, True, False, False),
    "se": (False, False, True, False),
    "sch+se": (True, False, True, False),
    "all": (True, True, True, False),
    "large": (False, False, False, True),
}


def ablation_config(base: TrainConfig, row: str, seed: int, out_dir) -> TrainConfig:
    if row not in ABLATION_ROWS:
        raise ConfigurationError(f"unknown ablation row {row!r}; known: {sorted(ABLATION_ROWS)}")
    use_sch, use_sa, use_se, large = ABLATION_ROWS[row]
    return dataclasses.replace(
        base,
        use_sch=use_sch,
        use_sa=use_sa,
        use_se=use_se,
        large_control=large,
        master_seed=seed,
        out_dir=str(out_dir),
    )


def run_ablation_cell(config: TrainConfig):
    """Train one (row, seed) cell and evaluate its best-validation checkpoint."""
    result = train(config)
    metrics = evaluate_on_split(result.best_checkpoint, config.data_root, "test")
    metrics["out_dir"] = str(result.out_dir)
    return metrics


def ablate(base: TrainConfig, rows, seeds, out_root, workers=1):
    """Toggle-grid study: train every (row, seed) cell and tabulate test metrics.

    Returns {row: [metrics per seed]} and writes ``ablation.csv`` plus a bar
    figure under ``out_root``.  Cells are independent seeded runs, so they can
    execute in parallel worker processes without affecting determinism.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    cells = []
    for row in rows:
        for seed in seeds:
            cfg = ablation_config(base, row, seed, out_root / f"{row.replace('+', '_')}_s{seed}")
            cells.append((row, seed, cfg))

    results = {row: [None] * len(seeds) for row in rows}
    if workers > 1:
        import concurrent.futures as cf

        ctx_kwargs = {"mp_context": __import__("multiprocessing").get_context("spawn")}
        with cf.ProcessPoolExecutor(max_workers=workers, **ctx_kwargs) as pool:
            futs = {pool.submit(run_ablation_cell, cfg): (row, seed) for row, seed, cfg in cells}
            for fut in cf.as_completed(futs):
                row, seed = futs[fut]
                results[row][seeds.index(seed)] = fut.result()
    else:
        for row, seed, cfg in cells:
            results[row][seeds.index(seed)] = run_ablation_cell(cfg)

    csv_path = out_root / "ablation.csv"
    with open(csv_path, "w") as fh:
        fh.write("row,seed,psnr,ssim,segment_color_error,parameter_count\n")
        for row in rows:
            for seed, m in zip(seeds, results[row]):
                fh.write(
                    f"{row},{seed},{m['psnr']:.6f},{m['ssim']:.6f},"
                    f"{m['segment_color_error']:.6f},{m['parameter_count']}\n"
                )
    figures.save_ablation_figure(results, rows, seeds, out_root / "ablation.png")
    return results
