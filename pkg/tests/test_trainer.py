import math

import numpy as np
import pytest
import torch

import seglow.trainer as trainer_mod
from seglow.data import DatasetConfig, SceneConfig, build_dataset, save_dataset
from seglow.errors import ConfigurationError, TrainingAbort
from seglow.histogram import sch_loss
from seglow.nets import parameter_hash, make_provider
from seglow.trainer import (
    TrainConfig,
    ablation_config,
    batch_sch_loss,
    config_from_checkpoint,
    evaluate_on_split,
    load_checkpoint,
    parse_config,
    total_loss,
    train,
    _prepare_samples,
)


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinydata")
    ds = build_dataset(
        DatasetConfig(
            scene=SceneConfig(height=32, width=32, class_count=3),
            train=16,
            val=4,
            test=4,
            master_seed=7,
        )
    )
    save_dataset(root, ds)
    return root


def tiny_config(data_root, out_dir, **kw):
    base = dict(
        data_root=str(data_root),
        out_dir=str(out_dir),
        steps=12,
        batch_size=2,
        channels=(8, 12, 16),
        semantic_channels=6,
        disc_width=8,
        patch_size=16,
        eval_interval=6,
        checkpoint_interval=6,
        torch_threads=2,
        master_seed=0,
    )
    base.update(kw)
    return TrainConfig(**base)


# ------------------------------------------------------------------ total loss


def test_total_loss_arithmetic():
    assert total_loss(1.0, 0.5, 0.2, 0.1, 0.01) == pytest.approx(1.052, abs=1e-12)


def test_total_loss_zero_weights_reduce_to_recon():
    assert total_loss(0.731, 55.0, 2.0, 0.0, 0.0) == 0.731


def test_total_loss_matches_recomputation():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r, s, a, ls, la = rng.random(5)
        assert total_loss(r, s, a, ls, la) == pytest.approx(r + ls * s + la * a, rel=1e-15)


def test_total_loss_linearity_in_weights():
    r, s, a = 0.4, 12.0, 0.8
    base = total_loss(r, s, a, 0.0, 0.01)
    single = total_loss(r, s, a, 0.05, 0.01)
    double = total_loss(r, s, a, 0.10, 0.01)
    assert double - base == pytest.approx(2 * (single - base), rel=1e-12)


def test_total_loss_nonfinite_aborts_with_component_and_step():
    with pytest.raises(TrainingAbort) as err:
        total_loss(1.0, float("nan"), 0.0, 0.1, 0.1, step=37)
    assert err.value.component == "sch"
    assert err.value.step == 37
    with pytest.raises(TrainingAbort):
        total_loss(float("inf"), 0.0, 0.0, 0.1, 0.1, step=1)


# ------------------------------------------------------------------ config parsing


def test_parse_config_file_and_overrides(tmp_path):
    path = tmp_path / "train.cfg"
    path.write_text(
        "# comment line\n"
        "data_root = /some/data\n"
        "steps = 100\n"
        "lambda_sch = 0.25  # inline comment\n"
        "use_sa = false\n"
        "channels = 8,16,32\n"
    )
    cfg = parse_config(path, {"steps": "200", "recon_loss": "mse"})
    assert cfg.data_root == "/some/data"
    assert cfg.steps == 200
    assert cfg.lambda_sch == 0.25
    assert cfg.use_sa is False
    assert cfg.channels == (8, 16, 32)
    assert cfg.recon_loss == "mse"


def test_parse_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("learning_rate = 1\n")
    with pytest.raises(ConfigurationError):
        parse_config(path)
    with pytest.raises(ConfigurationError):
        parse_config(None, {"bogus": "1"})


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(data_root="x", steps=0).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(data_root="x", lambda_sch=-1).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(data_root="x", recon_loss="huber").validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(data_root="x", large_control=True, use_se=True).validate()


# ------------------------------------------------------------------ sch batch cache


def test_batch_sch_loss_matches_public_op(tiny_data):
    from seglow.data import load_dataset

    ds = load_dataset(tiny_data)
    provider = make_provider("oracle", num_classes=ds.num_classes, feature_channels=6, seed=0)
    samples = _prepare_samples(ds.split("train")[:3], provider, True, 400.0, 1)
    out = torch.rand(3, 3, 32, 32)
    got = batch_sch_loss(out, samples, 400.0)

    expect = 0.0
    for b, (pair, sample) in enumerate(zip(ds.split("train")[:3], samples)):
        expect += sch_loss(
            out[b].permute(1, 2, 0).double(),
            torch.from_numpy(pair.normal),
            sample.labels,
            400.0,
            1,
        ).item()
    assert got.item() == pytest.approx(expect / 3, rel=1e-4)


# ------------------------------------------------------------------ training runs


def test_smoke_train_loss_decreases(tiny_data, tmp_path):
    # seeded smoke: 50 steps over 16 pairs with every component enabled; the
    # logged total must trend down (the run is deterministic, seed pinned)
    cfg = tiny_config(
        tiny_data,
        tmp_path / "run",
        steps=50,
        batch_size=8,
        lr_g=1e-3,
        lambda_sch=1e-5,
        eval_interval=25,
        checkpoint_interval=25,
        master_seed=3,
    )
    result = train(cfg)
    rows = (result.loss_log).read_text().splitlines()[1:]
    totals = [float(r.split(",")[4]) for r in rows]
    assert len(totals) == 50
    assert totals[49] < totals[0]
    assert np.mean(totals[-10:]) < np.mean(totals[:10])
    assert np.polyfit(np.arange(50), totals, 1)[0] < 0


def test_two_runs_identical_logs(tiny_data, tmp_path):
    cfg_a = tiny_config(tiny_data, tmp_path / "a")
    cfg_b = tiny_config(tiny_data, tmp_path / "b")
    ra = train(cfg_a)
    rb = train(cfg_b)
    assert ra.loss_log.read_bytes() == rb.loss_log.read_bytes()
    assert ra.val_log.read_bytes() == rb.val_log.read_bytes()


def test_resume_reproduces_uninterrupted_trajectory(tiny_data, tmp_path):
    full = train(tiny_config(tiny_data, tmp_path / "full", steps=16, checkpoint_interval=8))
    short = train(tiny_config(tiny_data, tmp_path / "short", steps=8, checkpoint_interval=8))
    resumed = train(
        tiny_config(tiny_data, tmp_path / "resume", steps=16, checkpoint_interval=8),
        resume_from=short.last_checkpoint,
    )
    full_rows = full.loss_log.read_text().splitlines()
    resumed_rows = resumed.loss_log.read_text().splitlines()
    assert resumed_rows == full_rows[9:]  # header + steps 1..8 skipped

    ck_full = load_checkpoint(full.last_checkpoint)
    ck_res = load_checkpoint(resumed.last_checkpoint)
    for key, tensor in ck_full["model"].items():
        assert torch.equal(tensor, ck_res["model"][key]), key


def test_resume_rejects_mismatched_config(tiny_data, tmp_path):
    short = train(tiny_config(tiny_data, tmp_path / "s2", steps=6, checkpoint_interval=6))
    other = tiny_config(tiny_data, tmp_path / "s3", steps=12, master_seed=99)
    with pytest.raises(ConfigurationError):
        train(other, resume_from=short.last_checkpoint)


def test_sch_toggle_zero_contribution(tiny_data, tmp_path):
    # enabled-but-zero-weighted histogram loss must not alter the trajectory
    on = train(tiny_config(tiny_data, tmp_path / "on", use_sch=True, lambda_sch=0.0, use_sa=False))
    off = train(tiny_config(tiny_data, tmp_path / "off", use_sch=False, use_sa=False))
    rows_on = [r.split(",") for r in on.loss_log.read_text().splitlines()[1:]]
    rows_off = [r.split(",") for r in off.loss_log.read_text().splitlines()[1:]]
    for a, b in zip(rows_on, rows_off):
        assert a[1] == b[1]  # recon identical bitwise
        assert a[4] == b[4]  # total identical bitwise
    ck_on = load_checkpoint(on.last_checkpoint)
    ck_off = load_checkpoint(off.last_checkpoint)
    for key, tensor in ck_on["model"].items():
        assert torch.equal(tensor, ck_off["model"][key])


def test_ablation_coherence_at_step_one(tiny_data, tmp_path):
    # shared init: enabling any component leaves the other terms' first values unchanged
    first = {}
    for row in ("baseline", "sch", "se", "sch+se", "all"):
        cfg = ablation_config(
            tiny_config(tiny_data, tmp_path / row, steps=1, eval_interval=1, checkpoint_interval=1),
            row,
            seed=0,
            out_dir=tmp_path / row,
        )
        train(cfg)
        line = (tmp_path / row / "loss_log.csv").read_text().splitlines()[1]
        _, recon, sch, sa, total = line.split(",")
        first[row] = (recon, sch, sa)
    recons = {v[0] for v in first.values()}
    assert len(recons) == 1  # identical across every toggle combination
    assert first["sch"][1] == first["sch+se"][1] == first["all"][1]


def test_disabled_adversarial_allocates_no_discriminators(tiny_data, tmp_path):
    result = train(tiny_config(tiny_data, tmp_path / "nosa", use_sa=False))
    ck = load_checkpoint(result.last_checkpoint)
    assert ck["disc_local"] is None and ck["disc_global"] is None and ck["optim_d"] is None


def test_provider_frozen_through_training(tiny_data, tmp_path):
    result = train(tiny_config(tiny_data, tmp_path / "frozen"))
    ck = load_checkpoint(result.last_checkpoint)
    provider = make_provider("oracle", num_classes=3, feature_channels=6, confidence=6.0, seed=0)
    assert ck["provider_hash"] == parameter_hash(provider)


def test_training_abort_preserves_last_good_checkpoint(tiny_data, tmp_path, monkeypatch):
    real_total = trainer_mod.total_loss

    def poisoned(recon, sch, sa, ls, la, step=None):
        if step == 8:
            return real_total(float("nan"), sch, sa, ls, la, step)
        return real_total(recon, sch, sa, ls, la, step)

    monkeypatch.setattr(trainer_mod, "total_loss", poisoned)
    cfg = tiny_config(tiny_data, tmp_path / "abort", steps=12, checkpoint_interval=5, use_sa=False)
    with pytest.raises(TrainingAbort) as err:
        train(cfg)
    assert err.value.step == 8 and err.value.component == "recon"
    ck = load_checkpoint(tmp_path / "abort" / "last.pt")
    assert ck["step"] == 5


def test_checkpoint_format_guard(tiny_data, tmp_path):
    result = train(tiny_config(tiny_data, tmp_path / "fmt", steps=6, checkpoint_interval=6))
    payload = load_checkpoint(result.last_checkpoint)
    assert payload["format_version"] == 1
    cfg = config_from_checkpoint(payload)
    assert cfg.channels == (8, 12, 16)

    from seglow.errors import DataFormatError

    bad = tmp_path / "bad.pt"
    torch.save({"format_version": 99}, bad)
    with pytest.raises(DataFormatError):
        load_checkpoint(bad)


def test_evaluate_on_split(tiny_data, tmp_path):
    result = train(tiny_config(tiny_data, tmp_path / "eval", steps=6))
    metrics = evaluate_on_split(result.last_checkpoint, tiny_data, "test")
    assert math.isfinite(metrics["psnr"]) and metrics["psnr"] > 0
    assert 0 <= metrics["ssim"] <= 1
    assert metrics["parameter_count"] > 0


def test_large_control_matches_se_parameter_count(tiny_data, tmp_path):
    se_cfg = tiny_config(tiny_data, tmp_path / "se_side", steps=1, use_se=True)
    large_cfg = tiny_config(
        tiny_data, tmp_path / "large_side", steps=1, use_se=False, large_control=True
    )
    r_se = train(se_cfg)
    r_large = train(large_cfg)
    gap = abs(r_large.parameter_count - r_se.parameter_count) / r_se.parameter_count
    assert gap <= 0.05


def test_loss_and_validation_figures_written(tiny_data, tmp_path):
    result = train(tiny_config(tiny_data, tmp_path / "figs", steps=6, eval_interval=3))
    assert (result.out_dir / "loss_curves.png").exists()
    assert (result.out_dir / "validation.png").exists()
