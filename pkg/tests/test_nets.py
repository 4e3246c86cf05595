import numpy as np
import pytest
import torch

from seglow.errors import ConfigurationError, InputError
from seglow.nets import (
    EnhancementNet,
    EnhancerConfig,
    OracleSemanticProvider,
    FileSemanticProvider,
    build_enhancer,
    count_parameters,
    enhance,
    make_provider,
    parameter_hash,
    widen_to_match,
)

TINY = EnhancerConfig(channels=(8, 12, 16), num_classes=4, semantic_channels=6)


def make_prior(provider, h=64, w=64, classes=4, seed=0):
    rng = np.random.default_rng(seed)
    lab = torch.from_numpy(rng.integers(0, classes, (h, w)))
    img = torch.rand(h, w, 3)
    return provider.provide(img, label_map=lab), img, lab


# ------------------------------------------------------------------ provider


def test_oracle_provider_label_passthrough():
    prov = OracleSemanticProvider(num_classes=4, feature_channels=6)
    prior, _, lab = make_prior(prov)
    assert torch.equal(prior.label_map, lab)


def test_oracle_logits_argmax_recovers_labels():
    prov = OracleSemanticProvider(num_classes=4, feature_channels=6)
    prior, _, lab = make_prior(prov)
    assert torch.equal(prior.logits.argmax(dim=0), lab)
    # confidence scaling: softmax mass on the true class ~ 0.99
    probs = torch.softmax(prior.logits, dim=0)
    true_mass = probs.gather(0, lab.unsqueeze(0))[0]
    assert (true_mass > 0.98).all()


def test_oracle_feature_resolutions():
    prov = OracleSemanticProvider(num_classes=4, feature_channels=6)
    prior, _, _ = make_prior(prov, 64, 64)
    assert [tuple(f.shape[-2:]) for f in prior.features] == [(4, 4), (8, 8), (16, 16)]
    assert all(f.shape[0] == 6 for f in prior.features)


def test_oracle_provider_is_frozen_and_deterministic():
    a = OracleSemanticProvider(4, 6, seed=3)
    b = OracleSemanticProvider(4, 6, seed=3)
    assert parameter_hash(a) == parameter_hash(b)
    assert all(not p.requires_grad for p in a.parameters())
    prior_a, _, _ = make_prior(a)
    prior_b, _, _ = make_prior(b)
    for fa, fb in zip(prior_a.features, prior_b.features):
        assert torch.equal(fa, fb)


def test_oracle_provider_rejects_out_of_range_class():
    prov = OracleSemanticProvider(num_classes=2)
    with pytest.raises(InputError):
        prov.provide(torch.rand(16, 16, 3), label_map=torch.full((16, 16), 5))


def test_file_provider_roundtrip(tmp_path):
    prov = OracleSemanticProvider(4, 6)
    prior, img, lab = make_prior(prov, 32, 32)
    np.savez(
        tmp_path / "s0.npz",
        label_map=prior.label_map.numpy(),
        logits=prior.logits.numpy(),
        feat_0=prior.features[0].numpy(),
        feat_1=prior.features[1].numpy(),
        feat_2=prior.features[2].numpy(),
    )
    fp = FileSemanticProvider(tmp_path)
    loaded = fp.provide(img, key="s0")
    assert torch.equal(loaded.label_map, prior.label_map)
    assert torch.allclose(loaded.logits, prior.logits)
    with pytest.raises(InputError):
        fp.provide(img, key="missing")
    np.savez(tmp_path / "bad.npz", label_map=prior.label_map.numpy())
    with pytest.raises(InputError):
        fp.provide(img, key="bad")


def test_make_provider_errors():
    with pytest.raises(ConfigurationError):
        make_provider("hrnet")
    with pytest.raises(ConfigurationError):
        make_provider("file")


# ------------------------------------------------------------------ enhancer


def test_enhance_shape_contract():
    prov = OracleSemanticProvider(4, TINY.semantic_channels)
    net = build_enhancer(TINY, seed=0)
    for h, w in [(64, 64), (96, 64)]:
        prior, img, _ = make_prior(prov, h, w)
        out = enhance(img, prior, net)
        assert out.shape == (h, w, 3)
        assert out.min() >= 0 and out.max() <= 1


def test_enhance_rejects_bad_dims():
    prov = OracleSemanticProvider(4, TINY.semantic_channels)
    net = build_enhancer(TINY, seed=0)
    with pytest.raises(InputError):
        net(torch.rand(1, 3, 60, 64), None)


def test_enhancer_without_se_blocks_runs():
    cfg = EnhancerConfig(channels=TINY.channels, use_se=False)
    net = build_enhancer(cfg, seed=0)
    out = net(torch.rand(2, 3, 64, 64))
    assert out.shape == (2, 3, 64, 64)
    assert net.se_blocks is None
    # disabled embedding allocates no parameters
    assert count_parameters(net) < count_parameters(build_enhancer(TINY, seed=0))


def test_enhancer_se_bypass_keeps_valid_output():
    prov = OracleSemanticProvider(4, TINY.semantic_channels)
    net = build_enhancer(TINY, seed=0)
    net.set_se_enabled(False)
    out = net(torch.rand(1, 3, 64, 64))
    assert out.shape == (1, 3, 64, 64)


def test_enhancer_determinism():
    prov = OracleSemanticProvider(4, TINY.semantic_channels, seed=1)
    prior, img, _ = make_prior(prov)
    n1 = build_enhancer(TINY, seed=5)
    n2 = build_enhancer(TINY, seed=5)
    assert parameter_hash(n1) == parameter_hash(n2)
    o1 = enhance(img, prior, n1)
    o2 = enhance(img, prior, n2)
    assert torch.equal(o1, o2)


def test_backbone_init_independent_of_se_toggle():
    with_se = build_enhancer(TINY, seed=7)
    without = build_enhancer(
        EnhancerConfig(channels=TINY.channels, semantic_channels=TINY.semantic_channels, use_se=False),
        seed=7,
    )
    without_params = dict(without.named_parameters())
    for name, p in with_se.named_parameters():
        if name.startswith("se_blocks"):
            continue
        assert torch.equal(p, without_params[name]), name


def test_se_bypass_zero_gradients_on_se_parameters():
    prov = OracleSemanticProvider(4, TINY.semantic_channels)
    prior, img, _ = make_prior(prov)
    net = build_enhancer(TINY, seed=0)
    net.set_se_enabled(False)
    out = net(img.permute(2, 0, 1).unsqueeze(0))
    loss = (out - 0.5).abs().mean()
    loss.backward()
    for name, p in net.named_parameters():
        if name.startswith("se_blocks"):
            assert p.grad is None or p.grad.abs().max() == 0
        else:
            assert p.grad is not None


def analytic_parameter_count(cfg: EnhancerConfig):
    c2, c1, c0 = cfg.channels
    s = cfg.semantic_channels
    n = 0
    n += 3 * 9 * c2 + c2  # stem
    n += 4 * c2 * c2 + c2  # down_half
    n += 9 * c2 * c2 + c2  # enc_half
    n += 4 * c2 * c2 + c2  # down_quarter
    n += 9 * c2 * c2 + c2  # enc_quarter
    n += 4 * c2 * c1 + c1  # down_eighth
    n += 9 * c1 * c1 + c1  # enc_eighth
    n += 4 * c1 * c0 + c0  # down_sixteenth
    n += 9 * c0 * c0 + c0  # enc_sixteenth
    n += 9 * (c0 + c1) * c1 + c1  # fuse_eighth
    n += 9 * (c1 + c2) * c2 + c2  # fuse_quarter
    n += 9 * 2 * c2 * c2 + c2  # fuse_half
    n += 9 * 2 * c2 * c2 + c2  # fuse_full
    n += 3 * c2 + 3  # head
    if cfg.use_se:
        for c in (c0, c1, c2):
            n += 6 * c * c + s * c + 8 * c + 2 * s
    return n


def test_parameter_count_matches_analytic_formula():
    for cfg in [TINY, EnhancerConfig(channels=(16, 32, 64)), EnhancerConfig(channels=(16, 32, 64), use_se=False)]:
        net = EnhancementNet(cfg)
        assert count_parameters(net) == analytic_parameter_count(cfg)


def test_se_interaction_resolutions_level_contract():
    # blocks at levels 0, 1, 2 of a 64x64 input interact at 4x4, 8x8, 16x16
    prov = OracleSemanticProvider(4, TINY.semantic_channels)
    net = build_enhancer(TINY, seed=0)
    prior, img, _ = make_prior(prov, 64, 64)
    seen = {}

    def hook(level):
        def fn(module, args, out):
            seen[level] = tuple(args[0].shape[-2:])
        return fn

    handles = [net.se_blocks[b].register_forward_hook(hook(b)) for b in range(3)]
    net(img.permute(2, 0, 1).unsqueeze(0), [f.unsqueeze(0) for f in prior.features])
    for h in handles:
        h.remove()
    assert seen == {0: (4, 4), 1: (8, 8), 2: (16, 16)}


def test_widen_to_match_parameter_budget():
    cfg = EnhancerConfig(channels=(16, 32, 64), semantic_channels=16, use_se=True)
    large = widen_to_match(cfg)
    assert not large.use_se
    target = count_parameters(EnhancementNet(cfg))
    got = count_parameters(EnhancementNet(large))
    assert abs(got - target) / target <= 0.05
