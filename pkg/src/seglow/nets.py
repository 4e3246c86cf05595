"""Reference enhancement network and frozen semantic providers.

The enhancer is a small encoder-decoder: stride-2 convolutions down to 1/16
resolution, then a decoder that fuses skip features at each scale.  At decoder
levels b = 0, 1, 2 (resolutions 1/16, 1/8, 1/4) the image features can pass
through a semantic embedding block driven by the provider's multi-scale
features; the embedded output feeds the next decoder stage.  The head is
sigmoid-bounded so outputs always lie in [0, 1].

Providers supply the semantic prior for an input image: an integer label map,
pre-softmax class logits, and feature maps at the three decoder scales.  Their
parameters are frozen: they are never part of any optimizer and a content hash
is exposed so training can assert they stayed untouched.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .embedding import SemanticEmbedding
from .errors import ConfigurationError, InputError


@dataclass
class SemanticPrior:
    """Label map, pre-softmax logits, and coarse-to-fine feature maps (b = 0, 1, 2)."""

    label_map: torch.Tensor  # (H, W) long
    logits: torch.Tensor  # (K, H, W)
    features: list  # [ (C_s, H/16, W/16), (C_s, H/8, W/8), (C_s, H/4, W/4) ]


@dataclass
class EnhancerConfig:
    channels: tuple = (32, 64, 128)  # widths at decoder levels b = 2, 1, 0
    num_classes: int = 4
    semantic_channels: int = 16
    use_se: bool = True


def seeded_init_(module, seed):
    """Deterministically reinitialize conv/linear/norm parameters of a module.

    Weights follow the usual fan-in uniform scheme, driven by a private numpy
    generator so initialization is independent of torch's global RNG and of any
    sibling modules constructed before or after this one.
    """
    rng = np.random.default_rng(seed)
    for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        if p.ndim >= 2:  # conv / linear weights
            fan_in = p[0].numel()
            bound = 1.0 / np.sqrt(fan_in)
            vals = rng.uniform(-bound, bound, size=tuple(p.shape))
            with torch.no_grad():
                p.copy_(torch.from_numpy(vals).to(p.dtype))
        elif name.endswith("bias"):
            fan_in = _bias_fan_in(module, name)
            bound = 1.0 / np.sqrt(fan_in) if fan_in else 0.0
            vals = rng.uniform(-bound, bound, size=tuple(p.shape))
            with torch.no_grad():
                p.copy_(torch.from_numpy(vals).to(p.dtype))
        # norm weights keep their ones/zeros defaults


def _bias_fan_in(module, bias_name):
    weight_name = bias_name[: -len("bias")] + "weight"
    for name, p in module.named_parameters():
        if name == weight_name and p.ndim >= 2:
            return p[0].numel()
    return 0


def component_seed(master_seed, name):
    """Stable per-component seed derived from the master seed and a label."""
    digest = hashlib.sha256(f"{master_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def parameter_hash(module):
    """SHA-256 over all parameter bytes in sorted name order."""
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())


class OracleSemanticProvider(nn.Module):
    """Frozen provider backed by ground-truth label maps.

    Logits are the one-hot label map scaled by a confidence constant (6.0 puts
    ~0.99 softmax mass on the true class for 4 classes); feature maps come from
    a small frozen randomly initialized conv encoder applied to the one-hot map.
    """

    def __init__(self, num_classes, feature_channels=16, confidence=6.0, seed=0):
        super().__init__()
        self.num_classes = num_classes
        self.feature_channels = feature_channels
        self.confidence = confidence
        c = feature_channels
        self.down_half = nn.Sequential(nn.Conv2d(num_classes, c, 3, 2, 1), nn.LeakyReLU(0.2))
        self.down_quarter = nn.Sequential(nn.Conv2d(c, c, 3, 2, 1), nn.LeakyReLU(0.2))
        self.down_eighth = nn.Sequential(nn.Conv2d(c, c, 3, 2, 1), nn.LeakyReLU(0.2))
        self.down_sixteenth = nn.Sequential(nn.Conv2d(c, c, 3, 2, 1), nn.LeakyReLU(0.2))
        seeded_init_(self, component_seed(seed, "semantic-provider"))
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def provide(self, image, *, label_map=None, key=None) -> SemanticPrior:
        if label_map is None:
            raise InputError("oracle provider needs the ground-truth label map")
        lab = torch.as_tensor(label_map).long()
        if int(lab.max()) >= self.num_classes:
            raise InputError(
                f"label map contains class {int(lab.max())} but provider has "
                f"{self.num_classes} classes"
            )
        onehot = F.one_hot(lab, self.num_classes).permute(2, 0, 1).float()
        logits = onehot * self.confidence
        with torch.no_grad():
            half = self.down_half(onehot.unsqueeze(0))
            quarter = self.down_quarter(half)
            eighth = self.down_eighth(quarter)
            sixteenth = self.down_sixteenth(eighth)
        return SemanticPrior(
            label_map=lab,
            logits=logits,
            features=[sixteenth[0], eighth[0], quarter[0]],
        )


class FileSemanticProvider:
    """Loads precomputed label maps, logits, and features from `<key>.npz` files."""

    def __init__(self, root):
        from pathlib import Path

        self.root = Path(root)

    def provide(self, image, *, label_map=None, key=None) -> SemanticPrior:
        if key is None:
            raise InputError("file provider needs a sample key")
        path = self.root / f"{key}.npz"
        if not path.exists():
            raise InputError(f"semantic prior file not found: {path}")
        arrays = np.load(path)
        needed = ["label_map", "logits", "feat_0", "feat_1", "feat_2"]
        missing = [n for n in needed if n not in arrays]
        if missing:
            raise InputError(f"semantic prior file {path} missing arrays: {missing}")
        return SemanticPrior(
            label_map=torch.from_numpy(arrays["label_map"]).long(),
            logits=torch.from_numpy(arrays["logits"]).float(),
            features=[torch.from_numpy(arrays[f"feat_{b}"]).float() for b in range(3)],
        )

    def parameters(self):
        return iter(())


def make_provider(name, *, num_classes=4, feature_channels=16, confidence=6.0, seed=0, root=None):
    if name == "oracle":
        return OracleSemanticProvider(num_classes, feature_channels, confidence, seed)
    if name == "file":
        if root is None:
            raise ConfigurationError("file provider needs a root directory")
        return FileSemanticProvider(root)
    raise ConfigurationError(f"unknown semantic provider: {name}")


def _conv_block(cin, cout):
    return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1), nn.LeakyReLU(0.2))


def _down(cin, cout):
    return nn.Conv2d(cin, cout, 2, stride=2)


class EnhancementNet(nn.Module):
    """Encoder-decoder image enhancer with optional semantic embedding blocks."""

    def __init__(self, config: EnhancerConfig):
        super().__init__()
        self.config = config
        c2, c1, c0 = config.channels  # widths at 1/4, 1/8, 1/16

        self.stem = _conv_block(3, c2)
        self.down_half = _down(c2, c2)
        self.enc_half = _conv_block(c2, c2)
        self.down_quarter = _down(c2, c2)
        self.enc_quarter = _conv_block(c2, c2)
        self.down_eighth = _down(c2, c1)
        self.enc_eighth = _conv_block(c1, c1)
        self.down_sixteenth = _down(c1, c0)
        self.enc_sixteenth = _conv_block(c0, c0)

        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.fuse_eighth = _conv_block(c0 + c1, c1)
        self.fuse_quarter = _conv_block(c1 + c2, c2)
        self.fuse_half = _conv_block(c2 + c2, c2)
        self.fuse_full = _conv_block(c2 + c2, c2)
        self.head = nn.Conv2d(c2, 3, 1)

        if config.use_se:
            s = config.semantic_channels
            self.se_blocks = nn.ModuleList(
                [SemanticEmbedding(c0, s), SemanticEmbedding(c1, s), SemanticEmbedding(c2, s)]
            )
        else:
            self.se_blocks = None
        self.se_enabled = config.use_se

    def set_se_enabled(self, enabled):
        """Runtime bypass of the semantic embedding blocks (parameters stay allocated)."""
        self.se_enabled = enabled and self.se_blocks is not None

    def _check_dims(self, x):
        h, w = x.shape[-2:]
        if h % 16 or w % 16:
            raise InputError(f"input dims must be divisible by 16, got {h}x{w}")

    def _maybe_embed(self, level, feat, features):
        if not self.se_enabled or self.se_blocks is None:
            return feat
        semantic = features[level]
        if semantic.ndim == 3:
            semantic = semantic.unsqueeze(0)
        if semantic.shape[0] == 1 and feat.shape[0] > 1:
            semantic = semantic.expand(feat.shape[0], -1, -1, -1)
        if semantic.shape[-2:] != feat.shape[-2:]:
            raise InputError(
                f"semantic features at level {level} have resolution "
                f"{tuple(semantic.shape[-2:])}, expected {tuple(feat.shape[-2:])}"
            )
        return self.se_blocks[level](feat, semantic)

    def forward(self, low, features=None):
        """low: (B, 3, H, W) in [0, 1]; features: per-level semantic maps or None."""
        squeeze = low.ndim == 3
        if squeeze:
            low = low.unsqueeze(0)
        self._check_dims(low)
        if self.se_enabled and features is None:
            raise InputError("semantic features required while embedding is enabled")

        s = self.stem(low)
        e_half = self.enc_half(self.down_half(s))
        e_quarter = self.enc_quarter(self.down_quarter(e_half))
        e_eighth = self.enc_eighth(self.down_eighth(e_quarter))
        e_sixteenth = self.enc_sixteenth(self.down_sixteenth(e_eighth))

        d0 = self._maybe_embed(0, e_sixteenth, features)
        d1 = self.fuse_eighth(torch.cat([self.up(d0), e_eighth], dim=1))
        d1 = self._maybe_embed(1, d1, features)
        d2 = self.fuse_quarter(torch.cat([self.up(d1), e_quarter], dim=1))
        d2 = self._maybe_embed(2, d2, features)
        d3 = self.fuse_half(torch.cat([self.up(d2), e_half], dim=1))
        d4 = self.fuse_full(torch.cat([self.up(d3), s], dim=1))
        out = torch.sigmoid(self.head(d4))
        return out[0] if squeeze else out


def build_enhancer(config: EnhancerConfig, seed=0) -> EnhancementNet:
    """Construct an enhancer with deterministic, component-isolated initialization.

    The backbone and each embedding block get independent seeds, so toggling
    the embedding blocks on or off never changes the backbone's init values.
    """
    net = EnhancementNet(config)
    for name, module in sorted(net.named_children()):
        if name == "se_blocks":
            continue
        seeded_init_(module, component_seed(seed, f"enhancer/{name}"))
    if net.se_blocks is not None:
        for b, block in enumerate(net.se_blocks):
            seeded_init_(block, component_seed(seed, f"se/{b}"))
            # zeroed value path and output conv make each block an exact
            # identity at init: enabling it changes nothing at step 0
            with torch.no_grad():
                block.to_v.weight.zero_()
                block.to_v.bias.zero_()
                block.ffn.conv_out.weight.zero_()
                block.ffn.conv_out.bias.zero_()
    return net


def enhance(low, prior: SemanticPrior, net: EnhancementNet):
    """Map one low-light image (H, W, 3) to its enhanced version using a prior."""
    x = torch.as_tensor(low)
    if x.ndim != 3 or x.shape[-1] != 3:
        raise InputError(f"expected image of shape (H, W, 3), got {tuple(x.shape)}")
    chw = x.permute(2, 0, 1).to(next(net.parameters()).dtype)
    with torch.no_grad():
        out = net(chw, [f for f in prior.features] if prior is not None else None)
    return out.permute(1, 2, 0)


def widen_to_match(config: EnhancerConfig, tolerance=0.05):
    """Widened no-embedding config whose parameter count matches the embedded one.

    Searches a global width multiplier until the plain network is within
    ``tolerance`` of the embedding-equipped parameter count.
    """
    target = count_parameters(EnhancementNet(config))
    best = None
    for mult in np.arange(1.0, 2.0, 0.01):
        channels = tuple(max(4, int(round(m * mult))) for m in config.channels)
        cand = EnhancerConfig(
            channels=channels,
            num_classes=config.num_classes,
            semantic_channels=config.semantic_channels,
            use_se=False,
        )
        n = count_parameters(EnhancementNet(cand))
        gap = abs(n - target) / target
        if best is None or gap < best[0]:
            best = (gap, cand, n)
        if n > target * (1 + tolerance):
            break
    gap, cand, n = best
    if gap > tolerance:
        raise ConfigurationError(
            f"could not match parameter count within {tolerance:.0%} (best gap {gap:.1%})"
        )
    return cand
