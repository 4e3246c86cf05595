"""Semantic feature embedding: channel-transposed cross attention at decoder scales.

At decoder level b the image feature map and the matching semantic feature map
(both at resolution H/2^(4-b) x W/2^(4-b)) interact through a C x C attention
map built by contracting over spatial positions, so the cost stays linear in
resolution.  Queries come from the semantic features, keys and values from the
image features; each output channel mixes value channels through a softmax row.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InputError

LEVELS = (0, 1, 2)


def level_resolution(level: int, height: int, width: int):
    """Spatial resolution of the interaction at decoder level b: (H, W) / 2^(4-b)."""
    if level not in LEVELS:
        raise InputError(f"level must be one of {LEVELS}, got {level}")
    if height % 16 or width % 16:
        raise InputError(f"spatial dims must be divisible by 16, got {height}x{width}")
    f = 2 ** (4 - level)
    return height // f, width // f


class ChannelLayerNorm(nn.Module):
    """Layer normalization over the channel axis at every spatial position."""

    def __init__(self, channels, eps=1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, keepdim=True, unbiased=False)
        x = (x - mu) / torch.sqrt(var + self.eps)
        return x * self.weight[None, :, None, None] + self.bias[None, :, None, None]


class FeedForward(nn.Module):
    """Pointwise conv -> GELU -> pointwise conv with a residual connection.

    ``identity=True`` switches to a passthrough used by tests to isolate the
    attention path.
    """

    def __init__(self, channels, hidden=None, identity=False):
        super().__init__()
        self.identity = identity
        hidden = hidden or 2 * channels
        self.conv_in = nn.Conv2d(channels, hidden, 1)
        self.conv_out = nn.Conv2d(hidden, channels, 1)

    def forward(self, x):
        if self.identity:
            return x
        return x + self.conv_out(F.gelu(self.conv_in(x)))


def _with_batch(x, name):
    t = torch.as_tensor(x)
    if t.ndim == 3:
        return t.unsqueeze(0), True
    if t.ndim == 4:
        return t, False
    raise InputError(f"{name} must have shape (C, h, w) or (B, C, h, w), got {tuple(t.shape)}")


class SemanticEmbedding(nn.Module):
    """Fuses a semantic feature map into an image feature map of the same resolution.

    Attention is computed channel-against-channel: with Q from the (projected)
    semantic features and K from the image features, each reshaped to C x hw,

        A = softmax(Q K^T / sqrt(C))        rows sum to 1

    and the refined output is FN(reshape(A V) + image_features), V likewise
    projected from the image features.  The softmax runs over the value-channel
    axis so A V is a convex mixture of value channels.  The temperature is the
    fixed constant sqrt(C).
    """

    def __init__(self, image_channels, semantic_channels=None, use_norm=True, identity_ffn=False):
        super().__init__()
        semantic_channels = semantic_channels or image_channels
        self.image_channels = image_channels
        self.semantic_channels = semantic_channels
        if use_norm:
            self.norm_image = ChannelLayerNorm(image_channels)
            self.norm_semantic = ChannelLayerNorm(semantic_channels)
        else:
            self.norm_image = nn.Identity()
            self.norm_semantic = nn.Identity()
        self.to_q = nn.Conv2d(semantic_channels, image_channels, 1)
        self.to_k = nn.Conv2d(image_channels, image_channels, 1)
        self.to_v = nn.Conv2d(image_channels, image_channels, 1)
        self.ffn = FeedForward(image_channels, identity=identity_ffn)

    def _validate(self, image_feat, semantic_feat):
        if image_feat.shape[1] != self.image_channels:
            raise InputError(
                f"image features have {image_feat.shape[1]} channels, expected {self.image_channels}"
            )
        if semantic_feat.shape[1] != self.semantic_channels:
            raise InputError(
                f"semantic features have {semantic_feat.shape[1]} channels, "
                f"expected {self.semantic_channels}"
            )
        if image_feat.shape[-2:] != semantic_feat.shape[-2:] or image_feat.shape[0] != semantic_feat.shape[0]:
            raise InputError(
                f"image/semantic feature dims mismatch: {tuple(image_feat.shape)} vs "
                f"{tuple(semantic_feat.shape)}"
            )

    def attention(self, image_feat, semantic_feat):
        """Channel attention map, shape (C, C) for 3-D inputs, (B, C, C) for 4-D."""
        fi, squeeze = _with_batch(image_feat, "image features")
        fs, _ = _with_batch(semantic_feat, "semantic features")
        self._validate(fi, fs)
        b, c = fi.shape[0], self.image_channels
        q = self.to_q(self.norm_semantic(fs)).reshape(b, c, -1)
        k = self.to_k(self.norm_image(fi)).reshape(b, c, -1)
        attn = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(c), dim=-1)
        return attn[0] if squeeze else attn

    def forward(self, image_feat, semantic_feat):
        fi, squeeze = _with_batch(image_feat, "image features")
        fs, _ = _with_batch(semantic_feat, "semantic features")
        self._validate(fi, fs)
        b, c, h, w = fi.shape
        normed = self.norm_image(fi)
        q = self.to_q(self.norm_semantic(fs)).reshape(b, c, -1)
        k = self.to_k(normed).reshape(b, c, -1)
        v = self.to_v(normed).reshape(b, c, -1)
        attn = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(c), dim=-1)
        mixed = (attn @ v).reshape(b, c, h, w)
        out = self.ffn(mixed + fi)
        return out[0] if squeeze else out
