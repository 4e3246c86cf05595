"""Segment-guided adversarial losses: local worst-patch and segmentation-conditioned global.

The local path turns each eroded segment of the network output into a candidate
fake patch (tight crop, zeroed outside the mask, resized to a fixed size).  The
discriminator scores every candidate and the one judged least real is selected
as the target fake patch for both the discriminator and generator updates; real
patches are random crops from ground-truth images.  The global path conditions
a second discriminator on the image concatenated with pre-softmax segmentation
scores.  All objectives are least-squares (MSE against scalar labels).

Label conventions: ``standard`` trains the discriminator toward real=1/fake=0
with the generator pushing fakes toward 1.  ``paper`` flips the targets
(real=0, fake=1, generator target 0), matching the literal min-max objective
some formulations write down; both give identical selection behavior since the
target patch is always the argmin of the discriminator score.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, InputError, NoCandidatesError
from .histogram import erode_segment_masks, split_into_patches

LABEL_CONVENTIONS = {
    # (real_target, fake_target, generator_target)
    "standard": (1.0, 0.0, 1.0),
    "paper": (0.0, 1.0, 0.0),
}


@dataclass
class PatchSample:
    """A candidate patch: channel-first pixels with the resized segment mask."""

    pixels: torch.Tensor  # (3, p, p)
    mask: torch.Tensor  # (p, p) bool; all ones for real crops
    class_id: int | None = None


@dataclass
class LocalAdvResult:
    loss_d: torch.Tensor
    loss_g: torch.Tensor
    target_class: int
    scores: list  # [(class_id, float score)]


class PatchDiscriminator(nn.Module):
    """Four stride-2 conv layers and a 1-channel scoring head (no normalization)."""

    def __init__(self, in_channels=3, base_width=32):
        super().__init__()
        w = base_width
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(w, 2 * w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * w, 4 * w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(4 * w, 4 * w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
        )
        self.head = nn.Conv2d(4 * w, 1, 3, padding=1)
        self.in_channels = in_channels

    def forward(self, x):
        return self.head(self.body(x))

    def score(self, x):
        """Mean score map per batch element, shape (B,)."""
        return self.forward(x).mean(dim=(1, 2, 3))


def extract_fake_patches(enhanced, label_map, patch_size=64, erosion_radius=2):
    """Candidate fake patches, one per non-empty eroded segment of the output.

    Each candidate is the tight bounding box of the eroded mask, zeroed outside
    the mask and bilinearly resized to patch_size x patch_size.  Gradients flow
    to the enhanced pixels inside the segment only.
    """
    if patch_size < 8:
        raise InputError(f"patch size must be >= 8, got {patch_size}")
    patch_set = erode_segment_masks(split_into_patches(enhanced, label_map), erosion_radius)
    img = torch.as_tensor(enhanced)
    candidates = []
    for p in patch_set.patches:
        if p.eroded_empty:
            continue
        ys, xs = torch.nonzero(p.mask, as_tuple=True)
        y0, y1 = int(ys.min()), int(ys.max()) + 1
        x0, x1 = int(xs.min()), int(xs.max()) + 1
        crop = img[y0:y1, x0:x1] * p.mask[y0:y1, x0:x1, None]
        chw = crop.permute(2, 0, 1).unsqueeze(0)
        resized = F.interpolate(chw, size=(patch_size, patch_size), mode="bilinear", align_corners=False)
        mask = F.interpolate(
            p.mask[None, None, y0:y1, x0:x1].float(), size=(patch_size, patch_size), mode="nearest"
        )[0, 0]
        pixels = resized[0] * mask
        candidates.append(PatchSample(pixels=pixels, mask=mask > 0.5, class_id=p.class_id))
    if not candidates:
        raise NoCandidatesError("every segment eroded to empty; no fake patch candidates")
    return candidates


def select_target_fake_patch(scores):
    """Class id of the minimum discriminator score; ties go to the lowest class id."""
    if not scores:
        raise InputError("no discriminator scores to select from")
    best_class, best_score = None, None
    for class_id, score in scores:
        s = float(score)
        if best_score is None or s < best_score or (s == best_score and class_id < best_class):
            best_class, best_score = class_id, s
    return best_class


def crop_real_patches(images, count, patch_size, rng):
    """Uniform-random patch_size crops from a stack of (H, W, 3) ground-truth images."""
    out = []
    n = len(images)
    for i in range(count):
        img = torch.as_tensor(images[int(rng.integers(0, n))])
        h, w = img.shape[:2]
        if h < patch_size or w < patch_size:
            raise InputError(f"image {h}x{w} smaller than patch size {patch_size}")
        y = int(rng.integers(0, h - patch_size + 1))
        x = int(rng.integers(0, w - patch_size + 1))
        crop = img[y : y + patch_size, x : x + patch_size].permute(2, 0, 1)
        out.append(PatchSample(pixels=crop, mask=torch.ones(patch_size, patch_size, dtype=torch.bool)))
    return out


def local_adversarial_losses(real_patches, fake_candidates, disc, convention="standard"):
    """Least-squares losses of the worst-patch local discriminator.

    loss_d scores real crops against the real target and the detached worst
    patch against the fake target; loss_g scores the live worst patch against
    the generator target, so only loss_g carries gradient into the generator.
    """
    if convention not in LABEL_CONVENTIONS:
        raise ConfigurationError(f"unknown gan label convention: {convention}")
    if not fake_candidates:
        raise NoCandidatesError("no fake patch candidates")
    if not real_patches:
        raise InputError("need at least one real patch")
    real_t, fake_t, gen_t = LABEL_CONVENTIONS[convention]

    fake_batch = torch.stack([p.pixels for p in fake_candidates])
    cand_scores = disc.score(fake_batch)
    score_list = [(p.class_id, s) for p, s in zip(fake_candidates, cand_scores.detach().tolist())]
    target_class = select_target_fake_patch(score_list)
    t_idx = [p.class_id for p in fake_candidates].index(target_class)

    real_batch = torch.stack([p.pixels for p in real_patches])
    real_scores = disc.score(real_batch)
    target_score_detached = disc.score(fake_batch[t_idx : t_idx + 1].detach())[0]

    loss_d = ((real_scores - real_t) ** 2).mean() + (target_score_detached - fake_t) ** 2
    loss_g = (cand_scores[t_idx] - gen_t) ** 2
    return LocalAdvResult(loss_d=loss_d, loss_g=loss_g, target_class=target_class, scores=score_list)


def global_adversarial_losses(
    real_image, fake_image, seg_logits_real, seg_logits_fake, disc, convention="standard"
):
    """Least-squares losses of the segmentation-conditioned global discriminator.

    Both samples are channel-concatenated with pre-softmax segmentation scores
    at image resolution; the discriminator width must match 3 + class channels.
    Accepts (3, H, W)/(K, H, W) single samples or batched 4-D tensors.
    """
    if convention not in LABEL_CONVENTIONS:
        raise ConfigurationError(f"unknown gan label convention: {convention}")
    real_t, fake_t, gen_t = LABEL_CONVENTIONS[convention]

    def prep(img, logits):
        img = torch.as_tensor(img)
        logits = torch.as_tensor(logits)
        if img.ndim == 3:
            img = img.unsqueeze(0)
            logits = logits.unsqueeze(0)
        if img.shape[-2:] != logits.shape[-2:]:
            raise InputError("segmentation logits resolution does not match the image")
        return torch.cat([img, logits.to(img.dtype)], dim=1)

    real_in = prep(real_image, seg_logits_real)
    fake_in = prep(fake_image, seg_logits_fake)
    if real_in.shape[1] != disc.in_channels or fake_in.shape[1] != disc.in_channels:
        raise ConfigurationError(
            f"global discriminator expects {disc.in_channels} input channels, "
            f"got {fake_in.shape[1]}"
        )

    loss_d = ((disc.score(real_in) - real_t) ** 2).mean() + (
        (disc.score(fake_in.detach()) - fake_t) ** 2
    ).mean()
    loss_g = ((disc.score(fake_in) - gen_t) ** 2).mean()
    return loss_d, loss_g


def sa_loss(local_g, global_g):
    """Total adversarial generator loss: local worst-patch plus global term."""
    return local_g + global_g
