"""Segmentation-guided low-light image enhancement.

A desk-scale framework that injects segmentation priors into an image
enhancement network three ways: a semantic feature embedding block inside the
decoder, a per-segment differentiable color histogram loss, and a pair of
segment-aware adversarial losses.  Ships with a synthetic paired dataset
generator with exact ground-truth segmentation, full-reference metrics, and a
train/eval CLI.
"""

__version__ = "0.1.0"

from .adversarial import (
    PatchDiscriminator,
    extract_fake_patches,
    global_adversarial_losses,
    local_adversarial_losses,
    sa_loss,
    select_target_fake_patch,
)
from .data import DatasetConfig, DegradeConfig, SceneConfig, build_dataset, degrade, generate_scene
from .embedding import SemanticEmbedding, level_resolution
from .errors import (
    ConfigurationError,
    DataFormatError,
    InputError,
    NoCandidatesError,
    SeglowError,
    TrainingAbort,
)
from .histogram import (
    SoftHistogram,
    erode_segment_masks,
    sch_loss,
    segment_histograms,
    soft_histogram,
    split_into_patches,
)
from .metrics import psnr, segment_color_error, ssim
from .nets import (
    EnhancementNet,
    EnhancerConfig,
    OracleSemanticProvider,
    build_enhancer,
    enhance,
    make_provider,
    widen_to_match,
)
from .trainer import TrainConfig, ablate, parse_config, total_loss, train
