"""Predictive video VAE with latent-space diagnostics, at desk scale."""

from .model import (
    LatentPosterior,
    LatentSequence,
    VaeConfig,
    VaeModel,
    VideoClip,
    build_model,
    decode,
    encode,
    latent_shape,
    reparameterize,
)
from .predictive import (
    DropPlan,
    PaddingParams,
    pad_latents,
    partition_groups,
    plan_drop,
    predictive_forward,
    sample_drop,
    truncate_clip,
)
from .losses import LossReport, LossWeights, gan_losses, kl_loss, mse_loss, temporal_diff_loss, total_loss

__version__ = "0.1.0"
