"""Training losses: reconstruction, motion-aware temporal difference, KL,
pluggable perceptual distance, and hinge adversarial terms.

The weighted total is

    lambda_rec * (mse + diff) + lambda_lpips * lpips
        + lambda_gan * gan_g * [step >= gan_start_step] + lambda_kl * kl

All component losses accept either numpy clips (1+T, H, W, 3) / ``VideoClip``
or batched torch tensors (N, 3, 1+T, H, W); tensor inputs keep gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, NumericError, ShapeError
from .model import LatentPosterior, VideoClip


@dataclass(frozen=True)
class LossWeights:
    lambda_rec: float = 1.0
    lambda_lpips: float = 0.1
    lambda_gan: float = 0.05
    lambda_kl: float = 1e-6
    gan_start_step: int = 5000

    def __post_init__(self):
        for name in ("lambda_rec", "lambda_lpips", "lambda_gan", "lambda_kl"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name}={v} must be finite and >= 0")

    @staticmethod
    def toy(**overrides) -> "LossWeights":
        # No pretrained perceptual net ships with the package, so the
        # perceptual term defaults off at toy scale.
        base = dict(lambda_lpips=0.0)
        base.update(overrides)
        return LossWeights(**base)


@dataclass
class LossReport:
    """Decomposed loss terms and their weighted total for one step."""

    mse: float
    diff: float
    lpips: float
    gan_g: float
    gan_d: float
    kl: float
    total: float
    step: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("step", "total", "mse", "diff", "lpips", "gan_g", "gan_d", "kl")}


def _as_clip_tensor(x) -> torch.Tensor:
    """Canonicalize to (N, 3, frames, H, W)."""
    if isinstance(x, VideoClip):
        x = x.data
    if isinstance(x, np.ndarray):
        if x.ndim != 4 or x.shape[-1] != 3:
            raise ShapeError(f"numpy clips must be (1+T, H, W, 3), got {x.shape}")
        return torch.from_numpy(np.ascontiguousarray(x)).permute(3, 0, 1, 2).unsqueeze(0)
    if isinstance(x, torch.Tensor):
        if x.ndim != 5:
            raise ShapeError(f"tensor clips must be (N, 3, frames, H, W), got {tuple(x.shape)}")
        return x
    raise ShapeError(f"unsupported clip type {type(x)!r}")


def mse_loss(recon, target) -> torch.Tensor:
    """Mean squared error over every element of the full sequence."""
    a, b = _as_clip_tensor(recon), _as_clip_tensor(target)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).mean()


def temporal_diff_loss(recon, target) -> torch.Tensor:
    """MSE between adjacent-frame differences of recon and target.

    Static content cancels out of both difference sequences, so this term
    penalizes motion errors only. Single-frame clips score zero by convention.
    """
    a, b = _as_clip_tensor(recon), _as_clip_tensor(target)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.shape[2] < 2:
        return a.sum() * 0.0
    da = a[:, :, 1:] - a[:, :, :-1]
    db = b[:, :, 1:] - b[:, :, :-1]
    return ((da - db) ** 2).mean()


def kl_loss(post) -> torch.Tensor:
    """Mean-per-element KL(N(mu, sigma^2) || N(0, 1)).

    Accepts a LatentPosterior, a (mean, logvar) tensor pair, or a list of
    pairs with varying temporal lengths (averaged clip-by-clip).
    """
    if isinstance(post, LatentPosterior):
        pairs = [(torch.from_numpy(post.mean), torch.from_numpy(post.logvar))]
    elif isinstance(post, (tuple,)):
        pairs = [post]
    elif isinstance(post, list):
        pairs = post
    else:
        raise ShapeError(f"unsupported posterior type {type(post)!r}")
    terms = []
    for mean, logvar in pairs:
        if not torch.isfinite(mean).all() or not torch.isfinite(logvar).all():
            raise NumericError("posterior contains non-finite values")
        terms.append(0.5 * (mean ** 2 + torch.exp(logvar) - 1.0 - logvar).mean())
    return torch.stack(terms).mean()


# -----------------------------------------------------------------------------
# Perceptual distance (pluggable; default is a fixed random pyramid)
# -----------------------------------------------------------------------------

class FeaturePyramid(nn.Module):
    """Frozen, randomly initialized multi-scale 2D conv features.

    A stand-in for a pretrained perceptual network: deterministic given the
    seed, never trained, used only to compare feature statistics.
    """

    def __init__(self, seed: int = 0, widths: tuple[int, ...] = (16, 32, 64)):
        super().__init__()
        torch.manual_seed(seed)
        layers = []
        in_ch = 3
        for w in widths:
            layers.append(nn.Conv2d(in_ch, w, 3, padding=1))
            in_ch = w
        self.convs = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, frames: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = frames
        for conv in self.convs:
            h = F.silu(conv(h))
            feats.append(h)
            h = F.avg_pool2d(h, 2) if min(h.shape[-2:]) >= 2 else h
        return feats


def perceptual_loss(extractor: FeaturePyramid, recon, target) -> torch.Tensor:
    """Mean squared feature difference across scales and frames; zero iff the
    extracted features agree."""
    a, b = _as_clip_tensor(recon), _as_clip_tensor(target)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    n, c, t, h, w = a.shape
    fa = extractor(a.permute(0, 2, 1, 3, 4).reshape(n * t, c, h, w))
    fb = extractor(b.permute(0, 2, 1, 3, 4).reshape(n * t, c, h, w))
    return torch.stack([((x - y) ** 2).mean() for x, y in zip(fa, fb)]).mean()


# -----------------------------------------------------------------------------
# Hinge GAN on a small 3D patch critic
# -----------------------------------------------------------------------------

class PatchDiscriminator(nn.Module):
    """4-layer strided 3D conv critic emitting per-patch logits."""

    def __init__(self, base: int = 32, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv3d(3, base, (3, 4, 4), stride=(1, 2, 2), padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv3d(base, base * 2, (3, 4, 4), stride=(2, 2, 2), padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv3d(base * 2, base * 4, (3, 4, 4), stride=(2, 2, 2), padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv3d(base * 4, 1, 3, stride=1, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def gan_losses(disc, recon, target) -> tuple[torch.Tensor, torch.Tensor]:
    """Hinge losses: gan_d scores real vs detached fake, gan_g = -E[D(fake)].

    Generator gradients flow only through the fake branch of gan_g.
    """
    a, b = _as_clip_tensor(recon), _as_clip_tensor(target)
    d_real = disc(b.detach() if isinstance(b, torch.Tensor) else b)
    d_fake_det = disc(a.detach())
    gan_d = F.relu(1.0 - d_real).mean() + F.relu(1.0 + d_fake_det).mean()
    gan_g = -disc(a).mean()
    return gan_g, gan_d


# -----------------------------------------------------------------------------
# Weighted combination
# -----------------------------------------------------------------------------

def weighted_total(weights: LossWeights, components: dict, step: int):
    """The loss formula, shared by reporting and the training graph."""
    gate = 1.0 if step >= weights.gan_start_step else 0.0
    return (weights.lambda_rec * (components["mse"] + components["diff"])
            + weights.lambda_lpips * components["lpips"]
            + weights.lambda_gan * components["gan_g"] * gate
            + weights.lambda_kl * components["kl"])


def total_loss(weights: LossWeights, components: dict, step: int) -> LossReport:
    """Assemble a LossReport; the GAN term is gated by ``gan_start_step``."""
    comps = {k: float(components.get(k, 0.0)) for k in
             ("mse", "diff", "lpips", "gan_g", "gan_d", "kl")}
    total = float(weighted_total(weights, comps, step))
    return LossReport(mse=comps["mse"], diff=comps["diff"], lpips=comps["lpips"],
                      gan_g=comps["gan_g"], gan_d=comps["gan_d"], kl=comps["kl"],
                      total=total, step=step)
