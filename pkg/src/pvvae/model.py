"""Causal spatiotemporal VAE.

The encoder maps a ``(1+T, H, W, 3)`` clip to a diagonal-Gaussian posterior over
``(1+t, h, w, c)`` latents and is strictly causal in time: latent frame ``g``
(0-indexed) depends only on pixel frames ``0..g*p_t``. The decoder mirrors the
encoder's scaling factors and bounds its output to ``[-1, 1]``.

Downsampling order follows the two-phase design: spatiotemporal stages first
(2x time and 2x space each), then spatial-only stages to reach the full spatial
ratio. The decoder upsamples in the reverse order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, NumericError, ShapeError

LOGVAR_MIN = -30.0
LOGVAR_MAX = 20.0


# -----------------------------------------------------------------------------
# Configs and domain types
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class VaeConfig:
    """Architecture hyperparameters; ``toy()`` trains on CPU in minutes."""

    p_t: int = 4                      # temporal compression ratio
    p_s: int = 8                      # spatial compression ratio (power of 2)
    c_latent: int = 8
    base_channels: int = 32
    channel_mult: tuple[int, ...] = (1, 2, 4)
    blocks_per_stage: int = 1
    padding_strategy: str = "learnable"   # {"gaussian", "learnable"}
    seed: int = 0

    def __post_init__(self):
        stage_factors(self.p_t, self.p_s, len(self.channel_mult))
        if self.c_latent < 1 or self.base_channels < 1 or self.blocks_per_stage < 1:
            raise ConfigError("c_latent, base_channels, blocks_per_stage must be positive")
        if self.padding_strategy not in ("gaussian", "learnable"):
            raise ConfigError(f"unknown padding strategy {self.padding_strategy!r}")

    @staticmethod
    def toy(**overrides) -> "VaeConfig":
        return VaeConfig(**overrides)

    @staticmethod
    def paper(**overrides) -> "VaeConfig":
        """The published compression ratios (4x temporal, 16x spatial, 64 channels)
        at desk-scale width."""
        base = dict(p_t=4, p_s=16, c_latent=64, base_channels=32,
                    channel_mult=(1, 2, 4, 4))
        base.update(overrides)
        return VaeConfig(**base)


def stage_factors(p_t: int, p_s: int, n_stages: int) -> list[tuple[int, int]]:
    """Per-stage (temporal, spatial) downsampling factors.

    Raises ConfigError when p_t/p_s cannot be factored into ``n_stages`` stages
    of spatiotemporal (2,2) followed by spatial-only (1,2) downsampling.
    """
    if p_t < 1 or p_s < 1:
        raise ConfigError("compression ratios must be positive")
    n_t = int(math.log2(p_t)) if p_t > 0 else 0
    n_sp_total = int(math.log2(p_s)) if p_s > 0 else 0
    if 2 ** n_t != p_t or 2 ** n_sp_total != p_s:
        raise ConfigError(f"p_t={p_t}, p_s={p_s}: both must be powers of 2")
    if p_s < p_t:
        raise ConfigError(f"p_s={p_s} must be >= p_t={p_t} for the two-phase stage plan")
    factors = [(2, 2)] * n_t + [(1, 2)] * (n_sp_total - n_t)
    if len(factors) != n_stages:
        raise ConfigError(
            f"p_t={p_t}, p_s={p_s} needs {len(factors)} stages but channel_mult has {n_stages}"
        )
    return factors


@dataclass
class VideoClip:
    """A ``(1+T, H, W, 3)`` float32 frame sequence with values in [-1, 1].

    ``T=0`` (a single frame) denotes an image and flows through the same path.
    """

    data: np.ndarray
    frame_rate: float = 8.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 4 or self.data.shape[-1] != 3:
            raise ShapeError(f"clip must be (1+T, H, W, 3), got {self.data.shape}")
        if self.data.shape[0] < 1:
            raise ShapeError("clip needs at least one frame")

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]


@dataclass
class LatentPosterior:
    """Diagonal-Gaussian parameters, both shaped ``(1+t, h, w, c)``."""

    mean: np.ndarray
    logvar: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float32)
        self.logvar = np.asarray(self.logvar, dtype=np.float32)
        if self.mean.shape != self.logvar.shape:
            raise ShapeError(
                f"mean {self.mean.shape} and logvar {self.logvar.shape} must match"
            )


@dataclass
class LatentSequence:
    """A sampled (or padded) latent of shape ``(frames, h, w, c)``."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 4:
            raise ShapeError(f"latents must be (frames, h, w, c), got {self.data.shape}")
        if self.data.shape[0] < 1:
            raise ShapeError("latent sequence needs at least one frame")
        if not np.isfinite(self.data).all():
            raise NumericError("latent sequence contains non-finite values")


# -----------------------------------------------------------------------------
# Building blocks
# -----------------------------------------------------------------------------

def _num_groups(channels: int) -> int:
    return math.gcd(8, channels)


class FrameNorm(nn.Module):
    """Group normalization with per-frame statistics.

    Statistics are computed over (C, H, W) of each frame separately so that
    normalization never mixes information across time (keeps the encoder causal).
    """

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.GroupNorm(_num_groups(channels), channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, c, t, h, w = x.shape
        x = x.permute(0, 2, 1, 3, 4).reshape(n * t, c, h, w)
        x = self.norm(x)
        return x.reshape(n, t, c, h, w).permute(0, 2, 1, 3, 4)


class CausalConv3d(nn.Module):
    """3D convolution, left-padded in time by replicating the first frame.

    Output index ``i`` depends only on input indices ``<= i * stride_t``, and a
    temporally constant input yields a temporally constant output.
    Spatial padding is zero-pad, symmetric.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3,
                 stride: tuple[int, int, int] = (1, 1, 1)):
        super().__init__()
        self.pad_t = kernel - 1
        pad_s = kernel // 2
        self.conv = nn.Conv3d(in_ch, out_ch, kernel, stride=stride,
                              padding=(0, pad_s, pad_s))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.pad_t > 0:
            x = F.pad(x, (0, 0, 0, 0, self.pad_t, 0), mode="replicate")
        return self.conv(x)


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.norm1 = FrameNorm(channels)
        self.conv1 = CausalConv3d(channels, channels)
        self.norm2 = FrameNorm(channels)
        self.conv2 = CausalConv3d(channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class TemporalUp(nn.Module):
    """Repeat each frame ``factor`` times, then drop the leading duplicates so a
    (1 + t)-frame sequence becomes (1 + factor*t) frames."""

    def __init__(self, factor: int):
        super().__init__()
        self.factor = factor

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x.repeat_interleave(self.factor, dim=2)
        return x[:, :, self.factor - 1:]


class Encoder(nn.Module):
    def __init__(self, cfg: VaeConfig):
        super().__init__()
        factors = stage_factors(cfg.p_t, cfg.p_s, len(cfg.channel_mult))
        widths = [cfg.base_channels * m for m in cfg.channel_mult]
        self.stem = CausalConv3d(3, cfg.base_channels)
        stages = []
        ch = cfg.base_channels
        for (ft, fs), w in zip(factors, widths):
            stage = [CausalConv3d(ch, w, stride=(ft, fs, fs))]
            stage += [ResBlock(w) for _ in range(cfg.blocks_per_stage)]
            stages.append(nn.Sequential(*stage))
            ch = w
        self.stages = nn.ModuleList(stages)
        self.mid = ResBlock(ch)
        self.out_norm = FrameNorm(ch)
        self.out_conv = CausalConv3d(ch, 2 * cfg.c_latent)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.stem(x)
        for stage in self.stages:
            h = stage(h)
        h = self.mid(h)
        h = self.out_conv(F.silu(self.out_norm(h)))
        mean, logvar = h.chunk(2, dim=1)
        return mean, logvar.clamp(LOGVAR_MIN, LOGVAR_MAX)


class Decoder(nn.Module):
    def __init__(self, cfg: VaeConfig):
        super().__init__()
        factors = stage_factors(cfg.p_t, cfg.p_s, len(cfg.channel_mult))
        widths = [cfg.base_channels * m for m in cfg.channel_mult]
        ch = widths[-1]
        self.stem = CausalConv3d(cfg.c_latent, ch)
        self.mid = ResBlock(ch)
        stages = []
        for i in range(len(factors) - 1, -1, -1):
            ft, fs = factors[i]
            out_ch = widths[i - 1] if i > 0 else cfg.base_channels
            stage: list[nn.Module] = [ResBlock(widths[i]) for _ in range(cfg.blocks_per_stage)]
            if ft > 1:
                stage.append(TemporalUp(ft))
            stage.append(nn.Upsample(scale_factor=(1, fs, fs), mode="nearest"))
            stage.append(CausalConv3d(widths[i], out_ch))
            stages.append(nn.Sequential(*stage))
        self.stages = nn.ModuleList(stages)
        self.out_norm = FrameNorm(cfg.base_channels)
        self.out_conv = CausalConv3d(cfg.base_channels, 3)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = self.mid(self.stem(z))
        for stage in self.stages:
            h = stage(h)
        h = self.out_conv(F.silu(self.out_norm(h)))
        return torch.tanh(h)


class VaeModel(nn.Module):
    """Encoder/decoder pair plus the tensor-level (batched, NCTHW) interface
    used by training. The functional numpy API below wraps single clips."""

    def __init__(self, cfg: VaeConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)

    def encode_t(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """x: (N, 3, 1+T, H, W) -> (mean, logvar), each (N, c, 1+t, h, w)."""
        self._check_divisibility(x.shape)
        return self.encoder(x)

    def decode_t(self, z: torch.Tensor) -> torch.Tensor:
        """z: (N, c, frames, h, w) -> (N, 3, 1+(frames-1)*p_t, h*p_s, w*p_s)."""
        return self.decoder(z)

    def _check_divisibility(self, shape) -> None:
        _, _, frames, h, w = shape
        cfg = self.cfg
        if (frames - 1) % cfg.p_t != 0:
            raise ShapeError(f"T={frames - 1} not divisible by p_t={cfg.p_t}")
        if h % cfg.p_s != 0 or w % cfg.p_s != 0:
            raise ShapeError(f"H x W = {h}x{w} not divisible by p_s={cfg.p_s}")


# -----------------------------------------------------------------------------
# Functional API (numpy in, numpy out)
# -----------------------------------------------------------------------------

def build_model(cfg: VaeConfig) -> VaeModel:
    """Construct a model with deterministic initialization given ``cfg.seed``."""
    torch.manual_seed(cfg.seed)
    model = VaeModel(cfg)
    model.eval()
    return model


def _clip_to_tensor(clip: VideoClip) -> torch.Tensor:
    return torch.from_numpy(clip.data).permute(3, 0, 1, 2).unsqueeze(0)


def _tensor_to_clip(x: torch.Tensor) -> VideoClip:
    arr = x.squeeze(0).permute(1, 2, 3, 0).contiguous().numpy()
    return VideoClip(arr)


def encode(model: VaeModel, clip: VideoClip) -> LatentPosterior:
    """Encode a clip into its latent posterior (deterministic, no sampling)."""
    with torch.no_grad():
        mean, logvar = model.encode_t(_clip_to_tensor(clip))
    to_thwc = lambda t: t.squeeze(0).permute(1, 2, 3, 0).contiguous().numpy()
    return LatentPosterior(to_thwc(mean), to_thwc(logvar))


def reparameterize(post: LatentPosterior, rng: np.random.Generator) -> LatentSequence:
    """Draw z = mean + exp(logvar/2) * eps with eps ~ N(0, I) from ``rng``."""
    eps = rng.standard_normal(size=post.mean.shape, dtype=np.float32)
    z = post.mean + np.exp(0.5 * post.logvar) * eps
    return LatentSequence(z)


def decode(model: VaeModel, z: LatentSequence) -> VideoClip:
    """Decode latents back to pixel space; outputs are tanh-bounded to [-1, 1]."""
    zt = torch.from_numpy(z.data).permute(3, 0, 1, 2).unsqueeze(0)
    with torch.no_grad():
        x = model.decode_t(zt)
    return _tensor_to_clip(x)


def latent_shape(cfg: VaeConfig, frames: int, height: int, width: int) -> tuple[int, int, int, int]:
    """(1+t, h, w, c) produced by encoding a clip of the given pixel shape."""
    return (1 + (frames - 1) // cfg.p_t, height // cfg.p_s, width // cfg.p_s, cfg.c_latent)
