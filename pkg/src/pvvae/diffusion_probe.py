"""Tiny unconditional rectified-flow model over VAE latents.

Used to compare how readily two latent spaces are modeled by the same small
generative network. Time convention: u=0 is pure noise, u=1 is data; training
regresses the straight-line velocity z1 - z0 at interpolated points, sampling
integrates it with a fixed-step Euler scheme (100 steps by default).

Generation quality is scored with a Frechet proxy: per-clip pixel statistics
are projected through a fixed seeded random matrix to 64 dimensions and the
Gaussian Frechet distance is computed between the real and generated sets.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError, DegenerateInputError, InputError, NumericError, ShapeError
from .model import VaeModel
from .tensorio import read_tensor, write_tensor


@dataclass(frozen=True)
class FlowModelConfig:
    hidden: int = 48
    depth: int = 3
    time_dim: int = 32
    steps: int = 1500
    batch_size: int = 32
    learning_rate: float = 2e-3
    sampler_steps: int = 100
    seed: int = 0


@dataclass
class LatentStats:
    """Per-channel mean/std used to standardize latents before flow training."""

    mean: np.ndarray   # (c,)
    std: np.ndarray    # (c,)

    @staticmethod
    def from_latents(latents: np.ndarray) -> "LatentStats":
        z = np.asarray(latents, dtype=np.float64)
        if z.ndim != 5:
            raise ShapeError(f"latents must be (N, frames, h, w, c), got {z.shape}")
        mean = z.mean(axis=(0, 1, 2, 3))
        std = z.std(axis=(0, 1, 2, 3))
        if np.any(std <= 0):
            raise DegenerateInputError(
                f"degenerate latent channels (zero std): {np.where(std <= 0)[0].tolist()}")
        return LatentStats(mean.astype(np.float32), std.astype(np.float32))

    def normalize(self, z: np.ndarray) -> np.ndarray:
        return (z - self.mean) / self.std

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean


def _time_embedding(u: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(torch.linspace(0, math.log(1000.0), half))
    ang = u[:, None] * freqs[None, :]
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)


class _VelBlock(nn.Module):
    def __init__(self, hidden: int, time_dim: int):
        super().__init__()
        self.proj = nn.Linear(time_dim, hidden)
        self.conv1 = nn.Conv3d(hidden, hidden, 3, padding=1)
        self.conv2 = nn.Conv3d(hidden, hidden, 3, padding=1)

    def forward(self, h: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        u = h + self.proj(temb)[:, :, None, None, None]
        u = self.conv2(F.silu(self.conv1(F.silu(u))))
        return h + u


class VelocityNet(nn.Module):
    """Small conv velocity field v(z, u) over (N, c, frames, h, w) latents."""

    def __init__(self, c_latent: int, cfg: FlowModelConfig):
        super().__init__()
        torch.manual_seed(cfg.seed)
        self.cfg = cfg
        self.conv_in = nn.Conv3d(c_latent, cfg.hidden, 3, padding=1)
        self.blocks = nn.ModuleList(
            [_VelBlock(cfg.hidden, cfg.time_dim) for _ in range(cfg.depth)])
        self.conv_out = nn.Conv3d(cfg.hidden, c_latent, 3, padding=1)

    def forward(self, z: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        temb = _time_embedding(u, self.cfg.time_dim)
        h = self.conv_in(z)
        for block in self.blocks:
            h = block(h, temb)
        return self.conv_out(h)


def rf_loss(model: nn.Module, z1: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
    """Rectified-flow matching loss on a batch of normalized latents z1."""
    if not torch.isfinite(z1).all():
        raise NumericError("latents contain non-finite values")
    gen = torch.Generator().manual_seed(int(rng.integers(2 ** 63)))
    z0 = torch.randn(z1.shape, generator=gen, dtype=z1.dtype)
    u = torch.rand(z1.shape[0], generator=gen, dtype=z1.dtype)
    ub = u[:, None, None, None, None]
    z_u = (1.0 - ub) * z0 + ub * z1
    target = z1 - z0
    return ((model(z_u, u) - target) ** 2).mean()


def euler_sample(model: nn.Module, steps: int, rng: np.random.Generator,
                 shape: tuple[int, ...], n: int = 1) -> torch.Tensor:
    """Integrate z' = v(z, u) from noise at u=0 to u=1 with fixed Euler steps."""
    if steps < 1:
        raise InputError(f"steps={steps} must be >= 1")
    gen = torch.Generator().manual_seed(int(rng.integers(2 ** 63)))
    z = torch.randn((n, *shape), generator=gen)
    dt = 1.0 / steps
    with torch.no_grad():
        for i in range(steps):
            u = torch.full((n,), i / steps)
            z = z + dt * model(z, u)
    return z


def train_flow(latents: np.ndarray, cfg: FlowModelConfig) -> tuple[VelocityNet, LatentStats, list[float]]:
    """Fit the velocity net on (N, frames, h, w, c) latents; returns loss log."""
    stats = LatentStats.from_latents(latents)
    z = stats.normalize(np.asarray(latents, np.float32))
    zt = torch.from_numpy(z).permute(0, 4, 1, 2, 3).contiguous()
    net = VelocityNet(zt.shape[1], cfg)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    log = []
    for step in range(cfg.steps):
        rng = np.random.default_rng([cfg.seed, step])
        idx = rng.choice(zt.shape[0], size=min(cfg.batch_size, zt.shape[0]),
                         replace=cfg.batch_size > zt.shape[0])
        loss = rf_loss(net, zt[idx], rng)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.append(float(loss.detach()))
    return net, stats, log


def generate_latents(net: VelocityNet, stats: LatentStats, n: int,
                     latent_shape: tuple[int, int, int, int],
                     rng: np.random.Generator,
                     sampler_steps: int = 100, batch: int = 64) -> np.ndarray:
    """Sample n latents (N, frames, h, w, c), denormalized by ``stats``."""
    frames, h, w, c = latent_shape
    out = []
    done = 0
    while done < n:
        m = min(batch, n - done)
        z = euler_sample(net, sampler_steps, rng, (c, frames, h, w), n=m)
        out.append(z.permute(0, 2, 3, 4, 1).numpy())
        done += m
    return stats.denormalize(np.concatenate(out, axis=0)).astype(np.float32)


def decode_latents(vae: VaeModel, latents: np.ndarray, batch: int = 16) -> np.ndarray:
    """Decode (N, frames, h, w, c) latents to (N, 1+T, H, W, 3) clips."""
    zt = torch.from_numpy(np.asarray(latents, np.float32)).permute(0, 4, 1, 2, 3)
    clips = []
    with torch.no_grad():
        for i in range(0, zt.shape[0], batch):
            x = vae.decode_t(zt[i:i + batch])
            clips.append(x.permute(0, 2, 3, 4, 1).numpy())
    return np.concatenate(clips, axis=0)


# -----------------------------------------------------------------------------
# Frechet proxy
# -----------------------------------------------------------------------------

FEATURE_DIM = 64
MIN_CLIPS = 65   # full-rank 64x64 covariance needs at least 65 samples


def clip_statistics(clips: np.ndarray) -> np.ndarray:
    """Per-clip stats: frame/channel means and stds plus temporal-change energy."""
    x = np.asarray(clips, dtype=np.float64)
    if x.ndim != 5 or x.shape[-1] != 3:
        raise ShapeError(f"clips must be (N, 1+T, H, W, 3), got {x.shape}")
    means = x.mean(axis=(2, 3))                                  # (N, L, 3)
    stds = x.std(axis=(2, 3))                                    # (N, L, 3)
    if x.shape[1] > 1:
        dmeans = np.abs(np.diff(x, axis=1)).mean(axis=(2, 3))    # (N, L-1, 3)
    else:
        dmeans = np.zeros((x.shape[0], 0, 3))
    return np.concatenate([means.reshape(x.shape[0], -1),
                           stds.reshape(x.shape[0], -1),
                           dmeans.reshape(x.shape[0], -1)], axis=1)


def clip_features(clips: np.ndarray, projection_seed: int = 0) -> np.ndarray:
    """Fixed seeded random projection of clip statistics to FEATURE_DIM."""
    stats = clip_statistics(clips)
    d = stats.shape[1]
    proj = np.random.default_rng(projection_seed).standard_normal((d, FEATURE_DIM))
    return stats @ (proj / math.sqrt(d))


def frechet_from_features(fa: np.ndarray, fb: np.ndarray) -> float:
    """Gaussian Frechet distance ||mu1-mu2||^2 + tr(S1+S2-2(S1 S2)^{1/2})."""
    fa, fb = np.asarray(fa, np.float64), np.asarray(fb, np.float64)
    mu1, mu2 = fa.mean(axis=0), fb.mean(axis=0)
    s1 = np.cov(fa, rowvar=False)
    s2 = np.cov(fb, rowvar=False)
    prod = s1 @ s2
    sqrt_prod, _ = scipy.linalg.sqrtm(prod, disp=False)
    if np.iscomplexobj(sqrt_prod):
        if np.abs(sqrt_prod.imag).max() > 1e-6:
            # near-singular product; jitter the diagonals and retry
            eps = 1e-9 * np.eye(s1.shape[0])
            sqrt_prod, _ = scipy.linalg.sqrtm((s1 + eps) @ (s2 + eps), disp=False)
        sqrt_prod = sqrt_prod.real
    val = float(np.sum((mu1 - mu2) ** 2) + np.trace(s1 + s2 - 2.0 * sqrt_prod))
    return max(val, 0.0)


def frechet_proxy(real_clips: np.ndarray, gen_clips: np.ndarray,
                  projection_seed: int = 0) -> float:
    """Frechet distance between projected statistics of two clip sets."""
    real_clips, gen_clips = np.asarray(real_clips), np.asarray(gen_clips)
    if real_clips.shape[1:] != gen_clips.shape[1:]:
        raise ShapeError(
            f"clip shapes differ: {real_clips.shape[1:]} vs {gen_clips.shape[1:]}")
    if len(real_clips) < MIN_CLIPS or len(gen_clips) < MIN_CLIPS:
        raise InputError(f"need at least {MIN_CLIPS} clips per set for a "
                         f"full-rank covariance")
    fa = clip_features(real_clips, projection_seed)
    fb = clip_features(gen_clips, projection_seed)
    return frechet_from_features(fa, fb)


# -----------------------------------------------------------------------------
# Flow-model checkpoints
# -----------------------------------------------------------------------------

FLOW_CKPT_VERSION = 1


def save_flow_checkpoint(path: str | Path, net: VelocityNet, stats: LatentStats,
                         latent_shape: tuple[int, int, int, int],
                         extra: dict | None = None) -> Path:
    path = Path(path)
    (path / "tensors").mkdir(parents=True, exist_ok=True)
    files = {}
    for i, (name, p) in enumerate(net.named_parameters()):
        rel = f"tensors/t{i:05d}.pvt"
        write_tensor(path / rel, p.detach().numpy())
        files[name] = rel
    write_tensor(path / "tensors/stats_mean.pvt", stats.mean)
    write_tensor(path / "tensors/stats_std.pvt", stats.std)
    manifest = {
        "format_version": FLOW_CKPT_VERSION,
        "kind": "flow",
        "config": asdict(net.cfg),
        "latent_shape": list(latent_shape),
        "time_convention": "u=0 noise, u=1 data; Euler update z += v/steps",
        "files": files,
        "extra": extra or {},
    }
    with open(path / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return path


def load_flow_checkpoint(path: str | Path) -> tuple[VelocityNet, LatentStats, dict]:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise CheckpointError(f"no manifest.json under {path}")
    with open(mpath) as f:
        manifest = json.load(f)
    if manifest.get("format_version") != FLOW_CKPT_VERSION or manifest.get("kind") != "flow":
        raise CheckpointError(f"not a flow checkpoint: {path}")
    cfg = FlowModelConfig(**manifest["config"])
    c = read_tensor(path / "tensors/stats_mean.pvt").shape[0]
    net = VelocityNet(c, cfg)
    with torch.no_grad():
        for name, p in net.named_parameters():
            arr = read_tensor(path / manifest["files"][name])
            if tuple(arr.shape) != tuple(p.shape):
                raise CheckpointError(f"parameter {name!r}: shape mismatch")
            p.copy_(torch.from_numpy(arr))
    stats = LatentStats(read_tensor(path / "tensors/stats_mean.pvt"),
                        read_tensor(path / "tensors/stats_std.pvt"))
    return net, stats, manifest
