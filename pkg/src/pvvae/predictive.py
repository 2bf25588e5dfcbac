"""Partial-to-complete reconstruction mechanics.

A clip of 1+T frames is split into G = 1 + T/p_t groups (group 1 is the first
frame, later groups span p_t frames). Each step drops the trailing k groups,
encodes only the observed prefix, pads the latent sequence back to G frames
with uninformative vectors, and decodes the full-length clip. The first group
is never dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError, InputError
from .model import (
    LatentPosterior,
    LatentSequence,
    VaeModel,
    VideoClip,
    decode,
    encode,
    reparameterize,
)


@dataclass(frozen=True)
class DropPlan:
    """One step's drop decision: k of G groups removed under max ratio r."""

    G: int
    k: int
    r: float
    observed_frames: int
    observed_latents: int

    def __post_init__(self):
        if not 0 <= self.k <= max_drop(self.G, self.r):
            raise InputError(f"k={self.k} outside [0, {max_drop(self.G, self.r)}]")
        if self.observed_latents < 1:
            raise InputError("the first group is never dropped")


def plan_drop(G: int, k: int, r: float, p_t: int) -> DropPlan:
    return DropPlan(G=G, k=k, r=r,
                    observed_frames=1 + (G - 1 - k) * p_t,
                    observed_latents=G - k)


def partition_groups(T: int, p_t: int) -> int:
    """Number of latent-aligned groups for a clip of 1+T frames."""
    if T < 0:
        raise InputError(f"T={T} must be >= 0")
    if T % p_t != 0:
        raise InputError(f"T={T} not divisible by p_t={p_t}")
    return 1 + T // p_t


def group_span(g: int, p_t: int) -> tuple[int, int]:
    """1-indexed (first, last) pixel frame covered by group ``g`` (g >= 1)."""
    if g < 1:
        raise InputError(f"group index {g} must be >= 1")
    if g == 1:
        return (1, 1)
    return (2 + (g - 2) * p_t, 1 + (g - 1) * p_t)


def max_drop(G: int, r: float) -> int:
    if G < 1:
        raise InputError(f"G={G} must be >= 1")
    if not 0.0 <= r <= 1.0:
        raise InputError(f"max dropping ratio r={r} outside [0, 1]")
    return int(math.floor((G - 1) * r))


def sample_drop(G: int, r: float, rng: np.random.Generator) -> int:
    """k ~ Uniform{0, ..., floor((G-1) * r)}."""
    return int(rng.integers(0, max_drop(G, r) + 1))


def truncate_clip(clip: VideoClip, k: int, p_t: int) -> VideoClip:
    """Keep the first 1 + T - k*p_t frames (the observed portion)."""
    T = clip.num_frames - 1
    G = partition_groups(T, p_t)
    if not 0 <= k <= G - 1:
        raise InputError(f"k={k} outside [0, {G - 1}]")
    if k == 0:
        return clip
    return VideoClip(clip.data[: clip.num_frames - k * p_t], clip.frame_rate)


class PaddingParams(nn.Module):
    """Latent padding vectors for dropped positions.

    gaussian: sigma * eps with eps ~ N(0, I); carries no input information and
    receives no gradient. learnable: a single (1, h, w, c) token broadcast to
    every dropped position, updated by gradient descent (initialized to zero).
    """

    def __init__(self, strategy: str, latent_shape: tuple[int, int, int] | None = None,
                 sigma: float = 1.0):
        super().__init__()
        if strategy not in ("gaussian", "learnable"):
            raise ConfigError(f"unknown padding strategy {strategy!r}")
        if strategy == "learnable" and latent_shape is None:
            raise ConfigError("learnable padding needs the latent (h, w, c) shape")
        self.strategy = strategy
        self.sigma = float(sigma)
        if strategy == "learnable":
            h, w, c = latent_shape
            self.token = nn.Parameter(torch.zeros(1, h, w, c))
        else:
            self.token = None

    def pad_frames_t(self, k: int, like: torch.Tensor,
                     generator: torch.Generator | None) -> torch.Tensor:
        """k padding frames shaped (c, k, h, w), matching ``like`` (c, L, h, w)."""
        c, _, h, w = like.shape
        if self.strategy == "gaussian":
            eps = torch.randn((c, k, h, w), generator=generator,
                              dtype=like.dtype, device=like.device)
            return self.sigma * eps
        th, tw, tc = self.token.shape[1:]
        if (th, tw, tc) != (h, w, c):
            raise ConfigError(
                f"padding token is (h, w, c)=({th}, {tw}, {tc}) "
                f"but latents are ({h}, {w}, {c})"
            )
        return self.token.permute(3, 0, 1, 2).to(like.dtype).expand(c, k, h, w)


def pad_latents(z_obs: LatentSequence, k: int, params: PaddingParams,
                rng: np.random.Generator) -> LatentSequence:
    """Append k padding frames to ``z_obs`` (numpy path, no gradients)."""
    if k < 0:
        raise InputError(f"k={k} must be >= 0")
    if k == 0:
        return LatentSequence(z_obs.data)
    _, h, w, c = z_obs.data.shape
    if params.strategy == "gaussian":
        pad = params.sigma * rng.standard_normal(size=(k, h, w, c)).astype(np.float32)
    else:
        th, tw, tc = params.token.shape[1:]
        if (th, tw, tc) != (h, w, c):
            raise ConfigError(
                f"padding token is (h, w, c)=({th}, {tw}, {tc}) "
                f"but latents are ({h}, {w}, {c})"
            )
        token = params.token.detach().cpu().numpy()
        pad = np.broadcast_to(token, (k, h, w, c)).astype(np.float32)
    return LatentSequence(np.concatenate([z_obs.data, pad], axis=0))


def predictive_forward(model: VaeModel, clip: VideoClip, r: float,
                       params: PaddingParams, rng: np.random.Generator,
                       k: int | None = None,
                       ) -> tuple[VideoClip, LatentPosterior, DropPlan]:
    """One predictive-reconstruction pass over a single clip.

    The posterior is computed on the observed prefix only; the reconstruction
    always has the input's full length. Pass ``k`` to force a drop count
    (otherwise it is sampled from the plan distribution).
    """
    T = clip.num_frames - 1
    G = partition_groups(T, model.cfg.p_t)
    if k is None:
        k = sample_drop(G, r, rng)
    plan = plan_drop(G, k, r, model.cfg.p_t)
    x_obs = truncate_clip(clip, k, model.cfg.p_t)
    post = encode(model, x_obs)
    z = reparameterize(post, rng)
    z_full = pad_latents(z, k, params, rng)
    recon = decode(model, z_full)
    return recon, post, plan


# -----------------------------------------------------------------------------
# Batched tensor path (training)
# -----------------------------------------------------------------------------

def predictive_step_t(model: VaeModel, x: torch.Tensor, r: float,
                      params: PaddingParams, rng: np.random.Generator,
                      ks: list[int] | None = None,
                      ) -> tuple[torch.Tensor, list[tuple[torch.Tensor, torch.Tensor]], list[DropPlan]]:
    """Gradient-carrying predictive forward for a batch ``x`` (N, 3, 1+T, H, W).

    k is resampled independently per clip. Clips sharing an observed length are
    encoded together; all padded latents are decoded as one batch. Returns the
    full-length reconstruction, per-clip observed posteriors, and the plans.
    """
    n, _, frames, _, _ = x.shape
    p_t = model.cfg.p_t
    G = partition_groups(frames - 1, p_t)
    if ks is None:
        ks = [sample_drop(G, r, rng) for _ in range(n)]
    plans = [plan_drop(G, k, r, p_t) for k in ks]
    # Fix all noise seeds up front so grouping order cannot change the draws.
    eps_seeds = [int(rng.integers(2 ** 63)) for _ in range(n)]
    pad_seeds = [int(rng.integers(2 ** 63)) for _ in range(n)]

    posts: list[tuple[torch.Tensor, torch.Tensor] | None] = [None] * n
    by_len: dict[int, list[int]] = {}
    for i, plan in enumerate(plans):
        by_len.setdefault(plan.observed_frames, []).append(i)
    for obs_frames, idxs in by_len.items():
        mean, logvar = model.encode_t(x[idxs, :, :obs_frames])
        for j, i in enumerate(idxs):
            posts[i] = (mean[j], logvar[j])

    z_full = []
    for i in range(n):
        mean, logvar = posts[i]
        gen = torch.Generator().manual_seed(eps_seeds[i])
        eps = torch.randn(mean.shape, generator=gen, dtype=mean.dtype)
        z = mean + torch.exp(0.5 * logvar) * eps
        k = plans[i].k
        if k > 0:
            gen_pad = torch.Generator().manual_seed(pad_seeds[i])
            z = torch.cat([z, params.pad_frames_t(k, z, gen_pad)], dim=1)
        z_full.append(z)
    recon = model.decode_t(torch.stack(z_full))
    return recon, posts, plans
