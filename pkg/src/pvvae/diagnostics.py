"""Latent-space and reconstruction diagnostics.

PSNR/SSIM score reconstructions; the latent temporal distance (LTD) profile
quantifies how smoothly latents evolve over frame intervals; PCA-to-RGB
projects latent channels onto their top three principal directions; the
prediction error scores dropped-frame reconstruction; and the flow probe
trains a small head to regress ground-truth optical flow from latent means.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data_synth import Corpus
from .errors import DegenerateInputError, InputError, ShapeError
from .model import LatentSequence, VaeModel, VideoClip, encode
from .predictive import PaddingParams, predictive_forward

PSNR_CAP_DB = 100.0


def _clip_array(x) -> np.ndarray:
    if isinstance(x, VideoClip):
        return x.data
    return np.asarray(x, dtype=np.float32)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB on the [0, 1] rescaled range.

    Identical inputs return the 100 dB cap.
    """
    xa, xb = _clip_array(a), _clip_array(b)
    if xa.shape != xb.shape:
        raise ShapeError(f"shape mismatch {xa.shape} vs {xb.shape}")
    mse = float(np.mean(((xa - xb) / 2.0) ** 2))
    if mse <= 10 ** (-PSNR_CAP_DB / 10):
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, -10.0 * math.log10(mse))


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = size // 2
    g = np.exp(-np.arange(-r, r + 1, dtype=np.float64) ** 2 / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _windowed_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # valid-mode weighted local means via explicit sliding windows
    win = np.lib.stride_tricks.sliding_window_view(img, kernel.shape)
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def ssim(a, b, win_size: int = 11, sigma: float = 1.5) -> float:
    """Structural similarity with an 11x11 Gaussian window, averaged over
    frames and channels (inputs rescaled from [-1, 1] to [0, 1])."""
    xa, xb = _clip_array(a), _clip_array(b)
    if xa.shape != xb.shape:
        raise ShapeError(f"shape mismatch {xa.shape} vs {xb.shape}")
    if xa.shape[1] < win_size or xa.shape[2] < win_size:
        raise InputError(f"frames must be at least {win_size}x{win_size}")
    xa = (xa.astype(np.float64) + 1.0) / 2.0
    xb = (xb.astype(np.float64) + 1.0) / 2.0
    kernel = _gaussian_kernel(win_size, sigma)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    scores = []
    for f in range(xa.shape[0]):
        for ch in range(xa.shape[3]):
            x, y = xa[f, :, :, ch], xb[f, :, :, ch]
            mx, my = _windowed_mean(x, kernel), _windowed_mean(y, kernel)
            sxx = _windowed_mean(x * x, kernel) - mx * mx
            syy = _windowed_mean(y * y, kernel) - my * my
            sxy = _windowed_mean(x * y, kernel) - mx * my
            s = ((2 * mx * my + c1) * (2 * sxy + c2)) / \
                ((mx * mx + my * my + c1) * (sxx + syy + c2))
            scores.append(s.mean())
    return float(np.mean(scores))


# -----------------------------------------------------------------------------
# Latent temporal distance
# -----------------------------------------------------------------------------

@dataclass
class LtdProfile:
    intervals: list[int]
    mean_distance: list[float]
    normalized: list[float] | None   # entry for interval 1 is exactly 1.0
    hist_counts: list[int]
    hist_edges: list[float]

    def as_dict(self) -> dict:
        return {"intervals": self.intervals, "mean_distance": self.mean_distance,
                "normalized": self.normalized, "hist_counts": self.hist_counts,
                "hist_edges": self.hist_edges}


def ltd_profile(model: VaeModel, clips: list[VideoClip],
                intervals: list[int] = (1, 2, 3, 4), bins: int = 24) -> LtdProfile:
    """Mean L2 distance between latent frames z_i and z_{i+d} per interval d.

    Uses posterior means (no sampling) and dimension-normalized L2, so values
    are comparable across latent sizes. ``normalized`` divides by the
    interval-1 value (None when that value is zero).
    """
    intervals = sorted(int(d) for d in intervals)
    if intervals[0] < 1:
        raise InputError("intervals must be positive")
    per_interval: dict[int, list[float]] = {d: [] for d in intervals}
    for clip in clips:
        z = encode(model, clip).mean            # (frames, h, w, c)
        frames = z.shape[0]
        if intervals[-1] > frames - 1:
            raise InputError(
                f"interval {intervals[-1]} exceeds latent length {frames}")
        norm = math.sqrt(z[0].size)
        for d in intervals:
            for i in range(frames - d):
                per_interval[d].append(
                    float(np.linalg.norm(z[i + d] - z[i]) / norm))
    mean_distance = [float(np.mean(per_interval[d])) for d in intervals]
    adjacent = per_interval[intervals[0]] if intervals[0] == 1 else []
    counts, edges = np.histogram(adjacent, bins=bins) if adjacent else (np.zeros(bins, int), np.linspace(0, 1, bins + 1))
    base = mean_distance[0] if intervals[0] == 1 else None
    if base is not None and base > 0:
        normalized = [m / base for m in mean_distance]
        normalized[0] = 1.0
    else:
        normalized = None
    return LtdProfile(intervals=intervals, mean_distance=mean_distance,
                      normalized=normalized, hist_counts=[int(c) for c in counts],
                      hist_edges=[float(e) for e in edges])


# -----------------------------------------------------------------------------
# PCA of latent channels
# -----------------------------------------------------------------------------

@dataclass
class PcaBasis:
    components: np.ndarray          # (c, 3), orthonormal columns
    explained_variance: np.ndarray  # (3,), non-increasing
    sign_rule: str = "max-abs loading positive"


def pca_rgb(latents) -> tuple[np.ndarray, PcaBasis]:
    """Project latent channels onto their top-3 principal directions as RGB.

    Channels are centered over all pooled (frame, h, w) positions, the channel
    covariance is eigendecomposed, and each projected component is min-max
    normalized to [0, 1]. Signs are fixed so the largest-magnitude loading of
    each component is positive, making the output deterministic.
    """
    if isinstance(latents, LatentSequence):
        latents = latents.data
    z = np.asarray(latents, dtype=np.float64)
    if z.ndim == 4:
        z = z[None]
    if z.ndim != 5:
        raise ShapeError(f"latents must be (frames,h,w,c) or (N,frames,h,w,c), got {z.shape}")
    n, frames, h, w, c = z.shape
    if c < 3:
        raise InputError(f"need at least 3 latent channels, got {c}")
    x = z.reshape(-1, c)
    if x.shape[0] < 2:
        raise InputError("need at least 2 pooled positions")
    x = x - x.mean(axis=0, keepdims=True)
    cov = (x.T @ x) / (x.shape[0] - 1)
    if float(np.trace(cov)) < 1e-12:
        raise DegenerateInputError("latents have zero variance; PCA undefined")
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:3]
    comps = evecs[:, order]
    evar = evals[order]
    for j in range(3):
        if comps[np.argmax(np.abs(comps[:, j])), j] < 0:
            comps[:, j] = -comps[:, j]
    y = x @ comps                                     # (P, 3)
    lo, hi = y.min(axis=0), y.max(axis=0)
    span = np.where(hi - lo > 1e-12, hi - lo, 1.0)
    y01 = np.where(hi - lo > 1e-12, (y - lo) / span, 0.0)
    rgb = y01.reshape(n, frames, h, w, 3).astype(np.float32)
    if rgb.shape[0] == 1 and np.asarray(latents).ndim == 4:
        rgb = rgb[0]
    return rgb, PcaBasis(components=comps, explained_variance=evar)


# -----------------------------------------------------------------------------
# Dropped-frame prediction error
# -----------------------------------------------------------------------------

def prediction_error(model: VaeModel, clip: VideoClip, k: int,
                     params: PaddingParams, rng: np.random.Generator) -> float:
    """Pixel MSE on the dropped frames only, under a forced drop count k >= 1."""
    if k < 1:
        raise InputError("prediction error needs k >= 1 dropped groups")
    recon, _, plan = predictive_forward(model, clip, r=1.0, params=params,
                                        rng=rng, k=k)
    dropped = slice(plan.observed_frames, None)
    diff = recon.data[dropped] - clip.data[dropped]
    return float(np.mean(diff ** 2))


# -----------------------------------------------------------------------------
# Optical-flow probe
# -----------------------------------------------------------------------------

def epe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Average end-point error: mean Euclidean norm of the flow residual."""
    pred, gt = np.asarray(pred, np.float64), np.asarray(gt, np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"flow shapes differ: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.sqrt(np.sum((pred - gt) ** 2, axis=-1))))


class FlowProbeHead(nn.Module):
    """2 conv layers + sub-pixel upsampling from latent means to dense flow.

    Latent frame g (g >= 1) predicts the p_t flow frames of its pixel group;
    the first latent frame is skipped (it aligns with a single pixel frame).
    """

    def __init__(self, c_latent: int, p_t: int, p_s: int, hidden: int = 64, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.p_t, self.p_s = p_t, p_s
        self.conv1 = nn.Conv2d(c_latent, hidden, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden, 2 * p_t * p_s * p_s, 3, padding=1)
        self.shuffle = nn.PixelShuffle(p_s)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        """z: (N, c, 1+t, h, w) latent means -> (N, T, H, W, 2) flow."""
        n, c, frames, h, w = z.shape
        t = frames - 1
        zz = z[:, :, 1:].permute(0, 2, 1, 3, 4).reshape(n * t, c, h, w)
        out = self.shuffle(self.conv2(F.silu(self.conv1(zz))))  # (n*t, 2*p_t, H, W)
        out = out.reshape(n, t, self.p_t, 2, h * self.p_s, w * self.p_s)
        out = out.reshape(n, t * self.p_t, 2, h * self.p_s, w * self.p_s)
        return out.permute(0, 1, 3, 4, 2)


def _latent_means(model: VaeModel, corpus: Corpus, indices) -> torch.Tensor:
    means = []
    with torch.no_grad():
        for i in indices:
            x = torch.from_numpy(corpus.load_clip(i).data).permute(3, 0, 1, 2)[None]
            mean, _ = model.encode_t(x)
            means.append(mean[0])
    return torch.stack(means)      # (N, c, 1+t, h, w)


def flow_probe(model: VaeModel, corpus: Corpus, steps: int = 500,
               lr: float = 5e-3, batch_size: int = 8, hidden: int = 64,
               seed: int = 0) -> float:
    """Train the probe head on the train split, report EPE on the val split."""
    head = FlowProbeHead(model.cfg.c_latent, model.cfg.p_t, model.cfg.p_s,
                         hidden=hidden, seed=seed)
    train_idx, val_idx = corpus.train_indices, corpus.val_indices
    z_train = _latent_means(model, corpus, train_idx)
    f_train = torch.from_numpy(
        np.stack([corpus.load_flow(i).data for i in train_idx]))
    opt = torch.optim.Adam(head.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        idx = rng.choice(len(train_idx), size=min(batch_size, len(train_idx)),
                         replace=False)
        pred = head(z_train[idx])
        loss = F.mse_loss(pred, f_train[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
    z_val = _latent_means(model, corpus, val_idx)
    with torch.no_grad():
        pred = head(z_val).numpy()
    gt = np.stack([corpus.load_flow(i).data for i in val_idx])
    return epe(pred, gt)
