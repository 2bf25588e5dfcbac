"""Synthetic video corpus: moving shapes over static backgrounds.

Shapes translate with constant per-shape velocity and wrap toroidally, so the
analytic forward flow at any pixel is simply the velocity of the topmost shape
covering it (zero on background). Rendering uses hard edges (no anti-aliasing)
so that integer velocities give exact brightness constancy under the flow.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, ShapeError
from .model import VideoClip
from .tensorio import read_tensor, write_tensor


@dataclass(frozen=True)
class ShapeSpec:
    kind: str            # "circle" | "rectangle"
    x0: float            # initial center, pixels
    y0: float
    vx: float            # pixels / frame
    vy: float
    size: float          # radius (circle) or half side (rectangle)
    color: tuple[float, float, float]


@dataclass(frozen=True)
class SceneSpec:
    """Fully determined scene; ``shapes=None`` draws them from ``seed``.

    Velocities are drawn per component from ``velocity_range``, unless
    ``speed_range`` is set, in which case a speed from that range and a uniform
    direction are drawn instead (guarantees every shape actually moves).
    """

    frames: int = 17
    resolution: tuple[int, int] = (64, 64)   # (H, W)
    num_shapes: int = 2
    background: str = "solid"                # "solid" | "noise_texture"
    seed: int = 0
    shapes: tuple[ShapeSpec, ...] | None = None
    velocity_range: tuple[float, float] = (-2.0, 2.0)
    speed_range: tuple[float, float] | None = None
    size_range: tuple[float, float] = (4.0, 10.0)
    integer_velocities: bool = False

    def __post_init__(self):
        h, w = self.resolution
        if self.frames < 1 or h < 1 or w < 1:
            raise InputError("frames and resolution must be positive")
        if self.background not in ("solid", "noise_texture"):
            raise InputError(f"unknown background {self.background!r}")
        vmax = max(abs(self.velocity_range[0]), abs(self.velocity_range[1]))
        if self.speed_range is not None:
            vmax = max(vmax, abs(self.speed_range[1]))
        if vmax > h / 4:
            raise InputError(f"velocities must stay below H/4 = {h / 4}")


@dataclass
class FlowField:
    """Forward flow (T, H, W, 2) in pixels/frame; last axis is (vx, vy)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 4 or self.data.shape[-1] != 2:
            raise ShapeError(f"flow must be (T, H, W, 2), got {self.data.shape}")


BG_SOLID = (-0.85, -0.85, -0.85)


def _draw_shapes(spec: SceneSpec, rng: np.random.Generator) -> tuple[ShapeSpec, ...]:
    h, w = spec.resolution
    shapes = []
    for _ in range(spec.num_shapes):
        kind = "circle" if rng.random() < 0.5 else "rectangle"
        if spec.speed_range is not None:
            speed = rng.uniform(*spec.speed_range)
            angle = rng.uniform(0, 2 * np.pi)
            vx, vy = speed * np.cos(angle), speed * np.sin(angle)
        else:
            vlo, vhi = spec.velocity_range
            vx, vy = rng.uniform(vlo, vhi, size=2)
        if spec.integer_velocities:
            vx, vy = float(np.rint(vx)), float(np.rint(vy))
        size = float(rng.uniform(*spec.size_range))
        color = tuple(rng.uniform(-0.2, 1.0, size=3).round(4))
        shapes.append(ShapeSpec(kind=kind, x0=float(rng.uniform(0, w)),
                                y0=float(rng.uniform(0, h)), vx=float(vx),
                                vy=float(vy), size=size, color=color))
    return tuple(shapes)


def _coverage(shape: ShapeSpec, frame: int, h: int, w: int) -> np.ndarray:
    cx = shape.x0 + shape.vx * frame
    cy = shape.y0 + shape.vy * frame
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # wrapped displacement keeps shapes whole across the torus seam
    dx = (xx - cx + w / 2) % w - w / 2
    dy = (yy - cy + h / 2) % h - h / 2
    if shape.kind == "circle":
        return dx * dx + dy * dy <= shape.size ** 2
    if shape.kind == "rectangle":
        return (np.abs(dx) <= shape.size) & (np.abs(dy) <= shape.size)
    raise InputError(f"unknown shape kind {shape.kind!r}")


def generate_clip(spec: SceneSpec) -> tuple[VideoClip, FlowField]:
    """Render the scene and its exact forward flow, deterministic given seed."""
    h, w = spec.resolution
    rng = np.random.default_rng(spec.seed)
    if spec.background == "noise_texture":
        bg = rng.uniform(-0.95, -0.3, size=(h, w, 3)).astype(np.float32)
    else:
        bg = np.broadcast_to(np.array(BG_SOLID, np.float32), (h, w, 3)).copy()
    shapes = spec.shapes if spec.shapes is not None else _draw_shapes(spec, rng)

    frames = np.empty((spec.frames, h, w, 3), dtype=np.float32)
    flow = np.zeros((max(spec.frames - 1, 0), h, w, 2), dtype=np.float32)
    for i in range(spec.frames):
        img = bg.copy()
        for s in shapes:  # later shapes render on top and own the flow
            mask = _coverage(s, i, h, w)
            img[mask] = np.clip(s.color, -1.0, 1.0)
            if i < spec.frames - 1:
                flow[i, mask] = (s.vx, s.vy)
        frames[i] = img
    return VideoClip(np.clip(frames, -1.0, 1.0)), FlowField(flow)


def warp_forward(frame: np.ndarray, flow: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Push frame pixels along integer flow vectors (toroidal).

    Returns (warped frame, validity mask). A target pixel is valid only when
    exactly one source lands on it; collision targets (occlusions) are masked
    out, matching the brightness-constancy contract.
    """
    h, w, _ = frame.shape
    yy, xx = np.mgrid[0:h, 0:w]
    tx = np.rint(xx + flow[..., 0]).astype(int) % w
    ty = np.rint(yy + flow[..., 1]).astype(int) % h
    warped = np.zeros_like(frame)
    counts = np.zeros((h, w), dtype=np.int32)
    np.add.at(counts, (ty, tx), 1)
    warped[ty, tx] = frame[yy, xx]
    return warped, counts == 1


# -----------------------------------------------------------------------------
# Corpus on disk
# -----------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class CorpusRanges:
    """Randomization ranges applied per clip when building a corpus."""

    frames: int = 17
    resolution: tuple[int, int] = (64, 64)
    num_shapes: tuple[int, int] = (1, 3)
    velocity_range: tuple[float, float] = (-2.0, 2.0)
    speed_range: tuple[float, float] | None = None
    size_range: tuple[float, float] = (4.0, 10.0)
    background: str = "solid"
    integer_velocities: bool = False


def scene_for_index(ranges: CorpusRanges, base_seed: int, index: int) -> SceneSpec:
    seed = base_seed + index
    n_lo, n_hi = ranges.num_shapes
    num = int(np.random.default_rng([seed, 0xC0]).integers(n_lo, n_hi + 1))
    return SceneSpec(frames=ranges.frames, resolution=ranges.resolution,
                     num_shapes=num, background=ranges.background, seed=seed,
                     velocity_range=ranges.velocity_range,
                     speed_range=ranges.speed_range,
                     size_range=ranges.size_range,
                     integer_velocities=ranges.integer_velocities)


def generate_corpus(out_dir: str | Path, n: int, base_seed: int,
                    ranges: CorpusRanges = CorpusRanges()) -> Path:
    """Write n clips + flows + a manifest; clip i uses seed base_seed + i.

    Train/val split is 90/10 by index (leading indices train).
    """
    if n < 1:
        raise InputError(f"corpus size n={n} must be >= 1")
    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    (out / "flows").mkdir(parents=True, exist_ok=True)
    n_train = int(np.floor(0.9 * n))
    entries = []
    for i in range(n):
        spec = scene_for_index(ranges, base_seed, i)
        clip, flow = generate_clip(spec)
        clip_rel = f"clips/clip_{i:05d}.pvt"
        flow_rel = f"flows/flow_{i:05d}.pvt"
        write_tensor(out / clip_rel, clip.data, layout="THWC")
        write_tensor(out / flow_rel, flow.data, layout="THWC")
        entries.append({"index": i, "clip": clip_rel, "flow": flow_rel,
                        "seed": spec.seed,
                        "split": "train" if i < n_train else "val"})
    manifest = {
        "version": 1,
        "n": n,
        "base_seed": base_seed,
        "frames": ranges.frames,
        "resolution": list(ranges.resolution),
        "ranges": asdict(ranges),
        "entries": entries,
    }
    path = out / MANIFEST_NAME
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return path


class Corpus:
    """Reader for a generated corpus directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        with open(self.root / MANIFEST_NAME) as f:
            self.manifest = json.load(f)
        self.entries = self.manifest["entries"]
        self._cache: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def train_indices(self) -> list[int]:
        return [e["index"] for e in self.entries if e["split"] == "train"]

    @property
    def val_indices(self) -> list[int]:
        return [e["index"] for e in self.entries if e["split"] == "val"]

    def load_clip(self, i: int) -> VideoClip:
        if i not in self._cache:
            self._cache[i] = read_tensor(self.root / self.entries[i]["clip"])
        return VideoClip(self._cache[i])

    def load_flow(self, i: int) -> FlowField:
        return FlowField(read_tensor(self.root / self.entries[i]["flow"]))

    def clips_tensor(self, indices) -> "np.ndarray":
        """Stack clips as (N, 1+T, H, W, 3) float32."""
        return np.stack([self.load_clip(i).data for i in indices])
