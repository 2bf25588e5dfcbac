"""Staged training: image pretraining, predictive video training, and
frozen-encoder decoder fine-tuning, with deterministic resume.

Every stochastic choice in a step (batch indices, drop counts, sampling and
padding noise) is derived from ``(seed, global_step)``, so resuming from a
checkpoint reproduces the uninterrupted run bit-exactly. Checkpoints store all
parameters and optimizer moments as PVT1 tensors plus a JSON manifest.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .data_synth import Corpus
from .errors import CheckpointError, ConfigError, NumericError, TrainingDiverged
from .losses import (
    FeaturePyramid,
    LossWeights,
    PatchDiscriminator,
    gan_losses,
    kl_loss,
    mse_loss,
    perceptual_loss,
    temporal_diff_loss,
    total_loss,
    weighted_total,
)
from .model import VaeConfig, VaeModel, build_model
from .predictive import PaddingParams, predictive_step_t
from .tensorio import read_tensor, write_tensor

STAGES = ("image_pretrain", "video_predictive", "decoder_finetune")
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    stage: str = "video_predictive"
    steps: int = 2000
    batch_size: int = 2
    learning_rate: float = 1e-3       # paper-scale runs use 5e-5; toy runs need more
    warmup_steps: int = 100
    lr_decay_factor: float = 10.0     # lr decays to lr/10 over the stage
    max_drop_ratio: float = 1.0
    betas: tuple[float, float] = (0.9, 0.99)
    weight_decay: float = 1e-5
    grad_clip: float = 1.0
    seed: int = 0
    checkpoint_every: int = 0         # 0: checkpoint only at stage end
    motion_loss: bool = True

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigError(f"unknown stage {self.stage!r}")
        if self.stage == "decoder_finetune":
            # frame dropping is disabled during decoder fine-tuning
            self.max_drop_ratio = 0.0
        if not 0.0 <= self.max_drop_ratio <= 1.0:
            raise ConfigError(f"max_drop_ratio={self.max_drop_ratio} outside [0, 1]")
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("steps must be >= 0 and batch_size >= 1")


def lr_at(step_in_stage: int, cfg: TrainConfig) -> float:
    """Linear warmup to the base rate, then cosine decay to base/decay_factor."""
    base = cfg.learning_rate
    floor = base / cfg.lr_decay_factor
    if cfg.warmup_steps > 0 and step_in_stage < cfg.warmup_steps:
        return base * (step_in_stage + 1) / cfg.warmup_steps
    span = max(cfg.steps - cfg.warmup_steps, 1)
    t = min(max(step_in_stage - cfg.warmup_steps, 0) / span, 1.0)
    return floor + 0.5 * (base - floor) * (1.0 + math.cos(math.pi * t))


# -----------------------------------------------------------------------------
# Trainer state
# -----------------------------------------------------------------------------

class Trainer:
    """Holds the model, padding, discriminator, and the global step counter.

    The global step persists across stages so the GAN activation gate keeps
    counting through decoder fine-tuning.
    """

    def __init__(self, model: VaeModel, padding: PaddingParams,
                 disc: PatchDiscriminator | None = None,
                 weights: LossWeights | None = None,
                 extractor: FeaturePyramid | None = None):
        self.model = model
        self.padding = padding
        self.disc = disc if disc is not None else PatchDiscriminator(seed=model.cfg.seed + 1)
        self.weights = weights if weights is not None else LossWeights.toy()
        self.extractor = extractor
        if self.weights.lambda_lpips > 0 and extractor is None:
            self.extractor = FeaturePyramid(seed=model.cfg.seed + 2)
        self.global_step = 0
        self.history: list[dict] = []
        self._opt_g: torch.optim.AdamW | None = None
        self._opt_d: torch.optim.AdamW | None = None
        self._opt_g_names: list[str] = []
        self._pending_opt_state: dict | None = None

    # -- parameter bookkeeping -------------------------------------------------

    def named_params(self) -> list[tuple[str, torch.nn.Parameter]]:
        out = [("model." + n, p) for n, p in self.model.named_parameters()]
        out += [("padding." + n, p) for n, p in self.padding.named_parameters()]
        out += [("disc." + n, p) for n, p in self.disc.named_parameters()]
        return out

    def _generator_params(self, cfg: TrainConfig) -> list[tuple[str, torch.nn.Parameter]]:
        if cfg.stage == "decoder_finetune":
            return [("model.decoder." + n, p)
                    for n, p in self.model.decoder.named_parameters()]
        pairs = [("model." + n, p) for n, p in self.model.named_parameters()]
        pairs += [("padding." + n, p) for n, p in self.padding.named_parameters()]
        return pairs

    def _build_optimizers(self, cfg: TrainConfig) -> None:
        gen = self._generator_params(cfg)
        self._opt_g_names = [n for n, _ in gen]
        self._opt_g = torch.optim.AdamW([p for _, p in gen], lr=cfg.learning_rate,
                                        betas=cfg.betas, weight_decay=cfg.weight_decay)
        self._opt_d = torch.optim.AdamW(self.disc.parameters(), lr=cfg.learning_rate,
                                        betas=cfg.betas, weight_decay=cfg.weight_decay)
        if self._pending_opt_state is not None:
            self._restore_opt_state(self._pending_opt_state)
            self._pending_opt_state = None

    def _restore_opt_state(self, pending: dict) -> None:
        meta, tensors = pending["meta"], pending["tensors"]
        if "opt_g" in meta:
            _restore_one_opt(self._opt_g, self._opt_g_names, meta["opt_g"], tensors)
        if "opt_d" in meta:
            names = ["disc." + n for n, _ in self.disc.named_parameters()]
            _restore_one_opt(self._opt_d, names, meta["opt_d"], tensors)

    # -- one training step -----------------------------------------------------

    def _batch(self, corpus: Corpus, cfg: TrainConfig,
               rng: np.random.Generator) -> torch.Tensor:
        train = corpus.train_indices
        replace_draw = cfg.batch_size > len(train)
        idx = rng.choice(train, size=cfg.batch_size, replace=replace_draw)
        clips = corpus.clips_tensor(idx)                      # (N, 1+T, H, W, 3)
        x = torch.from_numpy(clips).permute(0, 4, 1, 2, 3)    # (N, 3, 1+T, H, W)
        if cfg.stage == "image_pretrain":
            frames = rng.integers(0, x.shape[2], size=cfg.batch_size)
            x = torch.stack([x[i, :, f:f + 1] for i, f in enumerate(frames)])
        return x.contiguous()

    def _step(self, corpus: Corpus, cfg: TrainConfig, step_in_stage: int) -> dict:
        rng = np.random.default_rng([cfg.seed, self.global_step])
        x = self._batch(corpus, cfg, rng)
        try:
            return self._step_inner(x, cfg, step_in_stage, rng)
        except NumericError as exc:
            raise TrainingDiverged(
                f"non-finite values at step {self.global_step}: {exc}") from exc

    def _step_inner(self, x: torch.Tensor, cfg: TrainConfig, step_in_stage: int,
                    rng: np.random.Generator) -> dict:
        w = self.weights
        recon, posts, plans = predictive_step_t(
            self.model, x, cfg.max_drop_ratio, self.padding, rng)

        comps = {
            "mse": mse_loss(recon, x),
            "diff": temporal_diff_loss(recon, x) if cfg.motion_loss
                    else torch.zeros(()),
            "kl": kl_loss(posts),
            "lpips": perceptual_loss(self.extractor, recon, x)
                     if (w.lambda_lpips > 0 and self.extractor is not None)
                     else torch.zeros(()),
        }
        gan_active = w.lambda_gan > 0 and self.global_step >= w.gan_start_step
        if gan_active:
            gan_g, gan_d = gan_losses(self.disc, recon, x)
        else:
            gan_g, gan_d = torch.zeros(()), torch.zeros(())
        comps["gan_g"], comps["gan_d"] = gan_g, gan_d

        total = weighted_total(w, comps, self.global_step)
        report = total_loss(w, {k: v.detach() for k, v in comps.items()}, self.global_step)
        if not math.isfinite(report.total):
            raise TrainingDiverged(
                f"non-finite loss at step {self.global_step}: {report.as_dict()}",
                report=report)

        lr = lr_at(step_in_stage, cfg)
        for group in self._opt_g.param_groups:
            group["lr"] = lr
        for group in self._opt_d.param_groups:
            group["lr"] = lr

        self._opt_g.zero_grad(set_to_none=True)
        self._opt_d.zero_grad(set_to_none=True)
        total.backward()
        torch.nn.utils.clip_grad_norm_(
            [p for g in self._opt_g.param_groups for p in g["params"]], cfg.grad_clip)
        self._opt_g.step()
        if gan_active:
            # discard generator-phase gradients that leaked into the critic
            self._opt_d.zero_grad(set_to_none=True)
            gan_d.backward()
            torch.nn.utils.clip_grad_norm_(self.disc.parameters(), cfg.grad_clip)
            self._opt_d.step()

        row = report.as_dict()
        row["lr"] = lr
        row["ks"] = [p.k for p in plans]
        return row

    # -- stage driver ------------------------------------------------------------

    def run_stage(self, corpus: Corpus, cfg: TrainConfig,
                  out_dir: str | Path | None = None,
                  start_step_in_stage: int = 0,
                  max_steps_this_call: int | None = None,
                  verbose_every: int = 0) -> list[dict]:
        """Run (the rest of) one stage; returns this call's metric log rows.

        ``max_steps_this_call`` stops early without altering the stage's
        schedule (preemption support); a later call with the same cfg and
        ``start_step_in_stage`` picks up bit-exactly where this one stopped.
        """
        frozen = []
        if cfg.stage == "decoder_finetune":
            frozen = list(self.model.encoder.parameters()) + list(self.padding.parameters())
            for p in frozen:
                p.requires_grad_(False)
        self._build_optimizers(cfg)
        end = cfg.steps
        if max_steps_this_call is not None:
            end = min(end, start_step_in_stage + max_steps_this_call)
        log: list[dict] = []
        try:
            for s in range(start_step_in_stage, end):
                row = self._step(corpus, cfg, s)
                row["stage"] = cfg.stage
                row["stage_step"] = s
                log.append(row)
                self.history.append(row)
                self.global_step += 1
                if verbose_every > 0 and (s + 1) % verbose_every == 0:
                    print(f"[{cfg.stage}] step {s + 1}/{cfg.steps} "
                          f"total={row['total']:.4f} mse={row['mse']:.4f}",
                          flush=True)
                if out_dir is not None and cfg.checkpoint_every > 0 \
                        and (s + 1) % cfg.checkpoint_every == 0 and (s + 1) < end:
                    save_checkpoint(out_dir, self, cfg, stage_step=s + 1)
            if out_dir is not None and end > start_step_in_stage:
                save_checkpoint(out_dir, self, cfg, stage_step=end)
        finally:
            for p in frozen:
                p.requires_grad_(True)
        return log


def train_stage(model: VaeModel, corpus: Corpus, cfg: TrainConfig,
                weights: LossWeights | None = None,
                padding: PaddingParams | None = None,
                trainer: Trainer | None = None,
                out_dir: str | Path | None = None) -> tuple[VaeModel, list[dict]]:
    """Train one stage; returns the (mutated) model and the per-step metric log."""
    if trainer is None:
        if padding is None:
            padding = PaddingParams("gaussian")
        trainer = Trainer(model, padding, weights=weights)
    log = trainer.run_stage(corpus, cfg, out_dir=out_dir)
    return model, log


def finetune_decoder(model: VaeModel, corpus: Corpus, cfg: TrainConfig,
                     weights: LossWeights | None = None,
                     padding: PaddingParams | None = None,
                     trainer: Trainer | None = None,
                     out_dir: str | Path | None = None) -> tuple[VaeModel, list[dict]]:
    """Stage 3: frozen encoder + padding, no frame dropping, decoder only."""
    cfg = replace(cfg, stage="decoder_finetune")
    return train_stage(model, corpus, cfg, weights=weights, padding=padding,
                       trainer=trainer, out_dir=out_dir)


# -----------------------------------------------------------------------------
# Checkpoints
# -----------------------------------------------------------------------------

@dataclass
class Checkpoint:
    manifest: dict
    tensors: dict[str, np.ndarray]
    path: Path


def _padding_meta(padding: PaddingParams) -> dict:
    shape = list(padding.token.shape[1:]) if padding.token is not None else None
    return {"strategy": padding.strategy, "sigma": padding.sigma, "latent_shape": shape}


def _opt_state_blob(opt: torch.optim.AdamW, names: list[str]) -> tuple[dict, dict]:
    """(JSON-safe description, tensors to persist) for one optimizer."""
    sd = opt.state_dict()
    desc: dict = {"param_groups": [
        {k: v for k, v in g.items() if k != "params"} for g in sd["param_groups"]]}
    entries = {}
    tensors = {}
    for idx, state in sd["state"].items():
        name = names[idx]
        entry = {}
        for key, val in state.items():
            if isinstance(val, torch.Tensor) and val.ndim > 0:
                tname = f"opt::{name}::{key}"
                tensors[tname] = val.detach().cpu().numpy()
                entry[key] = {"tensor": tname}
            else:
                entry[key] = {"scalar": float(val)}
        entries[name] = entry
    desc["state"] = entries
    return desc, tensors


def save_checkpoint(path: str | Path, trainer: Trainer,
                    cfg: TrainConfig | None = None,
                    stage_step: int | None = None) -> Path:
    path = Path(path)
    tdir = path / "tensors"
    tdir.mkdir(parents=True, exist_ok=True)

    tensors: dict[str, np.ndarray] = {}
    params_meta = {}
    for name, p in trainer.named_params():
        tensors[name] = p.detach().cpu().numpy()
        params_meta[name] = {"shape": list(p.shape)}

    opt_meta = {}
    if trainer._opt_g is not None:
        desc, extra = _opt_state_blob(trainer._opt_g, trainer._opt_g_names)
        opt_meta["opt_g"] = desc
        tensors.update(extra)
        desc_d, extra_d = _opt_state_blob(
            trainer._opt_d, ["disc." + n for n, _ in trainer.disc.named_parameters()])
        opt_meta["opt_d"] = desc_d
        tensors.update(extra_d)

    files = {}
    for i, (name, arr) in enumerate(tensors.items()):
        rel = f"tensors/t{i:05d}.pvt"
        write_tensor(path / rel, arr)
        files[name] = rel

    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "vae",
        "step": trainer.global_step,
        "stage": cfg.stage if cfg is not None else None,
        "stage_step": stage_step,
        "model_config": asdict(trainer.model.cfg),
        "padding": _padding_meta(trainer.padding),
        "loss_weights": asdict(trainer.weights),
        "train_config": asdict(cfg) if cfg is not None else None,
        "rng": {"scheme": "per-step from (seed, global_step)",
                "seed": cfg.seed if cfg is not None else None,
                "global_step": trainer.global_step},
        "params": params_meta,
        "optimizers": opt_meta,
        "files": files,
        "history": trainer.history,
    }
    with open(path / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise CheckpointError(f"no manifest.json under {path}")
    with open(mpath) as f:
        manifest = json.load(f)
    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}")
    tensors = {name: read_tensor(path / rel) for name, rel in manifest["files"].items()}
    return Checkpoint(manifest=manifest, tensors=tensors, path=path)


def _load_module_params(prefix: str, module: torch.nn.Module, ckpt: Checkpoint) -> None:
    with torch.no_grad():
        for name, p in module.named_parameters():
            full = prefix + name
            if full not in ckpt.tensors:
                raise CheckpointError(f"checkpoint is missing parameter {full!r}")
            arr = ckpt.tensors[full]
            if tuple(arr.shape) != tuple(p.shape):
                raise CheckpointError(
                    f"parameter {full!r}: checkpoint shape {tuple(arr.shape)} "
                    f"does not match model shape {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr))


def trainer_from_checkpoint(ckpt: Checkpoint) -> tuple[Trainer, TrainConfig | None, int]:
    """Rebuild model/padding/critic/optimizer state exactly as saved.

    Returns (trainer, stage config, steps already completed in that stage).
    """
    m = ckpt.manifest
    mc = dict(m["model_config"])
    mc["channel_mult"] = tuple(mc["channel_mult"])
    cfg = VaeConfig(**mc)
    model = build_model(cfg)
    pmeta = m["padding"]
    shape = tuple(pmeta["latent_shape"]) if pmeta["latent_shape"] else None
    padding = PaddingParams(pmeta["strategy"], latent_shape=shape, sigma=pmeta["sigma"])
    weights = LossWeights(**m["loss_weights"])
    trainer = Trainer(model, padding, weights=weights)
    _load_module_params("model.", trainer.model, ckpt)
    _load_module_params("padding.", trainer.padding, ckpt)
    _load_module_params("disc.", trainer.disc, ckpt)
    trainer.global_step = m["step"]
    trainer.history = list(m.get("history", []))
    if m.get("optimizers"):
        trainer._pending_opt_state = {"meta": m["optimizers"], "tensors": ckpt.tensors}
    tc = None
    if m.get("train_config"):
        tcd = dict(m["train_config"])
        tcd["betas"] = tuple(tcd["betas"])
        tc = TrainConfig(**tcd)
    return trainer, tc, int(m.get("stage_step") or 0)


def _restore_one_opt(opt: torch.optim.AdamW, names: list[str],
                     desc: dict, tensors: dict) -> None:
    sd = opt.state_dict()
    for g_new, g_saved in zip(sd["param_groups"], desc["param_groups"]):
        for k, v in g_saved.items():
            if k in g_new:
                g_new[k] = tuple(v) if isinstance(v, list) else v
    state = {}
    for idx, name in enumerate(names):
        if name not in desc["state"]:
            continue
        entry = {}
        for key, val in desc["state"][name].items():
            if "tensor" in val:
                entry[key] = torch.from_numpy(tensors[val["tensor"]].copy())
            else:
                entry[key] = torch.tensor(val["scalar"])
        state[idx] = entry
    sd["state"] = state
    opt.load_state_dict(sd)


# -----------------------------------------------------------------------------
# Presets: the incremental ablation ladder
# -----------------------------------------------------------------------------

PRESETS = ("baseline", "pr", "pr_motion", "pr_motion_ft")


def preset_plan(name: str, steps: int = 2000, finetune_steps: int = 1000,
                image_steps: int = 0, seed: int = 0,
                **train_overrides) -> tuple[list[TrainConfig], dict]:
    """Stage list + trainer knobs for one ablation-ladder row.

    baseline:     no dropping, no motion loss
    pr:           predictive reconstruction (r=1)
    pr_motion:    + motion-aware temporal difference loss
    pr_motion_ft: + frozen-encoder decoder fine-tuning
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    r = 0.0 if name == "baseline" else 1.0
    motion = name in ("pr_motion", "pr_motion_ft")
    stages = []
    if image_steps > 0:
        stages.append(TrainConfig(stage="image_pretrain", steps=image_steps,
                                  max_drop_ratio=0.0, motion_loss=False,
                                  seed=seed, **train_overrides))
    stages.append(TrainConfig(stage="video_predictive", steps=steps,
                              max_drop_ratio=r, motion_loss=motion,
                              seed=seed, **train_overrides))
    if name == "pr_motion_ft":
        stages.append(TrainConfig(stage="decoder_finetune", steps=finetune_steps,
                                  motion_loss=motion, seed=seed, **train_overrides))
    return stages, {"preset": name, "max_drop_ratio": r, "motion_loss": motion}


def run_preset(name: str, model: VaeModel, corpus: Corpus,
               padding: PaddingParams, weights: LossWeights | None = None,
               out_dir: str | Path | None = None, **plan_kwargs) -> Trainer:
    """Train all stages of one ablation row and return the trainer."""
    stages, _ = preset_plan(name, **plan_kwargs)
    trainer = Trainer(model, padding, weights=weights)
    for cfg in stages:
        trainer.run_stage(corpus, cfg, out_dir=out_dir)
    return trainer
