"""``pvvae`` command-line tool.

Commands: generate-data, train, finetune-decoder, train-flow, eval-recon,
eval-latent, eval-gen, visualize. Every command writes a run manifest and is
deterministic given (flags, seed, input artifacts). Exit codes: 0 success,
1 runtime failure, 2 usage error. ``PVVAE_SEED`` overrides the config seed.
"""
from __future__ import annotations

import functools
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import diagnostics, viz
from .data_synth import Corpus, CorpusRanges, generate_corpus
from .diffusion_probe import (
    FlowModelConfig,
    decode_latents,
    frechet_proxy,
    generate_latents,
    load_flow_checkpoint,
    save_flow_checkpoint,
    train_flow,
)
from .errors import InputError, PvvaeError
from .losses import LossWeights
from .manifest import RunManifest
from .model import VaeConfig, build_model, encode, latent_shape
from .predictive import PaddingParams, partition_groups, predictive_forward
from .trainer import (
    PRESETS,
    TrainConfig,
    Trainer,
    load_checkpoint,
    preset_plan,
    trainer_from_checkpoint,
)

ENV_SEED = "PVVAE_SEED"


def resolve_seed(cli_seed: int | None, config: dict) -> int:
    if os.environ.get(ENV_SEED):
        return int(os.environ[ENV_SEED])
    if cli_seed is not None:
        return cli_seed
    return int(config.get("seed", 0))


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def model_config_from(config: dict, seed: int) -> VaeConfig:
    section = dict(config.get("model", {}))
    if "channel_mult" in section:
        section["channel_mult"] = tuple(section["channel_mult"])
    section.setdefault("seed", seed)
    return VaeConfig(**section)


def weights_from(config: dict) -> LossWeights:
    return LossWeights.toy(**config.get("loss", {}))


def runtime_errors(fn):
    """Map package/runtime failures to exit code 1 (usage errors stay 2)."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (PvvaeError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _parse_res(res: str) -> tuple[int, int]:
    parts = res.lower().split("x")
    try:
        if len(parts) == 1:
            v = int(parts[0])
            return (v, v)
        if len(parts) == 2:
            return (int(parts[0]), int(parts[1]))
    except ValueError:
        pass
    raise click.BadParameter(f"cannot parse resolution {res!r}; use e.g. 64 or 64x48")


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"cannot parse float list {text!r}")


def _write_metrics(out: Path, metrics: dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "metrics.json"
    with open(path, "w") as f:
        json.dump(metrics, f, indent=1, sort_keys=True)
    return path


@click.group()
def main():
    """Predictive video VAE: data, training, and latent diagnostics."""


# -----------------------------------------------------------------------------
# generate-data
# -----------------------------------------------------------------------------

@main.command("generate-data")
@click.option("--n", type=int, required=True, help="number of clips")
@click.option("--seed", type=int, default=None)
@click.option("--frames", type=int, default=17)
@click.option("--res", default="64", help="HxW or a single side length")
@click.option("--out", type=click.Path(), required=True)
@click.option("--num-shapes", default="1,3", help="min,max shapes per clip")
@click.option("--velocity", default="-2,2", help="min,max velocity (px/frame)")
@click.option("--size", default="4,10", help="min,max shape size (px)")
@click.option("--background", type=click.Choice(["solid", "noise_texture"]), default="solid")
@click.option("--integer-velocities", is_flag=True, default=False)
@click.option("--config", type=click.Path(exists=True), default=None)
@runtime_errors
def cmd_generate_data(n, seed, frames, res, out, num_shapes, velocity, size,
                      background, integer_velocities, config):
    """Write a synthetic moving-shapes corpus with exact flow labels."""
    if n < 1:
        raise click.BadParameter("--n must by >= 1")
    cfg = load_config(config)
    seed = resolve_seed(seed, cfg)
    lo, hi = (int(v) for v in num_shapes.split(","))
    vlo, vhi = _parse_floats(velocity)
    slo, shi = _parse_floats(size)
    ranges = CorpusRanges(frames=frames, resolution=_parse_res(res),
                          num_shapes=(lo, hi), velocity_range=(vlo, vhi),
                          size_range=(slo, shi), background=background,
                          integer_velocities=integer_velocities)
    manifest = RunManifest("generate-data", {"n": n, "ranges": asdict(ranges)}, seed,
                           inputs=[config] if config else [])
    path = generate_corpus(out, n=n, base_seed=seed, ranges=ranges)
    manifest.add_output(str(path))
    manifest.metrics = {"clips": n}
    manifest.write(out)
    click.echo(f"corpus with {n} clips at {out}")


# -----------------------------------------------------------------------------
# train / finetune-decoder
# -----------------------------------------------------------------------------

def _build_trainer(config: dict, corpus: Corpus, seed: int,
                   padding_strategy: str | None) -> Trainer:
    mcfg = model_config_from(config, seed)
    model = build_model(mcfg)
    h, w = corpus.manifest["resolution"]
    _, lh, lw, lc = latent_shape(mcfg, corpus.manifest["frames"], h, w)
    pconf = dict(config.get("padding", {}))
    strategy = padding_strategy or pconf.get("strategy", mcfg.padding_strategy)
    padding = PaddingParams(strategy, latent_shape=(lh, lw, lc),
                            sigma=float(pconf.get("sigma", 1.0)))
    return Trainer(model, padding, weights=weights_from(config))


def _train_kwargs(config: dict, overrides: dict) -> dict:
    kw = dict(config.get("train", {}))
    kw.pop("stage", None)
    kw.pop("max_drop_ratio", None)
    kw.pop("motion_loss", None)
    if "betas" in kw:
        kw["betas"] = tuple(kw["betas"])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return kw


@main.command("train")
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--preset", type=click.Choice(PRESETS), default="pr_motion")
@click.option("--stage", type=click.Choice(["image_pretrain", "video_predictive",
                                            "decoder_finetune"]), default=None,
              help="run a single stage instead of the preset's stage list")
@click.option("--steps", type=int, default=None)
@click.option("--finetune-steps", type=int, default=None)
@click.option("--image-steps", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", "learning_rate", type=float, default=None)
@click.option("--max-drop-ratio", type=float, default=None,
              help="override the preset's r (drop-ratio ablation)")
@click.option("--padding-strategy", type=click.Choice(["gaussian", "learnable"]),
              default=None, help="override padding (padding ablation)")
@click.option("--seed", type=int, default=None)
@click.option("--resume", type=click.Path(exists=True), default=None)
@click.option("--stop-after", type=int, default=None,
              help="stop after N steps this invocation (resume to continue)")
@runtime_errors
def cmd_train(corpus_dir, out, config, preset, stage, steps, finetune_steps,
              image_steps, batch_size, learning_rate, max_drop_ratio,
              padding_strategy, seed, resume, stop_after):
    """Train a preset row of the ablation ladder (or a single stage)."""
    cfg = load_config(config)
    seed = resolve_seed(seed, cfg)
    corpus = Corpus(corpus_dir)
    manifest = RunManifest("train", {
        "preset": preset, "stage": stage, "config": cfg, "steps": steps,
        "finetune_steps": finetune_steps, "image_steps": image_steps,
        "max_drop_ratio": max_drop_ratio, "padding_strategy": padding_strategy,
    }, seed, inputs=[p for p in (config, corpus_dir, resume) if p])

    kw = _train_kwargs(cfg, {"batch_size": batch_size, "learning_rate": learning_rate})
    kw["seed"] = seed
    base_steps = steps if steps is not None else kw.pop("steps", 2000)
    kw.pop("steps", None)
    if max_drop_ratio is None and "max_drop_ratio" in cfg:
        max_drop_ratio = float(cfg["max_drop_ratio"])

    if resume:
        trainer, rcfg, stage_step = trainer_from_checkpoint(load_checkpoint(resume))
        if rcfg is None:
            raise InputError(f"checkpoint {resume} has no training config to resume")
        if steps is not None:
            from dataclasses import replace
            rcfg = replace(rcfg, steps=steps)
        log = trainer.run_stage(corpus, rcfg, out_dir=out,
                                start_step_in_stage=stage_step,
                                max_steps_this_call=stop_after)
    else:
        trainer = _build_trainer(cfg, corpus, seed, padding_strategy)
        stages, meta = preset_plan(
            preset, steps=base_steps,
            finetune_steps=finetune_steps if finetune_steps is not None else 1000,
            image_steps=image_steps or 0, **kw)
        if max_drop_ratio is not None:
            stages = [s if s.stage == "decoder_finetune" else
                      _with_ratio(s, max_drop_ratio) for s in stages]
        if stage is not None:
            stages = [s for s in stages if s.stage == stage] or \
                [TrainConfig(stage=stage, steps=base_steps,
                             max_drop_ratio=max_drop_ratio if max_drop_ratio is not None
                             else meta["max_drop_ratio"],
                             motion_loss=meta["motion_loss"], **kw)]
        log = []
        for scfg in stages:
            log += trainer.run_stage(corpus, scfg, out_dir=out,
                                     max_steps_this_call=stop_after,
                                     verbose_every=max(scfg.steps // 10, 0))
            if stop_after is not None and len(log) >= stop_after:
                break

    last = log[-1] if log else {}
    manifest.metrics = {"steps_run": len(log), "final": last}
    manifest.add_output(str(Path(out) / "manifest.json"))
    manifest.write(out)
    click.echo(f"trained {len(log)} steps -> {out}")


def _with_ratio(cfg: TrainConfig, r: float) -> TrainConfig:
    from dataclasses import replace
    return replace(cfg, max_drop_ratio=r)


@main.command("finetune-decoder")
@click.option("--resume", type=click.Path(exists=True), required=True,
              help="checkpoint of the video-trained model")
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--steps", type=int, default=1000)
@click.option("--seed", type=int, default=None)
@runtime_errors
def cmd_finetune_decoder(resume, corpus_dir, out, steps, seed):
    """Stage 3: freeze encoder and padding, train the decoder with no dropping."""
    corpus = Corpus(corpus_dir)
    trainer, rcfg, _ = trainer_from_checkpoint(load_checkpoint(resume))
    seed = resolve_seed(seed, {"seed": rcfg.seed if rcfg else 0})
    base = asdict(rcfg) if rcfg else {}
    base.update({"stage": "decoder_finetune", "steps": steps, "seed": seed})
    base["betas"] = tuple(base.get("betas", (0.9, 0.99)))
    scfg = TrainConfig(**base)
    manifest = RunManifest("finetune-decoder", {"steps": steps}, seed,
                           inputs=[resume, corpus_dir])
    log = trainer.run_stage(corpus, scfg, out_dir=out)
    manifest.metrics = {"steps_run": len(log), "final": log[-1] if log else {}}
    manifest.write(out)
    click.echo(f"fine-tuned decoder {len(log)} steps -> {out}")


# -----------------------------------------------------------------------------
# train-flow
# -----------------------------------------------------------------------------

def _encode_corpus_means(model, corpus: Corpus, indices) -> np.ndarray:
    means = []
    for i in indices:
        means.append(encode(model, corpus.load_clip(i)).mean)
    return np.stack(means)


@main.command("train-flow")
@click.option("--latents-from", "vae_ckpt", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--steps", type=int, default=1500)
@click.option("--batch-size", type=int, default=32)
@click.option("--lr", type=float, default=2e-3)
@click.option("--seed", type=int, default=None)
@runtime_errors
def cmd_train_flow(vae_ckpt, corpus_dir, out, steps, batch_size, lr, seed):
    """Fit the tiny rectified-flow model on a checkpoint's training latents."""
    seed = resolve_seed(seed, {})
    corpus = Corpus(corpus_dir)
    trainer, _, _ = trainer_from_checkpoint(load_checkpoint(vae_ckpt))
    latents = _encode_corpus_means(trainer.model, corpus, corpus.train_indices)
    fcfg = FlowModelConfig(steps=steps, batch_size=batch_size,
                           learning_rate=lr, seed=seed)
    manifest = RunManifest("train-flow", asdict(fcfg), seed,
                           inputs=[vae_ckpt, corpus_dir])
    net, stats, log = train_flow(latents, fcfg)
    save_flow_checkpoint(out, net, stats, latents.shape[1:],
                         extra={"vae_checkpoint": str(vae_ckpt)})
    manifest.metrics = {"final_rf_loss": log[-1] if log else None}
    manifest.write(out)
    click.echo(f"flow model trained {steps} steps -> {out}")


# -----------------------------------------------------------------------------
# eval commands
# -----------------------------------------------------------------------------

def _load_vae(ckpt_path: str):
    trainer, _, _ = trainer_from_checkpoint(load_checkpoint(ckpt_path))
    return trainer


@main.command("eval-recon")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--split", type=click.Choice(["train", "val"]), default="val")
@click.option("--self-eval", is_flag=True, default=False,
              help="score clips against themselves (pipeline sanity check)")
@click.option("--seed", type=int, default=None)
@runtime_errors
def cmd_eval_recon(ckpt, corpus_dir, out, split, self_eval, seed):
    """PSNR/SSIM of mean-latent reconstructions on a corpus split."""
    from .model import decode as decode_clip
    from .model import LatentSequence
    seed = resolve_seed(seed, {})
    corpus = Corpus(corpus_dir)
    trainer = _load_vae(ckpt)
    idx = corpus.val_indices if split == "val" else corpus.train_indices
    manifest = RunManifest("eval-recon", {"split": split, "self_eval": self_eval},
                           seed, inputs=[ckpt, corpus_dir])
    psnrs, ssims = [], []
    for i in idx:
        clip = corpus.load_clip(i)
        if self_eval:
            recon = clip
        else:
            post = encode(trainer.model, clip)
            recon = decode_clip(trainer.model, LatentSequence(post.mean))
        psnrs.append(diagnostics.psnr(recon, clip))
        ssims.append(diagnostics.ssim(recon, clip))
    metrics = {"psnr": float(np.mean(psnrs)), "ssim": float(np.mean(ssims)),
               "clips": len(idx)}
    manifest.metrics = metrics
    manifest.add_output(str(_write_metrics(Path(out), metrics)))
    manifest.write(out)
    click.echo(json.dumps(metrics))


def _latent_metrics(trainer, corpus: Corpus, idx, padding, seed: int,
                    probe_steps: int, drop_ratio: float | None = None,
                    intervals: list[int] | None = None) -> dict:
    model = trainer.model
    clips = [corpus.load_clip(i) for i in idx]
    if intervals is None:
        t_len = 1 + (clips[0].num_frames - 1) // model.cfg.p_t
        intervals = list(range(1, min(4, t_len - 1) + 1))
    profile = diagnostics.ltd_profile(model, clips, intervals=intervals)
    G = partition_groups(clips[0].num_frames - 1, model.cfg.p_t)
    if drop_ratio is None:
        k = max(1, (G - 1) // 2)
    else:
        k = max(1, int(math.floor((G - 1) * drop_ratio)))
    errs = [diagnostics.prediction_error(model, c, k, padding,
                                         np.random.default_rng([seed, i]))
            for i, c in enumerate(clips)]
    epe_val = diagnostics.flow_probe(model, corpus, steps=probe_steps, seed=seed)
    return {"ltd": profile.as_dict(), "prediction_mse": float(np.mean(errs)),
            "prediction_k": k, "epe": epe_val}


@main.command("eval-latent")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--probe-steps", type=int, default=500)
@click.option("--ablate-drop-ratio", default=None,
              help="comma list of eval drop ratios, one metrics row each")
@click.option("--ablate-padding", default=None,
              help="comma list of padding strategies, one metrics row each")
@click.option("--seed", type=int, default=None)
@runtime_errors
def cmd_eval_latent(ckpt, corpus_dir, out, probe_steps, ablate_drop_ratio,
                    ablate_padding, seed):
    """LTD profile, dropped-frame prediction MSE, and flow-probe EPE."""
    seed = resolve_seed(seed, {})
    corpus = Corpus(corpus_dir)
    trainer = _load_vae(ckpt)
    idx = corpus.val_indices
    manifest = RunManifest("eval-latent", {"probe_steps": probe_steps,
                                           "ablate_drop_ratio": ablate_drop_ratio,
                                           "ablate_padding": ablate_padding},
                           seed, inputs=[ckpt, corpus_dir])
    metrics = _latent_metrics(trainer, corpus, idx, trainer.padding, seed, probe_steps)
    rows = []
    if ablate_drop_ratio:
        for ratio in _parse_floats(ablate_drop_ratio):
            if ratio <= 0:
                raise click.BadParameter("eval drop ratios must be > 0")
            row = _latent_metrics(trainer, corpus, idx, trainer.padding, seed,
                                  probe_steps, drop_ratio=ratio)
            row["drop_ratio"] = ratio
            rows.append(row)
    if ablate_padding:
        for strategy in [s.strip() for s in ablate_padding.split(",") if s.strip()]:
            if strategy == trainer.padding.strategy:
                pad = trainer.padding
            elif strategy == "gaussian":
                pad = PaddingParams("gaussian", sigma=trainer.padding.sigma)
            else:
                raise InputError(
                    f"checkpoint trained with {trainer.padding.strategy!r} padding "
                    f"has no parameters for {strategy!r}")
            row = _latent_metrics(trainer, corpus, idx, pad, seed, probe_steps)
            row["padding"] = strategy
            rows.append(row)
    if rows:
        metrics["rows"] = rows
    manifest.metrics = {k: v for k, v in metrics.items() if k != "ltd"} | \
        {"ltd_mean_distance": metrics["ltd"]["mean_distance"]}
    manifest.add_output(str(_write_metrics(Path(out), metrics)))
    manifest.write(out)
    click.echo(json.dumps({"prediction_mse": metrics["prediction_mse"],
                           "epe": metrics["epe"]}))


@main.command("eval-gen")
@click.option("--flow", "flow_ckpt", type=click.Path(exists=True), required=True)
@click.option("--vae", "vae_ckpt", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--n", type=int, default=256)
@click.option("--sampler-steps", type=int, default=100)
@click.option("--report", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@runtime_errors
def cmd_eval_gen(flow_ckpt, vae_ckpt, corpus_dir, n, sampler_steps, report, out, seed):
    """Sample the flow model, decode, and score the Frechet proxy vs real clips."""
    seed = resolve_seed(seed, {})
    corpus = Corpus(corpus_dir)
    if len(corpus) < n:
        raise InputError(f"corpus has {len(corpus)} clips, need {n} real samples")
    trainer = _load_vae(vae_ckpt)
    net, stats, fmanifest = load_flow_checkpoint(flow_ckpt)
    manifest = RunManifest("eval-gen", {"n": n, "sampler_steps": sampler_steps},
                           seed, inputs=[flow_ckpt, vae_ckpt, corpus_dir])
    latents = generate_latents(net, stats, n, tuple(fmanifest["latent_shape"]),
                               np.random.default_rng(seed),
                               sampler_steps=sampler_steps)
    gen_clips = decode_latents(trainer.model, latents)
    real_clips = corpus.clips_tensor(range(n))
    score = frechet_proxy(real_clips, gen_clips, projection_seed=seed)
    metrics = {"frechet_proxy": score, "n": n,
               "time_convention": fmanifest["time_convention"]}
    manifest.metrics = metrics
    out = Path(out)
    manifest.add_output(str(_write_metrics(out, metrics)))
    if report:
        with open(report, "w") as f:
            json.dump(metrics, f, indent=1, sort_keys=True)
        manifest.add_output(str(report))
    manifest.write(out)
    click.echo(json.dumps({"frechet_proxy": score}))


# -----------------------------------------------------------------------------
# visualize
# -----------------------------------------------------------------------------

@main.command("visualize")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--pca", "do_pca", is_flag=True, default=False)
@click.option("--flow", "do_flow", is_flag=True, default=False)
@click.option("--pred", "do_pred", is_flag=True, default=False)
@click.option("--clip-index", type=int, default=None, help="defaults to first val clip")
@click.option("--seed", type=int, default=None)
@runtime_errors
def cmd_visualize(ckpt, corpus_dir, out, do_pca, do_flow, do_pred, clip_index, seed):
    """Emit PNG grids: PCA-of-latents, flow maps, and prediction panels."""
    seed = resolve_seed(seed, {})
    corpus = Corpus(corpus_dir)
    trainer = _load_vae(ckpt)
    model = trainer.model
    if clip_index is None:
        clip_index = corpus.val_indices[0] if corpus.val_indices else 0
    clip = corpus.load_clip(clip_index)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("visualize", {"clip_index": clip_index, "pca": do_pca,
                                         "flow": do_flow, "pred": do_pred},
                           seed, inputs=[ckpt, corpus_dir])
    if not (do_pca or do_flow or do_pred):
        do_pca = do_pred = True

    if do_pca or do_flow:
        post = encode(model, clip)
        rgb, _ = diagnostics.pca_rgb(post.mean)
        up = np.kron(rgb, np.ones((1, model.cfg.p_s, model.cfg.p_s, 1), np.float32))
        # 0-indexed last pixel frame of each latent group
        group_ends = [0] + [(g - 1) * model.cfg.p_t
                            for g in range(2, post.mean.shape[0] + 1)]
        rows = [clip.data[group_ends], up * 2.0 - 1.0]
        labels = ["pixels", "latent PCA"]
        if do_flow:
            flow = corpus.load_flow(clip_index).data
            flow_idx = [min(i, flow.shape[0] - 1) for i in group_ends]
            rows.append(viz.flow_to_rgb(flow[flow_idx]) * 2.0 - 1.0)
            labels.append("true flow")
        p = viz.save_frame_grid(rows, labels, out / "pca_grid.png",
                                max_cols=len(group_ends))
        manifest.add_output(str(p))

    if do_pred:
        G = partition_groups(clip.num_frames - 1, model.cfg.p_t)
        k = max(1, (G - 1) // 2)
        recon, _, plan = predictive_forward(model, clip, 1.0, trainer.padding,
                                            np.random.default_rng(seed), k=k)
        p = viz.save_frame_grid([clip.data, recon.data], ["target", "recon"],
                                out / "prediction.png", max_cols=8,
                                col_mark=plan.observed_frames)
        manifest.add_output(str(p))

    # LTD plots always come along: cheap and central to the analysis
    clips = [corpus.load_clip(i) for i in (corpus.val_indices or [clip_index])]
    t_len = 1 + (clips[0].num_frames - 1) // model.cfg.p_t
    profile = diagnostics.ltd_profile(
        model, clips, intervals=list(range(1, min(4, t_len - 1) + 1)))
    p = viz.save_ltd_plots(profile, out / "ltd.png")
    manifest.add_output(str(p))
    manifest.write(out)
    click.echo(f"wrote plots to {out}")


if __name__ == "__main__":
    main()
