"""Acceptance suite: one test per criterion, one printed PASS line each.

Criteria 6-8 share trained models (three ablation presets x three seeds) built
once per session by the ``trend_runs`` fixture. The trend protocol runs the toy
architecture on a 17x16x16 translating-shapes corpus so the whole ladder fits
a CPU budget; set PVVAE_ACCEPT_CACHE=<dir> to reuse checkpoints across runs
while iterating (the cache key includes the protocol tag).
"""
import json
import math
import os
import struct
from pathlib import Path

import numpy as np
import pytest
import scipy.stats
import torch
from click.testing import CliRunner

from pvvae.cli import main as cli_main
from pvvae.data_synth import Corpus, CorpusRanges, generate_corpus
from pvvae.diagnostics import flow_probe, ltd_profile, prediction_error
from pvvae.diffusion_probe import (
    FlowModelConfig,
    decode_latents,
    frechet_proxy,
    generate_latents,
    train_flow,
)
from pvvae.errors import FormatError
from pvvae.losses import LossWeights, gan_losses, kl_loss, mse_loss, temporal_diff_loss
from pvvae.model import (
    LatentPosterior,
    VaeConfig,
    VideoClip,
    build_model,
    encode,
)
from pvvae.predictive import PaddingParams, sample_drop
from pvvae.tensorio import MAGIC, read_tensor, write_tensor
from pvvae.trainer import (
    TrainConfig,
    Trainer,
    load_checkpoint,
    run_preset,
    save_checkpoint,
    trainer_from_checkpoint,
)

SEEDS = (0, 1, 2)
PROTOCOL = "trend-v1"           # bump to invalidate externally cached runs
RES = (16, 16)
FRAMES = 17
CORPUS_N = 266                  # 239 train / 27 val; first 256 serve as the real set
STEPS_MAIN = 2000               # pinned by criterion 7
STEPS_FT_VIDEO = 1600           # pr_motion_ft video stage (criterion 6 budget)
STEPS_FT = 500


def report(criterion: int, detail: str) -> None:
    print(f"\n[criterion {criterion:2d}] PASS  {detail}")


def toy_cfg(seed: int) -> VaeConfig:
    return VaeConfig(seed=seed)


def train_preset(preset: str, seed: int, corpus: Corpus) -> Trainer:
    model = build_model(toy_cfg(seed))
    padding = PaddingParams("learnable", latent_shape=(2, 2, 8))
    steps = STEPS_FT_VIDEO if preset == "pr_motion_ft" else STEPS_MAIN
    trainer = run_preset(preset, model, corpus, padding, weights=LossWeights.toy(),
                         steps=steps, finetune_steps=STEPS_FT, seed=seed,
                         batch_size=2, learning_rate=1e-3, warmup_steps=100)
    trainer._opt_g = trainer._opt_d = None   # free optimizer state
    return trainer


@pytest.fixture(scope="session")
def trend_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept") / "corpus"
    generate_corpus(root, n=CORPUS_N, base_seed=2024,
                    ranges=CorpusRanges(frames=FRAMES, resolution=RES,
                                        num_shapes=(1, 2), size_range=(2.5, 4.5),
                                        velocity_range=(-0.5, 0.5),
                                        background="solid"))
    return Corpus(root)


@pytest.fixture(scope="session")
def trend_runs(trend_corpus, tmp_path_factory):
    cache_root = os.environ.get("PVVAE_ACCEPT_CACHE")
    runs = {}
    for preset in ("baseline", "pr", "pr_motion_ft"):
        for seed in SEEDS:
            key = f"{PROTOCOL}_{preset}_{seed}"
            if cache_root and (Path(cache_root) / key / "manifest.json").exists():
                trainer, _, _ = trainer_from_checkpoint(
                    load_checkpoint(Path(cache_root) / key))
                print(f"\n[trend] loaded cached {preset} seed {seed}")
            else:
                print(f"\n[trend] training {preset} seed {seed} ...")
                trainer = train_preset(preset, seed, trend_corpus)
                if cache_root:
                    save_checkpoint(Path(cache_root) / key, trainer)
            runs[(preset, seed)] = trainer
    return runs


# -----------------------------------------------------------------------------
# 1. Shape & causality
# -----------------------------------------------------------------------------

def test_criterion_1_shapes_and_causality():
    # paper-ratio config at batch 1
    paper = build_model(VaeConfig.paper())
    clip = VideoClip(np.random.default_rng(0).uniform(
        -1, 1, (17, 256, 256, 3)).astype(np.float32))
    post = encode(paper, clip)
    assert post.mean.shape == (5, 16, 16, 64)
    from pvvae.model import LatentSequence, decode
    out = decode(paper, LatentSequence(post.mean))
    assert out.data.shape == (17, 256, 256, 3)
    del paper

    # toy config shape contract
    toy = build_model(VaeConfig())
    clip = VideoClip(np.random.default_rng(1).uniform(
        -1, 1, (17, 64, 64, 3)).astype(np.float32))
    post = encode(toy, clip)
    assert post.mean.shape == (5, 8, 8, 8)
    out = decode(toy, LatentSequence(post.mean))
    assert out.data.shape == (17, 64, 64, 3)

    # causality for every prefix length g in 1..G (on 32x32 for speed)
    rng = np.random.default_rng(2)
    base = rng.uniform(-1, 1, (17, 32, 32, 3)).astype(np.float32)
    post_base = encode(toy, VideoClip(base))
    G = 5
    for g in range(1, G + 1):
        cut = 1 + (g - 1) * 4          # frames 1..cut (1-indexed) are unchanged
        other = base.copy()
        if cut < 17:
            other[cut:] = rng.uniform(-1, 1, other[cut:].shape).astype(np.float32)
        post_other = encode(toy, VideoClip(other))
        assert np.array_equal(post_base.mean[:g], post_other.mean[:g]), f"g={g}"
        assert np.array_equal(post_base.logvar[:g], post_other.logvar[:g]), f"g={g}"
    report(1, "paper 17x256x256->5x16x16x64 and toy shapes; prefix latents "
              "bit-identical for g=1..5")


# -----------------------------------------------------------------------------
# 2. Drop-sampling distribution
# -----------------------------------------------------------------------------

def test_criterion_2_drop_distribution():
    rng = np.random.default_rng(7)
    draws = np.array([sample_drop(5, 1.0, rng) for _ in range(10_000)])
    counts = np.bincount(draws, minlength=5)
    _, p = scipy.stats.chisquare(counts)
    assert p > 0.01, f"chi-square p={p}"

    support_half = {sample_drop(5, 0.5, rng) for _ in range(2000)}
    assert support_half == {0, 1, 2}
    assert all(sample_drop(5, 0.0, rng) == 0 for _ in range(200))
    report(2, f"10k draws uniform over {{0..4}} (chi-square p={p:.3f}); "
              "r=0.5 support {0,1,2}; r=0 degenerate")


# -----------------------------------------------------------------------------
# 3. Analytic loss values
# -----------------------------------------------------------------------------

def test_criterion_3_analytic_losses():
    shape = (2, 4, 4, 3)
    zero = np.zeros(shape, np.float32)
    one = np.ones(shape, np.float32)
    assert abs(float(kl_loss(LatentPosterior(zero, zero)))) <= 1e-6
    assert abs(float(kl_loss(LatentPosterior(one, zero))) - 0.5) <= 1e-6
    assert abs(float(kl_loss(LatentPosterior(zero, one)))
               - 0.5 * (math.e - 2.0)) <= 1e-6

    rng = np.random.default_rng(3)
    a = rng.uniform(-1, 1, (5, 8, 8, 3))
    b = rng.uniform(-1, 1, (5, 8, 8, 3))
    offset = rng.uniform(-1, 1, (1, 8, 8, 3))
    assert abs(float(temporal_diff_loss(a, b))
               - float(temporal_diff_loss(a + offset, b + offset))) <= 1e-8

    real = np.full((3, 8, 8, 3), 0.5, np.float32)
    fake = np.full((3, 8, 8, 3), -0.5, np.float32)
    sign_disc = lambda x: torch.sign(x.mean()).reshape(1)
    _, gan_d = gan_losses(sign_disc, fake, real)
    assert float(gan_d) == 0.0
    zero_disc = lambda x: torch.zeros(1)
    gan_g, gan_d = gan_losses(zero_disc, fake, real)
    assert float(gan_d) == 2.0 and float(gan_g) == 0.0
    const_disc = lambda x: torch.full((1,), 1.25)
    gan_g, _ = gan_losses(const_disc, fake, real)
    assert float(gan_g) == -1.25
    report(3, "KL {0, 0.5, (e-2)/2} to 1e-6; diff-loss offset invariance to "
              "1e-8; hinge-GAN cases exact")


# -----------------------------------------------------------------------------
# 4. Gradient check
# -----------------------------------------------------------------------------

def test_criterion_4_gradient_check():
    cfg = VaeConfig(p_t=2, p_s=2, c_latent=2, base_channels=4, channel_mult=(1,),
                    seed=0)
    model = build_model(cfg).double()
    n_params = sum(p.numel() for p in model.parameters())
    assert n_params <= 10_000, n_params

    rng = np.random.default_rng(11)
    x = torch.from_numpy(rng.uniform(-1, 1, (5, 8, 8, 3))).double()
    x = x.permute(3, 0, 1, 2).unsqueeze(0)
    eps = torch.from_numpy(rng.standard_normal((1, 2, 3, 4, 4))).double()
    lam_rec, lam_kl = 1.0, 0.1

    def loss_fn():
        mean, logvar = model.encode_t(x)
        z = mean + torch.exp(0.5 * logvar) * eps
        recon = model.decode_t(z)
        return (lam_rec * (mse_loss(recon, x) + temporal_diff_loss(recon, x))
                + lam_kl * kl_loss([(mean, logvar)]))

    model.zero_grad()
    loss_fn().backward()
    params = list(model.parameters())
    h = 1e-4
    worst = 0.0
    for _ in range(100):
        p = params[int(rng.integers(len(params)))]
        flat = p.data.view(-1)
        i = int(rng.integers(flat.numel()))
        orig = float(flat[i])
        with torch.no_grad():
            flat[i] = orig + h
            f_plus = float(loss_fn())
            flat[i] = orig - h
            f_minus = float(loss_fn())
            flat[i] = orig
        fd = (f_plus - f_minus) / (2 * h)
        an = float(p.grad.view(-1)[i])
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
        if abs(an - fd) >= 1e-10:
            assert rel < 1e-3, f"param grad mismatch: analytic={an}, fd={fd}, rel={rel}"
            worst = max(worst, rel)
    report(4, f"100 sampled parameters, {n_params} total; worst relative "
              f"error {worst:.2e} < 1e-3")


# -----------------------------------------------------------------------------
# 5. Stage-3 freeze
# -----------------------------------------------------------------------------

def test_criterion_5_stage3_freeze(tmp_path):
    root = tmp_path / "c"
    generate_corpus(root, n=10, base_seed=5,
                    ranges=CorpusRanges(frames=5, resolution=(8, 8),
                                        num_shapes=(1, 1), size_range=(2.0, 3.0),
                                        velocity_range=(-1.0, 1.0)))
    corpus = Corpus(root)
    cfg = VaeConfig(p_t=2, p_s=2, c_latent=2, base_channels=4, channel_mult=(1,))
    trainer = Trainer(build_model(cfg),
                      PaddingParams("learnable", latent_shape=(4, 4, 2)),
                      weights=LossWeights.toy())
    trainer.run_stage(corpus, TrainConfig(steps=20, warmup_steps=2,
                                          seed=0, stage="video_predictive"))
    enc_before = {n: p.detach().clone()
                  for n, p in trainer.model.encoder.named_parameters()}
    tok_before = trainer.padding.token.detach().clone()
    log = trainer.run_stage(corpus, TrainConfig(stage="decoder_finetune", steps=20,
                                                warmup_steps=2, seed=0))
    for n, p in trainer.model.encoder.named_parameters():
        assert torch.equal(p.detach(), enc_before[n]), n
    assert torch.equal(trainer.padding.token.detach(), tok_before)
    ks = [k for row in log for k in row["ks"]]
    assert ks and all(k == 0 for k in ks)
    report(5, f"encoder + padding token bit-identical after fine-tuning; "
              f"all {len(ks)} recorded drop plans have k=0")


# -----------------------------------------------------------------------------
# 6. LTD invariants and trend
# -----------------------------------------------------------------------------

def test_criterion_6_ltd(trend_runs, trend_corpus):
    # invariants on an untrained toy model
    model = build_model(VaeConfig())
    const = VideoClip(np.full((17, 16, 16, 3), 0.1, np.float32))
    profile = ltd_profile(model, [const], intervals=[1, 2, 3, 4])
    assert max(profile.mean_distance) <= 1e-5
    moving = trend_corpus.load_clip(trend_corpus.val_indices[0])
    profile = ltd_profile(model, [moving], intervals=[1, 2, 3, 4])
    assert profile.normalized is not None and profile.normalized[0] == 1.0

    # trend: pr_motion_ft shows strictly increasing normalized LTD in >= 2/3 seeds
    val_clips = [trend_corpus.load_clip(i) for i in trend_corpus.val_indices]
    wins, profiles = 0, {}
    for seed in SEEDS:
        trainer = trend_runs[("pr_motion_ft", seed)]
        prof = ltd_profile(trainer.model, val_clips, intervals=[1, 2, 3, 4])
        ns = prof.normalized
        profiles[seed] = [round(v, 4) for v in ns]
        wins += int(all(a < b for a, b in zip(ns, ns[1:])))
    assert wins >= 2, f"strictly increasing LTD in only {wins}/3 seeds: {profiles}"
    report(6, f"constant-clip LTD <= 1e-5; normalized[1]=1; monotone profile "
              f"in {wins}/3 seeds {profiles}")


# -----------------------------------------------------------------------------
# 7. Predictive-learning trend
# -----------------------------------------------------------------------------

def test_criterion_7_prediction_and_probe_trend(trend_runs, trend_corpus):
    val = trend_corpus.val_indices
    val_clips = [trend_corpus.load_clip(i) for i in val]
    k_eval = 2                                  # floor((G-1)/2) with G=5

    def mean_prediction_mse(trainer):
        errs = [prediction_error(trainer.model, c, k_eval, trainer.padding,
                                 np.random.default_rng([4040, j]))
                for j, c in enumerate(val_clips)]
        return float(np.mean(errs))

    mse_wins, epe_wins, rows = 0, 0, []
    for seed in SEEDS:
        pr, base = trend_runs[("pr", seed)], trend_runs[("baseline", seed)]
        mse_pr, mse_base = mean_prediction_mse(pr), mean_prediction_mse(base)
        epe_pr = flow_probe(pr.model, trend_corpus, steps=500, seed=seed)
        epe_base = flow_probe(base.model, trend_corpus, steps=500, seed=seed)
        mse_wins += int(mse_pr < mse_base)
        epe_wins += int(epe_pr < epe_base)
        rows.append(f"seed {seed}: pred_mse {mse_pr:.4f} vs {mse_base:.4f}, "
                    f"epe {epe_pr:.4f} vs {epe_base:.4f}")
    assert mse_wins >= 2, f"prediction MSE wins {mse_wins}/3\n" + "\n".join(rows)
    assert epe_wins >= 2, f"flow-probe EPE wins {epe_wins}/3\n" + "\n".join(rows)
    report(7, f"pr beats baseline: prediction MSE {mse_wins}/3 seeds, "
              f"EPE {epe_wins}/3 seeds")


# -----------------------------------------------------------------------------
# 8. Diffusability trend
# -----------------------------------------------------------------------------

def test_criterion_8_diffusability_trend(trend_runs, trend_corpus):
    real = trend_corpus.clips_tensor(range(256))
    train_idx = trend_corpus.train_indices

    def score(trainer, seed):
        latents = np.stack([encode(trainer.model, trend_corpus.load_clip(i)).mean
                            for i in train_idx])
        cfg = FlowModelConfig(seed=1000 + seed)
        net, stats, _ = train_flow(latents, cfg)
        gen_lat = generate_latents(net, stats, 256, latents.shape[1:],
                                   np.random.default_rng([2000, seed]),
                                   sampler_steps=cfg.sampler_steps)
        gen = decode_latents(trainer.model, gen_lat)
        return frechet_proxy(real, gen, projection_seed=seed)

    wins, rows = 0, []
    for seed in SEEDS:
        f_pr = score(trend_runs[("pr_motion_ft", seed)], seed)
        f_base = score(trend_runs[("baseline", seed)], seed)
        wins += int(f_pr <= f_base)
        rows.append(f"seed {seed}: frechet pr_motion_ft {f_pr:.4f} vs "
                    f"baseline {f_base:.4f}")
    assert wins >= 2, f"diffusability wins {wins}/3\n" + "\n".join(rows)
    report(8, f"rectified-flow frechet proxy: PR <= baseline in {wins}/3 seeds "
              f"({'; '.join(rows)})")


# -----------------------------------------------------------------------------
# 9. Ablation harness structure
# -----------------------------------------------------------------------------

def test_criterion_9_ablation_harness(tmp_path):
    runner = CliRunner()
    r = runner.invoke(cli_main, ["generate-data", "--n", "10", "--seed", "3",
                                 "--frames", "5", "--res", "16",
                                 "--size", "2,4", "--velocity", "-1,1",
                                 "--out", str(tmp_path / "c")])
    assert r.exit_code == 0, r.output
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "model": {"p_t": 2, "p_s": 2, "c_latent": 4, "base_channels": 4,
                  "channel_mult": [1]},
        "train": {"warmup_steps": 1, "batch_size": 2}}))

    def one_row(name: str, extra: list[str]) -> dict:
        ck = tmp_path / f"ck_{name}"
        r = runner.invoke(cli_main, ["train", "--corpus", str(tmp_path / "c"),
                                     "--out", str(ck), "--config", str(cfg_path),
                                     "--steps", "3", "--finetune-steps", "2",
                                     "--seed", "0", *extra])
        assert r.exit_code == 0, r.output
        ev = tmp_path / f"eval_{name}"
        r = runner.invoke(cli_main, ["eval-latent", "--ckpt", str(ck),
                                     "--corpus", str(tmp_path / "c"),
                                     "--out", str(ev), "--probe-steps", "3"])
        assert r.exit_code == 0, r.output
        metrics = json.loads((ev / "metrics.json").read_text())
        for key in ("ltd", "prediction_mse", "epe"):
            assert key in metrics, (name, key)
        return metrics

    # Table 5 ladder: one command per row
    for preset in ("baseline", "pr", "pr_motion", "pr_motion_ft"):
        one_row(preset, ["--preset", preset])
    # drop-ratio ablation rows
    for ratio in ("0.5", "0.75", "1.0"):
        one_row(f"ratio_{ratio}", ["--preset", "pr_motion",
                                   "--max-drop-ratio", ratio])
    # padding-strategy ablation rows
    for pad in ("gaussian", "learnable"):
        one_row(f"pad_{pad}", ["--preset", "pr_motion",
                               "--padding-strategy", pad])
    report(9, "9 CLI rows (ladder x4, ratios x3, padding x2) each emitted a "
              "complete metrics JSON")


# -----------------------------------------------------------------------------
# 10. Serialization
# -----------------------------------------------------------------------------

def test_criterion_10_serialization(tmp_path):
    rng = np.random.default_rng(17)
    # 1000-case roundtrip fuzz over random shapes
    for i in range(1000):
        ndim = int(rng.integers(0, 5))
        shape = tuple(int(rng.integers(1, 6)) for _ in range(ndim))
        arr = rng.standard_normal(shape).astype(np.float32)
        path = tmp_path / "fuzz.pvt"
        write_tensor(path, arr)
        assert np.array_equal(read_tensor(path), arr), f"case {i} shape {shape}"

    # adversarial headers: corrupted magic / truncated / mismatched shape
    good = tmp_path / "good.pvt"
    write_tensor(good, rng.standard_normal((3, 3)).astype(np.float32))
    raw = bytearray(good.read_bytes())
    bad = tmp_path / "bad.pvt"
    for mutate in (
        lambda b: b"XXXX" + bytes(b[4:]),                    # magic
        lambda b: bytes(b[:-5]),                             # truncated payload
        lambda b: bytes(b[:4]) + struct.pack("<I", 2 ** 20) + bytes(b[8:]),  # header len
    ):
        bad.write_bytes(mutate(raw))
        with pytest.raises(FormatError):
            read_tensor(bad)
    hdr = json.dumps({"dtype": "f32", "shape": [99], "layout": "ND"}).encode()
    bad.write_bytes(MAGIC + struct.pack("<I", len(hdr)) + hdr + b"\x00" * 12)
    with pytest.raises(FormatError):
        read_tensor(bad)

    # checkpoint resume: next-step losses identical bit-for-bit
    root = tmp_path / "c"
    generate_corpus(root, n=10, base_seed=5,
                    ranges=CorpusRanges(frames=5, resolution=(8, 8),
                                        num_shapes=(1, 1), size_range=(2.0, 3.0),
                                        velocity_range=(-1.0, 1.0)))
    corpus = Corpus(root)
    cfg = VaeConfig(p_t=2, p_s=2, c_latent=2, base_channels=4, channel_mult=(1,))

    def fresh():
        return Trainer(build_model(cfg),
                       PaddingParams("learnable", latent_shape=(4, 4, 2)),
                       weights=LossWeights.toy())

    stage_cfg = TrainConfig(steps=8, warmup_steps=2, seed=3)
    full = fresh()
    log_full = full.run_stage(corpus, stage_cfg)
    half = fresh()
    half.run_stage(corpus, stage_cfg, out_dir=tmp_path / "ck", max_steps_this_call=4)
    resumed, rcfg, stage_step = trainer_from_checkpoint(load_checkpoint(tmp_path / "ck"))
    assert stage_step == 4
    log_resumed = resumed.run_stage(corpus, rcfg, start_step_in_stage=stage_step)
    assert [r["total"] for r in log_resumed] == [r["total"] for r in log_full[4:]]
    report(10, "1000-shape PVT1 fuzz + adversarial headers rejected; resume "
               "reproduces steps 5..8 bit-exactly")
