"""Acceptance suite: one numbered criterion per test, each printing a
pass/fail line (visible under `pytest -s tests/test_acceptance.py -v`).

Criteria 7 and 8 consume the committed-default pipeline run (session
fixture); their thresholds are frozen constants from the seeded baseline.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from core2 import checkpoint
from core2.cli import batch_predictions
from core2.collect import Dataset, DatasetHeader, collect_trajectories
from core2.conditioning import LabelEmbeddings
from core2.dataset_io import datasets_equal, read_dataset, write_dataset
from core2.denoiser import (
    OracleEps,
    TrainConfig,
    build_base_net,
    dm_loss_and_grad,
)
from core2.evaluation import (
    guidance_spectrum,
    make_queries,
    partitioned_mse,
    read_csv,
    sample_population,
    sliced_wasserstein,
)
from core2.gmm import (
    benchmark_mixture,
    eps_oracle,
    log_density,
    noised_mixture,
    sample_x0,
    samples_to_arrays,
    score,
)
from core2.refine import (
    GuidanceConfig,
    ModeSchedule,
    OracleCondWeak,
    SamplerBundle,
    cfg_sample,
    ddim_invert,
    ddim_step,
    sample,
)
from core2.reflect import ReflectConfig, WeakModel, reflect_loss_and_grad
from core2.schedule import make_vp_schedule
from core2.svdcodec import svd_compress, svd_restore
from core2.theory import build_instance, error_curve, verify_theorem
from helpers import assert_grads_close, central_diff_grad, random_mixture

# Baseline fixture constants (default config, seed 7): the weak model's
# easy-partition penalty over the base model, measured at 3.51x.
EASY_MSE_MULTIPLE = 4.0
W2S_SWEEP = (0.0, 0.5, 1.0, 1.25, 1.5, 2.0, 2.5)


@contextmanager
def criterion(num, desc):
    try:
        yield
    except Exception:
        print(f"[criterion {num}] FAIL  {desc}", flush=True)
        raise
    print(f"[criterion {num}] PASS  {desc}", flush=True)


def test_criterion_1_theorem_sweep():
    with criterion(1, "200-instance theorem sweep, omega* > 1, < 10 s"):
        t0 = time.monotonic()
        grid = np.arange(0.0, 4.0 + 1e-9, 1e-3)
        for seed in range(200):
            rep = verify_theorem(build_instance(seed), grid=grid)
            assert rep.constraints_ok
            assert rep.omega_star > 1.0
            assert abs(rep.omega_star - rep.grid_argmin) <= 1e-3
            assert rep.e_star < min(rep.e0, rep.e1)
        assert time.monotonic() - t0 < 10.0


def test_criterion_2_oracle_suite():
    with criterion(2, "analytic score vs finite differences on 100 mixtures"):
        rng = np.random.default_rng(1234)
        dims = [2, 4, 8, 16, 32, 64]
        h = 1e-5
        for case in range(100):
            d = dims[case % len(dims)]
            g = random_mixture(rng, d, int(rng.integers(1, 9)))
            x = rng.normal(scale=1.5, size=d)
            # central finite difference of log p in every coordinate
            basis = np.eye(d)
            fd = (log_density(g, x + h * basis) - log_density(g, x - h * basis)) / (2 * h)
            assert np.max(np.abs(score(g, x) - fd)) < 1e-5
            # eps/score duality is exact by construction
            sched = make_vp_schedule(7)
            t = int(rng.integers(1, 8))
            dual = -sched.sigmas[t] * score(noised_mixture(g, sched, t), x)
            assert np.array_equal(eps_oracle(g, sched, t, x), dual)


def test_criterion_3_gradient_suite():
    with criterion(3, "every parameter gradient matches central differences"):
        # denoising loss, randomly initialized base model
        sched = make_vp_schedule(5)
        cfg = TrainConfig(hidden=(10, 9), t_emb_dim=4)
        net = build_base_net(6, cfg, seed=31)
        g = random_mixture(np.random.default_rng(32), 6, 3, labeled=True)
        emb = LabelEmbeddings(g.labels)
        batch = sample_x0(g, 4, 33)

        def dm_loss():
            rng = np.random.default_rng(34)
            loss, _ = dm_loss_and_grad(net, batch, sched, rng, emb,
                                       cond_dropout=0.25, t_emb_dim=4)
            return loss

        _, grads = dm_loss_and_grad(net, batch, sched, np.random.default_rng(34),
                                    emb, cond_dropout=0.25, t_emb_dim=4)
        numeric = central_diff_grad(dm_loss, net.parameters(), h=1e-4)
        assert_grads_close(grads, numeric, rtol=1e-4, atol=1e-9)

        # reflect loss, randomly initialized weak model (base + every expert)
        weak = WeakModel(6, 3, hidden=(10, 9), adapter_rank=2, t_emb_dim=4, seed=35)
        rng = np.random.default_rng(36)
        for t in weak.experts:
            for a, b in weak.experts[t]:
                b[:] = 0.1 * rng.normal(size=b.shape)
        ds = collect_trajectories(OracleEps(g, sched), [0, 1, 2], sched, 2.0,
                                  seed=37, embeddings=emb)
        table = [svd_restore(f).reshape(-1) for f in ds.cond_table]
        rbatch = list(ds.records[:6])
        rcfg = ReflectConfig(target="cond")

        def r_loss():
            loss, _ = reflect_loss_and_grad(weak, rbatch, table, rcfg)
            return loss

        _, rgrads = reflect_loss_and_grad(weak, rbatch, table, rcfg)
        rnumeric = central_diff_grad(r_loss, weak.parameters(), h=1e-4)
        assert_grads_close(rgrads, rnumeric, rtol=1e-4, atol=1e-9)


def test_criterion_4_ddim_algebra(pipeline_run):
    with criterion(4, "DDIM inversion exact; unit-scale slow mode replays CFG"):
        sched = make_vp_schedule(28)
        rng = np.random.default_rng(41)
        for _ in range(50):
            t = int(rng.integers(1, 29))
            s = int(rng.integers(0, t))
            x_t = rng.normal(size=64)
            eps = rng.normal(size=64)
            back = ddim_invert(ddim_step(x_t, eps, t, s, sched), eps, s, t, sched)
            rel = np.max(np.abs(back - x_t)) / max(1.0, np.max(np.abs(x_t)))
            assert rel < 1e-10

        pipe = pipeline_run.pipe
        bundle = pipe.bundle(ModeSchedule.all_slow(28), omega_w2s=1.0)
        x_w2s, _, _ = sample(bundle, 3, seed=42, batch=4)
        x_cfg, _, _ = cfg_sample(pipe.base_source(), pipe.schedule,
                                 pipe.cfg["refine"]["omega_cfg"], 3,
                                 seed=42, batch=4)
        assert np.array_equal(x_w2s, x_cfg)


@pytest.mark.parametrize("T", [28, 50])
def test_criterion_5_nfe_halving(T):
    with criterion(5, f"all-fast uses T={T} base evals, all-slow exactly 2T"):
        g = benchmark_mixture()
        sched = make_vp_schedule(T)
        guidance = GuidanceConfig(omega_cfg=2.0, omega_w2s=1.5)
        counters = {}
        for name, modes in (("fast", ModeSchedule.all_fast(T)),
                            ("slow", ModeSchedule.all_slow(T))):
            bundle = SamplerBundle(strong=OracleEps(g, sched),
                                   weak=OracleCondWeak(g, sched),
                                   schedule=sched, guidance=guidance, modes=modes)
            _, counters[name], _ = sample(bundle, 0, seed=51)
        assert counters["fast"].base_evals == T
        assert counters["slow"].base_evals == 2 * T
        assert counters["fast"].base_cond_evals == 0
        assert counters["slow"].base_cond_evals == T


def test_criterion_6_svd_codec(tmp_path, pipeline_run):
    with criterion(6, "Eckart-Young on 100 matrices; dataset IO bit-identical"):
        rng = np.random.default_rng(61)
        for case in range(100):
            rows = int(rng.integers(2, 12))
            cols = int(rng.integers(2, 34))
            a = rng.normal(size=(rows, cols))
            r = int(rng.integers(1, min(rows, cols) + 1))
            f = svd_compress(a, r)
            err = float(np.sum((a - svd_restore(f)) ** 2))
            evals = np.sort(np.linalg.eigvalsh(a.T @ a))[::-1]
            tail = float(np.sum(np.clip(evals[r:], 0.0, None)))
            assert abs(err - tail) < 1e-8

        ds = read_dataset(pipeline_run.dir / "data.core2ds")
        path = tmp_path / "copy.core2ds"
        write_dataset(ds, path)
        assert path.read_bytes() == (pipeline_run.dir / "data.core2ds").read_bytes()
        assert datasets_equal(ds, read_dataset(path))

        empty = Dataset(
            DatasetHeader(dim=64, num_steps=28, num_trajectories=0, seed=0,
                          omega=1.5, store_xt=False, rank=4, labels=(),
                          cond_labels=(), schedule={"mode": "variance_preserving",
                                                    "num_steps": 28}),
            (), ())
        epath = tmp_path / "empty.core2ds"
        write_dataset(empty, epath)
        assert datasets_equal(empty, read_dataset(epath))


def test_criterion_7_mechanism_reproduction(pipeline_run):
    with criterion(7, "weak/difficult regime, W2S spectrum, sweep optimum > 1"):
        pipe = pipeline_run.pipe
        cfg = pipeline_run.config
        seed = cfg["seed"]
        gmm, sched, emb = pipe.gmm, pipe.schedule, pipe.embeddings
        q = make_queries(gmm, sched, cfg["eval"]["query_count"], seed=[seed, 50])
        preds = batch_predictions(gmm, sched, pipe.base_source(),
                                  pipe.weak_model(), emb, q,
                                  cfg["refine"]["omega_cfg"])

        # (a) Definition-1 regime: the weak model is relatively worse on the
        # difficult partition, while staying within the committed easy bound
        b_easy, b_hard = partitioned_mse(preds["base_cond"],
                                         preds["oracle_cond"], q.easy_mask)
        w_easy, w_hard = partitioned_mse(preds["weak"],
                                         preds["oracle_cond"], q.easy_mask)
        assert w_hard / w_easy > b_hard / b_easy
        assert w_easy <= EASY_MSE_MULTIPLE * b_easy
        assert w_hard >= b_hard

        # (b) the W2S direction carries more high-frequency energy than CFG
        rep_w2s, rep_cfg, _ = guidance_spectrum(preds["w2s_dir"], preds["cfg_dir"])
        assert rep_w2s.high_frequency_fraction > rep_cfg.high_frequency_fraction

        # (c) slow-mode quality beats weak-only across the scale sweep, with
        # an interior optimum above 1
        target, _ = samples_to_arrays(sample_x0(gmm, 2048, [seed, 51]))
        fast_pop, _ = sample_population(
            pipe.bundle(ModeSchedule.all_fast(28), omega_w2s=0.0),
            gmm, 2048, [seed, 60])
        swd_fast = sliced_wasserstein(fast_pop, target, projections=256,
                                      seed=[seed, 61])
        curve = []
        for w2s in W2S_SWEEP:
            pop, _ = sample_population(
                pipe.bundle(ModeSchedule.all_slow(28), omega_w2s=w2s),
                gmm, 2048, [seed, 60])
            curve.append(sliced_wasserstein(pop, target, projections=256,
                                            seed=[seed, 61]))
        assert all(v <= swd_fast + 1e-12 for v in curve)
        best = int(np.argmin(curve))
        assert 0 < best < len(W2S_SWEEP) - 1
        assert W2S_SWEEP[best] > 1.0

        # committed regression laws of the two training stages
        base_curve = np.array(checkpoint.load_sidecar(pipe.base_path)["loss_curve"])
        assert base_curve[-100:].mean() < 0.5 * base_curve[:100].mean()
        weak_curve = np.array(checkpoint.load_sidecar(pipe.weak_path)["loss_curve"])
        assert weak_curve[-100:].mean() < 0.5 * weak_curve[:100].mean()

        # the full pipeline fits the desk-scale budget
        assert pipeline_run.elapsed < 900.0


def test_criterion_8_reflect_iterations_ablation(pipeline_run):
    with criterion(8, "fast-mode quality improves from 0.2k to 2k iterations"):
        rows = {int(r["iterations"]): r
                for r in read_csv(pipeline_run.dir / "ablation.csv")}
        assert set(rows) == {200, 2000, 20000}
        assert float(rows[2000]["swd"]) < float(rows[200]["swd"])
        # the 20k point is reported without a pass/fail threshold
        assert np.isfinite(float(rows[20000]["swd"]))
