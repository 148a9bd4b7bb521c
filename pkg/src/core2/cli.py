"""Pipeline orchestration CLI.

Subcommands run the stages end to end or individually with a JSON config,
deterministic seeding, and structured outputs.  Every artifact lands under
runs/<config-hash>/ together with a manifest recording the hash, the seed
and per-stage timings; re-running skips completed stages unless --force.
Exit codes: 0 success, 1 configuration/usage error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint, dataset_io, evaluation, theory
from . import gmm as gmm_mod
from .collect import collect_trajectories
from .conditioning import LabelEmbeddings
from .denoiser import NetEps, OracleEps, TrainConfig, train_denoiser
from .refine import (
    GuidanceConfig,
    ModeSchedule,
    ReflectWeak,
    SamplerBundle,
    sample,
)
from .reflect import ReflectConfig, train_reflect
from .schedule import make_vp_schedule

DEFAULT_CONFIG = {
    "seed": 7,
    "mixture": "configs/benchmark_mixture.json",
    "schedule": {"num_steps": 28},
    "base_train": {
        "iterations": 5000,
        "batch_size": 64,
        "learning_rate": 1e-3,
        "weight_decay": 1e-3,
        "cond_dropout": 0.1,
        "hidden": [256, 256, 256],
        "activation": "tanh",
        "t_emb_dim": 32,
    },
    "collect": {
        "trajectory_multiplier": 400,
        "omega": 1.5,
        "rank": 4,
        "store_xt": False,
        "source": "base",
    },
    "reflect": {
        "iterations": 10000,
        "batch_size": 64,
        "alpha": 4.0,
        "weight_form": "equation_form",
        "target": "cond",
        "learning_rate": 1e-3,
        "weight_decay": 1e-3,
        "hidden": [64, 64],
        "adapter_rank": 4,
        "activation": "tanh",
    },
    "refine": {
        "omega_cfg": 1.25,
        "omega_w2s": 1.5,
        "mode_schedule": "default",
        "num_samples": 512,
        "store_trace": False,
    },
    "eval": {
        "query_count": 4096,
        "swd_samples": 2048,
        "swd_projections": 256,
        "tradeoff_slow_steps": [0, 7, 14, 21, 28],
        "tradeoff_samples": 1024,
        "ablation_iterations": [200, 2000, 20000],
        "theory_seeds": 200,
    },
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage


def _merge_checked(defaults, given, path=""):
    """Defaults overlaid with `given`; unknown keys are rejected by name."""
    out = dict(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + key!r} must be an object")
            out[key] = _merge_checked(defaults[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except ValueError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    cfg = _merge_checked(DEFAULT_CONFIG, doc)
    mixture = Path(cfg["mixture"])
    if not mixture.is_absolute():
        mixture = path.parent / mixture
    if not mixture.exists():
        raise ConfigError(f"mixture spec not found: {mixture}")
    cfg["mixture"] = str(mixture)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode("utf-8")).hexdigest()[:12]


def _trajectory_labels(gmm, multiplier: int) -> list[int]:
    labels = []
    for i, w in enumerate(gmm.weights):
        labels += [i] * int(round(w * multiplier))
    return labels


class Pipeline:
    """Stage runner with manifest-based caching under runs/<hash>/."""

    def __init__(self, cfg: dict, runs_dir, force: bool = False, log=print):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.dir = Path(runs_dir) / self.hash
        self.dir.mkdir(parents=True, exist_ok=True)
        self.force = force
        self.log = log
        self.manifest_path = self.dir / "manifest.json"
        self.manifest = {"config_hash": self.hash, "seed": cfg["seed"], "stages": {}}
        if self.manifest_path.exists() and not force:
            self.manifest = json.loads(self.manifest_path.read_text())
        self.gmm = gmm_mod.load_mixture(cfg["mixture"])
        self.schedule = make_vp_schedule(cfg["schedule"]["num_steps"])
        self.embeddings = LabelEmbeddings(self.gmm.component_labels(),
                                          rank=cfg["collect"]["rank"])
        self._base = None
        self._weak = None
        self._dataset = None

    def _cached(self, stage: str, outputs: list[Path]) -> bool:
        done = self.manifest["stages"].get(stage, {}).get("done", False)
        if done and all(p.exists() for p in outputs) and not self.force:
            self.log(f"[core2] stage {stage}: cached")
            return True
        return False

    def _mark(self, stage: str, seconds: float, outputs: list[Path]) -> None:
        self.manifest["stages"][stage] = {
            "done": True,
            "seconds": round(seconds, 3),
            "outputs": [p.name for p in outputs],
        }
        self.manifest_path.write_text(json.dumps(self.manifest, indent=1))

    def _run_stage(self, stage: str, outputs: list[Path], fn) -> None:
        if self._cached(stage, outputs):
            return
        t0 = time.monotonic()
        try:
            fn()
        except Exception as e:
            raise StageError(stage, e) from e
        self._mark(stage, time.monotonic() - t0, outputs)
        self.log(f"[core2] stage {stage}: done in "
                 f"{self.manifest['stages'][stage]['seconds']:.1f}s")

    # -- stage: train the base denoiser ---------------------------------
    @property
    def base_path(self) -> Path:
        return self.dir / "base.ckpt"

    def train_base(self) -> None:
        def fn():
            cfg = self.cfg["base_train"]
            tc = TrainConfig(
                iterations=cfg["iterations"], batch_size=cfg["batch_size"],
                learning_rate=cfg["learning_rate"], weight_decay=cfg["weight_decay"],
                cond_dropout=cfg["cond_dropout"], hidden=tuple(cfg["hidden"]),
                activation=cfg["activation"], t_emb_dim=cfg["t_emb_dim"])
            net, losses = train_denoiser(tc, self.gmm, self.schedule,
                                         seed=[self.cfg["seed"], 10],
                                         embeddings=self.embeddings)
            checkpoint.save_dense(net, self.base_path, sidecar={
                "config_hash": self.hash, "seed": self.cfg["seed"],
                "config": cfg, "final_loss": float(losses[-1]),
                "loss_curve": [float(x) for x in losses]})
            self._base = net

        self._run_stage("train_base", [self.base_path], fn)

    def base_net(self):
        if self._base is None:
            self._base = checkpoint.load_dense(self.base_path)
        return self._base

    def base_source(self) -> NetEps:
        return NetEps(self.base_net(), self.embeddings,
                      self.schedule.num_steps,
                      t_emb_dim=self.cfg["base_train"]["t_emb_dim"])

    # -- stage: collect trajectories ------------------------------------
    @property
    def data_path(self) -> Path:
        return self.dir / "data.core2ds"

    def collect(self) -> None:
        def fn():
            c = self.cfg["collect"]
            source = (self.base_source() if c["source"] == "base"
                      else OracleEps(self.gmm, self.schedule))
            labels = _trajectory_labels(self.gmm, c["trajectory_multiplier"])
            ds = collect_trajectories(
                source, labels, self.schedule, c["omega"],
                seed=self.cfg["seed"] + 20, rank=c["rank"],
                store_xt=c["store_xt"], embeddings=self.embeddings)
            dataset_io.write_dataset(ds, self.data_path)
            self._dataset = ds

        self._run_stage("collect", [self.data_path], fn)

    def dataset(self):
        if self._dataset is None:
            self._dataset = dataset_io.read_dataset(self.data_path)
        return self._dataset

    # -- stage: reflect ---------------------------------------------------
    @property
    def weak_path(self) -> Path:
        return self.dir / "weak.ckpt"

    def reflect_config(self, iterations=None) -> ReflectConfig:
        r = self.cfg["reflect"]
        return ReflectConfig(
            alpha=r["alpha"], weight_form=r["weight_form"], target=r["target"],
            iterations=r["iterations"] if iterations is None else iterations,
            batch_size=r["batch_size"], learning_rate=r["learning_rate"],
            weight_decay=r["weight_decay"], hidden=tuple(r["hidden"]),
            adapter_rank=r["adapter_rank"], activation=r["activation"],
            t_emb_dim=self.cfg["base_train"]["t_emb_dim"])

    def reflect(self) -> None:
        def fn():
            weak, losses, per_step = train_reflect(
                self.dataset(), self.reflect_config(), seed=[self.cfg["seed"], 30])
            checkpoint.save_weak(weak, self.weak_path, sidecar={
                "config_hash": self.hash, "seed": self.cfg["seed"],
                "config": self.cfg["reflect"], "final_loss": float(losses[-1]),
                "loss_curve": [float(x) for x in losses],
                "per_step_loss": {str(k): float(v) for k, v in per_step.items()}})
            self._weak = weak

        self._run_stage("reflect", [self.weak_path], fn)

    def weak_model(self):
        if self._weak is None:
            self._weak = checkpoint.load_weak(self.weak_path)
        return self._weak

    def bundle(self, modes: ModeSchedule, omega_w2s=None, weak=None) -> SamplerBundle:
        r = self.cfg["refine"]
        guidance = GuidanceConfig(
            omega_cfg=r["omega_cfg"],
            omega_w2s=r["omega_w2s"] if omega_w2s is None else omega_w2s)
        return SamplerBundle(
            strong=self.base_source(),
            weak=ReflectWeak(weak or self.weak_model(), self.embeddings),
            schedule=self.schedule, guidance=guidance, modes=modes)

    # -- stage: refine ----------------------------------------------------
    @property
    def samples_path(self) -> Path:
        return self.dir / "samples.jsonl"

    def refine(self) -> None:
        def fn():
            r = self.cfg["refine"]
            T = self.schedule.num_steps
            modes = ModeSchedule.from_spec(r["mode_schedule"], T)
            bundle = self.bundle(modes)
            write_samples(
                bundle, self.gmm, r["num_samples"], [self.cfg["seed"], 40],
                self.samples_path,
                meta={"config_hash": self.hash, "seed": self.cfg["seed"],
                      "omega_cfg": r["omega_cfg"], "omega_w2s": r["omega_w2s"],
                      "mode_schedule": r["mode_schedule"]},
                trace_path=(self.dir / "trace.jsonl") if r["store_trace"] else None)

        self._run_stage("refine", [self.samples_path], fn)

    # -- stage: report ------------------------------------------------------
    @property
    def csv_paths(self) -> dict[str, Path]:
        return {name: self.dir / f"{name}.csv"
                for name in ("spectrum", "tradeoff", "theorem_report", "ablation")}

    def report(self) -> None:
        paths = self.csv_paths

        def fn():
            ev = self.cfg["eval"]
            seed = self.cfg["seed"]
            T = self.schedule.num_steps
            base_src = self.base_source()
            weak = self.weak_model()

            # frequency content of the two guidance directions
            q = evaluation.make_queries(self.gmm, self.schedule,
                                        ev["query_count"], seed=[seed, 50])
            preds = batch_predictions(self.gmm, self.schedule, base_src, weak,
                                      self.embeddings, q,
                                      self.cfg["refine"]["omega_cfg"])
            rep_w2s, rep_cfg, _ = evaluation.guidance_spectrum(
                preds["w2s_dir"], preds["cfg_dir"])
            evaluation.write_csv(
                paths["spectrum"], "spectrum",
                [{"bin": k, "energy_w2s": rep_w2s.bin_energy[k],
                  "energy_cfg": rep_cfg.bin_energy[k]}
                 for k in range(rep_w2s.bin_energy.size)],
                config_hash=self.hash, seed=seed)

            # quality-vs-cost frontier
            points = evaluation.tradeoff_sweep(
                lambda modes: self.bundle(modes), self.gmm, self.schedule,
                ev["tradeoff_slow_steps"], ev["tradeoff_samples"],
                seed=[seed, 52], swd_projections=ev["swd_projections"])
            evaluation.write_csv(
                paths["tradeoff"], "tradeoff",
                [{"slow_steps": p.slow_steps, "nfe": p.nfe, "mse": p.mse,
                  "swd": p.swd} for p in points],
                config_hash=self.hash, seed=seed)

            # guidance-scale theory sweep
            write_theorem_csv(paths["theorem_report"], ev["theory_seeds"],
                              config_hash=self.hash)

            # reflect-iterations ablation
            target, _ = gmm_mod.samples_to_arrays(
                gmm_mod.sample_x0(self.gmm, ev["swd_samples"], [seed, 51]))
            rows = []
            for iters in ev["ablation_iterations"]:
                wk, _, _ = train_reflect(self.dataset(),
                                         self.reflect_config(iterations=iters),
                                         seed=[seed, 30])
                fast = self.bundle(ModeSchedule.all_fast(T), weak=wk)
                pop, _ = evaluation.sample_population(
                    fast, self.gmm, ev["swd_samples"], [seed, 53])
                swd = evaluation.sliced_wasserstein(
                    pop, target, projections=ev["swd_projections"], seed=[seed, 54])
                wk_pred = batch_weak_predictions(wk, self.embeddings, q,
                                                 preds["base_uncond"])
                mse = float(np.mean(np.sum(
                    (wk_pred - preds["oracle_cond"]) ** 2, axis=-1)))
                rows.append({"iterations": iters, "swd": swd, "mse": mse})
            evaluation.write_csv(paths["ablation"], "ablation", rows,
                                 config_hash=self.hash, seed=seed)

        self._run_stage("report", list(paths.values()), fn)

    def run_all(self) -> None:
        self.train_base()
        self.collect()
        self.reflect()
        self.refine()
        self.report()


def batch_predictions(gmm, schedule, base_src, weak, embeddings, q, omega_cfg):
    """Vectorized per-step model/oracle predictions at the query set.

    The W2S direction pairs the oracle-strong pathway with the trained weak
    model; the CFG direction is the base net's cond - uncond.
    """
    T = schedule.num_steps
    shape = q.x_t.shape
    out = {k: np.zeros(shape) for k in (
        "oracle_cond", "oracle_uncond", "base_cond", "base_uncond", "weak")}
    for t in range(1, T + 1):
        m = q.t == t
        if not m.any():
            continue
        out["base_uncond"][m] = base_src.predict(q.x_t[m], t, None)
        out["oracle_uncond"][m] = gmm_mod.eps_oracle(gmm, schedule, t, q.x_t[m])
        for l in np.unique(q.labels[m]):
            ml = m & (q.labels == l)
            out["oracle_cond"][ml] = gmm_mod.eps_oracle(
                gmm, schedule, t, q.x_t[ml], int(l))
            out["base_cond"][ml] = base_src.predict(q.x_t[ml], t, int(l))
            out["weak"][ml] = weak.forward(
                out["base_uncond"][ml], embeddings.compressed_flat(int(l)), t)
    oracle_strong = out["oracle_uncond"] + omega_cfg * (
        out["oracle_cond"] - out["oracle_uncond"])
    out["w2s_dir"] = oracle_strong - out["weak"]
    out["cfg_dir"] = out["base_cond"] - out["base_uncond"]
    return out


def batch_weak_predictions(weak, embeddings, q, base_uncond):
    out = np.zeros_like(base_uncond)
    for t in np.unique(q.t):
        m = q.t == t
        for l in np.unique(q.labels[m]):
            ml = m & (q.labels == l)
            out[ml] = weak.forward(base_uncond[ml],
                                   embeddings.compressed_flat(int(l)), int(t))
    return out


def write_samples(bundle, gmm, count, seed, path, meta, trace_path=None):
    """Sample `count` points with labels by component weight into JSONL."""
    rng = np.random.default_rng(list(np.atleast_1d(seed)) + [1])
    labels = gmm.component_labels()
    comp = rng.choice(gmm.num_components, size=count, p=gmm.weights)
    trace_fh = open(trace_path, "w", encoding="utf-8") if trace_path else None
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"type": "meta", **meta, "num_samples": int(count)})
                 + "\n")
        for i, label in enumerate(labels):
            n = int(np.sum(comp == i))
            if n == 0:
                continue
            x0, counter, trace = sample(
                bundle, label, seed=list(np.atleast_1d(seed)) + [2, i],
                batch=n, record_trace=trace_fh is not None)
            for row in x0:
                fh.write(json.dumps({
                    "type": "sample", "label": int(label),
                    "x0": [float(v) for v in row],
                    "nfe": {"base_cond": counter.base_cond_evals,
                            "base_uncond": counter.base_uncond_evals,
                            "weak": counter.weak_evals}}) + "\n")
            if trace_fh is not None:
                for entry in trace:
                    trace_fh.write(json.dumps({
                        "label": int(label), "t": int(entry["t"]),
                        "mode": entry["mode"],
                        "x_t_mean": [float(v) for v in entry["x_t"].mean(axis=0)],
                        "eps_mean": [float(v) for v in entry["eps"].mean(axis=0)],
                    }) + "\n")
    if trace_fh is not None:
        trace_fh.close()


def write_theorem_csv(path, num_seeds, seed0=0, config_hash="-"):
    rows = []
    for i in range(num_seeds):
        rep = theory.verify_theorem(theory.build_instance(seed0 + i))
        rows.append({"seed": seed0 + i, "omega_star": rep.omega_star,
                     "grid_argmin": rep.grid_argmin, "e0": rep.e0,
                     "e1": rep.e1, "e_star": rep.e_star, "passed": rep.passed})
    evaluation.write_csv(path, "theorem_report", rows,
                         config_hash=config_hash, seed=seed0)
    return rows


# ---------------------------------------------------------------------------
# command line front end


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="core2", description=__doc__.splitlines()[0],
                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("pipeline", help="run every stage end to end",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--config", required=True, help="JSON run configuration")
    sp.add_argument("--runs-dir", default="runs", help="artifact directory root")
    sp.add_argument("--force", action="store_true",
                    help="re-run stages even when cached")

    sp = sub.add_parser("theory", help="guidance-scale theory sweep",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--seeds", type=int, default=200, help="number of instances")
    sp.add_argument("--seed0", type=int, default=0, help="first seed")
    sp.add_argument("--out", default="theorem_report.csv", help="output CSV")

    sp = sub.add_parser("collect", help="collect guided trajectories",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--config", required=True, help="JSON run configuration")
    sp.add_argument("--base", default="oracle",
                    help="'oracle' or a base checkpoint path")
    sp.add_argument("--out", required=True, help="output dataset path")

    sp = sub.add_parser("reflect", help="train the weak model from a dataset",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--data", required=True, help="collected dataset path")
    sp.add_argument("--config", required=True, help="JSON run configuration")
    sp.add_argument("--out", required=True, help="output weak checkpoint path")

    sp = sub.add_parser("refine", help="sample with slow/fast guidance",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--config", required=True, help="JSON run configuration")
    sp.add_argument("--base", default="oracle",
                    help="'oracle' or a base checkpoint path")
    sp.add_argument("--weak", required=True, help="weak checkpoint path")
    sp.add_argument("--mode-schedule", default="default",
                    help="all-slow | all-fast | default | slow:<k> | comma list")
    sp.add_argument("--omega-w2s", type=float, default=1.5,
                    help="weak-to-strong guidance scale")
    sp.add_argument("--omega-cfg", type=float, default=None,
                    help="guidance scale for the strong pathway "
                         "(default: config value)")
    sp.add_argument("--n", type=int, default=64, help="number of samples")
    sp.add_argument("--seed", type=int, default=None,
                    help="sampling seed (default: config seed)")
    sp.add_argument("--out", required=True, help="output samples.jsonl")
    sp.add_argument("--trace-out", default=None,
                    help="optional per-step trace JSONL")

    sp = sub.add_parser("report", help="recompute the report CSVs for a run",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("--config", required=True, help="JSON run configuration")
    sp.add_argument("--runs-dir", default="runs", help="artifact directory root")
    sp.add_argument("--force", action="store_true",
                    help="recompute even when cached")
    return p


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    pipe = Pipeline(cfg, args.runs_dir, force=args.force)
    try:
        pipe.run_all()
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"[core2] run complete: {pipe.dir}")
    return 0


def cmd_theory(args) -> int:
    try:
        rows = write_theorem_csv(args.out, args.seeds, seed0=args.seed0)
    except Exception as e:
        print(f"error: stage theory: {e}", file=sys.stderr)
        return 2
    n_pass = sum(1 for r in rows if r["passed"])
    print(f"[core2] theory sweep: {n_pass}/{len(rows)} pass -> {args.out}")
    return 0


def _resolve_source(spec: str, cfg: dict, gmm, schedule, embeddings):
    if spec == "oracle":
        return OracleEps(gmm, schedule)
    net = checkpoint.load_dense(spec)
    return NetEps(net, embeddings, schedule.num_steps,
                  t_emb_dim=cfg["base_train"]["t_emb_dim"])


def cmd_collect(args) -> int:
    cfg = load_config(args.config)
    try:
        gmm = gmm_mod.load_mixture(cfg["mixture"])
        schedule = make_vp_schedule(cfg["schedule"]["num_steps"])
        embeddings = LabelEmbeddings(gmm.component_labels(),
                                     rank=cfg["collect"]["rank"])
        source = _resolve_source(args.base, cfg, gmm, schedule, embeddings)
        labels = _trajectory_labels(gmm, cfg["collect"]["trajectory_multiplier"])
        ds = collect_trajectories(
            source, labels, schedule, cfg["collect"]["omega"],
            seed=cfg["seed"] + 20, rank=cfg["collect"]["rank"],
            store_xt=cfg["collect"]["store_xt"], embeddings=embeddings)
        n = dataset_io.write_dataset(ds, args.out)
    except Exception as e:
        print(f"error: stage collect: {e}", file=sys.stderr)
        return 2
    print(f"[core2] collected {len(ds.records)} records ({n} bytes) -> {args.out}")
    return 0


def cmd_reflect(args) -> int:
    cfg = load_config(args.config)
    try:
        ds = dataset_io.read_dataset(args.data)
        r = cfg["reflect"]
        rc = ReflectConfig(
            alpha=r["alpha"], weight_form=r["weight_form"], target=r["target"],
            iterations=r["iterations"], batch_size=r["batch_size"],
            learning_rate=r["learning_rate"], weight_decay=r["weight_decay"],
            hidden=tuple(r["hidden"]), adapter_rank=r["adapter_rank"],
            activation=r["activation"], t_emb_dim=cfg["base_train"]["t_emb_dim"])
        weak, losses, per_step = train_reflect(ds, rc, seed=[cfg["seed"], 30])
        checkpoint.save_weak(weak, args.out, sidecar={
            "config_hash": config_hash(cfg), "seed": cfg["seed"], "config": r,
            "final_loss": float(losses[-1]) if losses.size else None,
            "loss_curve": [float(x) for x in losses],
            "per_step_loss": {str(k): float(v) for k, v in per_step.items()}})
    except Exception as e:
        print(f"error: stage reflect: {e}", file=sys.stderr)
        return 2
    print(f"[core2] weak model -> {args.out}")
    return 0


def cmd_refine(args) -> int:
    cfg = load_config(args.config)
    try:
        gmm = gmm_mod.load_mixture(cfg["mixture"])
        schedule = make_vp_schedule(cfg["schedule"]["num_steps"])
        embeddings = LabelEmbeddings(gmm.component_labels(),
                                     rank=cfg["collect"]["rank"])
        strong = _resolve_source(args.base, cfg, gmm, schedule, embeddings)
        weak = checkpoint.load_weak(args.weak)
        omega_cfg = (cfg["refine"]["omega_cfg"] if args.omega_cfg is None
                     else args.omega_cfg)
        modes = ModeSchedule.from_spec(args.mode_schedule, schedule.num_steps)
        bundle = SamplerBundle(
            strong=strong, weak=ReflectWeak(weak, embeddings),
            schedule=schedule,
            guidance=GuidanceConfig(omega_cfg=omega_cfg, omega_w2s=args.omega_w2s),
            modes=modes)
        seed = cfg["seed"] if args.seed is None else args.seed
        write_samples(bundle, gmm, args.n, [seed, 40], args.out,
                      meta={"config_hash": config_hash(cfg), "seed": seed,
                            "omega_cfg": omega_cfg, "omega_w2s": args.omega_w2s,
                            "mode_schedule": args.mode_schedule},
                      trace_path=args.trace_out)
    except Exception as e:
        print(f"error: stage refine: {e}", file=sys.stderr)
        return 2
    print(f"[core2] {args.n} samples -> {args.out}")
    return 0


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    pipe = Pipeline(cfg, args.runs_dir, force=args.force)
    missing = [p for p in (pipe.base_path, pipe.data_path, pipe.weak_path)
               if not p.exists()]
    if missing:
        print(f"error: stage report: missing artifacts {[str(p) for p in missing]}",
              file=sys.stderr)
        return 2
    try:
        pipe.report()
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"[core2] reports -> {pipe.dir}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        handler = {
            "pipeline": cmd_pipeline,
            "theory": cmd_theory,
            "collect": cmd_collect,
            "reflect": cmd_reflect,
            "refine": cmd_refine,
            "report": cmd_report,
        }[args.command]
        return handler(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
