"""Stage II: the weak noise model and its training on collected trajectories.

The weak model is a small dense network reading (eps_uncond, timestep
embedding, conditioning row) with one low-rank expert pair (A_t, B_t) per
sampling step, applied additively to every hidden layer.  Training needs
only the collected dataset; the base model is never evaluated here.  The
loss is a dynamically weighted squared error against either the recorded
conditional branch or the recomputed guidance output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditioning import COND_DIM
from .denoiser import TrainingDiverged
from .nets import DenseNet, assemble_input
from .optim import AdamW

WEIGHT_FORMS = ("equation_form", "text_form_clamped")
TARGETS = ("cond", "cfg")


@dataclass
class ReflectConfig:
    alpha: float = 4.0
    weight_form: str = "equation_form"
    target: str = "cond"
    iterations: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    hidden: tuple[int, ...] = (64, 64)
    adapter_rank: int = 4
    activation: str = "tanh"
    t_emb_dim: int = 32
    omega_cfg: float | None = None  # for target="cfg"; None = dataset omega

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.weight_form not in WEIGHT_FORMS:
            raise ValueError(f"unknown weight form {self.weight_form!r}")
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}")


def dynamic_weight(t: int, num_steps: int, alpha: float, form: str) -> float:
    """Loss weight emphasizing the start of sampling (t = T).

    equation_form: alpha * cos((T - t)/T); text_form_clamped:
    max(cos(alpha (T - t)/T), 0).  Defined on 0 <= t <= T.
    """
    if not 0 <= t <= num_steps:
        raise ValueError(f"step {t} outside [0, {num_steps}]")
    frac = (num_steps - t) / num_steps
    if form == "equation_form":
        return float(alpha * np.cos(frac))
    if form == "text_form_clamped":
        return float(max(np.cos(alpha * frac), 0.0))
    raise ValueError(f"unknown weight form {form!r}")


class WeakModel:
    """Base dense net plus one low-rank expert pair per sampling step.

    Experts live on every hidden layer; expert t contributes B_t A_t to the
    host layer weight when (and only when) step t is evaluated.
    """

    def __init__(self, dim: int, num_steps: int, hidden=(64, 64), adapter_rank: int = 4,
                 activation: str = "tanh", t_emb_dim: int = 32, seed: int = 0):
        self.dim = dim
        self.num_steps = int(num_steps)
        self.t_emb_dim = t_emb_dim
        self.adapter_rank = int(adapter_rank)
        sizes = [dim + t_emb_dim + COND_DIM, *hidden, dim]
        self.base = DenseNet(sizes, activation=activation, seed=seed)
        self.host_layers = tuple(range(len(hidden)))  # all hidden layers
        rng = np.random.default_rng([seed, 7])
        self.experts: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
        for t in range(1, self.num_steps + 1):
            pairs = []
            for li in self.host_layers:
                fan_in = sizes[li]
                fan_out = sizes[li + 1]
                a = rng.standard_normal((self.adapter_rank, fan_in)) / np.sqrt(fan_in)
                b = np.zeros((fan_out, self.adapter_rank))
                pairs.append((a, b))
            self.experts[t] = pairs

    def deltas_for(self, t: int):
        if not 1 <= t <= self.num_steps:
            raise ValueError(f"step {t} outside [1, {self.num_steps}]")
        deltas: list = [None] * self.base.num_layers
        for li, pair in zip(self.host_layers, self.experts[t]):
            deltas[li] = pair
        return deltas

    def parameters(self) -> list[np.ndarray]:
        params = self.base.parameters()
        for t in range(1, self.num_steps + 1):
            for a, b in self.experts[t]:
                params.append(a)
                params.append(b)
        return params

    def forward(self, eps_uncond: np.ndarray, cond_flat: np.ndarray, t: int) -> np.ndarray:
        inp = assemble_input(eps_uncond, t, cond_flat, self.num_steps, self.t_emb_dim)
        return self.base.forward(inp, deltas=self.deltas_for(t))


def weak_forward(w: WeakModel, eps_uncond: np.ndarray, cond_flat: np.ndarray, t: int) -> np.ndarray:
    return w.forward(eps_uncond, cond_flat, t)


def reflect_loss_and_grad(w: WeakModel, batch, cond_table, cfg: ReflectConfig,
                          dataset_omega: float = 1.0):
    """Weighted distillation loss over a batch of trajectory records.

    batch: sequence of TrajectoryRecord; cond_table: restored flat
    conditioning rows indexed by record.cond_ref.  Returns (loss, grads)
    where grads align with w.parameters().
    """
    if not len(batch):
        raise ValueError("empty batch")
    omega = cfg.omega_cfg if cfg.omega_cfg is not None else dataset_omega
    n = len(batch)
    base_grads = [np.zeros_like(p) for p in w.base.parameters()]
    expert_grads = {
        t: [(np.zeros_like(a), np.zeros_like(b)) for a, b in w.experts[t]]
        for t in sorted({int(r.step) for r in batch})
    }
    loss = 0.0
    by_step: dict[int, list] = {}
    for r in batch:
        by_step.setdefault(int(r.step), []).append(r)
    for t, recs in sorted(by_step.items()):
        eps_uncond = np.stack([r.eps_uncond for r in recs])
        eps_cond = np.stack([r.eps_cond for r in recs])
        cond = np.stack([cond_table[r.cond_ref] for r in recs])
        if cfg.target == "cond":
            target = eps_cond
        else:
            target = eps_uncond + omega * (eps_cond - eps_uncond)
        weight = dynamic_weight(t, w.num_steps, cfg.alpha, cfg.weight_form)
        inp = assemble_input(eps_uncond, t, cond, w.num_steps, w.t_emb_dim)
        deltas = w.deltas_for(t)
        out, cache = w.base.forward_cached(inp, deltas=deltas)
        resid = out - target
        loss += weight * float(np.sum(resid * resid))
        layer_grads, delta_grads, _ = w.base.backward(
            cache, (2.0 * weight / n) * resid, deltas=deltas)
        for i, (dw, db) in enumerate(layer_grads):
            base_grads[2 * i] += dw
            base_grads[2 * i + 1] += db
        acc = expert_grads[t]
        for slot, li in enumerate(w.host_layers):
            da, db_lr = delta_grads[li]
            acc[slot][0][...] += da
            acc[slot][1][...] += db_lr
    loss /= n
    grads = list(base_grads)
    for t in range(1, w.num_steps + 1):
        if t in expert_grads:
            for da, db_lr in expert_grads[t]:
                grads.append(da)
                grads.append(db_lr)
        else:
            for a, b in w.experts[t]:
                grads.append(np.zeros_like(a))
                grads.append(np.zeros_like(b))
    return loss, grads


def per_step_losses(w: WeakModel, dataset, cfg: ReflectConfig) -> dict[int, float]:
    """Mean weighted loss per sampling step over the whole dataset."""
    from .svdcodec import svd_restore

    cond_table = [svd_restore(f).reshape(-1) for f in dataset.cond_table]
    omega = cfg.omega_cfg if cfg.omega_cfg is not None else dataset.header.omega
    by_step: dict[int, list] = {}
    for r in dataset.records:
        by_step.setdefault(int(r.step), []).append(r)
    out = {}
    for t, recs in sorted(by_step.items()):
        eps_uncond = np.stack([r.eps_uncond for r in recs])
        eps_cond = np.stack([r.eps_cond for r in recs])
        cond = np.stack([cond_table[r.cond_ref] for r in recs])
        target = eps_cond if cfg.target == "cond" else (
            eps_uncond + omega * (eps_cond - eps_uncond))
        pred = w.forward(eps_uncond, cond, t)
        weight = dynamic_weight(t, w.num_steps, cfg.alpha, cfg.weight_form)
        resid = pred - target
        out[t] = weight * float(np.mean(np.sum(resid * resid, axis=-1)))
    return out


def train_reflect(dataset, cfg: ReflectConfig, seed: int):
    """Train a weak model from a collected dataset alone.

    Returns (model, loss_curve, per_step_loss); the breakdown is the final
    model's mean weighted loss per sampling step, exposing which steps (and
    hence which content) it learned well.
    """
    from .svdcodec import svd_restore

    if not dataset.records:
        raise ValueError("dataset has no records")
    header = dataset.header
    w = WeakModel(header.dim, header.num_steps, hidden=tuple(cfg.hidden),
                  adapter_rank=cfg.adapter_rank, activation=cfg.activation,
                  t_emb_dim=cfg.t_emb_dim, seed=seed)
    cond_table = [svd_restore(f).reshape(-1) for f in dataset.cond_table]
    losses = np.zeros(cfg.iterations)
    if cfg.iterations == 0:
        return w, losses, {}
    rng = np.random.default_rng([seed, 2])
    opt = AdamW(w.parameters(), cfg.learning_rate, horizon=cfg.iterations,
                weight_decay=cfg.weight_decay)
    records = dataset.records
    for it in range(cfg.iterations):
        idx = rng.integers(0, len(records), size=cfg.batch_size)
        batch = [records[i] for i in idx]
        loss, grads = reflect_loss_and_grad(w, batch, cond_table, cfg,
                                            dataset_omega=header.omega)
        if not np.isfinite(loss):
            raise TrainingDiverged(it, loss)
        losses[it] = loss
        opt.step(w.parameters(), grads)
    return w, losses, per_step_losses(w, dataset, cfg)
