"""Base denoiser: a small trainable eps-prediction network plus CFG.

The base model is trained with the standard denoising objective
L = E ||eps_hat(x_t, t, c) - eps||^2, with the conditioning row dropped to
the reserved null embedding with probability `cond_dropout` so that the
unconditional branch needed by classifier-free guidance gets trained too.
The "strong" pathway used downstream is selectable between this trained
network and the analytic mixture oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gmm as gmm_mod
from .conditioning import COND_DIM, LabelEmbeddings
from .nets import DenseNet, assemble_input
from .optim import AdamW
from .schedule import NoiseSchedule, forward_noise


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"non-finite loss {loss} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class TrainConfig:
    iterations: int = 5000
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    cond_dropout: float = 0.1
    hidden: tuple[int, ...] = (256, 256, 256)
    activation: str = "tanh"
    t_emb_dim: int = 32


def build_base_net(dim: int, cfg: TrainConfig, seed: int) -> DenseNet:
    sizes = [dim + cfg.t_emb_dim + COND_DIM, *cfg.hidden, dim]
    return DenseNet(sizes, activation=cfg.activation, seed=seed)


def net_forward(
    net: DenseNet,
    x_t: np.ndarray,
    t,
    cond_flat: np.ndarray,
    num_steps: int,
    t_emb_dim: int,
) -> np.ndarray:
    """Deterministic eps-prediction; pass the null row for unconditional."""
    return net.forward(assemble_input(x_t, t, cond_flat, num_steps, t_emb_dim))


def dm_loss_and_grad(
    net: DenseNet,
    batch: list[gmm_mod.LabeledSample],
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    embeddings: LabelEmbeddings,
    cond_dropout: float = 0.1,
    t_emb_dim: int = 32,
):
    """Monte Carlo denoising loss and exact gradients for one batch.

    Per example: t ~ U{1..T}, eps ~ N(0, I), x_t = alpha_t x0 + sigma_t eps,
    and the squared residual ||eps_hat - eps||^2 averaged over the batch.
    """
    if not batch:
        raise ValueError("empty batch")
    x0, labels = gmm_mod.samples_to_arrays(batch)
    n, d = x0.shape
    T = schedule.num_steps
    t = rng.integers(1, T + 1, size=n)
    eps = rng.standard_normal((n, d))
    drop = rng.random(n) < cond_dropout
    x_t = schedule.alphas[t][:, None] * x0 + schedule.sigmas[t][:, None] * eps
    cond = np.stack([
        np.zeros(COND_DIM) if drop[i] else embeddings.flat(labels[i]) for i in range(n)
    ])
    inp = assemble_input(x_t, t, cond, T, t_emb_dim)
    out, cache = net.forward_cached(inp)
    resid = out - eps
    loss = float(np.sum(resid * resid) / n)
    layer_grads, _, _ = net.backward(cache, 2.0 * resid / n)
    grads = []
    for dw, db in layer_grads:
        grads.append(dw)
        grads.append(db)
    return loss, grads


def train_denoiser(
    cfg: TrainConfig,
    data: gmm_mod.Gmm,
    schedule: NoiseSchedule,
    seed: int,
    embeddings: LabelEmbeddings | None = None,
) -> tuple[DenseNet, np.ndarray]:
    """Train the base net on fresh mixture draws; deterministic given seed.

    Returns the trained network and the per-iteration loss series.
    """
    if embeddings is None:
        embeddings = LabelEmbeddings(data.component_labels())
    net = build_base_net(data.dim, cfg, seed)
    if cfg.iterations == 0:
        return net, np.zeros(0)
    rng = np.random.default_rng([seed, 1])
    opt = AdamW(net.parameters(), cfg.learning_rate, horizon=cfg.iterations,
                weight_decay=cfg.weight_decay)
    losses = np.zeros(cfg.iterations)
    for it in range(cfg.iterations):
        batch = gmm_mod.sample_x0(data, cfg.batch_size, int(rng.integers(2**63)))
        loss, grads = dm_loss_and_grad(
            net, batch, schedule, rng, embeddings,
            cond_dropout=cfg.cond_dropout, t_emb_dim=cfg.t_emb_dim,
        )
        if not np.isfinite(loss):
            raise TrainingDiverged(it, loss)
        losses[it] = loss
        opt.step(net.parameters(), grads)
    return net, losses


class OracleEps:
    """Analytic eps source backed by the ground-truth mixture."""

    def __init__(self, gmm: gmm_mod.Gmm, schedule: NoiseSchedule):
        self.gmm = gmm
        self.schedule = schedule

    def predict(self, x_t: np.ndarray, t: int, label: int | None) -> np.ndarray:
        return gmm_mod.eps_oracle(self.gmm, self.schedule, t, x_t, label)


class NetEps:
    """Trained-network eps source; label None routes to the null row."""

    def __init__(self, net: DenseNet, embeddings: LabelEmbeddings,
                 num_steps: int, t_emb_dim: int = 32):
        self.net = net
        self.embeddings = embeddings
        self.num_steps = num_steps
        self.t_emb_dim = t_emb_dim

    def predict(self, x_t: np.ndarray, t: int, label: int | None) -> np.ndarray:
        cond = self.embeddings.flat(label)
        return net_forward(self.net, x_t, t, cond, self.num_steps, self.t_emb_dim)


class CountingEps:
    """Wrapper counting conditional/unconditional evaluations."""

    def __init__(self, inner):
        self.inner = inner
        self.cond_calls = 0
        self.uncond_calls = 0

    @property
    def total_calls(self) -> int:
        return self.cond_calls + self.uncond_calls

    def predict(self, x_t, t, label):
        if label is None:
            self.uncond_calls += 1
        else:
            self.cond_calls += 1
        return self.inner.predict(x_t, t, label)


def cfg_eval(source, x_t: np.ndarray, t: int, label: int, omega: float):
    """Classifier-free guidance: returns (eps_strong, eps_cond, eps_uncond).

    omega = 1 and omega = 0 return the conditional / unconditional branch
    bit-exactly rather than through the affine combination.
    """
    if not np.isfinite(omega):
        raise ValueError("guidance scale must be finite")
    eps_cond = source.predict(x_t, t, label)
    eps_uncond = source.predict(x_t, t, None)
    if omega == 1.0:
        eps_strong = eps_cond.copy()
    elif omega == 0.0:
        eps_strong = eps_uncond.copy()
    else:
        eps_strong = eps_uncond + omega * (eps_cond - eps_uncond)
    return eps_strong, eps_cond, eps_uncond
