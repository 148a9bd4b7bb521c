"""Stage I: run guided sampling trajectories and record both branches.

Every trajectory runs the full T-step deterministic sampler under standard
classifier-free guidance, storing (eps_cond, eps_uncond, conditioning ref,
step) at each step -- both branches are always stored, whatever the mixing
scale, so the reflect trainer never needs the generating model again.
Conditioning token matrices are compressed with the truncated-SVD codec
before storage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditioning import LabelEmbeddings
from .refine import ddim_step
from .schedule import NoiseSchedule
from .svdcodec import SvdFactors, svd_compress


class CollectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    trajectory_id: int
    step: int
    eps_cond: np.ndarray
    eps_uncond: np.ndarray
    cond_ref: int
    x_t: np.ndarray | None = None


@dataclass(frozen=True)
class DatasetHeader:
    dim: int
    num_steps: int
    num_trajectories: int
    seed: int
    omega: float
    store_xt: bool
    rank: int
    labels: tuple[int, ...]        # label of each trajectory, in order
    cond_labels: tuple[int, ...]   # label of each conditioning-table entry
    schedule: dict                 # {"mode": ..., "num_steps": ...} description


@dataclass(frozen=True)
class Dataset:
    header: DatasetHeader
    cond_table: tuple[SvdFactors, ...]
    records: tuple[TrajectoryRecord, ...]

    def __post_init__(self):
        h = self.header
        if len(self.records) != h.num_trajectories * h.num_steps:
            raise ValueError("record count must equal N * T")
        for r in self.records:
            if not 1 <= r.step <= h.num_steps:
                raise ValueError(f"record step {r.step} outside [1, T]")
            if not 0 <= r.cond_ref < len(self.cond_table):
                raise ValueError(f"cond_ref {r.cond_ref} does not resolve")


def schedule_description(schedule: NoiseSchedule) -> dict:
    desc = {"mode": schedule.mode, "num_steps": schedule.num_steps}
    if schedule.mode == "custom":
        desc["alphas"] = [float(a) for a in schedule.alphas]
        desc["sigmas"] = [float(s) for s in schedule.sigmas]
    return desc


def collect_trajectories(
    source,
    labels,
    schedule: NoiseSchedule,
    omega: float,
    seed: int,
    rank: int = 4,
    store_xt: bool = False,
    embeddings: LabelEmbeddings | None = None,
) -> Dataset:
    """One full guided DDIM trajectory per entry of `labels`.

    source provides .predict(x_t, t, label-or-None); per-trajectory noise
    comes from independent seeded streams so collection order never
    matters.  Non-finite predictions abort with the trajectory id.
    """
    labels = [int(l) for l in labels]
    if embeddings is None:
        embeddings = LabelEmbeddings(sorted(set(labels)))
    T = schedule.num_steps
    cond_labels: list[int] = []
    cond_index: dict[int, int] = {}
    table: list[SvdFactors] = []
    for l in labels:
        if l not in cond_index:
            cond_index[l] = len(table)
            cond_labels.append(l)
            table.append(svd_compress(embeddings.exact(l), rank))
    records: list[TrajectoryRecord] = []
    dim = None
    for i, label in enumerate(labels):
        rng = np.random.default_rng([seed, i])
        x = None
        for t in range(T, 0, -1):
            if x is None:
                dim = _source_dim(source)
                x = rng.standard_normal(dim)
            eps_cond = source.predict(x, t, label)
            eps_uncond = source.predict(x, t, None)
            if not (np.all(np.isfinite(eps_cond)) and np.all(np.isfinite(eps_uncond))):
                raise CollectionError(f"non-finite prediction in trajectory {i} at step {t}")
            records.append(TrajectoryRecord(
                trajectory_id=i,
                step=t,
                eps_cond=np.array(eps_cond, dtype=float),
                eps_uncond=np.array(eps_uncond, dtype=float),
                cond_ref=cond_index[label],
                x_t=x.copy() if store_xt else None,
            ))
            eps = eps_uncond + omega * (eps_cond - eps_uncond)
            x = ddim_step(x, eps, t, t - 1, schedule)
    header = DatasetHeader(
        dim=dim if dim is not None else _source_dim(source),
        num_steps=T,
        num_trajectories=len(labels),
        seed=int(seed),
        omega=float(omega),
        store_xt=bool(store_xt),
        rank=int(rank),
        labels=tuple(labels),
        cond_labels=tuple(cond_labels),
        schedule=schedule_description(schedule),
    )
    return Dataset(header, tuple(table), tuple(records))


def _source_dim(source) -> int:
    if hasattr(source, "gmm"):
        return source.gmm.dim
    if hasattr(source, "net"):
        return source.net.sizes[-1]
    if hasattr(source, "inner"):
        return _source_dim(source.inner)
    raise ValueError("cannot infer data dimension from the source")


def completeness_check(ds: Dataset) -> bool:
    """Every (trajectory, step) pair appears exactly once."""
    seen = {(r.trajectory_id, r.step) for r in ds.records}
    h = ds.header
    want = {(i, t) for i in range(h.num_trajectories) for t in range(1, h.num_steps + 1)}
    return seen == want and len(ds.records) == len(want)
