import numpy as np
import pytest

from core2.checkpoint import (
    CheckpointError,
    load_dense,
    load_sidecar,
    load_weak,
    save_dense,
    save_weak,
)
from core2.nets import DenseNet
from core2.reflect import WeakModel


def test_dense_round_trip(tmp_path):
    net = DenseNet([6, 10, 5], activation="silu", seed=4)
    path = tmp_path / "base.ckpt"
    save_dense(net, path, sidecar={"final_loss": 0.25, "seed": 4})
    back = load_dense(path)
    assert back.sizes == net.sizes
    assert back.activation == "silu"
    for a, b in zip(net.parameters(), back.parameters()):
        assert np.array_equal(a, b)
    assert load_sidecar(path)["final_loss"] == 0.25


def test_weak_round_trip(tmp_path):
    model = WeakModel(6, 4, hidden=(10, 9), adapter_rank=2, t_emb_dim=4, seed=5)
    rng = np.random.default_rng(6)
    for t in model.experts:
        for a, b in model.experts[t]:
            b[:] = rng.normal(size=b.shape)
    path = tmp_path / "weak.ckpt"
    save_weak(model, path)
    back = load_weak(path)
    assert back.num_steps == 4 and back.adapter_rank == 2
    for a, b in zip(model.parameters(), back.parameters()):
        assert np.array_equal(a, b)
    x = rng.normal(size=6)
    cond = rng.normal(size=model.base.sizes[0] - 6 - 4)
    for t in (1, 4):
        assert np.array_equal(model.forward(x, cond, t), back.forward(x, cond, t))


def test_magic_and_kind_checks(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_dense(path)
    net = DenseNet([3, 4, 2], seed=0)
    good = tmp_path / "dense.ckpt"
    save_dense(net, good)
    with pytest.raises(CheckpointError, match="weak"):
        load_weak(good)


def test_truncated_checkpoint(tmp_path):
    net = DenseNet([3, 4, 2], seed=1)
    path = tmp_path / "cut.ckpt"
    save_dense(net, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(CheckpointError, match="truncated"):
        load_dense(path)
