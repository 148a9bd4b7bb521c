"""Versioned binary checkpoints for the base net and the weak model.

Layout: 8-byte magic "CORE2NN\\0", version u16, u32 JSON layout header,
then all parameters as row-major little-endian f64 in declaration order
(per layer W then b; for weak models then per step, per host layer, A then
B).  A companion JSON sidecar at <path>.json records config and final loss.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .nets import DenseNet
from .reflect import WeakModel

MAGIC = b"CORE2NN\x00"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _write(path, layout: dict, arrays, sidecar: dict | None) -> int:
    header = json.dumps(layout, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    blob += struct.pack("<I", len(header))
    blob += header
    for a in arrays:
        blob += np.ascontiguousarray(a, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)
    if sidecar is not None:
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=1)
    return len(blob)


def _read(path) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError("not a core2 checkpoint (bad magic bytes)")
    (version,) = struct.unpack("<H", blob[8:10])
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version}, expected {VERSION}")
    (hlen,) = struct.unpack("<I", blob[10:14])
    layout = json.loads(blob[14:14 + hlen].decode("utf-8"))
    return layout, blob[14 + hlen:]


def _take(buf: bytes, offset: int, shape) -> tuple[np.ndarray, int]:
    n = int(np.prod(shape))
    end = offset + 8 * n
    if end > len(buf):
        raise CheckpointError(f"checkpoint truncated at byte {len(buf)}")
    return np.frombuffer(buf[offset:end], dtype="<f8").reshape(shape).copy(), end


def save_dense(net: DenseNet, path, sidecar: dict | None = None) -> int:
    layout = {"kind": "dense", "sizes": net.sizes, "activation": net.activation}
    arrays = []
    for w, b in zip(net.weights, net.biases):
        arrays += [w, b]
    return _write(path, layout, arrays, sidecar)


def load_dense(path) -> DenseNet:
    layout, buf = _read(path)
    if layout.get("kind") != "dense":
        raise CheckpointError(f"expected a dense checkpoint, got {layout.get('kind')!r}")
    net = DenseNet(layout["sizes"], activation=layout["activation"], seed=0)
    off = 0
    for i in range(net.num_layers):
        net.weights[i], off = _take(buf, off, net.weights[i].shape)
        net.biases[i], off = _take(buf, off, net.biases[i].shape)
    if off != len(buf):
        raise CheckpointError(f"{len(buf) - off} trailing parameter bytes")
    net.validate()
    return net


def save_weak(model: WeakModel, path, sidecar: dict | None = None) -> int:
    layout = {
        "kind": "weak",
        "sizes": model.base.sizes,
        "activation": model.base.activation,
        "dim": model.dim,
        "num_steps": model.num_steps,
        "t_emb_dim": model.t_emb_dim,
        "adapter_rank": model.adapter_rank,
        "host_layers": list(model.host_layers),
    }
    arrays = []
    for w, b in zip(model.base.weights, model.base.biases):
        arrays += [w, b]
    for t in range(1, model.num_steps + 1):
        for a, b in model.experts[t]:
            arrays += [a, b]
    return _write(path, layout, arrays, sidecar)


def load_weak(path) -> WeakModel:
    layout, buf = _read(path)
    if layout.get("kind") != "weak":
        raise CheckpointError(f"expected a weak checkpoint, got {layout.get('kind')!r}")
    sizes = layout["sizes"]
    model = WeakModel(
        dim=layout["dim"],
        num_steps=layout["num_steps"],
        hidden=tuple(sizes[1:-1]),
        adapter_rank=layout["adapter_rank"],
        activation=layout["activation"],
        t_emb_dim=layout["t_emb_dim"],
        seed=0,
    )
    if list(model.host_layers) != layout["host_layers"]:
        raise CheckpointError("host layer layout mismatch")
    off = 0
    for i in range(model.base.num_layers):
        model.base.weights[i], off = _take(buf, off, model.base.weights[i].shape)
        model.base.biases[i], off = _take(buf, off, model.base.biases[i].shape)
    for t in range(1, model.num_steps + 1):
        pairs = []
        for a, b in model.experts[t]:
            a_new, off = _take(buf, off, a.shape)
            b_new, off = _take(buf, off, b.shape)
            pairs.append((a_new, b_new))
        model.experts[t] = pairs
    if off != len(buf):
        raise CheckpointError(f"{len(buf) - off} trailing parameter bytes")
    model.base.validate()
    return model


def load_sidecar(path) -> dict:
    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        return json.load(fh)
