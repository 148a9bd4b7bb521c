"""Binary dataset persistence.

Layout: 8-byte magic "CORE2DS\\0", version u16 (little endian), u32 JSON
header length, the JSON header, the conditioning table (per entry: u, s, v
as raw little-endian f64), then fixed-width records
(u32 trajectory_id, u32 step, u32 cond_ref, eps_cond, eps_uncond[, x_t]).
Floats round-trip bit-identically.  Magic, version and truncation failures
raise distinct errors; factor orthonormality is re-validated on load.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .collect import Dataset, DatasetHeader, TrajectoryRecord
from .svdcodec import SvdFactors

MAGIC = b"CORE2DS\x00"
VERSION = 1


class DatasetFormatError(RuntimeError):
    pass


class MagicMismatch(DatasetFormatError):
    pass


class VersionMismatch(DatasetFormatError):
    pass


class TruncatedDataset(DatasetFormatError):
    def __init__(self, byte_offset: int):
        super().__init__(f"dataset truncated at byte {byte_offset}")
        self.byte_offset = byte_offset


def write_dataset(ds: Dataset, path) -> int:
    """Serialize; returns the byte count written."""
    h = ds.header
    header_doc = {
        "dim": h.dim,
        "num_steps": h.num_steps,
        "num_trajectories": h.num_trajectories,
        "seed": h.seed,
        "omega": h.omega,
        "store_xt": h.store_xt,
        "rank": h.rank,
        "labels": list(h.labels),
        "cond_labels": list(h.cond_labels),
        "schedule": h.schedule,
        "cond_table": [
            {"rows": f.u.shape[0], "cols": f.v.shape[0], "rank": f.rank}
            for f in ds.cond_table
        ],
    }
    header_bytes = json.dumps(header_doc, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    for f in ds.cond_table:
        for arr in (f.u, f.s, f.v):
            blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    for r in ds.records:
        blob += struct.pack("<III", r.trajectory_id, r.step, r.cond_ref)
        blob += np.ascontiguousarray(r.eps_cond, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(r.eps_uncond, dtype="<f8").tobytes()
        if h.store_xt:
            blob += np.ascontiguousarray(r.x_t, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = 0

    def need(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedDataset(len(blob))
        out = blob[pos:pos + n]
        pos += n
        return out

    if need(8) != MAGIC:
        raise MagicMismatch("not a core2 dataset file (bad magic bytes)")
    (version,) = struct.unpack("<H", need(2))
    if version != VERSION:
        raise VersionMismatch(f"dataset version {version}, expected {VERSION}")
    (header_len,) = struct.unpack("<I", need(4))
    try:
        doc = json.loads(need(header_len).decode("utf-8"))
    except ValueError as e:
        raise DatasetFormatError(f"unreadable header: {e}") from e
    table = []
    for entry in doc["cond_table"]:
        rows, cols, rank = entry["rows"], entry["cols"], entry["rank"]
        u = np.frombuffer(need(8 * rows * rank), dtype="<f8").reshape(rows, rank)
        s = np.frombuffer(need(8 * rank), dtype="<f8")
        v = np.frombuffer(need(8 * cols * rank), dtype="<f8").reshape(cols, rank)
        try:
            table.append(SvdFactors(u.copy(), s.copy(), v.copy(), rank))
        except ValueError as e:
            raise DatasetFormatError(f"invalid conditioning factors: {e}") from e
    dim = doc["dim"]
    store_xt = doc["store_xt"]
    n_records = doc["num_trajectories"] * doc["num_steps"]
    records = []
    for _ in range(n_records):
        tid, step, cond_ref = struct.unpack("<III", need(12))
        eps_cond = np.frombuffer(need(8 * dim), dtype="<f8").copy()
        eps_uncond = np.frombuffer(need(8 * dim), dtype="<f8").copy()
        x_t = np.frombuffer(need(8 * dim), dtype="<f8").copy() if store_xt else None
        records.append(TrajectoryRecord(tid, step, eps_cond, eps_uncond, cond_ref, x_t))
    if pos != len(blob):
        raise DatasetFormatError(f"{len(blob) - pos} trailing bytes after records")
    header = DatasetHeader(
        dim=dim,
        num_steps=doc["num_steps"],
        num_trajectories=doc["num_trajectories"],
        seed=doc["seed"],
        omega=doc["omega"],
        store_xt=store_xt,
        rank=doc["rank"],
        labels=tuple(doc["labels"]),
        cond_labels=tuple(doc["cond_labels"]),
        schedule=doc["schedule"],
    )
    return Dataset(header, tuple(table), tuple(records))


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Field-for-field equality with bit-identical floats."""
    if a.header != b.header or len(a.records) != len(b.records):
        return False
    for fa, fb in zip(a.cond_table, b.cond_table):
        if not (np.array_equal(fa.u, fb.u) and np.array_equal(fa.s, fb.s)
                and np.array_equal(fa.v, fb.v) and fa.rank == fb.rank):
            return False
    for ra, rb in zip(a.records, b.records):
        if (ra.trajectory_id, ra.step, ra.cond_ref) != (rb.trajectory_id, rb.step, rb.cond_ref):
            return False
        if not (np.array_equal(ra.eps_cond, rb.eps_cond)
                and np.array_equal(ra.eps_uncond, rb.eps_uncond)):
            return False
        if (ra.x_t is None) != (rb.x_t is None):
            return False
        if ra.x_t is not None and not np.array_equal(ra.x_t, rb.x_t):
            return False
    return True
