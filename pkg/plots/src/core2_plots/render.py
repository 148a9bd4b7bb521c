"""Render report CSVs into figure files.

Consumes files only: a FigureSpec names the input CSV, the figure kind and
the output path.  Inputs are validated against the kind's column table
before any drawing; rendering is deterministic under the pinned style.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .schemas import FIGURE_KINDS, REQUIRED_COLUMNS

STYLE = {
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class RenderError(ValueError):
    pass


class SchemaError(RenderError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    input_path: str
    kind: str
    output_path: str
    title: str | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise RenderError(f"unknown figure kind {self.kind!r}")


def read_report_csv(path, kind: str) -> list[dict]:
    """Read a report CSV (comment lines skipped) and validate its columns."""
    path = Path(path)
    if not path.exists():
        raise RenderError(f"input file not found: {path}")
    lines = [ln.rstrip("\n") for ln in path.read_text(encoding="utf-8").splitlines()
             if ln and not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path} has no header row")
    header = lines[0].split(",")
    for col in REQUIRED_COLUMNS[kind]:
        if col not in header:
            raise SchemaError(f"{path} is missing required column {col!r}")
    rows = [dict(zip(header, ln.split(","))) for ln in lines[1:]]
    if not rows:
        raise RenderError(f"{path} has no data rows")
    return rows


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path."""
    rows = read_report_csv(spec.input_path, spec.kind)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        _DRAWERS[spec.kind](ax, rows)
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
        out = Path(spec.output_path)
        # strip the writer metadata so identical inputs give identical bytes
        fig.savefig(out, metadata={"Software": None})
        plt.close(fig)
    return out


def _draw_error_curve(ax, rows):
    omega = [float(r["omega_star"]) for r in rows]
    ratio = [float(r["e_star"]) / min(float(r["e0"]), float(r["e1"])) for r in rows]
    ax.scatter(omega, ratio, s=14, alpha=0.7, label="instances")
    ax.axvline(1.0, color="tab:red", lw=1, ls="--")
    ax.axhline(1.0, color="tab:gray", lw=1, ls="--")
    n = len(rows)
    gt_one = sum(w > 1.0 for w in omega)
    improves = sum(r < 1.0 for r in ratio)
    ax.annotate(f"omega* > 1: {gt_one}/{n}", xy=(0.02, 0.95),
                xycoords="axes fraction")
    ax.annotate(f"E(omega*) < min(E(0), E(1)): {improves}/{n}",
                xy=(0.02, 0.88), xycoords="axes fraction")
    ax.set_xlabel("optimal guidance scale omega*")
    ax.set_ylabel("E(omega*) / min(E(0), E(1))")
    ax.legend(loc="lower right")


def _draw_spectrum_histogram(ax, rows):
    bins = [int(r["bin"]) for r in rows]
    e_w2s = [float(r["energy_w2s"]) for r in rows]
    e_cfg = [float(r["energy_cfg"]) for r in rows]
    width = 0.4
    ax.bar([b - width / 2 for b in bins], e_w2s, width=width, label="w2s direction")
    ax.bar([b + width / 2 for b in bins], e_cfg, width=width, label="cfg direction")
    cut = (len(bins) - 1) // 2
    hf = lambda e: sum(e[cut:]) / total if (total := sum(e)) > 0 else 0.0
    diff = hf(e_w2s) - hf(e_cfg)
    ax.axvline(cut - 0.5, color="tab:gray", lw=1, ls="--")
    ax.annotate(f"high-frequency fraction difference: {diff:+.4f}",
                xy=(0.02, 0.95), xycoords="axes fraction")
    ax.set_xlabel("frequency bin (one-sided)")
    ax.set_ylabel("mean energy")
    ax.set_yscale("log")
    ax.legend(loc="upper right")


def _draw_tradeoff_frontier(ax, rows):
    pts = sorted(rows, key=lambda r: int(r["nfe"]))
    nfe = [int(r["nfe"]) for r in pts]
    swd = [float(r["swd"]) for r in pts]
    if len(pts) > 1:
        ax.plot(nfe, swd, marker="o", label="distributional distance")
    else:
        ax.scatter(nfe, swd, marker="o", label="distributional distance")
    for r in pts:
        ax.annotate(f"slow={r['slow_steps']}", (int(r["nfe"]), float(r["swd"])),
                    textcoords="offset points", xytext=(4, 4), fontsize=8)
    ax.set_xlabel("base-model function evaluations")
    ax.set_ylabel("sliced Wasserstein distance")
    ax.legend(loc="upper right")


def _draw_ablation_lines(ax, rows):
    pts = sorted(rows, key=lambda r: int(r["iterations"]))
    iters = [int(r["iterations"]) for r in pts]
    ax.plot(iters, [float(r["swd"]) for r in pts], marker="o",
            label="fast-mode sample distance")
    ax.plot(iters, [float(r["mse"]) for r in pts], marker="s",
            label="weak-model oracle mse")
    ax.set_xscale("log")
    ax.set_xlabel("training iterations")
    ax.set_ylabel("metric value")
    ax.legend(loc="upper right")


_DRAWERS = {
    "error_curve": _draw_error_curve,
    "spectrum_histogram": _draw_spectrum_histogram,
    "tradeoff_frontier": _draw_tradeoff_frontier,
    "ablation_lines": _draw_ablation_lines,
}
