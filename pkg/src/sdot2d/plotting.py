"""Matplotlib figures for tessellations and benchmark tables (file output only)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon as PolygonPatch  # noqa: E402

from .model import domain_from_dict  # noqa: E402
from .svg import PALETTE  # noqa: E402

__all__ = ["plot_record", "plot_bench"]


def plot_record(record, path, title: str | None = None) -> None:
    """Filled cells, targets and domain outline of a tessellation record, saved to ``path``."""
    d = record.to_dict() if hasattr(record, "to_dict") else record
    domain = domain_from_dict(d["domain"])
    fig, ax = plt.subplots(figsize=(5, 5))
    for cell in sorted(d["cells"], key=lambda c: c["index"]):
        pts = np.vstack([np.asarray(a["points"], dtype=float) for a in cell["arcs"]])
        i = cell["index"]
        ax.add_patch(PolygonPatch(pts, closed=True, facecolor=PALETTE[i % len(PALETTE)],
                                  edgecolor="black", linewidth=0.8))
    outline = domain.outline()
    ax.plot(outline[:, 0], outline[:, 1], color="black", linewidth=1.5)
    y = np.asarray(d["targets"], dtype=float)
    ax.plot(y[:, 0], y[:, 1], "k.", markersize=6)
    for i, p in enumerate(y):
        ax.annotate(str(i + 1), p, textcoords="offset points", xytext=(3, 3), fontsize=8)
    x0, y0, x1, y1 = domain.bbox
    pad = 0.03 * max(x1 - x0, y1 - y0)
    ax.set_xlim(x0 - pad, x1 + pad)
    ax.set_ylim(y0 - pad, y1 + pad)
    ax.set_aspect("equal")
    ax.set_title(title or d.get("name") or "tessellation")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _num(x):
    try:
        v = float(x)
    except (TypeError, ValueError):
        return math.nan
    return v


def plot_bench(rows: list[dict], path, title: str) -> None:
    """Per-row final error (log scale), iterations and feasibility coefficient."""
    labels = [f"{r['preset']}\n{r['variant']}" if r.get("variant") else r["preset"] for r in rows]
    x = np.arange(len(rows))
    err = np.array([_num(r.get("error")) for r in rows])
    its = np.array([_num(r.get("iterations")) for r in rows])
    kap = np.array([_num(r.get("kappa")) for r in rows])
    ref = np.array([_num(r.get("reference_kappa")) for r in rows])
    fig, axes = plt.subplots(1, 3, figsize=(max(9.0, 0.6 * len(rows) + 6), 4))
    ok = np.isfinite(err) & (err > 0)
    axes[0].bar(x[ok], err[ok], color="#80b1d3")
    axes[0].set_yscale("log")
    axes[0].set_title("final error")
    axes[1].bar(x, np.nan_to_num(its), color="#fdb462")
    axes[1].set_title("Newton iterations")
    axes[2].plot(x, kap, "o", label="kappa")
    if np.any(np.isfinite(ref)):
        axes[2].plot(x, ref, "x", color="black", label="reference")
        axes[2].legend(fontsize=8)
    if np.all(kap[np.isfinite(kap)] > 0) and np.any(np.isfinite(kap)):
        axes[2].set_yscale("log")
    axes[2].set_title("feasibility coefficient")
    for ax in axes:
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
