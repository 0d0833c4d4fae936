"""
Generates SVG figures from the tables in a ResultStore.

Every plot reads one table; a missing table is skipped with a note. The
Agg backend, a fixed svg.hashsalt and an empty Date make re-runs on the
same store byte-identical.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from results import ResultStore  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "phase-lab"
plt.rcParams["svg.fonttype"] = "none"

Rows = List[Dict[str, Any]]


def _column(rows: Rows, key: str) -> List[float]:
    return [float(r[key]) for r in rows if r.get(key) is not None]


def _group(rows: Rows, key: str) -> Dict[Any, Rows]:
    groups: Dict[Any, Rows] = defaultdict(list)
    for r in rows:
        groups[r[key]].append(r)
    return dict(groups)


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"[Saved] plot {path.name}")
    return path


def plot_profile(rows: Rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(_column(rows, "t"), _column(rows, "z"), linewidth=2.0, label="profile z")
    if any(r.get("tanh") is not None for r in rows):
        ax.plot(_column(rows, "t"), _column(rows, "tanh"), linestyle="--", color="#555555",
                label="tanh reference")
    ax.set_xlabel("t")
    ax.set_ylabel("z(t)")
    ax.grid(True, alpha=0.25)
    ax.legend()
    return _save(fig, path)


def plot_iso(rows: Rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    vols = _column(rows, "vol")
    ax.plot(vols, _column(rows, "value"), linewidth=2.2, color="#1f77b4", label="I(v)")
    for key in ("quarter_disk", "strip", "co_quarter_disk"):
        pts = [(float(r["vol"]), float(r[key])) for r in rows
               if r.get(key) is not None and float(r[key]) != float("inf")]
        if pts:
            ax.plot(*zip(*pts), linestyle=":", linewidth=1.2, label=key.replace("_", " "))
    ax.set_xlabel("volume fraction v")
    ax.set_ylabel("relative perimeter")
    ax.grid(True, alpha=0.25)
    ax.legend(fontsize=9)
    return _save(fig, path)


def plot_touching(rows: Rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(_column(rows, "v"), _column(rows, "touching"), linewidth=2.0, label="touching function")
    ref = [(float(r["v"]), float(r["reference"])) for r in rows if r.get("reference") is not None]
    if ref:
        ax.plot(*zip(*ref), linestyle="--", color="#555555", label="reference profile")
    ax.set_xlabel("v")
    ax.set_ylabel("perimeter")
    ax.grid(True, alpha=0.25)
    ax.legend()
    return _save(fig, path)


def plot_snapshots(rows: Rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for eps, group in sorted(_group(rows, "eps").items(), reverse=True):
        ax.plot(_column(group, "t"), _column(group, "v"), linewidth=1.4, label=f"eps={eps:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("v_eps")
    ax.grid(True, alpha=0.25)
    ax.legend(fontsize=9)
    return _save(fig, path)


def plot_gap(rows: Rows, path: Path) -> Path:
    """Gap markers against eps with the predicted limit as a horizontal line."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(_column(rows, "eps"), _column(rows, "gap"), linestyle="none", marker="o",
            color="#1f77b4", label="(G_eps - G_0) / eps^2")
    rhs = _column(rows, "rhs")
    if rhs:
        ax.axhline(rhs[0], linestyle="--", color="#d62728", linewidth=1.2, label="predicted limit")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("eps")
    ax.set_ylabel("second-order gap")
    ax.grid(True, alpha=0.25)
    ax.legend()
    return _save(fig, path)


def plot_drift(rows: Rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for eps, group in sorted(_group(rows, "eps").items(), reverse=True):
        ax.plot(_column(group, "t"), _column(group, "l1"), linewidth=1.4, label=f"eps={eps:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("L1 distance to initial set")
    ax.grid(True, alpha=0.25)
    ax.legend(fontsize=9)
    return _save(fig, path)


# table name -> (svg name, renderer)
PLOTS: Dict[str, Tuple[str, Callable[[Rows, Path], Path]]] = {
    "profile": ("profile", plot_profile),
    "iso_profile": ("iso_profile", plot_iso),
    "touching": ("touching", plot_touching),
    "snapshots": ("snapshots", plot_snapshots),
    "gap_ladder": ("gap_vs_eps", plot_gap),
    "drift": ("drift_vs_t", plot_drift),
}


def emit_plots(store: ResultStore) -> List[Path]:
    """Render every plot whose table exists; note and skip the rest."""
    written: List[Path] = []
    skipped: List[str] = []
    for table, (name, render) in PLOTS.items():
        if not store.has_table(table):
            logger.info(f"[Skipped] plot {name}: no '{table}' table")
            skipped.append(table)
            continue
        rows = store.read_table(table)
        if not rows:
            logger.info(f"[Skipped] plot {name}: '{table}' is empty")
            skipped.append(table)
            continue
        written.append(render(rows, store.svg_path(name)))
    if not written:
        logger.info(f"[Skipped] no plots written for {store.root}")
    store.save_record("plots", {"written": [p.name for p in written], "skipped": skipped})
    return written
