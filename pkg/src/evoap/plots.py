"""Static figures for run and comparison reports (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .solution import ClusteringSolution  # noqa: E402

PathLike = Union[str, Path]


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_rand_series(series: Mapping[str, np.ndarray], path: PathLike, title: str = "") -> Path:
    """One line per algorithm: Rand index against 1-based time."""
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for name, values in series.items():
        values = np.asarray(values, dtype=float)
        ax.plot(np.arange(1, values.size + 1), values, marker="o", ms=3, label=name)
    ax.set_xlabel("time step")
    ax.set_ylabel("Rand index")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_cluster_counts(solutions: Mapping[str, ClusteringSolution], path: PathLike, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for name, sol in solutions.items():
        counts = [len(sol.exemplars_at(t)) for t in range(sol.T)]
        ax.step(np.arange(1, sol.T + 1), counts, where="mid", label=name)
    ax.set_xlabel("time step")
    ax.set_ylabel("clusters")
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_tracks(sol: ClusteringSolution, path: PathLike, title: str = "") -> Path:
    """Lifespan of every track as a horizontal bar, thickness scaled by the
    track's mean size."""
    sizes = {tr.id: [] for tr in sol.tracks}
    for t in range(sol.T):
        ids, counts = np.unique([x for x in sol.track[t] if x is not None], return_counts=True)
        for i, c in zip(ids, counts):
            sizes[str(i)].append(c)
    fig, ax = plt.subplots(figsize=(7, 0.5 + 0.3 * max(len(sol.tracks), 1)))
    biggest = max((max(v) for v in sizes.values() if v), default=1)
    for row, tr in enumerate(sol.tracks):
        end = (tr.death if tr.death is not None else sol.T + 1) - 0.5
        width = 0.2 + 0.6 * (np.mean(sizes[tr.id]) / biggest if sizes[tr.id] else 0)
        color = "tab:blue" if tr.kind == "consensus" else "tab:gray"
        ax.barh(row, end - (tr.birth - 0.5), left=tr.birth - 0.5, height=width, color=color)
    ax.set_yticks(range(len(sol.tracks)))
    ax.set_yticklabels([tr.id for tr in sol.tracks], fontsize=7)
    ax.invert_yaxis()
    ax.set_xlim(0.5, sol.T + 0.5)
    ax.set_xlabel("time step")
    ax.set_title(title or f"{sol.algorithm}: {len(sol.tracks)} tracks")
    return _save(fig, path)
