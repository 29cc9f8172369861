"""SVG plots of a trajectory CSV and its saved curves. Output is byte-stable."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import TRAJECTORY_COLUMNS  # noqa: E402
from .engine import read_trajectory_csv  # noqa: E402

_STYLE = {"svg.hashsalt": "curveflow", "svg.fonttype": "path", "path.simplify": False}
_SAVE = {"format": "svg", "metadata": {"Date": None, "Creator": None}}

_DECAY = ("E", "Kosc", "ks_l2sq", "kss_l2sq", "kinf")


def _curve_files(traj_path: Path):
    files = []
    snapdir = traj_path.parent / "snapshots"
    if snapdir.is_dir():
        files.extend(sorted(snapdir.glob("*.csv")))
    final = traj_path.parent / "final_curve.csv"
    if final.exists():
        files.append(final)
    return files


def _read_nodes(path: Path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1], data[:, 2]


def emit_plots(traj_file, output_dir) -> list:
    """Write ``diagnostics.svg``, ``decay.svg`` and, when curves were saved next to
    the trajectory, ``snapshots.svg``. Returns the written paths."""
    traj_file = Path(traj_file)
    cols = read_trajectory_csv(traj_file)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = cols["t"]
    written = []
    with plt.rc_context(_STYLE):
        names = [c for c in TRAJECTORY_COLUMNS if c != "t"]
        fig, axes = plt.subplots(4, 3, figsize=(12, 11), sharex=True)
        for ax, name in zip(axes.flat, names):
            ax.plot(t, cols[name], lw=1.2)
            ax.set_title(name)
            ax.grid(True, alpha=0.3)
        for ax in axes.flat[len(names):]:
            ax.set_visible(False)
        for ax in axes[-1]:
            ax.set_xlabel("t")
        fig.tight_layout()
        path = out / "diagnostics.svg"
        fig.savefig(path, **_SAVE)
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(7, 5))
        for name in _DECAY:
            y = cols[name]
            mask = y > 0
            if mask.any():
                ax.semilogy(t[mask], y[mask], label=name, lw=1.2)
        ax.set_xlabel("t")
        ax.set_title("decay (log scale)")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = out / "decay.svg"
        fig.savefig(path, **_SAVE)
        plt.close(fig)
        written.append(path)

        curves = _curve_files(traj_file)
        if curves:
            fig, ax = plt.subplots(figsize=(7, 6))
            for f in curves:
                x, y = _read_nodes(f)
                ax.plot(x, y, lw=1.0, label=f.stem)
            ax.set_aspect("equal", adjustable="datalim")
            ax.grid(True, alpha=0.3)
            if len(curves) <= 12:
                ax.legend(fontsize=7)
            ax.set_title("curves")
            fig.tight_layout()
            path = out / "snapshots.svg"
            fig.savefig(path, **_SAVE)
            plt.close(fig)
            written.append(path)
    return written
