"""Matplotlib figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analytic import Method  # noqa: E402

LABELS = {
    Method.EERS: "EERS",
    Method.VERIFY_MINDIST: "Verification (min. distance)",
    Method.VERIFY_PARITY: "Verification (parity)",
    Method.COMBINATION: "Combination",
}
STYLES = {
    Method.EERS: dict(color="k", ls="-"),
    Method.VERIFY_MINDIST: dict(color="C0", ls="--"),
    Method.VERIFY_PARITY: dict(color="C1", ls=":"),
    Method.COMBINATION: dict(color="C2", ls="-."),
}
AXIS_LABELS = {
    "delta": r"error rate $\delta$",
    "n": r"block size $N$",
    "epsilon": r"security parameter $\epsilon$",
    "sigma": r"block-rate spread $\sigma$",
}
COLUMN_LABELS = {
    "excess": r"excessive loss ratio $L^E$",
    "buffer": r"optimal buffer $\Delta$",
    "disclosed_fraction": r"$(S+V)/N$",
}

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.figsize": (4.2, 3.2),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}


def plot_sweep(rows: Sequence, path: str | Path, column: str = "excess", title: str | None = None) -> Path:
    """Line plot of ``column`` against the swept parameter, one line per method."""
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        vary = rows[0].vary if rows else "value"
        for method in dict.fromkeys(r.method for r in rows):
            pts = [(r.value, getattr(r, column)) for r in rows if r.method is method and not r.error]
            if not pts:
                continue
            x, y = zip(*pts)
            ax.plot(x, y, label=LABELS[method], **STYLES[method])
        if vary in ("n", "epsilon"):
            ax.set_xscale("log")
        ax.set_xlabel(AXIS_LABELS.get(vary, vary))
        ax.set_ylabel(COLUMN_LABELS.get(column, column))
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_trace(rates: Sequence[float], path: str | Path, buffer: float | None = None, title: str | None = None) -> Path:
    """Block error rate against block index, optionally with the
    previous-block-plus-buffer threshold a verification scheme would use."""
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6.0, 3.0))
        ax.plot(range(len(rates)), rates, color="k", lw=0.8, label="block error rate")
        if buffer is not None:
            ax.plot(
                range(1, len(rates)),
                [r + buffer for r in rates[:-1]],
                color="C3",
                lw=0.6,
                ls="--",
                label=rf"previous + $\Delta_V$ = {buffer:.3g}",
            )
            ax.legend(frameon=False)
        ax.set_xlabel("block")
        ax.set_ylabel(r"error rate $\delta_i$")
        if title:
            ax.set_title(title)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_crossover(points: Sequence[tuple[float, float]], path: str | Path) -> Path:
    """Spread at which verification and EERS tie, against block size."""
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        if points:
            x, y = zip(*points)
            ax.plot(x, y, color="k", marker="o", ms=3)
        ax.set_xscale("log")
        ax.set_xlabel(AXIS_LABELS["n"])
        ax.set_ylabel(r"equal-loss spread $\sigma$")
        fig.savefig(path)
        plt.close(fig)
    return path
