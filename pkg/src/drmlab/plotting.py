"""Figures for chooser comparison reports."""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .verifier import Report  # noqa: E402

CHOOSER_COLORS = {"oma": "#b2182b", "labeled": "#2166ac"}

_STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 9,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "drmlab",
}


def plot_report(report: Report, path) -> Path:
    """Write a two-panel summary of ``report`` to ``path`` (format from suffix).

    Left: instances violating each property, per chooser. Right: how many
    rights the liveness counterexample strands, per chooser.
    """
    path = Path(path)
    choosers = [report.baseline, report.labeled]
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))

        props = ["safety", "liveness"]
        width = 0.38
        for k, chooser in enumerate(choosers):
            counts = [
                sum(1 for r in report.rows if r.chooser == chooser and getattr(r, p) is False) for p in props
            ]
            xs = [i + (k - 0.5) * width for i in range(len(props))]
            bars = ax1.bar(xs, counts, width, label=chooser, color=CHOOSER_COLORS.get(chooser))
            ax1.bar_label(bars, padding=2)
        ax1.set_xticks(range(len(props)), props)
        ax1.set_ylabel("violating instances")
        ax1.set_title(f"{len({r.instance for r in report.rows})} instances")
        ax1.legend(frameon=False)

        lost = {c: Counter(r.lost for r in report.rows if r.chooser == c and r.liveness is False) for c in choosers}
        sizes = sorted({n for c in lost.values() for n in c}) or [1]
        for k, chooser in enumerate(choosers):
            xs = [i + (k - 0.5) * width for i in range(len(sizes))]
            ax2.bar(xs, [lost[chooser].get(n, 0) for n in sizes], width, label=chooser,
                    color=CHOOSER_COLORS.get(chooser))
        ax2.set_xticks(range(len(sizes)), [str(n) for n in sizes])
        ax2.set_xlabel("rights lost in counterexample")
        ax2.set_ylabel("instances")

        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=120, metadata={"Software": None} if path.suffix == ".png" else None)
        plt.close(fig)
    return path
