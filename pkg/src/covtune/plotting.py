"""Line-chart emitter for suite summaries (SVG via matplotlib)."""

from __future__ import annotations

import csv
from collections import defaultdict

__all__ = ["plot_summary_csv"]


def plot_summary_csv(summary_csv: str, out_path: str, title: str = ""):
    """Render median best-so-far per method with an interquartile band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = defaultdict(lambda: {"t": [], "median": [], "q25": [], "q75": []})
    with open(summary_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            s = series[row["method"]]
            s["t"].append(int(row["t"]))
            s["median"].append(float(row["median"]))
            s["q25"].append(float(row["q25"]))
            s["q75"].append(float(row["q75"]))
    if not series:
        raise ValueError(f"{summary_csv}: no rows to plot")
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name in sorted(series):
        s = series[name]
        (line,) = ax.plot(s["t"], s["median"], label=name, linewidth=1.6)
        ax.fill_between(s["t"], s["q25"], s["q75"], alpha=0.15,
                        color=line.get_color(), linewidth=0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("best objective so far")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path
