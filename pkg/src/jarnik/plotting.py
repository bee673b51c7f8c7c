"""Plot-ready column files and optional PNG rendering."""
from __future__ import annotations

import math
import os


def write_dat(path: str, series: list, header: str, config_hash: str) -> str:
    """Whitespace-separated ``x y`` columns readable by gnuplot.

    An empty series still gets its header lines.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash: {config_hash}\n")
        fh.write(f"# {header}\n")
        for x, y in series:
            fh.write(f"{_fmt(x)} {_fmt(y)}\n")
    return path


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def render_png(path: str, plots: dict, title: str) -> str:
    """Line plot of every series; PNG metadata is stripped for reproducibility."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    for name, (series, header) in sorted(plots.items()):
        if series:
            xs, ys = zip(*series)
            ax.plot(xs, ys, marker="o", ms=3, lw=1, label=name)
    ax.set_title(title)
    if 0 < len(plots) <= 12:
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def series_path(out_dir: str, stem: str, name: str) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)
    return os.path.join(out_dir, f"{stem}_{safe}.dat")
