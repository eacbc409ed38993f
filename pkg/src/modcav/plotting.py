"""Minimal matplotlib rendering for the reproduction presets.

Every figure is a plain line chart written as SVG next to its CSV.  The
SVG output is made byte-deterministic: the hash salt is pinned and the
creation date stripped, so re-running a preset reproduces identical files.
The CSV files are the actual data contract; these plots are a convenience.
"""

import matplotlib
matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "modcav"

import matplotlib.pyplot as plt
import numpy as np


def line_plot(path, x, series, xlabel="", ylabel="", title=None, logy=False,
              styles=None):
    """Write one SVG line chart.

    series: mapping legend label -> y array (aligned with x), or
    label -> (x_own, y) for curves on their own abscissa.
    styles: optional mapping label -> dict of Line2D kwargs.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, data in series.items():
        if isinstance(data, tuple):
            xs, ys = data
        else:
            xs, ys = x, data
        kw = dict(styles.get(label, {})) if styles else {}
        kw.setdefault("lw", 1.2)
        ax.plot(xs, ys, label=label, **kw)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(loc="best", fontsize=8, framealpha=0.8)
    ax.grid(alpha=0.25, lw=0.5)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
