"""Figure rendering for the command-line report paths.

Everything draws through the Agg backend into PNG files, with fixed
sizes and no timestamps, so repeated runs produce identical bytes.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy import special  # noqa: E402

from blindid.codebook import WeightSpectrum  # noqa: E402

_LN2 = math.log(2.0)


def save_figure(fig, path: str | Path) -> None:
    fig.savefig(Path(path), dpi=120, format="png")
    plt.close(fig)


def spectrum_figure(spectrum: WeightSpectrum):
    """Level counts and their upper cumulative, both on a log2 scale."""
    levels = spectrum.levels
    log2_a = spectrum.log2_counts
    # suffix logsumexp keeps N_d finite at block lengths where 4^n overflows
    log2_n = np.array(
        [
            special.logsumexp(log2_a[i:] * _LN2) / _LN2
            for i in range(len(levels))
        ]
    )
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(levels, log2_a, lw=1.0, label="log2 A_d")
    ax.plot(levels, log2_n, lw=1.0, ls="--", label="log2 N_d")
    ax.set_xlabel("pair level d")
    ax.set_ylabel("log2 count")
    ax.set_title(f"QPSK pair level spectrum, n={spectrum.n}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def bounds_figure(rows):
    """Rate curves per block length from (n, metric, d, value) rows."""
    by_n: dict[int, dict] = {}
    for n, metric, d, value in rows:
        entry = by_n.setdefault(n, {"curve": [], "gv": None, "approx": None})
        if metric == "lambda2_at_level":
            entry["curve"].append((d / (n * n), value))
        elif metric == "lambda2_gv":
            entry["gv"] = (d / (n * n), value)
        elif metric == "lambda2_approx":
            entry["approx"] = value
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, (n, entry) in enumerate(sorted(by_n.items())):
        color = f"C{i % 10}"
        if entry["curve"]:
            xs, ys = zip(*sorted(entry["curve"]))
            ax.semilogy(xs, ys, color=color, lw=1.2, label=f"n={n}")
        if entry["gv"] is not None:
            ax.semilogy(*entry["gv"], color=color, marker="o", ms=5)
        if entry["approx"] is not None:
            ax.axhline(entry["approx"], color=color, lw=0.8, ls=":")
    ax.set_xlabel("normalized pair level d / n^2")
    ax.set_ylabel("false activation rate")
    ax.set_title("type-II rate vs pair overlap")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def rates_figure(rows, x_key: str):
    """Error-bar chart from simulate rows grouped by metric.

    ``rows`` holds (x_value, metric, estimate, ci_low, ci_high); the
    x axis is the sweep variable named by ``x_key``.
    """
    by_metric: dict[str, list] = {}
    for x, metric, est, lo, hi in rows:
        by_metric.setdefault(metric, []).append((x, est, lo, hi))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    floor = 1e-12
    for metric, pts in by_metric.items():
        pts.sort()
        xs = [p[0] for p in pts]
        ys = [max(p[1], floor) for p in pts]
        lo = [max(p[1] - p[2], 0.0) for p in pts]
        hi = [max(p[3] - p[1], 0.0) for p in pts]
        ax.errorbar(xs, ys, yerr=[lo, hi], marker="o", ms=4, lw=1.0,
                    capsize=3, label=metric)
    ax.set_yscale("log")
    ax.set_xlabel(x_key)
    ax.set_ylabel("rate")
    ax.set_title("empirical error rates")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def pat_figure(rows):
    """Overall miss rate vs its target from (lambda1, bound, est, lo, hi)."""
    rows = sorted(rows)
    lams = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    floor = 1e-12
    ax.loglog(lams, lams, ls=":", color="gray", lw=1.0, label="target")
    ax.loglog(lams, [max(r[1], floor) for r in rows], marker="s", ms=4,
              lw=1.0, label="analytic bound")
    est = [max(r[2], floor) for r in rows]
    lo = [max(r[2] - r[3], 0.0) for r in rows]
    hi = [max(r[4] - r[2], 0.0) for r in rows]
    ax.errorbar(lams, est, yerr=[lo, hi], marker="o", ms=4, lw=1.0,
                capsize=3, label="empirical")
    ax.set_xlabel("type-I target lambda1")
    ax.set_ylabel("overall miss rate")
    ax.set_title("pilot identification miss rate")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig
