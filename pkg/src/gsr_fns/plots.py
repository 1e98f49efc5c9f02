"""Optional SVG renderings of the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed salt and no date so reruns give identical SVG bytes
matplotlib.rcParams["svg.hashsalt"] = "gsr-fns"
_META = {"Date": None, "Creator": "gsr-fns"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def mean_curve_svg(curve, path):
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(5, 6), sharex=True)
    top.plot(curve.a_values, curve.mean_b, lw=1.2)
    top.plot(curve.a_values, curve.a_values, "k--", lw=0.8)
    top.set_ylabel("mean B [px]")
    bottom.plot(curve.a_values, curve.mean_b_over_a, lw=1.2)
    bottom.set_ylabel("mean B / A")
    bottom.set_xlabel("A [px]")
    _save(fig, path)


def likelihood_svg(table, path, max_b=6):
    fig, ax = plt.subplots(figsize=(6, 4))
    for b in range(min(max_b, table.max_b) + 1):
        ax.plot(table.a_grid, table.column(b), lw=1, label=f"B = {b}")
    ax.set_xlabel("A [px]")
    ax.set_ylabel("L(A | B)")
    ax.legend(fontsize=7)
    _save(fig, path)


def fit_svg(summary, pixel_area, path):
    edges = summary.bin_edges * pixel_area
    centers = np.sqrt(edges[:-1] * edges[1:])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(centers, summary.observed, where="mid", label="observed")
    ax.plot(centers, summary.predicted, "o-", ms=3, label="posterior mean")
    ax.set_xscale("log")
    ax.set_xlabel("B [um^2]")
    ax.set_ylabel("particles per bin")
    ax.set_title(
        f"mu={summary.mean['mu']:.2f}  sigma={summary.mean['sigma']:.2f}  "
        f"nu={summary.mean['nu']:.0f}  R2={summary.r_squared:.3f}",
        fontsize=9,
    )
    ax.legend()
    _save(fig, path)


def fns_svg(curve, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(curve.px_values, curve.lower, curve.upper, alpha=0.3, lw=0)
    ax.plot(curve.px_values, curve.p_fns, lw=1.5)
    ax.set_xlabel("pixel area [um^2]")
    ax.set_ylabel("P(FNS)")
    _save(fig, path)


def validation_svg(result, path):
    edges = result.bin_edges * result.px_target
    width = np.diff(edges)
    fig, ax = plt.subplots(figsize=(6, 4))
    pred = result.predicted / max(result.predicted.sum(), 1) / width
    ax.step(edges[:-1], pred, where="post", label="predicted")
    if result.observed is not None:
        obs = result.observed / max(result.observed.sum(), 1) / width
        ax.step(edges[:-1], obs, where="post", label="observed")
    ax.set_xscale("log")
    ax.set_xlabel("B [um^2]")
    ax.set_ylabel("relative frequency density")
    ax.set_title(f"px = {result.px_target} um^2", fontsize=9)
    ax.legend()
    _save(fig, path)
