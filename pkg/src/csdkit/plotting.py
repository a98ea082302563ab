"""Figure rendering for the CLI report path.

Figures are written next to the delimited data files.  PNG metadata is
stripped so repeated runs produce byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_curves", "render_positions", "render_fit"]

_PNG_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    return fig, ax


def render_curves(named_curves: list[tuple[str, object]], path, title: str = "CSD-1") -> None:
    """Overlay CSD-1 style curves (rank fraction vs score)."""
    fig, ax = _new_axes(title, "normalized block rank", "mover score")
    for label, curve in named_curves:
        ax.plot(curve.xs, curve.ys, label=label, linewidth=1.4)
    if named_curves:
        ax.legend(fontsize=8)
    fig.savefig(str(path), **_PNG_KWARGS)
    plt.close(fig)


def render_positions(named_curves: list[tuple[str, object]], path, title: str = "CSD-2") -> None:
    """Stem-style per-position significance plots."""
    fig, ax = _new_axes(title, "normalized sentence position", "mover score")
    for label, curve in named_curves:
        xs = curve.xs
        vals = np.asarray(curve.values)
        ax.vlines(xs, 0.0, vals, alpha=0.35)
        ax.plot(xs, vals, "o", markersize=2.5, label=label)
    if named_curves:
        ax.legend(fontsize=8)
    fig.savefig(str(path), **_PNG_KWARGS)
    plt.close(fig)


def render_fit(curve, params, path, title: str = "beta-CCDF fit") -> None:
    """Curve together with its fitted transformed beta CCDF."""
    from .betafit import lc_transform

    fig, ax = _new_axes(title, "normalized block rank", "mover score")
    ax.plot(curve.xs, curve.ys, label="curve", linewidth=1.4)
    grid = np.linspace(0.0, 1.0, 201)
    fit = [lc_transform(float(x), params) for x in grid]
    ax.plot(
        grid,
        fit,
        "--",
        label=(
            f"lc(a={params.a:.3f}, b={params.b:.3f} | "
            f"alpha={params.alpha:.3f}, beta={params.beta:.3f})"
        ),
        linewidth=1.4,
    )
    ax.legend(fontsize=8)
    fig.savefig(str(path), **_PNG_KWARGS)
    plt.close(fig)
