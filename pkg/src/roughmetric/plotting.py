"""Deterministic SVG plot emission for experiment reports."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .grid import GridError

__all__ = ["PlotSeries", "PlotError", "emit_plot"]

# Fixed hash salt + suppressed Date metadata make the SVG byte-stable across
# runs and hosts; glyphs are emitted as paths so fonts do not leak in.
_RC = {"svg.hashsalt": "roughmetric", "svg.fonttype": "path"}


class PlotError(GridError):
    """Raised for malformed plot requests."""


@dataclass(frozen=True)
class PlotSeries:
    """One labelled line: paired x/y samples in plot order."""

    label: str
    x: tuple[float, ...]
    y: tuple[float, ...]


def emit_plot(
    series: Sequence[PlotSeries],
    path: str | os.PathLike[str],
    *,
    title: str | None = None,
    xlabel: str | None = None,
    ylabel: str | None = None,
    logx: bool = False,
    logy: bool = False,
) -> None:
    """Render line series to an SVG file with byte-stable output.

    Every series needs at least one point; x/y lengths must agree and all
    values must be finite.
    """
    if len(series) == 0:
        raise PlotError("at least one series is required")
    for s in series:
        if len(s.x) != len(s.y):
            raise PlotError(f"series {s.label!r}: x/y length mismatch")
        if len(s.x) == 0:
            raise PlotError(f"series {s.label!r} is empty")
        if not (np.all(np.isfinite(s.x)) and np.all(np.isfinite(s.y))):
            raise PlotError(f"series {s.label!r} contains non-finite values")

    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.4, 4.4))
        ax = fig.add_subplot(111)
        for s in series:
            ax.plot(s.x, s.y, marker="o", markersize=4, linewidth=1.2, label=s.label)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        if xlabel:
            ax.set_xlabel(xlabel)
        if ylabel:
            ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        if len(series) > 1 or series[0].label:
            ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(os.fspath(path), format="svg", metadata={"Date": None})
