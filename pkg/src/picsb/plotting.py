"""Heatmap emission for fields and side-by-side comparison panels."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .fields import Field


def _frame_of(field: Field, frame: int | None) -> np.ndarray:
    arr = field.values
    if arr.ndim == 3:
        if frame is None:
            frame = 0
        if not (0 <= frame < arr.shape[0]):
            raise ValueError(f"frame index {frame} out of range [0, {arr.shape[0]})")
        return arr[frame]
    if frame is not None and frame != 0:
        raise ValueError(f"frame index {frame} out of range for a 2D field")
    return arr


def _color_range(arr: np.ndarray, symmetric: bool) -> tuple[float, float]:
    if symmetric:
        m = float(np.abs(arr).max()) or 1.0
        return -m, m
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5  # uniform color for constant fields
    return lo, hi


def plot_field(
    field: Field,
    out_png: str | Path,
    frame: int | None = None,
    symmetric: bool = False,
    cmap: str = "RdBu_r",
) -> Path:
    """Write a PNG heatmap whose pixel dims equal the grid dims.

    Vorticity-style fields should pass symmetric=True so the color range
    is centered around zero.
    """
    arr = _frame_of(field, frame)
    lo, hi = _color_range(arr, symmetric)
    out_png = Path(out_png)
    plt.imsave(out_png, arr, vmin=lo, vmax=hi, cmap=cmap, origin="lower")
    return out_png


def plot_comparison(
    fields: dict[str, Field],
    out_png: str | Path,
    frame: int | None = None,
    symmetric: bool = False,
    cmap: str = "RdBu_r",
) -> Path:
    """Side-by-side panels (e.g. lf / obs / pred / ref) sharing one color range."""
    arrs = {k: _frame_of(f, frame) for k, f in fields.items()}
    stacked = np.concatenate([a.ravel() for a in arrs.values()])
    lo, hi = _color_range(stacked, symmetric)
    fig, axes = plt.subplots(1, len(arrs), figsize=(3 * len(arrs), 3))
    if len(arrs) == 1:
        axes = [axes]
    for ax, (label, a) in zip(axes, arrs.items()):
        im = ax.imshow(a, vmin=lo, vmax=hi, cmap=cmap, origin="lower")
        ax.set_title(label, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes, fraction=0.03)
    out_png = Path(out_png)
    fig.savefig(out_png, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out_png
