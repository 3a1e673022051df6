"""Deterministic SVG ellipse rendering of tensor fields and plain PGM
output for scalar grids.

Each atom draws as an ellipse centered at its point: semi-axes
proportional to the tensor's eigenvalues, axes along its eigenvectors.
3x3 tensors are projected onto their XY block (noted in the output);
1x1 tensors draw as circles.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .measure import TensorMeasure
from .sym import eig_sym

__all__ = ["render_field_svg", "write_pgm"]

_CANVAS = 640.0
_STYLE = 'fill="#4878a8" fill-opacity="0.55" stroke="#1f3350"'


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def render_field_svg(field: TensorMeasure, scale: float = 0.05,
                     subsample: int = 1) -> str:
    """Render a tensor field to an SVG document string.

    ``scale`` converts eigenvalues to semi-axis lengths in data units;
    ``subsample`` keeps every K-th atom.  Output bytes are a deterministic
    function of the inputs.  Tensor dimensions above 3 are rejected.
    """
    if scale <= 0.0:
        raise ValueError("scale must be > 0")
    if subsample < 1:
        raise ValueError("subsample must be >= 1")
    d = field.tensor_dim if field.n_atoms else 0
    if d > 3:
        raise ValueError(f"cannot render {d}x{d} tensors (d <= 3 only)")

    note = ""
    points = field.points[::subsample]
    tensors = field.tensors[::subsample]
    if field.n_atoms and field.ambient_dim < 2:
        points = np.concatenate(
            [points, np.zeros((len(points), 2 - field.ambient_dim))], axis=1
        )
    if d == 3:
        tensors = tensors[:, :2, :2]
        note = "3x3 tensors projected onto their XY block"
    elif d == 1:
        tensors = tensors[:, [0, 0]][:, :, [0, 0]] * np.array(
            [[1.0, 0.0], [0.0, 1.0]]
        )

    if len(points):
        vals, vecs = eig_sym(tensors)
        radii = scale * np.maximum(vals, 0.0)
        angles = np.degrees(np.arctan2(vecs[:, 1, 0], vecs[:, 0, 0]))
        xy = points[:, :2]
        pad = float(radii.max(initial=0.0)) + 0.05
        lo = xy.min(axis=0) - pad
        hi = xy.max(axis=0) + pad
    else:
        radii = np.empty((0, 2))
        angles = np.empty(0)
        xy = np.empty((0, 2))
        lo = np.array([0.0, 0.0])
        hi = np.array([1.0, 1.0])

    span = np.maximum(hi - lo, 1e-9)
    unit = _CANVAS / float(span.max())
    width = float(span[0]) * unit
    height = float(span[1]) * unit

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
    ]
    if note:
        lines.append(f"<desc>{note}</desc>")
    stroke_width = max(0.002 * unit * scale / 0.05, 0.2)
    for k in range(len(xy)):
        cx = (xy[k, 0] - lo[0]) * unit
        cy = (hi[1] - xy[k, 1]) * unit
        rx = max(radii[k, 0] * unit, 1e-6)
        ry = max(radii[k, 1] * unit, 1e-6)
        rot = -angles[k]
        lines.append(
            f'<ellipse cx="{_fmt(cx)}" cy="{_fmt(cy)}" rx="{_fmt(rx)}" '
            f'ry="{_fmt(ry)}" transform="rotate({_fmt(rot)} {_fmt(cx)} '
            f'{_fmt(cy)})" {_STYLE} stroke-width="{_fmt(stroke_width)}"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_pgm(path, grid: np.ndarray) -> None:
    """Write a scalar grid as a plain (ASCII) portable graymap, linearly
    rescaled to 0..255 (a constant grid maps to 0)."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ValueError(f"grid must be 2-D, got shape {grid.shape}")
    lo = float(grid.min())
    hi = float(grid.max())
    if hi > lo:
        levels = np.rint((grid - lo) / (hi - lo) * 255.0).astype(int)
    else:
        levels = np.zeros(grid.shape, dtype=int)
    h, w = grid.shape
    rows = [" ".join(str(v) for v in row) for row in levels]
    Path(path).write_text(f"P2\n{w} {h}\n255\n" + "\n".join(rows) + "\n")
