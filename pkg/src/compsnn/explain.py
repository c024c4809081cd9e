"""Where in space the CNN looks: activation maps and their SVG rendering.

The attention-gated CNN is shallow enough to read directly: per time step the
attention weight a_t, any feature activation f_{c,t}, or the gated product
a_t * f_{c,t} is a number in [0, 1] attached to the sample's map position.
Maps render as scatter SVGs where dot size encodes the activation and dot
opacity falls with local point density, plus a CSV twin for machine checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityGrid
from .errors import ChannelOutOfRange, EmptyMap, UnknownKind
from .model import _cnn_forward, _feature_matrix

KINDS = ("attention", "feature", "a_x_f")


@dataclass(frozen=True)
class ActivationMap:
    """One value in [0, 1] per trajectory sample, tagged with its source."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    channel: str  # "attention", "feature03", "a_x_f03", ...

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SvgStyle:
    width: float = 800.0
    r_min: float = 1.5
    r_max: float = 9.0
    opacity_min: float = 0.15
    fill: str = "#1f77b4"


def cnn_activations(params, features) -> tuple[np.ndarray, np.ndarray]:
    """(attention (N,), feature activations (C, N)) of the CNN module."""
    _, cache = _cnn_forward(_feature_matrix(features), params)
    _, _, f, _, a, _, _ = cache
    return a, f


def export_activation_map(params, features, raw, kind: str, channel: int | None = None) -> ActivationMap:
    """Per-sample activation values at the trajectory's map positions.

    `features` is the exact matrix the model consumes (normalized the same
    way); `raw` supplies the plotting coordinates. Kinds: "attention",
    "feature" (needs a channel), "a_x_f" (attention-gated feature).
    """
    if kind not in KINDS:
        raise UnknownKind(f"activation kind {kind!r}")
    a, f = cnn_activations(params, features)
    if kind == "attention":
        values, tag = a, "attention"
    else:
        if channel is None or not (0 <= channel < f.shape[0]):
            raise ChannelOutOfRange(f"channel {channel} outside [0, {f.shape[0]})")
        if kind == "feature":
            values, tag = f[channel], f"feature{channel:02d}"
        else:
            values, tag = a * f[channel], f"a_x_f{channel:02d}"
    if len(values) != raw.n:
        raise ChannelOutOfRange(f"features of {len(values)} steps vs trajectory of {raw.n}")
    return ActivationMap(raw.x.copy(), raw.y.copy(), np.asarray(values, dtype=np.float64), tag)


def _point_opacities(amap: ActivationMap, grid: DensityGrid, opacity_min: float) -> np.ndarray:
    """Opacity inversely proportional to the number of map points sharing a
    grid cell, rescaled into [opacity_min, 1]."""
    rows, cols = grid.shape
    r = np.clip(((amap.ys - grid.y_min) / grid.cell_size).astype(np.int64), 0, rows - 1)
    c = np.clip(((amap.xs - grid.x_min) / grid.cell_size).astype(np.int64), 0, cols - 1)
    flat = r * cols + c
    counts = np.bincount(flat, minlength=rows * cols)[flat].astype(np.float64)
    inv = 1.0 / counts
    lo, hi = inv.min(), inv.max()
    if hi == lo:
        return np.ones(amap.n)
    return opacity_min + (1.0 - opacity_min) * (inv - lo) / (hi - lo)


def render_svg(amap: ActivationMap, grid: DensityGrid, style: SvgStyle = SvgStyle()) -> str:
    """Deterministic scatter SVG: radius encodes the activation value,
    opacity the inverse local point density. Numbers use 6 significant
    digits and points keep their input order."""
    if amap.n == 0:
        raise EmptyMap("activation map has no points")
    x_min, x_max, y_min, y_max = grid.bounds
    scale = style.width / (x_max - x_min)
    height = (y_max - y_min) * scale
    opacities = _point_opacities(amap, grid, style.opacity_min)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{style.width:.6g}" '
        f'height="{height:.6g}" viewBox="0 0 {style.width:.6g} {height:.6g}">\n'
        f'<rect width="{style.width:.6g}" height="{height:.6g}" fill="#ffffff"/>\n'
        f"<!-- channel: {amap.channel} -->\n"
    ]
    for i in range(amap.n):
        px = (amap.xs[i] - x_min) * scale
        py = (y_max - amap.ys[i]) * scale
        radius = style.r_min + amap.values[i] * (style.r_max - style.r_min)
        parts.append(
            f'<circle cx="{px:.6g}" cy="{py:.6g}" r="{radius:.6g}" '
            f'fill="{style.fill}" fill-opacity="{opacities[i]:.6g}"/>\n'
        )
    parts.append("</svg>\n")
    return "".join(parts)


def write_activation_csv(path, amap: ActivationMap) -> None:
    """Machine-checkable twin of the SVG: x,y,value rows in point order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,y,value\n")
        for i in range(amap.n):
            fh.write(f"{float(amap.xs[i])!r},{float(amap.ys[i])!r},{float(amap.values[i])!r}\n")
