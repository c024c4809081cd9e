"""Occupancy grids and watershed segmentation of the navigated environment.

The visited area of a level is rasterized into a count grid, seeds are placed
on the local maxima of the counts, and a priority-flood watershed over the
inverted density 1/(counts+1) grows one region per seed. Heavily visited
areas therefore merge into few large regions while rarely visited areas stay
finely divided. Cells never visited are excluded from segmentation.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import AllZero, EmptyInput, SeedOutsideMask

UNASSIGNED = -1

_NEIGHBORS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class DensityGrid:
    """Visit counts on a regular grid padded one cell beyond the data."""

    x_min: float
    y_min: float
    cell_size: float
    counts: np.ndarray  # (rows, cols) int64

    @property
    def shape(self):
        return self.counts.shape

    @property
    def bounds(self):
        rows, cols = self.counts.shape
        return (
            self.x_min,
            self.x_min + cols * self.cell_size,
            self.y_min,
            self.y_min + rows * self.cell_size,
        )

    def contains(self, x: float, y: float) -> bool:
        x_min, x_max, y_min, y_max = self.bounds
        return x_min <= x < x_max and y_min <= y < y_max

    def cell_of(self, x: float, y: float):
        row = int(math.floor((y - self.y_min) / self.cell_size))
        col = int(math.floor((x - self.x_min) / self.cell_size))
        return row, col

    def cell_center(self, row: int, col: int):
        return (
            self.x_min + (col + 0.5) * self.cell_size,
            self.y_min + (row + 0.5) * self.cell_size,
        )


@dataclass(frozen=True)
class SegmentLabels:
    """Per-cell node ids (UNASSIGNED on zero-density cells) plus the seeds."""

    labels: np.ndarray  # (rows, cols) int64
    seeds: tuple  # ((row, col), ...) in id order

    @property
    def node_count(self) -> int:
        return len(self.seeds)


def auto_cell_size(trajs, target: int = 100) -> float:
    """Cell size making the data bounding box roughly `target` cells wide."""
    xs = np.concatenate([t.x for t in trajs])
    ys = np.concatenate([t.y for t in trajs])
    extent = max(xs.max() - xs.min(), ys.max() - ys.min())
    return extent / target if extent > 0 else 1.0


def build_density_grid(trajs, cell_size: float) -> DensityGrid:
    """Count trajectory samples per cell over the padded bounding box."""
    trajs = list(trajs)
    if not trajs:
        raise EmptyInput("no trajectories")
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    xs = np.concatenate([t.x for t in trajs])
    ys = np.concatenate([t.y for t in trajs])
    x_min = float(xs.min()) - cell_size
    y_min = float(ys.min()) - cell_size
    cols = int(math.floor((xs.max() - xs.min()) / cell_size)) + 3
    rows = int(math.floor((ys.max() - ys.min()) / cell_size)) + 3
    counts = np.zeros((rows, cols), dtype=np.int64)
    for t in trajs:
        r = np.floor((t.y - y_min) / cell_size).astype(np.int64)
        c = np.floor((t.x - x_min) / cell_size).astype(np.int64)
        np.add.at(counts, (r, c), 1)
    return DensityGrid(x_min, y_min, cell_size, counts)


def invert_density(grid: DensityGrid) -> np.ndarray:
    """Elementwise 1/(counts+1); dense areas become low, empty areas 1."""
    return 1.0 / (grid.counts + 1.0)


def find_local_maxima(grid: DensityGrid, min_separation: int = 3) -> list:
    """Seed cells for the watershed: filtered local maxima of the counts.

    A cell qualifies when its count is positive and >= all 8 neighbours.
    Candidates are then greedily accepted in order of descending count
    (ties by (row, col)), rejecting any candidate within `min_separation`
    Chebyshev distance of an accepted one.
    """
    c = grid.counts
    if not np.any(c > 0):
        raise AllZero("density grid has no visited cell")
    padded = np.pad(c, 1, constant_values=-1)
    is_max = c > 0
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            rows, cols = c.shape
            shifted = padded[1 + dr : 1 + dr + rows, 1 + dc : 1 + dc + cols]
            is_max &= c >= shifted
    rr, cc = np.nonzero(is_max)
    order = np.lexsort((cc, rr, -c[rr, cc]))
    accepted: list[tuple[int, int]] = []
    for i in order:
        r, col = int(rr[i]), int(cc[i])
        ok = all(max(abs(r - ar), abs(col - ac)) >= min_separation for ar, ac in accepted)
        if ok:
            accepted.append((r, col))
    return accepted


def watershed(surface: np.ndarray, seeds, mask: np.ndarray) -> SegmentLabels:
    """Priority-flood segmentation of `surface` restricted to `mask`.

    Seeds are labeled with their list index, then fronts grow over
    4-connected masked neighbours in ascending surface value; ties are
    broken by queue insertion order, so each cell takes the label of the
    first front that reaches it. Cells outside the mask stay UNASSIGNED,
    as do masked cells not 4-connected to any seed.
    """
    seeds = [(int(r), int(c)) for r, c in seeds]
    if not seeds:
        raise ValueError("watershed needs at least one seed")
    rows, cols = surface.shape
    labels = np.full((rows, cols), UNASSIGNED, dtype=np.int64)
    for i, (r, c) in enumerate(seeds):
        if not (0 <= r < rows and 0 <= c < cols) or not mask[r, c]:
            raise SeedOutsideMask(f"seed {i} at ({r}, {c}) is outside the mask")
        labels[r, c] = i
    counter = itertools.count()
    heap = []
    for i, (r, c) in enumerate(seeds):
        for dr, dc in _NEIGHBORS_4:
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and mask[nr, nc] and labels[nr, nc] == UNASSIGNED:
                heapq.heappush(heap, (surface[nr, nc], next(counter), nr, nc, i))
    while heap:
        _, _, r, c, lab = heapq.heappop(heap)
        if labels[r, c] != UNASSIGNED:
            continue
        labels[r, c] = lab
        for dr, dc in _NEIGHBORS_4:
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and mask[nr, nc] and labels[nr, nc] == UNASSIGNED:
                heapq.heappush(heap, (surface[nr, nc], next(counter), nr, nc, lab))
    return SegmentLabels(labels, tuple(seeds))


def segment_grid(grid: DensityGrid, min_separation: int = 3) -> SegmentLabels:
    """Full segmentation pipeline: maxima seeds + inverse-density watershed.

    The greedy maxima filter can occasionally strip every seed from a small
    mask component sitting close to a stronger peak; any such orphan
    component gets its own highest-count cell appended as an extra seed so
    the labels always partition the mask.
    """
    mask = grid.counts > 0
    seeds = find_local_maxima(grid, min_separation)
    surface = invert_density(grid)
    labels = watershed(surface, seeds, mask)
    while True:
        orphan = mask & (labels.labels == UNASSIGNED)
        if not np.any(orphan):
            return labels
        counts = np.where(orphan, grid.counts, -1)
        best = np.unravel_index(np.argmax(counts), counts.shape)
        seeds = list(labels.seeds) + [(int(best[0]), int(best[1]))]
        labels = watershed(surface, seeds, mask)


def segment_centroids(labels: SegmentLabels, grid: DensityGrid) -> np.ndarray:
    """Mean cell-center position of each labeled region, shape (K, 2)."""
    k = labels.node_count
    out = np.zeros((k, 2), dtype=np.float64)
    for i in range(k):
        rr, cc = np.nonzero(labels.labels == i)
        xs = grid.x_min + (cc + 0.5) * grid.cell_size
        ys = grid.y_min + (rr + 0.5) * grid.cell_size
        out[i] = (xs.mean(), ys.mean())
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def segmentation_to_json(grid: DensityGrid, labels: SegmentLabels) -> str:
    doc = {
        "bounds": list(grid.bounds),
        "cell_size": grid.cell_size,
        "shape": list(grid.shape),
        "counts": grid.counts.reshape(-1).tolist(),
        "labels": labels.labels.reshape(-1).tolist(),
        "seeds": [list(s) for s in labels.seeds],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def segmentation_from_json(text: str):
    doc = json.loads(text)
    rows, cols = doc["shape"]
    counts = np.array(doc["counts"], dtype=np.int64).reshape(rows, cols)
    grid = DensityGrid(doc["bounds"][0], doc["bounds"][2], doc["cell_size"], counts)
    labels = SegmentLabels(
        np.array(doc["labels"], dtype=np.int64).reshape(rows, cols),
        tuple((int(r), int(c)) for r, c in doc["seeds"]),
    )
    return grid, labels


def _segment_color(i: int) -> str:
    # golden-angle hue walk; stable, well-separated colors for any K
    hue = (i * 0.6180339887498949) % 1.0
    h6 = hue * 6.0
    f = h6 - math.floor(h6)
    q, t = 0.35 + 0.5 * (1 - f), 0.35 + 0.5 * f
    v, p = 0.85, 0.35
    sector = int(h6) % 6
    rgb = [
        (v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q),
    ][sector]
    return "#{:02x}{:02x}{:02x}".format(*(int(round(255 * c)) for c in rgb))


def segmentation_svg(grid: DensityGrid, labels: SegmentLabels) -> str:
    """Color-mapped SVG of the labeled cells, one rect per masked cell."""
    rows, cols = grid.shape
    width = 800.0
    scale = width / cols
    height = rows * scale
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.6g}" '
        f'height="{height:.6g}" viewBox="0 0 {width:.6g} {height:.6g}">\n'
        f'<rect width="{width:.6g}" height="{height:.6g}" fill="#ffffff"/>\n'
    ]
    colors = [_segment_color(i) for i in range(labels.node_count)]
    for r in range(rows):
        for c in range(cols):
            lab = labels.labels[r, c]
            if lab == UNASSIGNED:
                continue
            px = c * scale
            py = (rows - 1 - r) * scale  # grid row 0 is the lowest y
            parts.append(
                f'<rect x="{px:.6g}" y="{py:.6g}" width="{scale:.6g}" '
                f'height="{scale:.6g}" fill="{colors[lab]}"/>\n'
            )
    for i, (r, c) in enumerate(labels.seeds):
        px = (c + 0.5) * scale
        py = (rows - 1 - r + 0.5) * scale
        parts.append(f'<circle cx="{px:.6g}" cy="{py:.6g}" r="{scale * 0.4:.6g}" fill="#000000"/>\n')
    parts.append("</svg>\n")
    return "".join(parts)
