"""Trajectory graphs, node-signal aggregation, Laplacian spectra, and the GFT.

Each watershed segment is a node; an undirected edge joins two nodes whenever
any trajectory steps directly from one segment to the other. Per-trajectory
signals live on the nodes: an 8-channel aggregate (means of the motion
features, an exit-and-return flag, and the visit count) and the bare visit
counts. The symmetric normalized Laplacian is eigendecomposed with a cyclic
Jacobi solver, giving the orthonormal basis of the Graph Fourier Transform.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .density import UNASSIGNED, DensityGrid, SegmentLabels
from .errors import (
    DimensionMismatch,
    IdOutOfRange,
    LengthMismatch,
    NoConvergence,
    NotSymmetric,
    OutOfBounds,
)
from .features import FeatureSeries

NODE_CHANNELS = (
    "mean_speed",
    "mean_accel",
    "mean_theta",
    "mean_dtheta",
    "mean_entropy",
    "mean_variance",
    "returned",
    "visits",
)


@dataclass(frozen=True)
class TrajectoryGraph:
    node_count: int
    edges: tuple        # sorted ((i, j), ...) with i < j
    adjacency: np.ndarray
    centroids: np.ndarray  # (node_count, 2) for plotting


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues and orthonormal, sign-fixed eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


def map_trajectory_to_nodes(raw, labels: SegmentLabels, grid: DensityGrid) -> np.ndarray:
    """Node id per sample; samples on unassigned cells snap to the nearest
    labeled cell (Euclidean over cell centers, ties to the smallest (row, col))."""
    lab = labels.labels
    labeled_r, labeled_c = np.nonzero(lab != UNASSIGNED)
    snap_cache: dict[tuple[int, int], int] = {}
    out = np.empty(raw.n, dtype=np.int64)
    for i in range(raw.n):
        x, y = raw.x[i], raw.y[i]
        if not grid.contains(x, y):
            raise OutOfBounds(f"trajectory {raw.id}: sample {i} at ({x}, {y}) outside grid")
        r, c = grid.cell_of(x, y)
        node = lab[r, c]
        if node == UNASSIGNED:
            key = (r, c)
            if key not in snap_cache:
                d2 = (labeled_r - r) ** 2 + (labeled_c - c) ** 2
                best = np.lexsort((labeled_c, labeled_r, d2))[0]
                snap_cache[key] = int(lab[labeled_r[best], labeled_c[best]])
            node = snap_cache[key]
        out[i] = node
    return out


def build_graph(node_sequences, node_count: int, centroids) -> TrajectoryGraph:
    """Undirected edges from consecutive node transitions in any sequence."""
    edges = set()
    for seq in node_sequences:
        seq = np.asarray(seq)
        if len(seq) and (seq.min() < 0 or seq.max() >= node_count):
            raise IdOutOfRange(f"node ids must lie in [0, {node_count})")
        for a, b in zip(seq[:-1], seq[1:]):
            if a != b:
                edges.add((int(min(a, b)), int(max(a, b))))
    adjacency = np.zeros((node_count, node_count), dtype=np.float64)
    for i, j in edges:
        adjacency[i, j] = adjacency[j, i] = 1.0
    return TrajectoryGraph(node_count, tuple(sorted(edges)), adjacency, np.asarray(centroids, dtype=np.float64))


def aggregate_node_signal(features: FeatureSeries, node_seq, node_count: int) -> np.ndarray:
    """Aggregate a trajectory's features per node into a (node_count, 8) signal.

    Channels: mean speed, mean accel, circular mean heading, mean turn rate,
    mean entropy, mean variance, exit-and-return flag (node occurs in >= 2
    maximal runs of the sequence), and the visit count. Unvisited nodes keep
    all-zero rows.
    """
    node_seq = np.asarray(node_seq, dtype=np.int64)
    if len(node_seq) != features.n:
        raise LengthMismatch(f"sequence of {len(node_seq)} vs {features.n} feature samples")
    sig = np.zeros((node_count, 8), dtype=np.float64)
    counts = np.bincount(node_seq, minlength=node_count).astype(np.float64)
    visited = counts > 0
    ch = features.channels

    def mean_of(values):
        sums = np.bincount(node_seq, weights=values, minlength=node_count)
        return np.divide(sums, counts, out=np.zeros(node_count), where=visited)

    sig[:, 0] = mean_of(ch[2])  # speed
    sig[:, 1] = mean_of(ch[3])  # accel
    theta = ch[6]
    sin_sum = np.bincount(node_seq, weights=np.sin(theta), minlength=node_count)
    cos_sum = np.bincount(node_seq, weights=np.cos(theta), minlength=node_count)
    sig[visited, 2] = np.arctan2(sin_sum[visited], cos_sum[visited])
    sig[:, 3] = mean_of(ch[7])  # dtheta
    sig[:, 4] = mean_of(ch[8])  # entropy
    sig[:, 5] = mean_of(ch[9])  # variance
    run_starts = np.concatenate([[True], node_seq[1:] != node_seq[:-1]])
    run_counts = np.bincount(node_seq[run_starts], minlength=node_count)
    sig[:, 6] = (run_counts >= 2).astype(np.float64)
    sig[:, 7] = counts
    return sig


def visit_signal(node_seq, node_count: int) -> np.ndarray:
    return np.bincount(np.asarray(node_seq, dtype=np.int64), minlength=node_count)


def laplacian(graph: TrajectoryGraph, variant: str = "normalized") -> np.ndarray:
    """Graph Laplacian; `normalized` (default) or `combinatorial`.

    The symmetric normalized form is I - D^{-1/2} A D^{-1/2} with isolated
    nodes contributing an all-zero row (no self-energy), so its spectrum lies
    in [0, 2].
    """
    a = graph.adjacency
    deg = a.sum(axis=1)
    if variant == "combinatorial":
        return np.diag(deg) - a
    if variant != "normalized":
        raise ValueError(f"unknown laplacian variant {variant!r}")
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    lap = -inv_sqrt[:, None] * a * inv_sqrt[None, :]
    np.fill_diagonal(lap, np.where(deg > 0, 1.0, 0.0))
    return lap


def eigendecompose(lap: np.ndarray, max_sweeps: int = 100, tol: float = 1e-12) -> Spectrum:
    """Full symmetric eigendecomposition by cyclic Jacobi rotations.

    Converged when the off-diagonal Frobenius norm drops below `tol` (or all
    remaining off-diagonal entries are at rounding level). Eigenpairs are
    sorted ascending and each eigenvector's sign is fixed so its
    largest-magnitude component is positive, making results byte-stable.
    """
    a = np.asarray(lap, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"matrix shape {a.shape} is not square")
    if a.size and np.max(np.abs(a - a.T)) > 1e-10:
        raise NotSymmetric("matrix is not symmetric within 1e-10")
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n < 2:
        w = np.diag(a).copy()
        return Spectrum(w, v)

    off_mask = ~np.eye(n, dtype=bool)

    def off_norm(m):
        # summed directly over the off-diagonal entries: subtracting the
        # diagonal mass from the total would cancel away everything below
        # the rounding level of the large diagonal sum
        return math.sqrt(float((m[off_mask] ** 2).sum()))

    converged = off_norm(a) < tol
    for _ in range(max_sweeps):
        if converged:
            break
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * (abs(a[p, p]) + abs(a[q, q]) + 1e-300):
                    continue
                rotated = True
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        converged = off_norm(a) < tol or not rotated
    if not converged:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = v[:, order]
    for k in range(n):
        idx = int(np.argmax(np.abs(v[:, k])))
        if v[idx, k] < 0:
            v[:, k] = -v[:, k]
    return Spectrum(w, v)


def gft(spectrum: Spectrum, signal) -> np.ndarray:
    """Project a node signal onto the eigenvector basis: s_hat = U^T s."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape != (spectrum.n,):
        raise DimensionMismatch(f"signal {signal.shape} vs spectrum of {spectrum.n}")
    return spectrum.eigenvectors.T @ signal


def igft(spectrum: Spectrum, coeffs) -> np.ndarray:
    """Inverse transform: s = U s_hat."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (spectrum.n,):
        raise DimensionMismatch(f"coefficients {coeffs.shape} vs spectrum of {spectrum.n}")
    return spectrum.eigenvectors @ coeffs


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def graph_to_json(graph: TrajectoryGraph) -> str:
    doc = {
        "node_count": graph.node_count,
        "edges": [list(e) for e in graph.edges],
        "centroids": [[float(x), float(y)] for x, y in graph.centroids],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def graph_from_json(text: str) -> TrajectoryGraph:
    doc = json.loads(text)
    sequences = [e for e in doc["edges"]]
    return build_graph(sequences, doc["node_count"], np.array(doc["centroids"], dtype=np.float64))


_SPECTRUM_MAGIC = b"CSNNSPEC"
_SPECTRUM_VERSION = 1


def save_spectrum(path, spectrum: Spectrum) -> None:
    """Binary sidecar: magic, u32 version, u32 n, f64 eigenvalues, then the
    eigenvector matrix column-major; all little-endian."""
    with open(path, "wb") as fh:
        fh.write(_SPECTRUM_MAGIC)
        fh.write(struct.pack("<II", _SPECTRUM_VERSION, spectrum.n))
        fh.write(spectrum.eigenvalues.astype("<f8").tobytes())
        fh.write(np.asfortranarray(spectrum.eigenvectors.astype("<f8")).tobytes(order="F"))


def load_spectrum(path) -> Spectrum:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _SPECTRUM_MAGIC:
            raise ValueError(f"bad spectrum magic {magic!r}")
        version, n = struct.unpack("<II", fh.read(8))
        if version != _SPECTRUM_VERSION:
            raise ValueError(f"unsupported spectrum version {version}")
        w = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        u = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape((n, n), order="F").copy()
    return Spectrum(w, u)
