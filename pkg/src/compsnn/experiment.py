"""End-to-end experiment machinery: dataset assembly, training, comparison.

A benchmark run generates synthetic navigators, quantizes the environment
with the density/watershed pipeline, builds the transition graph and its
spectrum from the *training* trajectories, trains the composite model plus
the three single-module baselines with plain SGD, and compares per-sample
validation losses (mean, 95% confidence interval, histogram, and pairwise
Pearson correlations).

Model inputs are standardized per channel with statistics of the training
split; the statistics ride along in checkpoints so any prediction can be
reproduced from a checkpoint and the input CSVs alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import auto_cell_size, build_density_grid, segment_centroids, segment_grid
from .errors import DivergedLoss, OrderMismatch
from .features import FeatureConfig, compute_feature_series, validate_trajectory
from .graph import (
    Spectrum,
    TrajectoryGraph,
    aggregate_node_signal,
    build_graph,
    eigendecompose,
    gft,
    laplacian,
    map_trajectory_to_nodes,
    visit_signal,
)
from .model import (
    MODEL_KINDS,
    CompSnnConfig,
    ModelInputs,
    SpectrumAux,
    copy_params,
    init_params,
    loss,
    model_backward,
    model_forward,
)
from .nn import sgd_step, zero_grads
from .synth import DEFAULT_WORLD, generate_synthetic_dataset

EPSILON_FLOOR = 1e-3
STD_FLOOR = 1e-6
Z_CLIP = 5.0  # winsorize standardized inputs; count-like channels are heavy-tailed


@dataclass
class TrajectorySample:
    """Everything derived from one trajectory, before normalization."""

    traj_id: str
    features: np.ndarray     # (10, N)
    node_seq: np.ndarray     # (N,)
    node_signal: np.ndarray  # (node_count, 8)
    visits: np.ndarray       # (node_count,)
    u: np.ndarray            # (8,)


@dataclass(frozen=True)
class NormalizationStats:
    feat_mean: np.ndarray
    feat_std: np.ndarray
    sig_mean: np.ndarray
    sig_std: np.ndarray
    visit_mean: np.ndarray
    visit_std: np.ndarray

    def as_extras(self) -> dict:
        return {
            "feat_mean": self.feat_mean,
            "feat_std": self.feat_std,
            "sig_mean": self.sig_mean,
            "sig_std": self.sig_std,
            "visit_mean": self.visit_mean,
            "visit_std": self.visit_std,
        }

    @classmethod
    def from_extras(cls, extras: dict) -> "NormalizationStats":
        return cls(
            extras["feat_mean"], extras["feat_std"],
            extras["sig_mean"], extras["sig_std"],
            np.asarray(extras["visit_mean"]), np.asarray(extras["visit_std"]),
        )


@dataclass
class PreparedSample:
    traj_id: str
    inputs: ModelInputs
    u: np.ndarray


@dataclass
class TrainResult:
    params: dict
    best_epoch: int
    history: list  # [(epoch, train_loss, val_loss)], epoch 0 = initial state


def build_samples(trajs, us, labels, grid, feature_cfg: FeatureConfig = FeatureConfig()):
    """Validated per-trajectory representations on a fixed segmentation."""
    samples = []
    for traj, u in zip(trajs, us):
        clean = validate_trajectory(traj)
        feats = compute_feature_series(clean, feature_cfg)
        seq = map_trajectory_to_nodes(clean, labels, grid)
        samples.append(
            TrajectorySample(
                traj_id=clean.id,
                features=feats.channels,
                node_seq=seq,
                node_signal=aggregate_node_signal(feats, seq, labels.node_count),
                visits=visit_signal(seq, labels.node_count).astype(np.float64),
                u=np.asarray(u, dtype=np.float64),
            )
        )
    return samples


def _soften_signal(node_signal: np.ndarray) -> np.ndarray:
    out = np.array(node_signal, dtype=np.float64)
    out[:, 7] = np.log1p(out[:, 7])  # visit counts are heavy-tailed
    return out


def _occupancy(visits: np.ndarray) -> np.ndarray:
    total = visits.sum()
    return visits / total if total > 0 else visits


def compute_stats(samples) -> NormalizationStats:
    """Per-channel standardization statistics over the given (training)
    samples. Count channels are log1p-transformed first; the graph signal is
    the per-sample occupancy distribution (visit shape, not duration),
    standardized per node."""
    feats = np.concatenate([s.features for s in samples], axis=1)
    sigs = np.concatenate([_soften_signal(s.node_signal) for s in samples], axis=0)
    occ = np.stack([_occupancy(s.visits) for s in samples])
    return NormalizationStats(
        feat_mean=feats.mean(axis=1),
        feat_std=np.maximum(feats.std(axis=1), STD_FLOOR),
        sig_mean=sigs.mean(axis=0),
        sig_std=np.maximum(sigs.std(axis=0), STD_FLOOR),
        visit_mean=occ.mean(axis=0),
        visit_std=np.maximum(occ.std(axis=0), STD_FLOOR),
    )


def normalize_features(features: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    z = (features - stats.feat_mean[:, None]) / stats.feat_std[:, None]
    return np.clip(z, -Z_CLIP, Z_CLIP)


def prepare_samples(samples, stats: NormalizationStats, spectrum: Spectrum):
    """Standardize every representation (log1p on counts, per-node z-scores
    of the occupancy distribution, winsorized) and precompute the
    spectral-domain visit signal; returns model-ready inputs paired with
    their targets."""
    prepared = []
    for s in samples:
        sig = (_soften_signal(s.node_signal) - stats.sig_mean) / stats.sig_std
        sig = np.clip(sig, -Z_CLIP, Z_CLIP)
        visits = (_occupancy(s.visits) - stats.visit_mean) / stats.visit_std
        visits = np.clip(visits, -Z_CLIP, Z_CLIP)
        prepared.append(
            PreparedSample(
                traj_id=s.traj_id,
                inputs=ModelInputs(
                    node_signal_flat=sig.reshape(-1),
                    shat=gft(spectrum, visits),
                    features=normalize_features(s.features, stats),
                ),
                u=s.u,
            )
        )
    return prepared


def demographic_epsilon(us: np.ndarray, floor: float = EPSILON_FLOOR) -> np.ndarray:
    """Per-dimension standard deviation of the training targets, floored."""
    return np.maximum(np.asarray(us).std(axis=0), floor)


def split_indices(n: int, val_fraction: float = 0.2, seed: int = 0):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    val = np.sort(perm[:n_val])
    train = np.sort(perm[n_val:])
    return train, val


def _mean_loss(kind, prepared, aux, params, eps) -> float:
    total = 0.0
    for ps in prepared:
        x, _ = model_forward(kind, ps.inputs, aux, params)
        total += loss(x, ps.u, eps)[0]
    return total / len(prepared)


def train(model_kind: str, train_set, val_set, aux: SpectrumAux, config: CompSnnConfig,
          lr: float = 0.005, epochs: int = 100, batch_size: int = 16, seed: int = 0) -> TrainResult:
    """SGD training with seeded shuffling; returns the parameters of the
    epoch with the lowest validation loss (epoch 0 = untrained)."""
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    params = init_params(model_kind, config, seed)
    eps = np.asarray(config.epsilon)
    rng = np.random.default_rng(seed)
    val0 = _mean_loss(model_kind, val_set, aux, params, eps)
    history = [(0, _mean_loss(model_kind, train_set, aux, params, eps), val0)]
    best_val, best_epoch, best_params = val0, 0, copy_params(params)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train_set))
        running = 0.0
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            zero_grads(params)
            inv = 1.0 / len(batch)
            for idx in batch:
                ps = train_set[idx]
                x, cache = model_forward(model_kind, ps.inputs, aux, params)
                value, dx = loss(x, ps.u, eps)
                if not math.isfinite(value):
                    raise DivergedLoss(f"{model_kind}: non-finite loss at epoch {epoch}")
                running += value
                model_backward(cache, dx * inv, params)
            sgd_step(params, lr)
        train_loss = running / len(order)
        val_loss = _mean_loss(model_kind, val_set, aux, params, eps)
        if not math.isfinite(val_loss):
            raise DivergedLoss(f"{model_kind}: non-finite validation loss at epoch {epoch}")
        history.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val, best_epoch, best_params = val_loss, epoch, copy_params(params)
    return TrainResult(params=best_params, best_epoch=best_epoch, history=history)


def evaluate(params, model_kind: str, prepared, aux: SpectrumAux, epsilon) -> np.ndarray:
    """Per-sample losses in input order."""
    eps = np.asarray(epsilon)
    out = np.empty(len(prepared))
    for i, ps in enumerate(prepared):
        x, _ = model_forward(model_kind, ps.inputs, aux, params)
        out[i] = loss(x, ps.u, eps)[0]
    return out


# ---------------------------------------------------------------------------
# model comparison
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    model_names: list
    per_sample: dict
    means: dict
    ci_low: dict
    ci_high: dict
    hist_edges: np.ndarray
    hist_counts: dict
    correlations: np.ndarray  # NaN marks undefined (zero-variance) entries
    best_epochs: dict = field(default_factory=dict)
    histories: dict = field(default_factory=dict)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation; NaN when either side has zero variance."""
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return float("nan")
    return float(da @ db) / denom


def compare_models(losses_by_model: dict, best_epochs=None, histories=None,
                   hist_bins: int = 30) -> EvalReport:
    """Summary statistics of per-sample losses evaluated on one sample order."""
    names = list(losses_by_model)
    sizes = {len(v) for v in losses_by_model.values()}
    if len(sizes) != 1:
        raise OrderMismatch(f"per-sample loss lengths differ: {sorted(sizes)}")
    n = sizes.pop()
    means, ci_low, ci_high = {}, {}, {}
    for name in names:
        v = np.asarray(losses_by_model[name], dtype=np.float64)
        m = float(v.mean())
        half = 1.96 * float(v.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
        means[name], ci_low[name], ci_high[name] = m, m - half, m + half
    top = max(float(np.max(v)) for v in losses_by_model.values())
    edges = np.linspace(0.0, top if top > 0 else 1.0, hist_bins + 1)
    hist_counts = {
        name: np.histogram(losses_by_model[name], bins=edges)[0]
        for name in names
    }
    corr = np.empty((len(names), len(names)))
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            corr[i, j] = pearson(
                np.asarray(losses_by_model[a], dtype=np.float64),
                np.asarray(losses_by_model[b], dtype=np.float64),
            )
    return EvalReport(
        model_names=names,
        per_sample={k: np.asarray(v, dtype=np.float64) for k, v in losses_by_model.items()},
        means=means,
        ci_low=ci_low,
        ci_high=ci_high,
        hist_edges=edges,
        hist_counts=hist_counts,
        correlations=corr,
        best_epochs=dict(best_epochs or {}),
        histories=dict(histories or {}),
    )


# ---------------------------------------------------------------------------
# full benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchmarkRun:
    config: CompSnnConfig
    grid: object
    labels: object
    graph: TrajectoryGraph
    spectrum: Spectrum
    aux: SpectrumAux
    stats: NormalizationStats
    samples: list
    train_idx: np.ndarray
    val_idx: np.ndarray
    results: dict        # kind -> TrainResult
    report: EvalReport


def build_environment(trajs, cell_size=None, min_separation: int = 5,
                      cell_target: int = 80):
    """Density grid + watershed segmentation + region centroids.

    Defaults aim for a grid of ~80 cells across and well-separated seeds,
    keeping the node count low enough that the graph networks generalize
    from a few hundred trajectories.
    """
    cs = cell_size if cell_size else auto_cell_size(trajs, cell_target)
    grid = build_density_grid(trajs, cs)
    labels = segment_grid(grid, min_separation)
    return grid, labels, segment_centroids(labels, grid)


def run_benchmark(seed: int = 42, n_traj: int = 200, epochs: int = 100, lr: float = 0.005,
                  batch_size: int = 32, val_fraction: float = 0.2, world=DEFAULT_WORLD,
                  cell_size: float = 1.25, min_separation: int = 5, gcnn_filters: int = 8,
                  gcnn_degree: int = 8, cnn_kernel: int = 13, kinds=MODEL_KINDS,
                  feature_cfg: FeatureConfig = FeatureConfig()) -> BenchmarkRun:
    """The reference end-to-end experiment on synthetic data.

    The spatial quantization (grid + segmentation) uses every trajectory,
    mirroring how an environment heatmap is a property of the level rather
    than of the training split; graph edges, the spectrum, normalization
    statistics, and the loss widths come from the training split only.
    """
    trajs, us = generate_synthetic_dataset(seed, n_traj, world)
    grid, labels, centroids = build_environment(trajs, cell_size, min_separation)
    samples = build_samples(trajs, us, labels, grid, feature_cfg)
    train_idx, val_idx = split_indices(len(samples), val_fraction, seed)
    graph = build_graph([samples[i].node_seq for i in train_idx], labels.node_count, centroids)
    spectrum = eigendecompose(laplacian(graph))
    stats = compute_stats([samples[i] for i in train_idx])
    eps = demographic_epsilon(np.array([samples[i].u for i in train_idx]))
    config = CompSnnConfig(
        node_count=labels.node_count,
        gcnn_filters=gcnn_filters,
        gcnn_degree=gcnn_degree,
        cnn_kernel=cnn_kernel,
        epsilon=tuple(float(e) for e in eps),
    )
    aux = SpectrumAux.from_spectrum(spectrum, config.gcnn_degree)
    prepared = prepare_samples(samples, stats, spectrum)
    train_set = [prepared[i] for i in train_idx]
    val_set = [prepared[i] for i in val_idx]
    results, losses, best_epochs, histories = {}, {}, {}, {}
    for kind in kinds:
        res = train(kind, train_set, val_set, aux, config, lr=lr, epochs=epochs,
                    batch_size=batch_size, seed=seed)
        results[kind] = res
        losses[kind] = evaluate(res.params, kind, val_set, aux, config.epsilon)
        best_epochs[kind] = res.best_epoch
        histories[kind] = res.history
    report = compare_models(losses, best_epochs, histories)
    return BenchmarkRun(
        config=config, grid=grid, labels=labels, graph=graph, spectrum=spectrum,
        aux=aux, stats=stats, samples=samples, train_idx=train_idx, val_idx=val_idx,
        results=results, report=report,
    )
