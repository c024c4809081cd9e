"""Command-line pipeline driver.

Subcommands: `synth` writes a synthetic dataset, `graph` builds and caches
the environment artifacts (segmentation, transition graph, spectrum),
`train` fits the requested models and writes checkpoints plus the training
history, `eval` writes the comparison reports and figures, `explain`
renders activation maps for one trajectory, and `gradcheck` runs the
gradient validation suite.

Every flag can instead be supplied via a JSON config file (`--config`);
explicit flags win. All artifacts are deterministic functions of the seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiment, explain, gradcheck, report, synth
from .density import segmentation_from_json, segmentation_svg, segmentation_to_json
from .errors import CompsnnError
from .features import (
    FeatureConfig,
    compute_feature_series,
    load_demographics_csv,
    load_trajectories_csv,
    validate_trajectory,
    write_trajectories_csv,
    write_demographics_csv,
    DemographicSchema,
)
from .graph import (
    build_graph,
    eigendecompose,
    graph_from_json,
    graph_to_json,
    laplacian,
    load_spectrum,
    save_spectrum,
)
from .model import CompSnnConfig, SpectrumAux, load_checkpoint, save_checkpoint

DEFAULTS = {
    "seed": 42,
    "n_traj": 200,
    "data_dir": "data",
    "out_dir": "out",
    "cell_size": 1.25,
    "epochs": 100,
    "lr": 0.005,
    "batch": 32,
    "filters": 8,
    "degree": 8,
    "model": "all",
    "traj_id": None,
}

MODEL_FLAG_TO_KIND = {
    "compsnn": "compsnn",
    "cnn": "single_cnn",
    "gcnn": "single_gcnn",
    "mlp": "single_mlp",
}

VAL_FRACTION = 0.2
MIN_SEPARATION = 5


def _resolve(args) -> dict:
    """Effective options: flag > config file > built-in default."""
    file_cfg = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise CompsnnError(f"unknown config keys: {sorted(unknown)}")
    opts = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        opts[key] = flag if flag is not None else file_cfg.get(key, default)
    return opts


def _selected_kinds(model_flag: str) -> list:
    if model_flag == "all":
        return ["compsnn", "single_cnn", "single_gcnn", "single_mlp"]
    return [MODEL_FLAG_TO_KIND[model_flag]]


def _load_dataset(data_dir: Path):
    trajs = load_trajectories_csv(data_dir / "trajectories.csv")
    schema = DemographicSchema.from_json(data_dir / "schema.json")
    demo = load_demographics_csv(data_dir / "demographics.csv", schema)
    missing = [t.id for t in trajs if t.id not in demo]
    if missing:
        raise CompsnnError(f"demographics missing for {missing[:5]}")
    us = np.array([demo[t.id] for t in trajs])
    return trajs, us


def _artifact_paths(out_dir: Path) -> dict:
    return {
        "segmentation": out_dir / "segmentation.json",
        "segmentation_svg": out_dir / "segmentation.svg",
        "graph": out_dir / "graph.json",
        "spectrum": out_dir / "spectrum.bin",
    }


def _build_artifacts(trajs, us, opts, out_dir: Path):
    """Environment artifacts: segmentation over all trajectories; edges and
    spectrum from the training split of the seeded 80/20 partition."""
    grid, labels, centroids = experiment.build_environment(
        trajs, opts["cell_size"], MIN_SEPARATION
    )
    samples = experiment.build_samples(trajs, us, labels, grid)
    train_idx, _ = experiment.split_indices(len(samples), VAL_FRACTION, opts["seed"])
    graph = build_graph(
        [samples[i].node_seq for i in train_idx], labels.node_count, centroids
    )
    spectrum = eigendecompose(laplacian(graph))
    paths = _artifact_paths(out_dir)
    paths["segmentation"].write_text(segmentation_to_json(grid, labels), encoding="utf-8")
    paths["segmentation_svg"].write_text(segmentation_svg(grid, labels), encoding="utf-8")
    paths["graph"].write_text(graph_to_json(graph), encoding="utf-8")
    save_spectrum(paths["spectrum"], spectrum)
    return grid, labels, graph, spectrum, samples


def _load_or_build_artifacts(trajs, us, opts, out_dir: Path):
    paths = _artifact_paths(out_dir)
    if all(p.exists() for p in paths.values()):
        grid, labels = segmentation_from_json(paths["segmentation"].read_text(encoding="utf-8"))
        graph = graph_from_json(paths["graph"].read_text(encoding="utf-8"))
        spectrum = load_spectrum(paths["spectrum"])
        samples = experiment.build_samples(trajs, us, labels, grid)
        return grid, labels, graph, spectrum, samples
    return _build_artifacts(trajs, us, opts, out_dir)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    opts = _resolve(args)
    data_dir = Path(opts["data_dir"])
    data_dir.mkdir(parents=True, exist_ok=True)
    trajs, us = synth.generate_synthetic_dataset(opts["seed"], opts["n_traj"])
    schema = synth.demographic_schema()
    write_trajectories_csv(data_dir / "trajectories.csv", trajs)
    write_demographics_csv(
        data_dir / "demographics.csv",
        synth.u_to_records(us, [t.id for t in trajs]),
        schema,
    )
    schema.to_json(data_dir / "schema.json")
    print(f"wrote {len(trajs)} trajectories to {data_dir}")
    return 0


def cmd_graph(args) -> int:
    opts = _resolve(args)
    out_dir = Path(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    trajs, us = _load_dataset(Path(opts["data_dir"]))
    grid, labels, graph, _, _ = _build_artifacts(trajs, us, opts, out_dir)
    print(
        f"grid {grid.shape[0]}x{grid.shape[1]}, {labels.node_count} nodes, "
        f"{len(graph.edges)} edges -> {out_dir}"
    )
    return 0


def cmd_train(args) -> int:
    opts = _resolve(args)
    out_dir = Path(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    trajs, us = _load_dataset(Path(opts["data_dir"]))
    grid, labels, graph, spectrum, samples = _load_or_build_artifacts(trajs, us, opts, out_dir)
    train_idx, val_idx = experiment.split_indices(len(samples), VAL_FRACTION, opts["seed"])
    stats = experiment.compute_stats([samples[i] for i in train_idx])
    eps = experiment.demographic_epsilon(np.array([samples[i].u for i in train_idx]))
    config = CompSnnConfig(
        node_count=labels.node_count,
        gcnn_filters=opts["filters"],
        gcnn_degree=opts["degree"],
        epsilon=tuple(float(e) for e in eps),
    )
    aux = SpectrumAux.from_spectrum(spectrum, config.gcnn_degree)
    prepared = experiment.prepare_samples(samples, stats, spectrum)
    train_set = [prepared[i] for i in train_idx]
    val_set = [prepared[i] for i in val_idx]
    histories = {}
    for kind in _selected_kinds(opts["model"]):
        result = experiment.train(
            kind, train_set, val_set, aux, config,
            lr=opts["lr"], epochs=opts["epochs"], batch_size=opts["batch"], seed=opts["seed"],
        )
        save_checkpoint(
            out_dir / f"checkpoint_{kind}.json", kind, config, opts["seed"],
            result.best_epoch, result.params, extras=stats.as_extras(),
        )
        histories[kind] = result.history
        best = min(r[2] for r in result.history)
        print(f"{kind}: best epoch {result.best_epoch}, val loss {best:.4f}")
    report.write_history_csv(out_dir / "history.csv", histories)
    return 0


def cmd_eval(args) -> int:
    opts = _resolve(args)
    out_dir = Path(opts["out_dir"])
    trajs, us = _load_dataset(Path(opts["data_dir"]))
    grid, labels, graph, spectrum, samples = _load_or_build_artifacts(trajs, us, opts, out_dir)
    _, val_idx = experiment.split_indices(len(samples), VAL_FRACTION, opts["seed"])
    losses, best_epochs = {}, {}
    for kind in _selected_kinds(opts["model"]):
        path = out_dir / f"checkpoint_{kind}.json"
        if not path.exists():
            raise CompsnnError(f"no checkpoint for {kind} in {out_dir}; run train first")
        ckpt = load_checkpoint(path)
        stats = experiment.NormalizationStats.from_extras(ckpt.extras)
        aux = SpectrumAux.from_spectrum(spectrum, ckpt.config.gcnn_degree)
        prepared = experiment.prepare_samples(samples, stats, spectrum)
        val_set = [prepared[i] for i in val_idx]
        losses[kind] = experiment.evaluate(ckpt.params, kind, val_set, aux, ckpt.config.epsilon)
        best_epochs[kind] = ckpt.epoch
    history_path = out_dir / "history.csv"
    histories = report.read_history_csv(history_path) if history_path.exists() else {}
    eval_report = experiment.compare_models(losses, best_epochs, histories)
    report.write_summary_csv(out_dir / "summary.csv", eval_report)
    report.write_correlations_csv(out_dir / "correlations.csv", eval_report)
    if histories:
        report.render_loss_curves(out_dir / "loss_curves.png", histories)
    report.render_loss_histogram(out_dir / "loss_histogram.png", eval_report)
    report.render_correlation_heatmap(out_dir / "correlations.png", eval_report)
    for kind in eval_report.model_names:
        print(
            f"{kind}: mean {eval_report.means[kind]:.4f} "
            f"CI [{eval_report.ci_low[kind]:.4f}, {eval_report.ci_high[kind]:.4f}]"
        )
    return 0


def cmd_explain(args) -> int:
    opts = _resolve(args)
    out_dir = Path(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    if opts["traj_id"] is None:
        raise CompsnnError("explain needs --traj-id")
    model_flag = opts["model"] if opts["model"] != "all" else "compsnn"
    kind = MODEL_FLAG_TO_KIND[model_flag]
    if kind not in ("compsnn", "single_cnn"):
        raise CompsnnError("explain uses the CNN module: --model compsnn or cnn")
    ckpt_path = out_dir / f"checkpoint_{kind}.json"
    if not ckpt_path.exists():
        raise CompsnnError(f"no checkpoint at {ckpt_path}; run train first")
    ckpt = load_checkpoint(ckpt_path)
    stats = experiment.NormalizationStats.from_extras(ckpt.extras)
    trajs = load_trajectories_csv(Path(opts["data_dir"]) / "trajectories.csv")
    matches = [t for t in trajs if t.id == opts["traj_id"]]
    if not matches:
        raise CompsnnError(f"trajectory {opts['traj_id']!r} not in dataset")
    raw = validate_trajectory(matches[0])
    feats = experiment.normalize_features(
        compute_feature_series(raw, FeatureConfig()).channels, stats
    )
    seg_path = out_dir / "segmentation.json"
    if not seg_path.exists():
        raise CompsnnError(f"no segmentation at {seg_path}; run graph first")
    grid, _ = segmentation_from_json(seg_path.read_text(encoding="utf-8"))
    maps = [explain.export_activation_map(ckpt.params, feats, raw, "attention")]
    n_channels = ckpt.params["cnn.feat.k"].value.shape[0]
    for c in range(n_channels):
        maps.append(explain.export_activation_map(ckpt.params, feats, raw, "feature", c))
        maps.append(explain.export_activation_map(ckpt.params, feats, raw, "a_x_f", c))
    for amap in maps:
        base = out_dir / f"explain_{raw.id}_{amap.channel}"
        base.with_suffix(".svg").write_text(explain.render_svg(amap, grid), encoding="utf-8")
        explain.write_activation_csv(base.with_suffix(".csv"), amap)
    print(f"wrote {len(maps)} activation maps for {raw.id} to {out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    opts = _resolve(args)
    results = gradcheck.run_suite(opts["seed"])
    worst = 0.0
    ok = True
    for name, err, tol in results:
        status = "ok" if err < tol else "FAIL"
        ok &= err < tol
        worst = max(worst, err)
        print(f"{name}: max relative error {err:.3e} (tol {tol:.0e}) {status}")
    print(f"max relative error overall: {worst:.3e}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="compsnn",
        description="Composite-signal trajectory analysis pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file mirroring the flags; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--data-dir", dest="data_dir")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--cell-size", dest="cell_size", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch", type=int)
        p.add_argument("--filters", type=int)
        p.add_argument("--degree", type=int)
        p.add_argument("--model", choices=["compsnn", "cnn", "gcnn", "mlp", "all"])
        p.add_argument("--traj-id", dest="traj_id")

    for name, func, help_text in (
        ("synth", cmd_synth, "write a synthetic dataset (CSV + schema)"),
        ("graph", cmd_graph, "build segmentation, graph, and spectrum artifacts"),
        ("train", cmd_train, "train one or all model kinds"),
        ("eval", cmd_eval, "write summary/correlation reports and figures"),
        ("explain", cmd_explain, "render CNN activation maps for a trajectory"),
        ("gradcheck", cmd_gradcheck, "validate all backward passes"),
    ):
        p = sub.add_parser(name, help=help_text)
        add_common(p)
        if name == "synth":
            p.add_argument("--n-traj", dest="n_traj", type=int)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CompsnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
