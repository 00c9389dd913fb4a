"""Command-line pipeline: simulate, ingest, fuse, cv, train, monitor,
evaluate, importance.

Every command takes ``--out DIR``, writes exactly one ``manifest.json``
there (command, effective config, input digests, seed, tool version,
wall clock), and is deterministic given its inputs and ``--seed``.
Config precedence is flags > ``--config`` JSON file > defaults.  Module
errors exit non-zero with a machine-readable JSON line on stderr:
exit 2 for input problems, 3 for degenerate training data.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, boosting, io
from .data import Epoch
from .errors import (
    DegenerateData,
    HazardForgeError,
    InputError,
    MissingFile,
    SchemaMismatch,
)
from .fusion import (
    EmbeddingStream,
    add_recurrence_features,
    embedding_schema,
    fuse_embeddings,
    locf_discretize,
    mark_events,
    recurrence_schema,
    widen_for_embeddings,
)
from .metrics import (
    DEFAULT_TIME_BINS,
    auct,
    episode_score,
    f1_optimal_threshold,
    lead_times,
    outcomes_at,
    roc_pr_curves,
)
from .model_selection import CvGrid, cross_validate
from .simulate import simulate

TRAIN_DEFAULTS = {
    "depth": 2,
    "trees": 100,
    "nu": 0.1,
    "max_quantile_bins": 256,
    "min_hessian_per_leaf": 1e-6,
    "leaf_value_clamp": 5.0,
}


def _require(path, kind):
    if path is None or not os.path.exists(path):
        raise MissingFile(kind, path)
    return path


def _effective(args, defaults: dict) -> dict:
    """flags > config file > defaults, for the keys in ``defaults``."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path is not None:
        _require(config_path, "ConfigMissing")
        with open(config_path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{config_path}: invalid JSON: {exc}") from exc
        for key in defaults:
            if key in doc:
                merged[key] = doc[key]
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _out_dir(args) -> str:
    out = args.out
    if out is None:
        raise InputError("--out is required")
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out, command, config, inputs, seed, t0):
    doc = {
        "command": command,
        "config": config,
        "inputs": {name: io.file_digest(path) for name, path in inputs.items()},
        "seed": seed,
        "tool_version": __version__,
        "wall_clock_seconds": round(time.monotonic() - t0, 3),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ":" in text:
        lo, hi, step = (int(p) for p in text.split(":"))
        return tuple(range(lo, hi + 1, step))
    return tuple(int(p) for p in text.split(","))


def _parse_bins(text: str) -> tuple[tuple[float, float], ...]:
    edges = [float(p) for p in text.split(",")]
    if len(edges) < 2 or edges != sorted(edges):
        raise InputError(f"--bins must be ascending edges, got {text!r}")
    bins = list(zip(edges[:-1], edges[1:]))
    bins.append((edges[-1], math.inf))
    return tuple(bins)


def _train_config(cfg: dict) -> boosting.TrainConfig:
    return boosting.TrainConfig(
        max_depth=int(cfg["depth"]),
        num_trees=int(cfg["trees"]),
        nu=float(cfg["nu"]),
        max_quantile_bins=int(cfg["max_quantile_bins"]),
        min_hessian_per_leaf=float(cfg["min_hessian_per_leaf"]),
        leaf_value_clamp=float(cfg["leaf_value_clamp"]),
    )


def cmd_simulate(args):
    t0 = time.monotonic()
    out = _out_dir(args)
    scenario_path = _require(args.scenario, "ScenarioMissing")
    spec = io.read_scenario_json(scenario_path)
    if args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=args.seed)
    cohort = simulate(spec)
    io.write_episodes_csv(os.path.join(out, "data.csv"), cohort.episodes, cohort.schema)
    io.write_schema_json(os.path.join(out, "schema.json"), cohort.schema)
    if cohort.streams:
        io.write_embeddings_jsonl(
            os.path.join(out, "embeddings.jsonl"),
            [cohort.streams[e.episode_id] for e in cohort.episodes if e.episode_id in cohort.streams],
        )
    with open(os.path.join(out, "truth.json"), "w") as fh:
        json.dump(
            {
                "scenario": io.scenario_to_dict(spec),
                "lambda_max": cohort.truth.lambda_max,
                "seed": spec.seed,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _write_manifest(out, "simulate", io.scenario_to_dict(spec), {"scenario": scenario_path}, spec.seed, t0)


def cmd_ingest(args):
    t0 = time.monotonic()
    out = _out_dir(args)
    data_path = _require(args.data, "DataMissing")
    streams = io.read_raw_observations_csv(data_path)
    if not streams:
        raise InputError(f"{data_path}: no observations")
    grid = float(args.grid_step if args.grid_step is not None else 1.0)
    start = float(args.monitoring_start if args.monitoring_start is not None else 24.0)

    feature_names: list[str] = []
    categories: dict[str, set] = {}
    for stream in streams:
        for _, feature, value in stream.entries:
            if feature not in feature_names:
                feature_names.append(feature)
            if isinstance(value, str):
                categories.setdefault(feature, set()).add(value)
    cat_map = {f: sorted(v) for f, v in categories.items()}

    events = io.read_events_csv(args.events) if args.events else {}
    inputs = {"data": data_path}
    if args.events:
        _require(args.events, "EventsMissing")
        inputs["events"] = args.events

    episodes = []
    schema = None
    for stream in streams:
        episode, schema = locf_discretize(stream, grid, start, feature_names, cat_map)
        times = events.get(episode.episode_id, [])
        if times:
            episode = mark_events(episode, times)
        episode = add_recurrence_features(episode, times)
        episodes.append(episode)
    schema = recurrence_schema(schema)

    io.write_episodes_csv(os.path.join(out, "episodes.csv"), episodes, schema)
    io.write_schema_json(os.path.join(out, "schema.json"), schema)
    _write_manifest(
        out,
        "ingest",
        {"grid_step": grid, "monitoring_start": start},
        inputs,
        args.seed,
        t0,
    )


def cmd_fuse(args):
    t0 = time.monotonic()
    out = _out_dir(args)
    data_path = _require(args.data, "DataMissing")
    schema_path = _require(args.schema, "SchemaMissing")
    emb_path = _require(args.embeddings, "EmbeddingsMissing")
    schema = io.read_schema_json(schema_path)
    episodes = io.read_episodes_csv(data_path, schema)
    streams = io.read_embeddings_jsonl(emb_path)
    dims = {s.dim for s in streams.values() if s.times.size}
    if len(dims) > 1:
        raise SchemaMismatch(f"{emb_path}: inconsistent embedding widths {sorted(dims)}")
    if not dims:
        raise InputError(f"{emb_path}: no embedding entries")
    dim = dims.pop()

    fused_schema = embedding_schema(schema, dim)
    fused = []
    for episode in episodes:
        widened = widen_for_embeddings(episode, dim)
        stream = streams.get(
            episode.episode_id, EmbeddingStream(episode.episode_id, [], np.empty((0, dim)))
        )
        fused.append(fuse_embeddings(widened, stream, fused_schema))
    io.write_episodes_csv(os.path.join(out, "episodes.csv"), fused, fused_schema)
    io.write_schema_json(os.path.join(out, "schema.json"), fused_schema)
    _write_manifest(
        out,
        "fuse",
        {"embedding_dim": dim},
        {"data": data_path, "schema": schema_path, "embeddings": emb_path},
        args.seed,
        t0,
    )


def cmd_train(args):
    t0 = time.monotonic()
    out = _out_dir(args)
    data_path = _require(args.data, "DataMissing")
    schema_path = _require(args.schema, "SchemaMissing")
    schema = io.read_schema_json(schema_path)
    episodes = io.read_episodes_csv(data_path, schema)
    cfg = _effective(args, TRAIN_DEFAULTS)
    model = boosting.train(episodes, schema, _train_config(cfg))
    io.write_model_json(os.path.join(out, "model.json"), model)
    with open(os.path.join(out, "training_log.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "nll"])
        for i, nll in enumerate(model.train_nll_path):
            writer.writerow([i, repr(nll)])
    _write_manifest(out, "train", cfg, {"data": data_path, "schema": schema_path}, args.seed, t0)


def cmd_cv(args):
    t0 = time.monotonic()
    out = _out_dir(args)
    data_path = _require(args.data, "DataMissing")
    schema_path = _require(args.schema, "SchemaMissing")
    schema = io.read_schema_json(schema_path)
    episodes = io.read_episodes_csv(data_path, schema)
    cfg = _effective(args, TRAIN_DEFAULTS)
    grid = CvGrid(
        depths=_parse_int_list(args.grid_depths) if args.grid_depths else CvGrid().depths,
        tree_counts=_parse_int_list(args.grid_trees) if args.grid_trees else CvGrid().tree_counts,
    )
    folds = int(args.folds) if args.folds is not None else 5
    seed = args.seed if args.seed is not None else 0
    base = _train_config({**cfg, "depth": 1, "trees": 1})
    result = cross_validate(episodes, schema, grid, folds, seed, base)
    with open(os.path.join(out, "cv_grid.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["depth", "trees", "mean_nll", "se"])
        for cell in result.cells:
            writer.writerow([cell.depth, cell.trees, repr(cell.mean_nll), repr(cell.se)])
    with open(os.path.join(out, "selected.json"), "w") as fh:
        json.dump({"depth": result.selected[0], "trees": result.selected[1]}, fh, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out,
        "cv",
        {**cfg, "folds": folds, "grid_depths": list(grid.depths), "grid_trees": list(grid.tree_counts)},
        {"data": data_path, "schema": schema_path},
        seed,
        t0,
    )


def cmd_evaluate(args):
    t0 = time.monotonic()
    out = _out_dir(args)
    model_path = _require(args.model, "ModelMissing")
    data_path = _require(args.data, "DataMissing")
    model = io.read_model_json(model_path)
    schema = model.schema
    inputs = {"model": model_path, "data": data_path}
    if args.schema is not None:
        _require(args.schema, "SchemaMissing")
        file_schema = io.read_schema_json(args.schema)
        if file_schema.feature_names != schema.feature_names:
            raise SchemaMismatch("--schema does not match the model's schema")
        inputs["schema"] = args.schema
    episodes = io.read_episodes_csv(data_path, schema)
    traces = boosting.monitoring_traces(model, episodes)
    scored = [episode_score(t) for t in traces]
    curves = roc_pr_curves(scored)
    rho_star = f1_optimal_threshold(scored)
    rho_used = float(args.rho) if args.rho is not None else rho_star
    bins = _parse_bins(args.bins) if args.bins else DEFAULT_TIME_BINS
    bin_rows = auct(traces, bins)
    leads, histogram = lead_times(traces, rho_used)
    outcomes = outcomes_at(traces, rho_used)

    metrics_doc = {
        "auroc": curves.auroc,
        "auc_pr": curves.auc_pr,
        "rho_star": rho_star,
        "rho_used": rho_used,
        "auct_bins": [
            {
                "t_lo": b.t_lo,
                "t_hi": b.t_hi,
                "value": b.value,
                "ci_low": b.ci_low,
                "ci_high": b.ci_high,
                "n_event_times": b.n_event_times,
            }
            for b in bin_rows
        ],
        "lead_time_histogram": [
            {"lo": lo, "hi": hi, "count": count} for lo, hi, count in histogram
        ],
    }
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(metrics_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "roc_points.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for thr, fpr, tpr in curves.roc:
            writer.writerow([repr(float(thr)), repr(float(fpr)), repr(float(tpr))])
    with open(os.path.join(out, "pr_points.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "recall", "precision"])
        for thr, recall, precision in curves.pr:
            writer.writerow([repr(float(thr)), repr(float(recall)), repr(float(precision))])
    with open(os.path.join(out, "auct_bins.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_lo", "t_hi", "value", "ci_low", "ci_high", "n_event_times"])
        for b in bin_rows:
            writer.writerow(
                [
                    repr(b.t_lo),
                    repr(b.t_hi),
                    "" if b.value is None else repr(b.value),
                    "" if b.ci_low is None else repr(b.ci_low),
                    "" if b.ci_high is None else repr(b.ci_high),
                    b.n_event_times,
                ]
            )
    with open(os.path.join(out, "outcomes.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode_id", "score", "label", "flag_time", "outcome"])
        for o in outcomes:
            writer.writerow(
                [
                    o.episode_id,
                    repr(o.score),
                    "positive" if o.label else "negative",
                    "" if o.flag_time is None else repr(o.flag_time),
                    o.outcome,
                ]
            )
    _write_manifest(out, "evaluate", {"rho": rho_used, "bins": args.bins}, inputs, args.seed, t0)


def cmd_importance(args):
    t0 = time.monotonic()
    out = _out_dir(args)
    model_path = _require(args.model, "ModelMissing")
    model = io.read_model_json(model_path)
    ranking = boosting.variable_importance(model)
    with open(os.path.join(out, "importance.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "importance"])
        for name, value in ranking.items():
            writer.writerow([name, repr(value)])
    _write_manifest(out, "importance", {}, {"model": model_path}, args.seed, t0)


def _monitor_epoch_rows(model, epoch, stream, block):
    if stream is not None:
        from .fusion import fuse_epoch

        pieces = fuse_epoch(epoch, stream, block)
    else:
        pieces = [epoch]
    starts, ends, values = boosting.hazard_steps(model, pieces)
    return zip(starts, ends, values)


def cmd_monitor(args):
    t0 = time.monotonic()
    out = _out_dir(args)
    model_path = _require(args.model, "ModelMissing")
    data_path = _require(args.data, "DataMissing")
    model = io.read_model_json(model_path)
    schema = model.schema
    streams = {}
    inputs = {"model": model_path, "data": data_path}
    if args.embeddings is not None:
        _require(args.embeddings, "EmbeddingsMissing")
        streams = io.read_embeddings_jsonl(args.embeddings)
        inputs["embeddings"] = args.embeddings

    block = schema.embedding_slice()
    full = list(schema.feature_names)
    if block is not None:
        tabular = full[: block.start] + full[block.stop :]
    else:
        tabular = full

    out_path = os.path.join(out, "hazards.csv")
    n_errors = 0
    with open(data_path, newline="") as src, open(out_path, "w", newline="") as dst:
        reader = csv.reader(src)
        writer = csv.writer(dst)
        writer.writerow(["episode_id", "t_start", "t_end", "hazard"])
        dst.flush()
        header = next(reader, None)
        if header is None:
            _write_manifest(out, "monitor", {}, inputs, args.seed, t0)
            return
        names = [c for c in header[5:] if c != "censored_admin"]
        if names == full:
            fuse_mode = False
        elif block is not None and names == tabular:
            fuse_mode = True
        else:
            raise SchemaMismatch(f"{data_path}: columns match neither the model schema nor its tabular prefix")

        for line_no, row in enumerate(reader, start=2):
            try:
                if len(row) != len(header):
                    raise InputError(f"expected {len(header)} fields, got {len(row)}")
                values = [
                    math.nan if cell == "" else float(cell)
                    for cell in row[5 : 5 + len(names)]
                ]
                if fuse_mode:
                    cov = np.full(schema.width, np.nan)
                    cov[: block.start] = values[: block.start]
                    cov[block.stop :] = values[block.start :]
                else:
                    cov = np.array(values)
                epoch = Epoch(float(row[2]), float(row[3]), cov, int(row[4]))
                stream = streams.get(row[1]) if fuse_mode else None
                for start, end, value in _monitor_epoch_rows(model, epoch, stream, block):
                    writer.writerow([row[1], repr(float(start)), repr(float(end)), repr(float(value))])
                dst.flush()
            except (HazardForgeError, ValueError) as exc:
                n_errors += 1
                print(
                    json.dumps({"error": {"kind": type(exc).__name__, "message": str(exc), "line": line_no}}),
                    file=sys.stderr,
                )
    _write_manifest(out, "monitor", {"errors": n_errors}, inputs, args.seed, t0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazardforge",
        description="Continuous-time risk monitoring with boosted hazard models.",
    )
    sub = parser.add_subparsers(dest="command")

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="JSON config file (flags win)")
        return p

    p = add("simulate", cmd_simulate, "generate a synthetic cohort with known hazard")
    p.add_argument("--scenario", help="scenario JSON file")

    p = add("ingest", cmd_ingest, "discretize raw observations into episodes")
    p.add_argument("--data", help="raw observation CSV")
    p.add_argument("--events", default=None, help="episode_id,event_time CSV")
    p.add_argument("--grid-step", dest="grid_step", type=float, default=None)
    p.add_argument("--monitoring-start", dest="monitoring_start", type=float, default=None)

    p = add("fuse", cmd_fuse, "merge an embedding stream into episodes")
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--embeddings")

    p = add("train", cmd_train, "fit the boosted hazard model")
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--nu", type=float, default=None)

    p = add("cv", cmd_cv, "cross-validate depth and tree count")
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--grid-depths", dest="grid_depths", default=None)
    p.add_argument("--grid-trees", dest="grid_trees", default=None)
    p.add_argument("--nu", type=float, default=None)

    p = add("evaluate", cmd_evaluate, "run the evaluation battery")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--schema", default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--bins", default=None, help="ascending bin edges, e.g. 0,24,48,72")

    p = add("monitor", cmd_monitor, "stream per-epoch hazards")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--embeddings", default=None)

    p = add("importance", cmd_importance, "normalized per-feature split gains")
    p.add_argument("--model")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "handler"):
        parser.print_help()
        return 2
    try:
        args.handler(args)
        return 0
    except MissingFile as exc:
        print(json.dumps({"error": {"kind": exc.kind, "message": str(exc)}}), file=sys.stderr)
        return 2
    except DegenerateData as exc:
        print(json.dumps({"error": {"kind": "DegenerateData", "message": str(exc)}}), file=sys.stderr)
        return 3
    except HazardForgeError as exc:
        print(json.dumps({"error": {"kind": type(exc).__name__, "message": str(exc)}}), file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(json.dumps({"error": {"kind": "InputError", "message": str(exc)}}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
