"""Command line pipeline: generate, extract, cluster, train, evaluate, predict.

Every command reads and writes inside ``--out-dir`` unless the JSON config
points elsewhere, so a full run is::

    cluschurn generate --out-dir run
    cluschurn cluster  --out-dir run
    cluschurn train    --out-dir run --days 7
    cluschurn evaluate --out-dir run --days 3
    cluschurn predict  --out-dir run --input new_users.csv

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .baselines import LogisticRegressionGD, make_splits
from .clustering import ThreeStepClustering, classify_ego_layer
from .data import (
    churn_labels,
    default_spec,
    generate_synthetic,
    load_activities,
    save_activities,
    save_labels,
    stack_series,
)
from .exceptions import ClusChurnError, NumericalError, ValidationError
from .features import extract_feature_array, read_feature_csv, write_feature_csv
from .graph import SocialGraph, core_overlap, ego_metrics, extract_core, snapshot_paths
from .model.network import NetworkConfig
from .model.training import (
    TrainConfig,
    churn_metrics,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metrics_csv,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

DEFAULTS = {
    "seed": 0,
    "paths": {},
    "generate": {"n_users": 600, "format": "csv"},
    "clustering": {"k_range": [2, 6], "n_init": 10, "n_types": None, "type_names": None},
    "model": {"hidden_size": 64, "embed_sizes": [32], "n_layers": 1, "dropout": 0.2,
              "typing_weight": 0.1, "learning_rate": 1e-3, "batch_size": 32, "epochs": 40,
              "window": 14},
    "evaluate": {"days": list(range(1, 15)), "n_splits": 10, "ratio": 0.8,
                 "models": ["plstm_plus", "plstm", "logreg"]},
    "core_percentile": 0.05,
}

PATH_DEFAULTS = {
    "activities": "activities.csv",
    "labels": "labels.csv",
    "edges": "edges.txt",
    "snapshots": "edges",
    "features": "features.csv",
    "cluster_model": "cluster_model.json",
    "assignments": "assignments.csv",
    "churn_rates": "churn_rates.csv",
    "checkpoint": "checkpoint.json",
    "loss_trace": "loss_trace.csv",
    "predictions": "predictions.csv",
}


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args):
    cfg = DEFAULTS
    if args.config:
        try:
            with open(args.config) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(user, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ValidationError(f"unknown config section {sorted(unknown)[0]!r}")
        cfg = _merge(cfg, user)
    if args.seed is not None:
        cfg = _merge(cfg, {"seed": args.seed})
    if args.days is not None:
        if not 1 <= args.days <= 14:
            raise ValidationError(f"--days must lie in 1..14, got {args.days}")
        cfg = _merge(cfg, {"model": {"window": args.days}, "evaluate": {"days": [args.days]}})
    return cfg


def _path(cfg, out_dir, key):
    p = cfg["paths"].get(key)
    return Path(p) if p else out_dir / PATH_DEFAULTS[key]


def _require(path, hint):
    if not Path(path).exists():
        raise ValidationError(f"{path} not found; {hint}")
    return path


def _activities(cfg, out_dir):
    path = _require(_path(cfg, out_dir, "activities"), "run 'generate' or set paths.activities")
    series = load_activities(path)
    if not series:
        raise ValidationError(f"{path} holds no users")
    ids, X = stack_series(series)
    return series, ids, X


def _features(cfg, out_dir, series, ids, X):
    """Features from the extract step when they match the users, else recomputed."""
    path = _path(cfg, out_dir, "features")
    if path.exists():
        f_ids, F, _ = read_feature_csv(path, series[0].dimension_names)
        if list(f_ids) == list(ids):
            return F
    F, _ = extract_feature_array(X)
    return F


def _clusterer(cfg, seed):
    c = cfg["clustering"]
    return ThreeStepClustering(k_range=tuple(c["k_range"]), n_init=int(c["n_init"]), seed=seed,
                               n_types=c["n_types"])


def _configs(cfg, n_inputs, n_types, seed, typing_weight=None, window=None):
    m = cfg["model"]
    net = NetworkConfig(n_inputs=n_inputs, n_types=n_types, hidden_size=int(m["hidden_size"]),
                        embed_sizes=tuple(m["embed_sizes"]), n_layers=int(m["n_layers"]),
                        dropout=float(m["dropout"]))
    tc = TrainConfig(typing_weight=float(m["typing_weight"] if typing_weight is None else typing_weight),
                     learning_rate=float(m["learning_rate"]), batch_size=int(m["batch_size"]),
                     epochs=int(m["epochs"]), window=int(m["window"] if window is None else window),
                     seed=seed)
    return net, tc


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


# ------------------------------------------------------------------ commands

def cmd_generate(cfg, out_dir):
    g = cfg["generate"]
    spec = default_spec(cfg["seed"])
    ds = generate_synthetic(spec, int(g["n_users"]))
    fmt = g["format"]
    act = cfg["paths"].get("activities") or out_dir / f"activities.{fmt}"
    save_activities(ds.series, act, fmt)
    save_labels(ds.new_users, ds.archetypes, ds.churned, _path(cfg, out_dir, "labels"))
    ds.graph.write_edge_list(_path(cfg, out_dir, "edges"))
    for t, p in enumerate(snapshot_paths(_path(cfg, out_dir, "snapshots"), spec.n_days), start=1):
        ds.snapshot(t).write_edge_list(p)
    return [act]


def cmd_extract(cfg, out_dir):
    series, ids, X = _activities(cfg, out_dir)
    F, inactive = extract_feature_array(X)
    path = _path(cfg, out_dir, "features")
    write_feature_csv(ids, F, inactive, series[0].dimension_names, path)
    return [path]


def cmd_cluster(cfg, out_dir):
    series, ids, X = _activities(cfg, out_dir)
    F = _features(cfg, out_dir, series, ids, X)
    est = _clusterer(cfg, cfg["seed"]).fit(F)
    names = cfg["clustering"]["type_names"]
    if names is not None and len(names) != est.n_types_:
        raise ValidationError(f"{len(names)} type names given for {est.n_types_} clusters")
    with open(_path(cfg, out_dir, "cluster_model"), "w") as fh:
        json.dump(est.to_dict(names), fh, indent=1)
        fh.write("\n")

    with open(_path(cfg, out_dir, "assignments"), "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["user_id", "type_index"] + [f"w{k}" for k in range(est.n_types_)])
        for u, k, q in zip(ids, est.labels_, est.soft_targets_):
            w.writerow([u, int(k)] + [repr(float(v)) for v in q])

    y = churn_labels(series)
    edges = _path(cfg, out_dir, "edges")
    graph = SocialGraph.read_edge_list(edges, nodes=ids) if edges.exists() else None
    core = extract_core(graph, float(cfg["core_percentile"])) if graph is not None else None
    header = ["type_index", "name", "n_users", "churn_rate"]
    if graph is not None:
        header += ["mean_size", "mean_density", "mean_core_overlap", "ego_layer"]
    with open(_path(cfg, out_dir, "churn_rates"), "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for k in range(est.n_types_):
            members = np.flatnonzero(est.labels_ == k)
            row = [k, names[k] if names else f"type{k}", len(members),
                   repr(float(y[members].mean())) if len(members) else "nan"]
            if graph is not None:
                ego = np.array([ego_metrics(graph, ids[i]) for i in members]).reshape(-1, 2)
                ov = np.array([core_overlap(graph, ids[i], core) for i in members])
                size, dens, over = ego[:, 0].mean(), ego[:, 1].mean(), ov.mean()
                row += [repr(float(size)), repr(float(dens)), repr(float(over)),
                        classify_ego_layer(size, dens, over)]
            w.writerow(row)
    return [_path(cfg, out_dir, k) for k in ("cluster_model", "assignments", "churn_rates")]


def cmd_train(cfg, out_dir):
    series, ids, X = _activities(cfg, out_dir)
    y = churn_labels(series)
    model_path = _path(cfg, out_dir, "cluster_model")
    F = _features(cfg, out_dir, series, ids, X)
    if model_path.exists():
        with open(model_path) as fh:
            est = ThreeStepClustering.from_dict(json.load(fh))
    else:
        est = _clusterer(cfg, cfg["seed"]).fit(F)
    Q = est.transform(F)
    net, tc = _configs(cfg, X.shape[1], est.n_types_, cfg["seed"])
    model, trace = train(X, y, Q if tc.typing_weight > 0 else None, net, tc)
    save_checkpoint(model, _path(cfg, out_dir, "checkpoint"))
    with open(_path(cfg, out_dir, "loss_trace"), "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["epoch", "loss", "churn_loss", "typing_loss"])
        for e, (l, lc, lt) in enumerate(trace, start=1):
            w.writerow([e, repr(l), repr(lc), repr(lt)])
    return [_path(cfg, out_dir, "checkpoint"), _path(cfg, out_dir, "loss_trace")]


def cmd_evaluate(cfg, out_dir):
    """Sweep the observation window over seeded 8:2 splits, one CSV per model."""
    series, ids, X = _activities(cfg, out_dir)
    y = churn_labels(series)
    F = _features(cfg, out_dir, series, ids, X)
    ev = cfg["evaluate"]
    models = list(ev["models"])
    unknown = set(models) - {"plstm_plus", "plstm", "logreg"}
    if unknown:
        raise ValidationError(f"unknown model {sorted(unknown)[0]!r} in evaluate.models")
    days = [int(d) for d in ev["days"]]
    splits = make_splits(range(len(ids)), float(ev["ratio"]), int(ev["n_splits"]), cfg["seed"])
    sums = {m: {d: np.zeros(3) for d in days} for m in models}
    type_rows = []
    for s, sp in enumerate(splits):
        tr, te = np.array(sp.train), np.array(sp.test)
        need_types = any(m.startswith("plstm") for m in models)
        if need_types:
            est = _clusterer(cfg, cfg["seed"] + s).fit(F[tr])
            test_types = est.predict(F[te])
        for d in days:
            for m in models:
                if m == "logreg":
                    clf = LogisticRegressionGD(window=d).fit(X[tr], y[tr])
                    res = churn_metrics(y[te], clf.predict_proba(X[te])[:, 1])
                    sums[m][d] += (res["accuracy"], res["precision"], res["recall"])
                    continue
                lam = None if m == "plstm_plus" else 0.0
                net, tc = _configs(cfg, X.shape[1], est.n_types_, cfg["seed"] + s, lam, d)
                Q = est.soft_targets_ if tc.typing_weight > 0 else None
                model, _ = train(X[tr], y[tr], Q, net, tc)
                res = evaluate(model, X[te], y[te], d, types=test_types)
                sums[m][d] += (res["accuracy"], res["precision"], res["recall"])
                if m == "plstm_plus":
                    t = res["types"]
                    for k in range(est.n_types_):
                        type_rows.append((d, s, k, t["precision"][k], t["recall"][k]))
    written = []
    for m in models:
        path = out_dir / f"metrics_{m}.csv"
        rows = [dict(d=d, accuracy=v[0] / len(splits), precision=v[1] / len(splits),
                     recall=v[2] / len(splits)) for d, v in sums[m].items()]
        write_metrics_csv(rows, path)
        written.append(path)
    if type_rows:
        path = out_dir / "metrics_types.csv"
        with open(path, "w", newline="") as fh:
            w = _writer(fh)
            w.writerow(["d", "split", "type_index", "precision", "recall"])
            for d, s, k, p, r in type_rows:
                w.writerow([d, s, k, repr(float(p)), repr(float(r))])
        written.append(path)
    return written


def cmd_predict(cfg, out_dir, input_path=None, checkpoint=None):
    ckpt = Path(checkpoint) if checkpoint else _path(cfg, out_dir, "checkpoint")
    model = load_checkpoint(_require(ckpt, "run 'train' first or pass --checkpoint"))
    src = input_path or cfg["paths"].get("input")
    if not src:
        raise ValidationError("predict needs --input or paths.input")
    series = load_activities(_require(src, "pass an existing activity file"))
    if not series:
        raise ValidationError(f"{src} holds no users")
    ids, X = stack_series(series)
    window = model.train_config.window
    if X.shape[1] != model.config.n_inputs:
        raise ValidationError(
            f"input has {X.shape[1]} dimensions, model expects {model.config.n_inputs}")
    yhat, w = model.predict_arrays(X, window)
    path = _path(cfg, out_dir, "predictions")
    with open(path, "w", newline="") as fh:
        wr = _writer(fh)
        wr.writerow(["user_id", "churn_probability", "type_index"]
                    + [f"w{k}" for k in range(w.shape[1])])
        for u, p, row in zip(ids, yhat, w):
            wr.writerow([u, repr(float(p)), int(np.argmax(row))] + [repr(float(v)) for v in row])
    return [path]


COMMANDS = {
    "generate": cmd_generate,
    "extract": cmd_extract,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="cluschurn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--out-dir", default=".", help="directory for inputs and outputs")
        p.add_argument("--days", type=int, help="observation window d (1..14)")
        if name == "predict":
            p.add_argument("--input", help="activity file (CSV or JSON) to score")
            p.add_argument("--checkpoint", help="trained model, default <out-dir>/checkpoint.json")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "predict":
            written = cmd_predict(cfg, out_dir, args.input, args.checkpoint)
        else:
            written = COMMANDS[args.command](cfg, out_dir)
    except NumericalError as exc:
        print(f"cluschurn {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ClusChurnError, OSError, KeyError, TypeError, ValueError) as exc:
        print(f"cluschurn {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
