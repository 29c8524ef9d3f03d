"""Command-line entry point.

Subcommands: synth, prep, train, fuse, evaluate, gridsearch.
Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .data import (Dataset, generate_synthetic, load_external_predictions, preprocess_frame,
                   random_undersample, read_feature_csv)
from .errors import ConfigError, DataError, NumericalFailure
from .evaluation import auc, cross_validate, fit_ensemble, g_mean, grid_search_weights, support_tensor
from .fusion import FusionModel, outcomes_to_json, write_outcomes_csv
from .learners import hard_labels, model_from_dict

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MODEL_FORMAT = "choquet_fuse.ensemble"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_grid(text: str) -> list[float]:
    """``"0.9"``, ``"0,0.5,1"`` or an inclusive range ``"0:1:0.1"``."""
    try:
        if ":" in text:
            lo, hi, step = (float(t) for t in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            count = int(round((hi - lo) / step))
            return [round(lo + k * step, 10) for k in range(count + 1)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse weight grid {text!r}") from None


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    common.add_argument("--seed", type=int, help=f"random seed (fallback: ${cfgmod.SEED_ENV}, then 0)")
    common.add_argument("--out-dir")
    common.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    common.add_argument("--positive-class", type=int, choices=(0, 1))

    data = _Parser(add_help=False)
    data.add_argument("--data", help="feature CSV with a header row")
    data.add_argument("--label", help="label column (default: 'default')")
    data.add_argument("--prepped", action="store_true", default=None,
                      help="treat the CSV as already cleaned numeric features")
    data.add_argument("--leakage", type=_csv_list, help="comma-separated columns to drop")
    data.add_argument("--log-columns", type=_csv_list)
    data.add_argument("--corr-threshold", type=float)
    data.add_argument("--column-missing", type=float)
    data.add_argument("--row-missing", type=float)
    data.add_argument("--one-hot", action="store_true", default=None)
    data.add_argument("--no-standardize", action="store_true", default=None)

    model = _Parser(add_help=False)
    model.add_argument("--w1")
    model.add_argument("--w2")
    model.add_argument("--epsilon", type=float)
    model.add_argument("--density-floor", type=float)
    model.add_argument("--learners", type=_csv_list,
                       help="comma list of logistic, adaboost, gradient_boosting")
    model.add_argument("--views", action="store_true", default=None,
                       help="give learner i the feature block named v<i>_*")
    model.add_argument("--table-source", choices=("train", "calibration"))
    model.add_argument("--lr-learning-rate", type=float)
    model.add_argument("--lr-l2", type=float)
    model.add_argument("--lr-max-iter", type=int)
    model.add_argument("--lr-tol", type=float)
    model.add_argument("--ada-rounds", type=int)
    model.add_argument("--ada-epsilon-clip", type=float)
    model.add_argument("--gb-rounds", type=int)
    model.add_argument("--gb-shrinkage", type=float)
    model.add_argument("--gb-max-depth", type=int)
    model.add_argument("--gb-min-leaf", type=int)

    synth = _Parser(add_help=False)
    synth.add_argument("--n", type=int)
    synth.add_argument("--d", type=int)
    synth.add_argument("--default-rate", type=float)
    synth.add_argument("--separation", type=float)
    synth.add_argument("--n-views", type=int)

    folds = _Parser(add_help=False)
    folds.add_argument("--folds", type=int)

    parser = _Parser(prog="choquet-fuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common, synth], help="write a synthetic credit dataset")
    sub.add_parser("prep", parents=[common, data], help="clean a raw CSV")
    sub.add_parser("train", parents=[common, data, model], help="fit and save base learners")
    p = sub.add_parser("fuse", parents=[common, data, model], help="score with the fused model")
    p.add_argument("--model", help="ensemble JSON written by 'train'")
    p.add_argument("--predictions", help="external predictions CSV")
    p.add_argument("--calibration", help="labelled external predictions for the fusion tables")
    sub.add_parser("evaluate", parents=[common, data, model, synth, folds],
                   help="cross-validate base learners, fusion and baselines")
    sub.add_parser("gridsearch", parents=[common, data, model, synth, folds],
                   help="grid-search the adaptive exponents")
    return parser


_LEARNER_FLAGS = {
    "lr_learning_rate": ("logistic", "learning_rate"), "lr_l2": ("logistic", "l2"),
    "lr_max_iter": ("logistic", "max_iter"), "lr_tol": ("logistic", "tol"),
    "ada_rounds": ("adaboost", "rounds"), "ada_epsilon_clip": ("adaboost", "epsilon_clip"),
    "gb_rounds": ("gradient_boosting", "rounds"), "gb_shrinkage": ("gradient_boosting", "shrinkage"),
    "gb_max_depth": ("gradient_boosting", "max_depth"), "gb_min_leaf": ("gradient_boosting", "min_leaf"),
}


def resolve_config(args) -> cfgmod.RunConfig:
    base = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    doc = base.to_dict()
    a = vars(args)

    def put(section, key, flag, convert=lambda v: v):
        if a.get(flag) is not None:
            if section is None:
                doc[key] = convert(a[flag])
            else:
                doc[section][key] = convert(a[flag])

    doc["command"] = args.command
    put(None, "out_dir", "out_dir")
    put(None, "workers", "workers")
    put(None, "folds", "folds")
    put(None, "model", "model")
    put(None, "predictions", "predictions")
    put(None, "calibration_predictions", "calibration")
    put("data", "path", "data")
    put("data", "label_column", "label")
    put("data", "prepped", "prepped")
    put("prep", "leakage_columns", "leakage")
    put("prep", "log_columns", "log_columns")
    put("prep", "correlation_threshold", "corr_threshold")
    put("prep", "column_missing_threshold", "column_missing")
    put("prep", "row_missing_threshold", "row_missing")
    put("prep", "one_hot", "one_hot")
    put("prep", "standardize", "no_standardize", lambda v: not v)
    put("synthetic", "n", "n")
    put("synthetic", "d", "d")
    put("synthetic", "default_rate", "default_rate")
    put("synthetic", "class_separation", "separation")
    put("synthetic", "complementary_views", "n_views")
    put("pipeline", "learners", "learners")
    put("pipeline", "use_views", "views")
    put("pipeline", "table_source", "table_source")
    put("pipeline", "positive_class", "positive_class")
    put("adaptive", "epsilon", "epsilon")
    put("adaptive", "density_floor", "density_floor")
    for flag, (kind, key) in _LEARNER_FLAGS.items():
        if a.get(flag) is not None:
            doc["learner_configs"][kind][key] = a[flag]
    for w in ("w1", "w2"):
        if a.get(w) is not None:
            values = parse_grid(a[w])
            if args.command == "gridsearch":
                doc["grid"][w] = values
            elif len(values) != 1:
                raise UsageError(f"--{w} takes a single value for '{args.command}'")
            else:
                doc["adaptive"][w] = values[0]
    cfg = cfgmod.from_dict(doc)
    cfg.seed = cfgmod.resolve_seed(args.seed, base)
    if cfg.workers is None:
        cfg.workers = os.cpu_count() or 1
    return cfg


def _prepped_frame_to_dataset(frame, label_column: str, require_label: bool) -> tuple[Dataset, bool]:
    has_label = label_column in frame.columns
    if not has_label:
        if require_label:
            raise DataError(f"label column {label_column!r} not found")
        frame = frame.assign(**{label_column: 0})
    names = [c for c in frame.columns if c != label_column]
    bad = [c for c in names if not np.issubdtype(frame[c].dtype, np.number)]
    if bad:
        raise DataError(f"column {bad[0]!r} is not numeric; run 'prep' first")
    if frame[names].isna().any().any():
        row = int(np.flatnonzero(frame[names].isna().any(axis=1).to_numpy())[0])
        raise DataError(f"row {row} has missing values; run 'prep' first")
    labels = frame[label_column].to_numpy()
    if not np.all(np.isin(labels, (0, 1))):
        raise DataError(f"label column {label_column!r} must hold 0/1 values")
    ds = Dataset(frame[names].to_numpy(dtype=float), labels.astype(np.int64), tuple(names),
                 provenance="csv")
    return ds, has_label


def load_dataset(cfg: cfgmod.RunConfig, require_label: bool = True) -> tuple[Dataset, bool]:
    if cfg.data.path is None:
        s = cfg.synthetic
        ds = generate_synthetic(s.n, s.d, s.default_rate, s.class_separation,
                                s.complementary_views, cfg.seed)
        return ds, True
    frame = read_feature_csv(cfg.data.path)
    if cfg.data.prepped:
        ds, has_label = _prepped_frame_to_dataset(frame, cfg.data.label_column, require_label)
    else:
        ds, _ = preprocess_frame(frame, cfg.data.label_column, cfg.prep_config())
        has_label = True
    return Dataset(ds.X, ds.y, ds.feature_names, f"csv:{Path(cfg.data.path).name}"), has_label


def _out(cfg) -> Path:
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / "run_config.json").write_text(cfg.dumps(), encoding="utf-8")
    return path


def cmd_synth(cfg) -> int:
    s = cfg.synthetic
    ds = generate_synthetic(s.n, s.d, s.default_rate, s.class_separation, s.complementary_views, cfg.seed)
    out = _out(cfg)
    ds.to_csv(out / "synthetic.csv", cfg.data.label_column)
    print(f"wrote {ds.n_samples} samples x {ds.X.shape[1]} features to {out / 'synthetic.csv'} "
          f"(positive fraction {ds.y.mean():.4f})")
    return EXIT_OK


def cmd_prep(cfg) -> int:
    if cfg.data.path is None:
        raise UsageError("prep needs --data")
    frame = read_feature_csv(cfg.data.path)
    ds, report = preprocess_frame(frame, cfg.data.label_column, cfg.prep_config())
    out = _out(cfg)
    ds.to_csv(out / "cleaned.csv", cfg.data.label_column)
    (out / "prep_report.json").write_text(json.dumps(asdict(report), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    print(f"cleaned {report.rows_in} -> {report.rows_out} rows, {ds.X.shape[1]} features")
    return EXIT_OK


def cmd_train(cfg) -> int:
    ds, _ = load_dataset(cfg)
    pipeline = cfg.pipeline_config()
    balanced = random_undersample(ds, cfg.seed)
    models, fusion = fit_ensemble(balanced, pipeline, cfg.seed)
    doc = {
        "format": MODEL_FORMAT,
        "version": 1,
        "feature_names": list(ds.feature_names),
        "learners": [m.to_dict() for m in models],
        "names": pipeline.method_names(),
        "fusion": fusion.to_dict(),
    }
    out = _out(cfg)
    (out / "model.json").write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
    print(f"trained {', '.join(doc['names'])} on {balanced.n_samples} balanced samples "
          f"-> {out / 'model.json'}")
    return EXIT_OK


def _report_metrics(outcomes, labels, positive_class):
    preds = [o.predicted for o in outcomes]
    scores = [o.score for o in outcomes]
    try:
        print(f"AUC {100 * auc(scores, labels, positive_class):.2f}  "
              f"G-mean {100 * g_mean(preds, labels, positive_class):.2f}")
    except DataError:
        pass


def cmd_fuse(cfg) -> int:
    adaptive = cfg.adaptive_config()
    pos = cfg.pipeline.positive_class
    if cfg.predictions:
        ext = load_external_predictions(cfg.predictions)
        source = ext
        if cfg.calibration_predictions:
            source = load_external_predictions(cfg.calibration_predictions)
            if source.classifier_ids != ext.classifier_ids:
                raise DataError("calibration and prediction files list different classifiers")
        if source.labels is None:
            raise DataError("fusion tables need labels: add a label column or pass --calibration")
        m = ext.supports.shape[2]
        fusion = FusionModel.fit(hard_labels(source.supports).T, source.labels, m, adaptive, pos)
        supports, labels, ids = ext.supports, ext.labels, ext.sample_ids
    elif cfg.model:
        doc = json.loads(Path(cfg.model).read_text(encoding="utf-8"))
        if doc.get("format") != MODEL_FORMAT:
            raise DataError(f"{cfg.model} is not an ensemble model file")
        ds, has_label = load_dataset(cfg, require_label=False)
        missing = [n for n in doc["feature_names"] if n not in ds.feature_names]
        if missing:
            raise DataError(f"data lacks feature column {missing[0]!r} used by the model")
        cols = [ds.feature_names.index(n) for n in doc["feature_names"]]
        models = [model_from_dict(d) for d in doc["learners"]]
        fusion = FusionModel.from_dict(doc["fusion"]).with_config(adaptive)
        fusion.positive_class = pos
        supports = support_tensor(models, ds.X[:, cols])
        labels = ds.y if has_label else None
        ids = list(range(ds.n_samples))
    else:
        raise UsageError("fuse needs --predictions or --model")
    outcomes = fusion.fuse(supports)
    out = _out(cfg)
    write_outcomes_csv(out / "outcomes.csv", outcomes, ids)
    (out / "outcomes.json").write_text(outcomes_to_json(outcomes, ids) + "\n", encoding="utf-8")
    print(f"fused {len(outcomes)} samples -> {out / 'outcomes.csv'}")
    if labels is not None:
        _report_metrics(outcomes, labels, pos)
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    ds, _ = load_dataset(cfg)
    result = cross_validate(ds, cfg.folds, cfg.pipeline_config(), cfg.seed, cfg.workers)
    out = _out(cfg)
    (out / "eval_report.json").write_text(result.to_json(), encoding="utf-8")
    (out / "table.txt").write_text(result.table_text(), encoding="utf-8")
    (out / "table.csv").write_text(result.table_csv(), encoding="utf-8")
    (out / "roc_curves.csv").write_text(result.curves_csv(), encoding="utf-8")
    print(result.table_text(), end="")
    return EXIT_OK


def cmd_gridsearch(cfg) -> int:
    ds, _ = load_dataset(cfg)
    result = grid_search_weights(ds, cfg.folds, cfg.grid.w1, cfg.grid.w2, cfg.seed,
                                 cfg.pipeline_config(), cfg.workers)
    out = _out(cfg)
    (out / "grid.csv").write_text(result.to_csv(), encoding="utf-8")
    (out / "grid.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    w1, w2 = result.best
    print(f"best w1={w1} w2={w2} (mean AUC {result.table[result.best]:.2f})")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "prep": cmd_prep, "train": cmd_train, "fuse": cmd_fuse,
            "evaluate": cmd_evaluate, "gridsearch": cmd_gridsearch}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
