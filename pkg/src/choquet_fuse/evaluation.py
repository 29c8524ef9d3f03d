"""Metrics, stratified cross-validation and the exponent grid search.

Every fold undersamples its training split only, fits the base learners
on the balanced split, derives the fusion statistics from the learners'
training-set predictions, and scores all methods on the untouched test
split.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .adaptive import AdaptiveConfig
from .data import Dataset, random_undersample_indices
from .errors import ConfigError, DegenerateLabelsError
from .fusion import FusionModel, majority_vote, owa_fuse, vote_scores
from .learners import CONFIG_TYPES, LearnerModel, fit_learner, hard_labels

DEFAULT_LEARNERS = ("gradient_boosting", "adaboost", "logistic")
FUSED = "choquet"
BASELINES = ("majority_vote", "owa_optimistic", "owa_pessimistic")
DEFAULT_GRID = tuple(round(0.1 * k, 1) for k in range(11))


# --------------------------------------------------------------------------
# metrics


def _binary(labels, positive_class: int) -> np.ndarray:
    labels = np.asarray(labels).ravel()
    pos = labels == positive_class
    if pos.all() or not pos.any():
        raise DegenerateLabelsError("metric needs both classes among the labels")
    return pos


def auc(scores, labels, positive_class: int = 1) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted as half."""
    pos = _binary(labels, positive_class)
    s = np.asarray(scores, dtype=float).ravel()
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    # average ranks over runs of equal scores
    edges = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.concatenate([[0], edges])
    ends = np.concatenate([edges, [s.size]])
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = 0.5 * (a + 1 + b)
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_counts(predictions, labels, positive_class: int = 1) -> dict[str, int]:
    pred = np.asarray(predictions).ravel() == positive_class
    true = np.asarray(labels).ravel() == positive_class
    return {"tp": int(np.sum(pred & true)), "fn": int(np.sum(~pred & true)),
            "tn": int(np.sum(~pred & ~true)), "fp": int(np.sum(pred & ~true))}


def g_mean(predictions, labels, positive_class: int = 1) -> float:
    """sqrt(sensitivity * specificity)."""
    _binary(labels, positive_class)
    c = confusion_counts(predictions, labels, positive_class)
    tpr = c["tp"] / (c["tp"] + c["fn"])
    tnr = c["tn"] / (c["tn"] + c["fp"])
    return math.sqrt(tpr * tnr)


def roc_curve(scores, labels, positive_class: int = 1):
    """(fpr, tpr, thresholds) with one point per distinct score, highest first."""
    pos = _binary(labels, positive_class)
    s = np.asarray(scores, dtype=float).ravel()
    order = np.argsort(-s, kind="mergesort")
    s_sorted, pos_sorted = s[order], pos[order]
    last = np.concatenate([np.flatnonzero(np.diff(s_sorted)), [s.size - 1]])
    tps = np.cumsum(pos_sorted)[last]
    fps = (last + 1) - tps
    tpr = np.concatenate([[0.0], tps / pos.sum()])
    fpr = np.concatenate([[0.0], fps / (~pos).sum()])
    thresholds = np.concatenate([[np.inf], s_sorted[last]])
    return fpr, tpr, thresholds


# --------------------------------------------------------------------------
# folds


def stratified_folds(labels, folds: int, seed) -> np.ndarray:
    """Fold id per sample.

    Samples are shuffled within each class, the classes are concatenated,
    and fold ids are dealt round-robin along that sequence: fold sizes
    differ by at most one and each class is spread evenly.
    """
    y = np.asarray(labels).ravel()
    if folds < 2:
        raise ConfigError(f"need at least 2 folds, got {folds}")
    if folds > y.size:
        raise ConfigError(f"cannot make {folds} folds from {y.size} samples")
    rng = np.random.default_rng(seed)
    sequence = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in np.unique(y)])
    assignment = np.empty(y.size, dtype=np.int64)
    assignment[sequence] = np.arange(y.size) % folds
    return assignment


# --------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class PipelineConfig:
    learners: tuple[str, ...] = DEFAULT_LEARNERS
    learner_configs: dict = field(default_factory=dict)
    adaptive: AdaptiveConfig = AdaptiveConfig()
    use_views: bool = False
    table_source: str = "train"
    calibration_fraction: float = 0.3
    positive_class: int = 1

    def __post_init__(self):
        object.__setattr__(self, "learners", tuple(self.learners))
        if not self.learners:
            raise ConfigError("at least one base learner is required")
        for kind in self.learners:
            if kind not in CONFIG_TYPES:
                raise ConfigError(f"unknown learner {kind!r}; choose from {sorted(CONFIG_TYPES)}")
        if self.table_source not in ("train", "calibration"):
            raise ConfigError("table_source must be 'train' or 'calibration'")
        if not 0.0 < self.calibration_fraction < 1.0:
            raise ConfigError("calibration_fraction must lie in (0, 1)")
        if self.positive_class not in (0, 1):
            raise ConfigError("positive_class must be 0 or 1")

    def learner_config(self, kind: str):
        return self.learner_configs.get(kind) or CONFIG_TYPES[kind]()

    def method_names(self) -> list[str]:
        names, seen = [], {}
        for kind in self.learners:
            seen[kind] = seen.get(kind, 0) + 1
            names.append(kind if self.learners.count(kind) == 1 else f"{kind}_{seen[kind]}")
        return names

    def snapshot(self) -> dict:
        return {
            "learners": list(self.learners),
            "learner_configs": {k: asdict(self.learner_config(k)) for k in dict.fromkeys(self.learners)},
            "adaptive": asdict(self.adaptive),
            "use_views": self.use_views,
            "table_source": self.table_source,
            "calibration_fraction": self.calibration_fraction,
            "positive_class": self.positive_class,
        }


def learner_columns(ds: Dataset, pipeline: PipelineConfig) -> list[list[int] | None]:
    if not pipeline.use_views:
        return [None] * len(pipeline.learners)
    views = ds.views()
    if not views:
        raise ConfigError("use_views is set but no feature names carry a v<k>_ prefix")
    return [views[i % len(views)] for i in range(len(pipeline.learners))]


def fit_ensemble(ds: Dataset, pipeline: PipelineConfig, seed) -> tuple[list[LearnerModel], FusionModel]:
    """Fit base learners and fusion statistics on an (already balanced) dataset."""
    if np.unique(ds.y).size < 2:
        raise DegenerateLabelsError("training data holds a single class")
    fit_rows = np.arange(ds.n_samples)
    table_rows = fit_rows
    if pipeline.table_source == "calibration":
        cal_mask = np.zeros(ds.n_samples, dtype=bool)
        rng = np.random.default_rng(seed)
        for c in np.unique(ds.y):
            idx = rng.permutation(np.flatnonzero(ds.y == c))
            cal_mask[idx[: max(1, int(round(pipeline.calibration_fraction * idx.size)))]] = True
        fit_rows, table_rows = np.flatnonzero(~cal_mask), np.flatnonzero(cal_mask)
    models = []
    for kind, cols in zip(pipeline.learners, learner_columns(ds, pipeline)):
        X = ds.X[fit_rows] if cols is None else ds.X[np.ix_(fit_rows, cols)]
        model = fit_learner(kind, X, ds.y[fit_rows], pipeline.learner_config(kind))
        model.columns = cols
        models.append(model)
    table_X = ds.X[table_rows]
    preds = np.stack([hard_labels(m.predict_supports(table_X)) for m in models])
    fusion = FusionModel.fit(preds, ds.y[table_rows], 2, pipeline.adaptive, pipeline.positive_class)
    return models, fusion


def support_tensor(models: Sequence[LearnerModel], X) -> np.ndarray:
    """N x P x M supports of every model on ``X``."""
    return np.stack([m.predict_supports(X) for m in models], axis=1)


@dataclass
class FoldArtifacts:
    fold: int
    test_index: np.ndarray
    train_size: int
    balanced_size: int
    balanced_counts: tuple[int, int]
    supports: np.ndarray
    labels: np.ndarray
    fusion: FusionModel


def fit_fold(ds: Dataset, fold_ids: np.ndarray, fold: int, pipeline: PipelineConfig, seed) -> FoldArtifacts:
    test = np.flatnonzero(fold_ids == fold)
    train = np.flatnonzero(fold_ids != fold)
    for name, rows in (("training", train), ("test", test)):
        if np.unique(ds.y[rows]).size < 2:
            raise DegenerateLabelsError(f"fold {fold}: {name} split lacks one of the classes")
    balanced = train[random_undersample_indices(ds.y[train], [int(seed), fold])]
    bal_ds = ds.subset(balanced)
    models, fusion = fit_ensemble(bal_ds, pipeline, [int(seed), fold])
    counts = np.bincount(bal_ds.y, minlength=2)
    return FoldArtifacts(fold, test, train.size, balanced.size, (int(counts[0]), int(counts[1])),
                         support_tensor(models, ds.X[test]), ds.y[test], fusion)


def score_methods(art: FoldArtifacts, pipeline: PipelineConfig,
                  adaptive: AdaptiveConfig | None = None) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """(predictions, ranking scores) on a fold's test split for every method."""
    pos = pipeline.positive_class
    h = art.supports
    out = {}
    for i, name in enumerate(pipeline.method_names()):
        out[name] = (hard_labels(h[:, i, :]), h[:, i, pos])
    fusion = art.fusion if adaptive is None else art.fusion.with_config(adaptive)
    fused = fusion.fuse(h)
    out[FUSED] = (np.array([o.predicted for o in fused]), np.array([o.score for o in fused]))
    out["majority_vote"] = (majority_vote(h), vote_scores(h, pos))
    for mode in ("optimistic", "pessimistic"):
        res = owa_fuse(h, mode, pos)
        out[f"owa_{mode}"] = (np.array([o.predicted for o in res]), np.array([o.score for o in res]))
    return out


@dataclass
class EvalReport:
    method: str
    auc_folds: list[float]
    gmean_folds: list[float]
    confusion: dict[str, int]
    seed: int
    config: dict = field(default_factory=dict)

    @property
    def auc_mean(self) -> float:
        return float(np.mean(self.auc_folds))

    @property
    def gmean_mean(self) -> float:
        return float(np.mean(self.gmean_folds))

    def to_dict(self) -> dict:
        return {"method": self.method, "auc_folds": self.auc_folds, "auc_mean": self.auc_mean,
                "gmean_folds": self.gmean_folds, "gmean_mean": self.gmean_mean,
                "confusion": self.confusion}


@dataclass
class CVResult:
    reports: dict[str, EvalReport]
    fold_ids: np.ndarray
    folds: int
    seed: int
    config: dict
    provenance: str
    fold_sizes: list[dict]
    curves: dict = field(default_factory=dict, repr=False)

    def methods(self) -> list[str]:
        return list(self.reports)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "folds": self.folds,
            "dataset": self.provenance,
            "config": self.config,
            "fold_sizes": self.fold_sizes,
            "metric_units": "percent",
            "methods": [r.to_dict() for r in self.reports.values()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table_rows(self) -> list[tuple[str, str, float, float]]:
        groups = ("Base classifiers", "Conventional combination methods", "Fuzzy integral combination")
        rows = []
        for name, rep in self.reports.items():
            if name == FUSED:
                group = groups[2]
            elif name in BASELINES:
                group = groups[1]
            else:
                group = groups[0]
            rows.append((group, name, rep.auc_mean, rep.gmean_mean))
        return sorted(rows, key=lambda r: groups.index(r[0]))

    def table_text(self) -> str:
        lines = [f"{'Group':<34}{'Method':<22}{'AUC':>8}{'G-mean':>9}"]
        for group, name, a, g in self.table_rows():
            lines.append(f"{group:<34}{name:<22}{a:>8.2f}{g:>9.2f}")
        return "\n".join(lines) + "\n"

    def table_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["group", "method", "auc", "g_mean"])
        for group, name, a, g in self.table_rows():
            writer.writerow([group, name, f"{a:.4f}", f"{g:.4f}"])
        return buf.getvalue()

    def curves_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "fold", "fpr", "tpr", "threshold"])
        for (method, fold), (fpr, tpr, thr) in self.curves.items():
            for a, b, t in zip(fpr, tpr, thr):
                writer.writerow([method, fold, repr(float(a)), repr(float(b)), repr(float(t))])
        return buf.getvalue()


def _fit_all_folds(ds, fold_ids, folds, pipeline, seed, workers) -> list[FoldArtifacts]:
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = [pool.submit(fit_fold, ds, fold_ids, f, pipeline, seed) for f in range(folds)]
            return [job.result() for job in jobs]
    return [fit_fold(ds, fold_ids, f, pipeline, seed) for f in range(folds)]


def cross_validate(ds: Dataset, folds: int = 5, pipeline: PipelineConfig = PipelineConfig(),
                   seed: int = 0, workers: int = 1) -> CVResult:
    fold_ids = stratified_folds(ds.y, folds, seed)
    arts = _fit_all_folds(ds, fold_ids, folds, pipeline, seed, workers)
    pos = pipeline.positive_class
    collected: dict[str, dict] = {}
    curves = {}
    for art in arts:
        for name, (pred, score) in score_methods(art, pipeline).items():
            slot = collected.setdefault(name, {"auc": [], "gmean": [], "confusion": []})
            slot["auc"].append(100.0 * auc(score, art.labels, pos))
            slot["gmean"].append(100.0 * g_mean(pred, art.labels, pos))
            slot["confusion"].append(confusion_counts(pred, art.labels, pos))
            curves[(name, art.fold)] = roc_curve(score, art.labels, pos)
    snapshot = pipeline.snapshot()
    reports = {}
    for name, slot in collected.items():
        conf = {k: sum(c[k] for c in slot["confusion"]) for k in ("tp", "fn", "tn", "fp")}
        reports[name] = EvalReport(name, slot["auc"], slot["gmean"], conf, int(seed), snapshot)
    sizes = [{"fold": a.fold, "test": int(a.test_index.size), "train": a.train_size,
              "balanced_train": a.balanced_size, "balanced_counts": list(a.balanced_counts)}
             for a in arts]
    return CVResult(reports, fold_ids, folds, int(seed), snapshot, ds.provenance, sizes, curves)


@dataclass
class GridSearchResult:
    best: tuple[float, float]
    table: dict[tuple[float, float], float]
    folds: int
    seed: int
    protocol: str = "same-cv"

    def to_dict(self) -> dict:
        return {
            "best": {"w1": self.best[0], "w2": self.best[1], "auc": self.table[self.best]},
            "folds": self.folds,
            "seed": self.seed,
            "protocol": self.protocol,
            "note": "validation AUC comes from the same cross-validation folds used for reporting",
            "table": [{"w1": a, "w2": b, "auc": v} for (a, b), v in self.table.items()],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["w1", "w2", "auc"])
        for (a, b), v in self.table.items():
            writer.writerow([a, b, repr(v)])
        return buf.getvalue()


def grid_search_weights(ds: Dataset, folds: int = 5, w1_grid: Sequence[float] = DEFAULT_GRID,
                        w2_grid: Sequence[float] = DEFAULT_GRID, seed: int = 0,
                        pipeline: PipelineConfig = PipelineConfig(), workers: int = 1) -> GridSearchResult:
    """Cross-validated fused AUC at every (w1, w2); the best pair wins,
    ties going to the lexicographically smallest pair.

    Learners and fusion statistics do not depend on the exponents, so each
    fold is fitted once and only the fusion step is repeated per grid point.
    """
    w1_grid, w2_grid = sorted(set(map(float, w1_grid))), sorted(set(map(float, w2_grid)))
    if not w1_grid or not w2_grid:
        raise ConfigError("weight grids must be non-empty")
    fold_ids = stratified_folds(ds.y, folds, seed)
    arts = _fit_all_folds(ds, fold_ids, folds, pipeline, seed, workers)
    pos = pipeline.positive_class
    table: dict[tuple[float, float], float] = {}
    for w1 in w1_grid:
        for w2 in w2_grid:
            cfg = replace(pipeline.adaptive, w1=w1, w2=w2)
            scores = []
            for art in arts:
                fused = art.fusion.with_config(cfg).fuse(art.supports)
                scores.append(100.0 * auc([o.score for o in fused], art.labels, pos))
            table[(w1, w2)] = float(np.mean(scores))
    best_value = max(table.values())
    best = min(pair for pair, v in table.items() if v == best_value)
    return GridSearchResult(best, table, folds, int(seed))
