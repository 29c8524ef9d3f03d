"""Datasets: CSV ingestion and cleaning, undersampling, synthetic data,
and externally produced prediction matrices."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, DegenerateLabelsError, EmptyDatasetError, InvalidLabelError

DEFAULT_LABEL = "default"
_VIEW_RE = re.compile(r"^v(\d+)_")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    provenance: str = ""

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DataError(f"feature matrix {self.X.shape} does not match {self.y.shape[0]} labels")
        if self.X.shape[1] != len(self.feature_names):
            raise DataError("feature name count does not match the feature matrix")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, X=self.X[rows], y=self.y[rows])

    def views(self) -> list[list[int]]:
        """Column groups from ``v<k>_`` name prefixes, ordered by ``k``."""
        groups: dict[int, list[int]] = {}
        for col, name in enumerate(self.feature_names):
            m = _VIEW_RE.match(name)
            if m:
                groups.setdefault(int(m.group(1)), []).append(col)
        return [groups[k] for k in sorted(groups)]

    def to_frame(self, label_column: str = DEFAULT_LABEL) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=list(self.feature_names))
        frame[label_column] = self.y.astype(int)
        return frame

    def to_csv(self, path, label_column: str = DEFAULT_LABEL) -> None:
        self.to_frame(label_column).to_csv(path, index=False, float_format="%.17g")


@dataclass(frozen=True)
class PrepConfig:
    row_missing_threshold: float = 0.5
    column_missing_threshold: float = 0.5
    leakage_columns: tuple[str, ...] = ()
    correlation_threshold: float = 0.95
    log_columns: tuple[str, ...] = ()
    standardize: bool = True
    one_hot: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("row_missing_threshold", "column_missing_threshold", "correlation_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        object.__setattr__(self, "leakage_columns", tuple(self.leakage_columns))
        object.__setattr__(self, "log_columns", tuple(self.log_columns))


@dataclass
class PrepReport:
    rows_in: int = 0
    rows_out: int = 0
    dropped_leakage: list[str] = field(default_factory=list)
    dropped_sparse_rows: int = 0
    dropped_missing_columns: list[str] = field(default_factory=list)
    dropped_incomplete_rows: int = 0
    encoded: dict[str, list[str]] = field(default_factory=dict)
    log_transformed: list[str] = field(default_factory=list)
    dropped_correlated: list[str] = field(default_factory=list)


def _binary_labels(series: pd.Series, column: str) -> np.ndarray:
    values = pd.to_numeric(series, errors="coerce")
    if values.isna().any() or not values.isin([0, 1]).all():
        bad = series[values.isna() | ~values.isin([0, 1])].iloc[0]
        raise InvalidLabelError(f"label column {column!r} must hold 0/1 values, found {bad!r}")
    return values.to_numpy(dtype=np.int64)


def preprocess_frame(frame: pd.DataFrame, label_column: str,
                     prep: PrepConfig = PrepConfig()) -> tuple[Dataset, PrepReport]:
    """Clean a raw frame into a numeric :class:`Dataset`.

    Steps, in order: leakage columns, overly sparse rows, overly sparse
    columns, rows with any remaining gap, categorical encoding, ``log1p``,
    z-scoring, and correlation pruning (the earlier column of a correlated
    pair is kept).
    """
    if label_column not in frame.columns:
        raise DataError(f"label column {label_column!r} not found")
    report = PrepReport(rows_in=len(frame))
    df = frame.copy()
    report.dropped_leakage = [c for c in prep.leakage_columns if c in df.columns and c != label_column]
    df = df.drop(columns=report.dropped_leakage)

    features = [c for c in df.columns if c != label_column]
    if features:
        row_missing = df[features].isna().mean(axis=1)
        sparse = row_missing > prep.row_missing_threshold
        report.dropped_sparse_rows = int(sparse.sum())
        df = df.loc[~sparse]
        col_missing = df[features].isna().mean(axis=0) if len(df) else pd.Series(0.0, index=features)
        report.dropped_missing_columns = [c for c in features if col_missing[c] > prep.column_missing_threshold]
        df = df.drop(columns=report.dropped_missing_columns)
    before = len(df)
    df = df.dropna(axis=0, how="any")
    report.dropped_incomplete_rows = before - len(df)
    features = [c for c in df.columns if c != label_column]
    if len(df) == 0 or not features:
        raise EmptyDatasetError("no samples or features left after cleaning")

    y = _binary_labels(df[label_column], label_column)
    columns: dict[str, np.ndarray] = {}
    for col in features:
        numeric = pd.to_numeric(df[col], errors="coerce")
        if numeric.notna().all():
            columns[col] = numeric.to_numpy(dtype=float)
            continue
        raw = df[col].astype(str)
        levels = sorted(raw.unique())
        report.encoded[col] = levels
        if prep.one_hot:
            for level in levels:
                columns[f"{col}={level}"] = (raw == level).to_numpy(dtype=float)
        else:
            lookup = {v: float(i) for i, v in enumerate(levels)}
            columns[col] = raw.map(lookup).to_numpy(dtype=float)

    for col in prep.log_columns:
        if col in columns:
            if np.any(columns[col] <= -1.0):
                raise DataError(f"cannot log1p-transform column {col!r}: values <= -1")
            columns[col] = np.log1p(columns[col])
            report.log_transformed.append(col)

    names = list(columns)
    X = np.column_stack([columns[c] for c in names])
    if prep.standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0.0] = 1.0
        X = (X - mu) / sd

    keep: list[int] = []
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(X, rowvar=False) if X.shape[1] > 1 else np.ones((1, 1))
    corr = np.atleast_2d(corr)
    for c in range(X.shape[1]):
        if any(np.abs(corr[k, c]) > prep.correlation_threshold for k in keep
               if np.isfinite(corr[k, c])):
            report.dropped_correlated.append(names[c])
        else:
            keep.append(c)
    X = X[:, keep]
    names = [names[c] for c in keep]
    report.rows_out = X.shape[0]
    ds = Dataset(np.ascontiguousarray(X), y, tuple(names), provenance="csv")
    return ds, report


def read_feature_csv(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    return pd.read_csv(path, keep_default_na=False, na_values=[""], encoding="utf-8",
                       float_precision="round_trip")


def load_csv(path, label_column: str = DEFAULT_LABEL, prep: PrepConfig = PrepConfig(),
             with_report: bool = False):
    ds, report = preprocess_frame(read_feature_csv(path), label_column, prep)
    ds = replace(ds, provenance=f"csv:{Path(path).name}")
    return (ds, report) if with_report else ds


def random_undersample_indices(y, seed) -> np.ndarray:
    """Sorted row indices of a 1:1 undersample: every minority row plus an
    equal-sized uniform draw (without replacement) from the majority."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size != 2:
        raise DegenerateLabelsError("undersampling needs exactly two classes present")
    minority = classes[np.argmin(counts)]
    majority = classes[1 - np.argmin(counts)]
    rng = np.random.default_rng(seed)
    major_idx = np.flatnonzero(y == majority)
    minor_idx = np.flatnonzero(y == minority)
    chosen = rng.choice(major_idx, size=minor_idx.size, replace=False)
    return np.sort(np.concatenate([minor_idx, chosen]))


def random_undersample(ds: Dataset, seed) -> Dataset:
    return ds.subset(random_undersample_indices(ds.y, seed))


def generate_synthetic(n: int = 10_000, d: int = 12, default_rate: float = 0.183,
                       class_separation: float = 1.0, complementary_views: int = 3,
                       seed: int = 0) -> Dataset:
    """Gaussian two-class data whose features split into independent views.

    Labels are Bernoulli(``default_rate``).  Columns are divided into
    ``complementary_views`` contiguous blocks named ``v<k>_x<i>``; within
    each block the positive class is shifted so that the block alone has
    Mahalanobis separation ``class_separation``.  Blocks are conditionally
    independent given the label, so learners restricted to different
    blocks make different mistakes.
    """
    if n < 2 or d < 1:
        raise ConfigError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    if not 0.0 < default_rate < 1.0:
        raise ConfigError(f"default_rate must lie in (0, 1), got {default_rate}")
    if class_separation < 0:
        raise ConfigError("class_separation must be non-negative")
    if not 1 <= complementary_views <= d:
        raise ConfigError(f"need 1 <= complementary_views <= d, got {complementary_views}")
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < default_rate).astype(np.int64)
    X = rng.standard_normal((n, d))
    names = []
    for v, block in enumerate(np.array_split(np.arange(d), complementary_views)):
        X[:, block] += y[:, None] * (class_separation / np.sqrt(block.size))
        names.extend(f"v{v}_x{c}" for c in block)
    prov = (f"synthetic(n={n}, d={d}, default_rate={default_rate}, "
            f"class_separation={class_separation}, views={complementary_views}, seed={seed})")
    return Dataset(X, y, tuple(names), provenance=prov)


@dataclass(frozen=True)
class ExternalPredictions:
    sample_ids: tuple[str, ...]
    classifier_ids: tuple[str, ...]
    supports: np.ndarray
    labels: np.ndarray | None = None


def load_external_predictions(path, tolerance: float = 1e-6) -> ExternalPredictions:
    """Read a long-format predictions CSV into an N x P x M support array.

    Columns: ``sample_id``, ``classifier_id``, ``class_0`` ... ``class_{M-1}``
    and optionally ``label``.  Each (sample, classifier) pair must appear
    exactly once; rows within ``tolerance`` of summing to one are
    renormalised, others are rejected.
    """
    frame = read_feature_csv(path)
    frame.columns = [str(c).strip() for c in frame.columns]
    for col in ("sample_id", "classifier_id"):
        if col not in frame.columns:
            raise DataError(f"predictions file lacks a {col!r} column")
    n_classes = 0
    while f"class_{n_classes}" in frame.columns:
        n_classes += 1
    if n_classes < 2:
        raise DataError("predictions file needs columns class_0 and class_1 at least")
    if frame[["sample_id", "classifier_id"]].isna().any().any():
        raise DataError("blank sample_id or classifier_id")
    frame["sample_id"] = frame["sample_id"].astype(str)
    frame["classifier_id"] = frame["classifier_id"].astype(str)
    samples = tuple(dict.fromkeys(frame["sample_id"]))
    clfs = tuple(dict.fromkeys(frame["classifier_id"]))
    s_index = {s: k for k, s in enumerate(samples)}
    c_index = {c: k for k, c in enumerate(clfs)}
    supports = np.full((len(samples), len(clfs), n_classes), np.nan)
    class_cols = [f"class_{j}" for j in range(n_classes)]
    has_label = "label" in frame.columns
    labels = np.full(len(samples), -1, dtype=np.int64)
    for row in frame.itertuples(index=False):
        rec = row._asdict()
        sid, cid = rec["sample_id"], rec["classifier_id"]
        k, i = s_index[sid], c_index[cid]
        if not np.isnan(supports[k, i, 0]):
            raise DataError(f"sample_id {sid}: classifier {cid} appears more than once")
        try:
            vec = np.array([float(rec[c]) for c in class_cols])
        except (TypeError, ValueError):
            raise DataError(f"sample_id {sid}, classifier {cid}: non-numeric support") from None
        total = vec.sum()
        if (not np.all(np.isfinite(vec)) or np.any(vec < 0) or np.any(vec > 1 + tolerance)
                or abs(total - 1.0) > tolerance):
            raise DataError(
                f"sample_id {sid}, classifier {cid}: supports {vec.tolist()} do not form a "
                f"probability vector (sum {total:.9g})")
        supports[k, i] = np.clip(vec / total, 0.0, 1.0)
        if has_label:
            lab = rec["label"]
            try:
                lab_i = int(float(lab))
            except (TypeError, ValueError):
                raise DataError(f"sample_id {sid}: unreadable label {lab!r}") from None
            if not 0 <= lab_i < n_classes or float(lab) != lab_i:
                raise InvalidLabelError(f"sample_id {sid}: label {lab!r} out of range")
            if labels[k] not in (-1, lab_i):
                raise DataError(f"sample_id {sid}: conflicting labels across classifiers")
            labels[k] = lab_i
    missing = np.argwhere(np.isnan(supports[:, :, 0]))
    if missing.size:
        k, i = missing[0]
        raise DataError(f"sample_id {samples[k]}: no row for classifier {clfs[i]}")
    return ExternalPredictions(samples, clfs, supports, labels if has_label else None)


def write_external_predictions(path, supports: np.ndarray, labels=None,
                               sample_ids: Sequence | None = None,
                               classifier_ids: Sequence | None = None) -> None:
    n, p, m = supports.shape
    sample_ids = list(range(n)) if sample_ids is None else list(sample_ids)
    classifier_ids = [f"clf{i}" for i in range(p)] if classifier_ids is None else list(classifier_ids)
    rows = []
    for k in range(n):
        for i in range(p):
            rec = {"sample_id": sample_ids[k], "classifier_id": classifier_ids[i]}
            rec.update({f"class_{j}": repr(float(supports[k, i, j])) for j in range(m)})
            if labels is not None:
                rec["label"] = int(labels[k])
            rows.append(rec)
    pd.DataFrame(rows).to_csv(path, index=False)
