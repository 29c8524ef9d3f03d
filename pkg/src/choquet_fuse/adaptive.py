"""Training-set statistics and per-sample adaptation of fuzzy densities.

Each classifier starts with one density per class, read off the diagonal
of its row-normalised confusion matrix (its per-class recall).  At
inference time the densities are shrunk for a given sample according to
how the classifier's hard label relates to its peers' labels:

* ``delta`` penalises a classifier that disagrees with a peer, by the
  training fraction of class-``j`` samples where it said ``k1`` while the
  peer was right;
* ``gamma`` penalises a classifier when both it and a peer are wrong about
  class ``j`` in different ways and it is the more error-prone of the two.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, EmptyDatasetError, InvalidLabelError

DEFAULT_EPSILON = 1e-4


@dataclass(frozen=True)
class AdaptiveConfig:
    w1: float = 0.9
    w2: float = 0.6
    epsilon: float = DEFAULT_EPSILON
    density_floor: float = DEFAULT_EPSILON

    def __post_init__(self):
        for name in ("w1", "w2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 2.0:
                raise ConfigError(f"{name} must lie in [0, 2], got {v}")
        for name in ("epsilon", "density_floor"):
            v = getattr(self, name)
            if not 0.0 < v <= 0.01:
                raise ConfigError(f"{name} must lie in (0, 0.01], got {v}")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed ``[true_class, predicted_class]``."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ProbabilityMatrix:
    probs: np.ndarray
    degenerate: tuple[bool, ...] = ()

    @property
    def n_classes(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class PairwiseJointTable:
    """``values[i, m, j, k]``: fraction of true-class-``j`` samples on which
    classifier ``i`` said ``k`` and classifier ``m`` said ``j``."""

    values: np.ndarray
    degenerate: tuple[bool, ...] = ()

    @property
    def n_classifiers(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DensityTable:
    """``g[i, j]``: density of classifier ``i`` for class ``j``."""

    g: np.ndarray = field(repr=False)

    def column(self, j: int) -> np.ndarray:
        return self.g[:, j]


def _as_labels(values, n_classes: int, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise InvalidLabelError(f"{what} must be integer class labels")
        arr = as_int
    arr = arr.astype(np.int64, copy=False)
    bad = np.flatnonzero((arr < 0) | (arr >= n_classes))
    if bad.size:
        raise InvalidLabelError(
            f"{what}[{bad[0]}] = {arr[bad[0]]} is outside [0, {n_classes})")
    return arr


def build_confusion(hard_predictions, true_labels, class_count: int) -> ConfusionMatrix:
    preds = np.asarray(hard_predictions).ravel()
    labels = np.asarray(true_labels).ravel()
    if preds.shape != labels.shape:
        raise DimensionError(f"{preds.size} predictions for {labels.size} labels")
    if labels.size == 0:
        raise EmptyDatasetError("cannot build a confusion matrix from zero samples")
    preds = _as_labels(preds, class_count, "prediction")
    labels = _as_labels(labels, class_count, "label")
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def row_normalize(cm: ConfusionMatrix) -> ProbabilityMatrix:
    counts = np.asarray(cm.counts, dtype=float)
    sums = counts.sum(axis=1)
    degenerate = sums == 0
    probs = np.zeros_like(counts)
    live = ~degenerate
    probs[live] = counts[live] / sums[live, None]
    return ProbabilityMatrix(probs, tuple(bool(d) for d in degenerate))


def initial_densities(pms: Sequence[ProbabilityMatrix],
                      density_floor: float = DEFAULT_EPSILON) -> DensityTable:
    sizes = {pm.n_classes for pm in pms}
    if len(sizes) != 1:
        raise DimensionError(f"probability matrices disagree on class count: {sorted(sizes)}")
    diag = np.array([np.diag(pm.probs) for pm in pms], dtype=float)
    return DensityTable(np.clip(diag, density_floor, 1.0))


def build_pairwise_tables(hard_predictions, true_labels,
                          class_count: int | None = None) -> PairwiseJointTable:
    """Joint prediction statistics for every ordered classifier pair.

    ``hard_predictions`` has one row per classifier.  Classes with no
    training samples get all-zero entries and are flagged degenerate.
    """
    preds = np.asarray(hard_predictions)
    labels = np.asarray(true_labels).ravel()
    if preds.ndim != 2 or preds.shape[1] != labels.size:
        raise DimensionError(
            f"expected predictions of shape (P, {labels.size}), got {preds.shape}")
    if labels.size == 0:
        raise EmptyDatasetError("cannot build pairwise tables from zero samples")
    if class_count is None:
        class_count = int(max(preds.max(), labels.max())) + 1
    labels = _as_labels(labels, class_count, "label")
    preds = np.stack([_as_labels(row, class_count, "prediction") for row in preds])
    p = preds.shape[0]
    per_class = np.bincount(labels, minlength=class_count)
    values = np.zeros((p, p, class_count, class_count))
    for i in range(p):
        for m in range(p):
            if i == m:
                continue
            peer_right = preds[m] == labels
            counts = np.zeros((class_count, class_count))
            np.add.at(counts, (labels[peer_right], preds[i][peer_right]), 1.0)
            nz = per_class > 0
            values[i, m, nz] = counts[nz] / per_class[nz, None]
    return PairwiseJointTable(values, tuple(bool(c == 0) for c in per_class))


def delta_factor(i: int, m: int, j: int, k1: int, k2: int, pm_i: ProbabilityMatrix,
                 table: PairwiseJointTable, cfg: AdaptiveConfig) -> float:
    if k1 == k2:
        return 1.0
    p_jj = float(pm_i.probs[j, j])
    if p_jj <= 0.0:
        return cfg.epsilon
    raw = (p_jj - float(table.values[i, m, j, k1])) / p_jj
    return min(1.0, max(cfg.epsilon, raw))


def gamma_factor(i: int, m: int, j: int, k1: int, k2: int, pm_i: ProbabilityMatrix,
                 pm_m: ProbabilityMatrix, cfg: AdaptiveConfig) -> float:
    # Only when both classifiers reject class j, and not with each other's label.
    if k1 == k2 or k1 == j or k2 == j:
        return 1.0
    e_i = float(pm_i.probs[j, k1])
    e_m = float(pm_m.probs[j, k2])
    if e_i <= e_m:
        return 1.0
    if e_m == 0.0:
        return cfg.epsilon
    return max(cfg.epsilon, e_m / e_i)


def adapt_densities(g: DensityTable, sample_hard_preds: Sequence[int],
                    pms: Sequence[ProbabilityMatrix], table: PairwiseJointTable,
                    cfg: AdaptiveConfig) -> DensityTable:
    """Densities adapted to one sample's pattern of hard labels."""
    labels = [int(k) for k in sample_hard_preds]
    p, n_classes = g.g.shape
    if len(labels) != p:
        raise DimensionError(f"{len(labels)} hard labels for {p} classifiers")
    if len(set(labels)) <= 1:
        return DensityTable(g.g.copy())
    out = np.empty_like(g.g)
    for i in range(p):
        for j in range(n_classes):
            d_prod = 1.0
            c_prod = 1.0
            for m in range(p):
                if m == i:
                    continue
                d_prod *= delta_factor(i, m, j, labels[i], labels[m], pms[i], table, cfg)
                c_prod *= gamma_factor(i, m, j, labels[i], labels[m], pms[i], pms[m], cfg)
            out[i, j] = g.g[i, j] * d_prod ** cfg.w1 * c_prod ** cfg.w2
    return DensityTable(np.clip(out, cfg.density_floor, 1.0))
