"""Decision-level fusion of classifier supports.

The main fuser is the adaptive Choquet integral: for every sample the
class densities are adapted to the sample's pattern of hard labels, a
lambda-measure is solved per class, and each class's column of supports is
integrated.  The predicted class is the one with the largest integral.

Majority voting and ordered weighted averaging are provided as baselines.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .adaptive import (AdaptiveConfig, DensityTable, PairwiseJointTable, ProbabilityMatrix,
                       adapt_densities, build_confusion, build_pairwise_tables,
                       initial_densities, row_normalize)
from .errors import ChoquetFuseError, DimensionError
from .measure import LambdaMeasure, choquet_batch


@dataclass(frozen=True)
class FusionOutcome:
    predicted: int
    integrals: tuple[float, ...]
    score: float


def _argmax(values: Sequence[float]) -> int:
    # first maximum wins, i.e. ties go to the lower class index
    return int(np.argmax(np.asarray(values)))


def ratio_score(values: Sequence[float], positive_class: int = 1) -> float:
    """Share of the positive class in the summed per-class values (0.5 if all zero)."""
    total = float(np.sum(values))
    if total <= 0.0:
        return 0.5
    return float(values[positive_class]) / total


def _check_sample(h: np.ndarray, g: DensityTable) -> None:
    if h.ndim != 2 or h.shape != g.g.shape:
        raise DimensionError(
            f"support matrix of shape {h.shape} does not match density table {g.g.shape}")


def fuse_sample(h, g: DensityTable, pms: Sequence[ProbabilityMatrix], table: PairwiseJointTable,
                cfg: AdaptiveConfig, positive_class: int = 1) -> FusionOutcome:
    """Fuse one P x M support matrix with the adaptive Choquet integral."""
    h = np.asarray(h, dtype=float)
    _check_sample(h, g)
    labels = np.argmax(h, axis=1)
    adapted = adapt_densities(g, labels, pms, table, cfg)
    integrals = []
    for j in range(h.shape[1]):
        measure = LambdaMeasure.from_densities(adapted.column(j))
        integrals.append(float(choquet_batch(h[None, :, j], measure)[0]))
    return FusionOutcome(_argmax(integrals), tuple(integrals), ratio_score(integrals, positive_class))


def fuse_dataset(h_all, g: DensityTable, pms: Sequence[ProbabilityMatrix], table: PairwiseJointTable,
                 cfg: AdaptiveConfig, positive_class: int = 1) -> list[FusionOutcome]:
    """Batch version of :func:`fuse_sample`, output in input order.

    Adapted densities depend on a sample only through its tuple of hard
    labels, so measures are solved once per distinct tuple and the
    integrals are evaluated in bulk for every sample sharing it.
    """
    h_all = np.asarray(h_all, dtype=float)
    if h_all.size == 0:
        return []
    if h_all.ndim != 3:
        raise DimensionError(f"expected an N x P x M support array, got shape {h_all.shape}")
    n, p, m = h_all.shape
    labels = np.argmax(h_all, axis=2)
    integrals = np.empty((n, m))
    patterns, first, inverse = np.unique(labels, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    # first-occurrence order, so an error names the earliest failing sample
    for code in np.argsort(first, kind="stable"):
        pattern = patterns[code]
        rows = np.flatnonzero(inverse == code)
        try:
            _check_sample(h_all[rows[0]], g)
            adapted = adapt_densities(g, pattern, pms, table, cfg)
            for j in range(m):
                measure = LambdaMeasure.from_densities(adapted.column(j))
                integrals[rows, j] = choquet_batch(h_all[rows, :, j], measure)
        except ChoquetFuseError as exc:
            err = type(exc)(f"sample {int(rows[0])}: {exc}")
            err.sample_index = int(rows[0])
            raise err from exc
    out = []
    for k in range(n):
        row = integrals[k]
        vals = tuple(float(v) for v in row)
        out.append(FusionOutcome(_argmax(row), vals, ratio_score(vals, positive_class)))
    return out


def majority_vote(h_all) -> np.ndarray:
    """Most hard votes wins; ties go to the larger summed support, then the lower index."""
    h_all = np.asarray(h_all, dtype=float)
    if h_all.size == 0:
        return np.empty(0, dtype=np.int64)
    n, p, m = h_all.shape
    votes = np.zeros((n, m))
    np.add.at(votes, (np.repeat(np.arange(n), p), np.argmax(h_all, axis=2).ravel()), 1.0)
    summed = h_all.sum(axis=1)
    out = np.empty(n, dtype=np.int64)
    for k in range(n):
        top = np.flatnonzero(votes[k] == votes[k].max())
        if top.size == 1:
            out[k] = top[0]
        else:
            out[k] = top[int(np.argmax(summed[k, top]))]
    return out


def vote_scores(h_all, positive_class: int = 1) -> np.ndarray:
    """Ranking score for majority voting: positive votes, then mean positive support.

    ``(votes + mean_support) / (P + 1)`` orders samples by vote count and
    breaks equal counts by the mean support for the positive class.
    """
    h_all = np.asarray(h_all, dtype=float)
    if h_all.size == 0:
        return np.empty(0)
    p = h_all.shape[1]
    votes = (np.argmax(h_all, axis=2) == positive_class).sum(axis=1)
    return (votes + h_all[:, :, positive_class].mean(axis=1)) / (p + 1)


def owa_weights(mode: str, size: int) -> np.ndarray:
    if mode == "optimistic":
        w = np.zeros(size)
        w[0] = 1.0
    elif mode == "pessimistic":
        w = np.zeros(size)
        w[-1] = 1.0
    else:
        raise ValueError(f"unknown OWA mode {mode!r}")
    return w


def owa_fuse(h_all, mode: str | Iterable[float] = "optimistic",
             positive_class: int = 1) -> list[FusionOutcome]:
    """Ordered weighted averaging of each class's supports across classifiers.

    ``mode`` is ``"optimistic"`` (max), ``"pessimistic"`` (min), or an
    explicit weight vector applied to supports sorted in descending order.
    """
    h_all = np.asarray(h_all, dtype=float)
    if h_all.size == 0:
        return []
    p = h_all.shape[1]
    if isinstance(mode, str):
        weights = owa_weights(mode, p)
    else:
        weights = np.asarray(list(mode), dtype=float)
        if weights.size != p or np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise DimensionError(f"OWA weights must be {p} non-negative values summing to 1")
    ordered = -np.sort(-h_all, axis=1)
    agg = np.einsum("npm,p->nm", ordered, weights)
    out = []
    for row in agg:
        vals = tuple(float(v) for v in row)
        out.append(FusionOutcome(_argmax(row), vals, ratio_score(vals, positive_class)))
    return out


@dataclass
class FusionModel:
    """Training statistics needed to fuse new samples."""

    pms: list[ProbabilityMatrix]
    table: PairwiseJointTable
    densities: DensityTable
    config: AdaptiveConfig
    positive_class: int = 1

    @classmethod
    def fit(cls, hard_predictions, true_labels, class_count: int, config: AdaptiveConfig,
            positive_class: int = 1) -> "FusionModel":
        preds = np.asarray(hard_predictions)
        pms = [row_normalize(build_confusion(row, true_labels, class_count)) for row in preds]
        table = build_pairwise_tables(preds, true_labels, class_count)
        g = initial_densities(pms, config.density_floor)
        return cls(pms, table, g, config, positive_class)

    def with_config(self, config: AdaptiveConfig) -> "FusionModel":
        return FusionModel(self.pms, self.table, self.densities, config, self.positive_class)

    def fuse(self, h_all) -> list[FusionOutcome]:
        return fuse_dataset(h_all, self.densities, self.pms, self.table, self.config,
                            self.positive_class)

    def to_dict(self) -> dict:
        return {
            "probability_matrices": [pm.probs.tolist() for pm in self.pms],
            "degenerate_rows": [list(pm.degenerate) for pm in self.pms],
            "pairwise": self.table.values.tolist(),
            "degenerate_classes": list(self.table.degenerate),
            "densities": self.densities.g.tolist(),
            "adaptive": {"w1": self.config.w1, "w2": self.config.w2,
                         "epsilon": self.config.epsilon,
                         "density_floor": self.config.density_floor},
            "positive_class": self.positive_class,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FusionModel":
        pms = [ProbabilityMatrix(np.asarray(p, dtype=float), tuple(d))
               for p, d in zip(doc["probability_matrices"], doc["degenerate_rows"])]
        table = PairwiseJointTable(np.asarray(doc["pairwise"], dtype=float),
                                   tuple(doc["degenerate_classes"]))
        return cls(pms, table, DensityTable(np.asarray(doc["densities"], dtype=float)),
                   AdaptiveConfig(**doc["adaptive"]), int(doc["positive_class"]))


def write_outcomes_csv(path, outcomes: Sequence[FusionOutcome], sample_ids=None) -> None:
    n_classes = len(outcomes[0].integrals) if outcomes else 0
    ids = list(range(len(outcomes))) if sample_ids is None else list(sample_ids)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "predicted_class", "score"]
                        + [f"integral_{j}" for j in range(n_classes)])
        for sid, o in zip(ids, outcomes):
            writer.writerow([sid, o.predicted, repr(o.score)] + [repr(v) for v in o.integrals])


def outcomes_to_json(outcomes: Sequence[FusionOutcome], sample_ids=None) -> str:
    ids = list(range(len(outcomes))) if sample_ids is None else list(sample_ids)
    rows = [{"sample_id": sid, "predicted_class": o.predicted, "score": o.score,
             "integrals": list(o.integrals)} for sid, o in zip(ids, outcomes)]
    return json.dumps(rows, indent=1)
