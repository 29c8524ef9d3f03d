"""Base classifiers: logistic regression, discrete AdaBoost, gradient boosting.

All three are binary, deterministic, and emit two-column support matrices
``(P(class 0), P(class 1))``.  Models round-trip through a small versioned
JSON document so the CLI can fit once and score later.
"""
from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import Any, ClassVar

import numpy as np

from .errors import DataError, DegenerateLabelsError, DimensionError, EmptyModelError, InvalidInputError

FORMAT = "choquet_fuse.learner"
FORMAT_VERSION = 1


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def log_loss(y: np.ndarray, z: np.ndarray) -> float:
    """Mean binary cross-entropy of logits ``z`` against 0/1 labels."""
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


@dataclass(frozen=True)
class LogisticConfig:
    learning_rate: float = 0.1
    l2: float = 1e-4
    max_iter: int = 500
    tol: float = 1e-6


@dataclass(frozen=True)
class AdaBoostConfig:
    rounds: int = 100
    epsilon_clip: float = 1e-10


@dataclass(frozen=True)
class GradientBoostingConfig:
    rounds: int = 100
    shrinkage: float = 0.1
    max_depth: int = 3
    min_leaf: int = 5


CONFIG_TYPES = {
    "logistic": LogisticConfig,
    "adaboost": AdaBoostConfig,
    "gradient_boosting": GradientBoostingConfig,
}


def _check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise DimensionError(f"features must be a 2-D matrix, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionError(f"{y.size} labels for {X.shape[0]} samples")
    if X.shape[0] < 2:
        raise DegenerateLabelsError("need at least two training samples")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("features contain NaN or infinite values")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise DegenerateLabelsError("training labels contain a single class")
    return X, y.astype(float)


class LearnerModel(ABC):
    kind: ClassVar[str]

    def __init__(self, feature_count: int, config, columns=None):
        self.feature_count = int(feature_count)
        self.config = config
        # Optional indices into a wider feature matrix (per-learner feature views).
        self.columns = None if columns is None else [int(c) for c in columns]
        self.loss_history: list[float] = []

    @abstractmethod
    def decision_function(self, X: np.ndarray) -> np.ndarray:
        """Positive-class probability for each row of an already-selected matrix."""

    @abstractmethod
    def parameters(self) -> dict[str, Any]:
        ...

    def _select(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if self.columns is not None:
            if X.shape[1] <= max(self.columns, default=-1):
                raise DimensionError(
                    f"model reads column {max(self.columns)} but data has {X.shape[1]} columns")
            X = X[:, self.columns]
        if X.shape[1] != self.feature_count:
            raise DimensionError(
                f"model expects {self.feature_count} features, got {X.shape[1]}")
        return X

    def predict_supports(self, X) -> np.ndarray:
        p1 = np.clip(self.decision_function(self._select(X)), 0.0, 1.0)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return hard_labels(self.predict_supports(X))

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "config": asdict(self.config),
            "feature_count": self.feature_count,
            "columns": self.columns,
            "parameters": self.parameters(),
        }


def hard_labels(supports) -> np.ndarray:
    """Argmax over the last axis; ties go to the lower class index."""
    return np.argmax(np.asarray(supports), axis=-1)


def predict_supports(model: LearnerModel, features) -> np.ndarray:
    return model.predict_supports(features)


# --------------------------------------------------------------------------
# logistic regression


class LogisticModel(LearnerModel):
    kind = "logistic"

    def __init__(self, weights, bias: float, config: LogisticConfig = LogisticConfig(), columns=None):
        weights = np.asarray(weights, dtype=float).ravel()
        super().__init__(weights.size, config, columns)
        self.weights = weights
        self.bias = float(bias)

    def decision_function(self, X):
        return sigmoid(X @ self.weights + self.bias)

    def parameters(self):
        return {"weights": self.weights.tolist(), "bias": self.bias}


def fit_logistic(features, labels, config: LogisticConfig = LogisticConfig()) -> LogisticModel:
    """Batch gradient descent on L2-regularised logistic loss.

    The intercept is not penalised.  A step that would raise the loss is
    halved until it does not, so the recorded loss never increases.
    """
    X, y = _check_training_data(features, labels)
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0

    def objective(w_, b_):
        return log_loss(y, X @ w_ + b_) + 0.5 * config.l2 * float(w_ @ w_)

    loss = objective(w, b)
    history = [loss]
    for _ in range(config.max_iter):
        resid = sigmoid(X @ w + b) - y
        grad_w = X.T @ resid / n + config.l2 * w
        grad_b = float(resid.mean())
        if max(np.max(np.abs(grad_w), initial=0.0), abs(grad_b)) < config.tol:
            break
        step = config.learning_rate
        for _ in range(60):
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            new_loss = objective(w_new, b_new)
            if new_loss <= loss:
                break
            step *= 0.5
        else:
            break
        w, b, loss = w_new, b_new, new_loss
        history.append(loss)
    model = LogisticModel(w, b, config)
    model.loss_history = history
    return model


# --------------------------------------------------------------------------
# decision stumps / AdaBoost


@dataclass
class Stump:
    feature: int
    threshold: float
    left: float
    right: float
    weight: float = 1.0

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(X[:, self.feature] <= self.threshold, self.left, self.right)


def _presort(X: np.ndarray) -> np.ndarray:
    return np.argsort(X, axis=0, kind="stable").T.copy()


def _best_stump(X: np.ndarray, y_pm: np.ndarray, w: np.ndarray, order: np.ndarray):
    """Exhaustive scan of (feature, midpoint) for the least weighted error.

    Returns ``(error, feature, threshold, sign)``; ``sign`` is the label
    predicted to the right of the threshold.  ``None`` if no feature varies.
    """
    total = w.sum()
    best = None
    with_constant = True
    for f in range(X.shape[1]):
        idx = order[f]
        xs = X[idx, f]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if valid.size == 0:
            continue
        wpos = np.cumsum(np.where(y_pm[idx] > 0, w[idx], 0.0))
        wneg = np.cumsum(np.where(y_pm[idx] < 0, w[idx], 0.0))
        thresholds = 0.5 * (xs[valid] + xs[valid + 1])
        # sign +1: predict -1 on the left, +1 on the right
        err_plus = wpos[valid] + (wneg[-1] - wneg[valid])
        if with_constant:
            # One threshold below the data acts as the bias term; without it a
            # sum of +-1 stumps is odd-symmetric between the extreme samples.
            thresholds = np.concatenate([[xs[0] - 1.0], thresholds])
            err_plus = np.concatenate([[wneg[-1]], err_plus])
            with_constant = False
        err_minus = total - err_plus
        k_plus = int(np.argmin(err_plus))
        k_minus = int(np.argmin(err_minus))
        for err, k, sign in ((err_plus[k_plus], k_plus, 1.0), (err_minus[k_minus], k_minus, -1.0)):
            if best is None or err < best[0]:
                best = (float(err / total), f, float(thresholds[k]), sign)
    return best


class AdaBoostModel(LearnerModel):
    kind = "adaboost"

    def __init__(self, stumps, feature_count: int, config: AdaBoostConfig = AdaBoostConfig(), columns=None):
        super().__init__(feature_count, config, columns)
        self.stumps = list(stumps)
        if not self.stumps:
            raise EmptyModelError("an AdaBoost model needs at least one stump")

    def margin(self, X):
        total = sum(s.weight for s in self.stumps)
        agg = np.zeros(X.shape[0])
        for s in self.stumps:
            agg += s.weight * s.predict(X)
        return agg / total

    def decision_function(self, X):
        return sigmoid(2.0 * self.margin(X))

    def parameters(self):
        return {"stumps": [asdict(s) for s in self.stumps]}


def fit_adaboost(features, labels, config: AdaBoostConfig = AdaBoostConfig()) -> AdaBoostModel:
    """Discrete AdaBoost over depth-1 stumps.

    Boosting stops early once a stump is perfect on the training set, or
    when no stump beats chance on the current weights.
    """
    if config.rounds <= 0:
        raise EmptyModelError("AdaBoost needs at least one round")
    X, y = _check_training_data(features, labels)
    y_pm = 2.0 * y - 1.0
    n = X.shape[0]
    w = np.full(n, 1.0 / n)
    order = _presort(X)
    stumps: list[Stump] = []
    clip = config.epsilon_clip
    for _ in range(config.rounds):
        found = _best_stump(X, y_pm, w, order)
        if found is None or found[0] >= 0.5:
            break
        err, f, thr, sign = found
        err_c = min(max(err, clip), 1.0 - clip)
        alpha = 0.5 * np.log((1.0 - err_c) / err_c)
        stump = Stump(f, thr, -sign, sign, float(alpha))
        stumps.append(stump)
        if err <= 0.0:
            break
        w = w * np.exp(-alpha * y_pm * stump.predict(X))
        w /= w.sum()
    if not stumps:
        raise EmptyModelError("no stump does better than chance on the training data")
    return AdaBoostModel(stumps, X.shape[1], config)


# --------------------------------------------------------------------------
# gradient boosting with regression trees


def _grow(X, resid, hess, order, members, depth, max_depth, min_leaf):
    """Least-squares regression tree on ``resid``; leaves hold Newton steps."""
    n = int(members.sum())
    node = None
    if depth < max_depth and n >= 2 * min_leaf:
        total = resid[members].sum()
        best_gain, best = 1e-12, None
        for f in range(X.shape[1]):
            idx = order[f][members[order[f]]]
            xs = X[idx, f]
            cs = np.cumsum(resid[idx])
            pos = np.arange(n - 1)
            ok = (xs[:-1] < xs[1:]) & (pos + 1 >= min_leaf) & (n - pos - 1 >= min_leaf)
            if not ok.any():
                continue
            pos = pos[ok]
            left = cs[pos]
            gain = left ** 2 / (pos + 1) + (total - left) ** 2 / (n - pos - 1) - total ** 2 / n
            k = int(np.argmax(gain))
            if gain[k] > best_gain:
                best_gain = float(gain[k])
                best = (f, 0.5 * (xs[pos[k]] + xs[pos[k] + 1]))
        if best is not None:
            f, thr = best
            go_left = members & (X[:, f] <= thr)
            go_right = members & ~(X[:, f] <= thr)
            node = {
                "feature": int(f),
                "threshold": float(thr),
                "left": _grow(X, resid, hess, order, go_left, depth + 1, max_depth, min_leaf),
                "right": _grow(X, resid, hess, order, go_right, depth + 1, max_depth, min_leaf),
            }
    if node is None:
        num = resid[members].sum()
        den = hess[members].sum()
        node = {"value": float(num / den) if den > 1e-12 else 0.0}
    return node


def _tree_predict(node, X, rows=None):
    if rows is None:
        rows = np.arange(X.shape[0])
    out = np.empty(rows.size)
    if "value" in node:
        out[:] = node["value"]
        return out
    left = X[rows, node["feature"]] <= node["threshold"]
    out[left] = _tree_predict(node["left"], X, rows[left])
    out[~left] = _tree_predict(node["right"], X, rows[~left])
    return out


class GradientBoostingModel(LearnerModel):
    kind = "gradient_boosting"

    def __init__(self, base_score: float, trees, feature_count: int,
                 config: GradientBoostingConfig = GradientBoostingConfig(), columns=None):
        super().__init__(feature_count, config, columns)
        self.base_score = float(base_score)
        # (tree, multiplier) pairs; multiplier is shrinkage after any backtracking.
        self.trees = [(t, float(s)) for t, s in trees]

    def raw_score(self, X):
        F = np.full(X.shape[0], self.base_score)
        for tree, step in self.trees:
            F += step * _tree_predict(tree, X)
        return F

    def decision_function(self, X):
        return sigmoid(self.raw_score(X))

    def parameters(self):
        return {"base_score": self.base_score,
                "trees": [{"step": s, "tree": t} for t, s in self.trees]}


def fit_gradient_boosting(features, labels,
                          config: GradientBoostingConfig = GradientBoostingConfig()) -> GradientBoostingModel:
    """Stagewise logistic-loss boosting.

    Each stage fits a tree to the residual ``y - sigmoid(F)`` and sets leaf
    values by a per-leaf Newton step.  If a shrunken stage would raise the
    training loss its multiplier is halved until it does not.
    """
    X, y = _check_training_data(features, labels)
    prior = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    base = float(np.log(prior / (1.0 - prior)))
    F = np.full(X.shape[0], base)
    order = _presort(X)
    everyone = np.ones(X.shape[0], dtype=bool)
    loss = log_loss(y, F)
    history = [loss]
    trees = []
    for _ in range(config.rounds):
        p = sigmoid(F)
        resid = y - p
        tree = _grow(X, resid, p * (1.0 - p), order, everyone, 0,
                     config.max_depth, config.min_leaf)
        update = _tree_predict(tree, X)
        step = config.shrinkage
        for _ in range(40):
            trial = F + step * update
            trial_loss = log_loss(y, trial)
            if trial_loss <= loss:
                break
            step *= 0.5
        else:
            continue
        F, loss = trial, trial_loss
        trees.append((tree, step))
        history.append(loss)
    model = GradientBoostingModel(base, trees, X.shape[1], config)
    model.loss_history = history
    return model


# --------------------------------------------------------------------------
# registry and serialisation

FITTERS = {
    "logistic": fit_logistic,
    "adaboost": fit_adaboost,
    "gradient_boosting": fit_gradient_boosting,
}


def fit_learner(kind: str, features, labels, config=None) -> LearnerModel:
    if kind not in FITTERS:
        raise DataError(f"unknown learner kind {kind!r}; expected one of {sorted(FITTERS)}")
    config = CONFIG_TYPES[kind]() if config is None else config
    return FITTERS[kind](features, labels, config)


def model_from_dict(doc: dict[str, Any]) -> LearnerModel:
    if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
        raise DataError(f"not a version-{FORMAT_VERSION} {FORMAT} document")
    kind = doc["kind"]
    if kind not in CONFIG_TYPES:
        raise DataError(f"unknown learner kind {kind!r}")
    config = CONFIG_TYPES[kind](**doc["config"])
    params = doc["parameters"]
    columns = doc.get("columns")
    if kind == "logistic":
        return LogisticModel(params["weights"], params["bias"], config, columns)
    if kind == "adaboost":
        stumps = [Stump(**s) for s in params["stumps"]]
        return AdaBoostModel(stumps, doc["feature_count"], config, columns)
    trees = [(t["tree"], t["step"]) for t in params["trees"]]
    return GradientBoostingModel(params["base_score"], trees, doc["feature_count"], config, columns)


def dumps_model(model: LearnerModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True)


def loads_model(text: str) -> LearnerModel:
    return model_from_dict(json.loads(text))
