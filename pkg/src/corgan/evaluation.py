"""Fidelity protocols for synthetic records, with the classifiers and metrics they use."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .data import RecordMatrix
from .errors import ConfigurationError, ShapeError


def _values(data) -> np.ndarray:
    return np.asarray(getattr(data, "values", data), dtype=np.float64)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def f1_score(y_true, y_pred) -> float:
    """F1 on the positive class; 0 when there are no true positives."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"f1_score: {y_true.shape} vs {y_pred.shape}")
    tp = np.sum(y_true & y_pred)
    if tp == 0:
        return 0.0
    fp = np.sum(~y_true & y_pred)
    fn = np.sum(y_true & ~y_pred)
    return float(2 * tp / (2 * tp + fp + fn))


def _check_binary_scores(y_true, scores):
    y_true = np.asarray(y_true).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    if y_true.shape != scores.shape or y_true.ndim != 1:
        raise ShapeError(f"expected equal-length 1-d labels and scores, got {y_true.shape} and {scores.shape}")
    if y_true.all() or not y_true.any():
        raise ValueError("AUROC/AUPRC undefined: y_true contains a single class")
    return y_true, scores


def auroc(y_true, scores) -> float:
    """Probability a random positive outranks a random negative (ties count half).

    Computed from average ranks, which equals the Mann-Whitney pair count.
    """
    y_true, scores = _check_binary_scores(y_true, scores)
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(len(s))
    # average ranks over tie groups
    boundaries = np.flatnonzero(np.diff(s)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(s)]))
    for a, b in zip(starts, ends):
        ranks[a:b] = (a + b + 1) / 2.0
    r = np.empty(len(s))
    r[order] = ranks
    n_pos = int(y_true.sum())
    n_neg = len(y_true) - n_pos
    u = r[y_true].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(y_true, scores) -> float:
    """Step-wise area under the precision-recall curve (average precision).

    Thresholds sweep the distinct score values from high to low; tied scores
    enter together. No interpolation between operating points.
    """
    y_true, scores = _check_binary_scores(y_true, scores)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = y_true[order]
    last = np.concatenate((np.flatnonzero(np.diff(s)), [len(s) - 1]))
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / y.sum()
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


# ---------------------------------------------------------------------------
# classifiers
# ---------------------------------------------------------------------------

CLASSIFIER_KINDS = ("logistic_regression", "decision_tree")


@dataclass
class ClassifierModel:
    kind: str
    params: dict = field(default_factory=dict)
    degenerate: bool = False

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.degenerate:
            return np.full(len(X), self.params["prior"])
        if self.kind == "logistic_regression":
            z = (X - self.params["mu"]) / self.params["sigma"] @ self.params["w"] + self.params["b"]
            return 0.5 * (1.0 + np.tanh(0.5 * z))
        return _tree_predict(self.params["tree"], X)

    def predict(self, X) -> np.ndarray:
        if self.degenerate:
            return np.full(len(np.asarray(X)), int(self.params["prior"] >= 0.5))
        return (self.predict_proba(X) >= 0.5).astype(int)


def train_classifier(kind: str, X, y, l2: float = 1e-4, max_depth: int = 8, min_leaf: int = 5,
                     lr: float = 0.5, iterations: int = 300) -> ClassifierModel:
    """Fit logistic regression (full-batch gradient descent on L2-penalised BCE)
    or a Gini decision tree. Single-class targets give a flagged constant model."""
    if kind not in CLASSIFIER_KINDS:
        raise ConfigurationError(f"unknown classifier {kind!r}; expected one of {CLASSIFIER_KINDS}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"train_classifier: X {X.shape} and y {y.shape} disagree")
    if len(y) < 2:
        raise ValueError("train_classifier: need at least 2 examples")
    prior = float(y.mean())
    if prior in (0.0, 1.0):
        return ClassifierModel(kind, {"prior": prior}, degenerate=True)
    if kind == "logistic_regression":
        return ClassifierModel(kind, _fit_logistic(X, y, l2, lr, iterations))
    return ClassifierModel(kind, {"tree": _grow_tree(X, y, max_depth, min_leaf)})


def _fit_logistic(X, y, l2, lr, iterations) -> dict:
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    sigma[sigma == 0] = 1.0
    Z = (X - mu) / sigma
    n, d = Z.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(iterations):
        p = 0.5 * (1.0 + np.tanh(0.5 * (Z @ w + b)))
        r = p - y
        w -= lr * (Z.T @ r / n + l2 * w)
        b -= lr * r.mean()
    return {"mu": mu, "sigma": sigma, "w": w, "b": b}


def _best_split(X, y, min_leaf):
    """Lowest weighted-Gini split as (feature, threshold), or None when no split respects ``min_leaf``."""
    n, d = X.shape
    best = (None, None)
    best_score = np.inf
    total_pos = y.sum()
    for j in range(d):
        order = np.argsort(X[:, j], kind="mergesort")
        xs = X[order, j]
        ys = y[order]
        pos_left = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        valid = (xs[1:] != xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        n_right = n - n_left
        pos_right = total_pos - pos_left
        gini_l = 1.0 - (pos_left / n_left) ** 2 - (1 - pos_left / n_left) ** 2
        gini_r = 1.0 - (pos_right / n_right) ** 2 - (1 - pos_right / n_right) ** 2
        score = np.where(valid, n_left * gini_l + n_right * gini_r, np.inf)
        k = int(np.argmin(score))
        if score[k] < best_score - 1e-12:
            best_score = score[k]
            best = (j, 0.5 * (xs[k] + xs[k + 1]))
    # zero-gain splits are allowed (as in CART): XOR-like targets need them
    return None if best[0] is None else best


def _grow_tree(X, y, max_depth, min_leaf, depth=0):
    value = float(y.mean())
    if depth >= max_depth or value in (0.0, 1.0) or len(y) < 2 * min_leaf:
        return {"leaf": value}
    split = _best_split(X, y, min_leaf)
    if split is None:
        return {"leaf": value}
    j, t = split
    mask = X[:, j] <= t
    return {"feature": j, "threshold": t,
            "left": _grow_tree(X[mask], y[mask], max_depth, min_leaf, depth + 1),
            "right": _grow_tree(X[~mask], y[~mask], max_depth, min_leaf, depth + 1)}


def _tree_predict(node, X) -> np.ndarray:
    out = np.empty(len(X))
    stack = [(node, np.arange(len(X)))]
    while stack:
        nd, idx = stack.pop()
        if "leaf" in nd:
            out[idx] = nd["leaf"]
            continue
        go_left = X[idx, nd["feature"]] <= nd["threshold"]
        stack.append((nd["left"], idx[go_left]))
        stack.append((nd["right"], idx[~go_left]))
    return out


# ---------------------------------------------------------------------------
# dimension-wise probability
# ---------------------------------------------------------------------------

@dataclass
class DimProbReport:
    p_real: np.ndarray
    p_syn: np.ndarray

    @property
    def deviation(self) -> np.ndarray:
        return np.abs(self.p_real - self.p_syn)

    @property
    def mean_abs_deviation(self) -> float:
        return float(self.deviation.mean())

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dimension", "p_real", "p_syn", "abs_deviation"])
            for j, (a, b) in enumerate(zip(self.p_real, self.p_syn)):
                w.writerow([j, repr(float(a)), repr(float(b)), repr(float(abs(a - b)))])

    def write_scatter(self, path) -> None:
        """Two columns (real, synthetic) ready for a diagonal scatter plot."""
        with open(path, "w", encoding="utf-8") as fh:
            for a, b in zip(self.p_real, self.p_syn):
                fh.write(f"{float(a)!r} {float(b)!r}\n")


def dimension_wise_probability(S_real, S_syn) -> DimProbReport:
    real, syn = _values(S_real), _values(S_syn)
    if real.shape[1] != syn.shape[1]:
        raise ShapeError(f"dimension_wise_probability: widths {real.shape[1]} and {syn.shape[1]} differ")
    for name, arr in (("real", real), ("synthetic", syn)):
        if not np.isin(arr, (0.0, 1.0)).all():
            raise ValueError(f"dimension_wise_probability: {name} set is not binary")
    return DimProbReport(real.mean(axis=0), syn.mean(axis=0))


# ---------------------------------------------------------------------------
# dimension-wise prediction
# ---------------------------------------------------------------------------

@dataclass
class DimPredRun:
    run: int
    dimension: int
    classifier: str
    f1_real: float
    f1_syn: float
    degenerate_real: bool = False
    degenerate_syn: bool = False

    @property
    def f1_diff(self) -> float:
        return self.f1_real - self.f1_syn


@dataclass
class DimPredReport:
    runs: list[DimPredRun]
    requested_runs: int
    usable_dimensions: int

    @property
    def shortfall(self) -> int:
        return max(0, self.requested_runs - self.usable_dimensions)

    def diffs(self) -> np.ndarray:
        return np.array([r.f1_diff for r in self.runs])

    @property
    def mean_diff(self) -> float:
        return float(self.diffs().mean())

    @property
    def std_diff(self) -> float:
        return float(self.diffs().std())

    @property
    def mean_abs_diff(self) -> float:
        return float(np.abs(self.diffs()).mean())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "dimension", "classifier", "f1_real", "f1_syn", "f1_diff",
                        "degenerate_real", "degenerate_syn"])
            for r in self.runs:
                w.writerow([r.run, r.dimension, r.classifier, repr(r.f1_real), repr(r.f1_syn), repr(r.f1_diff),
                            int(r.degenerate_real), int(r.degenerate_syn)])


def dimension_wise_prediction(S_tr, S_te, S_syn, runs: int = 100, kinds=CLASSIFIER_KINDS,
                              seed: int = 0) -> DimPredReport:
    """Predict one held-out column from the rest, training on real vs synthetic data.

    Testing dimensions are drawn without replacement among columns that are
    not constant in ``S_te``. Both classifiers for a run predict ``S_te``'s
    column; the per-run F1 difference is ``f1_real - f1_syn``.
    """
    tr, te, syn = _values(S_tr), _values(S_te), _values(S_syn)
    if not tr.shape[1] == te.shape[1] == syn.shape[1]:
        raise ShapeError(f"dimension_wise_prediction: widths {tr.shape[1]}, {te.shape[1]}, {syn.shape[1]} differ")
    m = tr.shape[1]
    usable = [k for k in range(m) if 0 < te[:, k].sum() < len(te)]
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(usable)[:runs]
    out = []
    for run, k in enumerate(chosen):
        k = int(k)
        rest = np.r_[0:k, k + 1:m]
        for kind in kinds:
            real_model = train_classifier(kind, tr[:, rest], tr[:, k])
            syn_model = train_classifier(kind, syn[:, rest], syn[:, k])
            f1_real = f1_score(te[:, k], real_model.predict(te[:, rest]))
            f1_syn = f1_score(te[:, k], syn_model.predict(te[:, rest]))
            out.append(DimPredRun(run, k, kind, f1_real, f1_syn, real_model.degenerate, syn_model.degenerate))
    return DimPredReport(out, runs, len(usable))


# ---------------------------------------------------------------------------
# binary classification (train on synthetic, test on real)
# ---------------------------------------------------------------------------

@dataclass
class BinClassResult:
    setting: str  # "A" real->real, "B" synthetic->real
    classifier: str
    auroc: float
    auprc: float
    degenerate: bool = False


@dataclass
class BinClassReport:
    results: list[BinClassResult]

    def _avg(self, setting: str, metric: str) -> float:
        vals = [getattr(r, metric) for r in self.results if r.setting == setting]
        return float(np.mean(vals)) if vals else math.nan

    def average(self, setting: str) -> tuple[float, float]:
        return self._avg(setting, "auroc"), self._avg(setting, "auprc")

    @property
    def degenerate(self) -> bool:
        return any(r.degenerate for r in self.results)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["setting", "classifier", "auroc", "auprc", "degenerate"])
            for r in self.results:
                w.writerow([r.setting, r.classifier, repr(r.auroc), repr(r.auprc), int(r.degenerate)])


def binary_classification_eval(real_train: RecordMatrix, real_test: RecordMatrix, S_syn: RecordMatrix,
                               kinds=CLASSIFIER_KINDS) -> BinClassReport:
    """Setting A trains on ``real_train``, setting B on ``S_syn``; both score ``real_test``."""
    for name, d in (("real_train", real_train), ("real_test", real_test), ("S_syn", S_syn)):
        if getattr(d, "labels", None) is None:
            raise ConfigurationError(f"binary_classification_eval: {name} has no labels")
    if not real_train.n_cols == real_test.n_cols == S_syn.n_cols:
        raise ShapeError("binary_classification_eval: feature widths differ")
    results = []
    for setting, train in (("A", real_train), ("B", S_syn)):
        for kind in kinds:
            model = train_classifier(kind, train.values, train.labels)
            scores = model.predict_proba(real_test.values)
            results.append(BinClassResult(setting, kind, auroc(real_test.labels, scores),
                                          auprc(real_test.labels, scores), model.degenerate))
    return BinClassReport(results)
