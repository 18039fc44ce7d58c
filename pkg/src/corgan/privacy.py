"""Membership inference by cosine-similarity matching against synthetic records.

An attacker holds ``P`` records that were in the generator's training set
and ``P`` that were not. Each known record is flagged as a member when its
best cosine similarity to any synthetic record reaches a threshold. The
thresholds are drawn from N(0.5, 0.01) and the operating point with the
highest attack F1 is reported as the best attack.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ShapeError

logger = logging.getLogger(__name__)


def _values(data) -> np.ndarray:
    return np.asarray(getattr(data, "values", data), dtype=np.float64)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: lengths {a.shape} and {b.shape} differ")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def max_cosine_similarity(known, synthetic, chunk: int = 2048) -> np.ndarray:
    """For each known row, its largest cosine similarity to any synthetic row."""
    K, S = _values(known), _values(synthetic)
    if len(S) == 0:
        raise ValueError("max_cosine_similarity: synthetic set is empty")
    if K.shape[1] != S.shape[1]:
        raise ShapeError(f"known width {K.shape[1]} differs from synthetic width {S.shape[1]}")

    def unit(X):
        n = np.linalg.norm(X, axis=1, keepdims=True)
        return np.divide(X, n, out=np.zeros_like(X), where=n > 0)

    Ku, Su = unit(K), unit(S)
    out = np.full(len(K), -np.inf)
    for start in range(0, len(S), chunk):
        sims = Ku @ Su[start:start + chunk].T
        np.maximum(out, sims.max(axis=1), out=out)
    return np.clip(out, -1.0, 1.0)


def draw_thresholds(n: int, mean: float, std: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` positive draws from N(mean, std); non-positive draws are redrawn."""
    got = np.empty(0)
    while len(got) < n:
        draw = rng.normal(mean, std, size=n - len(got))
        got = np.concatenate([got, draw[draw > 0]])
    return got


@dataclass
class AttackSetup:
    known_members: np.ndarray
    known_nonmembers: np.ndarray
    synthetic: np.ndarray
    n_thresholds: int = 100
    threshold_mean: float = 0.5
    threshold_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        self.known_members = _values(self.known_members)
        self.known_nonmembers = _values(self.known_nonmembers)
        self.synthetic = _values(self.synthetic)
        if len(self.known_members) != len(self.known_nonmembers) or len(self.known_members) == 0:
            raise ConfigurationError("attack needs the same positive number P of members and non-members")
        widths = {self.known_members.shape[1], self.known_nonmembers.shape[1], self.synthetic.shape[1]}
        if len(widths) != 1:
            raise ShapeError(f"attack sets have differing widths {sorted(widths)}")
        if self.n_thresholds < 1 or self.threshold_std < 0:
            raise ConfigurationError("need at least one threshold and a non-negative spread")

    @property
    def P(self) -> int:
        return len(self.known_members)

    @classmethod
    def sample(cls, S_tr, S_te, S_syn, P: int, seed: int = 0, **kwargs) -> "AttackSetup":
        """Draw ``P`` known records from each of ``S_tr`` and ``S_te``."""
        tr, te = _values(S_tr), _values(S_te)
        if P > min(len(tr), len(te)):
            raise ConfigurationError(f"P={P} exceeds available records ({len(tr)} train, {len(te)} test)")
        rng = np.random.default_rng(seed)
        members = tr[rng.choice(len(tr), P, replace=False)]
        nonmembers = te[rng.choice(len(te), P, replace=False)]
        return cls(members, nonmembers, _values(S_syn), seed=seed, **kwargs)


@dataclass
class ThresholdRow:
    threshold: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @property
    def flagged(self) -> int:
        return self.tp + self.fp


@dataclass
class AttackReport:
    rows: list[ThresholdRow]
    best: ThresholdRow | None
    member_scores: np.ndarray
    nonmember_scores: np.ndarray
    best_metric: str = "f1"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "tp", "fp", "fn", "precision", "recall", "f1"])
            for r in self.rows:
                w.writerow([repr(r.threshold), r.tp, r.fp, r.fn, repr(r.precision), repr(r.recall), repr(r.f1)])


def evaluate_thresholds(member_scores: np.ndarray, nonmember_scores: np.ndarray,
                        thresholds) -> list[ThresholdRow]:
    """Confusion counts at each threshold (flag iff score >= threshold).

    Precision is reported as 0 when nothing is flagged; recall is over members only.
    """
    P = len(member_scores)
    rows = []
    for t in thresholds:
        tp = int(np.sum(member_scores >= t))
        fp = int(np.sum(nonmember_scores >= t))
        fn = P - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / P
        f1 = 2 * precision * recall / (precision + recall) if tp else 0.0
        rows.append(ThresholdRow(float(t), tp, fp, fn, precision, recall, f1))
    return rows


def run_attack(setup: AttackSetup) -> AttackReport:
    if len(setup.synthetic) == 0:
        raise ValueError("run_attack: synthetic set is empty")
    rng = np.random.default_rng(setup.seed)
    thresholds = np.sort(draw_thresholds(setup.n_thresholds, setup.threshold_mean, setup.threshold_std, rng))
    member_scores = max_cosine_similarity(setup.known_members, setup.synthetic)
    nonmember_scores = max_cosine_similarity(setup.known_nonmembers, setup.synthetic)
    rows = evaluate_thresholds(member_scores, nonmember_scores, thresholds)
    best = None
    for r in rows:  # ascending thresholds, so ties keep the lower one
        if r.flagged and (best is None or r.f1 > best.f1):
            best = r
    return AttackReport(rows, best, member_scores, nonmember_scores)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepTable:
    key_name: str
    keys: list[int] = field(default_factory=list)
    reports: list[AttackReport] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.key_name, "threshold", "tp", "fp", "fn", "precision", "recall", "f1"])
            for key, rep in zip(self.keys, self.reports):
                b = rep.best
                if b is None:
                    w.writerow([key, "", 0, 0, len(rep.member_scores), 0.0, 0.0, 0.0])
                else:
                    w.writerow([key, repr(b.threshold), b.tp, b.fp, b.fn, repr(b.precision), repr(b.recall),
                                repr(b.f1)])


def sweep_known_records(U_values, S_tr, S_te, S_syn, seed: int = 0, **attack_kwargs) -> SweepTable:
    """One attack per total known-record count ``U`` (``P = U // 2`` per side)."""
    tr, te = _values(S_tr), _values(S_te)
    table = SweepTable("U")
    for U in U_values:
        U = int(U)
        if U % 2:
            logger.warning("U=%d is odd; using %d", U, U - 1)
            U -= 1
        if U < 2 or U > 2 * min(len(tr), len(te)):
            raise ConfigurationError(f"U={U} must lie in [2, {2 * min(len(tr), len(te))}]")
        setup = AttackSetup.sample(tr, te, S_syn, U // 2, seed=seed, **attack_kwargs)
        table.keys.append(U)
        table.reports.append(run_attack(setup))
    return table


def sweep_synthetic_volume(sizes, S_tr, S_te, synthetic: Callable[[int], object] | dict, U: int = 100,
                           seed: int = 0, **attack_kwargs) -> SweepTable:
    """One attack per synthetic-set size with a fixed set of ``U`` known records.

    ``synthetic`` is either ``size -> records`` or a mapping of pre-generated
    sets keyed by size. Duplicate sizes are dropped; size 0 is skipped.
    """
    seen, ordered = set(), []
    for s in sizes:
        s = int(s)
        if s <= 0:
            logger.warning("skipping synthetic size %d", s)
            continue
        if s not in seen:
            seen.add(s)
            ordered.append(s)
    base = AttackSetup.sample(S_tr, S_te, np.zeros((1, _values(S_tr).shape[1])), U // 2, seed=seed,
                              **attack_kwargs)
    table = SweepTable("n_synthetic")
    for s in ordered:
        syn = synthetic[s] if isinstance(synthetic, dict) else synthetic(s)
        syn = _values(syn)
        if len(syn) != s:
            raise ConfigurationError(f"synthetic set for size {s} has {len(syn)} rows")
        setup = AttackSetup(base.known_members, base.known_nonmembers, syn, base.n_thresholds,
                            base.threshold_mean, base.threshold_std, seed)
        table.keys.append(s)
        table.reports.append(run_attack(setup))
    return table
