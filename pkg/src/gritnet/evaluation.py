"""ROC/AUC, stratified k-fold assignment and the week-by-week cross-validation protocol."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .baseline import DivergenceError
from .encoding import truncate_to_week
from .events import StudentRecord

log = logging.getLogger(__name__)


class UndefinedAUCError(ValueError):
    """AUC needs at least one positive and one negative label."""


@dataclass(frozen=True)
class RocResult:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # threshold for each point after the origin
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_auc(scores, labels) -> RocResult:
    """ROC curve with one point per distinct score and its trapezoidal area.

    Tied scores move the curve diagonally, which makes the area equal to the
    Mann-Whitney statistic with ties counted as one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC is undefined when only one class is present")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # last index of every run of equal scores
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tp = np.cumsum(y_sorted)[ends]
    fp = (ends + 1) - tp
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    # integer trapezoid sum, divided once at the end
    twice_area = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2.0 * n_pos * n_neg)
    return RocResult(fp / n_neg, tp / n_pos, s_sorted[ends], auc)


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    k: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Shuffle each class with a seeded rng and deal it round-robin onto ``k`` folds.

    The dealing for each class starts at the fold after the one where the
    previous class stopped, so total fold sizes also differ by at most one.
    """
    y = np.asarray(labels).astype(np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(y), dtype=np.int64)
    offset = 0
    for cls in (1, 0):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise ValueError(f"class {cls} has {len(idx)} members, fewer than k={k}")
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = (np.arange(len(idx)) + offset) % k
        offset = (offset + len(idx)) % k
    return FoldAssignment(fold_of, k)


# train(train_records, test_records, seed) -> one score per test record
Trainer = Callable[[Sequence[StudentRecord], Sequence[StudentRecord], int], np.ndarray]


@dataclass
class CVCell:
    week: int
    fold: int
    model: str
    auc: Optional[float]  # None when the test fold is single-class


@dataclass
class CVResult:
    cells: list[CVCell] = field(default_factory=list)

    def mean_auc(self, week: int, model: str) -> Optional[float]:
        vals = [c.auc for c in self.cells if c.week == week and c.model == model and c.auc is not None]
        return float(np.mean(vals)) if vals else None

    def defined_folds(self, week: int, model: str) -> int:
        return sum(1 for c in self.cells if c.week == week and c.model == model and c.auc is not None)

    @property
    def undefined_count(self) -> int:
        return sum(1 for c in self.cells if c.auc is None)

    @property
    def weeks(self) -> list[int]:
        return sorted({c.week for c in self.cells})

    @property
    def models(self) -> list[str]:
        seen: list[str] = []
        for c in self.cells:
            if c.model not in seen:
                seen.append(c.model)
        return seen

    def extend(self, other: "CVResult") -> None:
        self.cells.extend(other.cells)

    def cells_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["week", "fold", "model", "auc"])
        for c in sorted(self.cells, key=lambda c: (c.week, c.fold, c.model)):
            w.writerow([c.week, c.fold, c.model, "" if c.auc is None else repr(c.auc)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["week", "model", "mean_auc", "defined_folds"])
        for week in self.weeks:
            for model in self.models:
                m = self.mean_auc(week, model)
                w.writerow([week, model, "" if m is None else repr(m), self.defined_folds(week, model)])
        return buf.getvalue()


def cross_validate_weekly(
    records: Sequence[StudentRecord],
    trainer: Trainer,
    weeks: Sequence[int],
    k: int = 5,
    seed: int = 0,
    model_name: str = "model",
    folds: Optional[FoldAssignment] = None,
    seed_for: Optional[Callable[[int, int], int]] = None,
) -> CVResult:
    """Per week: truncate every record, then train on k-1 folds and score the held-out fold.

    Folds are drawn once (or passed in) and reused for every week.
    ``seed_for(week, fold)`` supplies the trainer seed; by default it is a
    simple deterministic function of ``seed``.
    """
    labels = np.array([r.label for r in records])
    if folds is None:
        folds = stratified_kfold(labels, k, seed)
    if seed_for is None:
        seed_for = lambda week, fold: seed * 1_000_003 + week * 101 + fold  # noqa: E731
    result = CVResult()
    for week in weeks:
        truncated = [truncate_to_week(r, week) for r in records]
        for fold in range(folds.k):
            tr = folds.train_indices(fold)
            te = folds.test_indices(fold)
            try:
                scores = trainer([truncated[i] for i in tr], [truncated[i] for i in te], seed_for(week, fold))
            except DivergenceError as exc:
                raise DivergenceError(f"{model_name} week {week} fold {fold}: {exc}") from exc
            try:
                auc = roc_auc(scores, labels[te]).auc
            except UndefinedAUCError:
                log.warning("week %d fold %d: single-class test split, AUC undefined", week, fold)
                auc = None
            result.cells.append(CVCell(week, fold, model_name, auc))
            log.info("%s week %d fold %d auc %s", model_name, week, fold, auc)
    return result
