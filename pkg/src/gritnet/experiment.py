"""Baseline-vs-GritNet comparison runner and report."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .baseline import chi_square_select, logreg_predict, logreg_train
from .config import BaselineConfig, ExperimentConfig, GritNetConfig, child_seed, to_text
from .encoding import bow_matrix, encode_sequence
from .evaluation import (
    CVResult,
    Trainer,
    cross_validate_weekly,
    roc_auc,
    stratified_kfold,
)
from .events import StudentRecord, Vocabulary, dataset_stats, filter_pre_enrollment, parse_event_log
from .model import init_for_vocab, predict_sequences, sgd_train
from .synthetic import generate_synthetic

log = logging.getLogger(__name__)

CELLS_CSV = "auc_cells.csv"
SUMMARY_CSV = "auc_summary.csv"
BY_WEEK_CSV = "auc_by_week.csv"
SUMMARY_TXT = "summary.txt"
ALPHAS_CSV = "baseline_alphas.csv"


class ExperimentError(RuntimeError):
    pass


def _standardize(X_train: np.ndarray, *others: np.ndarray):
    mu = X_train.mean(axis=0)
    sd = X_train.std(axis=0)
    sd[sd == 0] = 1.0
    return [(X - mu) / sd for X in (X_train, *others)]


class BaselineTrainer:
    """BoW logistic regression; alpha picked on a stratified holdout of the training folds.

    Counts are standardized with training-split statistics before fitting.
    The chosen alpha per call is kept in ``chosen`` as (seed, alpha).
    """

    def __init__(self, vocab: Vocabulary, cfg: BaselineConfig):
        self.vocab = vocab
        self.cfg = cfg
        self.chosen: list[tuple[int, float]] = []

    def _selection(self, counts, y):
        # chi-square works on presence/absence, so it sees raw counts
        if self.cfg.chi2_k and self.cfg.chi2_k < counts.shape[1]:
            return chi_square_select(counts, y, self.cfg.chi2_k)
        return None

    def _fit(self, X, y, alpha, seed, selected):
        return logreg_train(X, y, alpha=alpha, epochs=self.cfg.epochs, seed=seed, selected_features=selected, tol=self.cfg.tol)

    def select_alpha(self, X: np.ndarray, y: np.ndarray, seed: int) -> float:
        if len(self.cfg.alphas) == 1:
            return self.cfg.alphas[0]
        try:
            inner = stratified_kfold(y, self.cfg.inner_folds, seed)
        except ValueError:
            log.warning("too few students per class for the alpha sweep; using the middle of the grid")
            return self.cfg.alphas[len(self.cfg.alphas) // 2]
        va = inner.test_indices(0)
        tr = inner.train_indices(0)
        selected = self._selection(X[tr], y[tr])
        Xtr, Xva = _standardize(X[tr], X[va])
        best_alpha, best_auc = self.cfg.alphas[0], -1.0
        for alpha in self.cfg.alphas:
            model = self._fit(Xtr, y[tr], alpha, seed, selected)
            auc = roc_auc(logreg_predict(model, Xva), y[va]).auc
            if auc > best_auc:
                best_alpha, best_auc = alpha, auc
        return best_alpha

    def __call__(self, train: Sequence[StudentRecord], test: Sequence[StudentRecord], seed: int) -> np.ndarray:
        X = bow_matrix(train, self.vocab).astype(np.float64)
        y = np.array([r.label for r in train])
        Xte = bow_matrix(test, self.vocab).astype(np.float64)
        alpha = self.select_alpha(X, y, seed)
        self.chosen.append((seed, alpha))
        Xs, Xtes = _standardize(X, Xte)
        model = self._fit(Xs, y, alpha, seed, self._selection(X, y))
        return np.atleast_1d(logreg_predict(model, Xtes))


class GritNetTrainer:
    def __init__(self, vocab: Vocabulary, cfg: GritNetConfig):
        self.vocab = vocab
        self.cfg = cfg

    def __call__(self, train: Sequence[StudentRecord], test: Sequence[StudentRecord], seed: int) -> np.ndarray:
        cfg = self.cfg
        enc = [encode_sequence(r, self.vocab, cfg.d_max) for r in train]
        # test students' actions were seen when the vocabulary was built, but allow_unknown
        # keeps a held-out log with novel actions usable
        enc_te = [encode_sequence(r, self.vocab, cfg.d_max, allow_unknown=True) for r in test]
        y = np.array([r.label for r in train])
        model = init_for_vocab(
            self.vocab,
            d_max=cfg.d_max,
            embed_dim=cfg.embed_dim,
            hidden=cfg.hidden,
            dropout_rate=cfg.dropout_rate,
            seed=child_seed(seed, "init"),
        )
        result = sgd_train(
            model,
            enc,
            y,
            batch_size=cfg.batch_size,
            learning_rate=cfg.learning_rate,
            epochs=cfg.epochs,
            seed=child_seed(seed, "sgd"),
        )
        return predict_sequences(result.model, enc_te)


def load_records(config: ExperimentConfig) -> tuple[list[StudentRecord], Vocabulary]:
    if config.data.path:
        try:
            with open(config.data.path, "rb") as fh:
                records, _ = parse_event_log(fh, deadline=config.data.deadline)
        except OSError as exc:
            raise ExperimentError(f"cannot read {config.data.path}: {exc}") from None
    else:
        spec = config.synthetic
        seeded = dataclasses.replace(spec, seed=child_seed(config.seed, "synthetic", str(spec.seed)))
        records, _ = parse_event_log(generate_synthetic(seeded).splitlines(), deadline=config.data.deadline)
    records = [filter_pre_enrollment(r) for r in records]
    return records, Vocabulary.from_records(records)


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


@dataclass
class ExperimentResult:
    cv: CVResult
    output_dir: str
    baseline_alphas: list[tuple[int, int, float]]


def run_experiment(config: ExperimentConfig, output_dir: Optional[str] = None) -> ExperimentResult:
    """Cross-validate the configured models week by week and write the result files."""
    config.validate()
    out = output_dir or config.output_dir
    os.makedirs(out, exist_ok=True)
    records, vocab = load_records(config)
    stats = dataset_stats(records)
    log.info("loaded %d students, %d actions", stats.student_count, len(vocab))
    labels = np.array([r.label for r in records])
    try:
        folds = stratified_kfold(labels, config.folds, child_seed(config.seed, "folds"))
    except ValueError as exc:
        raise ExperimentError(str(exc)) from None

    cv = CVResult()
    alphas: list[tuple[int, int, float]] = []
    timings = {}
    for name in config.models:
        trainer: Trainer
        if name == "baseline":
            trainer = BaselineTrainer(vocab, config.baseline)
        else:
            trainer = GritNetTrainer(vocab, config.gritnet)

        def seed_for(week, fold, _name=name):
            return child_seed(config.seed, _name, str(week), str(fold))

        t0 = time.perf_counter()
        cv.extend(cross_validate_weekly(records, trainer, config.weeks, folds=folds, model_name=name, seed_for=seed_for))
        timings[name] = time.perf_counter() - t0
        if name == "baseline":
            # trainer calls happen in (week, fold) order
            cells = [(w, f) for w in config.weeks for f in range(folds.k)]
            alphas = [(w, f, a) for (w, f), (_, a) in zip(cells, trainer.chosen)]

    _write(os.path.join(out, CELLS_CSV), cv.cells_csv())
    _write(os.path.join(out, SUMMARY_CSV), cv.summary_csv())
    if alphas:
        lines = ["week,fold,alpha"] + [f"{w},{f},{a!r}" for w, f, a in alphas]
        _write(os.path.join(out, ALPHAS_CSV), "\n".join(lines) + "\n")
    _write(os.path.join(out, "config.txt"), to_text(config))

    summary = [
        f"students {stats.student_count}, graduates {stats.graduate_count} "
        f"(rate {stats.graduation_rate:.3f}), events per student "
        f"min {stats.min_length} mean {stats.mean_length:.1f} max {stats.max_length}, "
        f"actions {stats.unique_actions}",
        f"undefined AUC cells: {cv.undefined_count}",
        "",
        format_table(_by_week_rows(cv)),
    ]
    _write(os.path.join(out, SUMMARY_TXT), "\n".join(summary) + "\n")
    for name, secs in timings.items():
        log.info("%s finished in %.1fs", name, secs)
    return ExperimentResult(cv, out, alphas)


def _by_week_rows(cv: CVResult) -> list[tuple[int, Optional[float], Optional[float]]]:
    return [(w, cv.mean_auc(w, "baseline"), cv.mean_auc(w, "gritnet")) for w in cv.weeks]


def _fmt(v: Optional[float]) -> str:
    return "-" if v is None else f"{v:.4f}"


def format_table(rows) -> str:
    lines = [f"{'week':>4}  {'baseline':>8}  {'gritnet':>8}  {'delta':>8}"]
    for week, b, g in rows:
        d = None if b is None or g is None else g - b
        lines.append(f"{week:>4}  {_fmt(b):>8}  {_fmt(g):>8}  {_fmt(d):>8}")
    return "\n".join(lines)


def read_summary(results_dir: str) -> dict[tuple[int, str], Optional[float]]:
    path = os.path.join(results_dir, SUMMARY_CSV)
    if not os.path.exists(path):
        raise ExperimentError(f"missing result file; expected {path} (and {os.path.join(results_dir, CELLS_CSV)})")
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[(int(row["week"]), row["model"])] = float(row["mean_auc"]) if row["mean_auc"] else None
    return out


def report(results_dir: str) -> str:
    """Table of mean AUC by week; also writes ``auc_by_week.csv`` next to the inputs."""
    summary = read_summary(results_dir)
    weeks = sorted({w for w, _ in summary})
    rows = [(w, summary.get((w, "baseline")), summary.get((w, "gritnet"))) for w in weeks]
    lines = ["week,baseline_auc,gritnet_auc,delta_abs"]
    for w, b, g in rows:
        d = "" if b is None or g is None else repr(g - b)
        lines.append(f"{w},{'' if b is None else repr(b)},{'' if g is None else repr(g)},{d}")
    _write(os.path.join(results_dir, BY_WEEK_CSV), "\n".join(lines) + "\n")
    return format_table(rows)
