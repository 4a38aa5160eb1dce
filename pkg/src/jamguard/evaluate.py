"""Stratified cross-validation, classification metrics, and resource
accounting for the detector.

Positive class is "jammed" (label 1) throughout.  Fold statistics use
the sample standard deviation (n-1).  Timing numbers come from the
monotonic wall clock and are inherently run-dependent, so report writers
keep them out of the deterministic artifacts.
"""
from __future__ import annotations

import os
import time
import tracemalloc
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .binarize import BinarizeMethod, Booleanizer
from .ctm import CtmConfig, ConvTsetlinClassifier, serialize_model


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_pred, y_true) -> "ConfusionMatrix":
        y_pred = np.asarray(y_pred)
        y_true = np.asarray(y_true)
        return cls(tp=int(np.sum((y_pred == 1) & (y_true == 1))),
                   fp=int(np.sum((y_pred == 1) & (y_true == 0))),
                   tn=int(np.sum((y_pred == 0) & (y_true == 0))),
                   fn=int(np.sum((y_pred == 0) & (y_true == 1))))


def metrics(cm: ConfusionMatrix) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, f1); zero denominators yield 0."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return accuracy, precision, recall, f1


def kfold_split(n: int, k: int, labels, seed: int = 0) -> list[np.ndarray]:
    """Stratified k folds: disjoint index arrays covering range(n).

    Per-label index lists are shuffled with a seeded Philox stream and
    dealt round-robin, continuing the deal across labels so overall fold
    sizes differ by at most one.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError("labels must have length n")
    g = _rng.generator(seed, _rng.TAG_FOLD)
    folds: list[list[int]] = [[] for _ in range(k)]
    cursor = 0
    for value in np.unique(labels):
        idx = np.flatnonzero(labels == value)
        idx = idx[g.permutation(idx.size)]
        for i in idx:
            folds[cursor % k].append(int(i))
            cursor += 1
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class TrainRun:
    """Timing and footprint of one completed train/evaluate cycle."""

    train_s: float
    infer_s: float
    n_evaluated: int
    model_bytes: int
    peak_alloc_bytes: int = 0

    @property
    def samples_per_s(self) -> float:
        return self.n_evaluated / self.infer_s if self.infer_s > 0 else float("inf")


def measure_resources(run: TrainRun) -> tuple[float, float, float, int]:
    """(train_s, infer_s, samples_per_s, model_bytes) for a finished run."""
    return run.train_s, run.infer_s, run.samples_per_s, run.model_bytes


@dataclass
class CvReport:
    fold_metrics: list[dict]           # accuracy/precision/recall/f1 per fold
    mean: dict
    stddev: dict                       # sample stddev over folds (n-1)
    train_s: float
    infer_s: float
    samples_per_s: float
    model_bytes: int
    peak_alloc_bytes: int
    k: int
    seed: int

    METRIC_NAMES = ("accuracy", "precision", "recall", "f1")

    def table_text(self) -> str:
        lines = ["fold  accuracy  precision  recall    f1"]
        for i, m in enumerate(self.fold_metrics):
            lines.append(f"{i:<5d} {m['accuracy']:<9.4f} {m['precision']:<10.4f} "
                         f"{m['recall']:<9.4f} {m['f1']:<9.4f}")
        lines.append(f"mean  {self.mean['accuracy']:<9.4f} {self.mean['precision']:<10.4f} "
                     f"{self.mean['recall']:<9.4f} {self.mean['f1']:<9.4f}")
        lines.append(f"std   {self.stddev['accuracy']:<9.4f} {self.stddev['precision']:<10.4f} "
                     f"{self.stddev['recall']:<9.4f} {self.stddev['f1']:<9.4f}")
        lines.append(f"model_bytes {self.model_bytes}")
        return "\n".join(lines) + "\n"

    def metrics_csv(self) -> str:
        """Deterministic portion of the report (no wall-clock values)."""
        lines = ["fold,accuracy,precision,recall,f1"]
        for i, m in enumerate(self.fold_metrics):
            lines.append(f"{i},{m['accuracy']:.17g},{m['precision']:.17g},"
                         f"{m['recall']:.17g},{m['f1']:.17g}")
        lines.append(f"mean,{self.mean['accuracy']:.17g},{self.mean['precision']:.17g},"
                     f"{self.mean['recall']:.17g},{self.mean['f1']:.17g}")
        lines.append(f"std,{self.stddev['accuracy']:.17g},{self.stddev['precision']:.17g},"
                     f"{self.stddev['recall']:.17g},{self.stddev['f1']:.17g}")
        lines.append(f"model_bytes,{self.model_bytes},,,")
        return "\n".join(lines) + "\n"

    def timing_csv(self) -> str:
        return ("metric,value\n"
                f"train_s,{self.train_s:.6f}\n"
                f"infer_s,{self.infer_s:.6f}\n"
                f"samples_per_s,{self.samples_per_s:.3f}\n"
                f"peak_alloc_bytes,{self.peak_alloc_bytes}\n")


def _classifier_from_config(cfg: CtmConfig) -> ConvTsetlinClassifier:
    return ConvTsetlinClassifier(
        n_clauses=cfg.n_clauses, threshold=cfg.threshold,
        specificity=cfg.specificity, patch_dim=cfg.patch_dim,
        max_included_literals=cfg.max_included_literals, n_states=cfg.n_states,
        epochs=cfg.epochs, seed=cfg.seed,
        boost_true_positive=cfg.boost_true_positive)


def cross_validate(dataset, cfg: CtmConfig, method: BinarizeMethod | None,
                   k: int = 5, seed: int = 0) -> CvReport:
    """Stratified k-fold cross-validation of the full detector.

    ``dataset`` is a sequence of (image, label) pairs; images are
    normalized spectrogram arrays when ``method`` is given (booleanized
    here, per image, so there is no train/test leakage) or Boolean
    images when ``method`` is None.  Each fold trains on the other k-1
    folds with a fold-derived seed and is scored on the held-out fold.
    """
    images, labels = zip(*((np.asarray(getattr(d, "values", getattr(d, "bits", d))), l)
                           for d, l in dataset))
    labels = np.asarray(labels, dtype=np.int64)
    if method is not None:
        booleanizer = Booleanizer(kind=method.kind, block_size=method.block_size,
                                  offset=method.offset,
                                  denoise_sigma_mult=method.denoise_sigma_mult,
                                  variant=method.variant)
        X = booleanizer.transform(np.stack(images))
    else:
        X = np.stack(images).astype(bool)

    folds = kfold_split(len(labels), k, labels, seed=seed)
    fold_metrics = []
    train_s = 0.0
    infer_s = 0.0
    n_eval = 0
    model_bytes = 0
    tracemalloc.start()
    for fold_id, test_idx in enumerate(folds):
        train_mask = np.ones(len(labels), dtype=bool)
        train_mask[test_idx] = False
        clf = _classifier_from_config(cfg)
        clf.seed = _rng.derive_key(seed, _rng.TAG_FOLD, fold_id) & 0x7FFFFFFF
        t0 = time.perf_counter()
        clf.fit(X[train_mask], labels[train_mask])
        t1 = time.perf_counter()
        y_pred = clf.predict(X[test_idx])
        t2 = time.perf_counter()
        train_s += t1 - t0
        infer_s += t2 - t1
        n_eval += test_idx.size
        model_bytes = len(serialize_model(clf.model_))
        acc, prec, rec, f1 = metrics(ConfusionMatrix.from_predictions(y_pred, labels[test_idx]))
        fold_metrics.append({"accuracy": acc, "precision": prec,
                             "recall": rec, "f1": f1})
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()

    mean = {m: float(np.mean([f[m] for f in fold_metrics]))
            for m in CvReport.METRIC_NAMES}
    std = {m: float(np.std([f[m] for f in fold_metrics], ddof=1))
           for m in CvReport.METRIC_NAMES}
    return CvReport(fold_metrics=fold_metrics, mean=mean, stddev=std,
                    train_s=train_s, infer_s=infer_s,
                    samples_per_s=n_eval / infer_s if infer_s > 0 else float("inf"),
                    model_bytes=model_bytes, peak_alloc_bytes=int(peak),
                    k=k, seed=seed)
