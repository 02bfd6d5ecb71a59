"""Scoring, dataset splitting, cross-validation, and packet loss.

Per-class precision/recall/F1 use the usual one-vs-rest counts with
zero-denominator cases scored as 0.  Macro averages are unweighted
means over the classes that actually occur in the truth (nonzero
support).  The confusion matrix is row-normalized by true class; rows
for absent classes stay all-zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import features, forest
from .core import Dataset, TraceSample, derive_rng

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    """Classification quality summary.

    When produced by :func:`cross_validate`, the per-class table and the
    confusion matrix pool all held-out folds, while the ``macro_*``
    fields are means over folds and the ``*_std`` fields their
    population standard deviations.
    """

    classes: tuple[str, ...]
    confusion_counts: np.ndarray
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_precision_std: float = 0.0
    macro_recall_std: float = 0.0
    macro_f1_std: float = 0.0
    n_folds: int = 1


def score(y_true: Sequence[str], y_pred: Sequence[str], labels: Sequence[str] | None = None) -> EvalReport:
    """Score predictions against truth.

    ``labels`` fixes the class order (default: sorted union of both
    label sets).  Raises if a label falls outside the given order or if
    the lengths differ.
    """
    if len(y_true) != len(y_pred):
        raise ValueError(f"{len(y_true)} truth labels but {len(y_pred)} predictions")
    if labels is None:
        labels = sorted(set(y_true) | set(y_pred))
    classes = tuple(labels)
    index = {c: i for i, c in enumerate(classes)}
    if len(index) != len(classes):
        raise ValueError("duplicate labels in label order")
    counts = np.zeros((len(classes), len(classes)))
    for t, p in zip(y_true, y_pred):
        if t not in index:
            raise ValueError(f"truth label {t!r} not in label order")
        if p not in index:
            raise ValueError(f"predicted label {p!r} not in label order")
        counts[index[t], index[p]] += 1.0

    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    tp = np.diag(counts).copy()
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)
    confusion = np.divide(counts, support[:, None], out=np.zeros_like(counts), where=support[:, None] > 0)

    present = support > 0
    total = counts.sum()
    accuracy = float(tp.sum() / total) if total > 0 else 0.0
    macro_p = float(precision[present].mean()) if present.any() else 0.0
    macro_r = float(recall[present].mean()) if present.any() else 0.0
    macro_f = float(f1[present].mean()) if present.any() else 0.0
    return EvalReport(
        classes=classes,
        confusion_counts=counts,
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        accuracy=accuracy,
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f,
    )


@dataclass(frozen=True)
class PipelineConfig:
    """End-to-end attack pipeline: feature schema, optional RFE, forest."""

    schema: str = features.DEVICE32
    n_trees: int = 10
    rfe_keep: int | None = None
    rfe_step: float = 0.5
    max_depth: int | None = None
    seed: int = 0


@dataclass
class FittedPipeline:
    config: PipelineConfig
    label_key: str
    model: forest.TrainedForest
    feature_names: tuple[str, ...]


def fit_pipeline(samples: Sequence[TraceSample], key: str, config: PipelineConfig) -> FittedPipeline:
    """Extract features, run RFE if configured, and train the forest."""
    X, names = features.extract_matrix(samples, config.schema)
    y = [s.labels[key] for s in samples]
    fc = forest.ForestConfig(n_trees=config.n_trees, max_depth=config.max_depth, seed=config.seed)
    mask = None
    if config.rfe_keep is not None and config.rfe_keep < X.shape[1]:
        mask = forest.rfe(X, y, fc, keep=config.rfe_keep, step=config.rfe_step)
    model = forest.train(X, y, fc, feature_mask=mask)
    return FittedPipeline(config=config, label_key=key, model=model, feature_names=names)


def pipeline_matrix(fitted: FittedPipeline, samples: Sequence[TraceSample]) -> np.ndarray:
    X, _ = features.extract_matrix(samples, fitted.config.schema)
    return X


def pipeline_predict(fitted: FittedPipeline, samples: Sequence[TraceSample]) -> list[str]:
    return forest.predict(fitted.model, pipeline_matrix(fitted, samples))


def pipeline_proba(fitted: FittedPipeline, samples: Sequence[TraceSample]) -> np.ndarray:
    return np.atleast_2d(forest.predict_proba(fitted.model, pipeline_matrix(fitted, samples)))


def stratified_split(
    dataset: Dataset, key: str, train_frac: float = 0.8, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Per-class shuffle-and-split; both sides keep every class.

    The per-class train count is train_frac rounded half-up, clamped to
    [1, n-1].  A class with a single sample cannot be split and raises.
    """
    if not 0 < train_frac < 1:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls, indices in sorted(dataset.by_label(key).items()):
        n = len(indices)
        if n < 2:
            raise ValueError(f"class {cls!r} has only {n} sample(s); cannot split")
        n_train = min(max(int(math.floor(train_frac * n + 0.5)), 1), n - 1)
        rng = derive_rng(seed, "split", key, cls)
        perm = rng.permutation(n)
        train_idx.extend(indices[i] for i in perm[:n_train])
        test_idx.extend(indices[i] for i in perm[n_train:])
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


def make_folds(dataset: Dataset, key: str, k: int, seed: int = 0, strict: bool = True) -> list[np.ndarray]:
    """Stratified fold assignment: list of k index arrays.

    If the smallest class has fewer than k samples, strict mode raises;
    otherwise k is reduced to that count (minimum 2) with a warning.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    groups = dataset.by_label(key)
    if not groups:
        raise ValueError("cannot fold an empty dataset")
    min_cls = min(groups, key=lambda c: (len(groups[c]), c))
    min_count = len(groups[min_cls])
    if min_count < 2:
        raise ValueError(f"class {min_cls!r} has only {min_count} sample(s); cannot cross-validate")
    if min_count < k:
        if strict:
            raise ValueError(f"class {min_cls!r} has {min_count} samples, fewer than k={k} folds")
        k_eff = max(2, min_count)
        logger.warning("reducing folds from %d to %d (smallest class %r has %d samples)", k, k_eff, min_cls, min_count)
        k = k_eff
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls, indices in sorted(groups.items()):
        rng = derive_rng(seed, "cv", key, cls)
        perm = rng.permutation(len(indices))
        for r, j in enumerate(perm):
            folds[r % k].append(indices[j])
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def cross_validate(
    dataset: Dataset,
    key: str,
    config: PipelineConfig,
    k: int = 10,
    seed: int = 0,
    strict: bool = True,
) -> EvalReport:
    """k-fold stratified cross-validation of the full pipeline.

    The pipeline (feature extraction, RFE, forest) is fit from scratch
    on each fold's training side, so no information leaks from the
    held-out fold.  See :class:`EvalReport` for how fold statistics are
    reported.
    """
    folds = make_folds(dataset, key, k, seed=seed, strict=strict)
    classes = dataset.classes(key)
    all_true: list[str] = []
    all_pred: list[str] = []
    fold_scores = np.zeros((len(folds), 3))
    for i, test_idx in enumerate(folds):
        test_set = set(int(j) for j in test_idx)
        train_samples = [s for j, s in enumerate(dataset) if j not in test_set]
        test_samples = [dataset[int(j)] for j in test_idx]
        fitted = fit_pipeline(train_samples, key, config)
        pred = pipeline_predict(fitted, test_samples)
        true = [s.labels[key] for s in test_samples]
        fold_report = score(true, pred, labels=classes)
        fold_scores[i] = (fold_report.macro_precision, fold_report.macro_recall, fold_report.macro_f1)
        all_true.extend(true)
        all_pred.extend(pred)
    pooled = score(all_true, all_pred, labels=classes)
    pooled.macro_precision, pooled.macro_recall, pooled.macro_f1 = (float(v) for v in fold_scores.mean(axis=0))
    pooled.macro_precision_std, pooled.macro_recall_std, pooled.macro_f1_std = (
        float(v) for v in fold_scores.std(axis=0)
    )
    pooled.n_folds = len(folds)
    return pooled


def holdout_by_key(
    dataset: Dataset,
    key: str,
    train_values: Sequence[str],
    test_values: Sequence[str],
    class_key: str | None = None,
) -> tuple[Dataset, Dataset]:
    """Split by membership of ``key`` (for example pair or day holdout).

    Train and test value sets must be disjoint and both sides non-empty.
    With ``class_key`` given, classes that occur only in the test side
    are reported via a warning (they can never be predicted correctly).
    """
    train_set, test_set = set(train_values), set(test_values)
    overlap = train_set & test_set
    if overlap:
        raise ValueError(f"train/test {key} values overlap: {sorted(overlap)}")
    train_idx = [i for i, s in enumerate(dataset) if s.labels[key] in train_set]
    test_idx = [i for i, s in enumerate(dataset) if s.labels[key] in test_set]
    if not train_idx:
        raise ValueError(f"no samples with {key} in {sorted(train_set)}")
    if not test_idx:
        raise ValueError(f"no samples with {key} in {sorted(test_set)}")
    train = dataset.subset(train_idx)
    test = dataset.subset(test_idx)
    if class_key is not None:
        missing = sorted(set(test.label_values(class_key)) - set(train.label_values(class_key)))
        if missing:
            logger.warning("classes only in the test side (unlearnable): %s", ", ".join(missing))
    return train, test


def apply_packet_loss(sample: TraceSample, p: float, seed: int = 0) -> TraceSample:
    """Keep each packet independently with probability 1 - p.

    Order is preserved; labels are copied.  p=0 returns an identical
    packet list and p=1 an empty one.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"loss probability must be in [0, 1], got {p}")
    rng = derive_rng(seed, "loss")
    u = rng.random(len(sample.packets))
    packets = [pkt for pkt, keep in zip(sample.packets, u >= p) if keep]
    return TraceSample(packets=packets, labels=dict(sample.labels))


def apply_packet_loss_dataset(dataset: Dataset, p: float, seed: int = 0) -> Dataset:
    """Apply packet loss sample-by-sample with per-sample derived seeds."""
    out = []
    for i, s in enumerate(dataset):
        sub = derive_rng(seed, "loss-dataset", i).integers(0, 2**63 - 1)
        out.append(apply_packet_loss(s, p, seed=int(sub)))
    return Dataset(out)
