"""Continuous-capture processing: activity detection and interval scoring.

A sliding window marks activity wherever its non-meta byte volume
exceeds a threshold; overlapping active windows merge into maximal
segments; each segment is classified by a fitted pipeline and emitted
as a labeled prediction when the forest's confidence clears the
decision threshold.  Scoring matches predictions to ground-truth
intervals of the same label greedily in start order, which is optimal
whenever both interval families are internally disjoint (merged
segments and slot-scheduled truths always are).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Interval, TraceSample
from .evaluate import FittedPipeline, pipeline_proba

NO_ACTION = "NoAction"


@dataclass(frozen=True)
class Segmenter:
    """Sliding-window activity detector configuration."""

    window_s: float = 30.0
    stride_s: float = 1.0
    byte_threshold: int = 200

    def __post_init__(self):
        if self.stride_s <= 0:
            raise ValueError(f"stride must be positive, got {self.stride_s}")
        if self.window_s < self.stride_s:
            raise ValueError(f"window {self.window_s} must be >= stride {self.stride_s}")
        if self.byte_threshold < 0:
            raise ValueError(f"byte threshold must be >= 0, got {self.byte_threshold}")


@dataclass(frozen=True)
class Prediction:
    """One classified segment of a continuous trace."""

    start_s: float
    end_s: float
    label: str
    confidence: float


def find_active_windows(
    trace: TraceSample, segmenter: Segmenter = Segmenter(), merge: bool = True
) -> list[tuple[float, float]]:
    """Time ranges whose sliding windows carry more than the byte threshold.

    Windows [t, t + window) start at multiples of the stride from 0 up
    to the last packet.  A window is active when the sum of its non-meta
    packet sizes strictly exceeds the threshold.  With ``merge`` (the
    default), overlapping and touching active windows are united into
    maximal segments; otherwise the raw active windows are returned.
    """
    times = np.asarray([p.timestamp_s for p in trace.packets if not p.is_meta])
    sizes = np.asarray([p.size_bytes for p in trace.packets if not p.is_meta], dtype=np.float64)
    if len(times) == 0:
        return []
    n_starts = int(times[-1] // segmenter.stride_s) + 1
    starts = np.arange(n_starts) * segmenter.stride_s
    cum = np.concatenate([[0.0], np.cumsum(sizes)])
    lo = np.searchsorted(times, starts, side="left")
    hi = np.searchsorted(times, starts + segmenter.window_s, side="left")
    active = (cum[hi] - cum[lo]) > segmenter.byte_threshold
    windows = [(float(s), float(s + segmenter.window_s)) for s in starts[active]]
    if not merge:
        return windows
    merged: list[tuple[float, float]] = []
    for start, end in windows:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def slice_trace(trace: TraceSample, start_s: float, end_s: float) -> TraceSample:
    """Packets of ``trace`` in [start_s, end_s), re-zeroed to start_s."""
    times = [p.timestamp_s for p in trace.packets]
    i = bisect.bisect_left(times, start_s)
    j = bisect.bisect_left(times, end_s)
    packets = [
        type(p)(p.timestamp_s - start_s, p.direction, p.size_bytes, p.is_meta) for p in trace.packets[i:j]
    ]
    return TraceSample(packets=packets, labels=dict(trace.labels))


def classify_stream(
    trace: TraceSample,
    fitted: FittedPipeline,
    threshold: float,
    segmenter: Segmenter = Segmenter(),
    noise_labels: frozenset[str] | set[str] = frozenset(),
    no_action: str = NO_ACTION,
    merge: bool = True,
) -> list[Prediction]:
    """Detect and classify active segments of a continuous trace.

    Every segment yields exactly one prediction: the classifier's top
    label with its vote fraction when that fraction strictly exceeds
    ``threshold``, else ``no_action``.  Classes in ``noise_labels`` are
    remapped to ``no_action`` (for catalogs that train explicit noise
    or teardown classes).
    """
    if not 0 <= threshold <= 1:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    segments = find_active_windows(trace, segmenter, merge=merge)
    if not segments:
        return []
    times = [p.timestamp_s for p in trace.packets]
    samples = []
    for s, e in segments:
        i, j = bisect.bisect_left(times, s), bisect.bisect_left(times, e)
        packets = [
            type(p)(p.timestamp_s - s, p.direction, p.size_bytes, p.is_meta) for p in trace.packets[i:j]
        ]
        samples.append(TraceSample(packets=packets, labels=dict(trace.labels)))
    probs = pipeline_proba(fitted, samples)
    classes = fitted.model.classes
    out: list[Prediction] = []
    for (start, end), p in zip(segments, probs):
        top = int(np.argmax(p))
        confidence = float(p[top])
        label = classes[top]
        if label in noise_labels:
            label = no_action
        if confidence <= threshold:
            label = no_action
        out.append(Prediction(start, end, label, confidence))
    return out


@dataclass(frozen=True)
class IntervalScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def _overlaps(a_start: float, a_end: float, b_start: float, b_end: float) -> bool:
    return a_start < b_end and b_start < a_end


def score_intervals(
    predictions: Sequence[Prediction],
    truth: Sequence[Interval],
    no_action: str = NO_ACTION,
) -> IntervalScore:
    """Match predictions to truth intervals one-to-one and score.

    A prediction can match a truth interval when their labels are equal
    and their time ranges overlap.  Matching is greedy in start order
    per label, which yields a maximum matching when each side's
    intervals are disjoint.  ``no_action`` predictions and truths are
    ignored (they are the absence of an emission).
    """
    emissions = sorted(
        (p for p in predictions if p.label != no_action), key=lambda p: (p.start_s, p.end_s)
    )
    positives = sorted((t for t in truth if t.label != no_action), key=lambda t: (t.start_s, t.end_s))
    labels = {p.label for p in emissions} | {t.label for t in positives}
    tp = 0
    for label in labels:
        preds = [p for p in emissions if p.label == label]
        truths = [t for t in positives if t.label == label]
        i = j = 0
        while i < len(truths) and j < len(preds):
            t, p = truths[i], preds[j]
            if _overlaps(t.start_s, t.end_s, p.start_s, p.end_s):
                tp += 1
                i += 1
                j += 1
            elif p.end_s <= t.start_s:
                j += 1
            else:
                i += 1
    fp = len(emissions) - tp
    fn = len(positives) - tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return IntervalScore(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


def threshold_sweep(
    trace: TraceSample,
    truth: Sequence[Interval],
    fitted: FittedPipeline,
    thresholds: Iterable[float],
    segmenter: Segmenter = Segmenter(),
    noise_labels: frozenset[str] | set[str] = frozenset(),
    no_action: str = NO_ACTION,
) -> list[tuple[float, IntervalScore]]:
    """Score the stream over a range of decision thresholds."""
    out = []
    for t in thresholds:
        preds = classify_stream(
            trace, fitted, t, segmenter=segmenter, noise_labels=noise_labels, no_action=no_action
        )
        out.append((float(t), score_intervals(preds, truth, no_action=no_action)))
    return out
