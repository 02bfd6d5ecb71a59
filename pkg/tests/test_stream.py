"""Continuous-trace segmentation, classification, and interval scoring."""

import numpy as np
import pytest

from btmeta.core import Dataset, Interval, TraceSample
from btmeta.evaluate import PipelineConfig, fit_pipeline
from btmeta.stream import (
    NO_ACTION,
    IntervalScore,
    Prediction,
    Segmenter,
    classify_stream,
    find_active_windows,
    score_intervals,
    slice_trace,
    threshold_sweep,
)
from testutil import make_labels, pkt, sized_sample


def trace_of(*time_size_pairs, meta_at=()):
    packets = [pkt(t, size=s) for t, s in time_size_pairs]
    packets += [pkt(t, size=0, meta=True) for t in meta_at]
    packets.sort(key=lambda p: p.timestamp_s)
    return TraceSample(packets=packets, labels=make_labels())


def naive_windows(trace, seg, merge):
    pts = [(p.timestamp_s, p.size_bytes) for p in trace.packets if not p.is_meta]
    if not pts:
        return []
    last = max(t for t, _ in pts)
    out = []
    for i in range(int(last // seg.stride_s) + 1):
        s = i * seg.stride_s
        vol = sum(size for t, size in pts if s <= t < s + seg.window_s)
        if vol > seg.byte_threshold:
            out.append((s, s + seg.window_s))
    if not merge:
        return out
    merged = []
    for start, end in out:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def random_trace(rng):
    n = int(rng.integers(0, 26))
    ts = np.sort(rng.uniform(0.0, 60.0, size=n))
    return trace_of(*[(round(float(t), 6), int(rng.integers(0, 301))) for t in ts])


class TestSegmenter:
    def test_defaults(self):
        seg = Segmenter()
        assert (seg.window_s, seg.stride_s, seg.byte_threshold) == (30.0, 1.0, 200)

    @pytest.mark.parametrize(
        "kwargs,match",
        [
            ({"stride_s": 0.0}, "stride"),
            ({"window_s": 0.5, "stride_s": 1.0}, "window"),
            ({"byte_threshold": -1}, "threshold"),
        ],
    )
    def test_validation(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            Segmenter(**kwargs)


class TestFindActiveWindows:
    def test_empty_and_silent_traces(self):
        assert find_active_windows(TraceSample(packets=[], labels=make_labels())) == []
        quiet = trace_of((5.0, 50), (20.0, 50))
        assert find_active_windows(quiet) == []
        all_meta = trace_of(meta_at=(1.0, 2.0, 3.0))
        assert find_active_windows(all_meta) == []

    def test_single_heavy_packet(self):
        trace = trace_of((100.0, 300))
        assert find_active_windows(trace) == [(71.0, 130.0)]

    def test_threshold_is_strict(self):
        assert find_active_windows(trace_of((10.0, 200))) == []
        assert find_active_windows(trace_of((10.0, 201))) != []

    def test_two_separated_bursts_give_two_segments(self):
        trace = trace_of((10.0, 500), (130.0, 500))
        segments = find_active_windows(trace)
        assert len(segments) == 2
        assert segments[0][1] <= segments[1][0]

    def test_unmerged_windows_have_window_width(self):
        trace = trace_of((10.0, 500))
        seg = Segmenter(window_s=5.0, stride_s=1.0, byte_threshold=200)
        raw = find_active_windows(trace, seg, merge=False)
        assert raw == [(6.0, 11.0), (7.0, 12.0), (8.0, 13.0), (9.0, 14.0), (10.0, 15.0)]

    def test_matches_naive_enumeration(self):
        rng = np.random.default_rng(23)
        segmenters = [
            Segmenter(window_s=5.0, stride_s=1.0, byte_threshold=100),
            Segmenter(window_s=30.0, stride_s=2.5, byte_threshold=250),
            Segmenter(window_s=10.0, stride_s=1.0, byte_threshold=0),
        ]
        for case in range(50):
            trace = random_trace(rng)
            seg = segmenters[case % len(segmenters)]
            for merge in (False, True):
                got = find_active_windows(trace, seg, merge=merge)
                want = naive_windows(trace, seg, merge=merge)
                assert got == pytest.approx(want), f"case {case} merge={merge}"

    def test_merged_segments_disjoint_and_sorted(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            trace = random_trace(rng)
            merged = find_active_windows(trace, Segmenter(window_s=5.0, stride_s=1.0, byte_threshold=50))
            for (a0, a1), (b0, b1) in zip(merged, merged[1:]):
                assert a1 < b0

    def test_heavy_packets_always_covered(self):
        rng = np.random.default_rng(31)
        seg = Segmenter(window_s=5.0, stride_s=1.0, byte_threshold=150)
        for _ in range(20):
            trace = random_trace(rng)
            merged = find_active_windows(trace, seg)
            for p in trace.packets:
                if not p.is_meta and p.size_bytes > seg.byte_threshold:
                    assert any(a <= p.timestamp_s < b for a, b in merged)


class TestSliceTrace:
    def test_half_open_and_rezeroed(self):
        trace = trace_of((1.0, 10), (2.0, 20), (5.0, 30))
        out = slice_trace(trace, 2.0, 5.0)
        assert [(p.timestamp_s, p.size_bytes) for p in out.packets] == [(0.0, 20)]
        assert out.labels == trace.labels

    def test_meta_flags_preserved(self):
        trace = trace_of((1.0, 10), meta_at=(1.5,))
        out = slice_trace(trace, 0.0, 3.0)
        assert [p.is_meta for p in out.packets] == [False, True]


def two_action_pipeline():
    samples = []
    for cls, size in (("actA", 500), ("actB", 900)):
        for j in range(6):
            samples.append(sized_sample([size] * 10, gap=0.5, action=cls, app=f"{cls}{j}"))
    return fit_pipeline(samples, "action", PipelineConfig(n_trees=5, seed=1))


def two_burst_trace():
    bursts = [(10.0 + 0.5 * i, 500) for i in range(10)]
    bursts += [(100.0 + 0.5 * i, 900) for i in range(10)]
    return trace_of(*bursts)


class TestClassifyStream:
    def test_segments_get_correct_labels(self):
        preds = classify_stream(two_burst_trace(), two_action_pipeline(), threshold=0.5)
        assert [p.label for p in preds] == ["actA", "actB"]
        assert all(p.confidence > 0.5 for p in preds)
        assert preds[0].start_s < preds[0].end_s <= preds[1].start_s

    def test_threshold_one_silences_everything(self):
        preds = classify_stream(two_burst_trace(), two_action_pipeline(), threshold=1.0)
        assert len(preds) == 2  # one prediction per segment, all demoted
        assert all(p.label == NO_ACTION for p in preds)

    def test_threshold_zero_always_emits(self):
        preds = classify_stream(two_burst_trace(), two_action_pipeline(), threshold=0.0)
        assert all(p.label != NO_ACTION for p in preds)

    def test_noise_labels_remapped(self):
        preds = classify_stream(
            two_burst_trace(), two_action_pipeline(), threshold=0.0, noise_labels={"actB"}
        )
        assert [p.label for p in preds] == ["actA", NO_ACTION]

    def test_empty_trace_yields_no_predictions(self):
        trace = TraceSample(packets=[], labels=make_labels())
        assert classify_stream(trace, two_action_pipeline(), threshold=0.5) == []

    def test_threshold_validated(self):
        for t in (-0.1, 1.0001):
            with pytest.raises(ValueError, match="threshold"):
                classify_stream(two_burst_trace(), two_action_pipeline(), threshold=t)


def brute_force_tp(preds, truths):
    """Maximum one-to-one matching via exhaustive search."""
    edges = {
        (i, j)
        for i, t in enumerate(truths)
        for j, p in enumerate(preds)
        if t.label == p.label and t.start_s < p.end_s and p.start_s < t.end_s
    }
    best = 0

    def rec(i, used):
        nonlocal best
        best = max(best, len(used))
        if i == len(truths):
            return
        rec(i + 1, used)
        for j in range(len(preds)):
            if j not in used and (i, j) in edges:
                rec(i + 1, used | {j})

    rec(0, frozenset())
    return best


def random_disjoint_intervals(rng, labels, max_n=5):
    out = []
    t = float(rng.uniform(0, 5))
    for _ in range(int(rng.integers(0, max_n + 1))):
        width = float(rng.uniform(1, 8))
        out.append((t, t + width, labels[int(rng.integers(0, len(labels)))]))
        t += width + float(rng.uniform(0.0, 6.0))
    return out


class TestScoreIntervals:
    def test_overlap_same_label_matches(self):
        preds = [Prediction(20.0, 50.0, "X", 0.9)]
        truth = [Interval(10.0, 40.0, "X")]
        s = score_intervals(preds, truth)
        assert (s.tp, s.fp, s.fn) == (1, 0, 0)
        assert s.precision == s.recall == s.f1 == 1.0

    def test_no_overlap_is_fp_and_fn(self):
        preds = [Prediction(50.0, 60.0, "X", 0.9)]
        truth = [Interval(10.0, 40.0, "X")]
        s = score_intervals(preds, truth)
        assert (s.tp, s.fp, s.fn) == (0, 1, 1)
        assert s.f1 == 0.0

    def test_label_mismatch_never_matches(self):
        preds = [Prediction(10.0, 40.0, "Y", 0.9)]
        truth = [Interval(10.0, 40.0, "X")]
        s = score_intervals(preds, truth)
        assert (s.tp, s.fp, s.fn) == (0, 1, 1)

    def test_touching_intervals_do_not_overlap(self):
        preds = [Prediction(20.0, 30.0, "X", 0.9)]
        truth = [Interval(10.0, 20.0, "X")]
        assert score_intervals(preds, truth).tp == 0

    def test_one_prediction_matches_at_most_one_truth(self):
        preds = [Prediction(0.0, 100.0, "X", 0.9)]
        truth = [Interval(10.0, 20.0, "X"), Interval(30.0, 40.0, "X")]
        s = score_intervals(preds, truth)
        assert (s.tp, s.fp, s.fn) == (1, 0, 1)

    def test_no_action_ignored_on_both_sides(self):
        preds = [Prediction(10.0, 20.0, NO_ACTION, 0.9), Prediction(30.0, 40.0, "X", 0.9)]
        truth = [Interval(30.0, 40.0, "X"), Interval(50.0, 60.0, NO_ACTION)]
        s = score_intervals(preds, truth)
        assert (s.tp, s.fp, s.fn) == (1, 0, 0)

    def test_empty_inputs(self):
        s = score_intervals([], [])
        assert s == IntervalScore(0, 0, 0, 0.0, 0.0, 0.0)

    def test_tp_bounded_by_both_sides(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            truth = [Interval(a, b, l) for a, b, l in random_disjoint_intervals(rng, ["X", "Y"])]
            preds = [Prediction(a, b, l, 0.9) for a, b, l in random_disjoint_intervals(rng, ["X", "Y"])]
            s = score_intervals(preds, truth)
            assert s.tp <= min(len(preds), len(truth))
            assert s.tp + s.fp == len(preds)
            assert s.tp + s.fn == len(truth)

    def test_greedy_matching_is_optimal_on_disjoint_families(self):
        rng = np.random.default_rng(41)
        for _ in range(200):
            labels = ["X", "Y", "Z"][: int(rng.integers(1, 4))]
            truth = [Interval(a, b, l) for a, b, l in random_disjoint_intervals(rng, labels)]
            preds = [Prediction(a, b, l, 0.8) for a, b, l in random_disjoint_intervals(rng, labels)]
            got = score_intervals(preds, truth).tp
            want = brute_force_tp(preds, truth)
            assert got == want


class TestThresholdSweep:
    def test_sweep_matches_pointwise_scoring(self):
        trace = two_burst_trace()
        fitted = two_action_pipeline()
        truth = [Interval(10.0, 15.0, "actA"), Interval(100.0, 105.0, "actB")]
        thresholds = (0.0, 0.5, 1.0)
        sweep = threshold_sweep(trace, truth, fitted, thresholds)
        assert [t for t, _ in sweep] == list(thresholds)
        for t, s in sweep:
            preds = classify_stream(trace, fitted, t)
            assert score_intervals(preds, truth) == s

    def test_full_threshold_kills_recall(self):
        trace = two_burst_trace()
        truth = [Interval(10.0, 15.0, "actA")]
        sweep = threshold_sweep(trace, truth, two_action_pipeline(), [1.0])
        assert sweep[0][1].recall == 0.0
        assert sweep[0][1].tp == 0
