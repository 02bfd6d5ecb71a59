"""End-to-end acceptance suite.

Twelve numbered checks cover the whole package at its real operating
points: feature extraction, the device/app/action attacks, the shaping
defenses and their cost accounting, robustness to packet loss and
device-pair transfer, the continuous-stream detector, scoring, and
byte-level reproducibility of every experiment.  Each test prints one
``[acceptance NN] PASS/FAIL`` verdict line with the measured numbers.
"""

from __future__ import annotations

import time
from functools import partial
from pathlib import Path

import numpy as np
import pytest

from btmeta import defenses, forest
from btmeta.core import Direction, Interval, PacketRecord, TraceSample, quantize_ts
from btmeta.evaluate import FittedPipeline, PipelineConfig, score
from btmeta.experiments import (
    DEEP_THRESHOLDS,
    run_action_wide,
    run_aging,
    run_app_deep,
    run_chipset_id,
    run_defense,
    run_device_id,
    run_diabetes,
    run_loss_sweep,
    run_simulate,
    run_stream,
    run_transfer,
)
from btmeta.features import ACTION997, DEVICE32, extract, feature_names
from btmeta.packs import default_pack
from btmeta.stream import NO_ACTION, Prediction, classify_stream, score_intervals
from btmeta.synth import generate_dataset, generate_day

from testutil import make_labels, random_valid_sample


@pytest.fixture
def verdict(capsys):
    """Emit one visible pass/fail line per criterion, then enforce it."""

    def emit(num: int, desc: str, problems: list[str], detail: str) -> None:
        outcome = "PASS" if not problems else "FAIL"
        line = f"[acceptance {num:02d}] {outcome} {desc} ({detail})"
        if problems:
            line += " :: " + "; ".join(problems)
        # Capture must be lifted explicitly; pytest intercepts stdout at
        # the file-descriptor level, so a plain print would vanish.
        with capsys.disabled():
            print(line, flush=True)
        assert not problems, line

    return emit


def test_c01_feature_vector_shapes(verdict):
    rng = np.random.default_rng(101)
    samples = [random_valid_sample(rng) for _ in range(1000)]
    problems: list[str] = []
    t0 = time.perf_counter()
    for i, s in enumerate(samples):
        v32 = extract(s, DEVICE32).values
        v997 = extract(s, ACTION997).values
        if v32.shape != (32,):
            problems.append(f"sample {i}: device32 shape {v32.shape}")
        if v997.shape != (997,):
            problems.append(f"sample {i}: action997 shape {v997.shape}")
        if not (np.isfinite(v32).all() and np.isfinite(v997).all()):
            problems.append(f"sample {i}: non-finite feature values")
    elapsed = time.perf_counter() - t0
    if elapsed >= 5.0:
        problems.append(f"extraction took {elapsed:.2f} s, budget 5 s")
    verdict(1, "feature vectors are (32,) and (997,) on 1000 random samples",
               problems, f"{elapsed:.2f} s for 2000 extractions")


def test_c02_average_interarrival_identity(verdict):
    rng = np.random.default_rng(202)
    idx = feature_names(DEVICE32).index("avg_ipt_m2s")
    worst = 0.0
    problems: list[str] = []
    for case in range(1000):
        n = int(rng.integers(2, 200))
        ts = sorted(quantize_ts(float(t)) for t in rng.uniform(0.0, 3600.0, n))
        sample = TraceSample(
            packets=[PacketRecord(t, Direction.M2S, 100, False) for t in ts],
            labels=make_labels(),
        )
        got = extract(sample, DEVICE32).values[idx]
        expected = (ts[-1] - ts[0]) / (n - 1)
        err = abs(got - expected)
        worst = max(worst, err)
        if err > 1e-12:
            problems.append(f"case {case}: |avg_ipt - span/(n-1)| = {err:.3e}")
    verdict(2, "mean interarrival equals (last-first)/(n-1) on 1000 traces",
               problems, f"worst error {worst:.3e}, tolerance 1e-12")


def test_c03_device_identification(tmp_path, verdict):
    t0 = time.perf_counter()
    res = run_device_id(tmp_path / "device_id", seed=0)
    elapsed = time.perf_counter() - t0
    problems: list[str] = []
    for tag in ("classic", "le"):
        f1 = res[tag].macro_f1
        if f1 < 0.90:
            problems.append(f"{tag}: macro F1 {f1:.3f} < 0.90")
    if elapsed >= 120.0:
        problems.append(f"ran {elapsed:.1f} s, budget 120 s")
    verdict(3, "device identification reaches macro F1 >= 0.90 per flavor",
               problems,
               f"classic {res['classic'].macro_f1:.3f}, le {res['le'].macro_f1:.3f}, {elapsed:.1f} s")


def test_c04_app_identification_depth(tmp_path, verdict):
    t0 = time.perf_counter()
    res = run_app_deep(tmp_path / "app_deep", seed=0)
    elapsed = time.perf_counter() - t0
    high, low = res["high"].macro_f1, res["low"].macro_f1
    problems: list[str] = []
    if high < 0.85:
        problems.append(f"high-volume macro F1 {high:.3f} < 0.85")
    if low > 0.40:
        problems.append(f"low-volume macro F1 {low:.3f} > 0.40")
    if elapsed >= 300.0:
        problems.append(f"ran {elapsed:.1f} s, budget 300 s")
    verdict(4, "app identification separates high- from low-volume apps",
               problems, f"high {high:.3f}, low {low:.3f}, {elapsed:.1f} s")


def test_c05_defenses_degrade_the_attack(tmp_path, verdict):
    res = run_defense(tmp_path / "defense", seed=0)
    baseline_pct = 100.0 * res["none"][0].macro_recall
    chance_pct = 100.0 / len(res["none"][0].classes)
    problems: list[str] = []
    drops: list[str] = []
    for name in defenses.DEFENSE_NAMES:
        summary = res[name][1]
        drop = baseline_pct - summary.accuracy_pct
        drops.append(f"{name} -{drop:.1f}")
        if drop < 15.0:
            problems.append(f"{name}: accuracy drop {drop:.1f} pts < 15")
        if summary.accuracy_pct <= chance_pct:
            problems.append(f"{name}: accuracy {summary.accuracy_pct:.1f}% at or below chance {chance_pct:.1f}%")
    pad_summary = res["pad"][1]
    if pad_summary.delay_per_packet_s != 0.0 or pad_summary.extra_duration_s != 0.0:
        problems.append("pad reports nonzero delay cost")
    group_summary = res["delay_group"][1]
    if group_summary.padding_kb != 0.0 or group_summary.dummy_kb != 0.0:
        problems.append("delay_group reports nonzero byte cost")
    if res["add_dummies"][1].dummy_kb <= 0.0:
        problems.append("add_dummies reports zero dummy volume")

    # Per-sample cost exactness against the payload-byte delta.
    base = generate_dataset(default_pack().group("medlog"), 3, seed=7)
    for name in defenses.DEFENSE_NAMES:
        shaped, costs = defenses.defend_dataset(base, name, seed=7, n_dummies=25)
        for i, (before, after, cost) in enumerate(zip(base, shaped, costs)):
            delta = after.payload_bytes() - before.payload_bytes()
            added = cost.padding_bytes + cost.dummy_bytes
            if added != delta:
                problems.append(f"{name} sample {i}: cost says +{added} B, payload grew {delta} B")
            if name == "pad" and cost.dummy_bytes != 0:
                problems.append(f"pad sample {i}: nonzero dummy bytes")
            if name == "delay_group" and delta != 0:
                problems.append(f"delay_group sample {i}: payload changed by {delta} B")
            if name == "add_dummies" and cost.padding_bytes != 0:
                problems.append(f"add_dummies sample {i}: nonzero padding bytes")
    verdict(5, "each defense costs the retrained attack >= 15 accuracy points",
               problems, f"baseline {baseline_pct:.1f}%, drops: {', '.join(drops)}")


def test_c06_whole_second_grouping_mean_delay(verdict):
    problems: list[str] = []
    means: list[float] = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        ts = np.sort(rng.uniform(0.0, 1000.0, 1000))
        sample = TraceSample(
            packets=[PacketRecord(quantize_ts(float(t)), Direction.M2S, 100, False) for t in ts],
            labels=make_labels(),
        )
        _, cost = defenses.delay_group(sample)
        means.append(cost.delay_per_packet_s)
        if not 0.45 <= cost.delay_per_packet_s <= 0.55:
            problems.append(f"seed {seed}: mean delay {cost.delay_per_packet_s:.3f} outside [0.45, 0.55]")
    verdict(6, "grouping uniform arrivals delays 0.45-0.55 s/packet over 10 seeds",
               problems, f"means {min(means):.3f}..{max(means):.3f}")


def test_c07_packet_loss_robustness(tmp_path, verdict):
    res = run_loss_sweep(tmp_path / "loss", seed=0)
    acc0 = res[(0.0, 0)].accuracy
    acc_half = res[(0.5, 0)].accuracy
    acc_full = res[(1.0, 0)].accuracy
    chance = 1.0 / len(res[(1.0, 0)].classes)
    problems: list[str] = []
    if abs(acc_half - acc0) > 0.20:
        problems.append(f"|acc(0.5) - acc(0)| = {abs(acc_half - acc0):.3f} > 0.20")
    if abs(acc_full - chance) > 0.10:
        problems.append(f"acc(1.0) = {acc_full:.3f} not within 0.10 of chance {chance:.3f}")
    verdict(7, "attack survives 50% loss and collapses to chance at 100%",
               problems,
               f"acc(0)={acc0:.3f}, acc(0.5)={acc_half:.3f}, acc(1)={acc_full:.3f}, chance={chance:.3f}")


def test_c08_stream_detection_on_a_full_day(tmp_path, verdict):
    out = tmp_path / "stream"
    t0 = time.perf_counter()
    res = run_stream(out, seed=0)
    elapsed = time.perf_counter() - t0
    problems: list[str] = []
    recalls = [s.recall for _, s in res["sweep"]]
    thresholds = [t for t, _ in res["sweep"]]
    if tuple(thresholds) != tuple(DEEP_THRESHOLDS):
        problems.append(f"sweep thresholds {thresholds} differ from the default grid")
    for (t_lo, r_lo), (t_hi, r_hi) in zip(zip(thresholds, recalls), zip(thresholds[1:], recalls[1:])):
        if r_hi > r_lo + 1e-12:
            problems.append(f"recall rose from {r_lo:.3f} at T={t_lo:.2f} to {r_hi:.3f} at T={t_hi:.2f}")
    if res["best"].f1 < 0.75:
        problems.append(f"best F1 {res['best'].f1:.3f} < 0.75")
    if res["n_truth"] == 0:
        problems.append("day trace contains no true action intervals")

    pack = default_pack()
    fitted = FittedPipeline(
        config=PipelineConfig(schema=ACTION997, n_trees=30, rfe_keep=50, seed=0),
        label_key="action",
        model=forest.load(out / "stream_model.json"),
        feature_names=feature_names(ACTION997),
    )
    day, _ = generate_day(pack, pack.day_plan, seed=0)
    emissions = [p for p in classify_stream(day, fitted, 1.0) if p.label != NO_ACTION]
    if emissions:
        problems.append(f"threshold 1.0 still emitted {len(emissions)} action predictions")
    if elapsed >= 600.0:
        problems.append(f"ran {elapsed:.1f} s, budget 600 s")
    verdict(8, "day-long stream: recall falls with threshold, best F1 >= 0.75, T=1 mute",
               problems,
               f"best F1 {res['best'].f1:.3f} at T={res['best_threshold']:.2f}, "
               f"{res['n_truth']} truth intervals, {elapsed:.1f} s")


def test_c09_cross_pair_transfer(tmp_path, verdict):
    res = run_transfer(tmp_path / "transfer", seed=0)
    within = (res["within_P1"].macro_f1 + res["within_P2"].macro_f1) / 2.0
    problems: list[str] = []
    gaps: list[str] = []
    for direction in ("P1_to_P2", "P2_to_P1"):
        gap = within - res[direction].macro_f1
        gaps.append(f"{direction} gap {gap:+.3f}")
        if gap > 0.15:
            problems.append(f"{direction}: macro F1 {res[direction].macro_f1:.3f} "
                            f"more than 0.15 below within-pair mean {within:.3f}")
    verdict(9, "cross-pair attack stays within 15 points of within-pair",
               problems, f"within mean {within:.3f}, {', '.join(gaps)}")


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c10_reruns_are_byte_identical(tmp_path, verdict):
    runs = [
        ("device-id", partial(run_device_id, seed=3, n_per_class=6, folds=3, trees=3,
                              rfe_keep=8, duration_s=6.0)),
        ("chipset-id", partial(run_chipset_id, seed=3, n_per_class=6, folds=3, trees=3,
                               rfe_keep=8, duration_s=6.0)),
        ("action-wide", partial(run_action_wide, seed=3, n_per_class=4, trees=3, rfe_keep=20)),
        ("app-deep", partial(run_app_deep, seed=3, n_per_class=4, trees=3, rfe_keep=20)),
        ("diabetes", partial(run_diabetes, seed=3, n_per_class=6, trees=3, rfe_keep=20)),
        ("transfer", partial(run_transfer, seed=3, n_per_class=5, trees=3, rfe_keep=20)),
        ("aging", partial(run_aging, seed=3, n_days=2, n_per_class=5, n_apps=4, trees=3, rfe_keep=20)),
        ("loss-sweep", partial(run_loss_sweep, seed=3, rates=(0.0, 1.0), reps=1,
                               n_per_class=4, trees=3, rfe_keep=20)),
        ("defense", partial(run_defense, seed=3, n_per_class=4, trees=3, rfe_keep=20, n_dummies=20)),
        ("stream", partial(run_stream, seed=3, thresholds=(0.2, 0.4), n_per_class=4,
                           trees=3, rfe_keep=20)),
        ("simulate", partial(run_simulate, seed=3, group="device_classic", n_per_class=3,
                             duration_s=5.0)),
        ("simulate-day", partial(run_simulate, seed=3, day=True)),
    ]
    problems: list[str] = []
    n_files = 0
    for name, runner in runs:
        first, second = tmp_path / "a" / name, tmp_path / "b" / name
        runner(first)
        runner(second)
        tree_a, tree_b = _tree_bytes(first), _tree_bytes(second)
        if not tree_a:
            problems.append(f"{name}: wrote no files")
        if tree_a.keys() != tree_b.keys():
            problems.append(f"{name}: file sets differ: "
                            f"{sorted(tree_a.keys() ^ tree_b.keys())}")
            continue
        diffs = [rel for rel in tree_a if tree_a[rel] != tree_b[rel]]
        if diffs:
            problems.append(f"{name}: bytes differ in {diffs}")
        n_files += len(tree_a)
    verdict(10, "every experiment rerun with the same seed is byte-identical",
               problems, f"{len(runs)} runs x2, {n_files} files compared")


def test_c11_scoring_matches_brute_force(verdict):
    rng = np.random.default_rng(1111)
    problems: list[str] = []
    worst = 0.0
    for case in range(100):
        n_classes = int(rng.integers(2, 7))
        classes = [f"c{i}" for i in range(n_classes)]
        n = int(rng.integers(1, 60))
        y_true = [classes[int(rng.integers(n_classes))] for _ in range(n)]
        y_pred = [classes[int(rng.integers(n_classes))] for _ in range(n)]
        rep = score(y_true, y_pred, labels=classes)

        counts = np.zeros((n_classes, n_classes))
        for t, p in zip(y_true, y_pred):
            counts[classes.index(t), classes.index(p)] += 1.0
        err = float(np.abs(rep.confusion_counts - counts).max())
        support = counts.sum(axis=1)
        predicted = counts.sum(axis=0)
        for i in range(n_classes):
            prec = counts[i, i] / predicted[i] if predicted[i] else 0.0
            rec = counts[i, i] / support[i] if support[i] else 0.0
            f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
            err = max(err, abs(rep.precision[i] - prec), abs(rep.recall[i] - rec),
                      abs(rep.f1[i] - f1))
            if support[i] > 0 and abs(rep.confusion[i].sum() - 1.0) > 1e-12:
                problems.append(f"case {case}: normalized row {i} sums to {rep.confusion[i].sum()!r}")
        present = support > 0
        err = max(err, abs(rep.accuracy - np.trace(counts) / n))
        err = max(err, abs(rep.macro_f1 - float(np.mean([
            rep.f1[i] for i in range(n_classes) if present[i]
        ]))))
        worst = max(worst, err)
        if err > 1e-12:
            problems.append(f"case {case}: scoring deviates from brute force by {err:.3e}")
    verdict(11, "score() matches brute-force confusion math on 100 cases",
               problems, f"worst deviation {worst:.3e}, tolerance 1e-12")


def _optimal_tp(predictions: list[Prediction], truth: list[Interval]) -> int:
    """Maximum one-to-one same-label overlap matching, by exhaustive search."""
    total = 0
    emissions = [p for p in predictions if p.label != NO_ACTION]
    positives = [t for t in truth if t.label != NO_ACTION]
    for label in {p.label for p in emissions} | {t.label for t in positives}:
        preds = [p for p in emissions if p.label == label]
        truths = [t for t in positives if t.label == label]

        def best(i: int, used: frozenset[int]) -> int:
            if i == len(preds):
                return 0
            most = best(i + 1, used)
            for j, t in enumerate(truths):
                if j not in used and preds[i].start_s < t.end_s and t.start_s < preds[i].end_s:
                    most = max(most, 1 + best(i + 1, used | {j}))
            return most

        total += best(0, frozenset())
    return total


def _disjoint_intervals(rng: np.random.Generator, labels: list[str]) -> list[tuple[float, float, str]]:
    out = []
    t = float(rng.uniform(0.0, 5.0))
    for _ in range(int(rng.integers(0, 6))):
        length = float(rng.uniform(0.5, 8.0))
        out.append((t, t + length, labels[int(rng.integers(len(labels)))]))
        t += length + float(rng.uniform(0.1, 6.0))
    return out


def test_c12_interval_matching_is_optimal(verdict):
    rng = np.random.default_rng(1212)
    problems: list[str] = []
    n_nonzero = 0
    for case in range(300):
        labels = [f"act{i}" for i in range(int(rng.integers(1, 4)))] + [NO_ACTION]
        preds = [Prediction(s, e, lab, 0.9) for s, e, lab in _disjoint_intervals(rng, labels)]
        truth = [Interval(s, e, lab) for s, e, lab in _disjoint_intervals(rng, labels)]
        got = score_intervals(preds, truth)
        want_tp = _optimal_tp(preds, truth)
        n_emit = sum(1 for p in preds if p.label != NO_ACTION)
        n_truth = sum(1 for t in truth if t.label != NO_ACTION)
        n_nonzero += want_tp > 0
        if got.tp != want_tp:
            problems.append(f"case {case}: greedy tp {got.tp} != optimal {want_tp}")
        if got.fp != n_emit - want_tp or got.fn != n_truth - want_tp:
            problems.append(f"case {case}: fp/fn inconsistent with optimal matching")
    verdict(12, "greedy interval matching equals exhaustive optimum on 300 cases",
               problems, f"{n_nonzero} cases with nonzero matches, 0 discrepancies required")
