"""Experiment drivers behind the CLI.

Each ``run_*`` function generates its datasets from a profile pack,
runs the attack pipeline, writes report CSVs (with provenance headers)
and companion figures into the output directory, and returns a summary
dict for programmatic use.  All randomness derives from the one seed
argument, so re-running with the same seed reproduces every output
byte-for-byte.

Methodology defaults mirror the package conventions: whole-device
fingerprinting uses the 32-feature schema with a 10-tree forest reduced
to 10 features and 10-fold cross-validation; app/action fingerprinting
uses the 997-feature schema with a 30-tree forest reduced to 50
features and a stratified 80/20 split.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import defenses, forest, ingest, report, stream, synth
from .core import Dataset, TraceSample, derive_int, derive_rng
from .evaluate import (
    EvalReport,
    PipelineConfig,
    apply_packet_loss_dataset,
    cross_validate,
    fit_pipeline,
    holdout_by_key,
    pipeline_predict,
    score,
    stratified_split,
)
from .features import ACTION997, DEVICE32
from .packs import default_pack
from .synth import ProfilePack, generate_dataset, generate_day, with_gap_scale

logger = logging.getLogger(__name__)

EXPERIMENT_NAMES = (
    "device-id",
    "chipset-id",
    "action-wide",
    "app-deep",
    "diabetes",
    "transfer",
    "aging",
    "loss-sweep",
    "defense",
    "stream",
)

DEEP_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(1, 13))  # 0.05 .. 0.60


def _deep_config(seed: int, trees: int = 30, rfe_keep: int = 50) -> PipelineConfig:
    return PipelineConfig(schema=ACTION997, n_trees=trees, rfe_keep=rfe_keep, seed=seed)


def _eval_bundle(
    out: Path, prefix: str, rep: EvalReport, seed: int, config: Mapping, title: str
) -> None:
    report.write_eval_csv(out / f"{prefix}_report.csv", rep, seed, config)
    report.write_confusion_csv(out / f"{prefix}_confusion.csv", rep, seed, config)
    report.fig_confusion(out / f"{prefix}_confusion.png", rep, title)


def _importance_bundle(out: Path, prefix: str, samples: Sequence[TraceSample], key: str, cfg: PipelineConfig, seed: int, config: Mapping, title: str) -> None:
    fitted = fit_pipeline(samples, key, cfg)
    imp = forest.feature_importance(fitted.model)
    report.write_importance_csv(out / f"{prefix}_importance.csv", fitted.feature_names, imp.values, seed, config)
    if not imp.degenerate:
        report.fig_importance(out / f"{prefix}_importance.png", fitted.feature_names, imp.values, title)


def _split_fit_score(ds: Dataset, key: str, cfg: PipelineConfig, seed: int, train_frac: float = 0.8) -> EvalReport:
    train, test = stratified_split(ds, key, train_frac=train_frac, seed=seed)
    fitted = fit_pipeline(list(train), key, cfg)
    pred = pipeline_predict(fitted, list(test))
    return score(test.label_values(key), pred, labels=ds.classes(key))


def run_device_id(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    n_per_class: int = 25,
    folds: int = 10,
    trees: int = 10,
    rfe_keep: int = 10,
    duration_s: float = 30.0,
) -> dict:
    """Identify which device produced a capture, per transport flavor."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "experiment": "device-id", "pack": pack.name, "n_per_class": n_per_class,
        "folds": folds, "trees": trees, "rfe_keep": rfe_keep, "duration_s": duration_s,
    }
    cfg = PipelineConfig(schema=DEVICE32, n_trees=trees, rfe_keep=rfe_keep, seed=seed)
    results: dict = {}
    for tag, group in (("classic", "device_classic"), ("le", "device_le")):
        ds = generate_dataset(pack.group(group), n_per_class, duration_s=duration_s, seed=seed)
        ds = ingest.balance_by_label(ds, "device", seed=seed)
        rep = cross_validate(ds, "device", cfg, k=folds, seed=seed)
        _eval_bundle(out, f"device_id_{tag}", rep, seed, config, f"Device identification ({tag})")
        _importance_bundle(out, f"device_id_{tag}", list(ds), "device", cfg, seed, config,
                           f"Feature importance, device identification ({tag})")
        results[tag] = rep
        logger.info("device-id %s: macro F1 %.3f (std %.3f)", tag, rep.macro_f1, rep.macro_f1_std)
    return results


def run_chipset_id(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    n_per_class: int = 25,
    folds: int = 10,
    trees: int = 10,
    rfe_keep: int = 10,
    duration_s: float = 30.0,
) -> dict:
    """Identify the chipset behind a capture, Classic and LE combined."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "experiment": "chipset-id", "pack": pack.name, "n_per_class": n_per_class,
        "folds": folds, "trees": trees, "rfe_keep": rfe_keep, "duration_s": duration_s,
    }
    profiles = pack.group("device_classic") + pack.group("device_le")
    ds = generate_dataset(profiles, n_per_class, duration_s=duration_s, seed=seed)
    relabeled = Dataset(
        TraceSample(packets=s.packets, labels={**s.labels, "chipset": pack.chipset_of(s.labels["device"])})
        for s in ds
    )
    cfg = PipelineConfig(schema=DEVICE32, n_trees=trees, rfe_keep=rfe_keep, seed=seed)
    rep = cross_validate(relabeled, "chipset", cfg, k=folds, seed=seed)
    _eval_bundle(out, "chipset_id", rep, seed, config, "Chipset identification (Classic and LE)")
    _importance_bundle(out, "chipset_id", list(relabeled), "chipset", cfg, seed, config,
                       "Feature importance, chipset identification")
    logger.info("chipset-id: macro F1 %.3f (std %.3f)", rep.macro_f1, rep.macro_f1_std)
    return {"combined": rep}


def _with_target_label(ds: Dataset) -> Dataset:
    return Dataset(
        TraceSample(
            packets=s.packets,
            labels={**s.labels, "target": f"{s.labels['device']}|{s.labels['app']}|{s.labels['action']}"},
        )
        for s in ds
    )


def run_action_wide(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    n_per_class: int = 22,
    trees: int = 30,
    rfe_keep: int = 50,
) -> dict:
    """Joint (device, app, action) identification across devices."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "experiment": "action-wide", "pack": pack.name, "n_per_class": n_per_class,
        "trees": trees, "rfe_keep": rfe_keep,
    }
    ds = _with_target_label(generate_dataset(pack.group("wide"), n_per_class, seed=seed))
    cfg = _deep_config(seed, trees, rfe_keep)
    rep = _split_fit_score(ds, "target", cfg, seed)
    _eval_bundle(out, "action_wide", rep, seed, config, "Wide action identification")
    train, _ = stratified_split(ds, "target", seed=seed)
    _importance_bundle(out, "action_wide", list(train), "target", cfg, seed, config,
                       "Feature importance, wide action identification")
    logger.info("action-wide: macro F1 %.3f", rep.macro_f1)
    return {"wide": rep}


def run_app_deep(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    n_per_class: int = 40,
    trees: int = 30,
    rfe_keep: int = 50,
) -> dict:
    """App identification, split into high- and low-volume app sets."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "experiment": "app-deep", "pack": pack.name, "n_per_class": n_per_class,
        "trees": trees, "rfe_keep": rfe_keep,
    }
    cfg = _deep_config(seed, trees, rfe_keep)
    results: dict = {}
    for tag, group in (("high", "app_high"), ("low", "app_low")):
        ds = generate_dataset(pack.group(group), n_per_class, seed=seed)
        rep = _split_fit_score(ds, "app", cfg, seed)
        _eval_bundle(out, f"app_deep_{tag}", rep, seed, config, f"App identification ({tag}-volume)")
        results[tag] = rep
        logger.info("app-deep %s: macro F1 %.3f", tag, rep.macro_f1)
    return results


def run_diabetes(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    n_per_class: int = 150,
    trees: int = 30,
    rfe_keep: int = 50,
) -> dict:
    """Fine-grained action identification inside one medical logging app."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "experiment": "diabetes", "pack": pack.name, "n_per_class": n_per_class,
        "trees": trees, "rfe_keep": rfe_keep,
    }
    ds = generate_dataset(pack.group("medlog"), n_per_class, seed=seed)
    cfg = _deep_config(seed, trees, rfe_keep)
    rep = _split_fit_score(ds, "action", cfg, seed)
    _eval_bundle(out, "diabetes", rep, seed, config, "In-app action identification (medlog)")
    logger.info("diabetes: macro F1 %.3f", rep.macro_f1)
    return {"actions": rep}


def run_transfer(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    n_per_class: int = 25,
    trees: int = 30,
    rfe_keep: int = 50,
    intra_scale: float = 1.1,
    inter_scale: float = 0.9,
) -> dict:
    """Train on one device pair, attack another with shifted timing."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "experiment": "transfer", "pack": pack.name, "n_per_class": n_per_class,
        "trees": trees, "rfe_keep": rfe_keep, "intra_scale": intra_scale, "inter_scale": inter_scale,
    }
    cfg = _deep_config(seed, trees, rfe_keep)
    profiles_p1 = pack.group("app_high")
    profiles_p2 = [with_gap_scale(p, intra_scale, inter_scale) for p in profiles_p1]
    ds1 = generate_dataset(profiles_p1, n_per_class, seed=seed, pair="P1")
    ds2 = generate_dataset(profiles_p2, n_per_class, seed=seed, pair="P2")
    combined = Dataset(list(ds1) + list(ds2))

    results: dict = {}
    results["within_P1"] = _split_fit_score(ds1, "app", cfg, seed)
    results["within_P2"] = _split_fit_score(ds2, "app", cfg, seed)
    for src, dst in (("P1", "P2"), ("P2", "P1")):
        train, test = holdout_by_key(combined, "pair", [src], [dst], class_key="app")
        fitted = fit_pipeline(list(train), "app", cfg)
        pred = pipeline_predict(fitted, list(test))
        rep = score(test.label_values("app"), pred, labels=combined.classes("app"))
        results[f"{src}_to_{dst}"] = rep
        _eval_bundle(out, f"transfer_{src.lower()}_to_{dst.lower()}", rep, seed, config,
                     f"Cross-pair transfer {src} to {dst}")
    rows = [(name, rep.macro_precision, rep.macro_recall, rep.macro_f1) for name, rep in results.items()]
    report.write_series_csv(out / "transfer_summary.csv", "setting,macro_precision,macro_recall,macro_f1",
                            rows, seed, config)
    report.fig_bars(out / "transfer_summary.png", [r[0] for r in rows], [r[3] for r in rows],
                    "macro F1", "Within-pair vs cross-pair attack quality")
    for name, rep in results.items():
        logger.info("transfer %s: macro F1 %.3f", name, rep.macro_f1)
    return results


def run_aging(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    n_days: int = 8,
    n_per_class: int = 20,
    n_apps: int = 12,
    trees: int = 30,
    rfe_keep: int = 50,
    drift_per_day: float = 0.015,
) -> dict:
    """Train on day 0, evaluate on later days as timing drifts."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "experiment": "aging", "pack": pack.name, "n_days": n_days, "n_per_class": n_per_class,
        "n_apps": n_apps, "trees": trees, "rfe_keep": rfe_keep, "drift_per_day": drift_per_day,
    }
    base = pack.group("app_high")[:n_apps]
    cfg = _deep_config(seed, trees, rfe_keep)
    train_ds = generate_dataset(base, n_per_class, seed=seed, pair="train", day=0)
    fitted = fit_pipeline(list(train_ds), "app", cfg)
    rows = []
    reports: dict = {}
    for day in range(n_days):
        scale = 1.0 + drift_per_day * day
        profiles_d = [with_gap_scale(p, scale, scale) for p in base]
        test_ds = generate_dataset(profiles_d, n_per_class, seed=seed, pair="test", day=day)
        pred = pipeline_predict(fitted, list(test_ds))
        rep = score(test_ds.label_values("app"), pred, labels=train_ds.classes("app"))
        rows.append((day, rep.macro_precision, rep.macro_recall, rep.macro_f1))
        reports[day] = rep
        logger.info("aging day %d: macro F1 %.3f", day, rep.macro_f1)
    report.write_series_csv(out / "aging_scores.csv", "day,macro_precision,macro_recall,macro_f1",
                            rows, seed, config)
    report.fig_lines(out / "aging_scores.png", [r[0] for r in rows],
                     {"macro F1": [r[3] for r in rows], "macro recall": [r[2] for r in rows]},
                     "days since training", "score", "Attack quality as captures age")
    return reports


def run_loss_sweep(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    rates: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
    reps: int = 1,
    n_per_class: int = 40,
    trees: int = 30,
    rfe_keep: int = 50,
) -> dict:
    """App identification under increasing packet loss.

    Loss hits the whole dataset before the split, so the adversary
    trains and tests on equally lossy captures.
    """
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "experiment": "loss-sweep", "pack": pack.name, "rates": list(rates), "reps": reps,
        "n_per_class": n_per_class, "trees": trees, "rfe_keep": rfe_keep,
    }
    base = generate_dataset(pack.group("app_high"), n_per_class, seed=seed)
    cfg = _deep_config(seed, trees, rfe_keep)
    rows = []
    results: dict = {}
    for rate in rates:
        for rep_i in range(reps):
            lossy = apply_packet_loss_dataset(base, rate, seed=derive_int(seed, "loss", f"{rate:.4f}", rep_i))
            rep = _split_fit_score(lossy, "app", cfg, seed)
            rows.append((rate, rep_i, rep.macro_recall, rep.macro_f1))
            results[(rate, rep_i)] = rep
            logger.info("loss %.2f rep %d: macro recall %.3f", rate, rep_i, rep.macro_recall)
    report.write_series_csv(out / "loss_sweep.csv", "loss_rate,rep,macro_recall,macro_f1", rows, seed, config)
    xs = sorted(set(r[0] for r in rows))
    mean_recall = [float(np.mean([r[2] for r in rows if r[0] == x])) for x in xs]
    mean_f1 = [float(np.mean([r[3] for r in rows if r[0] == x])) for x in xs]
    report.fig_lines(out / "loss_sweep.png", xs, {"macro recall": mean_recall, "macro F1": mean_f1},
                     "packet loss probability", "score", "Attack quality under packet loss")
    return results


def run_defense(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    n_per_class: int = 40,
    trees: int = 30,
    rfe_keep: int = 50,
    mean_gap_s: float = 6.0,
    n_dummies: int = 300,
) -> dict:
    """Cost/benefit table of the shaping defenses against a retrained adversary."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "experiment": "defense", "pack": pack.name, "n_per_class": n_per_class,
        "trees": trees, "rfe_keep": rfe_keep, "mean_gap_s": mean_gap_s, "n_dummies": n_dummies,
    }
    base = generate_dataset(pack.group("app_high"), n_per_class, seed=seed)
    cfg = _deep_config(seed, trees, rfe_keep)

    baseline = _split_fit_score(base, "app", cfg, seed)
    _eval_bundle(out, "defense_none", baseline, seed, config, "Undefended app identification")
    summaries = [defenses.CostSummary("none", 100.0 * baseline.macro_recall, 0.0, 0.0, 0.0, 0.0, 0.0)]
    results: dict = {"none": (baseline, None)}
    for name in defenses.DEFENSE_NAMES:
        defended, costs = defenses.defend_dataset(
            base, name, seed=seed, mean_gap_s=mean_gap_s, n_dummies=n_dummies
        )
        rep = _split_fit_score(defended, "app", cfg, seed)
        summary = defenses.defense_cost_summary(name, costs, accuracy_pct=100.0 * rep.macro_recall)
        summaries.append(summary)
        results[name] = (rep, summary)
        _eval_bundle(out, f"defense_{name}", rep, seed, config, f"App identification under {name}")
        logger.info("defense %s: macro accuracy %.1f%%", name, summary.accuracy_pct)
    report.write_costs_csv(out / "defense_costs.csv", summaries, seed, config)
    report.fig_bars(out / "defense_costs.png", [s.defense for s in summaries],
                    [s.accuracy_pct for s in summaries], "retrained accuracy [%]",
                    "Attack accuracy against each defense")
    return results


def build_stream_training_set(
    pack: ProfilePack, plan: synth.DayPlan, n_per_class: int, seed: int, window_s: float = 30.0
) -> list[TraceSample]:
    """Window-sized training samples: each action overlaid on background,
    plus background-only samples for the NoAction class."""
    background = pack.profiles[plan.background]
    samples: list[TraceSample] = []
    for spec in plan.catalog:
        profile = pack.profiles[spec.profile]
        for i in range(n_per_class):
            rng = derive_rng(seed, "stream-train", spec.action, i)
            offset = float(rng.uniform(0.0, max(0.0, window_s - spec.duration_s)))
            action = synth.shift_sample(
                synth.generate_sample(profile, duration_s=spec.duration_s, rng=rng), offset
            )
            bg = synth.generate_sample(background, duration_s=window_s, rng=rng)
            samples.append(synth.overlay(action, bg))
    for i in range(n_per_class):
        rng = derive_rng(seed, "stream-train", stream.NO_ACTION, i)
        samples.append(synth.generate_sample(background, duration_s=window_s, rng=rng))
    return samples


def run_stream(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    plan: synth.DayPlan | None = None,
    thresholds: Sequence[float] = DEEP_THRESHOLDS,
    n_per_class: int = 30,
    trees: int = 30,
    rfe_keep: int = 50,
) -> dict:
    """Detect and identify user actions on a continuous day-long capture."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = plan or pack.day_plan
    if plan is None:
        raise ValueError("no day plan available")
    config = {
        "experiment": "stream", "pack": pack.name, "thresholds": [f"{t:.2f}" for t in thresholds],
        "n_per_class": n_per_class, "trees": trees, "rfe_keep": rfe_keep,
        "total_seconds": plan.total_seconds,
    }
    train = build_stream_training_set(pack, plan, n_per_class, seed)
    cfg = _deep_config(seed, trees, rfe_keep)
    fitted = fit_pipeline(train, "action", cfg)
    forest.save(fitted.model, out / "stream_model.json")

    day, truth = generate_day(pack, plan, seed=seed)
    ingest.write_intervals_csv(out / "stream_truth.csv", truth)
    sweep = stream.threshold_sweep(day, truth, fitted, thresholds)
    report.write_sweep_csv(out / "stream_sweep.csv", sweep, seed, config)
    report.fig_lines(out / "stream_sweep.png", [t for t, _ in sweep],
                     {"precision": [s.precision for _, s in sweep],
                      "recall": [s.recall for _, s in sweep],
                      "f1": [s.f1 for _, s in sweep]},
                     "decision threshold", "score", "Stream detection quality vs threshold")
    best_t, best = max(sweep, key=lambda p: p[1].f1)
    preds = stream.classify_stream(day, fitted, best_t)
    report.write_predictions_csv(out / "stream_predictions.csv", preds, seed, config)
    logger.info("stream: best F1 %.3f at threshold %.2f (tp=%d fp=%d fn=%d)",
                best.f1, best_t, best.tp, best.fp, best.fn)
    return {"sweep": sweep, "best_threshold": best_t, "best": best, "n_truth": len(truth)}


def run_simulate(
    out_dir: str | Path,
    seed: int = 0,
    pack: ProfilePack | None = None,
    group: str = "device_classic",
    n_per_class: int = 25,
    duration_s: float = 30.0,
    day: bool = False,
    plan: synth.DayPlan | None = None,
) -> dict:
    """Generate traces to disk: per-class samples or a full day capture."""
    pack = pack or default_pack()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if day:
        trace, truth = generate_day(pack, plan, seed=seed)
        ingest.write_trace_csv(out / "day_trace.csv", trace.packets)
        ingest.write_intervals_csv(out / "day_truth.csv", truth)
        entry = ingest.ManifestEntry(
            file="day_trace.csv",
            device=trace.labels["device"],
            app="",
            action="",
            flavor=trace.flavor,
            pair=trace.labels["pair"],
            day=0,
        )
        ingest.write_manifest(out / "manifest.csv", [entry])
        return {"trace": out / "day_trace.csv", "truth": out / "day_truth.csv", "n_actions": len(truth)}
    ds = generate_dataset(pack.group(group), n_per_class, duration_s=duration_s, seed=seed)
    manifest = ingest.save_dataset(ds, out)
    return {"manifest": manifest, "n_samples": len(ds)}
