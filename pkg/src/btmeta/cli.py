"""Command-line interface.

Subcommands:

``simulate``
    Generate labeled trace files (or one continuous day capture with
    ground truth) from a profile pack.

``experiment NAME``
    Run one of the built-in experiments end to end and write its report
    CSVs and figures.  Knobs beyond the common flags are passed as a
    JSON object via ``--config``.

``extract``
    Turn a manifest of traces into a feature-matrix CSV.

``pack-init``
    Write the built-in profile pack as editable JSON.

Failures print one ``btmeta: error: ...`` line to stderr and exit
nonzero; successful runs exit 0.
"""

from __future__ import annotations

import argparse
import inspect
import json
import logging
import sys
from pathlib import Path

from . import __version__, experiments, features, ingest, synth
from .evaluate import EvalReport
from .packs import default_pack

_EXPERIMENT_FUNCS = {
    "device-id": experiments.run_device_id,
    "chipset-id": experiments.run_chipset_id,
    "action-wide": experiments.run_action_wide,
    "app-deep": experiments.run_app_deep,
    "diabetes": experiments.run_diabetes,
    "transfer": experiments.run_transfer,
    "aging": experiments.run_aging,
    "loss-sweep": experiments.run_loss_sweep,
    "defense": experiments.run_defense,
    "stream": experiments.run_stream,
}


def _load_pack(args) -> synth.ProfilePack:
    if getattr(args, "pack", None):
        return synth.load_pack(args.pack)
    return default_pack()


def _print_result(name: str, result: dict) -> None:
    def line(tag: str, rep: EvalReport) -> None:
        print(
            f"{name} {tag}: macro_precision={rep.macro_precision:.4f} "
            f"macro_recall={rep.macro_recall:.4f} macro_f1={rep.macro_f1:.4f}"
        )

    if name == "defense":
        for tag, (rep, summary) in result.items():
            acc = summary.accuracy_pct if summary else 100.0 * rep.macro_recall
            print(f"{name} {tag}: accuracy_pct={acc:.2f}")
    elif name == "stream":
        best = result["best"]
        print(
            f"{name}: best_threshold={result['best_threshold']:.2f} "
            f"precision={best.precision:.4f} recall={best.recall:.4f} f1={best.f1:.4f} "
            f"(tp={best.tp} fp={best.fp} fn={best.fn}, {result['n_truth']} truth intervals)"
        )
    elif name == "loss-sweep":
        for (rate, rep_i), rep in result.items():
            print(f"{name} rate={rate:.2f} rep={rep_i}: macro_recall={rep.macro_recall:.4f}")
    elif name == "aging":
        for day, rep in result.items():
            print(f"{name} day={day}: macro_f1={rep.macro_f1:.4f}")
    else:
        for tag, rep in result.items():
            line(str(tag), rep)


def cmd_experiment(args) -> int:
    func = _EXPERIMENT_FUNCS[args.name]
    kwargs = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(overrides, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        allowed = set(inspect.signature(func).parameters) - {"out_dir", "seed", "pack", "plan"}
        unknown = set(overrides) - allowed
        if unknown:
            raise ValueError(
                f"unknown config keys for {args.name}: {sorted(unknown)}; allowed: {sorted(allowed)}"
            )
        kwargs.update(overrides)
    result = func(args.out, seed=args.seed, pack=_load_pack(args), **kwargs)
    _print_result(args.name, result)
    print(f"reports written to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    plan = synth.load_plan(args.plan) if args.plan else None
    result = experiments.run_simulate(
        args.out,
        seed=args.seed,
        pack=_load_pack(args),
        group=args.group,
        n_per_class=args.n,
        duration_s=args.duration,
        day=args.day,
        plan=plan,
    )
    if args.day:
        print(f"wrote {result['trace']} with {result['n_actions']} actions ({result['truth']})")
    else:
        print(f"wrote {result['n_samples']} traces ({result['manifest']})")
    return 0


def cmd_extract(args) -> int:
    ds = ingest.load_dataset(args.manifest)
    entries = ingest.parse_manifest(args.manifest)
    X, names = features.extract_matrix(list(ds), args.schema)
    labels = {key: [s.labels[key] for s in ds] for key in ("device", "app", "action", "flavor", "pair", "day")}
    features.write_matrix_csv(args.out, [e.file for e in entries], X, names, labels)
    print(f"wrote {X.shape[0]} x {X.shape[1]} feature matrix to {args.out}")
    return 0


def cmd_pack_init(args) -> int:
    synth.save_pack(default_pack(), args.out)
    print(f"wrote default profile pack to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="btmeta", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"btmeta {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
        p.add_argument("--out", required=True, help="output directory or file")
        p.add_argument("--pack", help="profile pack JSON (default: built-in pack)")

    p_sim = sub.add_parser("simulate", help="generate synthetic traces")
    common(p_sim)
    p_sim.add_argument("--group", default="device_classic", help="pack profile group to sample")
    p_sim.add_argument("--n", type=int, default=25, help="samples per class (default 25)")
    p_sim.add_argument("--duration", type=float, default=30.0, help="sample length in seconds")
    p_sim.add_argument("--day", action="store_true", help="generate one continuous day capture")
    p_sim.add_argument("--plan", help="day plan JSON (default: the pack's plan)")
    p_sim.set_defaults(func=cmd_simulate)

    p_exp = sub.add_parser("experiment", help="run a named experiment")
    p_exp.add_argument("name", choices=sorted(_EXPERIMENT_FUNCS))
    common(p_exp)
    p_exp.add_argument("--config", help="JSON config file overriding experiment knobs")
    p_exp.set_defaults(func=cmd_experiment)

    p_ext = sub.add_parser("extract", help="export a feature matrix CSV")
    p_ext.add_argument("--manifest", required=True, help="manifest CSV of traces")
    p_ext.add_argument("--schema", choices=[features.DEVICE32, features.ACTION997], default=features.DEVICE32)
    p_ext.add_argument("--out", required=True, help="output CSV path")
    p_ext.set_defaults(func=cmd_extract)

    p_pack = sub.add_parser("pack-init", help="write the built-in pack as editable JSON")
    p_pack.add_argument("--out", required=True, help="output JSON path")
    p_pack.set_defaults(func=cmd_pack_init)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception as exc:  # argparse handles usage errors; this covers runtime ones
        print(f"btmeta: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
