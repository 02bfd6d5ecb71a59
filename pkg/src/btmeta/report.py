"""Report files: delimited outputs with provenance headers, plus figures.

Every report CSV starts with two comment lines identifying the tool
version, the seed, and a digest of the experiment configuration, so a
result can always be traced back to the run that produced it.  Data
files (traces, manifests) deliberately carry no such header; their
formats are fixed by the ingest module.

Each tabular report is rendered to a PNG figure next to the CSV.
Figures use the Agg backend and carry no timestamps, keeping re-runs
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .defenses import CostSummary
from .evaluate import EvalReport
from .stream import IntervalScore, Prediction

MACRO_ROW = "__macro__"
MACRO_STD_ROW = "__macro_std__"
ACCURACY_ROW = "__accuracy__"


def config_digest(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def provenance_lines(seed: int, config: Mapping) -> list[str]:
    return [
        f"# btmeta {__version__}",
        f"# seed={seed} config_digest={config_digest(config)}",
    ]


def _write_csv(path: str | Path, seed: int, config: Mapping, header: str, rows: Sequence[str]) -> Path:
    path = Path(path)
    lines = provenance_lines(seed, config) + [header] + list(rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_report_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Read back a report CSV, skipping provenance comments."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no rows")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def write_eval_csv(path: str | Path, report: EvalReport, seed: int, config: Mapping) -> Path:
    """Per-class metrics plus macro and accuracy summary rows.

    The ``__accuracy__`` row repeats the scalar micro accuracy in each
    metric column; ``__macro_std__`` is only nonzero for cross-validated
    reports.
    """
    rows = []
    for i, cls in enumerate(report.classes):
        rows.append(
            f"{cls},{report.precision[i]:.6f},{report.recall[i]:.6f},{report.f1[i]:.6f},{int(report.support[i])}"
        )
    total = int(report.support.sum())
    rows.append(f"{MACRO_ROW},{report.macro_precision:.6f},{report.macro_recall:.6f},{report.macro_f1:.6f},{total}")
    rows.append(
        f"{MACRO_STD_ROW},{report.macro_precision_std:.6f},{report.macro_recall_std:.6f},{report.macro_f1_std:.6f},{report.n_folds}"
    )
    rows.append(f"{ACCURACY_ROW},{report.accuracy:.6f},{report.accuracy:.6f},{report.accuracy:.6f},{total}")
    return _write_csv(path, seed, config, "label,precision,recall,f1,support", rows)


def write_confusion_csv(path: str | Path, report: EvalReport, seed: int, config: Mapping) -> Path:
    header = "true_label," + ",".join(report.classes)
    rows = [
        cls + "," + ",".join(f"{v:.6f}" for v in report.confusion[i]) for i, cls in enumerate(report.classes)
    ]
    return _write_csv(path, seed, config, header, rows)


def write_importance_csv(
    path: str | Path, names: Sequence[str], values: np.ndarray, seed: int, config: Mapping
) -> Path:
    rows = [f"{n},{v:.8f}" for n, v in zip(names, values)]
    return _write_csv(path, seed, config, "feature,importance", rows)


def write_costs_csv(path: str | Path, rows: Sequence[CostSummary], seed: int, config: Mapping) -> Path:
    header = "defense,accuracy_pct,delay_per_packet_s,extra_duration_s,padding_kb,dummy_kb,overhead_pct"
    body = [
        f"{r.defense},{r.accuracy_pct:.2f},{r.delay_per_packet_s:.6f},{r.extra_duration_s:.6f},"
        f"{r.padding_kb:.3f},{r.dummy_kb:.3f},{r.overhead_pct:.2f}"
        for r in rows
    ]
    return _write_csv(path, seed, config, header, body)


def write_sweep_csv(
    path: str | Path, points: Sequence[tuple[float, IntervalScore]], seed: int, config: Mapping
) -> Path:
    rows = [f"{t:.2f},{s.precision:.6f},{s.recall:.6f},{s.f1:.6f}" for t, s in points]
    return _write_csv(path, seed, config, "threshold,precision,recall,f1", rows)


def write_predictions_csv(path: str | Path, predictions: Sequence[Prediction], seed: int, config: Mapping) -> Path:
    rows = [f"{p.start_s:.6f},{p.end_s:.6f},{p.label},{p.confidence:.6f}" for p in predictions]
    return _write_csv(path, seed, config, "start_s,end_s,label,confidence", rows)


def write_series_csv(
    path: str | Path, header: str, rows: Sequence[Sequence], seed: int, config: Mapping
) -> Path:
    def fmt(v) -> str:
        if isinstance(v, float):
            return f"{v:.6f}"
        return str(v)

    return _write_csv(path, seed, config, header, [",".join(fmt(v) for v in r) for r in rows])


# ---------------------------------------------------------------------------
# Figures


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="png", dpi=110)
    plt.close(fig)
    return path


def fig_confusion(path: str | Path, report: EvalReport, title: str) -> Path:
    n = len(report.classes)
    size = max(4.0, min(12.0, 0.32 * n + 2.0))
    fig, ax = plt.subplots(figsize=(size + 1.2, size))
    im = ax.imshow(report.confusion, cmap="viridis", vmin=0.0, vmax=1.0)
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_title(title)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if n <= 45:
        ax.set_xticks(range(n))
        ax.set_yticks(range(n))
        ax.set_xticklabels(report.classes, rotation=90, fontsize=6)
        ax.set_yticklabels(report.classes, fontsize=6)
    fig.tight_layout()
    return _save(fig, path)


def fig_importance(path: str | Path, names: Sequence[str], values: np.ndarray, title: str, top: int = 20) -> Path:
    order = np.argsort(values)[::-1][:top]
    fig, ax = plt.subplots(figsize=(7, 0.32 * len(order) + 1.5))
    ax.barh(range(len(order)), values[order][::-1], color="#31688e")
    ax.set_yticks(range(len(order)))
    ax.set_yticklabels([names[i] for i in order][::-1], fontsize=7)
    ax.set_xlabel("importance")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def fig_lines(
    path: str | Path,
    x: Sequence[float],
    series: Mapping[str, Sequence[float]],
    xlabel: str,
    ylabel: str,
    title: str,
) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, ys in series.items():
        ax.plot(x, ys, marker="o", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def fig_bars(path: str | Path, labels: Sequence[str], values: Sequence[float], ylabel: str, title: str) -> Path:
    fig, ax = plt.subplots(figsize=(max(5.0, 1.1 * len(labels)), 4.2))
    ax.bar(range(len(labels)), values, color="#35b779")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
