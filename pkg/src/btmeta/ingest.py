"""Trace and manifest file formats, dataset loading, and balancing.

Trace files are CSV with a fixed header::

    timestamp_s,direction,size_bytes,is_meta
    0.000000,M2S,120,0

Timestamps are printed with exactly six decimals (microsecond
resolution); direction is ``M2S`` or ``S2M``; ``is_meta`` is ``0`` or
``1``.  A manifest CSV ties trace files to labels::

    file,device,app,action,flavor,pair,day
    traces/watchA_0.csv,watchA,,,Classic,P1,0

``flavor`` must be ``Classic`` or ``LowEnergy`` and ``day`` a
non-negative integer.  Fields may be empty but must not contain commas
or newlines.  Parsers reject malformed input with messages that name
the offending line.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import Dataset, Direction, Flavor, Interval, PacketRecord, TraceSample, derive_rng

logger = logging.getLogger(__name__)

TRACE_HEADER = "timestamp_s,direction,size_bytes,is_meta"
MANIFEST_HEADER = "file,device,app,action,flavor,pair,day"

_SIZE_RE = re.compile(r"^\d+$")
_DAY_RE = re.compile(r"^\d+$")


class TraceParseError(ValueError):
    """Raised when a trace CSV violates the format."""


class ManifestError(ValueError):
    """Raised when a manifest CSV violates the format."""


def format_trace_row(p: PacketRecord) -> str:
    return f"{p.timestamp_s:.6f},{p.direction.value},{p.size_bytes},{1 if p.is_meta else 0}"


def write_trace_csv(path: str | Path, packets: Sequence[PacketRecord]) -> None:
    lines = [TRACE_HEADER]
    lines.extend(format_trace_row(p) for p in packets)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_trace_csv(path: str | Path) -> list[PacketRecord]:
    """Parse one trace CSV into packet records.

    Rejects, with the line number: a bad header, wrong field counts,
    non-numeric fields, negative sizes or timestamps, decreasing
    timestamps, and meta packets with a nonzero size.  The result always
    satisfies the packet-level rules of ``validate_sample``.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != TRACE_HEADER:
        got = lines[0] if lines else "<empty file>"
        raise TraceParseError(f"{path}: line 1: expected header {TRACE_HEADER!r}, got {got!r}")
    packets: list[PacketRecord] = []
    prev_ts: float | None = None
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 4:
            raise TraceParseError(f"{path}: line {lineno}: expected 4 fields, got {len(fields)}")
        ts_s, dir_s, size_s, meta_s = fields
        try:
            ts = float(ts_s)
        except ValueError:
            raise TraceParseError(f"{path}: line {lineno}: non-numeric timestamp {ts_s!r}") from None
        if not ts == ts or ts in (float("inf"), float("-inf")):
            raise TraceParseError(f"{path}: line {lineno}: non-finite timestamp {ts_s!r}")
        if ts < 0:
            raise TraceParseError(f"{path}: line {lineno}: negative timestamp {ts_s!r}")
        if prev_ts is not None and ts < prev_ts:
            raise TraceParseError(
                f"{path}: line {lineno}: timestamp {ts_s} decreases below previous {prev_ts:.6f}"
            )
        prev_ts = ts
        try:
            direction = Direction(dir_s)
        except ValueError:
            raise TraceParseError(f"{path}: line {lineno}: unknown direction {dir_s!r}") from None
        if not _SIZE_RE.match(size_s):
            raise TraceParseError(f"{path}: line {lineno}: size {size_s!r} is not a non-negative integer")
        size = int(size_s)
        if meta_s not in ("0", "1"):
            raise TraceParseError(f"{path}: line {lineno}: is_meta {meta_s!r} is not 0 or 1")
        is_meta = meta_s == "1"
        if is_meta and size != 0:
            raise TraceParseError(f"{path}: line {lineno}: meta packet has nonzero size {size}")
        packets.append(PacketRecord(ts, direction, size, is_meta))
    return packets


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row: a trace file path plus its labels."""

    file: str
    device: str
    app: str
    action: str
    flavor: Flavor
    pair: str
    day: int

    def labels(self) -> dict[str, str]:
        return {
            "device": self.device,
            "app": self.app,
            "action": self.action,
            "flavor": self.flavor.value,
            "pair": self.pair,
            "day": str(self.day),
        }


def _check_field(value: str, what: str, context: str) -> str:
    if "," in value or "\n" in value or "\r" in value:
        raise ManifestError(f"{context}: {what} {value!r} contains a comma or newline")
    return value


def write_manifest(path: str | Path, entries: Iterable[ManifestEntry]) -> None:
    lines = [MANIFEST_HEADER]
    for i, e in enumerate(entries):
        ctx = f"manifest entry {i}"
        fields = [
            _check_field(e.file, "file", ctx),
            _check_field(e.device, "device", ctx),
            _check_field(e.app, "app", ctx),
            _check_field(e.action, "action", ctx),
            e.flavor.value,
            _check_field(e.pair, "pair", ctx),
            str(e.day),
        ]
        lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_manifest(path: str | Path) -> list[ManifestEntry]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != MANIFEST_HEADER:
        got = lines[0] if lines else "<empty file>"
        raise ManifestError(f"{path}: line 1: expected header {MANIFEST_HEADER!r}, got {got!r}")
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 7:
            raise ManifestError(f"{path}: line {lineno}: expected 7 fields, got {len(fields)}")
        file, device, app, action, flavor_s, pair, day_s = fields
        if not file:
            raise ManifestError(f"{path}: line {lineno}: empty file path")
        if file in seen:
            raise ManifestError(
                f"{path}: line {lineno}: duplicate file path {file!r} (first seen on line {seen[file]})"
            )
        seen[file] = lineno
        try:
            flavor = Flavor(flavor_s)
        except ValueError:
            raise ManifestError(f"{path}: line {lineno}: unknown flavor {flavor_s!r}") from None
        if not _DAY_RE.match(day_s):
            raise ManifestError(f"{path}: line {lineno}: day {day_s!r} is not a non-negative integer")
        entries.append(ManifestEntry(file, device, app, action, flavor, pair, int(day_s)))
    return entries


def load_dataset(manifest_path: str | Path, trace_root: str | Path | None = None) -> Dataset:
    """Load every trace referenced by a manifest into one dataset.

    Relative trace paths resolve against ``trace_root`` (default: the
    manifest's directory).  Errors name both the manifest row and the
    file that caused them.
    """
    manifest_path = Path(manifest_path)
    root = Path(trace_root) if trace_root is not None else manifest_path.parent
    entries = parse_manifest(manifest_path)
    samples: list[TraceSample] = []
    for i, entry in enumerate(entries):
        trace_path = Path(entry.file)
        if not trace_path.is_absolute():
            trace_path = root / trace_path
        if not trace_path.exists():
            raise ManifestError(f"manifest row {i + 1} ({entry.file}): trace file not found: {trace_path}")
        try:
            packets = parse_trace_csv(trace_path)
        except TraceParseError as exc:
            raise ManifestError(f"manifest row {i + 1} ({entry.file}): {exc}") from exc
        samples.append(TraceSample(packets=packets, labels=entry.labels()))
    return Dataset(samples)


def _slug(value: str) -> str:
    out = re.sub(r"[^A-Za-z0-9_-]+", "-", value)
    return out or "x"


def save_dataset(dataset: Dataset, out_dir: str | Path, trace_subdir: str = "traces") -> Path:
    """Write one trace CSV per sample plus a manifest; return the manifest path.

    Only the six manifest label keys are persisted; any extra label keys
    on the samples are dropped.
    """
    out = Path(out_dir)
    (out / trace_subdir).mkdir(parents=True, exist_ok=True)
    entries: list[ManifestEntry] = []
    for i, s in enumerate(dataset):
        labels = s.labels
        name = f"{_slug(labels.get('device', ''))}_{_slug(labels.get('app', ''))}_{i:05d}.csv"
        rel = f"{trace_subdir}/{name}"
        write_trace_csv(out / rel, s.packets)
        entries.append(
            ManifestEntry(
                file=rel,
                device=labels.get("device", ""),
                app=labels.get("app", ""),
                action=labels.get("action", ""),
                flavor=Flavor(labels["flavor"]),
                pair=labels.get("pair", ""),
                day=int(labels.get("day", "0")),
            )
        )
    manifest_path = out / "manifest.csv"
    write_manifest(manifest_path, entries)
    return manifest_path


INTERVALS_HEADER = "start_s,end_s,label"


def write_intervals_csv(path: str | Path, intervals: Sequence[Interval]) -> None:
    """Write labeled intervals (ground truth) as start_s,end_s,label."""
    lines = [INTERVALS_HEADER]
    for i, iv in enumerate(intervals):
        _check_field(iv.label, "label", f"interval {i}")
        lines.append(f"{iv.start_s:.6f},{iv.end_s:.6f},{iv.label}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_intervals_csv(path: str | Path) -> list[Interval]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != INTERVALS_HEADER:
        got = lines[0] if lines else "<empty file>"
        raise ManifestError(f"{path}: line 1: expected header {INTERVALS_HEADER!r}, got {got!r}")
    out: list[Interval] = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 3:
            raise ManifestError(f"{path}: line {lineno}: expected 3 fields, got {len(fields)}")
        try:
            start, end = float(fields[0]), float(fields[1])
        except ValueError:
            raise ManifestError(f"{path}: line {lineno}: non-numeric interval bounds") from None
        if end < start:
            raise ManifestError(f"{path}: line {lineno}: interval ends before it starts")
        out.append(Interval(start, end, fields[2]))
    return out


def split_by_flavor(dataset: Dataset) -> tuple[Dataset, Dataset]:
    """Partition a dataset into (Classic, LowEnergy) subsets."""
    classic = [s for s in dataset if s.flavor is Flavor.CLASSIC]
    le = [s for s in dataset if s.flavor is Flavor.LOW_ENERGY]
    return Dataset(classic), Dataset(le)


def balance_by_label(dataset: Dataset, key: str, seed: int, secondary: str = "action") -> Dataset:
    """Downsample every class of ``key`` to the smallest class count.

    Within a class, samples are drawn round-robin over the ``secondary``
    label's buckets so that secondary values stay as evenly represented
    as the available counts allow.  Selection is deterministic given the
    seed.  The result preserves dataset order.
    """
    groups = dataset.by_label(key)
    if not groups:
        raise ValueError("cannot balance an empty dataset")
    target = min(len(v) for v in groups.values())
    chosen: list[int] = []
    for cls in sorted(groups):
        indices = groups[cls]
        rng = derive_rng(seed, "balance", key, cls)
        buckets: dict[str, list[int]] = {}
        for idx in indices:
            sec = dataset[idx].labels.get(secondary, "")
            buckets.setdefault(sec, []).append(idx)
        ordered_buckets = []
        for sec in sorted(buckets):
            perm = rng.permutation(len(buckets[sec]))
            ordered_buckets.append([buckets[sec][j] for j in perm])
        picked: list[int] = []
        round_i = 0
        while len(picked) < target:
            progressed = False
            for bucket in ordered_buckets:
                if round_i < len(bucket):
                    picked.append(bucket[round_i])
                    progressed = True
                    if len(picked) == target:
                        break
            if not progressed:
                break
            round_i += 1
        chosen.extend(picked)
    chosen.sort()
    return dataset.subset(chosen)
