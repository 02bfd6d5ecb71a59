"""Metadata feature schemas for traffic fingerprinting.

Two fixed schemas are provided:

``device32``
    15 size statistics over the (M2S, S2M, data) splits, 10 coarse
    size-bucket counts, 5 inter-arrival statistics, and 2 average
    inter-packet times; 32 features.

``action997``
    15 size statistics over the three splits, 15 more over the same
    splits restricted to packets of at least 46 bytes, 960 exact
    size-frequency counts for sizes 46..1005 (sizes outside that range
    are ignored by the counts), 5 inter-arrival statistics, and 2
    average inter-packet times; 997 features.

Statistics use the population standard deviation, and every statistic
of an empty sequence is 0.  Feature order and names are stable: the
same schema always yields the same columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Direction, TraceSample

SIZE_FILTER_MIN = 46  # inclusive lower bound of the fine-grained size range
SIZE_FILTER_MAX = 1005  # inclusive upper bound
N_FINE_BUCKETS = SIZE_FILTER_MAX - SIZE_FILTER_MIN + 1

DEVICE32 = "device32"
ACTION997 = "action997"

_STAT_NAMES = ("min", "mean", "max", "count", "std")


@dataclass(frozen=True)
class FeatureVector:
    """One extracted feature vector plus its schema and column names."""

    values: np.ndarray
    schema: str
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.names):
            raise ValueError(f"{len(self.values)} values but {len(self.names)} names")


def _stats(values: np.ndarray) -> list[float]:
    """min, mean, max, count, std of a value array; zeros when empty."""
    n = len(values)
    if n == 0:
        return [0.0, 0.0, 0.0, 0.0, 0.0]
    v = values.astype(np.float64)
    return [float(v.min()), float(v.mean()), float(v.max()), float(n), float(v.std())]


def _avg_ipt(ts: np.ndarray) -> float:
    """Average inter-packet time: (last - first) / (n - 1); 0 if n <= 1."""
    n = len(ts)
    if n <= 1:
        return 0.0
    return float((ts[-1] - ts[0]) / (n - 1))


def _interarrival_stats(ts: np.ndarray) -> list[float]:
    if len(ts) < 2:
        return [0.0, 0.0, 0.0, 0.0, 0.0]
    return _stats(np.diff(ts))


def _coarse_buckets(sizes: np.ndarray) -> np.ndarray:
    """Counts of packet sizes in [0,9], [10,19], .., [80,89], [90,inf)."""
    if len(sizes) == 0:
        return np.zeros(10)
    bins = np.minimum(sizes // 10, 9)
    return np.bincount(bins.astype(np.int64), minlength=10).astype(np.float64)


def _fine_buckets(sizes: np.ndarray) -> np.ndarray:
    """Exact-size counts for sizes 46..1005; other sizes are ignored."""
    counts = np.zeros(N_FINE_BUCKETS)
    if len(sizes) == 0:
        return counts
    in_range = sizes[(sizes >= SIZE_FILTER_MIN) & (sizes <= SIZE_FILTER_MAX)]
    if len(in_range):
        counts += np.bincount((in_range - SIZE_FILTER_MIN).astype(np.int64), minlength=N_FINE_BUCKETS)
    return counts


def _sample_arrays(sample: TraceSample) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n = len(sample.packets)
    ts = np.empty(n)
    sizes = np.empty(n, dtype=np.int64)
    m2s = np.empty(n, dtype=bool)
    meta = np.empty(n, dtype=bool)
    for i, p in enumerate(sample.packets):
        ts[i] = p.timestamp_s
        sizes[i] = p.size_bytes
        m2s[i] = p.direction is Direction.M2S
        meta[i] = p.is_meta
    return ts, sizes, m2s, meta


def _split_stat_names(prefixes: Sequence[str]) -> list[str]:
    return [f"{p}_size_{s}" for p in prefixes for s in _STAT_NAMES]


def feature_names(schema: str) -> tuple[str, ...]:
    """Stable column names for a schema, in extraction order."""
    if schema == DEVICE32:
        names = _split_stat_names(("m2s", "s2m", "data"))
        names += [f"size_bucket_{10 * i:02d}_{10 * i + 9:02d}" for i in range(9)]
        names += ["size_bucket_90_plus"]
        names += [f"ipt_{s}" for s in _STAT_NAMES]
        names += ["avg_ipt_m2s", "avg_ipt_s2m"]
        return tuple(names)
    if schema == ACTION997:
        names = _split_stat_names(("m2s", "s2m", "data"))
        names += _split_stat_names(("m2s_ge46", "s2m_ge46", "data_ge46"))
        names += [f"size_count_{s:04d}" for s in range(SIZE_FILTER_MIN, SIZE_FILTER_MAX + 1)]
        names += [f"ipt_{s}" for s in _STAT_NAMES]
        names += ["avg_ipt_m2s", "avg_ipt_s2m"]
        return tuple(names)
    raise ValueError(f"unknown feature schema {schema!r}")


_NAMES_CACHE = {DEVICE32: feature_names(DEVICE32), ACTION997: feature_names(ACTION997)}


def extract_device32(sample: TraceSample) -> FeatureVector:
    """32-feature vector geared to whole-device fingerprinting."""
    ts, sizes, m2s, meta = _sample_arrays(sample)
    parts: list[float] = []
    parts += _stats(sizes[m2s])
    parts += _stats(sizes[~m2s])
    parts += _stats(sizes[~meta])
    parts.extend(_coarse_buckets(sizes))
    parts += _interarrival_stats(ts)
    parts.append(_avg_ipt(ts[m2s]))
    parts.append(_avg_ipt(ts[~m2s]))
    return FeatureVector(np.asarray(parts), DEVICE32, _NAMES_CACHE[DEVICE32])


def extract_action997(sample: TraceSample) -> FeatureVector:
    """997-feature vector geared to action and app fingerprinting."""
    ts, sizes, m2s, meta = _sample_arrays(sample)
    big = sizes >= SIZE_FILTER_MIN
    parts: list[float] = []
    parts += _stats(sizes[m2s])
    parts += _stats(sizes[~m2s])
    parts += _stats(sizes[~meta])
    parts += _stats(sizes[m2s & big])
    parts += _stats(sizes[~m2s & big])
    parts += _stats(sizes[~meta & big])
    parts.extend(_fine_buckets(sizes))
    parts += _interarrival_stats(ts)
    parts.append(_avg_ipt(ts[m2s]))
    parts.append(_avg_ipt(ts[~m2s]))
    return FeatureVector(np.asarray(parts), ACTION997, _NAMES_CACHE[ACTION997])


_EXTRACTORS = {DEVICE32: extract_device32, ACTION997: extract_action997}


def extract(sample: TraceSample, schema: str) -> FeatureVector:
    try:
        fn = _EXTRACTORS[schema]
    except KeyError:
        raise ValueError(f"unknown feature schema {schema!r}") from None
    return fn(sample)


def extract_matrix(samples: Sequence[TraceSample], schema: str) -> tuple[np.ndarray, tuple[str, ...]]:
    """Feature matrix (one row per sample) plus the column names."""
    names = feature_names(schema)
    X = np.zeros((len(samples), len(names)))
    for i, s in enumerate(samples):
        X[i] = extract(s, schema).values
    return X, names


def write_matrix_csv(
    path: str | Path,
    sample_ids: Sequence[str],
    X: np.ndarray,
    names: Sequence[str],
    labels: dict[str, Sequence[str]] | None = None,
) -> None:
    """Export a feature matrix: sample id, feature columns, label columns."""
    labels = labels or {}
    n = len(sample_ids)
    if X.shape[0] != n:
        raise ValueError(f"{n} sample ids but {X.shape[0]} feature rows")
    if X.shape[1] != len(names):
        raise ValueError(f"{X.shape[1]} feature columns but {len(names)} names")
    for key, col in labels.items():
        if len(col) != n:
            raise ValueError(f"label column {key!r} has {len(col)} values for {n} rows")
    header = ["sample_id", *names, *labels.keys()]
    lines = [",".join(header)]
    for i in range(n):
        row = [str(sample_ids[i])]
        row += [np.format_float_positional(x, trim="0") for x in X[i]]
        row += [str(labels[key][i]) for key in labels]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
