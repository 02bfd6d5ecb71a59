"""Core record types shared by every stage of the pipeline.

A capture is a sequence of packet events described only by metadata:
timestamp, direction, payload size, and whether the packet is a
zero-length meta frame (ACK/poll style).  Payload content never enters
the model; everything downstream works on these four fields.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

MICROSECOND = 1e-6


class Direction(Enum):
    """Packet direction: master-to-slave or slave-to-master."""

    M2S = "M2S"
    S2M = "S2M"

    def opposite(self) -> "Direction":
        return Direction.S2M if self is Direction.M2S else Direction.M2S


class Flavor(Enum):
    """Transport flavor of a capture."""

    CLASSIC = "Classic"
    LOW_ENERGY = "LowEnergy"


# Largest single-packet payload per flavor (bytes); also the pad-defense ceiling.
MAX_PAYLOAD = {Flavor.CLASSIC: 1021, Flavor.LOW_ENERGY: 255}


@dataclass(frozen=True)
class PacketRecord:
    """One observed packet: time (s), direction, payload size (B), meta flag."""

    timestamp_s: float
    direction: Direction
    size_bytes: int
    is_meta: bool = False


@dataclass
class TraceSample:
    """A contiguous slice of captured packets plus its labels.

    ``labels`` maps label keys (device, app, action, flavor, pair, day)
    to string values.  The ``flavor`` label is mandatory for a valid
    sample; see :func:`validate_sample`.
    """

    packets: list[PacketRecord]
    labels: dict[str, str] = field(default_factory=dict)

    @property
    def flavor(self) -> Flavor:
        return Flavor(self.labels["flavor"])

    def label(self, key: str) -> str:
        return self.labels[key]

    def duration_s(self) -> float:
        if not self.packets:
            return 0.0
        return self.packets[-1].timestamp_s - self.packets[0].timestamp_s

    def payload_bytes(self) -> int:
        return sum(p.size_bytes for p in self.packets)

    def __len__(self) -> int:
        return len(self.packets)


class Dataset:
    """A list of samples with mutually consistent label keys."""

    def __init__(self, samples: Iterable[TraceSample]):
        self.samples: list[TraceSample] = list(samples)
        if self.samples:
            keys = set(self.samples[0].labels)
            for i, s in enumerate(self.samples):
                if set(s.labels) != keys:
                    raise ValueError(
                        f"sample {i}: label keys {sorted(s.labels)} differ "
                        f"from sample 0 keys {sorted(keys)}"
                    )

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[TraceSample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> TraceSample:
        return self.samples[i]

    def label_values(self, key: str) -> list[str]:
        return [s.labels[key] for s in self.samples]

    def classes(self, key: str) -> list[str]:
        return sorted(set(self.label_values(key)))

    def by_label(self, key: str) -> dict[str, list[int]]:
        """Indices of samples grouped by the value of ``key`` (dataset order)."""
        groups: dict[str, list[int]] = {}
        for i, s in enumerate(self.samples):
            groups.setdefault(s.labels[key], []).append(i)
        return groups

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.samples[i] for i in indices)


class Interval(NamedTuple):
    """A labeled time interval [start_s, end_s); used for ground truth."""

    start_s: float
    end_s: float
    label: str


@dataclass(frozen=True)
class FilteredSequences:
    """Direction/content splits of one sample.

    ``m2s`` and ``s2m`` partition the packets by direction; ``data``
    holds the non-meta packets of both directions.  All three preserve
    capture order.
    """

    m2s: tuple[PacketRecord, ...]
    s2m: tuple[PacketRecord, ...]
    data: tuple[PacketRecord, ...]


def filter_sequences(sample: TraceSample) -> FilteredSequences:
    m2s = tuple(p for p in sample.packets if p.direction is Direction.M2S)
    s2m = tuple(p for p in sample.packets if p.direction is Direction.S2M)
    data = tuple(p for p in sample.packets if not p.is_meta)
    return FilteredSequences(m2s=m2s, s2m=s2m, data=data)


def validate_sample(sample: TraceSample) -> list[str]:
    """Check sample invariants; return one message per violation.

    An empty list means the sample is valid.  Each message names the
    violated rule and the offending packet index where applicable.
    """
    violations: list[str] = []
    flavor = sample.labels.get("flavor")
    if flavor is None:
        violations.append("labels: missing 'flavor' key")
    elif flavor not in (f.value for f in Flavor):
        violations.append(f"labels: unknown flavor {flavor!r}")

    prev_ts = None
    for i, p in enumerate(sample.packets):
        if not math.isfinite(p.timestamp_s) or p.timestamp_s < 0:
            violations.append(f"packet {i}: timestamp: {p.timestamp_s!r} is not a finite non-negative time")
        if prev_ts is not None and p.timestamp_s < prev_ts:
            violations.append(
                f"packet {i}: ordering: timestamp {p.timestamp_s!r} decreases below {prev_ts!r}"
            )
        prev_ts = p.timestamp_s
        if not isinstance(p.size_bytes, (int, np.integer)) or isinstance(p.size_bytes, bool):
            violations.append(f"packet {i}: size: {p.size_bytes!r} is not an integer")
        elif p.size_bytes < 0:
            violations.append(f"packet {i}: size: {p.size_bytes} is negative")
        elif p.is_meta and p.size_bytes != 0:
            violations.append(f"packet {i}: meta-size: meta packet has size {p.size_bytes}, expected 0")
    return violations


def byte_entropy(histogram: Sequence[int]) -> float:
    """Shannon entropy (bits per byte) of a 256-bin byte-value histogram.

    Raises ValueError on a malformed histogram or an all-zero one
    (no payload to measure).
    """
    if len(histogram) != 256:
        raise ValueError(f"histogram must have 256 bins, got {len(histogram)}")
    counts = np.asarray(histogram, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("histogram has negative counts")
    total = counts.sum()
    if total == 0:
        raise ValueError("histogram is all-zero: no bytes to measure")
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _path_entropy(token: str | int) -> int:
    """Map one derivation-path token to a 64-bit entropy word."""
    if isinstance(token, (int, np.integer)) and not isinstance(token, bool):
        return int(token) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(token).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_seed_sequence(root_seed: int, *path: str | int) -> np.random.SeedSequence:
    """Deterministic SeedSequence for (root seed, context path).

    String tokens are hashed with SHA-256 so derivation never depends on
    interpreter hash randomization.
    """
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF] + [_path_entropy(t) for t in path]
    return np.random.SeedSequence(entropy)


def derive_rng(root_seed: int, *path: str | int) -> np.random.Generator:
    """PCG64 generator derived from a root seed and a context path.

    All randomness in the package flows through this helper, which makes
    every pipeline stage reproducible from a single root seed.
    """
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(root_seed, *path)))


def derive_int(root_seed: int, *path: str | int) -> int:
    """Deterministic 63-bit sub-seed for APIs that take a plain integer."""
    return int(derive_rng(root_seed, *path).integers(0, 2**63 - 1))


RNG_IDENTITY = "pcg64-seedseq-sha256/v1"


def quantize_ts(t: float) -> float:
    """Round a timestamp to the documented microsecond resolution."""
    return round(t, 6)
