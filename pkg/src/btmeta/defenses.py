"""Traffic-shaping defenses and their cost accounting.

Three defenses operate on single samples:

``pad``
    Grow every data packet to the flavor's maximum payload (1021 B for
    Classic, 255 B for LowEnergy).  Meta packets stay untouched.

``delay_group``
    Move every packet to the next whole second (timestamps are rounded
    up), grouping packets into one-second batches.

``add_dummies``
    Inject dummy data packets at Rayleigh-distributed offsets from the
    sample start, with sizes resampled from an empirical size
    distribution and directions drawn from its direction split.

Each defense returns the shaped sample plus a :class:`DefenseCost`;
costs aggregate into the standard table via
:func:`defense_cost_summary`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import MAX_PAYLOAD, Dataset, Direction, Flavor, PacketRecord, TraceSample, derive_rng, quantize_ts

PAD_CEILINGS = MAX_PAYLOAD

# Rayleigh scale for a given mean: mean = sigma * sqrt(pi / 2).
_RAYLEIGH_MEAN_FACTOR = math.sqrt(math.pi / 2.0)


@dataclass(frozen=True)
class DefenseCost:
    """Per-sample cost of one defense application.

    ``overhead_pct`` relates added bytes (padding plus dummies) to the
    original payload volume.
    """

    delay_per_packet_s: float
    extra_duration_s: float
    padding_bytes: int
    dummy_bytes: int
    original_payload_bytes: int

    @property
    def overhead_pct(self) -> float:
        if self.original_payload_bytes == 0:
            return 0.0
        return 100.0 * (self.padding_bytes + self.dummy_bytes) / self.original_payload_bytes


def pad(sample: TraceSample, ceiling: int | None = None) -> tuple[TraceSample, DefenseCost]:
    """Pad all data packets up to the flavor's payload ceiling.

    Raises if any data packet already exceeds the ceiling (such a packet
    could not have come from this flavor's link layer).
    """
    if ceiling is None:
        ceiling = PAD_CEILINGS[sample.flavor]
    original = sample.payload_bytes()
    padding = 0
    packets: list[PacketRecord] = []
    for i, p in enumerate(sample.packets):
        if p.is_meta:
            packets.append(p)
            continue
        if p.size_bytes > ceiling:
            raise ValueError(f"packet {i}: size {p.size_bytes} exceeds pad ceiling {ceiling}")
        padding += ceiling - p.size_bytes
        packets.append(PacketRecord(p.timestamp_s, p.direction, ceiling, False))
    cost = DefenseCost(
        delay_per_packet_s=0.0,
        extra_duration_s=0.0,
        padding_bytes=padding,
        dummy_bytes=0,
        original_payload_bytes=original,
    )
    return TraceSample(packets=packets, labels=dict(sample.labels)), cost


def delay_group(sample: TraceSample) -> tuple[TraceSample, DefenseCost]:
    """Delay every packet to the next whole second.

    Packets already on a whole second stay put, so the added delay is in
    [0, 1) per packet and order is preserved.
    """
    packets = []
    total_delay = 0.0
    for p in sample.packets:
        new_ts = float(math.ceil(p.timestamp_s))
        total_delay += new_ts - p.timestamp_s
        packets.append(PacketRecord(new_ts, p.direction, p.size_bytes, p.is_meta))
    n = len(packets)
    extra = packets[-1].timestamp_s - sample.packets[-1].timestamp_s if n else 0.0
    cost = DefenseCost(
        delay_per_packet_s=total_delay / n if n else 0.0,
        extra_duration_s=extra,
        padding_bytes=0,
        dummy_bytes=0,
        original_payload_bytes=sample.payload_bytes(),
    )
    return TraceSample(packets=packets, labels=dict(sample.labels)), cost


@dataclass
class SizeSource:
    """Empirical distribution of data-packet sizes and directions."""

    sizes: np.ndarray
    m2s_count: int
    s2m_count: int

    @classmethod
    def from_samples(cls, samples: Iterable[TraceSample]) -> "SizeSource":
        sizes: list[int] = []
        m2s = s2m = 0
        for sample in samples:
            for p in sample.packets:
                if p.is_meta:
                    continue
                sizes.append(p.size_bytes)
                if p.direction is Direction.M2S:
                    m2s += 1
                else:
                    s2m += 1
        return cls(sizes=np.asarray(sizes, dtype=np.int64), m2s_count=m2s, s2m_count=s2m)

    def direction_probs(self) -> tuple[float, float]:
        total = self.m2s_count + self.s2m_count
        if total == 0:
            return 0.5, 0.5
        return self.m2s_count / total, self.s2m_count / total


def add_dummies(
    sample: TraceSample,
    size_source: SizeSource,
    mean_gap_s: float = 6.0,
    n_dummies: int = 300,
    seed: int = 0,
    uniform_count: bool = False,
) -> tuple[TraceSample, DefenseCost]:
    """Inject dummy data packets around the sample.

    Dummy times are ``start + Rayleigh(sigma)`` with sigma chosen so the
    mean offset is ``mean_gap_s``.  With ``uniform_count`` the number of
    dummies is drawn uniformly from 1..n_dummies instead of being fixed.
    Draw order is: count (if variable), times, sizes, directions; all
    from one seed-derived generator.
    """
    if mean_gap_s <= 0:
        raise ValueError(f"mean_gap_s must be positive, got {mean_gap_s}")
    if n_dummies < 0:
        raise ValueError(f"n_dummies must be >= 0, got {n_dummies}")
    rng = derive_rng(seed, "dummies")
    n = n_dummies
    if uniform_count and n_dummies >= 1:
        n = int(rng.integers(1, n_dummies + 1))
    if n > 0 and len(size_source.sizes) == 0:
        raise ValueError("size source is empty; cannot draw dummy sizes")

    start = sample.packets[0].timestamp_s if sample.packets else 0.0
    sigma = mean_gap_s / _RAYLEIGH_MEAN_FACTOR
    times = start + rng.rayleigh(sigma, size=n)
    sizes = rng.choice(size_source.sizes, size=n, replace=True) if n else np.empty(0, dtype=np.int64)
    p_m2s, p_s2m = size_source.direction_probs()
    dirs = rng.choice(2, size=n, p=[p_m2s, p_s2m]) if n else np.empty(0, dtype=np.int64)

    dummies = [
        PacketRecord(quantize_ts(float(t)), Direction.M2S if d == 0 else Direction.S2M, int(s), False)
        for t, s, d in zip(times, sizes, dirs)
    ]
    merged = sorted(sample.packets + dummies, key=lambda p: p.timestamp_s)
    old_last = sample.packets[-1].timestamp_s if sample.packets else 0.0
    new_last = merged[-1].timestamp_s if merged else 0.0
    cost = DefenseCost(
        delay_per_packet_s=0.0,
        extra_duration_s=max(0.0, new_last - old_last),
        padding_bytes=0,
        dummy_bytes=int(sizes.sum()),
        original_payload_bytes=sample.payload_bytes(),
    )
    return TraceSample(packets=merged, labels=dict(sample.labels)), cost


DEFENSE_NAMES = ("pad", "delay_group", "add_dummies")


def defend_dataset(
    dataset: Dataset,
    defense: str,
    seed: int = 0,
    size_source: SizeSource | None = None,
    mean_gap_s: float = 6.0,
    n_dummies: int = 300,
    uniform_count: bool = False,
) -> tuple[Dataset, list[DefenseCost]]:
    """Apply one defense to every sample (per-sample derived seeds).

    For ``add_dummies`` the size source defaults to the empirical
    distribution of the dataset itself.
    """
    if defense not in DEFENSE_NAMES:
        raise ValueError(f"unknown defense {defense!r}; expected one of {DEFENSE_NAMES}")
    if defense == "add_dummies" and size_source is None:
        size_source = SizeSource.from_samples(dataset)
    out: list[TraceSample] = []
    costs: list[DefenseCost] = []
    for i, sample in enumerate(dataset):
        if defense == "pad":
            shaped, cost = pad(sample)
        elif defense == "delay_group":
            shaped, cost = delay_group(sample)
        else:
            sub = int(derive_rng(seed, "defense", i).integers(0, 2**63 - 1))
            shaped, cost = add_dummies(
                sample,
                size_source,
                mean_gap_s=mean_gap_s,
                n_dummies=n_dummies,
                seed=sub,
                uniform_count=uniform_count,
            )
        out.append(shaped)
        costs.append(cost)
    return Dataset(out), costs


@dataclass(frozen=True)
class CostSummary:
    """One row of the defense cost table (means over samples).

    Padding and dummy volumes are reported in KB (1000 bytes).  The
    overhead percentage is computed from dataset-wide byte totals, not
    averaged per sample.  ``accuracy_pct`` is the retrained adversary's
    macro accuracy and is supplied by the caller.
    """

    defense: str
    accuracy_pct: float
    delay_per_packet_s: float
    extra_duration_s: float
    padding_kb: float
    dummy_kb: float
    overhead_pct: float


def defense_cost_summary(defense: str, costs: Sequence[DefenseCost], accuracy_pct: float) -> CostSummary:
    if not costs:
        raise ValueError("no costs to summarize")
    n = len(costs)
    padding = sum(c.padding_bytes for c in costs)
    dummy = sum(c.dummy_bytes for c in costs)
    original = sum(c.original_payload_bytes for c in costs)
    return CostSummary(
        defense=defense,
        accuracy_pct=accuracy_pct,
        delay_per_packet_s=sum(c.delay_per_packet_s for c in costs) / n,
        extra_duration_s=sum(c.extra_duration_s for c in costs) / n,
        padding_kb=padding / 1000.0 / n,
        dummy_kb=dummy / 1000.0 / n,
        overhead_pct=100.0 * (padding + dummy) / original if original else 0.0,
    )
