"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from btmeta.core import Direction, PacketRecord, TraceSample, quantize_ts

ALL_LABEL_KEYS = ("device", "app", "action", "flavor", "pair", "day")


def make_labels(**overrides) -> dict[str, str]:
    labels = {
        "device": "devA",
        "app": "appA",
        "action": "act1",
        "flavor": "Classic",
        "pair": "P1",
        "day": "0",
    }
    labels.update(overrides)
    return labels


def random_valid_sample(
    rng: np.random.Generator,
    n_packets: int | None = None,
    max_packets: int = 50,
    flavor: str = "Classic",
    meta_prob: float = 0.2,
    **label_overrides,
) -> TraceSample:
    """A sample satisfying every validate_sample rule."""
    if n_packets is None:
        n_packets = int(rng.integers(0, max_packets + 1))
    ts = np.sort(rng.uniform(0.0, 60.0, size=n_packets))
    packets = []
    for t in ts:
        is_meta = bool(rng.random() < meta_prob)
        size = 0 if is_meta else int(rng.integers(0, 1006))
        direction = Direction.M2S if rng.random() < 0.5 else Direction.S2M
        packets.append(PacketRecord(quantize_ts(float(t)), direction, size, is_meta))
    return TraceSample(packets=packets, labels=make_labels(flavor=flavor, **label_overrides))


def pkt(t: float, direction: Direction = Direction.M2S, size: int = 100, meta: bool = False) -> PacketRecord:
    return PacketRecord(t, direction, size, meta)


def sized_sample(
    sizes,
    direction: Direction = Direction.M2S,
    gap: float = 1.0,
    flavor: str = "Classic",
    **label_overrides,
) -> TraceSample:
    """Non-meta packets with the given sizes at uniform spacing."""
    packets = [PacketRecord(i * gap, direction, int(s), False) for i, s in enumerate(sizes)]
    return TraceSample(packets=packets, labels=make_labels(flavor=flavor, **label_overrides))
