"""Synthetic trace generation: profiles, packs, and full-day plans.

A :class:`Profile` describes one traffic class as a burst process:
bursts arrive inside fixed-length blocks with exponential inter-burst
gaps, each burst holds a drawn number of packets with exponential
intra-burst gaps, packet sizes come from per-direction size mixtures,
and data packets can be echoed by a zero-length meta packet from the
other side.

A :class:`ProfilePack` bundles named profiles with group lists (device
sets, app sets, and so on) plus a chipset map, and serializes to a
versioned, human-editable JSON file.  A :class:`DayPlan` turns a pack
into a continuous multi-hour trace: each interaction slot flips a
weighted coin for its hour of day, picks an action from the catalog
(popular actions get a higher prior), and overlays the action's
traffic on an always-on background profile.

All timestamps are quantized to microseconds so generated traces
round-trip byte-identically through the trace CSV format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    MAX_PAYLOAD,
    Dataset,
    Direction,
    Flavor,
    Interval,
    PacketRecord,
    TraceSample,
    derive_rng,
    quantize_ts,
)

PACK_FORMAT = "btmeta-pack"
PACK_VERSION = 1

META_ECHO_GAP_S = 0.0005  # fixed offset of a meta echo after its data packet


@dataclass(frozen=True)
class SizeMixture:
    """Discrete size atoms plus an optional uniform noise band.

    ``atoms`` are (size, weight) pairs; ``noise`` adds a uniform draw
    over [noise_lo, noise_hi] with weight ``noise_weight``.  Weights are
    relative and must be positive.
    """

    atoms: tuple[tuple[int, float], ...] = ()
    noise_lo: int = 0
    noise_hi: int = 0
    noise_weight: float = 0.0

    def __post_init__(self):
        # Normalize numeric types so equal mixtures serialize identically.
        object.__setattr__(self, "atoms", tuple((int(s), float(w)) for s, w in self.atoms))
        object.__setattr__(self, "noise_lo", int(self.noise_lo))
        object.__setattr__(self, "noise_hi", int(self.noise_hi))
        object.__setattr__(self, "noise_weight", float(self.noise_weight))
        if not self.atoms and self.noise_weight <= 0:
            raise ValueError("size mixture needs at least one atom or a noise band")
        for size, w in self.atoms:
            if size < 0:
                raise ValueError(f"atom size {size} is negative")
            if w <= 0:
                raise ValueError(f"atom weight {w} must be positive")
        if self.noise_weight < 0:
            raise ValueError("noise weight must be non-negative")
        if self.noise_weight > 0 and self.noise_lo > self.noise_hi:
            raise ValueError(f"noise band [{self.noise_lo}, {self.noise_hi}] is empty")
        if self.noise_weight > 0 and self.noise_lo < 0:
            raise ValueError("noise band sizes must be non-negative")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n == 0:
            return np.empty(0, dtype=np.int64)
        weights = [w for _, w in self.atoms]
        has_noise = self.noise_weight > 0
        if has_noise:
            weights.append(self.noise_weight)
        probs = np.asarray(weights) / sum(weights)
        comp = rng.choice(len(weights), size=n, p=probs)
        sizes = np.zeros(n, dtype=np.int64)
        for i, (size, _) in enumerate(self.atoms):
            sizes[comp == i] = size
        if has_noise:
            mask = comp == len(self.atoms)
            sizes[mask] = rng.integers(self.noise_lo, self.noise_hi + 1, size=int(mask.sum()))
        return sizes

    def max_size(self) -> int:
        sizes = [s for s, _ in self.atoms]
        if self.noise_weight > 0:
            sizes.append(self.noise_hi)
        return max(sizes)


@dataclass(frozen=True)
class CountDist:
    """Small integer count distribution: constant, poisson, or uniform."""

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if self.kind not in ("constant", "poisson", "uniform"):
            raise ValueError(f"unknown count distribution {self.kind!r}")
        if self.a < 0:
            raise ValueError(f"count parameter a={self.a} must be non-negative")
        if self.kind == "uniform" and self.b < self.a:
            raise ValueError(f"uniform count range [{self.a}, {self.b}] is empty")

    def draw(self, rng: np.random.Generator) -> int:
        if self.kind == "constant":
            return int(self.a)
        if self.kind == "poisson":
            return int(rng.poisson(self.a))
        return int(rng.integers(int(self.a), int(self.b) + 1))


@dataclass(frozen=True)
class Profile:
    """One traffic class: burst structure, sizes, directions, meta echoes."""

    name: str
    flavor: Flavor
    m2s_sizes: SizeMixture
    s2m_sizes: SizeMixture
    bursts_per_block: CountDist
    packets_per_burst: CountDist
    intra_gap_s: float
    inter_gap_s: float
    direction_split: float = 0.5
    meta_rate: float = 0.0
    volume_scale: float = 1.0
    base_seconds: float = 30.0
    labels: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for attr in ("intra_gap_s", "inter_gap_s", "direction_split", "meta_rate", "volume_scale", "base_seconds"):
            object.__setattr__(self, attr, float(getattr(self, attr)))
        if self.intra_gap_s <= 0 or self.inter_gap_s <= 0:
            raise ValueError(f"profile {self.name}: gap means must be positive")
        if not 0 <= self.direction_split <= 1:
            raise ValueError(f"profile {self.name}: direction_split must be in [0, 1]")
        if not 0 <= self.meta_rate <= 1:
            raise ValueError(f"profile {self.name}: meta_rate must be in [0, 1]")
        if self.volume_scale < 0:
            raise ValueError(f"profile {self.name}: volume_scale must be non-negative")
        if self.base_seconds <= 0:
            raise ValueError(f"profile {self.name}: base_seconds must be positive")
        ceiling = MAX_PAYLOAD[self.flavor]
        for side, mixture in (("m2s", self.m2s_sizes), ("s2m", self.s2m_sizes)):
            if mixture.max_size() > ceiling:
                raise ValueError(
                    f"profile {self.name}: {side} sizes reach {mixture.max_size()} B, "
                    f"over the {self.flavor.value} payload ceiling of {ceiling} B"
                )


def _gen_burst(
    rng: np.random.Generator, profile: Profile, t_start: float, t_limit: float
) -> tuple[list[tuple[float, Direction, int, bool]], float]:
    n = max(0, int(round(profile.packets_per_burst.draw(rng) * profile.volume_scale)))
    if n == 0:
        return [], t_start
    gaps = rng.exponential(profile.intra_gap_s, size=n - 1) if n > 1 else np.empty(0)
    to_m2s = rng.random(n) < profile.direction_split
    sz_m2s = profile.m2s_sizes.draw(rng, n)
    sz_s2m = profile.s2m_sizes.draw(rng, n)
    echo = rng.random(n) < profile.meta_rate
    out: list[tuple[float, Direction, int, bool]] = []
    t = t_start
    for i in range(n):
        if i > 0:
            t += float(gaps[i - 1])
        if t >= t_limit:
            break
        d = Direction.M2S if to_m2s[i] else Direction.S2M
        size = int(sz_m2s[i] if to_m2s[i] else sz_s2m[i])
        out.append((t, d, size, False))
        if echo[i]:
            tm = t + META_ECHO_GAP_S
            if tm < t_limit:
                out.append((tm, d.opposite(), 0, True))
    return out, t


def generate_sample(
    profile: Profile,
    duration_s: float = 30.0,
    seed: int = 0,
    rng: np.random.Generator | None = None,
    extra_labels: dict[str, str] | None = None,
) -> TraceSample:
    """Draw one sample of ``duration_s`` seconds from a profile.

    Burst counts are drawn once per ``base_seconds`` block so longer
    durations keep the same traffic density.  Packets falling past a
    block boundary are truncated.  Timestamps start near 0 and are
    microsecond-quantized.
    """
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    if rng is None:
        rng = derive_rng(seed, "sample", profile.name)
    events: list[tuple[float, Direction, int, bool]] = []
    n_blocks = math.ceil(duration_s / profile.base_seconds)
    for b in range(n_blocks):
        t0 = b * profile.base_seconds
        t1 = min((b + 1) * profile.base_seconds, duration_s)
        n_bursts = profile.bursts_per_block.draw(rng)
        t = t0
        for _ in range(n_bursts):
            t += float(rng.exponential(profile.inter_gap_s))
            if t >= t1:
                break
            burst, t = _gen_burst(rng, profile, t, t1)
            events.extend(burst)
    events.sort(key=lambda e: e[0])
    packets = [PacketRecord(quantize_ts(t), d, size, meta) for t, d, size, meta in events]
    labels = {"device": "", "app": "", "action": "", "pair": "", "day": "0"}
    labels.update(profile.labels)
    labels["flavor"] = profile.flavor.value
    if extra_labels:
        labels.update(extra_labels)
    return TraceSample(packets=packets, labels=labels)


def shift_sample(sample: TraceSample, offset_s: float) -> TraceSample:
    """Shift all timestamps by a non-negative offset (re-quantized)."""
    if offset_s < 0:
        raise ValueError(f"offset must be non-negative, got {offset_s}")
    packets = [
        PacketRecord(quantize_ts(p.timestamp_s + offset_s), p.direction, p.size_bytes, p.is_meta)
        for p in sample.packets
    ]
    return TraceSample(packets=packets, labels=dict(sample.labels))


def overlay(base: TraceSample, *others: TraceSample) -> TraceSample:
    """Merge packet streams by time; labels come from ``base``."""
    packets = list(base.packets)
    for s in others:
        packets.extend(s.packets)
    packets.sort(key=lambda p: p.timestamp_s)
    return TraceSample(packets=packets, labels=dict(base.labels))


def generate_dataset(
    profiles: Sequence[Profile],
    n_per_class: int,
    duration_s: float = 30.0,
    seed: int = 0,
    pair: str = "P1",
    day: int = 0,
) -> Dataset:
    """n samples per profile, labeled with the given pair and day."""
    samples = []
    for profile in profiles:
        for i in range(n_per_class):
            rng = derive_rng(seed, "gen", profile.name, pair, day, i)
            samples.append(
                generate_sample(
                    profile,
                    duration_s=duration_s,
                    rng=rng,
                    extra_labels={"pair": pair, "day": str(day)},
                )
            )
    return Dataset(samples)


def with_gap_scale(profile: Profile, intra_scale: float = 1.0, inter_scale: float = 1.0) -> Profile:
    """Copy of a profile with scaled timing gaps (hardware/setup drift)."""
    return replace(
        profile,
        intra_gap_s=profile.intra_gap_s * intra_scale,
        inter_gap_s=profile.inter_gap_s * inter_scale,
    )


@dataclass(frozen=True)
class ActionSpec:
    """One catalog entry of a day plan."""

    action: str
    profile: str
    popular: bool = False
    duration_s: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "popular", bool(self.popular))
        object.__setattr__(self, "duration_s", float(self.duration_s))


@dataclass(frozen=True)
class DayPlan:
    """Schedule for a continuous capture: hourly interaction weights,
    an action catalog, and slot/segment geometry.

    Each ``slot_seconds`` slot triggers at most one action with
    probability ``hourly_weights[hour] * slot_seconds / 3600`` (clamped
    to 1).  Popular catalog entries are ``popular_multiplier`` times as
    likely as the rest.  The background profile runs continuously,
    generated per ``segment_seconds`` segment.
    """

    hourly_weights: tuple[float, ...]
    catalog: tuple[ActionSpec, ...]
    background: str
    popular_multiplier: float = 2.0
    segment_seconds: float = 1200.0
    slot_seconds: float = 120.0
    total_seconds: float = 86400.0
    jitter_max_s: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "hourly_weights", tuple(float(w) for w in self.hourly_weights))
        object.__setattr__(self, "catalog", tuple(self.catalog))
        for attr in ("popular_multiplier", "segment_seconds", "slot_seconds", "total_seconds", "jitter_max_s"):
            object.__setattr__(self, attr, float(getattr(self, attr)))
        if len(self.hourly_weights) != 24:
            raise ValueError(f"need 24 hourly weights, got {len(self.hourly_weights)}")
        if any(w < 0 for w in self.hourly_weights):
            raise ValueError("hourly weights must be non-negative")
        if not self.catalog:
            raise ValueError("day plan catalog is empty")
        if self.popular_multiplier <= 0:
            raise ValueError("popular_multiplier must be positive")
        if self.slot_seconds <= 0 or self.segment_seconds <= 0 or self.total_seconds <= 0:
            raise ValueError("slot, segment, and total seconds must be positive")
        for spec in self.catalog:
            if spec.duration_s > self.slot_seconds:
                raise ValueError(
                    f"action {spec.action!r} lasts {spec.duration_s}s, longer than a {self.slot_seconds}s slot"
                )

    def action_probs(self) -> np.ndarray:
        w = np.asarray([self.popular_multiplier if s.popular else 1.0 for s in self.catalog])
        return w / w.sum()

    def trigger_prob(self, hour: int) -> float:
        return min(1.0, self.hourly_weights[hour % 24] * self.slot_seconds / 3600.0)


@dataclass
class ProfilePack:
    """Named profiles plus the group structure experiments rely on."""

    name: str
    profiles: dict[str, Profile]
    groups: dict[str, tuple[str, ...]]
    chipsets: dict[str, str] = field(default_factory=dict)
    day_plan: DayPlan | None = None
    version: int = PACK_VERSION

    def __post_init__(self):
        for gname, members in self.groups.items():
            for m in members:
                if m not in self.profiles:
                    raise ValueError(f"group {gname!r} references unknown profile {m!r}")
        if self.day_plan is not None:
            for spec in self.day_plan.catalog:
                if spec.profile not in self.profiles:
                    raise ValueError(f"day plan references unknown profile {spec.profile!r}")
            if self.day_plan.background not in self.profiles:
                raise ValueError(f"day plan references unknown background {self.day_plan.background!r}")

    def group(self, name: str) -> list[Profile]:
        if name not in self.groups:
            raise ValueError(f"pack has no group {name!r}; available: {sorted(self.groups)}")
        return [self.profiles[m] for m in self.groups[name]]

    def chipset_of(self, device: str) -> str:
        if device not in self.chipsets:
            raise ValueError(f"no chipset mapping for device {device!r}")
        return self.chipsets[device]


def generate_day(
    pack: ProfilePack, plan: DayPlan | None = None, seed: int = 0
) -> tuple[TraceSample, list[Interval]]:
    """Simulate one continuous capture day.

    Returns the merged trace and the ground-truth action intervals,
    sorted by start time.  Slots and background segments use
    independently derived generators, so the output is deterministic in
    the seed regardless of generation order.
    """
    if plan is None:
        plan = pack.day_plan
    if plan is None:
        raise ValueError("no day plan given and the pack has none")
    background = pack.profiles[plan.background]
    probs = plan.action_probs()

    truth: list[Interval] = []
    parts: list[TraceSample] = []
    n_slots = int(plan.total_seconds // plan.slot_seconds)
    for i in range(n_slots):
        slot_start = i * plan.slot_seconds
        hour = int(slot_start // 3600) % 24
        rng = derive_rng(seed, "slot", i)
        if rng.random() >= plan.trigger_prob(hour):
            continue
        spec = plan.catalog[int(rng.choice(len(plan.catalog), p=probs))]
        margin = plan.slot_seconds - spec.duration_s
        jitter = float(rng.uniform(0.0, min(plan.jitter_max_s, margin))) if margin > 0 else 0.0
        start = quantize_ts(slot_start + jitter)
        sample = generate_sample(pack.profiles[spec.profile], duration_s=spec.duration_s, rng=rng)
        parts.append(shift_sample(sample, start))
        truth.append(Interval(start, quantize_ts(start + spec.duration_s), spec.action))

    n_segments = math.ceil(plan.total_seconds / plan.segment_seconds)
    for k in range(n_segments):
        seg_start = k * plan.segment_seconds
        seg_len = min(plan.segment_seconds, plan.total_seconds - seg_start)
        rng = derive_rng(seed, "segment", k)
        seg = generate_sample(background, duration_s=seg_len, rng=rng)
        parts.append(shift_sample(seg, seg_start))

    all_packets: list[PacketRecord] = []
    for part in parts:
        all_packets.extend(part.packets)
    all_packets.sort(key=lambda p: p.timestamp_s)
    labels = {
        "device": background.labels.get("device", ""),
        "app": "",
        "action": "",
        "flavor": background.flavor.value,
        "pair": "P1",
        "day": "0",
    }
    truth.sort(key=lambda iv: iv.start_s)
    return TraceSample(packets=all_packets, labels=labels), truth


# ---------------------------------------------------------------------------
# Pack serialization


def _mixture_to_dict(m: SizeMixture) -> dict:
    doc: dict = {"atoms": [[int(s), float(w)] for s, w in m.atoms]}
    if m.noise_weight > 0:
        doc["noise"] = [int(m.noise_lo), int(m.noise_hi), float(m.noise_weight)]
    return doc


def _mixture_from_dict(doc: dict) -> SizeMixture:
    atoms = tuple((int(s), float(w)) for s, w in doc.get("atoms", []))
    noise = doc.get("noise")
    if noise is None:
        return SizeMixture(atoms=atoms)
    return SizeMixture(atoms=atoms, noise_lo=int(noise[0]), noise_hi=int(noise[1]), noise_weight=float(noise[2]))


def _count_to_dict(c: CountDist) -> dict:
    doc: dict = {"kind": c.kind, "a": c.a}
    if c.kind == "uniform":
        doc["b"] = c.b
    return doc


def _count_from_dict(doc: dict) -> CountDist:
    return CountDist(kind=doc["kind"], a=float(doc["a"]), b=float(doc.get("b", 0.0)))


def _profile_to_dict(p: Profile) -> dict:
    return {
        "name": p.name,
        "flavor": p.flavor.value,
        "labels": dict(p.labels),
        "m2s_sizes": _mixture_to_dict(p.m2s_sizes),
        "s2m_sizes": _mixture_to_dict(p.s2m_sizes),
        "bursts_per_block": _count_to_dict(p.bursts_per_block),
        "packets_per_burst": _count_to_dict(p.packets_per_burst),
        "intra_gap_s": p.intra_gap_s,
        "inter_gap_s": p.inter_gap_s,
        "direction_split": p.direction_split,
        "meta_rate": p.meta_rate,
        "volume_scale": p.volume_scale,
        "base_seconds": p.base_seconds,
    }


def _profile_from_dict(doc: dict) -> Profile:
    return Profile(
        name=doc["name"],
        flavor=Flavor(doc["flavor"]),
        m2s_sizes=_mixture_from_dict(doc["m2s_sizes"]),
        s2m_sizes=_mixture_from_dict(doc["s2m_sizes"]),
        bursts_per_block=_count_from_dict(doc["bursts_per_block"]),
        packets_per_burst=_count_from_dict(doc["packets_per_burst"]),
        intra_gap_s=float(doc["intra_gap_s"]),
        inter_gap_s=float(doc["inter_gap_s"]),
        direction_split=float(doc.get("direction_split", 0.5)),
        meta_rate=float(doc.get("meta_rate", 0.0)),
        volume_scale=float(doc.get("volume_scale", 1.0)),
        base_seconds=float(doc.get("base_seconds", 30.0)),
        labels=dict(doc.get("labels", {})),
    )


def _plan_to_dict(plan: DayPlan) -> dict:
    return {
        "hourly_weights": list(plan.hourly_weights),
        "catalog": [
            {"action": s.action, "profile": s.profile, "popular": s.popular, "duration_s": s.duration_s}
            for s in plan.catalog
        ],
        "background": plan.background,
        "popular_multiplier": plan.popular_multiplier,
        "segment_seconds": plan.segment_seconds,
        "slot_seconds": plan.slot_seconds,
        "total_seconds": plan.total_seconds,
        "jitter_max_s": plan.jitter_max_s,
    }


def _plan_from_dict(doc: dict) -> DayPlan:
    return DayPlan(
        hourly_weights=tuple(float(w) for w in doc["hourly_weights"]),
        catalog=tuple(
            ActionSpec(
                action=c["action"],
                profile=c["profile"],
                popular=bool(c.get("popular", False)),
                duration_s=float(c.get("duration_s", 20.0)),
            )
            for c in doc["catalog"]
        ),
        background=doc["background"],
        popular_multiplier=float(doc.get("popular_multiplier", 2.0)),
        segment_seconds=float(doc.get("segment_seconds", 1200.0)),
        slot_seconds=float(doc.get("slot_seconds", 120.0)),
        total_seconds=float(doc.get("total_seconds", 86400.0)),
        jitter_max_s=float(doc.get("jitter_max_s", 30.0)),
    )


def pack_to_json(pack: ProfilePack) -> str:
    doc = {
        "format": PACK_FORMAT,
        "version": pack.version,
        "name": pack.name,
        "profiles": [_profile_to_dict(p) for p in pack.profiles.values()],
        "groups": {g: list(members) for g, members in pack.groups.items()},
        "chipsets": dict(pack.chipsets),
        "day_plan": _plan_to_dict(pack.day_plan) if pack.day_plan else None,
    }
    return json.dumps(doc, indent=2)


def pack_from_json(text: str) -> ProfilePack:
    doc = json.loads(text)
    if doc.get("format") != PACK_FORMAT:
        raise ValueError(f"not a {PACK_FORMAT} file (format={doc.get('format')!r})")
    if doc.get("version") != PACK_VERSION:
        raise ValueError(f"unsupported pack version {doc.get('version')!r}")
    profiles = {}
    for pdoc in doc["profiles"]:
        p = _profile_from_dict(pdoc)
        if p.name in profiles:
            raise ValueError(f"duplicate profile name {p.name!r}")
        profiles[p.name] = p
    plan = _plan_from_dict(doc["day_plan"]) if doc.get("day_plan") else None
    return ProfilePack(
        name=doc.get("name", "unnamed"),
        profiles=profiles,
        groups={g: tuple(m) for g, m in doc.get("groups", {}).items()},
        chipsets=dict(doc.get("chipsets", {})),
        day_plan=plan,
        version=doc["version"],
    )


def save_pack(pack: ProfilePack, path: str | Path) -> None:
    Path(path).write_text(pack_to_json(pack) + "\n", encoding="utf-8")


def load_pack(path: str | Path) -> ProfilePack:
    return pack_from_json(Path(path).read_text(encoding="utf-8"))


def save_plan(plan: DayPlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_plan_to_dict(plan), indent=2) + "\n", encoding="utf-8")


def load_plan(path: str | Path) -> DayPlan:
    return _plan_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
