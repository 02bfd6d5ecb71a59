"""Traffic-analysis laboratory for Bluetooth wearable metadata.

Synthesizes link-layer-like packet traces (timestamp, direction, size,
meta flag), extracts metadata features, trains a deterministic random
forest, and evaluates fingerprinting attacks and traffic-shaping
defenses on them.
"""

__version__ = "0.1.0"

from .core import (
    Direction,
    Flavor,
    PacketRecord,
    TraceSample,
    Dataset,
    FilteredSequences,
    filter_sequences,
    validate_sample,
    byte_entropy,
    derive_rng,
)

__all__ = [
    "__version__",
    "Direction",
    "Flavor",
    "PacketRecord",
    "TraceSample",
    "Dataset",
    "FilteredSequences",
    "filter_sequences",
    "validate_sample",
    "byte_entropy",
    "derive_rng",
]
