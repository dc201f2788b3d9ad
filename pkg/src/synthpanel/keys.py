"""Deterministic, labeled RNG substreams.

Every stochastic component draws from a generator keyed by the run seed
plus string or integer labels (outcome, year, unit).  Substreams are
independent of evaluation order, so parallel or reordered execution
cannot change results.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def _label_key(label: object) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *labels: object) -> np.random.Generator:
    """Generator for the substream identified by (seed, labels)."""
    entropy = [int(seed) & _MASK] + [_label_key(label) for label in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))
