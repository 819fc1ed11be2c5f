"""Seeded, counter-based random streams.

Every stream is a Philox generator keyed by a SeedSequence built from a
global seed plus a tuple of stream labels, so the bits a consumer sees
depend only on (seed, labels) and never on call order or thread layout.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    return zlib.crc32(str(label).encode("utf-8"))


def stream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for ``(seed, *labels)``."""
    entropy = [int(seed) & _MASK64] + [_label_to_int(lab) for lab in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *labels) -> int:
    """64-bit child seed, for handing to components that take an int seed."""
    ss = np.random.SeedSequence([int(seed) & _MASK64] + [_label_to_int(lab) for lab in labels])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
