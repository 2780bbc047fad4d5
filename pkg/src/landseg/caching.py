"""In-memory stage cache keyed by content hashes.

Used by the pipeline so repeat runs and variant sweeps that share inputs
(and in particular one t-SNE embedding) reuse the expensive stages.
"""

from __future__ import annotations

import hashlib

import numpy as np


def content_key(*parts) -> str:
    """Stable hex digest of a mixed sequence of arrays / scalars / strings."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(str(part.dtype).encode())
            h.update(str(part.shape).encode())
            h.update(np.ascontiguousarray(part).tobytes())
        else:
            h.update(repr(part).encode())
        h.update(b"|")
    return h.hexdigest()


class StageCache:
    """Dict-backed cache: get_or(key, fn) computes on miss."""

    def __init__(self):
        self._store: dict[str, object] = {}
        self.hits = 0
        self.misses = 0

    def get_or(self, key: str, fn):
        if key in self._store:
            self.hits += 1
        else:
            self.misses += 1
            self._store[key] = fn()
        return self._store[key]
