"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by ``(seed, stream_id)``.  Philox is counter-based, so a stream's output is a
pure function of its key and the draw position within the stream: arrays can
be generated in any order (or in parallel, one stream per task) and still
reproduce bit-identically.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Generator for sub-stream `stream_id` of master `seed`."""
    key = np.array([int(seed) & _MASK64, int(stream_id) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(master_seed: int, name: str) -> int:
    """Stable 64-bit seed for a named task.

    sha256 of ``"{master_seed}:{name}"``, truncated to 8 bytes.  Adding new
    task names never perturbs the seeds of existing ones.
    """
    digest = hashlib.sha256(f"{int(master_seed)}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
