"""Counter-based seeded random streams.

Every sampling operation in the package draws from ``stream(seed, *path)``,
where ``path`` identifies the consumer (replication index, stream id, ...).
Streams for distinct paths are statistically independent and do not depend
on the order in which they are created, so replications may run in any
order, or in parallel, and still reproduce bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for (seed, path), backed by counter-based Philox."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
