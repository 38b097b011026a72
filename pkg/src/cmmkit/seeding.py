"""Counter-based RNG substreams.

Every stochastic operation in the package draws from a generator derived
from (master seed, stream path) via `substream`. Parallel and serial runs
of the same campaign therefore produce bit-identical results regardless of
scheduling: each outer sample owns its substream, keyed by its index.
"""

from __future__ import annotations

import numpy as np

# Fixed stream ids for named components, so path elements are always ints.
STREAM_IDS = {
    "angles": 1,
    "noise": 2,
    "mc": 3,
    "fleet": 4,
    "synth": 5,
    "counts": 6,
    "headings": 7,
}


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream identified by (seed, *path).

    Philox is counter-based: construction is cheap and streams with
    different paths are statistically independent.
    """
    seq = np.random.SeedSequence([int(seed), *[int(p) for p in path]])
    return np.random.Generator(np.random.Philox(seq))
