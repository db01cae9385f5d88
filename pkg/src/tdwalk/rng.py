"""Deterministic counter-based random substreams.

Every stochastic source in the package (walk initial point, coordinate
choices, Bernoulli flips, network init, bias redraw, Monte-Carlo draws, ...)
pulls from its own Philox substream keyed by ``(seed, stream, index)``.
This makes runs bit-reproducible and lets independent sources be varied
or replayed without interacting.
"""
from __future__ import annotations

import numpy as np

# Stable stream ids. Never renumber: reproducibility of seeded experiments
# depends on these values.
STREAMS = {
    "walk_init": 0,
    "walk_coord": 1,
    "walk_flip": 2,
    "iid": 3,
    "net_init": 4,
    "bias_redraw": 5,
    "test_set": 6,
    "mc": 7,
    "edge_init": 8,
    "edge_coord": 9,
    "edge_flip": 10,
    "targets": 11,
}

_MASK64 = (1 << 64) - 1


def substream(seed: int, stream: str | int, index: int = 0) -> np.random.Generator:
    """Return the Philox generator for ``(seed, stream, index)``.

    ``index`` separates replicas sharing one logical stream, e.g. one
    substream per Monte-Carlo replica.
    """
    key = STREAMS[stream] if isinstance(stream, str) else int(stream)
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=(key, int(index)))
    return np.random.Generator(np.random.Philox(ss))
