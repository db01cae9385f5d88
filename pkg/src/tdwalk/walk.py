"""Data-generation processes on the hypercube.

The p-lazy random walk flips a uniformly chosen coordinate with probability
p each step and stays put otherwise. Consecutive points therefore differ in
at most one coordinate, which is what the temporal-difference loss exploits.
Also provided: i.i.d. uniform sampling, the projected chain on the support
coordinates, and the edge chain of consecutive point pairs used by the CLT
analysis.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .boolfn import BooleanFunction
from .rng import substream


@dataclass(frozen=True)
class WalkConfig:
    dim: int
    flip_prob: float
    seed: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 0.0 < self.flip_prob < 1.0:
            raise ValueError(f"flip_prob must be in (0, 1), got {self.flip_prob}")


class WalkState:
    """Mutable walk state: current point, step count, and PRNG substreams.

    Single-owner: move it between workers, never share it concurrently.
    """

    __slots__ = ("cfg", "current", "step_count", "last_move", "_coord_rng", "_flip_rng")

    def __init__(self, cfg: WalkConfig):
        self.cfg = cfg
        init_rng = substream(cfg.seed, "walk_init")
        self.current = (2 * init_rng.integers(0, 2, size=cfg.dim) - 1).astype(np.int8)
        self.step_count = 0
        self.last_move: tuple[int, bool] | None = None  # (1-indexed coord, flipped?)
        self._coord_rng = substream(cfg.seed, "walk_coord")
        self._flip_rng = substream(cfg.seed, "walk_flip")


@dataclass
class PairSample:
    """Consecutive walk points with their exact labels."""

    prev: np.ndarray
    next: np.ndarray
    y_prev: float
    y_next: float


def init_walk(cfg: WalkConfig) -> WalkState:
    """Fresh walk with x^(0) uniform on {-1,+1}^d under the seeded generator."""
    return WalkState(cfg)


def step(state: WalkState) -> WalkState:
    """Advance one step: flip a uniform coordinate with probability p, else stay."""
    j = int(state._coord_rng.integers(0, state.cfg.dim))
    flip = bool(state._flip_rng.random() < state.cfg.flip_prob)
    if flip:
        state.current[j] = -state.current[j]
    state.last_move = (j + 1, flip)
    state.step_count += 1
    return state


def pair_stream(state: WalkState, f: BooleanFunction, n: int) -> Iterator[PairSample]:
    """Yield n overlapping consecutive pairs, advancing the shared state.

    The `next` of one pair is the `prev` of the following pair, so n pairs
    consume exactly n walk steps.
    """
    if f.dim != state.cfg.dim:
        raise ValueError(f"function dim {f.dim} != walk dim {state.cfg.dim}")
    prev = state.current.copy()
    y_prev = f.eval(prev)
    for _ in range(n):
        step(state)
        nxt = state.current.copy()
        y_next = f.eval(nxt)
        yield PairSample(prev, nxt, y_prev, y_next)
        prev, y_prev = nxt, y_next


def iid_stream(
    dim: int, seed: int, f: BooleanFunction, n: int
) -> Iterator[tuple[np.ndarray, float]]:
    """Yield n independent uniform points with exact labels."""
    if f.dim != dim:
        raise ValueError(f"function dim {f.dim} != dim {dim}")
    rng = substream(seed, "iid")
    for _ in range(n):
        x = (2 * rng.integers(0, 2, size=dim) - 1).astype(np.int8)
        yield x, f.eval(x)


def spectral_gap(dim: int, flip_prob: float) -> float:
    """Spectral gap of the p-lazy walk on {-1,+1}^d: 2p/d."""
    return 2.0 * flip_prob / dim


def projected_chain_kernel(support_size: int, dim: int, flip_prob: float) -> np.ndarray:
    """Transition matrix of the walk projected onto k support coordinates.

    P(s, s^(j)) = p/d for each j in [k] and P(s, s) = 1 - kp/d; rows are
    indexed like `support_patterns(k)`. Dense, so capped at k <= 12.
    """
    k = int(support_size)
    if k < 1 or k > 12:
        raise ValueError(f"support_size {k} outside dense-matrix cap [1, 12]")
    if k > dim:
        raise ValueError(f"support_size {k} exceeds dim {dim}")
    n = 2**k
    p_flip = flip_prob / dim
    kernel = np.zeros((n, n))
    for m in range(n):
        for j in range(k):
            kernel[m, m ^ (1 << (k - 1 - j))] = p_flip
        kernel[m, m] = 1.0 - k * p_flip
    return kernel


def edge_walk_stream(
    support_size: int, flip_prob: float, seed: int, n: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Stationary edge chain on {-1,+1}^k: states (u, v) with v one lazy step from u.

    The chain shifts (u, v) -> (v, v'); a lazy step produces the self-loop
    edge (v, v). Each step picks a uniform coordinate in [k] and flips it
    with probability p.
    """
    k = int(support_size)
    if k < 1 or k > 20:
        raise ValueError(f"support_size {k} outside [1, 20]")
    u = (2 * substream(seed, "edge_init").integers(0, 2, size=k) - 1).astype(np.int8)
    coord_rng = substream(seed, "edge_coord")
    flip_rng = substream(seed, "edge_flip")
    for _ in range(n):
        v = u.copy()
        j = int(coord_rng.integers(0, k))
        if flip_rng.random() < flip_prob:
            v[j] = -v[j]
        yield u, v
        u = v


def dump_trajectory(cfg: WalkConfig, f: BooleanFunction, n: int, path) -> None:
    """Write a trajectory CSV: step, j_t, Z_t, y_t, with a config header row.

    Row 0 carries the initial point's label with empty move columns.
    Used by golden-file regression tests.
    """
    state = init_walk(cfg)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# dim={cfg.dim} flip_prob={cfg.flip_prob!r} seed={cfg.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["step", "j_t", "Z_t", "y_t"])
        writer.writerow([0, "", "", repr(f.eval(state.current))])
        for t in range(1, n + 1):
            step(state)
            j, flipped = state.last_move
            writer.writerow([t, j, int(flipped), repr(f.eval(state.current))])
