"""Easy and hard negative sampling for contrastive training.

Easy negatives are uniform over the node space minus a forbidden set.
Hard negatives come from second-order biased random walks rooted at the
target: the walk's return/in-out bias concentrates endpoints a few hops
out, which yields negatives that are near the target's neighborhood but
outside the sampled subgraph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import BipartiteGraph
from .sampler import ConfigError

HARD_RETRIES = 10


@dataclass(frozen=True)
class WalkConfig:
    """Walk bias and negative-set sizes.

    p penalizes immediate backtracking, q trades breadth against depth.
    Walk endpoints land at expected depth length * p / (p + p*q + q), so
    the walk length must be chosen to push that past the sampled hops.
    """

    p: float = 1.0
    q: float = 0.5
    length: int = 10
    hard_count: int = 16
    easy_count: int = 4096

    def validate(self) -> None:
        if self.p <= 0 or self.q <= 0:
            raise ConfigError(f"walk.p and walk.q must be positive, got p={self.p} q={self.q}")
        if self.length < 2:
            raise ConfigError(f"walk.length must be >= 2, got {self.length}")
        if self.hard_count < 0 or self.easy_count < 0:
            raise ConfigError("negative counts must be >= 0")
        if self.hard_count + self.easy_count == 0:
            raise ConfigError("at least one negative is required")

    def expected_depth(self) -> float:
        """Mean distance from the root at which a long walk's end sits."""
        return self.length * self.p / (self.p + self.p * self.q + self.q)


@dataclass
class NegativeSet:
    easy: np.ndarray
    hard: np.ndarray

    @property
    def combined(self) -> np.ndarray:
        return np.concatenate([self.easy, self.hard])


def transition_weights(
    g: BipartiteGraph, prev: int, cur: int, p: float, q: float
) -> np.ndarray:
    """Unnormalized move weights from cur, aligned with g.neighbors_of(cur).

    A candidate scoring 1/p is the node just left, 1 is a node adjacent
    to it, and 1/q is anything further. On a bipartite graph the middle
    case is empty: cur's neighbors share prev's side, so none of them
    can be adjacent to prev.
    """
    if not g.has_edge(prev, cur):
        raise ValueError(f"({prev}, {cur}) is not an edge")
    nbrs = g.neighbors_of(cur)
    w = np.full(len(nbrs), 1.0 / q)
    prev_nbrs = g.neighbors_of(prev)
    if len(prev_nbrs) > 0:
        pos = np.searchsorted(prev_nbrs, nbrs)
        pos_c = np.minimum(pos, len(prev_nbrs) - 1)
        w[prev_nbrs[pos_c] == nbrs] = 1.0
    w[nbrs == prev] = 1.0 / p
    return w


def _step(
    g: BipartiteGraph, prev: int, cur: int, p: float, q: float, rng: np.random.Generator
) -> int:
    """One biased transition. Caller guarantees (prev, cur) is an edge."""
    nbrs = g.neighbors_of(cur)
    if len(nbrs) == 0:
        raise RuntimeError(f"walk dead-ends at node {cur}; graph is not symmetric")
    w = np.full(len(nbrs), 1.0 / q)
    prev_nbrs = g.neighbors_of(prev)
    pos = np.searchsorted(prev_nbrs, nbrs)
    pos_c = np.minimum(pos, len(prev_nbrs) - 1)
    w[prev_nbrs[pos_c] == nbrs] = 1.0
    w[nbrs == prev] = 1.0 / p
    cum = np.cumsum(w)
    return int(nbrs[np.searchsorted(cum, rng.random() * cum[-1], side="right")])


def random_walk(
    g: BipartiteGraph, start: int, cfg: WalkConfig, rng: np.random.Generator
) -> np.ndarray | None:
    """Second-order walk of cfg.length steps; None if start is isolated."""
    nbrs = g.neighbors_of(start)
    if len(nbrs) == 0:
        return None
    path = np.empty(cfg.length + 1, dtype=np.int64)
    path[0] = start
    path[1] = nbrs[rng.integers(0, len(nbrs))]
    for i in range(2, cfg.length + 1):
        path[i] = _step(g, int(path[i - 2]), int(path[i - 1]), cfg.p, cfg.q, rng)
    return path


def sample_easy(
    g: BipartiteGraph, count: int, forbidden: set[int], rng: np.random.Generator
) -> np.ndarray:
    """count uniform draws (with replacement) over all nodes minus forbidden."""
    n = g.num_nodes
    if count == 0:
        return np.empty(0, dtype=np.int64)
    allowed = n - len(forbidden)
    if allowed <= 0:
        raise ValueError("forbidden set covers every node")
    if allowed * 4 <= n:
        # dense forbidden set: materialize the complement once
        pool = np.setdiff1d(np.arange(n, dtype=np.int64), np.fromiter(forbidden, dtype=np.int64))
        return pool[rng.integers(0, len(pool), size=count)]
    forb = np.fromiter(forbidden, dtype=np.int64, count=len(forbidden))
    forb.sort()
    out = np.empty(count, dtype=np.int64)
    filled = 0
    while filled < count:
        cand = rng.integers(0, n, size=count - filled)
        if len(forb) > 0:
            pos = np.minimum(np.searchsorted(forb, cand), len(forb) - 1)
            cand = cand[forb[pos] != cand]
        out[filled : filled + len(cand)] = cand
        filled += len(cand)
    return out


def sample_hard(
    g: BipartiteGraph,
    target: int,
    cfg: WalkConfig,
    forbidden: set[int],
    rng: np.random.Generator,
) -> np.ndarray:
    """cfg.hard_count walk endpoints rooted at target, none in forbidden.

    Each slot re-walks up to HARD_RETRIES times when the endpoint lands
    in forbidden, then falls back to a uniform easy draw so the set
    always fills.
    """
    if cfg.hard_count == 0:
        return np.empty(0, dtype=np.int64)
    if g.degree(target) == 0:
        raise ValueError(f"target {target} is isolated")
    out = np.empty(cfg.hard_count, dtype=np.int64)
    for slot in range(cfg.hard_count):
        end = -1
        for _ in range(1 + HARD_RETRIES):
            path = random_walk(g, target, cfg, rng)
            cand = int(path[-1])
            if cand not in forbidden:
                end = cand
                break
        if end < 0:
            end = int(sample_easy(g, 1, forbidden, rng)[0])
        out[slot] = end
    return out


def build_negative_set(
    g: BipartiteGraph,
    target: int,
    cfg: WalkConfig,
    forbidden: set[int],
    rng: np.random.Generator,
) -> NegativeSet:
    """Easy pool plus walk-based hard negatives, all outside forbidden."""
    easy = sample_easy(g, cfg.easy_count, forbidden, rng)
    hard = sample_hard(g, target, cfg, forbidden, rng) if cfg.hard_count > 0 else np.empty(0, dtype=np.int64)
    return NegativeSet(easy=easy, hard=hard)
