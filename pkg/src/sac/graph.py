"""Immutable bipartite interaction graph with CSR adjacency.

Users and items share one dense node-id space: users take ids
0..num_users-1, items take num_users..num_users+num_items-1, so a single
embedding table can serve every node. Adjacency is undirected (every edge
stored in both endpoint lists), sorted and deduplicated, which makes
membership tests a binary search.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

_MAX_ID = 2**63 - 1


class GraphFormatError(ValueError):
    """Malformed edge-list input (bad line, empty file, id overflow)."""


@dataclass(frozen=True)
class GraphStats:
    num_users: int
    num_items: int
    num_interactions: int
    sparsity: float


def sparsity(num_users: int, num_items: int, num_interactions: int) -> float:
    """Interaction density: interactions / (users * items)."""
    return num_interactions / (num_users * num_items)


class BipartiteGraph:
    """Read-only user-item graph; safe for unrestricted concurrent reads.

    `offsets` has length num_nodes+1 and indexes into `neighbors`; the
    neighbor slice of node v is neighbors[offsets[v]:offsets[v+1]], sorted
    ascending. Raw input ids are remapped to dense internal ids; the
    mapping (sorted raw ids per side) is kept for export.
    """

    def __init__(
        self,
        num_users: int,
        num_items: int,
        offsets: np.ndarray,
        neighbors: np.ndarray,
        user_raw_ids: np.ndarray,
        item_raw_ids: np.ndarray,
    ):
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.neighbors = np.ascontiguousarray(neighbors, dtype=np.int64)
        self.user_raw_ids = np.ascontiguousarray(user_raw_ids, dtype=np.int64)
        self.item_raw_ids = np.ascontiguousarray(item_raw_ids, dtype=np.int64)
        for arr in (self.offsets, self.neighbors, self.user_raw_ids, self.item_raw_ids):
            arr.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def num_interactions(self) -> int:
        return len(self.neighbors) // 2

    def is_item(self, v: int) -> bool:
        return v >= self.num_users

    def raw_id(self, v: int) -> int:
        """Original input id of internal node v."""
        if v < self.num_users:
            return int(self.user_raw_ids[v])
        return int(self.item_raw_ids[v - self.num_users])

    def neighbors_of(self, v: int) -> np.ndarray:
        """Sorted, deduplicated neighbor ids of v (empty view if isolated)."""
        if not 0 <= v < self.num_nodes:
            raise IndexError(f"node id {v} out of range [0, {self.num_nodes})")
        return self.neighbors[self.offsets[v] : self.offsets[v + 1]]

    def degree(self, v: int) -> int:
        if not 0 <= v < self.num_nodes:
            raise IndexError(f"node id {v} out of range [0, {self.num_nodes})")
        return int(self.offsets[v + 1] - self.offsets[v])

    def has_edge(self, u: int, v: int) -> bool:
        """Binary-search membership test on u's sorted neighbor list."""
        nbrs = self.neighbors_of(u)
        pos = np.searchsorted(nbrs, v)
        return pos < len(nbrs) and nbrs[pos] == v

    def stats(self) -> GraphStats:
        return GraphStats(
            num_users=self.num_users,
            num_items=self.num_items,
            num_interactions=self.num_interactions,
            sparsity=sparsity(self.num_users, self.num_items, self.num_interactions),
        )

    @classmethod
    def from_edges(cls, user_ids, item_ids) -> "BipartiteGraph":
        """Build from parallel arrays of raw (user, item) pairs.

        Duplicates are collapsed; repeated interactions carry no weight.
        """
        users = np.asarray(user_ids, dtype=np.int64)
        items = np.asarray(item_ids, dtype=np.int64)
        if users.size == 0:
            raise GraphFormatError("edge list is empty")
        pairs = np.unique(np.stack([users, items], axis=1), axis=0)
        user_raw = np.unique(pairs[:, 0])
        item_raw = np.unique(pairs[:, 1])
        num_users = len(user_raw)
        num_items = len(item_raw)
        u_int = np.searchsorted(user_raw, pairs[:, 0])
        i_int = np.searchsorted(item_raw, pairs[:, 1]) + num_users

        src = np.concatenate([u_int, i_int])
        dst = np.concatenate([i_int, u_int])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        counts = np.bincount(src, minlength=num_users + num_items)
        offsets = np.zeros(num_users + num_items + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(num_users, num_items, offsets, dst, user_raw, item_raw)

    def validate(self) -> None:
        """Check all structural invariants; raises AssertionError on breach."""
        assert np.all(np.diff(self.offsets) >= 0), "offsets must be non-decreasing"
        assert self.offsets[0] == 0 and self.offsets[-1] == len(self.neighbors)
        for v in range(self.num_nodes):
            nbrs = self.neighbors_of(v)
            if len(nbrs) > 1:
                assert np.all(np.diff(nbrs) > 0), f"node {v}: neighbors not strictly increasing"
            if len(nbrs):
                side_item = self.is_item(v)
                assert all(self.is_item(int(n)) != side_item for n in nbrs), (
                    f"node {v}: same-side neighbor (bipartiteness broken)"
                )
            for n in nbrs:
                assert self.has_edge(int(n), v), f"edge ({v},{n}) not symmetric"


def _parse_edge_line(line: str, lineno: int, source: str) -> tuple[int, int]:
    parts = line.split("\t")
    if len(parts) != 2:
        raise GraphFormatError(
            f"{source}: line {lineno}: expected 'user<TAB>item', got {line!r}"
        )
    try:
        u, i = int(parts[0]), int(parts[1])
    except ValueError:
        raise GraphFormatError(
            f"{source}: line {lineno}: non-integer id in {line!r}"
        ) from None
    if u < 0 or i < 0:
        raise GraphFormatError(f"{source}: line {lineno}: negative id in {line!r}")
    if u > _MAX_ID or i > _MAX_ID:
        raise GraphFormatError(f"{source}: line {lineno}: id overflows 64-bit range")
    return u, i


def load_edge_pairs(path, allow_empty: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Raw (user, item) id arrays from tab-separated lines, file order.

    Blank lines are ignored; any other malformed line raises
    GraphFormatError with its line number. An empty file is an error
    unless allow_empty is set (test splits may legitimately be empty).
    """
    users: list[int] = []
    items: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            u, i = _parse_edge_line(line, lineno, str(path))
            users.append(u)
            items.append(i)
    if not users and not allow_empty:
        raise GraphFormatError(f"{path}: edge list is empty")
    return np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64)


def load_edge_list(path) -> BipartiteGraph:
    """Load a tab-separated "user<TAB>item" file into a graph."""
    return BipartiteGraph.from_edges(*load_edge_pairs(path))


def save_edge_list(g: BipartiteGraph, path) -> None:
    """Export as the same TSV format, raw ids, deterministic order."""
    buf = io.StringIO()
    for u in range(g.num_users):
        ru = g.user_raw_ids[u]
        for n in g.neighbors_of(u):
            buf.write(f"{ru}\t{g.item_raw_ids[n - g.num_users]}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
