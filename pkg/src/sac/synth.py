"""Synthetic bipartite graphs with planted block structure.

Users and items are divided into aligned groups; within-group edges
appear with probability p_in and cross-group edges with p_out. With
p_in >> p_out the planted groups are recoverable, which makes these
graphs useful as smoke-test data where ranking quality has a known
signal to find.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ROW_CHUNK = 1024


@dataclass(frozen=True)
class SbmSpec:
    num_users: int
    num_items: int
    blocks: int
    p_in: float
    p_out: float

    def validate(self) -> None:
        if self.num_users < 1 or self.num_items < 1:
            raise ValueError("num_users and num_items must be >= 1")
        if not 1 <= self.blocks <= min(self.num_users, self.num_items):
            raise ValueError(f"blocks must lie in [1, min(users, items)], got {self.blocks}")
        for name, p in (("p_in", self.p_in), ("p_out", self.p_out)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")


def block_assignment(count: int, blocks: int) -> np.ndarray:
    """Contiguous, nearly equal block labels for ids 0..count-1."""
    return (np.arange(count, dtype=np.int64) * blocks) // count


def generate_sbm(
    spec: SbmSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample edges; returns (user_ids, item_ids, user_blocks, item_blocks).

    Edge order is user-major and deterministic for a given generator
    state. Ids are dense 0-based on each side.
    """
    spec.validate()
    ub = block_assignment(spec.num_users, spec.blocks)
    ib = block_assignment(spec.num_items, spec.blocks)
    users: list[np.ndarray] = []
    items: list[np.ndarray] = []
    for lo in range(0, spec.num_users, _ROW_CHUNK):
        hi = min(lo + _ROW_CHUNK, spec.num_users)
        same = ub[lo:hi, None] == ib[None, :]
        prob = np.where(same, spec.p_in, spec.p_out)
        hit_u, hit_i = np.nonzero(rng.random(prob.shape) < prob)
        users.append(hit_u + lo)
        items.append(hit_i)
    return (
        np.concatenate(users).astype(np.int64),
        np.concatenate(items).astype(np.int64),
        ub,
        ib,
    )


def holdout_split(
    users: np.ndarray, items: np.ndarray, test_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-user split into train and test interaction lists.

    Each user with at least two interactions contributes
    max(1, floor(degree * test_fraction)) test edges; single-interaction
    users stay entirely in train so no user becomes isolated.
    Returns (train_users, train_items, test_users, test_items).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if len(users) != len(items):
        raise ValueError("users and items must have equal length")
    order = np.lexsort((items, users))
    users, items = users[order], items[order]
    is_test = np.zeros(len(users), dtype=bool)
    uniq, starts = np.unique(users, return_index=True)
    bounds = np.append(starts, len(users))
    for j in range(len(uniq)):
        lo, hi = int(bounds[j]), int(bounds[j + 1])
        deg = hi - lo
        if deg < 2:
            continue
        n_test = max(1, int(deg * test_fraction))
        if n_test >= deg:
            n_test = deg - 1
        picks = rng.choice(deg, size=n_test, replace=False)
        is_test[lo + picks] = True
    return users[~is_test], items[~is_test], users[is_test], items[is_test]


def write_edges(path: str, users: np.ndarray, items: np.ndarray) -> None:
    """Tab-separated user-item pairs, one per line, in array order."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in zip(users.tolist(), items.tolist()):
            fh.write(f"{u}\t{i}\n")
