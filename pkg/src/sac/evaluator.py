"""Full-ranking retrieval evaluation over the node embedding table.

Each test user's score against every item is the dot product of their
embedding rows. Items seen in training are excluded from the ranking by
default so the metrics measure recovery of held-out interactions only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .encoder import ModelParams
from .graph import BipartiteGraph
from .sampler import ConfigError


@dataclass(frozen=True)
class EvalConfig:
    k: int = 20
    exclude_train: bool = True
    user_batch: int = 256

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"eval.k must be >= 1, got {self.k}")
        if self.user_batch < 1:
            raise ConfigError(f"eval.user_batch must be >= 1, got {self.user_batch}")


@dataclass
class MetricsReport:
    recall_at_k: float
    ndcg_at_k: float
    users_evaluated: int
    k: int
    skipped_pairs: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "recall_at_k": self.recall_at_k,
                "ndcg_at_k": self.ndcg_at_k,
                "k": self.k,
                "users": self.users_evaluated,
                "skipped_pairs": self.skipped_pairs,
            }
        )


def score_items(user_vec: np.ndarray, item_matrix: np.ndarray) -> np.ndarray:
    """Dot-product score of one user against every item row."""
    if user_vec.ndim != 1 or item_matrix.ndim != 2 or item_matrix.shape[1] != len(user_vec):
        raise ValueError(
            f"incompatible shapes user={user_vec.shape} items={item_matrix.shape}"
        )
    return item_matrix @ user_vec


def top_k(scores: np.ndarray, k: int, excluded: np.ndarray | None = None) -> np.ndarray:
    """Indices of the k best scores, ties broken toward the lower index.

    Excluded indices never appear. Raises when fewer than k candidates
    remain; callers that want a shorter list clamp k first.
    """
    if excluded is not None and len(excluded) > 0:
        mask = np.ones(len(scores), dtype=bool)
        mask[excluded] = False
        candidates = np.flatnonzero(mask)
    else:
        candidates = np.arange(len(scores))
    if k > len(candidates):
        raise ValueError(f"k={k} exceeds {len(candidates)} candidates")
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order[:k]]


def recall_at_k(ranked: np.ndarray, relevant: set[int], k: int) -> float:
    """Fraction of the relevant set appearing in the first k ranks."""
    if not relevant:
        raise ValueError("relevant set is empty")
    hits = sum(1 for i in ranked[:k] if int(i) in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked: np.ndarray, relevant: set[int], k: int) -> float:
    """Binary-gain NDCG: hit at rank r earns 1/log2(r+1), normalized by
    the ideal ordering of min(|relevant|, k) hits."""
    if not relevant:
        raise ValueError("relevant set is empty")
    dcg = sum(1.0 / np.log2(i + 2.0) for i in range(min(k, len(ranked))) if int(ranked[i]) in relevant)
    idcg = sum(1.0 / np.log2(i + 2.0) for i in range(min(len(relevant), k)))
    return dcg / idcg


def evaluate(
    params: ModelParams,
    g: BipartiteGraph,
    test_users_raw: np.ndarray,
    test_items_raw: np.ndarray,
    cfg: EvalConfig,
) -> MetricsReport:
    """Mean recall and NDCG at cfg.k over users with held-out items.

    Test pairs referencing ids absent from the graph are counted in
    skipped_pairs and ignored. With exclude_train, training items are
    removed from each user's candidate list (and from the relevant set,
    should a test pair duplicate a training edge); k shrinks per user
    when fewer candidates remain.
    """
    cfg.validate()
    if len(test_users_raw) != len(test_items_raw):
        raise ValueError("test user and item arrays must have equal length")
    if params.num_nodes != g.num_nodes:
        raise ValueError(
            f"embedding table has {params.num_nodes} rows, graph has {g.num_nodes} nodes"
        )
    table = params.node_embeddings.data
    item_matrix = table[g.num_users :]

    u_pos = np.searchsorted(g.user_raw_ids, test_users_raw)
    i_pos = np.searchsorted(g.item_raw_ids, test_items_raw)
    u_ok = (u_pos < g.num_users) & (g.user_raw_ids[np.minimum(u_pos, g.num_users - 1)] == test_users_raw)
    i_ok = (i_pos < g.num_items) & (g.item_raw_ids[np.minimum(i_pos, g.num_items - 1)] == test_items_raw)
    known = u_ok & i_ok
    skipped = int((~known).sum())

    relevant_by_user: dict[int, set[int]] = {}
    for u, i in zip(u_pos[known].tolist(), i_pos[known].tolist()):
        relevant_by_user.setdefault(u, set()).add(i)

    recalls: list[float] = []
    ndcgs: list[float] = []
    users = sorted(relevant_by_user)
    for lo in range(0, len(users), cfg.user_batch):
        chunk = users[lo : lo + cfg.user_batch]
        scores = table[chunk] @ item_matrix.T
        for r, u in enumerate(chunk):
            relevant = relevant_by_user[u]
            excluded = None
            if cfg.exclude_train:
                excluded = g.neighbors_of(u) - g.num_users
                relevant = relevant - set(excluded.tolist())
                if not relevant:
                    continue
            n_candidates = g.num_items - (len(excluded) if excluded is not None else 0)
            k_user = min(cfg.k, n_candidates)
            if k_user < 1:
                continue
            ranked = top_k(scores[r], k_user, excluded)
            recalls.append(recall_at_k(ranked, relevant, k_user))
            ndcgs.append(ndcg_at_k(ranked, relevant, k_user))

    n_eval = len(recalls)
    return MetricsReport(
        recall_at_k=float(np.mean(recalls)) if n_eval else 0.0,
        ndcg_at_k=float(np.mean(ndcgs)) if n_eval else 0.0,
        users_evaluated=n_eval,
        k=cfg.k,
        skipped_pairs=skipped,
    )
