"""Masked multi-hop subgraph instances around a target node.

An instance is built in three steps: draw fixed-fanout per-hop node
lists rooted at the target, hide one node per hop as the prediction
positive, and flatten the remainder into a token sequence carrying
hop-position indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import BipartiteGraph

MAX_FANOUT_PRODUCT = 512


class ConfigError(ValueError):
    """A configuration value violates a module invariant."""


@dataclass(frozen=True)
class SamplerConfig:
    """Hop count and per-hop sample sizes.

    `fanouts[h-1]` nodes are drawn at hop h; the product of fanouts is
    capped so subgraphs stay small. `masked_hops` limits masking to hops
    1..masked_hops (None masks every hop); dropping it to 1 gives the
    single-hop ablation while keeping the full context.
    """

    hops: int = 2
    fanouts: tuple[int, ...] = (16, 16)
    masked_hops: int | None = None

    def validate(self) -> None:
        if self.hops < 1:
            raise ConfigError(f"sampler.hops must be >= 1, got {self.hops}")
        if len(self.fanouts) != self.hops:
            raise ConfigError(
                f"sampler.fanouts needs {self.hops} entries, got {len(self.fanouts)}"
            )
        if any(s < 1 for s in self.fanouts):
            raise ConfigError(f"sampler.fanouts must all be >= 1, got {self.fanouts}")
        if math.prod(self.fanouts) > MAX_FANOUT_PRODUCT:
            raise ConfigError(
                f"product of fanouts {math.prod(self.fanouts)} exceeds {MAX_FANOUT_PRODUCT}"
            )
        if self.masked_hops is not None and not 1 <= self.masked_hops <= self.hops:
            raise ConfigError(
                f"sampler.masked_hops must lie in [1, {self.hops}], got {self.masked_hops}"
            )


@dataclass
class MaskedSubgraph:
    """One training instance.

    kept_tokens is hop-major with the target first as (target, 0);
    masked_positives holds one (node, hop) per masked hop. No masked
    (node, hop) pair also occurs in kept_tokens: when replacement
    sampling duplicated the masked node inside its hop, every copy is
    dropped. subgraph_nodes covers target, kept and masked nodes.
    """

    target: int
    kept_tokens: list[tuple[int, int]]
    masked_positives: list[tuple[int, int]]
    subgraph_nodes: set[int] = field(repr=False)


@dataclass(frozen=True)
class TokenSequence:
    node_ids: np.ndarray
    hop_indices: np.ndarray

    def __len__(self) -> int:
        return len(self.node_ids)


def sample_subgraph(
    g: BipartiteGraph, target: int, cfg: SamplerConfig, rng: np.random.Generator
) -> list[np.ndarray] | None:
    """Draw per-hop node lists rooted at target; None signals skip-instance.

    Hop 1 takes fanouts[0] uniform draws from the target's neighbors,
    without replacement when the degree allows it. Each deeper entry
    picks a uniform parent from the previous hop and then a uniform
    neighbor of that parent. Returns one array per realized hop.
    """
    nbrs = g.neighbors_of(target)
    if len(nbrs) == 0:
        return None
    s1 = cfg.fanouts[0]
    if len(nbrs) >= s1:
        hop1 = rng.choice(nbrs, size=s1, replace=False)
    else:
        hop1 = nbrs[rng.integers(0, len(nbrs), size=s1)]
    hops = [hop1.astype(np.int64)]
    for s_h in cfg.fanouts[1:]:
        prev = hops[-1]
        parents = prev[rng.integers(0, len(prev), size=s_h)]
        start = g.offsets[parents]
        deg = g.offsets[parents + 1] - start
        live = deg > 0
        if not live.all():
            # unreachable on symmetric graphs; kept so a corrupt store fails soft
            start, deg = start[live], deg[live]
        if len(start) == 0:
            break
        hops.append(g.neighbors[start + rng.integers(0, deg)])
    return hops


def mask_multi_hop(
    target: int,
    hop_lists: list[np.ndarray],
    rng: np.random.Generator,
    masked_hops: int | None = None,
) -> MaskedSubgraph:
    """Hide one uniformly chosen node per hop and keep the rest.

    With masked_hops set, hops beyond it keep all their nodes and
    contribute no positive.
    """
    if not hop_lists or any(len(h) == 0 for h in hop_lists):
        raise ValueError("every realized hop needs at least one node")
    limit = len(hop_lists) if masked_hops is None else min(masked_hops, len(hop_lists))
    kept: list[tuple[int, int]] = [(int(target), 0)]
    masked: list[tuple[int, int]] = []
    nodes: set[int] = {int(target)}
    for h, hop_nodes in enumerate(hop_lists, start=1):
        nodes.update(int(n) for n in hop_nodes)
        if h <= limit:
            pos = rng.integers(0, len(hop_nodes))
            masked_node = int(hop_nodes[pos])
            masked.append((masked_node, h))
            kept.extend((int(n), h) for n in hop_nodes if int(n) != masked_node)
        else:
            kept.extend((int(n), h) for n in hop_nodes)
    return MaskedSubgraph(
        target=int(target), kept_tokens=kept, masked_positives=masked, subgraph_nodes=nodes
    )


def flatten(ms: MaskedSubgraph) -> TokenSequence:
    """Token sequence: target first, then kept nodes hop-major."""
    ids = np.fromiter((n for n, _ in ms.kept_tokens), dtype=np.int64, count=len(ms.kept_tokens))
    hops = np.fromiter((h for _, h in ms.kept_tokens), dtype=np.int64, count=len(ms.kept_tokens))
    return TokenSequence(node_ids=ids, hop_indices=hops)
