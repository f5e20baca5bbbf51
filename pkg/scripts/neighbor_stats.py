"""Print sampling diagnostics for an edge-list graph.

Shows the degree profile, per-hop occupancy of sampled subgraphs and
the graph-distance histogram of walk-based hard negatives. Useful when
picking fanouts and walk parameters for a new dataset.

Usage:
    python scripts/neighbor_stats.py data/toy_train.tsv --instances 500
"""

import argparse
from collections import Counter, deque

import numpy as np

from sac.graph import load_edge_list
from sac.negatives import WalkConfig, build_negative_set
from sac.sampler import SamplerConfig, mask_multi_hop, sample_subgraph


def bfs_distances(g, start):
    dist = np.full(g.num_nodes, -1, dtype=np.int64)
    dist[start] = 0
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in g.neighbors_of(v):
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(int(w))
    return dist


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("edges", help="user<TAB>item edge list")
    ap.add_argument("--hops", type=int, default=2)
    ap.add_argument("--fanout", type=int, default=6)
    ap.add_argument("--walk-p", type=float, default=1.0)
    ap.add_argument("--walk-q", type=float, default=0.5)
    ap.add_argument("--walk-length", type=int, default=10)
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    g = load_edge_list(args.edges)
    degrees = g.offsets[1:] - g.offsets[:-1]
    print(f"{g.num_users} users, {g.num_items} items, {g.offsets[-1] // 2} edges")
    print(
        f"degree min/median/max: {degrees.min()}/"
        f"{int(np.median(degrees))}/{degrees.max()}"
    )

    scfg = SamplerConfig(hops=args.hops, fanouts=(args.fanout,) * args.hops)
    wcfg = WalkConfig(
        p=args.walk_p,
        q=args.walk_q,
        length=args.walk_length,
        hard_count=4,
        easy_count=16,
    )
    print(f"expected walk depth: {wcfg.expected_depth():.2f}")

    rng = np.random.default_rng(args.seed)
    distinct = Counter()
    hard_depth = Counter()
    targets = rng.integers(0, g.num_nodes, size=args.instances)
    for target in targets.tolist():
        hop_lists = sample_subgraph(g, target, scfg, rng)
        if hop_lists is None:
            continue
        for h, hop in enumerate(hop_lists, start=1):
            distinct[h] += len(np.unique(hop))
        ms = mask_multi_hop(target, hop_lists, rng, None)
        negs = build_negative_set(g, target, wcfg, ms.subgraph_nodes, rng)
        dist = bfs_distances(g, target)
        for v in negs.hard.tolist():
            hard_depth[int(dist[v])] += 1

    n = args.instances
    for h in sorted(distinct):
        print(f"hop {h}: {distinct[h] / n:.1f} distinct nodes per instance")
    total = sum(hard_depth.values())
    if total:
        print("hard negative distance histogram:")
        for depth in sorted(hard_depth):
            share = hard_depth[depth] / total
            print(f"  {depth:>3}: {share:6.1%}  {'#' * int(50 * share)}")


if __name__ == "__main__":
    main()
