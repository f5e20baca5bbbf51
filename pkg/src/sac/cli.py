"""Command-line entry points.

Exit codes: 0 success, 2 configuration problem, 3 data problem
(missing or malformed files), 4 checkpoint/graph dimension mismatch.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np

from .config import load_run_config
from .evaluator import evaluate
from .graph import BipartiteGraph, GraphFormatError, load_edge_list, load_edge_pairs
from .negatives import build_negative_set
from .sampler import ConfigError, mask_multi_hop, sample_subgraph
from .synth import SbmSpec, generate_sbm, holdout_split, write_edges
from .trainer import CheckpointError, checkpoint_load, train

EXPORT_MAGIC = b"SACE"
EXPORT_VERSION = 1


class DimensionMismatch(RuntimeError):
    """Checkpoint and graph disagree on the node space."""


def _load_graph(path: str | None, what: str) -> BipartiteGraph:
    if not path:
        raise ConfigError(f"paths.{what} is required for this command")
    return load_edge_list(path)


def _check_same_nodes(ck, g: BipartiteGraph) -> None:
    if len(ck.user_raw_ids) != g.num_users or len(ck.item_raw_ids) != g.num_items:
        raise DimensionMismatch(
            f"checkpoint holds {len(ck.user_raw_ids)} users / {len(ck.item_raw_ids)} items, "
            f"graph has {g.num_users} / {g.num_items}"
        )
    if not (
        np.array_equal(ck.user_raw_ids, g.user_raw_ids)
        and np.array_equal(ck.item_raw_ids, g.item_raw_ids)
    ):
        raise DimensionMismatch("checkpoint id mapping does not match the graph")


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, seed_override=args.seed)
    g = _load_graph(cfg.train_edges, "train_edges")
    params = state = None
    start_epoch = global_step = 0
    if args.resume:
        ck = checkpoint_load(args.resume)
        _check_same_nodes(ck, g)
        params, state = ck.params, ck.state
        start_epoch, global_step = ck.epochs_done, ck.global_step

    log_fh = None
    if cfg.checkpoint_dir:
        Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
        mode = "a" if args.resume else "w"
        log_fh = open(Path(cfg.checkpoint_dir) / "training_log.jsonl", mode, encoding="utf-8")

    def on_step(rec):
        line = json.dumps(
            {
                "step": rec.step,
                "vanilla": rec.vanilla,
                "nib": rec.nib,
                "total": rec.total,
                "seconds": rec.seconds,
            }
        )
        print(line)
        if log_fh:
            log_fh.write(line + "\n")
            log_fh.flush()

    try:
        result = train(
            g,
            cfg.train,
            params=params,
            state=state,
            start_epoch=start_epoch,
            global_step=global_step,
            on_step=on_step,
            checkpoint_dir=cfg.checkpoint_dir,
        )
    finally:
        if log_fh:
            log_fh.close()
    last = result.records[-1] if result.records else None
    print(
        f"trained epochs {start_epoch + 1}..{cfg.train.epochs}, "
        f"{len(result.records)} steps"
        + (f", final total loss {last.total:.6f}" if last else "")
    )
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config, seed_override=args.seed)
    g = _load_graph(cfg.train_edges, "train_edges")
    if not cfg.test_edges:
        raise ConfigError("paths.test_edges is required for evaluate")
    test_u, test_i = load_edge_pairs(cfg.test_edges, allow_empty=True)
    ck = checkpoint_load(args.checkpoint)
    _check_same_nodes(ck, g)
    if ck.params.dim != cfg.train.encoder.dim:
        raise DimensionMismatch(
            f"checkpoint embeds dim {ck.params.dim}, config says {cfg.train.encoder.dim}"
        )
    if len(test_u) == 0:
        print(f"warning: {cfg.test_edges} holds no interactions", file=sys.stderr)
    report = evaluate(ck.params, g, test_u, test_i, cfg.eval)
    print(report.to_json())
    return 0


def cmd_export(args) -> int:
    out_path = args.out
    if out_path is None and args.config:
        out_path = load_run_config(args.config).export_path
    if out_path is None:
        raise ConfigError("no output path: pass --out or set paths.export_path")
    ck = checkpoint_load(args.checkpoint)
    table = ck.params.node_embeddings.data
    out = Path(out_path)
    if args.format == "tsv":
        raw = np.concatenate([ck.user_raw_ids, ck.item_raw_ids])
        with open(out, "w", encoding="utf-8") as fh:
            for rid, vec in zip(raw.tolist(), table):
                fh.write(str(rid))
                for v in vec.tolist():
                    fh.write(f"\t{v:.9g}")
                fh.write("\n")
    else:
        payload = table.astype("<f4")
        with open(out, "wb") as fh:
            fh.write(EXPORT_MAGIC)
            fh.write(struct.pack("<IQI", EXPORT_VERSION, table.shape[0], table.shape[1]))
            fh.write(payload.tobytes())
    print(f"wrote {table.shape[0]} x {table.shape[1]} embeddings to {out}")
    return 0


def cmd_synth(args) -> int:
    spec = SbmSpec(
        num_users=args.users,
        num_items=args.items,
        blocks=args.blocks,
        p_in=args.p_in,
        p_out=args.p_out,
    )
    try:
        spec.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    rng = np.random.default_rng(args.seed)
    users, items, ub, ib = generate_sbm(spec, rng)
    if len(users) == 0:
        raise ConfigError("generated zero edges; raise p_in/p_out or sizes")
    if args.test_out:
        tru, tri, teu, tei = holdout_split(users, items, args.test_fraction, rng)
        write_edges(args.out, tru, tri)
        write_edges(args.test_out, teu, tei)
        print(f"wrote {len(tru)} train edges to {args.out}, {len(teu)} test edges to {args.test_out}")
    else:
        write_edges(args.out, users, items)
        print(f"wrote {len(users)} edges to {args.out}")
    meta = {
        "num_users": spec.num_users,
        "num_items": spec.num_items,
        "blocks": spec.blocks,
        "p_in": spec.p_in,
        "p_out": spec.p_out,
        "seed": args.seed,
        "user_blocks": ub.tolist(),
        "item_blocks": ib.tolist(),
    }
    meta_path = Path(args.out).with_suffix(Path(args.out).suffix + ".meta.json")
    meta_path.write_text(json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    return 0


def cmd_sample_debug(args) -> int:
    cfg = load_run_config(args.config, seed_override=args.seed)
    g = _load_graph(cfg.train_edges, "train_edges")
    raw_ids = g.user_raw_ids if args.kind == "user" else g.item_raw_ids
    pos = int(np.searchsorted(raw_ids, args.target))
    if pos >= len(raw_ids) or raw_ids[pos] != args.target:
        raise GraphFormatError(f"{args.kind} id {args.target} is not in the graph")
    node = pos if args.kind == "user" else g.num_users + pos

    def name(v: int) -> str:
        side = "i" if g.is_item(v) else "u"
        return f"{side}:{g.raw_id(v)}"

    rng = np.random.default_rng(cfg.seed)
    hop_lists = sample_subgraph(g, node, cfg.train.sampler, rng)
    if hop_lists is None:
        print(f"{name(node)} is isolated: skip-instance")
        return 0
    ms = mask_multi_hop(node, hop_lists, rng, cfg.train.sampler.masked_hops)
    negs = build_negative_set(g, node, cfg.train.walk, ms.subgraph_nodes, rng)
    dump = {
        "target": name(node),
        "hops": [[name(int(v)) for v in hop] for hop in hop_lists],
        "masked_positives": [[name(n), h] for n, h in ms.masked_positives],
        "kept_tokens": [[name(n), h] for n, h in ms.kept_tokens],
        "hard_negatives": [name(int(v)) for v in negs.hard],
        "easy_negative_count": int(len(negs.easy)),
    }
    print(json.dumps(dump, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sac",
        description="Self-supervised bipartite graph embeddings via masked "
        "multi-hop neighbor prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train embeddings from an edge list")
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="rank held-out items with a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="dump the embedding table")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None, help="fall back to paths.export_path")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("tsv", "binary"), default="tsv")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("synth", help="generate a synthetic blocked bipartite graph")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--p-in", type=float, required=True, dest="p_in")
    p.add_argument("--p-out", type=float, required=True, dest="p_out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--test-out", default=None, help="also write a per-user holdout")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sample-debug", help="dump one masked subgraph instance")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--target", type=int, required=True, help="raw id of the target")
    p.add_argument("--kind", choices=("user", "item"), default="user")
    p.set_defaults(func=cmd_sample_debug)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (GraphFormatError, CheckpointError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except DimensionMismatch as e:
        print(f"dimension mismatch: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
