"""Training loop: instance construction, loss evaluation, Adagrad updates.

Every batch builds one masked-subgraph instance per target, runs the
encoder and losses on a per-instance tape, averages gradients across
the batch and applies a single Adagrad step. All randomness is derived
from (seed, stream, epoch, step) tuples, so a run is reproducible from
its config alone and a resumed run needs only the epoch counter.
"""

from __future__ import annotations

import struct
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels as K
from .encoder import EncoderConfig, LayerParams, ModelParams, encode
from .graph import BipartiteGraph
from .kernels import Tensor
from .negatives import WalkConfig, build_negative_set
from .objectives import LossConfig, info_nce_multihop, nib_loss, total_loss
from .sampler import ConfigError, SamplerConfig, flatten, mask_multi_hop, sample_subgraph

CHECKPOINT_MAGIC = b"SACK"
CHECKPOINT_VERSION = 1

# rng stream tags, combined with the seed so each use draws independently
_STREAM_INIT = 0
_STREAM_SHUFFLE = 1
_STREAM_BATCH = 2


class NonFiniteGradient(RuntimeError):
    """A gradient contained NaN or infinity; the step was rejected."""


class EmptyBatchError(RuntimeError):
    """No target in the batch produced a usable instance."""


class CheckpointError(RuntimeError):
    """The file is not a readable checkpoint."""


@dataclass(frozen=True)
class TrainConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    walk: WalkConfig = field(default_factory=WalkConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    batch_size: int = 1024
    learning_rate: float = 0.001
    epochs: int = 1
    seed: int = 0
    checkpoint_interval: int = 1
    items_as_targets: bool = False
    workers: int = 1
    dtype: str = "float32"

    def validate(self) -> None:
        self.sampler.validate()
        self.walk.validate()
        self.loss.validate()
        self.encoder.validate()
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"train.learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.checkpoint_interval < 0:
            raise ConfigError("train.checkpoint_interval must be >= 0")
        if self.workers < 1:
            raise ConfigError(f"train.workers must be >= 1, got {self.workers}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"train.dtype must be float32 or float64, got {self.dtype}")
        depth = self.walk.expected_depth()
        if depth <= self.sampler.hops:
            warnings.warn(
                f"expected walk depth {depth:.2f} does not exceed the {self.sampler.hops} "
                "sampled hops; hard negatives will often land inside the subgraph",
                stacklevel=2,
            )

    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


def xavier_init(shape, rng: np.random.Generator, dtype=np.float32, embedding_rows=False) -> Tensor:
    """Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).

    Embedding tables set embedding_rows so each row is treated as its
    own (1, dim) parameter when computing the fan.
    """
    if len(shape) != 2:
        raise ValueError(f"xavier_init needs a 2-d shape, got {shape}")
    fan_in, fan_out = (1, shape[1]) if embedding_rows else shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))


def init_params(
    num_nodes: int,
    hops: int,
    cfg: EncoderConfig,
    rng: np.random.Generator,
    dtype=np.float32,
) -> ModelParams:
    cfg.validate()
    d = cfg.dim

    def zeros(*shape):
        return Tensor(np.zeros(shape, dtype=dtype))

    def ones(*shape):
        return Tensor(np.ones(shape, dtype=dtype))

    layers = []
    for _ in range(cfg.layers):
        layers.append(
            LayerParams(
                wq=xavier_init((d, d), rng, dtype),
                bq=zeros(d),
                wk=xavier_init((d, d), rng, dtype),
                bk=zeros(d),
                wv=xavier_init((d, d), rng, dtype),
                bv=zeros(d),
                wo=xavier_init((d, d), rng, dtype),
                bo=zeros(d),
                ln1_gain=ones(d),
                ln1_shift=zeros(d),
                ff1_w=xavier_init((d, cfg.ffn_mult * d), rng, dtype),
                ff1_b=zeros(cfg.ffn_mult * d),
                ff2_w=xavier_init((cfg.ffn_mult * d, d), rng, dtype),
                ff2_b=zeros(d),
                ln2_gain=ones(d),
                ln2_shift=zeros(d),
            )
        )
    return ModelParams(
        config=cfg,
        node_embeddings=xavier_init((num_nodes, d), rng, dtype, embedding_rows=True),
        hop_positions=xavier_init((hops + 1, d), rng, dtype, embedding_rows=True),
        layers=layers,
        nib_w1=xavier_init((d, d), rng, dtype),
        nib_w2=xavier_init((d, d), rng, dtype),
    )


@dataclass
class AdagradState:
    """Per-parameter squared-gradient accumulators, keyed by tensor name."""

    accumulators: dict[str, np.ndarray]
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdagradState":
        return cls({name: np.zeros_like(t.data) for name, t in params.named_tensors()})


def adagrad_step(params: ModelParams, state: AdagradState, lr: float) -> None:
    """theta -= lr * g / (sqrt(acc) + eps) with acc += g^2, all in place.

    Rejects the whole step before touching any state if any gradient is
    non-finite.
    """
    named = params.named_tensors()
    for name, t in named:
        if t.grad is not None and not np.isfinite(t.grad).all():
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    for name, t in named:
        g = t.grad
        if g is None:
            continue
        acc = state.accumulators[name]
        acc += g * g
        t.data -= lr * g / (np.sqrt(acc) + state.eps)


@dataclass
class StepReport:
    vanilla: float
    nib: float
    total: float
    instances: int
    skipped: int
    rejected: bool = False


@dataclass
class StepRecord:
    step: int
    vanilla: float
    nib: float
    total: float
    seconds: float


@dataclass
class TrainResult:
    params: ModelParams
    state: AdagradState
    records: list[StepRecord]


def _build_instance(g: BipartiteGraph, target: int, cfg: TrainConfig, rng: np.random.Generator):
    hop_lists = sample_subgraph(g, target, cfg.sampler, rng)
    if hop_lists is None:
        return None
    ms = mask_multi_hop(target, hop_lists, rng, cfg.sampler.masked_hops)
    negs = build_negative_set(g, target, cfg.walk, ms.subgraph_nodes, rng)
    pos_ids = np.fromiter((n for n, _ in ms.masked_positives), dtype=np.int64)
    return flatten(ms), pos_ids, negs.combined


def _forward(g: BipartiteGraph, params: ModelParams, cfg: TrainConfig, target: int, seed):
    """Sample and run one instance on its own tape; None on skip."""
    rng = np.random.default_rng(seed)
    built = _build_instance(g, target, cfg, rng)
    if built is None:
        return None
    seq, pos_ids, neg_ids = built
    with K.Tape() as tape:
        c_p = encode(params, seq)
        pos_rows = K.lookup(params.node_embeddings, pos_ids)
        positives = [K.row(pos_rows, j) for j in range(len(pos_ids))]
        negatives = K.lookup(params.node_embeddings, neg_ids)
        vanilla = info_nce_multihop(c_p, positives, negatives, cfg.loss.temperature)
        if cfg.loss.eta > 0:
            x_in = K.lookup(params.node_embeddings, seq.node_ids)
            nib = nib_loss(c_p, positives, x_in, params.nib_w1, params.nib_w2, cfg.loss.beta)
            total = total_loss(vanilla, nib, cfg.loss.eta)
        else:
            nib = None
            total = vanilla
    return tape, vanilla, nib, total


def train_step(
    g: BipartiteGraph,
    params: ModelParams,
    state: AdagradState,
    targets: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> StepReport:
    """One optimizer step over a batch of target nodes.

    Forward passes may run on worker threads; backward passes replay
    serially in batch order so gradient accumulation order, and with it
    the result, is identical to the single-threaded path. A non-finite
    gradient rejects the update but still reports the batch losses.
    """
    if len(targets) == 0:
        raise EmptyBatchError("empty target batch")
    seeds = rng.integers(0, 2**63, size=len(targets))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(
                pool.map(lambda ts: _forward(g, params, cfg, int(ts[0]), ts[1]), zip(targets, seeds))
            )
    else:
        results = [_forward(g, params, cfg, int(t), s) for t, s in zip(targets, seeds)]

    sum_v = sum_n = sum_t = 0.0
    n_ok = 0
    for res in results:
        if res is None:
            continue
        tape, vanilla, nib, total = res
        tape.backward(total)
        sum_v += K.value(vanilla)
        sum_n += K.value(nib) if nib is not None else 0.0
        sum_t += K.value(total)
        n_ok += 1
    if n_ok == 0:
        raise EmptyBatchError("every target in the batch was skipped")

    for _, t in params.named_tensors():
        if t.grad is not None:
            t.grad /= n_ok
    rejected = False
    try:
        adagrad_step(params, state, cfg.learning_rate)
    except NonFiniteGradient:
        rejected = True
    for _, t in params.named_tensors():
        t.zero_grad()
    return StepReport(
        vanilla=sum_v / n_ok,
        nib=sum_n / n_ok,
        total=sum_t / n_ok,
        instances=n_ok,
        skipped=len(targets) - n_ok,
        rejected=rejected,
    )


def target_pool(g: BipartiteGraph, items_as_targets: bool) -> np.ndarray:
    """Non-isolated users, plus items when items_as_targets is set."""
    degrees = np.diff(g.offsets)
    limit = g.num_nodes if items_as_targets else g.num_users
    ids = np.arange(limit, dtype=np.int64)
    return ids[degrees[:limit] > 0]


def train(
    g: BipartiteGraph,
    cfg: TrainConfig,
    *,
    params: ModelParams | None = None,
    state: AdagradState | None = None,
    start_epoch: int = 0,
    global_step: int = 0,
    on_step=None,
    checkpoint_dir: str | None = None,
) -> TrainResult:
    """Run epochs start_epoch..cfg.epochs-1, returning final state.

    Pass params/state/start_epoch from a loaded checkpoint to resume;
    the derived rng streams make the continuation identical to a run
    that never stopped. on_step receives each StepRecord as it happens.
    """
    cfg.validate()
    dtype = cfg.np_dtype()
    if params is None:
        params = init_params(
            g.num_nodes,
            cfg.sampler.hops,
            cfg.encoder,
            np.random.default_rng([cfg.seed, _STREAM_INIT]),
            dtype,
        )
    if state is None:
        state = AdagradState.for_params(params)
    pool = target_pool(g, cfg.items_as_targets)
    if len(pool) == 0:
        raise EmptyBatchError("graph has no usable target nodes")
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    records: list[StepRecord] = []
    for epoch in range(start_epoch, cfg.epochs):
        order = np.random.default_rng([cfg.seed, _STREAM_SHUFFLE, epoch]).permutation(pool)
        for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
            batch = order[lo : lo + cfg.batch_size]
            batch_rng = np.random.default_rng([cfg.seed, _STREAM_BATCH, epoch, b])
            t0 = time.perf_counter()
            rep = train_step(g, params, state, batch, cfg, batch_rng)
            if rep.rejected:
                warnings.warn(f"step {global_step}: non-finite gradient, update skipped")
            rec = StepRecord(
                step=global_step,
                vanilla=rep.vanilla,
                nib=rep.nib,
                total=rep.total,
                seconds=time.perf_counter() - t0,
            )
            records.append(rec)
            if on_step is not None:
                on_step(rec)
            global_step += 1
        done = epoch + 1
        if ckpt_dir and (
            done == cfg.epochs
            or (cfg.checkpoint_interval > 0 and done % cfg.checkpoint_interval == 0)
        ):
            checkpoint_save(ckpt_dir / f"checkpoint-{done:04d}.bin", params, state, g, done, global_step)
    return TrainResult(params=params, state=state, records=records)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIQQIIIIIQQd")
_DTYPE_CODES = {0: np.float32, 1: np.float64}


@dataclass
class Checkpoint:
    params: ModelParams
    state: AdagradState
    user_raw_ids: np.ndarray
    item_raw_ids: np.ndarray
    epochs_done: int
    global_step: int


def checkpoint_save(
    path,
    params: ModelParams,
    state: AdagradState,
    g: BipartiteGraph,
    epochs_done: int,
    global_step: int,
) -> None:
    """Single-file binary snapshot of parameters, optimizer and id maps.

    Little-endian throughout. After the header and the two raw-id
    arrays, each tensor in named_tensors order is written as its data
    payload immediately followed by its optimizer accumulator. Shapes
    are reconstructed from the header counts.
    """
    cfg = params.config
    dtype = params.node_embeddings.dtype
    code = 1 if dtype == np.float64 else 0
    parts = [
        _HEADER.pack(
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
            code,
            len(g.user_raw_ids),
            len(g.item_raw_ids),
            cfg.dim,
            params.max_hop,
            cfg.layers,
            cfg.heads,
            cfg.ffn_mult,
            epochs_done,
            global_step,
            state.eps,
        ),
        g.user_raw_ids.astype("<i8").tobytes(),
        g.item_raw_ids.astype("<i8").tobytes(),
    ]
    for name, t in params.named_tensors():
        parts.append(np.ascontiguousarray(t.data, dtype=t.data.dtype.newbyteorder("<")).tobytes())
        parts.append(
            np.ascontiguousarray(
                state.accumulators[name], dtype=state.accumulators[name].dtype.newbyteorder("<")
            ).tobytes()
        )
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def checkpoint_load(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint header")
    (
        magic,
        version,
        code,
        num_users,
        num_items,
        dim,
        max_hop,
        layers,
        heads,
        ffn_mult,
        epochs_done,
        global_step,
        eps,
    ) = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if code not in _DTYPE_CODES:
        raise CheckpointError(f"{path}: unknown dtype code {code}")
    dtype = _DTYPE_CODES[code]

    off = _HEADER.size

    def take(count, dt):
        nonlocal off
        dt = np.dtype(dt)
        end = off + count * dt.itemsize
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint")
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=off).copy()
        off = end
        return arr

    user_raw_ids = take(num_users, "<i8")
    item_raw_ids = take(num_items, "<i8")
    enc_cfg = EncoderConfig(dim=dim, layers=layers, heads=heads, ffn_mult=ffn_mult)
    params = init_params(
        num_users + num_items, max_hop, enc_cfg, np.random.default_rng(0), dtype
    )
    accs: dict[str, np.ndarray] = {}
    fdt = np.dtype(dtype).newbyteorder("<")
    for name, t in params.named_tensors():
        t.data = take(t.data.size, fdt).astype(dtype).reshape(t.data.shape)
        accs[name] = take(t.data.size, fdt).astype(dtype).reshape(t.data.shape)
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    return Checkpoint(
        params=params,
        state=AdagradState(accumulators=accs, eps=eps),
        user_raw_ids=user_raw_ids,
        item_raw_ids=item_raw_ids,
        epochs_done=int(epochs_done),
        global_step=int(global_step),
    )
