"""Transformer context encoder over flattened subgraph token sequences.

Each token is a node embedding plus a hop-position embedding. A stack
of post-norm self-attention blocks mixes the sequence and the output
row of the target token (always index 0) is the context vector used by
the training objectives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .kernels import Tensor
from .sampler import ConfigError, TokenSequence

MAX_LAYERS = 6


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 128
    layers: int = 2
    heads: int = 4
    ffn_mult: int = 4

    def validate(self) -> None:
        if self.dim < 1:
            raise ConfigError(f"encoder.dim must be >= 1, got {self.dim}")
        if not 1 <= self.layers <= MAX_LAYERS:
            raise ConfigError(f"encoder.layers must lie in [1, {MAX_LAYERS}], got {self.layers}")
        if self.heads < 1 or self.dim % self.heads != 0:
            raise ConfigError(
                f"encoder.heads must divide dim, got heads={self.heads} dim={self.dim}"
            )
        if self.ffn_mult < 1:
            raise ConfigError(f"encoder.ffn_mult must be >= 1, got {self.ffn_mult}")


@dataclass
class LayerParams:
    """Weights of one attention + feed-forward block (post-norm)."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln1_gain: Tensor
    ln1_shift: Tensor
    ff1_w: Tensor
    ff1_b: Tensor
    ff2_w: Tensor
    ff2_b: Tensor
    ln2_gain: Tensor
    ln2_shift: Tensor

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.{name}", getattr(self, name)) for name in self.__dataclass_fields__]


@dataclass
class ModelParams:
    """All trainable state: embedding tables, block weights, score maps.

    nib_w1 scores context against hidden positives, nib_w2 scores it
    against the visible input tokens; both are bilinear-form matrices
    used only by the compression penalty.
    """

    config: EncoderConfig
    node_embeddings: Tensor
    hop_positions: Tensor
    layers: list[LayerParams] = field(default_factory=list)
    nib_w1: Tensor | None = None
    nib_w2: Tensor | None = None

    @property
    def dim(self) -> int:
        return self.node_embeddings.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.node_embeddings.shape[0]

    @property
    def max_hop(self) -> int:
        return self.hop_positions.shape[0] - 1

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """Stable (name, tensor) listing; checkpoint and optimizer order."""
        out = [("node_embeddings", self.node_embeddings), ("hop_positions", self.hop_positions)]
        for i, layer in enumerate(self.layers):
            out.extend(layer.named(f"layers.{i}"))
        out.append(("nib_w1", self.nib_w1))
        out.append(("nib_w2", self.nib_w2))
        return out

    def validate(self) -> None:
        d = self.config.dim
        if self.node_embeddings.shape[1] != d or self.hop_positions.shape[1] != d:
            raise ValueError("embedding width does not match configured dim")
        if len(self.layers) != self.config.layers:
            raise ValueError("layer count does not match config")
        for name, t in self.named_tensors():
            if not np.isfinite(t.data).all():
                raise ValueError(f"parameter {name} contains non-finite values")


def embed_lookup(params: ModelParams, ids) -> Tensor:
    """Rows of the node embedding table, recorded on the active tape."""
    return K.lookup(params.node_embeddings, ids)


def _block(x: Tensor, layer: LayerParams, heads: int) -> Tensor:
    s, d = x.shape
    dh = d // heads
    q = K.linear(x, layer.wq, layer.bq)
    k = K.linear(x, layer.wk, layer.bk)
    v = K.linear(x, layer.wv, layer.bv)
    # [s, d] -> [heads, s, dh]
    q = K.transpose(K.reshape(q, (s, heads, dh)), (1, 0, 2))
    k = K.transpose(K.reshape(k, (s, heads, dh)), (1, 0, 2))
    v = K.transpose(K.reshape(v, (s, heads, dh)), (1, 0, 2))
    mixed = K.scaled_dot_attention(q, k, v)
    mixed = K.reshape(K.transpose(mixed, (1, 0, 2)), (s, d))
    x = K.layer_norm(K.add(x, K.linear(mixed, layer.wo, layer.bo)), layer.ln1_gain, layer.ln1_shift)
    hidden = K.relu(K.linear(x, layer.ff1_w, layer.ff1_b))
    ff = K.linear(hidden, layer.ff2_w, layer.ff2_b)
    return K.layer_norm(K.add(x, ff), layer.ln2_gain, layer.ln2_shift)


def encode(params: ModelParams, seq: TokenSequence) -> Tensor:
    """Context vector for a token sequence: encoded row of the target.

    Requires a non-empty sequence whose hop indices fit the position
    table; the target must sit at index 0. Tokens after the target are
    reordered to a canonical (hop, id) order first, so the coding is a
    function of the token multiset alone; without this, summation order
    inside attention would leak the caller's draw order into low bits.
    """
    if len(seq) == 0:
        raise ValueError("cannot encode an empty token sequence")
    if seq.hop_indices[0] != 0:
        raise ValueError("sequence must start with the hop-0 target token")
    if int(seq.hop_indices.max()) > params.max_hop:
        raise ValueError(
            f"hop index {int(seq.hop_indices.max())} exceeds position table ({params.max_hop})"
        )
    order = np.lexsort((seq.node_ids[1:], seq.hop_indices[1:])) + 1
    node_ids = np.concatenate([seq.node_ids[:1], seq.node_ids[order]])
    hop_indices = np.concatenate([seq.hop_indices[:1], seq.hop_indices[order]])
    x = K.add(
        K.lookup(params.node_embeddings, node_ids),
        K.lookup(params.hop_positions, hop_indices),
    )
    for layer in params.layers:
        x = _block(x, layer, params.config.heads)
    return K.row(x, 0)
