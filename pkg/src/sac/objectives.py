"""Training losses over encoded contexts.

The main term is a temperature-scaled contrastive loss asking the
context vector to score each hidden per-hop node above a shared pool of
negatives. A compression penalty discourages the context from encoding
the visible input tokens beyond what predicting the hidden nodes needs;
its weight is eta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .kernels import Tensor
from .sampler import ConfigError


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.2
    beta: float = 0.01
    eta: float = 0.1

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ConfigError(f"loss.temperature must be positive, got {self.temperature}")
        if self.beta < 0:
            raise ConfigError(f"loss.beta must be >= 0, got {self.beta}")
        if self.eta < 0:
            raise ConfigError(f"loss.eta must be >= 0, got {self.eta}")


def info_nce_multihop(
    c_p: Tensor, positives: list[Tensor], negatives: Tensor, temperature: float
) -> Tensor:
    """Sum over hops of -log p(positive | positive + negatives).

    Scores are dot products with the context, divided by temperature.
    Each hop's softmax runs over that hop's positive and the shared
    negatives; the log-sum-exp form keeps large scores finite.
    """
    if not positives:
        raise ValueError("at least one positive is required")
    if negatives.shape[0] < 1:
        raise ValueError("at least one negative is required")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    d = c_p.shape[-1]
    col = K.reshape(c_p, (d, 1))
    m = negatives.shape[0]
    neg_scores = K.scale(K.reshape(K.matmul(negatives, col), (m,)), 1.0 / temperature)
    if not np.isfinite(neg_scores.data).all():
        raise ValueError("negative scores are not finite")
    total = None
    for pos in positives:
        pos_score = K.scale(K.reshape(K.matmul(K.reshape(pos, (1, d)), col), (1,)), 1.0 / temperature)
        if not np.isfinite(pos_score.data).all():
            raise ValueError("positive score is not finite")
        term = K.sub(K.logsumexp(K.concat([pos_score, neg_scores])), K.reshape(pos_score, ()))
        total = term if total is None else K.add(total, term)
    return total


def nib_loss(
    c_p: Tensor, positives: list[Tensor], x_in: Tensor, w1: Tensor, w2: Tensor, beta: float
) -> Tensor:
    """Predictive score on hidden nodes minus beta times input retention.

    Evaluates sum_h softplus(-c' W1 n_h) - beta * sum_j softplus(-c' W2 x_j),
    the negative log-sigmoid form of both bilinear score sums. At
    all-zero scores this is N*ln2 - beta*K*ln2 for N positives and K
    input tokens.
    """
    if not positives:
        raise ValueError("at least one positive is required")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    d = c_p.shape[-1]
    row = K.reshape(c_p, (1, d))
    pos_mat = K.reshape(K.concat(positives), (len(positives), d))
    s_hidden = K.matmul(pos_mat, K.transpose(K.matmul(row, w1), (1, 0)))
    s_input = K.matmul(x_in, K.transpose(K.matmul(row, w2), (1, 0)))
    predictive = K.tsum(K.softplus(K.scale(s_hidden, -1.0)))
    retention = K.tsum(K.softplus(K.scale(s_input, -1.0)))
    return K.sub(predictive, K.scale(retention, beta))


def total_loss(vanilla: Tensor, nib: Tensor, eta: float) -> Tensor:
    """Contrastive term plus eta times the compression penalty."""
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    return K.add(vanilla, K.scale(nib, eta))
