"""Input embedding and the stack of gated dilated residual conv blocks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    Tensor,
    add,
    conv1d_dilated,
    dropout,
    linear,
    mul,
    sigmoid,
    take_rows,
)

log = logging.getLogger(__name__)

__all__ = ["EncoderConfig", "BlockParams", "GloveTable", "load_glove", "embed_input", "block_forward", "encode"]


@dataclass
class EncoderConfig:
    d: int = 128
    k_s: int = 3
    L: int = 6
    dilation_rates: tuple = (1, 2, 4, 1, 1, 1)
    dropout_rate: float = 0.1
    n_max: int = 100
    glove_dim: int = 300
    # ablation switches: gate off -> conv_a(X) + X; residual off -> gated conv only
    use_gate: bool = True
    use_residual: bool = True

    def __post_init__(self):
        self.dilation_rates = tuple(int(r) for r in self.dilation_rates)
        if len(self.dilation_rates) != self.L:
            raise ValueError(
                f"need {self.L} dilation rates, got {len(self.dilation_rates)}"
            )
        if any(r < 1 for r in self.dilation_rates):
            raise ValueError(f"dilation rates must be >= 1: {self.dilation_rates}")
        if self.k_s % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.k_s}")

    def receptive_width(self) -> int:
        """Dependency width of one output position across the whole stack."""
        return 1 + sum(r * (self.k_s - 1) for r in self.dilation_rates)


@dataclass
class BlockParams:
    """Weights of one block: two parallel convolutions over the same input.

    `kernel_b`/`bias_b` are None when the gate is ablated away.
    """

    kernel_a: Tensor
    bias_a: Tensor
    kernel_b: Tensor | None
    bias_b: Tensor | None
    dilation: int


# ---------------------------------------------------------------------
# GloVe ingestion
# ---------------------------------------------------------------------


@dataclass
class GloveTable:
    index: dict[str, int]
    vectors: np.ndarray
    skipped: int = 0

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def mean_vector(self) -> np.ndarray:
        if len(self.vectors) == 0:
            return np.zeros((self.dim,), dtype=self.vectors.dtype)
        return self.vectors.mean(axis=0)


def load_glove(path, expect_dim: int | None = None) -> GloveTable:
    """Read "token v1 ... vD" lines; malformed lines are skipped and counted."""
    index: dict[str, int] = {}
    rows: list[np.ndarray] = []
    skipped = 0
    dim = expect_dim
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split()
            if len(parts) < 2:
                skipped += 1
                continue
            token = parts[0]
            try:
                vec = np.asarray([float(v) for v in parts[1:]], dtype=np.float32)
            except ValueError:
                skipped += 1
                continue
            if dim is None:
                dim = vec.shape[0]
            if vec.shape[0] != dim or token in index:
                skipped += 1
                continue
            index[token] = len(rows)
            rows.append(vec)
    if skipped:
        log.warning("skipped %d malformed embedding lines", skipped)
    vectors = np.stack(rows) if rows else np.zeros((0, dim or 0), dtype=np.float32)
    return GloveTable(index=index, vectors=vectors, skipped=skipped)


# ---------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------


def embed_input(
    token_ids,
    glove: Tensor,
    proj_weight: Tensor,
    proj_bias: Tensor,
    position_table: Tensor,
) -> Tensor:
    """X[i] = projection(glove[ids[i]]) + position_table[i].

    The GloVe table is frozen (never receives gradient); the projection and
    the position table are trainable.  Sentences longer than the position
    table are rejected; callers truncate beforehand.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    n = ids.shape[0]
    if n > position_table.shape[0]:
        raise ValueError(
            f"sentence length {n} exceeds maximum {position_table.shape[0]}"
        )
    g = take_rows(glove, ids)
    projected = linear(g, proj_weight, proj_bias)
    pos = take_rows(position_table, np.arange(n))
    return add(projected, pos)


def block_forward(
    x: Tensor,
    params: BlockParams,
    config: EncoderConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """One block: conv_a(X) * sigmoid(conv_b(X)) + X, then dropout.

    With the gate ablated the block is conv_a(X) + X; with the residual
    ablated the skip term is dropped.
    """
    ya = conv1d_dilated(x, params.kernel_a, params.bias_a, params.dilation)
    if config.use_gate:
        yb = conv1d_dilated(x, params.kernel_b, params.bias_b, params.dilation)
        out = mul(ya, sigmoid(yb))
    else:
        out = ya
    if config.use_residual:
        out = add(out, x)
    return dropout(out, config.dropout_rate, training, rng)


def encode(
    x: Tensor,
    blocks: list[BlockParams],
    config: EncoderConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    if len(blocks) != config.L:
        raise ValueError(f"expected {config.L} blocks, got {len(blocks)}")
    h = x
    for bp in blocks:
        h = block_forward(h, bp, config, training=training, rng=rng)
    return h
