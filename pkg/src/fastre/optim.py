"""Named trainable parameters and the AdamW update rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

__all__ = ["Param", "ParamStore", "init_weight", "init_embedding", "adamw_step"]


@dataclass
class Param:
    """One trainable tensor with its optimizer state.

    Names are unique and hierarchical (e.g. "encoder.block3.conv_a.kernel");
    first/second moment buffers always match the tensor shape.
    """

    name: str
    tensor: Tensor
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    step: int = field(init=False, default=0)

    def __post_init__(self):
        self.tensor.requires_grad = True
        self.m = np.zeros(self.tensor.shape, dtype=np.float64)
        self.v = np.zeros(self.tensor.shape, dtype=np.float64)


class ParamStore:
    """Ordered collection of uniquely named Params."""

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, data: np.ndarray) -> Param:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Param(name, Tensor(data))
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self):
        for p in self._params.values():
            p.tensor.zero_grad()

    def total_count(self) -> int:
        return sum(p.tensor.size for p in self._params.values())

    def group_counts(self) -> dict[str, int]:
        """Element counts keyed by the top-level name segment."""
        groups: dict[str, int] = {}
        for p in self._params.values():
            top = p.name.split(".", 1)[0]
            groups[top] = groups.get(top, 0) + p.tensor.size
        return groups

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.tensor.data for p in self._params.values()}


def init_weight(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """Uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)]."""
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape)


def init_embedding(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    return rng.uniform(-0.1, 0.1, size=shape)


def adamw_step(
    params,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
):
    """One decoupled-weight-decay Adam update over params with gradients.

    Decay is applied as p <- p - lr*wd*p before the Adam term; moment
    buffers are kept in float64 so the recurrence is insensitive to the
    working precision of the parameters themselves.
    """
    if lr <= 0:
        raise ValueError(f"adamw_step: lr must be positive, got {lr}")
    b1, b2 = betas
    for p in params:
        g = p.tensor.grad
        if g is None:
            continue
        g = g.astype(np.float64, copy=False)
        p.step += 1
        if weight_decay:
            p.tensor.data -= p.tensor.data.dtype.type(lr * weight_decay) * p.tensor.data
        p.m = b1 * p.m + (1.0 - b1) * g
        p.v = b2 * p.v + (1.0 - b2) * (g * g)
        m_hat = p.m / (1.0 - b1**p.step)
        v_hat = p.v / (1.0 - b2**p.step)
        update = lr * m_hat / (np.sqrt(v_hat) + eps)
        p.tensor.data -= update.astype(p.tensor.data.dtype)
