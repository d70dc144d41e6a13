"""Parameter containers and the two dense layers every model here shares."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor, matmul


class Module:
    """Base class: tensors with ``requires_grad`` set are parameters.

    Parameters are discovered by walking instance attributes, nested modules
    and lists of modules, in attribute definition order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def _resolve(self, name: str):
        owner: object = self
        *path, leaf = name.split(".")
        for part in path:
            owner = owner[int(part)] if isinstance(owner, (list, tuple)) else getattr(owner, part)
        return owner, leaf

    def get_parameter(self, name: str) -> Tensor:
        owner, leaf = self._resolve(name)
        return getattr(owner, leaf)

    def set_parameter(self, name: str, value: Tensor) -> None:
        owner, leaf = self._resolve(name)
        setattr(owner, leaf, value)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            self.set_parameter(name, Tensor(np.array(state[name], dtype=np.float64),
                                            requires_grad=True))

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def param(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


class Linear(Module):
    """``y = x @ weight + bias`` with ``weight`` stored as [in, out]."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = param(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = param(np.zeros(n_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 1:
            y = matmul(x.reshape(1, -1), self.weight).reshape(-1)
        else:
            y = matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class RMSNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.scale = param(np.ones(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        ms = (x * x).mean(axis=-1, keepdims=True) + self.eps
        return x / ms.sqrt().broadcast_to(x.shape) * self.scale
