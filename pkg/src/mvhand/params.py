"""Named parameter store with freezing and a decoupled-weight-decay Adam."""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .tensor import Tensor, default_dtype


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Fan-in-scaled uniform weights; biases are zero-initialized elsewhere."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


class ParamStore:
    """Ordered map name -> Tensor, plus the optimizer state for each one.

    Frozen names are excluded from updates and never carry optimizer
    state; their values stay bit-identical through any number of steps.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.frozen: set[str] = set()
        self.state: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.step_count = 0

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self.params:
            raise ContractError(f"parameter {name!r} already registered")
        tensor.requires_grad = True
        self.params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self):
        return list(self.params)

    def freeze(self, names) -> None:
        for name in names:
            if name not in self.params:
                raise ContractError(f"cannot freeze unknown parameter {name!r}")
            self.frozen.add(name)
            self.state.pop(name, None)
            self.params[name].grad = None
            self.params[name].requires_grad = False

    def unfreeze(self, names) -> None:
        for name in names:
            self.frozen.discard(name)
            if name in self.params:
                self.params[name].requires_grad = True

    def trainable_names(self):
        return [n for n in self.params if n not in self.frozen]

    def trainable_tensors(self):
        return [self.params[n] for n in self.params if n not in self.frozen]

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.size for t in self.params.values())

    def check_alignment(self) -> None:
        """Optimizer state must exist exactly for the non-frozen names."""
        stale = set(self.state) - set(self.trainable_names())
        if stale:
            raise ContractError(f"optimizer state for frozen/unknown params: {sorted(stale)}")


def adam_step(store: ParamStore, learning_rate: float, weight_decay: float = 0.0,
              betas: tuple[float, float] = (0.9, 0.999), epsilon: float = 1e-8) -> None:
    """One Adam update over the store's non-frozen parameters.

    Weight decay is decoupled (applied directly to the parameter, not
    through the gradient moments). Frozen parameters are untouched.
    """
    store.check_alignment()
    beta1, beta2 = betas
    t = store.step_count + 1
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    for name in store.trainable_names():
        p = store.params[name]
        if p.grad is None:
            raise ContractError(f"adam_step: parameter {name!r} has no gradient")
        g = p.grad
        if name not in store.state:
            store.state[name] = (np.zeros_like(p.data), np.zeros_like(p.data))
        m, v = store.state[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        p.data -= np.asarray(learning_rate, dtype=p.dtype) * (
            m_hat / (np.sqrt(v_hat) + epsilon))
        if weight_decay:
            p.data -= np.asarray(learning_rate * weight_decay, dtype=p.dtype) * p.data
    store.step_count += 1
