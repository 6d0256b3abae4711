from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

import numpy as np

from ..errors import ConfigError, GradientError, ShapeError
from .module import Parameter


@dataclass
class AdamState:
    """Moment buffers keyed by parameter name"""

    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_parameters(
        cls, named_params: Iterable[Tuple[str, Parameter]], beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8
    ) -> "AdamState":
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0) or eps <= 0:
            raise ConfigError(f"invalid Adam hyper-parameters beta1={beta1} beta2={beta2} eps={eps}")
        state = cls(beta1=beta1, beta2=beta2, eps=eps)
        for name, p in named_params:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(params: List[Parameter], state: AdamState, lr: float) -> AdamState:
    """Bias-corrected Adam update in place; lr = 0 leaves parameters untouched"""
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    for p in params:
        if p.grad is None:
            raise GradientError(f"parameter {p.name or '<unnamed>'} has no gradient")
        if p.name not in state.m:
            raise ShapeError(f"no Adam buffers for parameter {p.name}")
        if state.m[p.name].shape != p.shape:
            raise ShapeError(f"Adam buffers for {p.name} have shape {state.m[p.name].shape}, parameter {p.shape}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for p in params:
        g = p.grad
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if lr == 0:
            continue
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.data = (p.data - update).astype(p.dtype, copy=False)
    return state


class Adam:
    """Adam bound to a model's named parameters"""

    def __init__(self, named_params: Iterable[Tuple[str, Parameter]], lr: float, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        named = list(named_params)
        self.params = [p for _, p in named]
        self.lr = lr
        self.state = AdamState.for_parameters(named, beta1, beta2, eps)

    def step(self) -> None:
        adam_step(self.params, self.state, self.lr)
