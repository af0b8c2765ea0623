"""AdamW with decoupled weight decay over named parameter blocks."""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from ..protocols import FloatArray

__all__ = ["AdamW", "NonFiniteGradientError", "OptimizerState", "adamw_step"]


class NonFiniteGradientError(FloatingPointError):
    """Raised when a gradient block contains NaN or infinity."""

    def __init__(self, block: str) -> None:
        """Initialize with the offending block name."""
        super().__init__(f"Non-finite gradient in parameter block {block!r}")
        self.block = block


@dataclass(kw_only=True)
class OptimizerState:
    """First/second moment accumulators per block and the shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, FloatArray] = field(default_factory=dict)
    v: dict[str, FloatArray] = field(default_factory=dict)


def adamw_step(params: Mapping[str, FloatArray], grads: Mapping[str, FloatArray], state: OptimizerState, lr: float, weight_decay: float) -> OptimizerState:
    """Apply one AdamW update to ``params`` in place.

    Weight decay scales the parameters by ``1 - lr * weight_decay`` before the
    bias-corrected Adam step and never enters the moment estimates. Blocks
    without a gradient are only decayed.

    Raises:
        NonFiniteGradientError: A gradient block is not finite; nothing is updated.
        ValueError: A gradient's shape differs from its parameter's.

    """
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"Gradient for unknown parameter block {name!r}")
        if grad.shape != params[name].shape:
            raise ValueError(f"Gradient shape {grad.shape} does not match parameter {name!r} shape {params[name].shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(name)

    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for name, param in params.items():
        if weight_decay:
            param *= 1.0 - lr * weight_decay
        grad = grads.get(name)
        if grad is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(grad)
        param -= lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return state


class AdamW:
    """Stateful wrapper binding a parameter dict to its optimizer state."""

    def __init__(self, params: dict[str, FloatArray], *, lr: float, weight_decay: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
        """Initialize the optimizer.

        Args:
            params: Parameter blocks updated in place.
            lr: Learning rate.
            weight_decay: Decoupled decay coefficient.
            betas: Moment decay rates.
            eps: Denominator floor.

        """
        super().__init__()
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.state = OptimizerState(beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self, grads: Mapping[str, FloatArray]) -> None:
        """Apply one update."""
        _ = adamw_step(self.params, grads, self.state, self.lr, self.weight_decay)

