"""Adam optimizer and reduce-on-plateau learning-rate scheduling."""

from __future__ import annotations

import logging
import math

import numpy as np

from .tensor import Tensor

logger = logging.getLogger(__name__)


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN/Inf; the message names the parameter."""


class Adam:
    """Adam with bias correction. Parameters are updated in place.

    beta1/beta2/epsilon use the canonical defaults; only the learning rate
    is a tuning knob here.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, param in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != param.data.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {param.data.shape} for '{name}'")
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient for parameter '{name}'")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g, dtype=np.float64)
            update = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            param.data -= update.astype(param.data.dtype)


class ReduceOnPlateau:
    """Halve-on-stall scheduler (lower metric is better).

    After exactly `patience` consecutive non-improving epochs the rate is
    multiplied by `factor` and the stall counter resets; any improvement
    also resets it. The produced rate sequence is non-increasing. A NaN
    metric counts as a non-improving epoch (logged, never raised).
    """

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 5):
        if not 0.0 < factor < 1.0:
            raise ValueError(f"factor must lie in (0, 1), got {factor}")
        if patience < 0:
            raise ValueError(f"patience must be non-negative, got {patience}")
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.best: float | None = None
        self.stalled = 0

    def step(self, metric: float) -> float:
        """Record one epoch's metric; return the (possibly reduced) rate."""
        if metric is None or math.isnan(metric):
            logger.warning("plateau scheduler got NaN metric; treating as non-improvement")
            improved = False
        elif self.best is None or metric < self.best:
            self.best = metric
            improved = True
        else:
            improved = False

        if improved:
            self.stalled = 0
        else:
            self.stalled += 1
            if self.stalled >= self.patience:
                self.lr *= self.factor
                self.stalled = 0
        return self.lr
