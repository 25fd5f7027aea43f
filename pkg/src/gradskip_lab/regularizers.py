"""Proximal operators of the regularisers used by GradSkip+."""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Regularizer:
    """``consensus`` (indicator of x_1 = ... = x_n), ``l1`` or ``zero``."""

    kind: str
    n: int = 1
    d: int = 0
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("consensus", "l1", "zero"):
            raise ParameterError(f"unknown regulariser {self.kind!r}")
        if self.weight < 0:
            raise ParameterError("weight must be non-negative")
        if self.kind == "consensus" and (self.n < 1 or self.d < 1):
            raise ParameterError("consensus needs n >= 1 and d >= 1")

    @classmethod
    def consensus(cls, n, d):
        return cls("consensus", n=n, d=d)

    @classmethod
    def l1(cls, weight):
        return cls("l1", weight=weight)

    @classmethod
    def zero(cls):
        return cls("zero")

    def value(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return self.weight * float(np.abs(v).sum())
        blocks = v.reshape(self.n, self.d)
        return 0.0 if np.all(blocks == blocks[0]) else np.inf


def prox(reg, step, v):
    """``argmin_u reg(u) + |u - v|^2 / (2 step)``."""
    if not step > 0:
        raise ParameterError(f"step must be positive, got {step}")
    v = np.asarray(v, dtype=np.float64)
    if reg.kind == "zero":
        return v.copy()
    if reg.kind == "l1":
        thr = reg.weight * step
        return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)
    if v.size != reg.n * reg.d:
        raise ParameterError(f"consensus prox expects {reg.n * reg.d} entries, got {v.size}")
    mean = v.reshape(reg.n, reg.d).mean(axis=0)
    return np.broadcast_to(mean, (reg.n, reg.d)).reshape(v.shape).copy()
