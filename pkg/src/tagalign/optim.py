"""Decoupled-weight-decay Adam and the warmup-cosine learning schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import InputError, NumericError, ShapeError


@dataclass
class OptimizerState:
    """First/second moment accumulators plus the global step counter."""

    weight_decay: float = 0.02
    betas: tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params, grads, state, lr, no_decay=()):
    """Apply one update in place and return the parameter dict.

    Weight decay is decoupled: parameters shrink by ``lr * wd`` before
    the bias-corrected moment update. Any non-finite gradient refuses
    the whole step so the state is never poisoned.
    """
    for name, g in grads.items():
        if name not in params:
            raise InputError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} of shape {params[name].shape}"
            )
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    b1, b2 = state.betas
    state.step += 1
    t = state.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if state.weight_decay and name not in no_decay:
            p -= lr * state.weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params


class AdamW:
    """Binds ``adamw_step`` to a dict of autodiff tensors."""

    def __init__(self, params: dict[str, Tensor], weight_decay=0.02,
                 betas=(0.9, 0.999), epsilon=1e-8, no_decay=None):
        self.params = params
        self.state = OptimizerState(weight_decay=weight_decay, betas=betas,
                                    epsilon=epsilon)
        # Temperature-style scale parameters must not be decayed toward zero.
        if no_decay is None:
            no_decay = {n for n in params if n.endswith(".tau")}
        self.no_decay = set(no_decay)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr):
        grads = {}
        views = {}
        for name, p in self.params.items():
            if p.grad is None:
                continue
            grads[name] = p.grad
            views[name] = p.data
        adamw_step(views, grads, self.state, lr, no_decay=self.no_decay)


@dataclass(frozen=True)
class WarmupCosineSchedule:
    """Linear ramp 0 -> peak over the warmup, then cosine decay to final."""

    warmup_epochs: float
    peak_lr: float
    final_lr: float
    total_epochs: float

    def __post_init__(self):
        if self.total_epochs <= 0:
            raise InputError("total_epochs must be positive")
        if not 0 <= self.warmup_epochs <= self.total_epochs:
            raise InputError(
                f"warmup_epochs {self.warmup_epochs} outside "
                f"[0, {self.total_epochs}]"
            )
        if self.peak_lr <= 0 or self.final_lr < 0:
            raise InputError("learning rates must be positive")
        if self.warmup_epochs == self.total_epochs and \
                self.peak_lr != self.final_lr:
            raise InputError("cosine span is empty but peak_lr != final_lr")


def lr_at(schedule: WarmupCosineSchedule, epoch):
    """Learning rate at a (possibly fractional) epoch position."""
    e = float(epoch)
    if not 0.0 <= e <= schedule.total_epochs:
        raise InputError(
            f"epoch {e} outside schedule range [0, {schedule.total_epochs}]"
        )
    if e < schedule.warmup_epochs:
        return schedule.peak_lr * e / schedule.warmup_epochs
    span = schedule.total_epochs - schedule.warmup_epochs
    if span == 0:
        return schedule.final_lr
    frac = (e - schedule.warmup_epochs) / span
    cos = 0.5 * (1.0 + math.cos(math.pi * frac))
    return schedule.final_lr + (schedule.peak_lr - schedule.final_lr) * cos
