"""AdamW and SGD with per-tensor learning rates and mask-aware updates.

Each parameter carries its own peak LR (assigned by the parameterization
module at build time); the optimizer multiplies it by a shared schedule value
each step. Gradients, moment buffers and updates are multiplied by the
parameter's mask so pruned positions hold exactly zero weight, zero moments
and zero update forever.

Schedules: linear warmup to the peak over warmup_steps (value (step+1)/warmup
during warmup), then a linear decay to one tenth of peak, to zero, or a
constant hold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DomainError


@dataclass(frozen=True)
class ScheduleSpec:
    warmup_steps: int
    total_steps: int
    kind: str = "linear-decay-to-tenth"  # | "decay-to-zero" | "constant"

    def __post_init__(self):
        if self.kind not in ("linear-decay-to-tenth", "decay-to-zero", "constant"):
            raise DomainError(f"unknown schedule kind {self.kind!r}")
        if self.warmup_steps < 0 or self.total_steps < 1:
            raise DomainError("schedule steps must be nonnegative / positive")
        if self.warmup_steps > self.total_steps:
            raise DomainError("warmup_steps must be <= total_steps")


def schedule_multiplier(spec: ScheduleSpec, step: int) -> float:
    """LR multiplier in (0, 1] for the given step index (0-based)."""
    if step < 0 or step > spec.total_steps:
        raise DomainError(f"step {step} outside [0, {spec.total_steps}]")
    if step < spec.warmup_steps:
        return (step + 1) / spec.warmup_steps
    if spec.kind == "constant":
        return 1.0
    span = spec.total_steps - spec.warmup_steps
    frac = (step - spec.warmup_steps) / span if span > 0 else 1.0
    floor = 0.1 if spec.kind == "linear-decay-to-tenth" else 0.0
    return 1.0 - (1.0 - floor) * frac


def _mask_array(param) -> np.ndarray | None:
    return None if param.mask_tensor is None else param.mask_tensor.data


def _masked_grad(param) -> np.ndarray:
    g = param.tensor.grad
    if g is None:
        raise ContractViolation(f"parameter {param.name} has no gradient; run backward first")
    mask = _mask_array(param)
    if mask is not None:
        g = g * mask
    return g


class AdamW:
    """Decoupled weight decay (applied before the Adam update), bias-corrected."""

    def __init__(self, params, betas=(0.9, 0.95), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.tensor.data) for p in self.params]
        self.v = [np.zeros_like(p.tensor.data) for p in self.params]

    def step(self, schedule_multiplier: float = 1.0) -> None:
        if not (0.0 < schedule_multiplier <= 1.0):
            raise ContractViolation(
                f"schedule multiplier must be in (0, 1], got {schedule_multiplier}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = _masked_grad(p)
            mask = _mask_array(p)
            lr = p.lr * schedule_multiplier
            w = p.tensor.data
            if self.weight_decay != 0.0:
                w *= 1.0 - lr * self.weight_decay
                if mask is not None:
                    w *= mask
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if mask is not None:
                update *= mask
            w -= lr * update

    def reset_moments(self, param, positions: np.ndarray) -> None:
        """Zero moment buffers at the given boolean positions (mask changes)."""
        idx = self.params.index(param)
        self.m[idx][positions] = 0.0
        self.v[idx][positions] = 0.0

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.zero_grad()


class SGD:
    """Plain/momentum SGD with per-tensor LR (the SGD rule), masked like AdamW."""

    def __init__(self, params, momentum: float = 0.0):
        self.params = list(params)
        self.momentum = momentum
        self.buf = [np.zeros_like(p.tensor.data) for p in self.params] if momentum else None

    def step(self, schedule_multiplier: float = 1.0) -> None:
        if not (0.0 < schedule_multiplier <= 1.0):
            raise ContractViolation(
                f"schedule multiplier must be in (0, 1], got {schedule_multiplier}")
        for i, p in enumerate(self.params):
            g = _masked_grad(p)
            lr = p.lr_sgd * schedule_multiplier
            if self.momentum:
                self.buf[i] *= self.momentum
                self.buf[i] += g
                g = self.buf[i]
            update = lr * g
            mask = _mask_array(p)
            if mask is not None:
                update *= mask
            p.tensor.data -= update

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.zero_grad()
