"""Gumbel-Max sampling, Gumbel-Softmax relaxation and temperature annealing.

All samplers operate on the last axis of ``probs`` and take either an
explicit ``torch.Generator`` or a precomputed ``noise`` tensor; there is no
module-level random state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch

SMOOTHING = 1e-10


class NonPositiveTemperature(ValueError):
    pass


def smooth(probs: torch.Tensor, eps: float = SMOOTHING) -> torch.Tensor:
    """Mix in ``eps`` so that log is finite on exact zeros (e.g. one-hot targets)."""
    probs = probs + eps
    return probs / probs.sum(dim=-1, keepdim=True)


def sample_gumbel(shape, generator: torch.Generator | None = None, dtype=torch.float64) -> torch.Tensor:
    """Draw i.i.d. Gumbel(0, 1) noise as ``-log(-log(u))``."""
    u = torch.rand(shape, generator=generator, dtype=dtype)
    # u == 0 has probability ~2^-53 but would give inf
    u = u.clamp(min=torch.finfo(dtype).tiny)
    return -torch.log(-torch.log(u))


def _noise_for(probs, generator, noise):
    if noise is not None:
        return torch.as_tensor(noise, dtype=probs.dtype)
    return sample_gumbel(probs.shape, generator, dtype=probs.dtype)


def gumbel_max_sample(
    probs: torch.Tensor,
    generator: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """One-hot categorical sample via ``argmax(g + log pi)``."""
    probs = torch.as_tensor(probs)
    scores = torch.log(smooth(probs)) + _noise_for(probs, generator, noise)
    idx = scores.argmax(dim=-1, keepdim=True)
    return torch.zeros_like(probs).scatter_(-1, idx, 1.0)


def gumbel_softmax_sample(
    probs: torch.Tensor,
    tau: float,
    generator: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """Relaxed sample ``softmax((log pi + g) / tau)``, differentiable in ``probs``."""
    if not tau > 0:
        raise NonPositiveTemperature(f"temperature must be positive, got {tau}")
    probs = torch.as_tensor(probs)
    logits = (torch.log(smooth(probs)) + _noise_for(probs, generator, noise)) / tau
    # softmax subtracts the row max internally
    return torch.softmax(logits, dim=-1)


def gumbel_softmax_from_logits(
    logits: torch.Tensor,
    tau: float,
    generator: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """Same relaxation when the caller holds unnormalized logits.

    ``log_softmax(logits)`` equals ``log pi`` so this matches
    :func:`gumbel_softmax_sample` on ``softmax(logits)`` up to smoothing.
    """
    if not tau > 0:
        raise NonPositiveTemperature(f"temperature must be positive, got {tau}")
    log_pi = torch.log_softmax(logits, dim=-1)
    return torch.softmax((log_pi + _noise_for(logits, generator, noise)) / tau, dim=-1)


@dataclass(frozen=True)
class TemperatureSchedule:
    tau_start: float = 0.9
    tau_min: float = 0.05
    total_epochs: int = 500

    def __post_init__(self):
        if not (self.tau_start >= self.tau_min > 0):
            raise ValueError("need tau_start >= tau_min > 0")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")

    @property
    def decay_rate(self) -> float:
        return math.log(self.tau_start / self.tau_min) / self.total_epochs

    def tau_at(self, epoch: int) -> float:
        return tau_at(self, epoch)


def tau_at(schedule: TemperatureSchedule, epoch: int) -> float:
    """Exponentially decayed temperature, floored at ``tau_min``."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if epoch >= schedule.total_epochs:
        return schedule.tau_min
    return max(schedule.tau_min, schedule.tau_start * math.exp(-schedule.decay_rate * epoch))
