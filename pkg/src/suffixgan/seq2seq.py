"""Encoder-decoder generator and recurrent discriminator.

Batched tensors are ``(batch, time, width)`` with ``width = n_labels + 1``;
variable lengths travel as a separate ``lengths`` tensor. The module-level
``encode``/``decode_*``/``discriminate`` helpers accept a single unbatched
sequence for convenience.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.rnn import pack_padded_sequence

from .gumbel import gumbel_softmax_from_logits

State = tuple[torch.Tensor, torch.Tensor]


class DimensionMismatch(ValueError):
    pass


@dataclass
class ModelConfig:
    n_labels: int
    hidden_size: int = 200
    num_layers: int = 5
    init_std: float = 0.05

    @property
    def width(self) -> int:
        return self.n_labels + 1


def init_parameters(module: nn.Module, seed: int, std: float = 0.05) -> nn.Module:
    """Draw every weight matrix from ``std * N(0, 1)`` and zero every bias."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if p.dim() >= 2:
                p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * std)
            else:
                p.zero_()
    return module


def _check_width(x: torch.Tensor, width: int):
    if x.dim() != 3 or x.shape[-1] != width:
        raise DimensionMismatch(f"expected (batch, time, {width}) input, got {tuple(x.shape)}")


def _lengths_of(x: torch.Tensor, lengths) -> torch.Tensor:
    if lengths is None:
        return torch.full((x.shape[0],), x.shape[1], dtype=torch.long)
    return torch.as_tensor(lengths, dtype=torch.long)


@dataclass
class DecodeResult:
    probs: torch.Tensor  # (batch, steps, n_labels)
    durations: torch.Tensor  # (batch, steps), normalized
    vectors: torch.Tensor  # (batch, steps, width) fed-back vectors
    lengths: torch.Tensor  # steps up to and including EOS, or max_len
    truncated: torch.Tensor  # bool per row: no EOS within max_len
    logits: torch.Tensor | None = field(default=None, repr=False)


class Generator(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        w, h = config.width, config.hidden_size
        self.encoder = nn.LSTM(w, h, config.num_layers, batch_first=True)
        self.decoder = nn.LSTM(w, h, config.num_layers, batch_first=True)
        self.activity_head = nn.Linear(h, config.n_labels)
        self.duration_head = nn.Linear(h, 1)

    @property
    def eos_index(self) -> int:
        return self.config.n_labels - 1

    def start_vector(self, batch: int) -> torch.Tensor:
        x = self.activity_head.weight.new_zeros(batch, 1, self.config.width)
        x[:, 0, self.eos_index] = 1.0
        return x

    def encode(self, prefix: torch.Tensor, lengths=None) -> State:
        _check_width(prefix, self.config.width)
        lengths = _lengths_of(prefix, lengths)
        packed = pack_padded_sequence(prefix, lengths, batch_first=True, enforce_sorted=False)
        _, state = self.encoder(packed)
        return state

    def _heads(self, out: torch.Tensor):
        logits = self.activity_head(out)
        duration = F.softplus(self.duration_head(out)).squeeze(-1)
        return logits, duration

    def step(self, x: torch.Tensor, state: State):
        """One decoder step on ``x`` of shape (batch, 1, width)."""
        out, state = self.decoder(x, state)
        logits, duration = self._heads(out[:, 0])
        return logits, duration, state

    def decode_teacher_forced(self, state: State, target: torch.Tensor):
        """Decode with ground-truth inputs; step t sees the EOS start vector then target[:t].

        Returns ``(logits, durations)`` of shapes (batch, L, n_labels) and (batch, L).
        """
        _check_width(target, self.config.width)
        inputs = torch.cat([self.start_vector(target.shape[0]), target[:, :-1]], dim=1)
        out, _ = self.decoder(inputs, state)
        return self._heads(out)

    def decode_free_running(
        self,
        state: State,
        max_len: int | torch.Tensor,
        mode: str = "argmax",
        tau: float = 1.0,
        generator: torch.Generator | None = None,
    ) -> DecodeResult:
        """Feed back the model's own emissions until EOS or ``max_len``.

        ``mode="argmax"`` feeds the one-hot argmax; ``mode="gumbel"`` feeds a
        Gumbel-Softmax relaxation at temperature ``tau``, keeping the graph
        differentiable. ``max_len`` may be a per-row tensor.
        """
        if mode not in ("argmax", "gumbel"):
            raise ValueError(f"unknown decode mode {mode!r}")
        batch = state[0].shape[1]
        caps = torch.as_tensor(max_len, dtype=torch.long).expand(batch).clone()
        if (caps < 1).any():
            raise ValueError("max_len must be >= 1")
        x = self.start_vector(batch)
        done = torch.zeros(batch, dtype=torch.bool)
        lengths = caps.clone()
        all_probs, all_durs, all_vecs, all_logits = [], [], [], []
        for t in range(int(caps.max())):
            logits, duration, state = self.step(x, state)
            probs = torch.softmax(logits, dim=-1)
            if mode == "gumbel":
                onehot = gumbel_softmax_from_logits(logits, tau, generator=generator)
            else:
                onehot = F.one_hot(logits.argmax(-1), self.config.n_labels).to(logits.dtype)
            vec = torch.cat([onehot, duration[:, None]], dim=-1)
            all_probs.append(probs)
            all_durs.append(duration)
            all_vecs.append(vec)
            all_logits.append(logits)
            hit_eos = (onehot.argmax(-1) == self.eos_index) & ~done
            lengths = torch.where(hit_eos, torch.full_like(lengths, t + 1), lengths)
            done = done | hit_eos | (caps <= t + 1)
            if done.all():
                break
            x = vec[:, None, :]
        lengths = torch.minimum(lengths, caps)
        probs = torch.stack(all_probs, 1)
        vectors = torch.stack(all_vecs, 1)
        eos_at_end = vectors[torch.arange(batch), lengths - 1, : self.config.n_labels].argmax(-1) == self.eos_index
        return DecodeResult(
            probs=probs,
            durations=torch.stack(all_durs, 1),
            vectors=vectors,
            lengths=lengths,
            truncated=~eos_at_end,
            logits=torch.stack(all_logits, 1),
        )


class Discriminator(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.rnn = nn.LSTM(config.width, config.hidden_size, config.num_layers, batch_first=True)
        self.head = nn.Linear(config.hidden_size, 1)

    def forward(self, suffix: torch.Tensor, lengths=None) -> torch.Tensor:
        """Probability that each (relaxed) suffix is real; shape (batch,)."""
        _check_width(suffix, self.config.width)
        lengths = _lengths_of(suffix, lengths)
        packed = pack_padded_sequence(suffix, lengths, batch_first=True, enforce_sorted=False)
        _, (h, _) = self.rnn(packed)
        return torch.sigmoid(self.head(h[-1])).squeeze(-1)


def build_models(config: ModelConfig, seed: int) -> tuple[Generator, Discriminator]:
    gen = init_parameters(Generator(config), seed, config.init_std)
    disc = init_parameters(Discriminator(config), seed + 1, config.init_std)
    return gen, disc


def _batched(seq, model: nn.Module) -> torch.Tensor:
    p = next(model.parameters())
    x = torch.as_tensor(np.asarray(seq) if not isinstance(seq, torch.Tensor) else seq, dtype=p.dtype)
    if x.dim() != 2:
        raise DimensionMismatch(f"expected a (time, width) sequence, got {tuple(x.shape)}")
    if x.shape[0] < 1:
        raise DimensionMismatch("sequence must have at least one step")
    return x[None]


def encode(model: Generator, prefix) -> State:
    return model.encode(_batched(prefix, model))


def decode_teacher_forced(model: Generator, state: State, target_suffix):
    """Per-step activity probabilities and durations for one target suffix."""
    logits, durations = model.decode_teacher_forced(state, _batched(target_suffix, model))
    return torch.softmax(logits[0], -1), durations[0]


def decode_free_running(model: Generator, state: State, max_len: int, mode: str = "argmax",
                        tau: float = 1.0, generator: torch.Generator | None = None) -> DecodeResult:
    return model.decode_free_running(state, max_len, mode, tau, generator)


def discriminate(model: Discriminator, relaxed_suffix) -> torch.Tensor:
    return model(_batched(relaxed_suffix, model))[0]
