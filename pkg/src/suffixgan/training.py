"""Losses and the alternating discriminator/generator training loop."""
from __future__ import annotations

import copy
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .encoding import EncodedPair
from .gumbel import TemperatureSchedule, gumbel_softmax_sample
from .seq2seq import Discriminator, Generator

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
FAKE_SLACK = 5


class LengthMismatch(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    def __init__(self, epoch: int, batch: int, diagnostics: dict):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {diagnostics}")
        self.epoch = epoch
        self.batch = batch
        self.diagnostics = diagnostics


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    clip_norm: float = 1.0
    clip_scope: str = "layer"  # or "global"
    epochs: int = 500
    batch_size: int = 128
    seed: int = 0
    schedule: TemperatureSchedule = field(default_factory=TemperatureSchedule)
    supervised_time_weight: float = 1.0
    adversarial_weight: float = 1.0
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.clip_scope not in ("layer", "global"):
            raise ValueError(f"clip_scope must be 'layer' or 'global', got {self.clip_scope!r}")


@dataclass
class LossRecord:
    epoch: int
    d_loss: float
    g_adv_loss: float
    g_supervised_loss: float
    validation_loss: float
    mean_d_fake: float = float("nan")
    tau: float = float("nan")

    def is_finite(self) -> bool:
        core = (self.d_loss, self.g_adv_loss, self.g_supervised_loss, self.validation_loss)
        return all(math.isfinite(v) for v in core)


LOSS_COLUMNS = [f for f in LossRecord.__dataclass_fields__]


# -- losses -----------------------------------------------------------------

def _clamp(p):
    p = p if torch.is_tensor(p) else torch.tensor(p, dtype=torch.float64)
    return p.clamp(PROB_CLAMP, 1 - PROB_CLAMP)


def discriminator_loss(d_real, d_fake) -> torch.Tensor:
    """``-log D(real) - log(1 - D(fake))`` with probabilities clamped away from 0 and 1."""
    return -torch.log(_clamp(d_real)) - torch.log1p(-_clamp(d_fake))


def generator_adversarial_loss(d_fake) -> torch.Tensor:
    """Negative log-odds of the discriminator on fakes: ``-(log D - log(1 - D))``."""
    p = _clamp(d_fake)
    return -(torch.log(p) - torch.log1p(-p))


def supervised_loss(probs, durations, target, time_weight: float = 1.0) -> torch.Tensor:
    """Per-step average of ``-log p(target activity) + w * |duration error|`` for one pair.

    ``probs`` is (L, n_labels), ``durations`` is (L,), ``target`` is the
    encoded suffix (L, n_labels + 1) ending in EOS.
    """
    probs = torch.as_tensor(probs)
    durations = torch.as_tensor(durations)
    target = torch.as_tensor(target, dtype=probs.dtype)
    if probs.shape[0] != target.shape[0] or durations.shape[0] != target.shape[0]:
        raise LengthMismatch(f"{probs.shape[0]} outputs for a target of length {target.shape[0]}")
    n = probs.shape[-1]
    idx = target[:, :n].argmax(-1)
    nll = -torch.log(probs.gather(-1, idx[:, None]).squeeze(-1))
    time_err = (durations - target[:, n]).abs()
    return (nll + time_weight * time_err).mean()


def batch_supervised_loss(logits, durations, target, lengths, time_weight: float = 1.0) -> torch.Tensor:
    """Token-level mean of the supervised loss over the valid steps of a padded batch."""
    n = logits.shape[-1]
    idx = target[..., :n].argmax(-1)
    nll = -torch.log_softmax(logits, -1).gather(-1, idx[..., None]).squeeze(-1)
    per_step = nll + time_weight * (durations - target[..., n]).abs()
    mask = torch.arange(target.shape[1])[None, :] < torch.as_tensor(lengths)[:, None]
    return (per_step * mask).sum() / mask.sum()


# -- gradient clipping ----------------------------------------------------------

def clip_gradients(grads: Sequence, clip_norm: float) -> list:
    """Rescale each layer's gradient to L2 norm at most ``clip_norm``.

    ``grads`` holds one array or tensor per layer; direction is preserved.
    """
    if not clip_norm > 0:
        raise ValueError("clip_norm must be positive")
    out = []
    for g in grads:
        norm = float(torch.linalg.vector_norm(torch.as_tensor(g, dtype=torch.float64)))
        out.append(g * (clip_norm / norm) if norm > clip_norm else g)
    return out


_LSTM_PARAM = re.compile(r"^(.*)\.(?:weight|bias)_(?:ih|hh)_l(\d+)(_reverse)?$")


def layer_groups(module: nn.Module) -> dict[str, list[nn.Parameter]]:
    """Group parameters by layer: one group per LSTM layer index and per linear module."""
    groups: dict[str, list[nn.Parameter]] = {}
    for name, p in module.named_parameters():
        m = _LSTM_PARAM.match(name)
        key = f"{m.group(1)}.layer{m.group(2)}{m.group(3) or ''}" if m else name.rsplit(".", 1)[0]
        groups.setdefault(key, []).append(p)
    return groups


def clip_module_gradients(module: nn.Module, clip_norm: float, scope: str = "layer") -> dict[str, float]:
    """Clip ``.grad`` in place and return the pre-clip norm of each group."""
    groups = layer_groups(module) if scope == "layer" else {"all": list(module.parameters())}
    norms = {}
    for key, params in groups.items():
        grads = [p.grad for p in params if p.grad is not None]
        if not grads:
            continue
        norm = float(torch.sqrt(sum((g.double() ** 2).sum() for g in grads)))
        norms[key] = norm
        if norm > clip_norm:
            scale = clip_norm / norm
            for g in grads:
                g.mul_(scale)
    return norms


# -- batching --------------------------------------------------------------------

@dataclass
class Batch:
    prefix: torch.Tensor
    prefix_lengths: torch.Tensor
    suffix: torch.Tensor
    suffix_lengths: torch.Tensor


def _pad(seqs: Sequence[np.ndarray], dtype) -> tuple[torch.Tensor, torch.Tensor]:
    lengths = torch.tensor([len(s) for s in seqs], dtype=torch.long)
    out = torch.zeros(len(seqs), int(lengths.max()), seqs[0].shape[1], dtype=dtype)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.as_tensor(s, dtype=dtype)
    return out, lengths


def collate(pairs: Sequence[EncodedPair], dtype=torch.float32) -> Batch:
    prefix, plen = _pad([p.prefix for p in pairs], dtype)
    suffix, slen = _pad([p.suffix for p in pairs], dtype)
    return Batch(prefix, plen, suffix, slen)


def evaluate_supervised(generator: Generator, pairs: Sequence[EncodedPair], time_weight: float,
                        batch_size: int = 256) -> float:
    """Token-mean teacher-forced supervised loss over ``pairs``."""
    dtype = next(generator.parameters()).dtype
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(pairs), batch_size):
            b = collate(pairs[i:i + batch_size], dtype)
            state = generator.encode(b.prefix, b.prefix_lengths)
            logits, durs = generator.decode_teacher_forced(state, b.suffix)
            n_tok = int(b.suffix_lengths.sum())
            total += float(batch_supervised_loss(logits, durs, b.suffix, b.suffix_lengths, time_weight)) * n_tok
            count += n_tok
    return total / count


# -- training loop ---------------------------------------------------------------

UpdateHook = Callable[[str, nn.Module, dict], None]


class Trainer:
    """Owns optimizers, the random source and the epoch counter of one training run."""

    def __init__(self, generator: Generator, discriminator: Discriminator, config: TrainConfig,
                 on_update: UpdateHook | None = None):
        self.generator = generator
        self.discriminator = discriminator
        self.config = config
        self.on_update = on_update
        opt = dict(lr=config.learning_rate, alpha=config.rmsprop_alpha, eps=config.rmsprop_eps)
        self.opt_g = torch.optim.RMSprop(generator.parameters(), **opt)
        self.opt_d = torch.optim.RMSprop(discriminator.parameters(), **opt)
        self.rng = torch.Generator().manual_seed(config.seed)
        self.epoch = 0
        self.history: list[LossRecord] = []
        self.best_validation = math.inf
        self.best_epoch = -1
        self.best_state: dict | None = None
        self._batch_idx = -1

    @property
    def n_labels(self) -> int:
        return self.generator.config.n_labels

    def _update(self, tag: str, module: nn.Module, optimizer, loss: torch.Tensor):
        optimizer.zero_grad()
        loss.backward()
        norms = clip_module_gradients(module, self.config.clip_norm, self.config.clip_scope)
        if self.on_update is not None:
            self.on_update(tag, module, norms)
        optimizer.step()

    def train_batch(self, batch: Batch, tau: float) -> dict:
        cfg = self.config
        G, D = self.generator, self.discriminator
        n = self.n_labels
        state = G.encode(batch.prefix, batch.prefix_lengths)
        out = {"d_loss": 0.0, "g_adv_loss": 0.0, "d_fake": float("nan")}
        adversarial = cfg.adversarial_weight > 0
        if adversarial:
            fake = G.decode_free_running(state, batch.suffix_lengths + FAKE_SLACK, "gumbel", tau, self.rng)
            relaxed = gumbel_softmax_sample(batch.suffix[..., :n], tau, self.rng)
            real = torch.cat([relaxed, batch.suffix[..., n:]], -1)
            d_real = D(real, batch.suffix_lengths)
            d_fake = D(fake.vectors.detach(), fake.lengths)
            d_loss = discriminator_loss(d_real, d_fake).mean()
            self._check(d_loss, "d_loss")
            self._update("D", D, self.opt_d, d_loss)
            out["d_loss"] = d_loss.item()
        logits, durs = G.decode_teacher_forced(state, batch.suffix)
        sup = batch_supervised_loss(logits, durs, batch.suffix, batch.suffix_lengths, cfg.supervised_time_weight)
        g_total = sup
        if adversarial:
            d_fake_g = D(fake.vectors, fake.lengths)
            g_adv = generator_adversarial_loss(d_fake_g).mean()
            g_total = sup + cfg.adversarial_weight * g_adv
            out["g_adv_loss"] = g_adv.item()
            out["d_fake"] = d_fake_g.mean().item()
        self._check(g_total, "g_loss")
        self._update("G", G, self.opt_g, g_total)
        out["g_supervised_loss"] = sup.item()
        return out

    def _check(self, loss: torch.Tensor, name: str):
        if not torch.isfinite(loss):
            diag = {"loss": name, "value": loss.item(), "epoch": self.epoch, "batch": self._batch_idx}
            log.error("aborting on non-finite loss: %s", diag)
            raise NonFiniteLoss(self.epoch, self._batch_idx, diag)

    def run_epoch(self, train_pairs: Sequence[EncodedPair], val_pairs: Sequence[EncodedPair]) -> LossRecord:
        cfg = self.config
        dtype = next(self.generator.parameters()).dtype
        tau = cfg.schedule.tau_at(self.epoch)
        order = torch.randperm(len(train_pairs), generator=self.rng).tolist()
        sums = {"d_loss": 0.0, "g_adv_loss": 0.0, "g_supervised_loss": 0.0, "d_fake": 0.0}
        n_batches = 0
        self.generator.train()
        self.discriminator.train()
        for self._batch_idx, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = collate([train_pairs[i] for i in order[start:start + cfg.batch_size]], dtype)
            stats = self.train_batch(batch, tau)
            for key in sums:
                sums[key] += stats[key]
            n_batches += 1
        self.generator.eval()
        self.discriminator.eval()
        val = evaluate_supervised(self.generator, val_pairs or train_pairs, cfg.supervised_time_weight)
        rec = LossRecord(
            epoch=self.epoch,
            d_loss=sums["d_loss"] / n_batches,
            g_adv_loss=sums["g_adv_loss"] / n_batches,
            g_supervised_loss=sums["g_supervised_loss"] / n_batches,
            validation_loss=val,
            mean_d_fake=sums["d_fake"] / n_batches,
            tau=tau,
        )
        if not rec.is_finite():
            raise NonFiniteLoss(self.epoch, -1, asdict(rec))
        self.history.append(rec)
        self.epoch += 1
        if val < self.best_validation:
            self.best_validation = val
            self.best_epoch = rec.epoch
            self.best_state = self.state_dict()
        return rec

    def fit(self, train_pairs, val_pairs, epochs: int | None = None, progress: Callable | None = None):
        if not train_pairs:
            raise ValueError("no training pairs")
        for _ in range(epochs if epochs is not None else self.config.epochs):
            rec = self.run_epoch(train_pairs, val_pairs)
            if progress is not None:
                progress(rec)
        return self.history

    def state_dict(self) -> dict:
        return {
            "generator": copy.deepcopy(self.generator.state_dict()),
            "discriminator": copy.deepcopy(self.discriminator.state_dict()),
            "opt_g": copy.deepcopy(self.opt_g.state_dict()),
            "opt_d": copy.deepcopy(self.opt_d.state_dict()),
            "rng": self.rng.get_state().clone(),
            "epoch": self.epoch,
        }

    def load_state_dict(self, state: dict):
        self.generator.load_state_dict(state["generator"])
        self.discriminator.load_state_dict(state["discriminator"])
        self.opt_g.load_state_dict(state["opt_g"])
        self.opt_d.load_state_dict(state["opt_d"])
        self.rng.set_state(state["rng"])
        self.epoch = state["epoch"]


def train(generator: Generator, discriminator: Discriminator, train_pairs, val_pairs,
          config: TrainConfig, on_update: UpdateHook | None = None):
    """Run ``config.epochs`` epochs; returns ``(generator, discriminator, history)``.

    The models are left at their best-validation parameters.
    """
    trainer = Trainer(generator, discriminator, config, on_update)
    trainer.fit(train_pairs, val_pairs)
    if trainer.best_state is not None:
        generator.load_state_dict(trainer.best_state["generator"])
        discriminator.load_state_dict(trainer.best_state["discriminator"])
    return generator, discriminator, trainer.history


# -- convergence -----------------------------------------------------------------

@dataclass
class ConvergenceSummary:
    slopes: dict[str, float]
    mean_d_fake_last: float
    longest_validation_rise: int
    diverged: bool


def convergence_report(records: Sequence[LossRecord], rise_threshold: int = 10) -> ConvergenceSummary:
    """Linear trend of each loss, final-epoch D(fake) and a divergence flag.

    Divergence means validation loss increased on ``rise_threshold``
    consecutive epochs.
    """
    if len(records) < 2:
        raise ValueError("need at least two records")
    epochs = np.array([r.epoch for r in records], dtype=float)
    slopes = {}
    for key in ("d_loss", "g_adv_loss", "g_supervised_loss", "validation_loss"):
        values = np.array([getattr(r, key) for r in records], dtype=float)
        slopes[key] = float(np.polyfit(epochs, values, 1)[0])
    rise = longest = 0
    for prev, cur in zip(records, records[1:]):
        rise = rise + 1 if cur.validation_loss > prev.validation_loss else 0
        longest = max(longest, rise)
    return ConvergenceSummary(slopes, records[-1].mean_d_fake, longest, longest >= rise_threshold)
