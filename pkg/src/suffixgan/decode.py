"""Suffix decoding: beam search, greedy argmax and stochastic hallucination.

The search code is written against a small stepping interface so that it can
run on a trained :class:`~suffixgan.seq2seq.Generator` as well as on fixed
tables of per-step distributions::

    start() -> (probs, duration, state)
    advance(states, labels, durations) -> (probs[n, V], durations[n], states)

``probs`` is the distribution of the *next* label given everything consumed
so far, and ``duration`` the normalized time predicted for that step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Protocol, Sequence

import numpy as np
import torch

from .encoding import TimeNormalizer, Vocabulary
from .seq2seq import Generator


class EmptyBeam(RuntimeError):
    pass


class Stepper(Protocol):
    eos_index: int | None

    def start(self) -> tuple[np.ndarray, float, Any]: ...

    def advance(self, states: list, labels: list[int], durations: list[float]) -> tuple[np.ndarray, np.ndarray, list]: ...


@dataclass
class BeamHypothesis:
    labels: tuple[int, ...]
    durations: tuple[float, ...]
    score: float
    decoder_state: Any = None
    next_probs: np.ndarray | None = None
    next_duration: float = 0.0
    finished: bool = False


@dataclass
class Prediction:
    suffix_labels: list[str]
    remaining_time: float  # days
    score: float
    finished: bool = True
    label_indices: tuple[int, ...] = ()
    durations: tuple[float, ...] = ()  # normalized, EOS step excluded


def _neg_log(p: float) -> float:
    return math.inf if p <= 0 else -math.log(p)


def beam_search_core(
    stepper: Stepper,
    k: int,
    max_len: int,
    score_eos: bool = True,
    on_level: Callable[[int], None] | None = None,
) -> list[BeamHypothesis]:
    """Level-wise search keeping the ``k`` lowest-cost hypotheses.

    Cost is the summed negative log probability of the chosen labels.
    Candidates are generated in beam-rank order (children in label order)
    and sorted stably, so ties go to the child of the better-ranked parent
    and then to the smaller label index. Finished hypotheses stay in the
    pool and compete on raw score. Stops once the pool holds ``k`` finished
    hypotheses or after ``max_len`` levels.
    """
    if k < 1:
        raise ValueError("beam width must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    eos = stepper.eos_index
    probs, dur, state = stepper.start()
    beam = [BeamHypothesis((), (), 0.0, state, np.asarray(probs, dtype=np.float64), float(dur))]
    for _level in range(max_len):
        expand = [h for h in beam if not h.finished and h.next_probs is None]
        if expand:
            probs, durs, states = stepper.advance(
                [h.decoder_state for h in expand],
                [h.labels[-1] for h in expand],
                [h.durations[-1] for h in expand],
            )
            for h, p, d, s in zip(expand, probs, durs, states):
                h.next_probs = np.asarray(p, dtype=np.float64)
                h.next_duration = float(d)
                h.decoder_state = s
        candidates = []
        for h in beam:
            if h.finished:
                candidates.append(h)
                continue
            for label, p in enumerate(h.next_probs):
                is_eos = label == eos
                cost = _neg_log(p) if (score_eos or not is_eos) else 0.0
                if math.isinf(cost):
                    continue
                candidates.append(
                    BeamHypothesis(
                        labels=h.labels + (label,),
                        durations=h.durations + (h.next_duration,),
                        score=h.score + cost,
                        decoder_state=h.decoder_state,
                        finished=is_eos,
                    )
                )
        if on_level is not None:
            on_level(len(candidates))
        if not candidates:
            raise EmptyBeam("no hypothesis with non-zero probability")
        candidates.sort(key=lambda h: h.score)
        beam = candidates[:k]
        if all(h.finished for h in beam):
            break
    return beam


def to_prediction(h: BeamHypothesis, vocab: Vocabulary, norm: TimeNormalizer) -> Prediction:
    labels = list(h.labels)
    durs = list(h.durations)
    if h.finished:
        labels, durs = labels[:-1], durs[:-1]
    return Prediction(
        suffix_labels=[vocab.label_of(i) for i in labels],
        remaining_time=remaining_time_of(durs, norm),
        score=h.score,
        finished=h.finished,
        label_indices=tuple(labels),
        durations=tuple(durs),
    )


def remaining_time_of(prediction: Prediction | Sequence[float], norm: TimeNormalizer | None = None) -> float:
    """Sum of the denormalized step durations (the EOS step is never included)."""
    durs = prediction.durations if isinstance(prediction, Prediction) else prediction
    total = math.fsum(float(d) for d in durs)
    return float(norm.denormalize(total)) if norm is not None else total


class TableStepper:
    """Stepper over fixed per-level distributions, optionally conditioned on history.

    ``table`` is either a sequence of distributions (one per level) or a
    callable ``history -> (probs, duration)``.
    """

    def __init__(self, table, eos_index: int | None = None):
        self.table = table
        self.eos_index = eos_index

    def _lookup(self, history: tuple[int, ...]):
        if callable(self.table):
            out = self.table(history)
            return (out if isinstance(out, tuple) else (out, 0.0))
        level = len(history)
        if level >= len(self.table):
            raise IndexError("history is longer than the distribution table")
        return np.asarray(self.table[level], dtype=np.float64), 0.0

    def start(self):
        probs, dur = self._lookup(())
        return probs, dur, ()

    def advance(self, states, labels, durations):
        out_p, out_d, out_s = [], [], []
        for hist, lab in zip(states, labels):
            hist = hist + (lab,)
            p, d = self._lookup(hist)
            out_p.append(p)
            out_d.append(d)
            out_s.append(hist)
        return np.array(out_p), np.array(out_d), out_s


class GeneratorStepper:
    """Batched decoder stepping for a trained generator and one prefix."""

    def __init__(self, generator: Generator, prefix):
        self.generator = generator
        self.eos_index = generator.eos_index
        p = next(generator.parameters())
        self.dtype = p.dtype
        self.prefix = torch.as_tensor(np.asarray(prefix), dtype=self.dtype)[None]

    @torch.no_grad()
    def start(self):
        g = self.generator
        state = g.encode(self.prefix)
        logits, dur, state = g.step(g.start_vector(1), state)
        return torch.softmax(logits[0].double(), -1).numpy(), float(dur[0]), (state[0][:, 0], state[1][:, 0])

    @torch.no_grad()
    def advance(self, states, labels, durations):
        g = self.generator
        n = len(states)
        x = torch.zeros(n, 1, g.config.width, dtype=self.dtype)
        x[torch.arange(n), 0, torch.as_tensor(labels)] = 1.0
        x[:, 0, -1] = torch.as_tensor(durations, dtype=self.dtype)
        h = torch.stack([s[0] for s in states], 1)
        c = torch.stack([s[1] for s in states], 1)
        logits, dur, (h, c) = g.step(x, (h, c))
        probs = torch.softmax(logits.double(), -1).numpy()
        return probs, dur.double().numpy(), [(h[:, i], c[:, i]) for i in range(n)]


def beam_search(
    generator: Generator | Stepper,
    prefix,
    k: int,
    max_len: int,
    vocab: Vocabulary,
    norm: TimeNormalizer,
    score_eos: bool = True,
) -> list[Prediction]:
    """Top-``k`` suffixes for ``prefix``, ascending by score."""
    stepper = GeneratorStepper(generator, prefix) if isinstance(generator, Generator) else generator
    beam = beam_search_core(stepper, k, max_len, score_eos)
    return [to_prediction(h, vocab, norm) for h in beam]


def greedy_core(stepper: Stepper, max_len: int, score_eos: bool = True) -> BeamHypothesis:
    """Pick the most probable label at every step (lowest index on ties)."""
    probs, dur, state = stepper.start()
    labels, durs, score = [], [], 0.0
    for step in range(max_len):
        if step:
            p, d, s = stepper.advance([state], [labels[-1]], [durs[-1]])
            probs, dur, state = p[0], d[0], s[0]
        label = int(np.argmax(probs))
        is_eos = label == stepper.eos_index
        if score_eos or not is_eos:
            score += _neg_log(float(probs[label]))
        labels.append(label)
        durs.append(float(dur))
        if is_eos:
            return BeamHypothesis(tuple(labels), tuple(durs), score, state, finished=True)
    return BeamHypothesis(tuple(labels), tuple(durs), score, state, finished=False)


def argmax_decode(generator, prefix, max_len: int, vocab: Vocabulary, norm: TimeNormalizer,
                  score_eos: bool = True) -> Prediction:
    stepper = GeneratorStepper(generator, prefix) if isinstance(generator, Generator) else generator
    return to_prediction(greedy_core(stepper, max_len, score_eos), vocab, norm)


def hallucinate_decode(generator, prefix, max_len: int, rng: np.random.Generator, runs: int,
                       vocab: Vocabulary, norm: TimeNormalizer) -> list[Prediction]:
    """Sample ``runs`` suffixes label by label from the model's distributions."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    stepper = GeneratorStepper(generator, prefix) if isinstance(generator, Generator) else generator
    first = stepper.start()
    out = []
    for _ in range(runs):
        probs, dur, state = first
        labels, durs, score, finished = [], [], 0.0, False
        for step in range(max_len):
            if step:
                pn, dn, sn = stepper.advance([state], [labels[-1]], [durs[-1]])
                probs, dur, state = pn[0], dn[0], sn[0]
            p = np.asarray(probs, dtype=np.float64)
            label = int(rng.choice(len(p), p=p / p.sum()))
            score += _neg_log(float(p[label]))
            labels.append(label)
            durs.append(float(dur))
            if label == stepper.eos_index:
                finished = True
                break
        out.append(to_prediction(BeamHypothesis(tuple(labels), tuple(durs), score, None, finished=finished),
                                 vocab, norm))
    return out
