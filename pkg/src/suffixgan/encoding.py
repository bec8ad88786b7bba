"""Vocabulary, augmented one-hot encoding and (prefix, suffix) pair expansion.

An encoded sequence is a float array of shape ``(length, n_labels + 1)``:
the first ``n_labels`` columns hold the one-hot activity (EOS last) and the
final column holds the normalized elapsed time since the previous event.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .eventlog import EmptyLog, EventLog, Trace

EOS = "<EOS>"
DATASET_FORMAT = "suffixgan-pairs"
DATASET_VERSION = 1


class UnknownLabel(KeyError):
    def __init__(self, label: str):
        super().__init__(f"activity {label!r} is not in the vocabulary")
        self.label = label


@dataclass(frozen=True)
class Vocabulary:
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels or self.labels[-1] != EOS:
            raise ValueError("vocabulary must end with the EOS marker")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels in vocabulary")
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def eos_index(self) -> int:
        return len(self.labels) - 1

    @property
    def width(self) -> int:
        """Width of an augmented vector: one-hot plus the duration slot."""
        return len(self.labels) + 1

    def index_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownLabel(label) from None

    def label_of(self, index: int) -> str:
        return self.labels[index]


@dataclass(frozen=True)
class TimeNormalizer:
    scale: float = 1.0  # days

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def normalize(self, days):
        return np.divide(days, self.scale)

    def denormalize(self, value):
        return np.multiply(value, self.scale)


@dataclass
class EncodedPair:
    case_id: str
    k: int  # prefix length in real events
    prefix: np.ndarray
    suffix: np.ndarray  # ends with the EOS vector
    remaining_time: float  # days

    def suffix_labels(self, vocab: Vocabulary) -> list[str]:
        return decode_labels(self.suffix, vocab)

    def prefix_labels(self, vocab: Vocabulary) -> list[str]:
        return decode_labels(self.prefix, vocab)


def build_vocabulary(log: EventLog | Iterable[str]) -> Vocabulary:
    labels = log.activity_universe if isinstance(log, EventLog) else set(log)
    if not labels:
        raise EmptyLog("cannot build a vocabulary from an empty log")
    if EOS in labels:
        raise ValueError(f"activity label {EOS!r} is reserved")
    return Vocabulary(tuple(sorted(labels)) + (EOS,))


def fit_normalizer(train_log: EventLog) -> TimeNormalizer:
    """Scale durations by the largest duration seen in training (1 if all are zero)."""
    longest = max((e.duration for t in train_log.traces for e in t.events), default=0.0)
    return TimeNormalizer(longest if longest > 0 else 1.0)


def encode_sequence(
    labels: Sequence[str], days: Sequence[float], vocab: Vocabulary, norm: TimeNormalizer
) -> np.ndarray:
    out = np.zeros((len(labels), vocab.width), dtype=np.float64)
    for i, (lab, d) in enumerate(zip(labels, days)):
        out[i, vocab.index_of(lab)] = 1.0
        out[i, -1] = norm.normalize(d)
    return out


def eos_vector(vocab: Vocabulary) -> np.ndarray:
    v = np.zeros(vocab.width, dtype=np.float64)
    v[vocab.eos_index] = 1.0
    return v


def encode_trace(trace: Trace, vocab: Vocabulary, norm: TimeNormalizer) -> np.ndarray:
    """Encode every event of ``trace`` and append a terminal EOS row with duration 0."""
    body = encode_sequence(trace.labels, trace.durations, vocab, norm)
    return np.vstack([body, eos_vector(vocab)[None, :]])


def decode_labels(encoded: np.ndarray, vocab: Vocabulary, keep_eos: bool = False) -> list[str]:
    idx = np.argmax(np.asarray(encoded)[:, : len(vocab)], axis=1)
    return [vocab.label_of(i) for i in idx if keep_eos or i != vocab.eos_index]


def make_pairs(trace: Trace, vocab: Vocabulary, norm: TimeNormalizer) -> list[EncodedPair]:
    """Expand a trace into pairs for every prefix length 2 <= k <= len(trace) - 1."""
    enc = encode_trace(trace, vocab, norm)
    durs = trace.durations
    pairs = []
    for k in range(2, len(trace)):
        pairs.append(
            EncodedPair(
                case_id=trace.case_id,
                k=k,
                prefix=enc[:k].copy(),
                suffix=enc[k:].copy(),
                remaining_time=math.fsum(durs[k:]),
            )
        )
    return pairs


def make_dataset(log: EventLog, vocab: Vocabulary, norm: TimeNormalizer) -> list[EncodedPair]:
    return [p for t in log.traces for p in make_pairs(t, vocab, norm)]


def log_checksum(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_pairs(
    path: str | Path,
    pairs: Sequence[EncodedPair],
    vocab: Vocabulary,
    norm: TimeNormalizer,
    source_checksum: str = "",
    extra: dict | None = None,
) -> None:
    """Write pairs as JSON lines behind a header line.

    Durations are stored in days so a reload re-encodes them exactly.
    """
    header = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "vocabulary": list(vocab.labels),
        "scale": norm.scale,
        "source_sha256": source_checksum,
        "n_pairs": len(pairs),
    }
    header.update(extra or {})
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for p in pairs:
            rec = {
                "case_id": p.case_id,
                "k": p.k,
                "prefix_labels": decode_labels(p.prefix, vocab),
                "prefix_days": [float(x) for x in norm.denormalize(p.prefix[:, -1])],
                "suffix_labels": decode_labels(p.suffix, vocab),
                "suffix_days": [float(x) for x in norm.denormalize(p.suffix[:-1, -1])],
                "remaining_time": p.remaining_time,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_pairs(path: str | Path) -> tuple[list[EncodedPair], Vocabulary, TimeNormalizer, dict]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != DATASET_FORMAT:
            raise ValueError(f"{path}: not a pair dataset file")
        vocab = Vocabulary(tuple(header["vocabulary"]))
        norm = TimeNormalizer(header["scale"])
        pairs = []
        for line in fh:
            rec = json.loads(line)
            prefix = encode_sequence(rec["prefix_labels"], rec["prefix_days"], vocab, norm)
            body = encode_sequence(rec["suffix_labels"], rec["suffix_days"], vocab, norm)
            suffix = np.vstack([body, eos_vector(vocab)[None, :]])
            pairs.append(EncodedPair(rec["case_id"], rec["k"], prefix, suffix, rec["remaining_time"]))
    return pairs, vocab, norm, header
