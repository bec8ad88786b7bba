"""Markov-chain process simulator for desk-scale experiments and tests."""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .eventlog import EventLog, build_trace

ORIGIN = datetime(2020, 1, 1, tzinfo=timezone.utc)
MAX_STEPS = 10_000


class NonAbsorbingModel(RuntimeError):
    pass


@dataclass
class SyntheticProcessModel:
    """Chain over ``activities`` plus an absorbing terminal state (last row/column).

    ``transitions[i, j]`` is the probability of moving from state ``i`` to
    ``j``; ``mean_days[i, j]`` is the mean of the exponential waiting time
    of that move. Traces start at ``start``.
    """

    activities: list[str]
    transitions: np.ndarray
    mean_days: np.ndarray
    start: str

    def __post_init__(self):
        n = len(self.activities) + 1
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.mean_days = np.asarray(self.mean_days, dtype=float)
        if self.transitions.shape != (n, n) or self.mean_days.shape != (n, n):
            raise ValueError(f"transition and duration matrices must be {n}x{n}")
        if (self.transitions < 0).any() or not np.allclose(self.transitions.sum(1), 1.0, atol=1e-9, rtol=0):
            raise ValueError("transition rows must be non-negative and sum to 1")
        if (self.mean_days < 0).any():
            raise ValueError("mean durations must be non-negative")
        if self.transitions[-1, -1] != 1.0:
            raise ValueError("terminal state must be absorbing")
        if self.start not in self.activities:
            raise ValueError(f"start activity {self.start!r} is not in the model")

    @property
    def terminal(self) -> int:
        return len(self.activities)

    @classmethod
    def from_edges(cls, edges: dict[str, dict[str, float]], start: str,
                   mean_days: dict[tuple[str, str], float] | float = 1.0) -> "SyntheticProcessModel":
        """Build from ``{src: {dst: prob}}``; ``"end"`` names the terminal state."""
        acts = sorted((set(edges) | {b for d in edges.values() for b in d}) - {"end"})
        idx = {a: i for i, a in enumerate(acts)}
        idx["end"] = len(acts)
        n = len(acts) + 1
        trans = np.zeros((n, n))
        means = np.zeros((n, n))
        trans[-1, -1] = 1.0
        for src, dsts in edges.items():
            for dst, p in dsts.items():
                trans[idx[src], idx[dst]] = p
                m = mean_days if isinstance(mean_days, (int, float)) else mean_days.get((src, dst), 1.0)
                means[idx[src], idx[dst]] = m
        return cls(acts, trans, means, start)

    def to_json(self) -> dict:
        return {
            "activities": self.activities,
            "transitions": self.transitions.tolist(),
            "mean_days": self.mean_days.tolist(),
            "start": self.start,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SyntheticProcessModel":
        return cls(data["activities"], np.array(data["transitions"]), np.array(data["mean_days"]), data["start"])


def chain_model(labels=("A", "B", "C", "D", "E", "F"), mean_days: float = 1.0) -> SyntheticProcessModel:
    """Deterministic chain ``labels[0] -> ... -> labels[-1] -> end``."""
    edges = {a: {b: 1.0} for a, b in zip(labels, labels[1:])}
    edges[labels[-1]] = {"end": 1.0}
    return SyntheticProcessModel.from_edges(edges, labels[0], mean_days)


def branching_model() -> SyntheticProcessModel:
    """Six-activity process with an early XOR split that shapes the rest of the case."""
    edges = {
        "A": {"B": 0.7, "C": 0.3},
        "B": {"D": 1.0},
        "C": {"D": 0.5, "E": 0.5},
        "D": {"E": 0.6, "F": 0.4},
        "E": {"F": 0.5, "end": 0.5},
        "F": {"end": 1.0},
    }
    means = {("A", "B"): 0.5, ("A", "C"): 2.0, ("B", "D"): 1.0, ("C", "D"): 3.0, ("C", "E"): 0.5,
             ("D", "E"): 1.5, ("D", "F"): 4.0, ("E", "F"): 0.5, ("E", "end"): 0.0, ("F", "end"): 0.0}
    return SyntheticProcessModel.from_edges(edges, "A", means)


def generate_synthetic_log(model: SyntheticProcessModel, n_traces: int, seed: int) -> EventLog:
    """Walk the chain ``n_traces`` times from ``model.start``.

    Event timestamps are rounded to whole seconds so the log survives a CSV
    round trip unchanged. Case ``i`` starts ``i`` hours after a fixed origin.
    """
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    rng = np.random.default_rng(seed)
    idx = {a: i for i, a in enumerate(model.activities)}
    traces = []
    width = len(str(n_traces - 1))
    for c in range(n_traces):
        case_id = f"case_{c:0{width}d}"
        state = idx[model.start]
        t = ORIGIN + timedelta(hours=c)
        items = [(model.activities[state], t)]
        for _ in range(MAX_STEPS):
            nxt = int(rng.choice(model.terminal + 1, p=model.transitions[state]))
            if nxt == model.terminal:
                break
            mean = model.mean_days[state, nxt]
            wait = rng.exponential(mean) if mean > 0 else 0.0
            t = t + timedelta(seconds=round(wait * 86400))
            items.append((model.activities[nxt], t))
            state = nxt
        else:
            raise NonAbsorbingModel(f"case {case_id} did not terminate within {MAX_STEPS} steps")
        traces.append(build_trace(case_id, items))
    return EventLog(traces)


def load_model(path: str | Path) -> SyntheticProcessModel:
    with open(path, encoding="utf-8") as fh:
        return SyntheticProcessModel.from_json(json.load(fh))
