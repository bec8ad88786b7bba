"""Suffix similarity (Damerau-Levenshtein based) and remaining-time MAE."""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

from .training import LengthMismatch


class EmptyPredictionSet(ValueError):
    pass


def dl_distance(s1: Sequence[Hashable], s2: Sequence[Hashable]) -> int:
    """Restricted Damerau-Levenshtein (optimal string alignment) distance.

    Counts insertions, deletions, substitutions and transpositions of two
    adjacent items, with no substring edited more than once.

    >>> dl_distance("ab", "ba")
    1
    >>> dl_distance("a", "bcd")
    3
    """
    n, m = len(s1), len(s2)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if s1[i - 1] == s2[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
            if i > 1 and j > 1 and s1[i - 1] == s2[j - 2] and s1[i - 2] == s2[j - 1]:
                d[i][j] = min(d[i][j], d[i - 2][j - 2] + 1)
    return d[n][m]


def full_dl_distance(s1: Sequence[Hashable], s2: Sequence[Hashable]) -> int:
    """Unrestricted Damerau-Levenshtein distance (Lowrance-Wagner recurrence)."""
    n, m = len(s1), len(s2)
    big = n + m
    last_row: dict = {}
    d = [[0] * (m + 2) for _ in range(n + 2)]
    d[0][0] = big
    for i in range(n + 1):
        d[i + 1][0] = big
        d[i + 1][1] = i
    for j in range(m + 1):
        d[0][j + 1] = big
        d[1][j + 1] = j
    for i in range(1, n + 1):
        last_col = 0
        for j in range(1, m + 1):
            i1 = last_row.get(s2[j - 1], 0)
            j1 = last_col
            cost = 1
            if s1[i - 1] == s2[j - 1]:
                cost = 0
                last_col = j
            d[i + 1][j + 1] = min(
                d[i][j] + cost,
                d[i + 1][j] + 1,
                d[i][j + 1] + 1,
                d[i1][j1] + (i - i1 - 1) + 1 + (j - j1 - 1),
            )
        last_row[s1[i - 1]] = i
    return d[n + 1][m + 1]


def similarity(s_pred: Sequence[Hashable], s_true: Sequence[Hashable], restricted: bool = True) -> float:
    """``1 - DL / max(len)``; two empty sequences count as identical."""
    longest = max(len(s_pred), len(s_true))
    if longest == 0:
        return 1.0
    dist = dl_distance(s_pred, s_true) if restricted else full_dl_distance(s_pred, s_true)
    return 1.0 - dist / longest


def mae(pred_times: Sequence[float], true_times: Sequence[float]) -> float:
    if len(pred_times) != len(true_times):
        raise LengthMismatch(f"{len(pred_times)} predictions vs {len(true_times)} ground truths")
    if not pred_times:
        raise ValueError("mae of an empty sequence")
    return math.fsum(abs(p - t) for p, t in zip(pred_times, true_times)) / len(pred_times)


@dataclass
class EvaluationRow:
    case_id: str
    k: int
    similarity: float
    absolute_error_days: float
    best_of_k_similarity: float | None = None


@dataclass
class EvaluationReport:
    mean_similarity: float
    mae_days: float
    rows: list[EvaluationRow]
    counts_by_k: dict[int, int] = field(default_factory=dict)
    mean_best_of_k_similarity: float | None = None

    @property
    def n(self) -> int:
        return len(self.rows)

    def by_prefix_length(self) -> dict[int, dict]:
        groups: dict[int, list[EvaluationRow]] = defaultdict(list)
        for r in self.rows:
            groups[r.k].append(r)
        return {
            k: {
                "n": len(rs),
                "mean_similarity": math.fsum(r.similarity for r in rs) / len(rs),
                "mae_days": math.fsum(r.absolute_error_days for r in rs) / len(rs),
            }
            for k, rs in sorted(groups.items())
        }

    def summary(self) -> dict:
        out = {
            "mean_similarity": self.mean_similarity,
            "mae_days": self.mae_days,
            "n": self.n,
            "by_prefix_length": {str(k): v for k, v in self.by_prefix_length().items()},
        }
        if self.mean_best_of_k_similarity is not None:
            out["mean_best_of_k_similarity"] = self.mean_best_of_k_similarity
        return out

    def write(self, rows_csv: str | Path, summary_json: str | Path) -> None:
        with open(rows_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["case_id", "k", "similarity", "absolute_error_days", "best_of_k_similarity"])
            for r in self.rows:
                writer.writerow([r.case_id, r.k, repr(r.similarity), repr(r.absolute_error_days),
                                 "" if r.best_of_k_similarity is None else repr(r.best_of_k_similarity)])
        with open(summary_json, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_rows(rows_csv: str | Path) -> list[EvaluationRow]:
    rows = []
    with open(rows_csv, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            best = rec["best_of_k_similarity"]
            rows.append(EvaluationRow(rec["case_id"], int(rec["k"]), float(rec["similarity"]),
                                      float(rec["absolute_error_days"]), float(best) if best else None))
    return rows


@dataclass
class ScoredPrefix:
    """Ranked predictions for one prefix together with its ground truth."""

    case_id: str
    k: int
    predicted: list[list[str]]  # rank order, EOS excluded
    predicted_times: list[float]
    true_labels: list[str]
    true_time: float


def report_from_rows(rows: list[EvaluationRow]) -> EvaluationReport:
    if not rows:
        raise EmptyPredictionSet("no predictions to evaluate")
    counts: dict[int, int] = defaultdict(int)
    for r in rows:
        counts[r.k] += 1
    best = [r.best_of_k_similarity for r in rows]
    return EvaluationReport(
        mean_similarity=math.fsum(r.similarity for r in rows) / len(rows),
        mae_days=math.fsum(r.absolute_error_days for r in rows) / len(rows),
        rows=rows,
        counts_by_k=dict(sorted(counts.items())),
        mean_best_of_k_similarity=None if any(b is None for b in best) else math.fsum(best) / len(best),
    )


def evaluate(items: Sequence[ScoredPrefix], restricted: bool = True) -> EvaluationReport:
    """Score rank-1 predictions (and best-of-k when several are given)."""
    if not items:
        raise EmptyPredictionSet("no predictions to evaluate")
    multi = any(len(it.predicted) > 1 for it in items)
    rows = []
    for it in items:
        if not it.predicted:
            raise EmptyPredictionSet(f"case {it.case_id} k={it.k} has no predicted suffix")
        sims = [similarity(p, it.true_labels, restricted) for p in it.predicted]
        rows.append(EvaluationRow(
            case_id=it.case_id,
            k=it.k,
            similarity=sims[0],
            absolute_error_days=abs(it.predicted_times[0] - it.true_time),
            best_of_k_similarity=max(sims) if multi else None,
        ))
    return report_from_rows(rows)
