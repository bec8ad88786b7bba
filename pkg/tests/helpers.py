import math

import numpy as np
import torch

from suffixgan.seq2seq import ModelConfig, build_models

WORKED_STEPS = [[0.3, 0.35, 0.3, 0.05], [0.35, 0.3, 0.3, 0.05], [0.05, 0.3, 0.35, 0.3]]


def tiny_models(n_labels, hidden=8, layers=1, seed=0, dtype=torch.float64, std=0.5):
    gen, disc = build_models(ModelConfig(n_labels, hidden, layers, init_std=std), seed)
    return gen.to(dtype), disc.to(dtype)


def random_sequence(rng: np.random.Generator, length: int, n_labels: int) -> np.ndarray:
    x = np.zeros((length, n_labels + 1))
    x[np.arange(length), rng.integers(0, n_labels - 1, size=length)] = 1.0
    x[:, -1] = rng.uniform(0, 1, size=length)
    return x


def string_edit_bfs(source: str, alphabet: str, max_len: int) -> dict[str, int]:
    """Breadth-first search over strings; one edit per edge (unrestricted DL)."""
    from collections import deque

    dist = {source: 0}
    queue = deque([source])
    while queue:
        s = queue.popleft()
        nxt = set()
        for i in range(len(s)):
            nxt.add(s[:i] + s[i + 1:])
            for a in alphabet:
                nxt.add(s[:i] + a + s[i + 1:])
            if i + 1 < len(s):
                nxt.add(s[:i] + s[i + 1] + s[i] + s[i + 2:])
        if len(s) < max_len:
            for i in range(len(s) + 1):
                for a in alphabet:
                    nxt.add(s[:i] + a + s[i:])
        for t in nxt:
            if t not in dist:
                dist[t] = dist[s] + 1
                queue.append(t)
    return dist


def alignment_edit_search(s1, s2) -> int:
    """Shortest edit script that touches each position at most once (0-1 BFS over cursors)."""
    from collections import deque

    goal = (len(s1), len(s2))
    best = {(0, 0): 0}
    queue = deque([(0, 0)])
    while queue:
        i, j = queue.popleft()
        d = best[(i, j)]
        if (i, j) == goal:
            return d
        moves = []
        if i < len(s1):
            moves.append(((i + 1, j), 1))
        if j < len(s2):
            moves.append(((i, j + 1), 1))
        if i < len(s1) and j < len(s2):
            moves.append(((i + 1, j + 1), 0 if s1[i] == s2[j] else 1))
        if i + 1 < len(s1) and j + 1 < len(s2) and s1[i] == s2[j + 1] and s1[i + 1] == s2[j]:
            moves.append(((i + 2, j + 2), 1))
        for node, cost in moves:
            if d + cost < best.get(node, math.inf):
                best[node] = d + cost
                (queue.appendleft if cost == 0 else queue.append)(node)
    raise AssertionError("unreachable")
