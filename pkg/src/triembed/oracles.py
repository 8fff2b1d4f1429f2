"""Plain nested-loop reference implementations.

These share no code with the tensor path: they index numpy arrays one
scalar at a time and use only Python arithmetic, so agreement with the
vectorized implementation is a genuine cross-check.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def loop_inner(u, v) -> float:
    return sum(float(a) * float(b) for a, b in zip(u, v))


def loop_matchmap(x: np.ndarray, y: np.ndarray, normalize: bool = False) -> np.ndarray:
    """Entry at (p..., q...) is <x[p], y[q]>, optionally between unit vectors."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    P, Q = x.shape[:-1], y.shape[:-1]
    out = np.zeros(P + Q)
    for p in itertools.product(*(range(n) for n in P)):
        for q in itertools.product(*(range(n) for n in Q)):
            u, v = list(x[p]), list(y[q])
            if normalize:
                nu, nv = math.sqrt(loop_inner(u, u)), math.sqrt(loop_inner(v, v))
                if nu == 0 or nv == 0:
                    out[p + q] = 0.0
                    continue
                u = [a / nu for a in u]
                v = [b / nv for b in v]
            out[p + q] = loop_inner(u, v)
    return out


def loop_pool(m: np.ndarray, mode: str) -> float:
    m = np.asarray(m, dtype=np.float64)
    if mode in ("SIMA", "SIMT"):
        R, C, T = m.shape
        total = 0.0
        for r in range(R):
            for c in range(C):
                total += max(float(m[r, c, t]) for t in range(T))
        return total / (R * C)
    if mode in ("MISA", "MIST"):
        R, C, T = m.shape
        total = 0.0
        for t in range(T):
            total += max(float(m[r, c, t]) for r in range(R) for c in range(C))
        return total / T
    if mode == "STMA":
        W, T = m.shape
        total = 0.0
        for w in range(W):
            total += max(float(m[w, t]) for t in range(T))
        return total / W
    raise ValueError(f"unknown mode {mode!r}")


def loop_ranking_loss(tables: dict, imp: dict, eta: float, trimodal: bool) -> float:
    """Sum over anchors of every hinge term, written out one term at a time.

    ``tables`` maps "IA"/"IT"/"TA" to square nested sequences with
    entry [i][j] = S(X_i, Y_j); ``imp`` maps slot letters to index lists.
    """
    ia = tables["IA"]
    B = len(ia)
    total = 0.0
    for i in range(B):
        total += max(0.0, ia[i][imp["j"][i]] - ia[i][i] + eta)
        total += max(0.0, ia[imp["k"][i]][i] - ia[i][i] + eta)
        if trimodal:
            it, ta = tables["IT"], tables["TA"]
            total += max(0.0, it[i][imp["l"][i]] - it[i][i] + eta)
            total += max(0.0, it[imp["m"][i]][i] - it[i][i] + eta)
            total += max(0.0, ta[i][imp["n"][i]] - ta[i][i] + eta)
            total += max(0.0, ta[imp["o"][i]][i] - ta[i][i] + eta)
    return total


def loop_recall(scores: np.ndarray, k: int) -> float:
    """Recall@k by explicit counting: a target is beaten by every strictly
    higher score and by equal scores at lower indices."""
    scores = np.asarray(scores)
    B = scores.shape[0]
    hits = 0
    for i in range(B):
        ahead = 0
        for j in range(B):
            if scores[i, j] > scores[i, i] or (scores[i, j] == scores[i, i] and j < i):
                ahead += 1
        hits += ahead < k
    return hits / B
