"""Matchmaps between localized feature maps and their pooled similarities.

Canonical axis order of a matchmap is fixed by the modality pair:

    IA  image x audio  (N_r, N_c, N_a)
    IT  image x text   (N_r, N_c, N_w)
    TA  text  x audio  (N_w, N_a)

Pooling modes reduce the trailing localization axes, so any leading
axes (e.g. a query x target batch) pass through untouched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, amax, l2_normalize, matmul, mean, reshape, swapaxes
from .encoders import ImageGridFeatures, SequenceFeatures

MODES = ("SIMA", "MISA", "SIMT", "MIST", "STMA")
PAIR_OF_MODE = {"SIMA": "IA", "MISA": "IA", "SIMT": "IT", "MIST": "IT", "STMA": "TA"}
LOC_NDIM = {"IA": 3, "IT": 3, "TA": 2}
_LETTER = {"image": "I", "audio": "A", "text": "T"}
_CANONICAL = {frozenset("IA"): "IA", frozenset("IT"): "IT", frozenset("TA"): "TA"}


class ModeError(ValueError):
    pass


@dataclass
class Matchmap:
    values: Tensor
    pair: str  # "IA", "IT" or "TA"


def _features(x) -> tuple[Tensor, str]:
    if isinstance(x, ImageGridFeatures):
        return x.grid, "I"
    if isinstance(x, SequenceFeatures):
        return x.seq, _LETTER[x.modality]
    raise TypeError(f"expected ImageGridFeatures or SequenceFeatures, got {type(x).__name__}")


def inner_matchmap(x, y, normalize: bool = False) -> Tensor:
    """Inner products between every localized vector of ``x`` and of ``y``.

    x: (*P, D), y: (*Q, D) -> (*P, *Q). With ``normalize`` both sides are
    L2-normalized first (cosine similarity; zero vectors give zero).
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    y = y if isinstance(y, Tensor) else Tensor(y)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"embedding dimensions differ: {x.shape[-1]} vs {y.shape[-1]}")
    if normalize:
        x, y = l2_normalize(x), l2_normalize(y)
    P, Q, D = x.shape[:-1], y.shape[:-1], x.shape[-1]
    m = matmul(reshape(x, (-1, D)), swapaxes(reshape(y, (-1, D)), 0, 1))
    return reshape(m, P + Q)


def compute_matchmap(x, y, normalize: bool = False) -> Matchmap:
    """Matchmap of two single-item feature objects, in canonical axis order."""
    tx, a = _features(x)
    ty, b = _features(y)
    key = frozenset((a, b))
    if a == b or key not in _CANONICAL:
        raise ModeError(f"no matchmap is defined between modalities {a} and {b}")
    pair = _CANONICAL[key]
    if pair[0] != a:
        tx, ty = ty, tx
    return Matchmap(inner_matchmap(tx, ty, normalize), pair)


def pairwise_matchmaps(xs: Tensor, ys: Tensor, loc_x: int, normalize: bool = False) -> Tensor:
    """All-pairs matchmaps between two batches.

    xs: (B1, *P, D) with len(P) == loc_x, ys: (B2, *Q, D) -> (B1, B2, *P, *Q).
    """
    if xs.shape[-1] != ys.shape[-1]:
        raise ValueError(f"embedding dimensions differ: {xs.shape[-1]} vs {ys.shape[-1]}")
    if normalize:
        xs, ys = l2_normalize(xs), l2_normalize(ys)
    B1, P = xs.shape[0], xs.shape[1 : 1 + loc_x]
    B2, Q = ys.shape[0], ys.shape[1:-1]
    D = xs.shape[-1]
    xf = reshape(xs, (B1, 1, int(np.prod(P)), D))
    yf = swapaxes(reshape(ys, (1, B2, int(np.prod(Q)), D)), 2, 3)
    return reshape(matmul(xf, yf), (B1, B2) + P + Q)


def pool(m: Tensor, mode: str) -> Tensor:
    """Reduce the trailing localization axes of a matchmap to a similarity."""
    if mode not in PAIR_OF_MODE:
        raise ModeError(f"unknown similarity mode {mode!r}; expected one of {MODES}")
    need = LOC_NDIM[PAIR_OF_MODE[mode]]
    if m.ndim < need:
        raise ModeError(f"mode {mode} needs a matchmap with {need} localization axes, got shape {m.shape}")
    if mode in ("SIMA", "SIMT"):
        # mean over (r, c) of the max over time / words
        return mean(amax(m, axis=-1), axis=(-2, -1))
    if mode in ("MISA", "MIST"):
        # mean over time / words of the max over (r, c)
        return mean(amax(m, axis=(-3, -2)), axis=-1)
    # STMA on (w, t): mean over words of the max over time
    return mean(amax(m, axis=-1), axis=-1)


def pool_similarity(m: Matchmap | Tensor, mode: str) -> Tensor:
    if isinstance(m, Matchmap):
        if mode not in PAIR_OF_MODE:
            raise ModeError(f"unknown similarity mode {mode!r}; expected one of {MODES}")
        if PAIR_OF_MODE[mode] != m.pair:
            raise ModeError(f"mode {mode} applies to {PAIR_OF_MODE[mode]} matchmaps, not {m.pair}")
        m = m.values
    return pool(m, mode)


def similarity(x, y, mode: str, normalize: bool = False) -> Tensor:
    return pool_similarity(compute_matchmap(x, y, normalize), mode)


def similarity_table(xs: Tensor, ys: Tensor, mode: str, normalize: bool = False) -> Tensor:
    """B1 x B2 table of S(x_i, y_j) for batches in the mode's canonical order.

    For IA/IT modes ``xs`` is an image batch (B1, N_r, N_c, D); for STMA it
    is a text batch (B1, N_w, D). ``ys`` is always a sequence batch.
    """
    if mode not in PAIR_OF_MODE:
        raise ModeError(f"unknown similarity mode {mode!r}; expected one of {MODES}")
    loc_x = 2 if PAIR_OF_MODE[mode] in ("IA", "IT") else 1
    if xs.ndim != loc_x + 2 or ys.ndim != 3:
        raise ModeError(f"mode {mode} got incompatible batch shapes {xs.shape} and {ys.shape}")
    return pool(pairwise_matchmaps(xs, ys, loc_x, normalize), mode)
