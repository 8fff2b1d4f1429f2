"""Bidirectional cross-modal retrieval: similarity matrices and Recall@K."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffcore import Tensor
from .encoders import ImageGridFeatures, SequenceFeatures
from .matchmap import PAIR_OF_MODE, ModeError, similarity, similarity_table

_NAME = {"I": "image", "A": "audio", "T": "text"}


@dataclass
class SimilarityMatrix:
    values: np.ndarray  # (B, B); rows are queries
    row_modality: str
    col_modality: str
    mode: str

    @property
    def T(self) -> SimilarityMatrix:
        return SimilarityMatrix(self.values.T, self.col_modality, self.row_modality, self.mode)


@dataclass
class RecallReport:
    direction: str  # query modality: "image" or "audio"
    B: int
    recalls: dict[int, float] = field(default_factory=dict)


def _modality(f) -> str:
    if isinstance(f, ImageGridFeatures):
        return "image"
    if isinstance(f, SequenceFeatures):
        return f.modality
    raise TypeError(f"expected feature objects, got {type(f).__name__}")


def _stack(feats) -> Tensor | None:
    arrs = [f.grid.data if isinstance(f, ImageGridFeatures) else f.seq.data for f in feats]
    if len({a.shape for a in arrs}) != 1:
        return None
    return Tensor(np.stack(arrs))


def similarity_matrix(queries: Sequence, targets: Sequence, mode: str, normalize: bool = False) -> SimilarityMatrix:
    """Entry (i, j) is the pooled similarity between queries[i] and targets[j]."""
    if len(queries) != len(targets):
        raise ValueError(f"paired evaluation sets differ in length: {len(queries)} vs {len(targets)}")
    if not queries:
        raise ValueError("evaluation set is empty")
    if mode not in PAIR_OF_MODE:
        raise ModeError(f"unknown similarity mode {mode!r}")
    qm, tm = _modality(queries[0]), _modality(targets[0])
    pair = PAIR_OF_MODE[mode]
    first, second = _NAME[pair[0]], _NAME[pair[1]]
    if {qm, tm} != {first, second}:
        raise ModeError(f"mode {mode} compares {first} with {second}, not {qm} with {tm}")
    if any(_modality(q) != qm for q in queries) or any(_modality(t) != tm for t in targets):
        raise ValueError("mixed modalities within a query or target list")
    xs, ys = (queries, targets) if qm == first else (targets, queries)
    bx, by = _stack(xs), _stack(ys)
    if bx is not None and by is not None:
        vals = similarity_table(bx, by, mode, normalize).data
    else:
        vals = np.array([[similarity(x, y, mode, normalize).item() for y in ys] for x in xs])
    if qm != first:
        vals = vals.T
    return SimilarityMatrix(np.ascontiguousarray(vals), qm, tm, mode)


def ranks_of_truth(scores: np.ndarray) -> np.ndarray:
    """0-based rank of target i in query i's descending ranking (stable index tie-break)."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, axis=1, kind="stable")
    B = scores.shape[0]
    return np.argmax(order == np.arange(B)[:, None], axis=1)


def recall_from_scores(scores: np.ndarray, k: int) -> float:
    """Fraction of rows whose diagonal target lands in the top ``k``."""
    scores = np.asarray(scores)
    B = scores.shape[0]
    if scores.ndim != 2 or scores.shape[1] != B:
        raise ValueError(f"expected a square score matrix, got shape {scores.shape}")
    if not 1 <= k <= B:
        raise ValueError(f"K must lie in [1, {B}], got {k}")
    return float(np.mean(ranks_of_truth(scores) < k))


def recall_at_k(S: SimilarityMatrix, k: int, direction: str | None = None) -> float:
    """Recall@K with ``direction`` naming the query modality (defaults to the rows)."""
    direction = direction or S.row_modality
    if direction == S.row_modality:
        return recall_from_scores(S.values, k)
    if direction == S.col_modality:
        return recall_from_scores(S.values.T, k)
    raise ValueError(f"direction {direction!r} is neither {S.row_modality!r} nor {S.col_modality!r}")


def recall_report(S: SimilarityMatrix, direction: str, ks: Sequence[int] = (1, 5, 10)) -> RecallReport:
    B = S.values.shape[0]
    clipped = sorted({min(k, B) for k in ks})
    return RecallReport(direction, B, {k: recall_at_k(S, k, direction) for k in clipped})
