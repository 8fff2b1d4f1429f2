"""In-batch impostor sampling and margin ranking losses.

For a similarity table ``S`` with ``S[i, j] = S(X_i, Y_j)``, one pair of
hinge terms per anchor ``i`` is

    max(0, S[i, j_i] - S[i, i] + eta) + max(0, S[k_i, i] - S[i, i] + eta)

The bimodal loss uses the image-audio table only; the trimodal loss adds
the same pair of terms for the image-text and text-audio tables.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, hinge, index, sub, sum_
from .matchmap import PAIR_OF_MODE, ModeError, similarity_table

SLOTS = ("j", "k", "l", "m", "n", "o")


@dataclass(frozen=True)
class MarginConfig:
    eta: float = 1.0
    modes: tuple[str, str, str] = ("SIMA", "SIMT", "STMA")
    normalize: bool = False

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise ValueError(f"margin eta must be non-negative, got {self.eta}")
        expected = ("IA", "IT", "TA")
        for mode, pair in zip(self.modes, expected):
            if PAIR_OF_MODE.get(mode) != pair:
                raise ModeError(f"mode triple {self.modes} must be (image-audio, image-text, text-audio)")


@dataclass
class ImpostorSet:
    """Impostor index per anchor for each hinge slot; l..o only when trimodal."""

    j: np.ndarray
    k: np.ndarray
    l: np.ndarray | None = None
    m: np.ndarray | None = None
    n: np.ndarray | None = None
    o: np.ndarray | None = None

    @property
    def batch_size(self) -> int:
        return len(self.j)

    @property
    def trimodal(self) -> bool:
        return self.l is not None

    def validate(self, B: int, trimodal: bool = False) -> None:
        slots = SLOTS if trimodal else SLOTS[:2]
        anchors = np.arange(B)
        for s in slots:
            idx = getattr(self, s)
            if idx is None:
                raise ValueError(f"impostor slot {s} is missing")
            idx = np.asarray(idx)
            if idx.shape != (B,):
                raise ValueError(f"impostor slot {s} has shape {idx.shape}, expected ({B},)")
            if np.any((idx < 0) | (idx >= B)) or np.any(idx == anchors):
                raise ValueError(f"impostor slot {s} must index [0, {B}) and differ from its anchor")


@dataclass
class Minibatch:
    images: Tensor  # (B, N_r, N_c, D)
    audio: Tensor  # (B, N_a, D)
    text: Tensor | None = None  # (B, N_w, D)

    @property
    def batch_size(self) -> int:
        return self.images.shape[0]


def sample_impostors(B: int, trimodal: bool = False, rng_seed=None) -> ImpostorSet:
    """Independent uniform draws from [0, B) minus the anchor, one per slot."""
    if B < 2:
        raise ValueError(f"batch size {B} leaves no impostor candidates; need B >= 2")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    anchors = np.arange(B)
    draws = {}
    for s in SLOTS if trimodal else SLOTS[:2]:
        r = rng.integers(0, B - 1, size=B)
        draws[s] = r + (r >= anchors)
    return ImpostorSet(**draws)


def hardest_impostors(tables: dict[str, Tensor], trimodal: bool = False) -> ImpostorSet:
    """Most-violating in-batch impostor per anchor and slot (ties -> lowest index)."""
    def rows(S):
        s = S.data.copy()
        np.fill_diagonal(s, -np.inf)
        return np.argmax(s, axis=1)

    def cols(S):
        s = S.data.copy()
        np.fill_diagonal(s, -np.inf)
        return np.argmax(s, axis=0)

    ia = tables["IA"]
    out = {"j": rows(ia), "k": cols(ia)}
    if trimodal:
        out.update(l=rows(tables["IT"]), m=cols(tables["IT"]), n=rows(tables["TA"]), o=cols(tables["TA"]))
    return ImpostorSet(**out)


def pair_terms(S: Tensor, row_imp, col_imp, eta: float) -> tuple[Tensor, Tensor]:
    """Summed hinge terms against row impostors S[i, j_i] and column impostors S[k_i, i]."""
    S = S if isinstance(S, Tensor) else Tensor(S)
    a = np.arange(S.shape[0])
    pos = index(S, (a, a))
    row = sum_(hinge(sub(index(S, (a, np.asarray(row_imp))), pos) + eta))
    col = sum_(hinge(sub(index(S, (np.asarray(col_imp), a)), pos) + eta))
    return row, col


def ranking_terms(tables: dict[str, Tensor], imp: ImpostorSet, eta: float, trimodal: bool) -> list[Tensor]:
    """Per-slot summed hinge terms in the order j, k[, l, m, n, o]."""
    B = tables["IA"].shape[0]
    imp.validate(B, trimodal)
    terms = list(pair_terms(tables["IA"], imp.j, imp.k, eta))
    if trimodal:
        terms += pair_terms(tables["IT"], imp.l, imp.m, eta)
        terms += pair_terms(tables["TA"], imp.n, imp.o, eta)
    return terms


def ranking_loss(tables: dict[str, Tensor], imp: ImpostorSet, eta: float, trimodal: bool) -> Tensor:
    terms = ranking_terms(tables, imp, eta, trimodal)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def similarity_tables(batch: Minibatch, cfg: MarginConfig, trimodal: bool) -> dict[str, Tensor]:
    ia, it, ta = cfg.modes
    tables = {"IA": similarity_table(batch.images, batch.audio, ia, cfg.normalize)}
    if trimodal:
        if batch.text is None:
            raise ValueError("trimodal loss needs text features in the minibatch")
        tables["IT"] = similarity_table(batch.images, batch.text, it, cfg.normalize)
        tables["TA"] = similarity_table(batch.text, batch.audio, ta, cfg.normalize)
    return tables


def bimodal_loss(batch: Minibatch, imp: ImpostorSet, cfg: MarginConfig) -> Tensor:
    return ranking_loss(similarity_tables(batch, cfg, False), imp, cfg.eta, False)


def trimodal_loss(batch: Minibatch, imp: ImpostorSet, cfg: MarginConfig) -> Tensor:
    return ranking_loss(similarity_tables(batch, cfg, True), imp, cfg.eta, True)
