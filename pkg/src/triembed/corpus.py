"""Corpus preparation: annotation alignment, frame picking, span cleanup,
a planted-concept synthetic generator, and manifest I/O.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .checkpoint import atomic_write_text, load_tensors, save_tensors

SPLITS = ("train", "val", "test")
TRAIN_FRAMES = 5
STOPWORDS = frozenset({"a", "an", "the", "some"})

SHIFT_S = 0.3
MAX_SPAN_S = 3.0
MIN_SPAN_S = 0.1


@dataclass
class ActionAnnotation:
    video_id: str
    start_s: float
    end_s: float
    text: str
    language: str = "en"

    def __post_init__(self) -> None:
        if not self.start_s < self.end_s:
            raise ValueError(f"action {self.text!r}: start {self.start_s} must precede end {self.end_s}")


@dataclass
class NarrationAnnotation:
    video_id: str
    start_s: float
    end_s: float
    text: str

    def __post_init__(self) -> None:
        if not self.start_s < self.end_s:
            raise ValueError(f"narration {self.text!r}: start {self.start_s} must precede end {self.end_s}")


@dataclass
class TupleRecord:
    id: str
    split: str
    concept: str
    image_ref: str
    audio_ref: str
    tokens: list[int]

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"record {self.id}: unknown split {self.split!r}")


# --------------------------------------------------------------------------
# Action / narration alignment
# --------------------------------------------------------------------------


def stem(word: str) -> str:
    """Strip one of -ing, -ed, -es, -s from a lowercased token.

    -es is only removed after a sibilant (boxes, dishes) so that 'plates'
    and 'plate' share a stem; stems shorter than three letters are kept whole.
    """
    w = word.lower()
    if w.endswith("ing") and len(w) - 3 >= 3:
        return w[:-3]
    if w.endswith("ed") and len(w) - 2 >= 3:
        return w[:-2]
    if w.endswith("es") and len(w) - 2 >= 3 and w[:-2].endswith(("s", "x", "z", "ch", "sh")):
        return w[:-2]
    if w.endswith("s") and not w.endswith("ss") and len(w) - 1 >= 3:
        return w[:-1]
    return w


def stemmed_tokens(text: str) -> list[str]:
    words = "".join(ch if ch.isalnum() else " " for ch in text.lower()).split()
    return [stem(w) for w in words if w not in STOPWORDS]


def _contains(seq: Sequence[str], sub: Sequence[str]) -> bool:
    n = len(sub)
    return n > 0 and any(list(seq[i : i + n]) == list(sub) for i in range(len(seq) - n + 1))


def texts_match(action_text: str, narration_text: str) -> bool:
    """Equality, equal stemmed-token sets, or contiguous stemmed inclusion."""
    if action_text.strip().lower() == narration_text.strip().lower():
        return True
    a, n = stemmed_tokens(action_text), stemmed_tokens(narration_text)
    if a and set(a) == set(n):
        return True
    return _contains(a, n)


@dataclass
class AlignmentResult:
    pairs: list[tuple[ActionAnnotation, NarrationAnnotation]]
    unmatched_actions: int
    unmatched_narrations: int
    non_english: int = 0


def align_actions_narrations(
    actions: Iterable[ActionAnnotation], narrations: Iterable[NarrationAnnotation], language: str = "en"
) -> AlignmentResult:
    """Greedy temporal alignment within each video.

    Narrations are visited in start-time order; each takes the matching,
    still-unused action of the same video whose start time is closest
    (earlier action on ties). Actions not tagged ``language`` are dropped.
    """
    actions = list(actions)
    kept = [a for a in actions if a.language == language]
    non_english = len(actions) - len(kept)
    narrations = sorted(narrations, key=lambda n: (n.video_id, n.start_s, n.end_s))
    by_video: dict[str, list[ActionAnnotation]] = {}
    for a in sorted(kept, key=lambda a: (a.video_id, a.start_s, a.end_s)):
        by_video.setdefault(a.video_id, []).append(a)
    used: set[int] = set()
    pairs = []
    for n in narrations:
        best, best_gap = None, np.inf
        for a in by_video.get(n.video_id, []):
            if id(a) in used or not texts_match(a.text, n.text):
                continue
            gap = abs(a.start_s - n.start_s)
            if gap < best_gap:
                best, best_gap = a, gap
        if best is not None:
            used.add(id(best))
            pairs.append((best, n))
    return AlignmentResult(pairs, len(kept) - len(pairs), len(narrations) - len(pairs), non_english)


# --------------------------------------------------------------------------
# Frame selection and narration span cleanup
# --------------------------------------------------------------------------


def select_frames(frame_count: int, split: str, n: int = TRAIN_FRAMES) -> list[int]:
    """Train: n interior frames of n+2 equally spaced ones. Val/test: the middle frame."""
    if frame_count < 1:
        raise ValueError(f"clip must have at least one frame, got {frame_count}")
    if split == "train":
        step = (frame_count - 1) / (n + 1)
        return [int(np.floor(i * step + 0.5)) for i in range(1, n + 1)]
    if split in ("val", "test"):
        return [(frame_count - 1) // 2]
    raise ValueError(f"unknown split {split!r}")


def adjust_narration_span(start_s: float, end_s: float) -> tuple[float, float] | None:
    """Shift the start 0.3 s earlier (clamped at 0), cap the span at 3 s.

    Returns None when the result is shorter than 0.1 s.
    """
    if not start_s < end_s:
        raise ValueError(f"span start {start_s} must precede end {end_s}")
    start = max(0.0, round(start_s - SHIFT_S, 9))
    end = end_s
    if end - start > MAX_SPAN_S:
        end = round(start + MAX_SPAN_S, 9)
    if end - start < MIN_SPAN_S - 1e-12:
        return None
    return start, end


# --------------------------------------------------------------------------
# Synthetic planted-concept corpus
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    n_concepts: int = 50
    n_train: int = 400
    n_val: int = 50
    grid_rows: int = 4
    grid_cols: int = 4
    cell_size: int = 8
    audio_frames: int = 32
    feat_dim: int = 16
    text_len: int = 4
    n_fillers: int = 20
    span_min: int = 6
    span_max: int = 12
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_concepts", "n_train", "n_val", "grid_rows", "grid_cols", "cell_size",
                     "audio_frames", "feat_dim", "text_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_val > self.n_concepts:
            raise ValueError(f"n_val={self.n_val} exceeds n_concepts={self.n_concepts}; "
                             "validation concepts must be pairwise distinct")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 1 <= self.span_min <= self.span_max <= self.audio_frames:
            raise ValueError("need 1 <= span_min <= span_max <= audio_frames")

    @property
    def vocab_size(self) -> int:
        return self.n_concepts + self.n_fillers


@dataclass
class Corpus:
    """Records plus dense payload arrays aligned with them (row i <-> records[i])."""

    records: list[TupleRecord]
    images: np.ndarray  # (N, H, W, C)
    audio: np.ndarray  # (N, T, F)
    tokens: np.ndarray  # (N, W) int
    vocab_size: int
    meta: dict[str, str] = field(default_factory=dict)

    def split_indices(self, split: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.records) if r.split == split], dtype=np.int64)


def generate_synthetic_corpus(cfg: SyntheticConfig) -> Corpus:
    """Plant one concept signature per record in every modality.

    The signature is written into every pixel of one random grid cell of
    the image and every frame of one random contiguous audio span; the
    token sequence holds the concept's id among filler ids. All other image
    and audio entries are N(0, noise_sigma^2).
    """
    rng = np.random.default_rng(cfg.seed)
    signatures = rng.standard_normal((cfg.n_concepts, cfg.feat_dim))
    concepts = np.concatenate([
        rng.integers(0, cfg.n_concepts, size=cfg.n_train),
        rng.choice(cfg.n_concepts, size=cfg.n_val, replace=False),
    ])
    N = concepts.size
    H, W, cs = cfg.grid_rows * cfg.cell_size, cfg.grid_cols * cfg.cell_size, cfg.cell_size
    images = cfg.noise_sigma * rng.standard_normal((N, H, W, cfg.feat_dim))
    audio = cfg.noise_sigma * rng.standard_normal((N, cfg.audio_frames, cfg.feat_dim))
    tokens = np.empty((N, cfg.text_len), dtype=np.int64)
    records = []
    for i, c in enumerate(concepts):
        r, col = rng.integers(cfg.grid_rows), rng.integers(cfg.grid_cols)
        images[i, r * cs : (r + 1) * cs, col * cs : (col + 1) * cs, :] = signatures[c]
        span = rng.integers(cfg.span_min, cfg.span_max + 1)
        t0 = rng.integers(0, cfg.audio_frames - span + 1)
        audio[i, t0 : t0 + span, :] = signatures[c]
        words = cfg.n_concepts + rng.integers(0, max(cfg.n_fillers, 1), size=cfg.text_len) if cfg.n_fillers \
            else np.full(cfg.text_len, c)
        words[rng.integers(cfg.text_len)] = c
        tokens[i] = words
        split = "train" if i < cfg.n_train else "val"
        rid = f"{split}-{i:06d}"
        records.append(TupleRecord(rid, split, f"c{int(c)}", f"payloads.bin#{rid}/image",
                                   f"payloads.bin#{rid}/audio", [int(t) for t in words]))
    meta = {"source": "synthetic", "seed": str(cfg.seed), "n_concepts": str(cfg.n_concepts),
            "noise_sigma": repr(cfg.noise_sigma), "vocab_size": str(cfg.vocab_size)}
    return Corpus(records, images, audio, tokens, cfg.vocab_size, meta)


# --------------------------------------------------------------------------
# Manifest I/O
# --------------------------------------------------------------------------

COLUMNS = ("id", "split", "concept", "image_ref", "audio_ref", "tokens")


def format_manifest(records: Sequence[TupleRecord], meta: dict[str, str] | None = None) -> str:
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("record ids must be unique within a manifest")
    lines = [f"# {k}={v}" for k, v in (meta or {}).items()]
    lines.append("# " + "\t".join(COLUMNS))
    for r in records:
        lines.append("\t".join((r.id, r.split, r.concept, r.image_ref, r.audio_ref, " ".join(map(str, r.tokens)))))
    return "\n".join(lines) + "\n"


def write_manifest(path: str | Path, records: Sequence[TupleRecord], meta: dict[str, str] | None = None) -> None:
    atomic_write_text(path, format_manifest(records, meta))


def read_manifest(path: str | Path) -> tuple[list[TupleRecord], dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    records, meta = [], {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and "\t" not in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        fields = line.split("\t")
        if len(fields) != len(COLUMNS):
            raise ValueError(f"{path}:{lineno}: expected {len(COLUMNS)} tab-separated fields, got {len(fields)}")
        rid, split, concept, img, aud, toks = fields
        try:
            ids = [int(t) for t in toks.split()]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: tokens must be integer ids") from exc
        records.append(TupleRecord(rid, split, concept, img, aud, ids))
    if len({r.id for r in records}) != len(records):
        raise ValueError(f"{path}: duplicate record ids")
    return records, meta


def write_corpus(corpus: Corpus, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads = {}
    for i, r in enumerate(corpus.records):
        payloads[f"{r.id}/image"] = corpus.images[i]
        payloads[f"{r.id}/audio"] = corpus.audio[i]
    save_tensors(out / "payloads.bin", payloads)
    write_manifest(out / "manifest.tsv", corpus.records, corpus.meta)
    return out / "manifest.tsv"


def load_corpus(manifest_path: str | Path) -> Corpus:
    """Load a manifest whose image/audio refs point into a payload container.

    Refs have the form ``<container file>#<tensor name>`` relative to the
    manifest's directory. Every record must resolve and share shapes.
    """
    manifest_path = Path(manifest_path)
    records, meta = read_manifest(manifest_path)
    if not records:
        raise ValueError(f"{manifest_path}: manifest has no records")
    containers: dict[str, dict[str, np.ndarray]] = {}

    def resolve(ref: str, rid: str) -> np.ndarray:
        if "#" not in ref:
            raise ValueError(f"record {rid}: reference {ref!r} is not a payload reference (file#name)")
        fname, name = ref.split("#", 1)
        if fname not in containers:
            p = manifest_path.parent / fname
            if not p.exists():
                raise FileNotFoundError(f"record {rid}: payload container {p} not found")
            containers[fname] = load_tensors(p)
        if name not in containers[fname]:
            raise ValueError(f"record {rid}: payload {name!r} missing from {fname}")
        return containers[fname][name]

    images = [resolve(r.image_ref, r.id) for r in records]
    audio = [resolve(r.audio_ref, r.id) for r in records]
    for label, arrs in (("image", images), ("audio", audio)):
        shapes = {a.shape for a in arrs}
        if len(shapes) != 1:
            raise ValueError(f"{label} payloads have inconsistent shapes {sorted(shapes)}")
    lengths = {len(r.tokens) for r in records}
    if len(lengths) != 1 or 0 in lengths:
        raise ValueError("token sequences must be non-empty and of equal length")
    tokens = np.array([r.tokens for r in records], dtype=np.int64)
    vocab = int(meta.get("vocab_size", tokens.max() + 1))
    if tokens.min() < 0 or tokens.max() >= vocab:
        raise ValueError(f"token ids fall outside the vocabulary [0, {vocab})")
    return Corpus(records, np.stack(images), np.stack(audio), tokens, vocab, meta)


# --------------------------------------------------------------------------
# Annotation files (CSV) for the prep command
# --------------------------------------------------------------------------


def read_actions_csv(path: str | Path) -> list[ActionAnnotation]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [ActionAnnotation(row["video_id"], float(row["start_s"]), float(row["end_s"]), row["text"],
                                 row.get("language") or "en") for row in csv.DictReader(fh)]


def read_narrations_csv(path: str | Path) -> list[NarrationAnnotation]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [NarrationAnnotation(row["video_id"], float(row["start_s"]), float(row["end_s"]), row["text"])
                for row in csv.DictReader(fh)]
