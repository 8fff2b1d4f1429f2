"""Small trainable encoders mapping each modality to localized D-dim embeddings.

* images  (B, H, W, C)      -> grid      (B, H/2^L, W/2^L, D)
* log-Mel (B, T, n_mels)    -> sequence  (B, floor(T/4), D)
* tokens  (B, W) int ids    -> sequence  (B, W, D) by table lookup
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .audio import LogMelSpectrogram
from .diffcore import Tensor, conv1d, conv2d, index, maxpool1d, maxpool2d, relu


@dataclass
class ImageGridFeatures:
    grid: Tensor  # (N_r, N_c, D), or batched (B, N_r, N_c, D)

    modality = "image"

    @property
    def emb_size(self) -> int:
        return self.grid.shape[-1]


@dataclass
class SequenceFeatures:
    seq: Tensor  # (N, D), or batched (B, N, D)
    modality: str = "audio"

    def __post_init__(self) -> None:
        if self.modality not in ("audio", "text"):
            raise ValueError(f"sequence modality must be 'audio' or 'text', got {self.modality!r}")

    @property
    def emb_size(self) -> int:
        return self.seq.shape[-1]


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, name: str,
                  gain: float = 1.0) -> Tensor:
    bound = gain * np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class ImageEncoder:
    """``len(channels)`` stages of conv3x3 + ReLU + maxpool(2), then a 1x1 conv to D."""

    def __init__(self, in_channels: int = 3, channels: Sequence[int] = (8, 16, 16), emb_size: int = 16, seed=0,
                 init_gain: float = 1.0):
        rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.channels = tuple(channels)
        self.emb_size = emb_size
        self.params: dict[str, Tensor] = {}
        cin = in_channels
        for i, cout in enumerate(self.channels):
            self.params[f"image.conv{i}.w"] = _uniform_init(rng, (3, 3, cin, cout), 9 * cin, f"image.conv{i}.w", init_gain)
            self.params[f"image.conv{i}.b"] = Tensor(np.zeros(cout), requires_grad=True, name=f"image.conv{i}.b")
            cin = cout
        self.params["image.proj.w"] = _uniform_init(rng, (1, 1, cin, emb_size), cin, "image.proj.w", init_gain)
        self.params["image.proj.b"] = Tensor(np.zeros(emb_size), requires_grad=True, name="image.proj.b")

    @property
    def downsample(self) -> int:
        return 2 ** len(self.channels)

    def __call__(self, images) -> Tensor:
        x = images if isinstance(images, Tensor) else Tensor(images)
        if x.ndim != 4:
            raise ValueError(f"expected a (B, H, W, C) batch, got shape {x.shape}")
        _, H, W, C = x.shape
        f = self.downsample
        if H % f or W % f:
            raise ValueError(f"image size {H}x{W} must be divisible by the downsample factor {f}")
        if C != self.in_channels:
            raise ValueError(f"image has {C} channels, encoder expects {self.in_channels}")
        p = self.params
        for i in range(len(self.channels)):
            x = maxpool2d(relu(conv2d(x, p[f"image.conv{i}.w"], p[f"image.conv{i}.b"])))
        return conv2d(x, p["image.proj.w"], p["image.proj.b"])


class AudioEncoder:
    """1-D convolutions over time; the first layer spans every Mel band.

    Two conv + ReLU + maxpool(2) stages (temporal downsample 4) and a final
    linear conv to D.
    """

    downsample = 4

    def __init__(self, n_mels: int = 40, channels: Sequence[int] = (32, 32), emb_size: int = 16,
                 kernel: int = 5, seed=0, init_gain: float = 1.0):
        if len(channels) != 2:
            raise ValueError("the audio encoder has exactly two pooled stages")
        rng = np.random.default_rng(seed)
        self.n_mels = n_mels
        self.channels = tuple(channels)
        self.emb_size = emb_size
        self.kernel = kernel
        self.params: dict[str, Tensor] = {}
        cin = n_mels
        for i, cout in enumerate((*self.channels, emb_size)):
            self.params[f"audio.conv{i}.w"] = _uniform_init(rng, (kernel, cin, cout), kernel * cin, f"audio.conv{i}.w", init_gain)
            self.params[f"audio.conv{i}.b"] = Tensor(np.zeros(cout), requires_grad=True, name=f"audio.conv{i}.b")
            cin = cout

    def __call__(self, spectrograms) -> Tensor:
        x = spectrograms if isinstance(spectrograms, Tensor) else Tensor(spectrograms)
        if x.ndim != 3:
            raise ValueError(f"expected a (B, T, n_mels) batch, got shape {x.shape}")
        if x.shape[1] < self.downsample:
            raise ValueError(f"spectrogram has {x.shape[1]} frames; at least {self.downsample} are needed")
        if x.shape[2] != self.n_mels:
            raise ValueError(f"spectrogram has {x.shape[2]} Mel bands, encoder expects {self.n_mels}")
        p = self.params
        x = maxpool1d(relu(conv1d(x, p["audio.conv0.w"], p["audio.conv0.b"])))
        x = maxpool1d(relu(conv1d(x, p["audio.conv1.w"], p["audio.conv1.b"])))
        return conv1d(x, p["audio.conv2.w"], p["audio.conv2.b"])


class TextTable:
    """Fixed random token-embedding table; frozen unless ``frozen=False``."""

    def __init__(self, vocab_size: int, emb_size: int = 16, frozen: bool = True, seed=0):
        rng = np.random.default_rng(seed)
        self.vocab_size = vocab_size
        self.frozen = frozen
        self.table = Tensor(rng.uniform(-0.5, 0.5, size=(vocab_size, emb_size)),
                            requires_grad=not frozen, name="text.table")

    @property
    def emb_size(self) -> int:
        return self.table.shape[1]

    @property
    def params(self) -> dict[str, Tensor]:
        return {} if self.frozen else {"text.table": self.table}

    def __call__(self, token_ids) -> Tensor:
        return lookup(token_ids, self.table)


def lookup(token_ids, table: Tensor) -> Tensor:
    ids = np.asarray(token_ids)
    if ids.size == 0:
        raise ValueError("token sequence is empty")
    if not np.issubdtype(ids.dtype, np.integer):
        if not np.all(ids == np.round(ids)):
            raise ValueError("token ids must be integers")
        ids = ids.astype(np.int64)
    bad = (ids < 0) | (ids >= table.shape[0])
    if bad.any():
        raise ValueError(f"token id {int(ids[bad][0])} is outside the vocabulary [0, {table.shape[0]})")
    return index(table, ids)


# -- single-item functional forms --------------------------------------------


def encode_image(image, encoder: ImageEncoder) -> ImageGridFeatures:
    x = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    return ImageGridFeatures(encoder(x[None])[0])


def encode_audio(spec: LogMelSpectrogram | np.ndarray, encoder: AudioEncoder) -> SequenceFeatures:
    frames = spec.frames if isinstance(spec, LogMelSpectrogram) else np.asarray(spec, dtype=np.float64)
    return SequenceFeatures(encoder(frames[None])[0], "audio")


def encode_text(tokens, table: Tensor | TextTable, frozen: bool | None = None) -> SequenceFeatures:
    """Row w of the result is ``table[tokens[w]]``.

    With a bare array table, ``frozen`` (default True) decides whether the
    lookup is differentiable with respect to it.
    """
    if isinstance(table, TextTable):
        t = table.table
    elif isinstance(table, Tensor):
        t = table
    else:
        t = Tensor(table, requires_grad=not (True if frozen is None else frozen))
    if frozen is True and t.requires_grad:
        t = t.detach()
    return SequenceFeatures(lookup(tokens, t), "text")


# -- checkpoints --------------------------------------------------------------


def state_dict(*modules) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for m in modules:
        if isinstance(m, TextTable):
            out["text.table"] = m.table.data
        else:
            out.update({k: v.data for k, v in m.params.items()})
    return out


def load_state(modules, state: dict[str, np.ndarray]) -> None:
    for m in modules:
        items = {"text.table": m.table} if isinstance(m, TextTable) else m.params
        for k, t in items.items():
            if k not in state:
                raise KeyError(f"checkpoint has no tensor {k!r}")
            if state[k].shape != t.shape:
                raise ValueError(f"checkpoint tensor {k!r} has shape {state[k].shape}, expected {t.shape}")
            t.data[...] = state[k]
