"""Log-Mel filter-bank features from raw waveforms."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000


@dataclass
class LogMelSpectrogram:
    frames: np.ndarray  # (n_frames, n_mels)
    frame_shift_s: float
    frame_length_s: float


def read_pcm16(path: str | Path, sample_rate: int = 16000) -> Waveform:
    """Read headerless little-endian signed 16-bit mono PCM, scaled to [-1, 1)."""
    raw = np.fromfile(path, dtype="<i2")
    return Waveform(raw.astype(np.float64) / 32768.0, sample_rate)


def tone(freq_hz: float, duration_s: float, sample_rate: int = 16000, amplitude: float = 0.5) -> Waveform:
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    return Waveform(amplitude * np.sin(2 * np.pi * freq_hz * t), sample_rate)


def hamming(n: int) -> np.ndarray:
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2 * np.pi * k / (n - 1))


def _samples(seconds: float, sample_rate: int) -> int:
    n = seconds * sample_rate
    if abs(n - round(n)) > 1e-6:
        raise ValueError(f"{seconds} s is not a whole number of samples at {sample_rate} Hz")
    return int(round(n))


def frame_signal(w: Waveform, win_s: float = 0.025, hop_s: float = 0.010) -> np.ndarray:
    """Slice ``w`` into Hamming-windowed frames, shape (n_frames, win)."""
    win = _samples(win_s, w.sample_rate)
    hop = _samples(hop_s, w.sample_rate)
    x = np.asarray(w.samples, dtype=np.float64)
    if x.size < win:
        raise ValueError(f"signal has {x.size} samples; at least one window ({win}) is needed to form a frame")
    n_frames = (x.size - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx] * hamming(win)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, f_min: float = 0.0, f_max: float | None = None):
    """Triangular filters on the rfft bin grid; returns (weights, center_hz).

    weights has shape (n_mels, n_fft // 2 + 1). Edges are equally spaced in
    mel; each triangle peaks at 1 on its center frequency.
    """
    f_max = sample_rate / 2 if f_max is None else f_max
    if n_mels < 1:
        raise ValueError("n_mels must be at least 1")
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise ValueError(f"invalid band edges f_min={f_min}, f_max={f_max} for sample rate {sample_rate}")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    weights = np.clip(np.minimum(up, down), 0.0, None)
    return weights, edges[1:-1]


def log_mel(
    frames: np.ndarray,
    sample_rate: int = 16000,
    n_mels: int = 40,
    f_min: float = 0.0,
    f_max: float | None = None,
    floor_epsilon: float = 1e-10,
    hop_s: float = 0.010,
) -> LogMelSpectrogram:
    """Magnitude spectrum -> triangular Mel filter bank -> log(energy + floor)."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    win = frames.shape[1]
    n_fft = next_pow2(win)
    weights, _ = mel_filterbank(n_mels, n_fft, sample_rate, f_min, f_max)
    mag = np.abs(np.fft.rfft(frames, n=n_fft, axis=1))
    energy = mag @ weights.T
    return LogMelSpectrogram(np.log(energy + floor_epsilon), hop_s, win / sample_rate)


def waveform_to_logmel(
    w: Waveform, n_mels: int = 40, win_s: float = 0.025, hop_s: float = 0.010, **kwargs
) -> LogMelSpectrogram:
    return log_mel(frame_signal(w, win_s, hop_s), w.sample_rate, n_mels, hop_s=hop_s, **kwargs)
