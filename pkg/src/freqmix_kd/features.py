"""F0 sub-band log-power-spectrum features (45 bins x 600 frames)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import Waveform
from .errors import ConfigError, DataError, ShapeMismatch, TooShort

N_BINS = 45
N_FRAMES = 600
LOG_FLOOR = 1e-12

FEAT_MAGIC = b"FKDFEAT\x00"


@dataclass
class StftConfig:
    window: str = "blackman"
    win_len: int = 1728
    hop: int = 130
    fft_len: int = 1728
    n_bins: int = N_BINS
    n_frames: int = N_FRAMES
    # per-utterance mean/variance normalisation; off by default
    normalize: bool = False

    def __post_init__(self):
        if self.window != "blackman":
            raise ConfigError(f"features.window: only 'blackman' is supported, got {self.window!r}")
        if self.hop < 1:
            raise ConfigError("features.hop must be >= 1")
        if self.win_len > self.fft_len:
            raise ConfigError("features.win_len must not exceed fft_len")


@dataclass
class Spectrogram:
    values: np.ndarray  # [n_bins, n_frames]
    bin_hz: float


@dataclass
class FeatureMap:
    values: np.ndarray  # [45, 600]
    utt_id: str = ""


def blackman_window(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("window length must be >= 2")
    r = np.arange(n) / (n - 1)
    # summed in this order so the endpoint and midpoint values are exact
    return 0.42 + 0.08 * np.cos(4.0 * np.pi * r) - 0.5 * np.cos(2.0 * np.pi * r)


def n_frames_for(length: int, cfg: StftConfig) -> int:
    return (length - cfg.win_len) // cfg.hop + 1


def frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Windowed frames ``[n_frames, win_len]``."""
    if x.size < cfg.win_len:
        raise TooShort(f"{x.size} samples < window length {cfg.win_len}")
    frames = sliding_window_view(x, cfg.win_len)[:: cfg.hop]
    return frames * blackman_window(cfg.win_len)


def power_spectrum(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """|X|^2 per frame, ``[n_frames, fft_len // 2 + 1]``."""
    spec = np.fft.rfft(frame_signal(x, cfg), n=cfg.fft_len, axis=1)
    return spec.real**2 + spec.imag**2


def lps(w: Waveform, cfg: StftConfig | None = None) -> Spectrogram:
    cfg = cfg or StftConfig()
    power = power_spectrum(w.samples, cfg)
    values = np.log(np.maximum(power, LOG_FLOOR)).T
    return Spectrogram(np.ascontiguousarray(values), w.sample_rate_hz / cfg.fft_len)


def subband_and_fix(s: Spectrogram | np.ndarray, n_bins: int = N_BINS, n_frames: int = N_FRAMES,
                    utt_id: str = "") -> FeatureMap:
    """Keep the lowest ``n_bins`` rows, then fix the time axis to ``n_frames``.

    Short inputs are extended as original, reversed, original, ... before
    truncation, so the time axis stays mirror-continuous.
    """
    v = s.values if isinstance(s, Spectrogram) else np.asarray(s)
    if v.ndim != 2 or v.shape[0] < n_bins or v.shape[1] < 1:
        raise ShapeMismatch(f"need >= {n_bins} bins and >= 1 frame, got {v.shape}")
    v = v[:n_bins]
    if v.shape[1] < n_frames:
        pieces, total, flip = [], 0, False
        while total < n_frames:
            pieces.append(v[:, ::-1] if flip else v)
            total += v.shape[1]
            flip = not flip
        v = np.concatenate(pieces, axis=1)
    return FeatureMap(np.ascontiguousarray(v[:, :n_frames]), utt_id)


def extract(w: Waveform, cfg: StftConfig | None = None) -> FeatureMap:
    cfg = cfg or StftConfig()
    fm = subband_and_fix(lps(w, cfg), cfg.n_bins, cfg.n_frames, w.utt_id)
    if cfg.normalize:
        v = fm.values
        fm.values = (v - v.mean()) / (v.std() + 1e-8)
    return fm


# --- feature cache ---------------------------------------------------------
#
# little-endian: 8s magic "FKDFEAT\0", u32 rows, u32 cols, rows*cols f32 row-major


def write_feature(path, fm: FeatureMap) -> None:
    rows, cols = fm.values.shape
    Path(path).write_bytes(FEAT_MAGIC + struct.pack("<II", rows, cols)
                           + fm.values.astype("<f4").tobytes())


def read_feature_header(path) -> tuple[int, int]:
    with open(path, "rb") as f:
        head = f.read(16)
    if len(head) < 16 or head[:8] != FEAT_MAGIC:
        raise DataError(f"{path}: not a feature file")
    return struct.unpack("<II", head[8:])


def read_feature(path) -> FeatureMap:
    rows, cols = read_feature_header(path)
    data = Path(path).read_bytes()[16:]
    if len(data) != 4 * rows * cols:
        raise DataError(f"{path}: payload size does not match {rows}x{cols}")
    values = np.frombuffer(data, dtype="<f4").reshape(rows, cols).astype(np.float64)
    return FeatureMap(values, Path(path).stem)
