"""Time-domain Rawboost augmentation: ISD impulsive and SSI stationary noise."""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import lfilter

from .audio_io import Waveform
from .errors import ConfigError


class DegenerateSignalWarning(UserWarning):
    """SSI skipped: the input has zero power so SNR is undefined."""


class RawboostMode(str, Enum):
    SSI_ONLY = "ssi_only"
    ISD_ONLY = "isd_only"
    SERIES = "series_isd_then_ssi"


@dataclass
class SSIConfig:
    n_bands: int = 5
    min_center_hz: float = 20.0
    max_center_hz: float = 8000.0
    min_bandwidth_hz: float = 100.0
    max_bandwidth_hz: float = 1000.0
    min_gain_db: float = 0.0
    max_gain_db: float = 20.0
    snr_min_db: float = 10.0
    snr_max_db: float = 40.0


@dataclass
class ISDConfig:
    p_samples_pct: float = 10.0
    g_sd_db: float = 2.0


@dataclass
class RawboostConfig:
    ssi: SSIConfig = field(default_factory=SSIConfig)
    isd: ISDConfig = field(default_factory=ISDConfig)
    mode: RawboostMode = RawboostMode.SERIES

    def __post_init__(self):
        if isinstance(self.ssi, dict):
            self.ssi = SSIConfig(**self.ssi)
        if isinstance(self.isd, dict):
            self.isd = ISDConfig(**self.isd)
        try:
            self.mode = RawboostMode(self.mode)
        except ValueError:
            raise ConfigError(f"rawboost.mode: unknown mode {self.mode!r}") from None
        s, i = self.ssi, self.isd
        if s.snr_min_db > s.snr_max_db:
            raise ConfigError("rawboost.ssi: snr_min_db > snr_max_db")
        if not 0 < i.p_samples_pct <= 100:
            raise ConfigError("rawboost.isd: p_samples_pct must be in (0, 100]")
        if s.n_bands < 1:
            raise ConfigError("rawboost.ssi: n_bands must be >= 1")
        if s.min_center_hz > s.max_center_hz or s.min_bandwidth_hz > s.max_bandwidth_hz \
                or s.min_gain_db > s.max_gain_db:
            raise ConfigError("rawboost.ssi: a min bound exceeds its max")


def item_rng(seed: int, utt_id: str = "", epoch: int = 0) -> np.random.Generator:
    """Independent, reproducible stream for one (utterance, epoch) pair."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(utt_id.encode()), int(epoch)])
    return np.random.default_rng(ss)


def peaking_biquad(center_hz: float, bandwidth_hz: float, gain_db: float, fs: int):
    """Second-order parametric (peaking) resonator coefficients ``(b, a)``."""
    amp = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * np.pi * center_hz / fs
    q = center_hz / bandwidth_hz
    alpha = np.sin(w0) / (2.0 * q)
    cw = np.cos(w0)
    b = np.array([1.0 + alpha * amp, -2.0 * cw, 1.0 - alpha * amp])
    a = np.array([1.0 + alpha / amp, -2.0 * cw, 1.0 - alpha / amp])
    return b / a[0], a / a[0]


def colored_noise(n: int, cfg: SSIConfig, fs: int, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(n)
    for _ in range(cfg.n_bands):
        fc = rng.uniform(cfg.min_center_hz, cfg.max_center_hz)
        bw = rng.uniform(cfg.min_bandwidth_hz, cfg.max_bandwidth_hz)
        gain = rng.uniform(cfg.min_gain_db, cfg.max_gain_db)
        b, a = peaking_biquad(fc, bw, gain, fs)
        noise = lfilter(b, a, noise)
    return noise


def ssi_noise(w: Waveform, cfg: RawboostConfig, rng: np.random.Generator):
    """Scaled SSI noise and its target SNR in dB, before addition and clipping.

    Returns ``(None, snr_db)`` when the input has zero power.
    """
    s = cfg.ssi
    noise = colored_noise(len(w), s, w.sample_rate_hz, rng)
    snr_db = rng.uniform(s.snr_min_db, s.snr_max_db)
    p_sig = np.mean(w.samples**2)
    p_noise = np.mean(noise**2)
    if p_sig == 0.0 or p_noise == 0.0:
        return None, snr_db
    noise *= np.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    return noise, snr_db


def apply_ssi(w: Waveform, cfg: RawboostConfig, rng: np.random.Generator) -> Waveform:
    noise, _ = ssi_noise(w, cfg, rng)
    if noise is None:
        warnings.warn(f"{w.utt_id or 'waveform'}: zero-power input, SSI skipped",
                      DegenerateSignalWarning, stacklevel=2)
        return w.with_samples(w.samples.copy())
    return w.with_samples(np.clip(w.samples + noise, -1.0, 1.0))


def isd_positions(n: int, p_samples_pct: float) -> int:
    """Number of perturbed samples, rounding half up."""
    return int(np.floor(p_samples_pct / 100.0 * n + 0.5))


def apply_isd(w: Waveform, cfg: RawboostConfig, rng: np.random.Generator) -> Waveform:
    x = w.samples
    k = isd_positions(x.size, cfg.isd.p_samples_pct)
    y = x.copy()
    if k == 0:
        return w.with_samples(y)
    idx = rng.choice(x.size, size=k, replace=False)
    sign = rng.choice(np.array([-1.0, 1.0]), size=k)
    u = 1.0 - rng.random(k)  # (0, 1]
    gain = 10.0 ** (cfg.isd.g_sd_db / 20.0)
    y[idx] = x[idx] + sign * gain * u * np.abs(x[idx])
    return w.with_samples(np.clip(y, -1.0, 1.0))


def apply_rawboost(w: Waveform, cfg: RawboostConfig, rng: np.random.Generator) -> Waveform:
    if cfg.mode is RawboostMode.SSI_ONLY:
        return apply_ssi(w, cfg, rng)
    if cfg.mode is RawboostMode.ISD_ONLY:
        return apply_isd(w, cfg, rng)
    return apply_ssi(apply_isd(w, cfg, rng), cfg, rng)
