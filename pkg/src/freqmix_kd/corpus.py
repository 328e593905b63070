"""Synthetic bona fide / spoof corpus with tunable difficulty.

Bona fide trials are harmonic stacks on a wandering F0 contour (80-300 Hz)
with a syllable-rate envelope and pink noise. Spoof trials use the same
recipe plus an artifact whose strength is ``1 - difficulty``:

* harmonic phases jump at random instants (phase-discontinuous harmonics);
* a narrow band around ``NOTCH_HZ`` is attenuated, inside the 45-bin
  analysis band so the sub-band features can see it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import SAMPLE_RATE, Key, Manifest, TrialRecord, Waveform, write_protocol, write_waveform
from .errors import ConfigError
from .features import FeatureMap

NOTCH_HZ = 250.0
NOTCH_HALF_WIDTH_HZ = 40.0
PHASE_JUMPS_PER_S = 6.0
TARGET_RMS = 0.1


@dataclass
class CorpusSpec:
    n_bona: int = 100
    n_spoof: int = 100
    duration_s: float = 4.0
    difficulty: float = 0.5
    seed: int = 1
    prefix: str = "SYN"

    def __post_init__(self):
        if self.n_bona < 1 or self.n_spoof < 1:
            raise ConfigError("corpus counts must be >= 1")
        if self.duration_s < 0.2:
            raise ConfigError("corpus duration must be >= 0.2 s")
        if not 0.0 <= self.difficulty <= 1.0:
            raise ConfigError("corpus difficulty must be in [0, 1]")


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.size, dtype=np.float64)
    f[0] = np.inf
    x = np.fft.irfft(spec / np.sqrt(f), n)
    return x / np.sqrt(np.mean(x**2))


def _f0_contour(n: int, fs: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / fs
    base = rng.uniform(80.0, 300.0)
    vib = 0.08 * np.sin(2 * np.pi * rng.uniform(0.5, 3.0) * t + rng.uniform(0, 2 * np.pi))
    drift = rng.uniform(-0.15, 0.15) * (t / t[-1] if n > 1 else t)
    return np.clip(base * (1.0 + vib + drift), 80.0, 300.0)


def synth_utterance(n: int, strength: float, rng: np.random.Generator, fs: int = SAMPLE_RATE) -> np.ndarray:
    """One trial; ``strength`` 0 gives bona fide, > 0 adds the spoof artifact."""
    f0 = _f0_contour(n, fs, rng)
    phase = 2 * np.pi * np.cumsum(f0) / fs
    n_harm = int(rng.integers(6, 13))
    jump_phase = np.zeros((n_harm, n))
    if strength > 0:
        n_jumps = rng.poisson(PHASE_JUMPS_PER_S * n / fs)
        for pos in rng.integers(0, n, size=n_jumps):
            jump_phase[:, pos:] += strength * rng.uniform(-np.pi, np.pi, size=(n_harm, 1))
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        amp = rng.uniform(0.5, 1.0) / h
        x += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi) + jump_phase[h - 1])
    t = np.arange(n) / fs
    env = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(3.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    x *= env
    x /= np.sqrt(np.mean(x**2))
    noise_db = rng.uniform(15.0, 30.0)
    x += 10.0 ** (-noise_db / 20.0) * pink_noise(n, rng)
    if strength > 0:
        spec = np.fft.rfft(x)
        freqs = np.fft.rfftfreq(n, 1.0 / fs)
        spec[np.abs(freqs - NOTCH_HZ) <= NOTCH_HALF_WIDTH_HZ] *= 1.0 - strength
        x = np.fft.irfft(spec, n)
    return TARGET_RMS * x / np.sqrt(np.mean(x**2))


def generate(spec: CorpusSpec, out_dir) -> Manifest:
    """Write ``<utt_id>.wav`` files and ``protocol.txt`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = int(round(spec.duration_s * SAMPLE_RATE))
    strength = 1.0 - spec.difficulty
    records = []
    for key, count, tag in ((Key.BONAFIDE, spec.n_bona, "B"), (Key.SPOOF, spec.n_spoof, "S")):
        for i in range(count):
            rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), key.label, i]))
            x = synth_utterance(n, strength if key is Key.SPOOF else 0.0, rng)
            utt = f"{spec.prefix}_{tag}_{i:05d}"
            write_waveform(out_dir / f"{utt}.wav", Waveform(np.clip(x, -1.0, 1.0), SAMPLE_RATE, utt))
            records.append(TrialRecord(utt, key, "A01" if key is Key.SPOOF else None))
    manifest = Manifest(records, out_dir)
    write_protocol(out_dir / "protocol.txt", manifest)
    return manifest


def notch_rows(bin_hz: float = SAMPLE_RATE / 1728, half_width_hz: float = 20.0) -> slice:
    lo = int(np.ceil((NOTCH_HZ - half_width_hz) / bin_hz))
    hi = int(np.floor((NOTCH_HZ + half_width_hz) / bin_hz))
    return slice(lo, hi + 1)


def energy_score(fm: FeatureMap | np.ndarray) -> float:
    """Trivial detector: notch-band log power relative to the whole sub-band.

    Higher means more bona fide.
    """
    v = fm.values if isinstance(fm, FeatureMap) else np.asarray(fm)
    return float(v[notch_rows()].mean() - v.mean())
