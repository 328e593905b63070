"""Waveform and protocol ingestion.

Only 16 kHz, 16-bit, mono PCM WAV is accepted. Amplitudes are code / 32768 so
the most negative code maps exactly to -1.0.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateUttId,
    EmptyAudio,
    EmptyProtocol,
    MalformedContainer,
    UnknownKeyToken,
    UnsupportedFormat,
)

SAMPLE_RATE = 16000
PCM_SCALE = 32768.0


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE
    utt_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise EmptyAudio(f"{self.utt_id or 'waveform'}: no samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        return Waveform(samples, self.sample_rate_hz, self.utt_id)


class Key(str, Enum):
    BONAFIDE = "bonafide"
    SPOOF = "spoof"

    @property
    def label(self) -> int:
        """Class index: 0 bona fide, 1 spoof."""
        return 0 if self is Key.BONAFIDE else 1


@dataclass(frozen=True)
class TrialRecord:
    utt_id: str
    key: Key
    attack_tag: str | None = None


@dataclass
class Manifest:
    records: list[TrialRecord]
    audio_root: Path = field(default_factory=Path)

    def __post_init__(self):
        self.audio_root = Path(self.audio_root)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def audio_path(self, utt_id: str) -> Path:
        return self.audio_root / f"{utt_id}.wav"

    def by_id(self) -> dict[str, TrialRecord]:
        return {r.utt_id: r for r in self.records}

    def counts(self) -> dict[str, int]:
        n_bona = sum(r.key is Key.BONAFIDE for r in self.records)
        return {"bonafide": n_bona, "spoof": len(self.records) - n_bona}


def load_waveform(path) -> Waveform:
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            n = f.getnframes()
            raw = f.readframes(n)
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        raise MalformedContainer(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise MalformedContainer(f"{path}: truncated header") from exc
    if channels != 1:
        raise UnsupportedFormat(f"{path}: {channels} channels, expected mono")
    if width != 2:
        raise UnsupportedFormat(f"{path}: {8 * width}-bit samples, expected 16-bit")
    if rate != SAMPLE_RATE:
        raise UnsupportedFormat(f"{path}: {rate} Hz, expected {SAMPLE_RATE}")
    codes = np.frombuffer(raw, dtype="<i2")
    if codes.size == 0:
        raise EmptyAudio(f"{path}: zero samples")
    return Waveform(codes.astype(np.float64) / PCM_SCALE, rate, path.stem)


def write_waveform(path, w: Waveform) -> None:
    """Write 16-bit PCM; amplitudes are clipped and rounded to the nearest code."""
    codes = np.clip(np.round(w.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(w.sample_rate_hz)
        f.writeframes(codes.tobytes())


def parse_protocol(path, audio_root=None, id_col: int = 1, key_col: int = -1,
                   attack_col: int | None = None) -> Manifest:
    """Parse a whitespace-separated ASVspoof-style CM protocol.

    Blank lines are skipped. ``audio_root`` defaults to the protocol's directory.
    """
    path = Path(path)
    records = []
    seen = set()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        try:
            utt_id, token = toks[id_col], toks[key_col]
        except IndexError:
            raise UnknownKeyToken(f"{path}:{lineno}: too few fields in {line!r}") from None
        try:
            key = Key(token)
        except ValueError:
            raise UnknownKeyToken(f"{path}:{lineno}: key token {token!r}") from None
        if utt_id in seen:
            raise DuplicateUttId(f"{path}:{lineno}: {utt_id} repeated")
        seen.add(utt_id)
        attack = None
        if attack_col is not None and -len(toks) <= attack_col < len(toks):
            attack = toks[attack_col]
        records.append(TrialRecord(utt_id, key, attack))
    if not records:
        raise EmptyProtocol(f"{path}: no trials")
    return Manifest(records, path.parent if audio_root is None else audio_root)


def write_protocol(path, manifest: Manifest, speaker: str = "SPK") -> None:
    """Write ``speaker utt_id - attack key`` lines (id column 1, key last)."""
    lines = [
        f"{speaker} {r.utt_id} - {r.attack_tag or '-'} {r.key.value}\n" for r in manifest.records
    ]
    Path(path).write_text("".join(lines))


def fix_duration(w: Waveform, target_samples: int) -> Waveform:
    """Truncate, or tile from the start and truncate, to exactly ``target_samples``."""
    if target_samples <= 0:
        raise ValueError("target_samples must be positive")
    x = w.samples
    if x.size < target_samples:
        x = np.tile(x, -(-target_samples // x.size))
    return w.with_samples(x[:target_samples].copy())
