"""Freqmix: swap one shared frequency band across the maps of a batch.

A single gate draw per batch decides whether the batch is mixed. When it
fires, a band of rows ``[f0, f0 + f)`` is cut from every map, the band
contents are permuted across the batch and pasted back at the same rows.
Labels are never touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BatchTooSmall, ConfigError, ShapeMismatch
from .features import N_BINS, FeatureMap


@dataclass
class FreqmixConfig:
    f_max: int = 10
    gate_threshold: float = 0.5
    granularity: str = "per_batch"
    # False forces the gate off without consuming draws (teacher sees clean maps)
    enabled: bool = True
    # forbid fixed points in the batch permutation
    derangement: bool = False
    n_rows: int = N_BINS

    def __post_init__(self):
        if not 1 <= self.f_max <= self.n_rows:
            raise ConfigError(f"freqmix.f_max must be in [1, {self.n_rows}]")
        if not 0.0 <= self.gate_threshold <= 1.0:
            raise ConfigError("freqmix.gate_threshold must be in [0, 1]")
        if self.granularity != "per_batch":
            raise ConfigError("freqmix.granularity: only 'per_batch' is supported")


@dataclass(frozen=True)
class BandSelection:
    f0: int
    f: int
    permutation: tuple[int, ...]

    def rows(self) -> slice:
        return slice(self.f0, self.f0 + self.f)


def draw_gate(rng: np.random.Generator, cfg: FreqmixConfig) -> bool:
    """One gate draw; ``p`` lies in (0, 1] so threshold 0 always mixes and 1 never does."""
    if not cfg.enabled:
        return False
    p = 1.0 - rng.random()
    return bool(p > cfg.gate_threshold)


def select_band(rng: np.random.Generator, cfg: FreqmixConfig, batch_size: int) -> BandSelection:
    if batch_size < 2:
        raise BatchTooSmall(f"Freqmix needs at least 2 maps, got {batch_size}")
    f = int(rng.integers(1, cfg.f_max + 1))
    f0 = int(rng.integers(0, cfg.n_rows - f + 1))
    perm = rng.permutation(batch_size)
    if cfg.derangement:
        while np.any(perm == np.arange(batch_size)):
            perm = rng.permutation(batch_size)
    return BandSelection(f0, f, tuple(int(i) for i in perm))


def _stack(batch) -> tuple[np.ndarray, list[str] | None]:
    if isinstance(batch, np.ndarray):
        return batch, None
    return np.stack([fm.values for fm in batch]), [fm.utt_id for fm in batch]


def _unstack(arr: np.ndarray, ids):
    if ids is None:
        return arr
    return [FeatureMap(v, u) for v, u in zip(arr, ids)]


def apply_freqmix(batch, sel: BandSelection):
    """Paste rows ``sel.rows()`` of map ``sel.permutation[i]`` into map ``i``."""
    arr, ids = _stack(batch)
    if arr.ndim != 3:
        raise ShapeMismatch(f"expected a [B, rows, frames] batch, got shape {arr.shape}")
    if sorted(sel.permutation) != list(range(arr.shape[0])):
        raise ShapeMismatch(f"permutation is not a bijection on {arr.shape[0]} maps")
    if sel.f < 1 or sel.f0 < 0 or sel.f0 + sel.f > arr.shape[1]:
        raise ShapeMismatch(f"band [{sel.f0}, {sel.f0 + sel.f}) outside {arr.shape[1]} rows")
    out = arr.copy()
    out[:, sel.rows()] = arr[list(sel.permutation), sel.rows()]
    return _unstack(out, ids)


def freqmix_batch(batch, cfg: FreqmixConfig, rng: np.random.Generator):
    """Gate, select and apply. Returns ``(maps, selection)``; selection is None if not mixed."""
    arr, ids = _stack(batch)
    if arr.shape[0] == 0:
        raise ShapeMismatch("empty batch")
    fired = draw_gate(rng, cfg)
    if not fired or arr.shape[0] < 2:
        return _unstack(arr.copy(), ids), None
    sel = select_band(rng, cfg, arr.shape[0])
    return _unstack(apply_freqmix(arr, sel), ids), sel
