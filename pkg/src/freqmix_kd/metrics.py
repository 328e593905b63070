"""EER and minimum t-DCF over an exhaustive threshold sweep.

Conventions (higher score = more bona fide):

* candidate thresholds are the sorted unique scores plus -inf and +inf;
* a trial is accepted when ``score >= t``;
* FAR(t) = fraction of spoof scores >= t, FRR(t) = fraction of bona fide scores < t;
* EER is ``(FAR + FRR) / 2`` at the threshold minimising ``|FAR - FRR|``,
  ties going to the smaller threshold. No ROC interpolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .audio_io import Key, Manifest
from .errors import EmptyScores, InvalidCoefficients, MalformedLine, MissingScore, UnknownUttId


@dataclass
class ScoreSet:
    bona_scores: np.ndarray
    spoof_scores: np.ndarray

    def __post_init__(self):
        self.bona_scores = np.asarray(self.bona_scores, dtype=np.float64)
        self.spoof_scores = np.asarray(self.spoof_scores, dtype=np.float64)

    def check(self) -> None:
        if self.bona_scores.size == 0 or self.spoof_scores.size == 0:
            raise EmptyScores("both bona fide and spoof scores are required")
        if not (np.isfinite(self.bona_scores).all() and np.isfinite(self.spoof_scores).all()):
            raise EmptyScores("scores must be finite")


@dataclass
class TdcfCoefficients:
    c_miss: float
    c_fa: float
    c0: float = 0.0
    normalize: bool = False

    def check(self) -> None:
        if not (self.c_miss > 0 and self.c_fa > 0 and self.c0 >= 0):
            raise InvalidCoefficients(f"need c_miss > 0, c_fa > 0, c0 >= 0, got {self}")


# ASVspoof 2021 cost model (priors and costs of the challenge evaluation plan).
ASVSPOOF2021_COSTS = {
    "p_spoof": 0.05,
    "p_tar": 0.95 * 0.99,
    "p_non": 0.95 * 0.01,
    "c_miss": 1.0,
    "c_fa": 10.0,
    "c_fa_spoof": 10.0,
}


def tdcf_coefficients_from_asv(pmiss_asv: float, pfa_asv: float, pfa_spoof_asv: float,
                               costs: dict | None = None, normalize: bool = True) -> TdcfCoefficients:
    """Reduce the tandem cost model to ``c0 + c_miss*Pmiss_cm + c_fa*Pfa_cm``.

    ``pfa_spoof_asv`` is the rate at which the ASV system accepts spoofs.
    """
    c = ASVSPOOF2021_COSTS if costs is None else costs
    c0 = c["p_tar"] * c["c_miss"] * pmiss_asv + c["p_non"] * c["c_fa"] * pfa_asv
    c1 = c["p_tar"] * c["c_miss"] - c0
    c2 = c["c_fa_spoof"] * c["p_spoof"] * pfa_spoof_asv
    return TdcfCoefficients(c_miss=c1, c_fa=c2, c0=c0, normalize=normalize)


PRESETS = {
    "unit": lambda: TdcfCoefficients(c_miss=1.0, c_fa=1.0, c0=0.0, normalize=False),
    # ASV never errs on zero-effort trials and accepts every spoof
    "asvspoof2021": lambda: tdcf_coefficients_from_asv(0.0, 0.0, 1.0),
}


def preset(name: str) -> TdcfCoefficients:
    try:
        return PRESETS[name]()
    except KeyError:
        raise InvalidCoefficients(f"unknown t-DCF preset {name!r}; known: {sorted(PRESETS)}") from None


def sweep(s: ScoreSet):
    """Thresholds with FAR and FRR at each (vectorised)."""
    s.check()
    bona = np.sort(s.bona_scores)
    spoof = np.sort(s.spoof_scores)
    thr = np.concatenate([[-np.inf], np.unique(np.concatenate([bona, spoof])), [np.inf]])
    n_fa = spoof.size - np.searchsorted(spoof, thr, side="left")
    n_miss = np.searchsorted(bona, thr, side="left")
    return thr, n_fa / spoof.size, n_miss / bona.size


def eer(s: ScoreSet) -> tuple[float, float]:
    thr, far, frr = sweep(s)
    i = int(np.argmin(np.abs(far - frr)))
    return float((far[i] + frr[i]) / 2.0), float(thr[i])


def tdcf_curve(s: ScoreSet, c: TdcfCoefficients):
    c.check()
    thr, far, frr = sweep(s)
    cost = c.c0 + c.c_miss * frr + c.c_fa * far
    if c.normalize:
        cost = cost / (c.c0 + min(c.c_miss, c.c_fa))
    return thr, cost


def min_tdcf(s: ScoreSet, c: TdcfCoefficients) -> tuple[float, float]:
    thr, cost = tdcf_curve(s, c)
    i = int(np.argmin(cost))
    return float(cost[i]), float(thr[i])


# --- score files -----------------------------------------------------------


def write_scores(path, scores: dict[str, float] | list[tuple[str, float]]) -> None:
    items = scores.items() if isinstance(scores, dict) else scores
    Path(path).write_text("".join(f"{u} {float(v)!r}\n" for u, v in items))


def read_scores(path) -> dict[str, float]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 2:
            raise MalformedLine(f"{path}:{lineno}: expected 'utt_id score', got {line!r}")
        try:
            value = float(toks[1])
        except ValueError:
            raise MalformedLine(f"{path}:{lineno}: bad score {toks[1]!r}") from None
        if not math.isfinite(value):
            raise MalformedLine(f"{path}:{lineno}: non-finite score")
        out[toks[0]] = value
    return out


def partition_scores(scores: dict[str, float], manifest: Manifest) -> ScoreSet:
    keys = manifest.by_id()
    for u in scores:
        if u not in keys:
            raise UnknownUttId(f"score for {u!r} has no trial in the manifest")
    bona, spoof = [], []
    for r in manifest.records:
        if r.utt_id not in scores:
            raise MissingScore(f"trial {r.utt_id!r} has no score")
        (bona if r.key is Key.BONAFIDE else spoof).append(scores[r.utt_id])
    return ScoreSet(bona, spoof)


def load_score_set(path, manifest: Manifest) -> ScoreSet:
    return partition_scores(read_scores(path), manifest)


@dataclass
class MetricReport:
    eer: float
    eer_threshold: float
    min_tdcf: float
    tdcf_threshold: float
    n_bonafide: int
    n_spoof: int
    tdcf_preset: str
    coefficients: dict

    def to_json(self) -> str:
        def fix(v):
            return repr(v) if isinstance(v, float) and not math.isfinite(v) else v
        return json.dumps({k: fix(v) for k, v in asdict(self).items()}, sort_keys=True, indent=2) + "\n"


def evaluate(s: ScoreSet, tdcf_preset: str = "asvspoof2021") -> MetricReport:
    coeffs = preset(tdcf_preset)
    e, e_thr = eer(s)
    t, t_thr = min_tdcf(s, coeffs)
    return MetricReport(e, e_thr, t, t_thr, int(s.bona_scores.size), int(s.spoof_scores.size),
                        tdcf_preset, asdict(coeffs))
