"""Teacher pretraining and Freqmix knowledge distillation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
import torch

from .audio_io import Key, Manifest, load_waveform
from .errors import ArchitectureMismatch, ConfigError, NonFiniteLoss, SingleClassManifest
from .features import StftConfig, extract
from .freqmix import FreqmixConfig, freqmix_batch
from .losses import LossReport, feature_loss_terms, hard_loss, loss_report, total_loss
from .metrics import ScoreSet, eer
from .model import Adam, FrozenModel, ModelConfig, MultiScaleNet, clone_model, freeze
from .rawboost import RawboostConfig, apply_rawboost, item_rng

log = logging.getLogger(__name__)


@dataclass
class DistillConfig:
    alpha: float = 0.2
    beta: float = 0.8
    margin_m: int = 2
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    seed: int = 1
    # "teacher" copies the teacher's weights into the student, "scratch" uses a fresh init
    student_init: str = "teacher"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ConfigError("distill: need alpha >= 0, beta >= 0, alpha + beta > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("distill: batch_size >= 1 and epochs >= 0 required")
        if self.student_init not in ("teacher", "scratch"):
            raise ConfigError("distill.student_init must be 'teacher' or 'scratch'")


@dataclass
class StepLog:
    step: int
    epoch: int
    loss_feat: float
    loss_hard: float
    loss_total: float
    gate_fired: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class FeatureSource:
    """Clean features are cached; augmented ones are recomputed per (utterance, epoch).

    With ``cache_augmented`` the augmented maps are kept too, keyed by
    (utterance, seed, epoch, rawboost config), so several runs over one
    corpus share them. Costs about 108 kB per map.
    """

    def __init__(self, manifest: Manifest, stft: StftConfig | None = None, cache_augmented: bool = False):
        self.manifest = manifest
        self.stft = stft or StftConfig()
        self.records = list(manifest.records)
        self.labels = np.array([r.key.label for r in self.records], dtype=np.int64)
        self._wave = {}
        self._clean = {}
        self._aug = {} if cache_augmented else None

    def __len__(self) -> int:
        return len(self.records)

    def waveform(self, i: int):
        if i not in self._wave:
            self._wave[i] = load_waveform(self.manifest.audio_path(self.records[i].utt_id))
        return self._wave[i]

    def clean(self, idx) -> np.ndarray:
        for i in idx:
            if i not in self._clean:
                self._clean[i] = extract(self.waveform(i), self.stft).values.astype(np.float32)
        return np.stack([self._clean[i] for i in idx])

    def augmented(self, idx, rawboost: RawboostConfig | None, seed: int, epoch: int) -> np.ndarray:
        if rawboost is None:
            return self.clean(idx)
        out = []
        tag = repr(rawboost)
        for i in idx:
            key = (i, seed, epoch, tag)
            if self._aug is not None and key in self._aug:
                out.append(self._aug[key])
                continue
            rng = item_rng(seed, self.records[i].utt_id, epoch)
            w = apply_rawboost(self.waveform(i), rawboost, rng)
            v = extract(w, self.stft).values.astype(np.float32)
            if self._aug is not None:
                self._aug[key] = v
            out.append(v)
        return np.stack(out)


def _check_classes(manifest: Manifest) -> None:
    counts = manifest.counts()
    if counts["bonafide"] == 0 or counts["spoof"] == 0:
        raise SingleClassManifest(f"training needs both classes, got {counts}")


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    order = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 7, epoch])).permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def _gate_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 11]))


def _finite(value: torch.Tensor, what: str, step: int) -> None:
    if not math.isfinite(value.item()):
        raise NonFiniteLoss(f"non-finite {what} at step {step}")


def score_features(model: MultiScaleNet | FrozenModel, feats: np.ndarray, score_type: str = "logit",
                   batch_size: int = 64) -> np.ndarray:
    """Bona fide score per map: the bona fide logit, or the log-softmax difference."""
    out = []
    with torch.no_grad():
        for i in range(0, len(feats), batch_size):
            logits = model(torch.from_numpy(np.ascontiguousarray(feats[i : i + batch_size]))).logits
            if score_type == "logit":
                out.append(logits[:, 0].double().numpy())
            elif score_type == "llr":
                ls = torch.log_softmax(logits.double(), dim=1)
                out.append((ls[:, 0] - ls[:, 1]).numpy())
            else:
                raise ConfigError(f"unknown score type {score_type!r}")
    return np.concatenate(out) if out else np.zeros(0)


def source_eer(model, source: FeatureSource, score_type: str = "logit") -> float:
    scores = score_features(model, source.clean(range(len(source))), score_type)
    return eer(ScoreSet(scores[source.labels == 0], scores[source.labels == 1]))[0]


class _Selector:
    """Keep the parameters with the lowest validation EER (or just the last ones)."""

    def __init__(self, val: FeatureSource | None):
        self.val = val
        self.best = math.inf
        self.state = None

    def update(self, model: MultiScaleNet, epoch: int) -> None:
        if self.val is None:
            return
        e = source_eer(model, self.val)
        log.info("epoch %d val EER %.4f", epoch, e)
        if e < self.best:
            self.best = e
            self.state = {k: v.clone() for k, v in model.state_dict().items()}

    def finish(self, model: MultiScaleNet) -> MultiScaleNet:
        if self.state is not None:
            model.load_state_dict(self.state)
        return model


def pretrain_teacher(
    manifest: Manifest,
    rawboost_cfg: RawboostConfig | None,
    model_cfg: ModelConfig,
    cfg: DistillConfig,
    stft_cfg: StftConfig | None = None,
    freqmix_cfg: FreqmixConfig | None = None,
    val_manifest: Manifest | None = None,
    on_step: Callable[[StepLog], None] | None = None,
    source: FeatureSource | None = None,
) -> tuple[MultiScaleNet, list[LossReport]]:
    """Train a classifier with the hard loss only.

    Rawboost is applied per utterance and epoch. Passing ``freqmix_cfg`` also
    mixes each augmented batch (the single-model Freqmix + Rawboost setup).
    Returns the model and one averaged LossReport per epoch.
    """
    _check_classes(manifest)
    src = source or FeatureSource(manifest, stft_cfg)
    val = FeatureSource(val_manifest, src.stft) if val_manifest is not None else None
    model = MultiScaleNet(model_cfg, seed=cfg.seed)
    opt = Adam(model, lr=cfg.learning_rate)
    gate_rng = _gate_rng(cfg.seed)
    selector = _Selector(val)
    reports = []
    step = 0
    for epoch in range(cfg.epochs):
        hard_sum, n_seen = 0.0, 0
        for idx in epoch_batches(len(src), cfg.batch_size, cfg.seed, epoch):
            x = src.augmented(idx, rawboost_cfg, cfg.seed, epoch)
            fired = False
            if freqmix_cfg is not None:
                x, sel = freqmix_batch(x, freqmix_cfg, gate_rng)
                fired = sel is not None
            out = model(torch.from_numpy(x))
            lh = hard_loss(out.embedding, model.head, torch.from_numpy(src.labels[idx]), cfg.margin_m)
            _finite(lh, "hard loss", step)
            opt.zero_grad()
            lh.backward()
            opt.step()
            step += 1
            hard_sum += lh.item() * len(idx)
            n_seen += len(idx)
            if on_step is not None:
                on_step(StepLog(step, epoch, 0.0, lh.item(), lh.item(), fired))
        reports.append(LossReport(0.0, hard_sum / n_seen, hard_sum / n_seen))
        log.info("pretrain epoch %d hard %.5f", epoch, hard_sum / n_seen)
        selector.update(model, epoch)
    return selector.finish(model), reports


def distill_student(
    manifest: Manifest,
    teacher: MultiScaleNet | FrozenModel,
    rawboost_cfg: RawboostConfig | None,
    freqmix_cfg: FreqmixConfig,
    cfg: DistillConfig,
    stft_cfg: StftConfig | None = None,
    student_cfg: ModelConfig | None = None,
    val_manifest: Manifest | None = None,
    on_step: Callable[[StepLog], None] | None = None,
    source: FeatureSource | None = None,
) -> tuple[MultiScaleNet, list[LossReport]]:
    """Distil a frozen teacher into a student.

    Per batch the student sees Rawboost features, the teacher sees clean
    features passed through the Freqmix gate, and the student minimises
    ``alpha * sum_i MSE(teacher_tap_i, student_tap_i) + beta * A-softmax``.
    Teacher predictions are never used.
    """
    _check_classes(manifest)
    frozen = teacher if isinstance(teacher, FrozenModel) else freeze(teacher)
    if student_cfg is not None and student_cfg.descriptor() != frozen.cfg.descriptor():
        raise ArchitectureMismatch("student and teacher architectures differ")
    src = source or FeatureSource(manifest, stft_cfg)
    val = FeatureSource(val_manifest, src.stft) if val_manifest is not None else None
    if cfg.student_init == "teacher":
        student = clone_model(frozen)
    else:
        student = MultiScaleNet(frozen.cfg, seed=cfg.seed)
    opt = Adam(student, lr=cfg.learning_rate)
    gate_rng = _gate_rng(cfg.seed)
    selector = _Selector(val)
    reports = []
    step = 0
    for epoch in range(cfg.epochs):
        sums = np.zeros(6)
        n_seen = 0
        for idx in epoch_batches(len(src), cfg.batch_size, cfg.seed, epoch):
            x_student = src.augmented(idx, rawboost_cfg, cfg.seed, epoch)
            x_teacher, sel = freqmix_batch(src.clean(idx), freqmix_cfg, gate_rng)
            t_taps = frozen(torch.from_numpy(x_teacher)).taps
            out = student(torch.from_numpy(x_student))
            terms = feature_loss_terms(t_taps, out.taps)
            lf = torch.stack(terms).sum()
            lh = hard_loss(out.embedding, student.head, torch.from_numpy(src.labels[idx]), cfg.margin_m)
            loss = total_loss(lf, lh, cfg)
            _finite(loss, "distillation loss", step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            k = len(idx)
            sums += k * np.array([lf.item(), lh.item()] + [t.item() for t in terms])
            n_seen += k
            if on_step is not None:
                on_step(StepLog(step, epoch, lf.item(), lh.item(), loss.item(), sel is not None))
        m = sums / n_seen
        reports.append(loss_report(m[0], m[1], cfg, m[2:]))
        log.info("distill epoch %d feat %.5f hard %.5f", epoch, m[0], m[1])
        selector.update(student, epoch)
    return selector.finish(student), reports


def bona_spoof_split(manifest: Manifest, scores: np.ndarray) -> ScoreSet:
    keys = np.array([r.key is Key.BONAFIDE for r in manifest.records])
    return ScoreSet(scores[keys], scores[~keys])
