"""Freqmix knowledge distillation for spoofed speech detection."""

from .audio_io import Key, Manifest, TrialRecord, Waveform, load_waveform, parse_protocol
from .distill import DistillConfig, distill_student, pretrain_teacher
from .features import StftConfig, extract
from .freqmix import FreqmixConfig, apply_freqmix, freqmix_batch
from .metrics import ScoreSet, TdcfCoefficients, eer, evaluate, min_tdcf
from .model import ModelConfig, MultiScaleNet, load_checkpoint, save_checkpoint
from .rawboost import RawboostConfig, apply_rawboost

__version__ = "0.1.0"
