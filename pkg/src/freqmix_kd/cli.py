"""Command-line entry point: ``fkd <subcommand> [--config run.yaml] [--set k=v ...]``.

Subcommands
    generate-corpus  write a synthetic bona fide / spoof corpus
    pretrain         train a single model (tea_r, tea_fr, or the teacher of a distillation mode)
    distill          train a student from a frozen teacher (tea_c_stu_r, fkd)
    score            score a manifest with a checkpoint, no augmentation
    evaluate         EER and min t-DCF from a score file
    augment-dump     write pre/post Rawboost audio and pre/post Freqmix features
    run              train for the configured mode, then score and evaluate the eval manifest

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import sys
from pathlib import Path

from filelock import FileLock, Timeout

from . import config as config_mod
from .audio_io import Waveform, write_waveform
from .corpus import CorpusSpec, generate
from .distill import FeatureSource, StepLog, distill_student, pretrain_teacher, score_features
from .errors import CheckpointError, ConfigError, FKDError
from .features import FeatureMap, write_feature
from .freqmix import apply_freqmix, draw_gate, select_band
from .metrics import evaluate, load_score_set, write_scores
from .model import load_checkpoint, save_checkpoint
from .rawboost import apply_rawboost, item_rng

log = logging.getLogger("freqmix_kd")

CHECKPOINT = "model.ckpt"
TEACHER_DIR = "teacher"
STEP_LOG = "train_log.jsonl"
EPOCH_LOG = "epochs.jsonl"
SCORES = "scores.txt"
REPORT = "report.json"


@contextlib.contextmanager
def _owned(out_dir: Path):
    """Create ``out_dir`` and hold its lock file for the duration of a run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(out_dir / ".lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise ConfigError(f"output directory {out_dir} is in use by another run") from None
    try:
        yield out_dir
    finally:
        lock.release()


class _StepWriter:
    def __init__(self, path: Path):
        self.fh = open(path, "w")

    def __call__(self, rec: StepLog) -> None:
        self.fh.write(rec.to_json() + "\n")

    def close(self) -> None:
        self.fh.close()


def _write_epochs(path: Path, reports) -> None:
    with open(path, "w") as fh:
        for epoch, r in enumerate(reports):
            fh.write(json.dumps({"epoch": epoch, **dataclasses.asdict(r)}, sort_keys=True) + "\n")


def _train_single(cfg: config_mod.RunConfig, out: Path, with_freqmix: bool) -> Path:
    train = cfg.manifest("train")
    val = cfg.manifest("val", required=False)
    dcfg = dataclasses.replace(cfg.distill, epochs=cfg.pretrain_epochs)
    writer = _StepWriter(out / STEP_LOG)
    try:
        model, reports = pretrain_teacher(
            train, cfg.rawboost_or_none, cfg.model, dcfg, cfg.stft,
            freqmix_cfg=cfg.freqmix if with_freqmix else None,
            val_manifest=val, on_step=writer,
        )
    finally:
        writer.close()
    _write_epochs(out / EPOCH_LOG, reports)
    path = out / CHECKPOINT
    save_checkpoint(path, model, seed=cfg.seed, step=len(reports))
    return path


def pretrain(cfg: config_mod.RunConfig) -> Path:
    with _owned(cfg.out_dir()) as out:
        config_mod.write_resolved(cfg, out)
        # only tea_fr mixes its own inputs; every other mode pretrains a Rawboost-only teacher
        return _train_single(cfg, out, with_freqmix=cfg.mode == "tea_fr")


def _teacher_path(cfg: config_mod.RunConfig, out: Path) -> Path:
    if cfg.paths.teacher is not None:
        path = Path(cfg.paths.teacher)
        if not path.is_file():
            raise ConfigError(f"paths.teacher: no such checkpoint {path}")
        return path
    sub = out / TEACHER_DIR
    teacher_cfg = dataclasses.replace(cfg, paths=dataclasses.replace(cfg.paths, out_dir=str(sub)))
    log.info("no teacher checkpoint given; pretraining one in %s", sub)
    with _owned(sub):
        config_mod.write_resolved(teacher_cfg, sub)
        return _train_single(teacher_cfg, sub, with_freqmix=False)


def distill(cfg: config_mod.RunConfig) -> Path:
    if cfg.mode not in ("tea_c_stu_r", "fkd"):
        raise ConfigError(f"distill needs mode tea_c_stu_r or fkd, got {cfg.mode!r}")
    with _owned(cfg.out_dir()) as out:
        config_mod.write_resolved(cfg, out)
        train = cfg.manifest("train")
        val = cfg.manifest("val", required=False)
        teacher = load_checkpoint(_teacher_path(cfg, out), expect=cfg.model).model
        fm = cfg.freqmix if cfg.mode == "fkd" else dataclasses.replace(cfg.freqmix, enabled=False)
        writer = _StepWriter(out / STEP_LOG)
        try:
            student, reports = distill_student(
                train, teacher, cfg.rawboost_or_none, fm, cfg.distill, cfg.stft,
                student_cfg=cfg.model, val_manifest=val, on_step=writer,
            )
        finally:
            writer.close()
        _write_epochs(out / EPOCH_LOG, reports)
        path = out / CHECKPOINT
        save_checkpoint(path, student, seed=cfg.seed, step=len(reports))
        return path


def score(cfg: config_mod.RunConfig, checkpoint=None, manifest_key: str = "eval", out_path=None) -> Path:
    ckpt_path = Path(checkpoint) if checkpoint else cfg.out_dir() / CHECKPOINT
    if not ckpt_path.is_file():
        raise CheckpointError(f"no checkpoint at {ckpt_path}")
    model = load_checkpoint(ckpt_path).model
    manifest = cfg.manifest(manifest_key)
    src = FeatureSource(manifest, cfg.stft)
    values = score_features(model, src.clean(range(len(src))), cfg.metrics.score_type)
    path = Path(out_path) if out_path else cfg.out_dir() / SCORES
    path.parent.mkdir(parents=True, exist_ok=True)
    write_scores(path, [(r.utt_id, v) for r, v in zip(manifest.records, values)])
    return path


def evaluate_scores(cfg: config_mod.RunConfig, scores_path=None, manifest_key: str = "eval", out_path=None):
    scores_path = Path(scores_path) if scores_path else cfg.out_dir() / SCORES
    report = evaluate(load_score_set(scores_path, cfg.manifest(manifest_key)), cfg.metrics.tdcf_preset)
    text = report.to_json()
    path = Path(out_path) if out_path else scores_path.with_name(REPORT)
    path.write_text(text)
    return report, path


def augment_dump(cfg: config_mod.RunConfig, k: int, manifest_key: str = "train") -> list[Path]:
    if k < 1:
        raise ConfigError("augment-dump: --k must be >= 1")
    manifest = cfg.manifest(manifest_key)
    records = manifest.records[:k]
    if len(records) < k:
        raise ConfigError(f"augment-dump: manifest has only {len(records)} trials, asked for {k}")
    with _owned(cfg.out_dir()) as out:
        config_mod.write_resolved(cfg, out)
        src = FeatureSource(manifest, cfg.stft)
        written = []
        for i, rec in enumerate(records):
            w = src.waveform(i)
            write_waveform(out / f"{rec.utt_id}.pre_rawboost.wav", w)
            if cfg.rawboost_or_none is not None:
                w = apply_rawboost(w, cfg.rawboost, item_rng(cfg.seed, rec.utt_id, 0))
            write_waveform(out / f"{rec.utt_id}.post_rawboost.wav", w)
            written.append(out / f"{rec.utt_id}.post_rawboost.wav")
        clean = src.clean(range(k))
        mixed = clean
        gate_rng = item_rng(cfg.seed, "augment-dump")
        if draw_gate(gate_rng, cfg.freqmix) and k >= 2:
            mixed = apply_freqmix(clean, select_band(gate_rng, cfg.freqmix, k))
        for rec, pre, post in zip(records, clean, mixed):
            write_feature(out / f"{rec.utt_id}.pre_freqmix.feat", FeatureMap(pre, rec.utt_id))
            write_feature(out / f"{rec.utt_id}.post_freqmix.feat", FeatureMap(post, rec.utt_id))
            written.append(out / f"{rec.utt_id}.post_freqmix.feat")
        return written


def run(cfg: config_mod.RunConfig):
    """Train for ``cfg.mode``, then score and evaluate the eval manifest."""
    cfg.manifest("eval")
    if cfg.mode in ("tea_r", "tea_fr"):
        ckpt = pretrain(cfg)
    else:
        ckpt = distill(cfg)
    score(cfg, ckpt)
    return evaluate_scores(cfg)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. --set distill.learning_rate=0.001")
    p.add_argument("--mode", choices=config_mod.MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--train", help="training protocol file")
    p.add_argument("--eval", help="evaluation protocol file")
    p.add_argument("--teacher", help="teacher checkpoint for distillation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fkd", description="Freqmix knowledge distillation for spoofed speech detection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-corpus", help="write a synthetic corpus")
    g.add_argument("out_dir")
    g.add_argument("--n-bona", type=int, default=100)
    g.add_argument("--n-spoof", type=int, default=100)
    g.add_argument("--duration", type=float, default=4.0)
    g.add_argument("--difficulty", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--prefix", default="SYN")

    for name in ("pretrain", "distill", "run"):
        _add_common(sub.add_parser(name))

    s = sub.add_parser("score", help="score a manifest (no augmentation)")
    _add_common(s)
    s.add_argument("--checkpoint")
    s.add_argument("--on", choices=("train", "val", "eval"), default="eval", help="which manifest to score")
    s.add_argument("--output")

    e = sub.add_parser("evaluate", help="EER and min t-DCF of a score file")
    _add_common(e)
    e.add_argument("--scores")
    e.add_argument("--on", choices=("train", "val", "eval"), default="eval")
    e.add_argument("--output")

    a = sub.add_parser("augment-dump", help="dump augmentation inputs and outputs")
    _add_common(a)
    a.add_argument("--k", type=int, default=4)
    a.add_argument("--on", choices=("train", "val", "eval"), default="train")
    return parser


def _resolve(args) -> config_mod.RunConfig:
    return config_mod.load(
        args.config, args.overrides,
        **{"mode": args.mode, "seed": args.seed, "paths.out_dir": args.out_dir,
           "paths.train": args.train, "paths.eval": args.eval, "paths.teacher": args.teacher},
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate-corpus":
            m = generate(CorpusSpec(args.n_bona, args.n_spoof, args.duration, args.difficulty,
                                    args.seed, args.prefix), args.out_dir)
            print(f"wrote {len(m.records)} trials to {args.out_dir}")
            return 0
        cfg = _resolve(args)
        if args.command == "pretrain":
            print(pretrain(cfg))
        elif args.command == "distill":
            print(distill(cfg))
        elif args.command == "score":
            print(score(cfg, args.checkpoint, args.on, args.output))
        elif args.command == "evaluate":
            report, _ = evaluate_scores(cfg, args.scores, args.on, args.output)
            sys.stdout.write(report.to_json())
        elif args.command == "augment-dump":
            for path in augment_dump(cfg, args.k, args.on):
                print(path)
        elif args.command == "run":
            report, _ = run(cfg)
            sys.stdout.write(report.to_json())
    except FKDError as e:
        print(f"fkd: error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
