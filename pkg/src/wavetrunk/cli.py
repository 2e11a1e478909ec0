"""Command-line interface: train, pretrain, finetune, evaluate, synth, verify.

Exit codes: 0 success, 1 runtime failure (e.g. diverged training), 2
configuration or shape errors, 3 data or file errors. The WAVETRUNK_LOG
environment variable (debug|info|warning|error) sets log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .audiopipe import ManifestError, WavFormatError
from .checkpoint import CheckpointError
from .config import ConfigError, load_run_config
from .train import TrainingDivergedError

log = logging.getLogger("wavetrunk")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavetrunk",
        description="Multitask and self-supervised training on raw audio waveforms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="path to a JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config.train.seed")
        p.add_argument("--workers", type=int, default=None, help="override config.train.workers")

    p_train = sub.add_parser("train", help="joint training of supervised and auxiliary tasks")
    add_common(p_train)
    p_train.add_argument("--resume", default=None, help="checkpoint to continue from")

    p_pre = sub.add_parser("pretrain", help="stage 1: self-supervised tasks only")
    add_common(p_pre)
    p_pre.add_argument("--out", default=None, help="also copy the final checkpoint here")

    p_fine = sub.add_parser("finetune", help="stage 2: load a pretrained trunk, train supervised")
    add_common(p_fine)
    p_fine.add_argument("--checkpoint", required=True, help="stage-1 checkpoint with the trunk")

    p_eval = sub.add_parser("evaluate", help="score classification tasks on a labeled manifest")
    add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--out", default=None, help="write the report CSV here")

    p_synth = sub.add_parser("synth", help="generate a synthetic labeled corpus with manifests")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--classes", type=int, default=4)
    p_synth.add_argument("--clips-per-class", type=int, default=8)
    p_synth.add_argument("--seconds", type=float, default=2.0)
    p_synth.add_argument("--rate", type=int, default=16000)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--unlabeled", type=int, default=0)
    p_synth.add_argument("--kind", choices=("tone", "chirp", "am", "mix"), default="tone")
    p_synth.add_argument("--snr", type=float, default=30.0, help="additive white-noise SNR in dB")

    p_verify = sub.add_parser("verify", help="run the verification suites")
    p_verify.add_argument("suite", nargs="?", choices=("gradcheck", "dsp", "props", "all"),
                          default="all")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("WAVETRUNK_LOG", "warning").lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO,
              "warning": logging.WARNING, "error": logging.ERROR}
    logging.basicConfig(level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(args):
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.train.workers = args.workers
    return cfg


def _cmd_train(args) -> int:
    from . import runner

    cfg = _load_config(args)
    runner.run_train(cfg, resume=args.resume)
    print(f"log: {cfg.log_path}")
    print(f"checkpoint: {Path(cfg.checkpoint_dir) / 'final.ckpt'}")
    return EXIT_OK


def _cmd_pretrain(args) -> int:
    import shutil

    from . import runner

    cfg = _load_config(args)
    _, _, final = runner.run_pretrain(cfg)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(final, args.out)
        final = Path(args.out)
    print(f"pretrained checkpoint: {final}")
    return EXIT_OK


def _cmd_finetune(args) -> int:
    from . import runner

    cfg = _load_config(args)
    runner.run_finetune(cfg, args.checkpoint)
    print(f"log: {cfg.log_path}")
    print(f"checkpoint: {Path(cfg.checkpoint_dir) / 'final.ckpt'}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from . import runner

    cfg = _load_config(args)
    results = runner.run_evaluate(cfg, args.checkpoint, args.manifest)
    header = "task,map_at_3,top1,top5,num_examples"
    print(f"{'task':<16} {'MAP@3':>8} {'top-1':>8} {'top-5':>8} {'examples':>9}")
    for r in results:
        print(f"{r.task:<16} {r.map_at_3:>8.4f} {r.top1:>8.4f} {r.top5:>8.4f} {r.num_examples:>9d}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        lines = [header] + [r.as_csv_row() for r in results]
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .synth import generate_corpus

    result = generate_corpus(
        args.out,
        num_classes=args.classes,
        clips_per_class=args.clips_per_class,
        seconds=args.seconds,
        rate=args.rate,
        seed=args.seed,
        unlabeled=args.unlabeled,
        kind=args.kind,
        noise_snr_db=args.snr,
    )
    print(f"wrote {result.num_clips} clips under {result.out_dir}")
    print(f"train manifest: {result.train_manifest}")
    if result.unlabeled_manifest:
        print(f"unlabeled manifest: {result.unlabeled_manifest}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_suite

    results = run_suite(args.suite)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_RUNTIME


_COMMANDS = {
    "train": _cmd_train,
    "pretrain": _cmd_pretrain,
    "finetune": _cmd_finetune,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CheckpointError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, WavFormatError, FileNotFoundError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
