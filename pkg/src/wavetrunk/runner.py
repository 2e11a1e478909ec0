"""High-level run orchestration shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audiopipe import NoiseBank
from .checkpoint import load_checkpoint
from .config import ConfigError, RunConfig
from .metrics import EvalResult, evaluate_logits
from .ndgrad import Array
from .train import MultitaskModel, TaskData, Trainer

log = logging.getLogger("wavetrunk")


def build_model(cfg: RunConfig) -> MultitaskModel:
    head_specs = {t.name: t.head for t in cfg.tasks}
    return MultitaskModel(cfg.trunk, head_specs, seed=cfg.train.seed)


def build_trainer(cfg: RunConfig, model: MultitaskModel | None = None) -> Trainer:
    model = model or build_model(cfg)
    bank = None
    if cfg.noise_bank_dir is not None:
        bank = NoiseBank(cfg.train.sample_rate, wav_dir=cfg.noise_bank_dir)
    return Trainer(
        model,
        cfg.tasks,
        cfg.train,
        noise_bank=bank,
        augment=cfg.augment,
        base_dir=cfg.base_dir,
        config_snapshot=cfg.raw,
    )


def run_train(cfg: RunConfig, resume: str | Path | None = None, on_epoch_end=None) -> tuple[Trainer, list[dict]]:
    """The joint-training command: at least one supervised task required."""
    if not cfg.supervised_tasks:
        raise ConfigError("train requires at least one supervised task (use pretrain otherwise)")
    trainer = build_trainer(cfg)
    if resume is not None:
        trainer.resume(resume)
        log.info("resumed from %s at epoch %d", resume, trainer.start_epoch)
    rows = trainer.fit(
        log_path=cfg.log_path,
        checkpoint_dir=cfg.checkpoint_dir,
        checkpoint_every=cfg.checkpoint_every,
        on_epoch_end=on_epoch_end,
    )
    log.info("training finished: %d epochs logged to %s", len(rows) and rows[-1]["epoch"] + 1, cfg.log_path)
    return trainer, rows


def run_pretrain(cfg: RunConfig, on_epoch_end=None) -> tuple[Trainer, list[dict], Path]:
    """Stage 1 of transfer: self-supervised tasks only; returns the checkpoint path."""
    if cfg.supervised_tasks:
        raise ConfigError(
            "pretrain takes self-supervised tasks only; found supervised: "
            + ", ".join(t.name for t in cfg.supervised_tasks)
        )
    trainer = build_trainer(cfg)
    rows = trainer.fit(
        log_path=cfg.log_path,
        checkpoint_dir=cfg.checkpoint_dir,
        checkpoint_every=cfg.checkpoint_every,
        on_epoch_end=on_epoch_end,
    )
    final = Path(cfg.checkpoint_dir) / "final.ckpt"
    return trainer, rows, final


def run_finetune(cfg: RunConfig, checkpoint: str | Path, on_epoch_end=None) -> tuple[Trainer, list[dict]]:
    """Stage 2 of transfer: load stage-1 trunk tensors, train supervised tasks."""
    from .train import load_trunk_from_checkpoint

    if not cfg.supervised_tasks:
        raise ConfigError("finetune requires at least one supervised task")
    ckpt = load_checkpoint(checkpoint)
    model = build_model(cfg)
    load_trunk_from_checkpoint(model, ckpt)
    trainer = build_trainer(cfg, model)
    rows = trainer.fit(
        log_path=cfg.log_path,
        checkpoint_dir=cfg.checkpoint_dir,
        checkpoint_every=cfg.checkpoint_every,
        on_epoch_end=on_epoch_end,
    )
    return trainer, rows


def run_evaluate(cfg: RunConfig, checkpoint: str | Path, manifest: str | Path) -> list[EvalResult]:
    """Score every classification task in the config on one labeled manifest."""
    if not cfg.supervised_tasks:
        raise ConfigError("evaluate needs a config with at least one classification task")
    ckpt = load_checkpoint(checkpoint)
    model = build_model(cfg)
    model.load_tensors(ckpt.tensors)

    results = []
    manifest = Path(manifest)
    for spec in cfg.supervised_tasks:
        eval_spec = replace(spec, manifest=manifest, unlabeled_manifest=None)
        data = TaskData(eval_spec, cfg.train, base_dir=None, include_all_splits=True)
        head = model.heads[spec.name]
        logits = []
        labels = []
        for batch in data.eval_batches(cfg.train.batch_size):
            emb = model.trunk(Array(batch.x))
            logits.append(head.forward(emb, mode="eval").data)
            labels.append(batch.labels)
        results.append(evaluate_logits(spec.name, np.concatenate(logits), np.concatenate(labels)))
    return results
