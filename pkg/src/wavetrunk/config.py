"""Strict JSON run configuration: unknown keys are rejected with their path.

Every omitted hyperparameter falls back to the default experimental values
(trunk 3x6x64, Adam 0.9/0.99/1e-8, stepped 0.95-per-5-epoch decay, batch 48,
2-second 16 kHz crops, per-kind head learning rates).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .heads import KINDS, HeadSpec
from .ndgrad import AdamConfig, LrSchedule
from .train import AugmentConfig, TaskSpec, TrainConfig
from .trunk import TrunkConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    trunk: TrunkConfig
    tasks: list[TaskSpec]
    train: TrainConfig
    augment: AugmentConfig | None
    noise_bank_dir: Path | None
    checkpoint_dir: Path
    log_path: Path
    checkpoint_every: int
    base_dir: Path
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def supervised_tasks(self) -> list[TaskSpec]:
        return [t for t in self.tasks if t.is_supervised]

    @property
    def self_supervised_tasks(self) -> list[TaskSpec]:
        return [t for t in self.tasks if not t.is_supervised]


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from None
    return parse_run_config(raw, base_dir=path.parent)


def parse_run_config(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    base_dir = Path(base_dir)
    _expect_mapping(raw, "config")
    _check_keys(raw, {"trunk", "tasks", "train", "data", "io"}, "config")

    trunk = _parse_trunk(raw.get("trunk", {}))
    if "tasks" not in raw or not raw["tasks"]:
        raise ConfigError("config.tasks: at least one task is required")
    if not isinstance(raw["tasks"], list):
        raise ConfigError("config.tasks: expected a list")
    tasks = [_parse_task(t, i) for i, t in enumerate(raw["tasks"])]
    names = [t.name for t in tasks]
    if len(set(names)) != len(names):
        raise ConfigError(
            f"config.tasks: duplicate task names {names}; give repeated kinds explicit 'name's"
        )
    train = _parse_train(raw.get("train", {}))
    augment, noise_dir = _parse_data(raw.get("data", {}))
    ckpt_dir, log_path, every = _parse_io(raw.get("io", {}))

    return RunConfig(
        trunk=trunk,
        tasks=tasks,
        train=train,
        augment=augment,
        noise_bank_dir=(base_dir / noise_dir) if noise_dir else None,
        checkpoint_dir=base_dir / ckpt_dir,
        log_path=base_dir / log_path,
        checkpoint_every=every,
        base_dir=base_dir,
        raw=raw,
    )


def _expect_mapping(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")


def _check_keys(obj: dict, allowed: set[str], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {path}.{key} (allowed: {', '.join(sorted(allowed))})")


def _get(obj: dict, key: str, path: str, types, default=None, required=False):
    if key not in obj:
        if required:
            raise ConfigError(f"missing required key {path}.{key}")
        return default
    value = obj[key]
    if types is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if types is int and isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected int, got bool")
    if not isinstance(value, types if isinstance(types, tuple) else (types,)):
        tname = types.__name__ if not isinstance(types, tuple) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"{path}.{key}: expected {tname}, got {type(value).__name__}")
    return value


def _parse_schedule(obj: dict | None, path: str) -> LrSchedule:
    if obj is None:
        return LrSchedule()
    _expect_mapping(obj, path)
    _check_keys(obj, {"epochs_per_step", "multiplier"}, path)
    try:
        return LrSchedule(
            epochs_per_step=_get(obj, "epochs_per_step", path, int, default=5),
            multiplier=_get(obj, "multiplier", path, float, default=0.95),
        )
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


def _parse_trunk(obj: dict) -> TrunkConfig:
    _expect_mapping(obj, "config.trunk")
    _check_keys(obj, {"blocks", "layers", "channels"}, "config.trunk")
    try:
        return TrunkConfig(
            blocks=_get(obj, "blocks", "config.trunk", int, default=3),
            layers_per_block=_get(obj, "layers", "config.trunk", int, default=6),
            channels=_get(obj, "channels", "config.trunk", int, default=64),
        )
    except ValueError as e:
        raise ConfigError(f"config.trunk: {e}") from None


def _parse_task(obj: dict, index: int) -> TaskSpec:
    path = f"config.tasks[{index}]"
    _expect_mapping(obj, path)
    _check_keys(
        obj,
        {"kind", "name", "manifest", "unlabeled_manifest", "lr", "weight",
         "num_classes", "dropout", "warmup_mask", "schedule"},
        path,
    )
    kind = _get(obj, "kind", path, str, required=True)
    if kind not in KINDS:
        raise ConfigError(f"{path}.kind: unknown kind {kind!r} (expected one of {', '.join(KINDS)})")
    try:
        head = HeadSpec(
            kind=kind,
            num_classes=_get(obj, "num_classes", path, int),
            lr=_get(obj, "lr", path, float),
            dropout=_get(obj, "dropout", path, float, default=0.5),
            warmup_mask=_get(obj, "warmup_mask", path, bool, default=False),
        )
        lr = head.lr
        return TaskSpec(
            name=_get(obj, "name", path, str, default=kind),
            head=head,
            weight=_get(obj, "weight", path, float, default=1.0),
            manifest=_get(obj, "manifest", path, str),
            unlabeled_manifest=_get(obj, "unlabeled_manifest", path, str),
            optimizer=AdamConfig(lr=lr),
            schedule=_parse_schedule(obj.get("schedule"), f"{path}.schedule"),
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


def _parse_train(obj: dict) -> TrainConfig:
    path = "config.train"
    _expect_mapping(obj, path)
    _check_keys(
        obj,
        {"batch_size", "epochs", "seed", "clip_seconds", "trunk_lr", "schedule",
         "freeze_trunk", "workers", "sample_rate"},
        path,
    )
    try:
        return TrainConfig(
            epochs=_get(obj, "epochs", path, int, required=True),
            batch_size=_get(obj, "batch_size", path, int, default=48),
            seed=_get(obj, "seed", path, int, default=0),
            clip_seconds=_get(obj, "clip_seconds", path, float, default=2.0),
            trunk_lr=_get(obj, "trunk_lr", path, float, default=3e-4),
            schedule=_parse_schedule(obj.get("schedule"), f"{path}.schedule"),
            freeze_trunk=_get(obj, "freeze_trunk", path, bool, default=False),
            workers=_get(obj, "workers", path, int, default=1),
            sample_rate=_get(obj, "sample_rate", path, int, default=16000),
        )
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


def _parse_data(obj: dict) -> tuple[AugmentConfig | None, str | None]:
    path = "config.data"
    _expect_mapping(obj, path)
    _check_keys(obj, {"noise_bank", "augment"}, path)
    noise_dir = _get(obj, "noise_bank", path, str)
    augment = None
    if "augment" in obj:
        aug = obj["augment"]
        apath = f"{path}.augment"
        _expect_mapping(aug, apath)
        _check_keys(aug, {"pitch_prob", "pitch_range", "noise_prob", "snr_range"}, apath)
        augment = AugmentConfig(
            pitch_prob=_get(aug, "pitch_prob", apath, float, default=0.5),
            pitch_range=_parse_range(aug.get("pitch_range", [-2.0, 2.0]), f"{apath}.pitch_range"),
            noise_prob=_get(aug, "noise_prob", apath, float, default=0.5),
            snr_range=_parse_range(aug.get("snr_range", [10.0, 15.0]), f"{apath}.snr_range"),
        )
    return augment, noise_dir


def _parse_range(value, path: str) -> tuple[float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise ConfigError(f"{path}: expected [low, high]")
    lo, hi = float(value[0]), float(value[1])
    if hi < lo:
        raise ConfigError(f"{path}: low must not exceed high")
    return lo, hi


def _parse_io(obj: dict) -> tuple[str, str, int]:
    path = "config.io"
    _expect_mapping(obj, path)
    _check_keys(obj, {"checkpoint_dir", "log_path", "checkpoint_every"}, path)
    every = _get(obj, "checkpoint_every", path, int, default=0)
    if every < 0:
        raise ConfigError(f"{path}.checkpoint_every: must be non-negative")
    return (
        _get(obj, "checkpoint_dir", path, str, default="checkpoints"),
        _get(obj, "log_path", path, str, default="train_log.csv"),
        every,
    )
