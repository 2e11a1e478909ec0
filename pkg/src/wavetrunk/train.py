"""Multitask training: shared trunk, per-task heads, losses, optimizers, persistence.

Every source of randomness is drawn from a stream derived with
SeedSequence([seed, tag, ...]), never from a sequential global generator, so a
run resumed from a checkpoint replays exactly the randomness of the epochs it
continues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ndgrad as nd
from .audiopipe import (
    AudioClip,
    Manifest,
    NoiseBank,
    crop_or_pad,
    load_wav,
    make_upsample_pair,
    mix_at_snr,
    normalize_peak,
    pitch_shift,
    pre_emphasis,
    resample,
    rms_normalize,
)
from .checkpoint import Checkpoint, CheckpointError, extract_group, load_checkpoint, save_checkpoint
from .heads import CLASSIFICATION_KINDS, HeadSpec, build_head
from .metrics import top_k_accuracy
from .ndgrad import Adam, AdamConfig, Array, LrSchedule
from .trunk import Trunk, TrunkConfig, receptive_field

# SeedSequence stream tags
_SEED_TRUNK = 0
_SEED_HEAD = 1
_SEED_EPOCH = 2


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 48
    seed: int = 0
    clip_seconds: float = 2.0
    trunk_lr: float = 3e-4
    schedule: LrSchedule = field(default_factory=LrSchedule)
    freeze_trunk: bool = False
    workers: int = 1
    sample_rate: int = 16000

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.clip_seconds <= 0:
            raise ValueError("clip_seconds must be positive")
        if self.trunk_lr <= 0:
            raise ValueError("trunk_lr must be positive")


@dataclass
class AugmentConfig:
    pitch_prob: float = 0.5
    pitch_range: tuple[float, float] = (-2.0, 2.0)
    noise_prob: float = 0.5
    snr_range: tuple[float, float] = (10.0, 15.0)


@dataclass
class TaskSpec:
    """One task: head description, loss weight, data sources, optimizer settings."""

    name: str
    head: HeadSpec
    weight: float = 1.0
    manifest: str | Path | None = None
    unlabeled_manifest: str | Path | None = None
    optimizer: AdamConfig | None = None
    schedule: LrSchedule = field(default_factory=LrSchedule)

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"task {self.name}: weight must be non-negative")
        if self.optimizer is None:
            self.optimizer = AdamConfig(lr=self.head.lr)
        if self.is_supervised and self.manifest is None:
            raise ValueError(f"task {self.name}: supervised tasks need a labeled manifest")
        if not self.is_supervised and self.manifest is None and self.unlabeled_manifest is None:
            raise ValueError(f"task {self.name}: needs a manifest or unlabeled_manifest")

    @property
    def is_supervised(self) -> bool:
        return self.head.kind in CLASSIFICATION_KINDS


class MultitaskModel:
    """Shared trunk plus one head per task, with named-tensor access."""

    def __init__(self, trunk_cfg: TrunkConfig, head_specs: dict[str, HeadSpec], seed: int = 0,
                 dtype=np.float32):
        self.trunk_cfg = trunk_cfg
        self.trunk = Trunk(trunk_cfg, np.random.default_rng(np.random.SeedSequence([seed, _SEED_TRUNK])), dtype=dtype)
        self.heads = {}
        for i, (name, spec) in enumerate(sorted(head_specs.items())):
            rng = np.random.default_rng(np.random.SeedSequence([seed, _SEED_HEAD, i]))
            self.heads[name] = build_head(spec, trunk_cfg.channels, rng, dtype=dtype)

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {f"trunk/{k}": p.data for k, p in self.trunk.named_params().items()}
        for name, head in self.heads.items():
            for k, p in head.named_params().items():
                out[f"head/{name}/{k}"] = p.data
            for k, buf in head.named_buffers().items():
                out[f"head/{name}/{k}"] = buf
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        """Copy values in after validating every expected name and shape."""
        own = self.named_tensors()
        missing = [k for k in own if k not in tensors]
        if missing:
            raise CheckpointError("checkpoint is missing tensors: " + ", ".join(sorted(missing)))
        wrong = [
            f"{k}: checkpoint {tuple(tensors[k].shape)} != model {tuple(v.shape)}"
            for k, v in own.items()
            if tuple(tensors[k].shape) != tuple(v.shape)
        ]
        if wrong:
            raise CheckpointError("checkpoint tensor shapes do not match: " + "; ".join(wrong))
        for k, v in own.items():
            v[...] = tensors[k].astype(v.dtype, copy=False)


def load_trunk_from_checkpoint(model: MultitaskModel, ckpt: Checkpoint) -> None:
    """Transfer stage: copy only the trunk tensors, bit-exact, validating first."""
    expected = {k: tuple(p.shape) for k, p in model.trunk.named_params().items()}
    values = extract_group(ckpt, "trunk", expected)
    for k, p in model.trunk.named_params().items():
        p.data[...] = values[k].astype(p.data.dtype, copy=False)


@dataclass
class Batch:
    x: np.ndarray  # (B, 1, T) float32 trunk input
    labels: np.ndarray | None = None  # (B,) int64 for classification tasks
    target: np.ndarray | None = None  # (B, 1, T) float32 regression target

    def __post_init__(self):
        if self.x.ndim != 3 or self.x.shape[0] < 1:
            raise ValueError(f"batch input must be non-empty (B, 1, T), got {self.x.shape}")


class TaskData:
    """Clips for one task, cached in memory, with per-epoch batch synthesis."""

    def __init__(self, spec: TaskSpec, cfg: TrainConfig, noise_bank: NoiseBank | None = None,
                 augment: AugmentConfig | None = None, base_dir: Path | None = None,
                 include_all_splits: bool = False):
        self.spec = spec
        self.cfg = cfg
        self.augment = augment if spec.is_supervised else None
        self.noise_bank = noise_bank
        self.clips: list[AudioClip] = []
        self.labels: list[int] = []

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() or base_dir is None else base_dir / p

        if spec.is_supervised:
            manifest = Manifest.load(resolve(spec.manifest))
            if include_all_splits:
                rows = manifest.rows
            else:
                rows = [r for r in manifest.rows if r.split in (None, "train")]
            if manifest.num_classes != spec.head.num_classes:
                raise ValueError(
                    f"task {spec.name}: head expects {spec.head.num_classes} classes "
                    f"but manifest has {manifest.num_classes}"
                )
            for row in rows:
                self.clips.append(self._load(row.path))
                self.labels.append(manifest.label_id(row))
        else:
            source = spec.unlabeled_manifest or spec.manifest
            manifest = Manifest.load(resolve(source))
            for row in manifest.rows:
                self.clips.append(self._load(row.path))
        if not self.clips:
            raise ValueError(f"task {spec.name}: manifest holds no training rows")
        if spec.head.kind == "denoise" and self.noise_bank is None:
            self.noise_bank = NoiseBank(cfg.sample_rate)

    def _load(self, path) -> AudioClip:
        clip = load_wav(path)
        if clip.sample_rate != self.cfg.sample_rate:
            clip = resample(clip, self.cfg.sample_rate)
        return clip

    def __len__(self) -> int:
        return len(self.clips)

    def epoch_order(self, count: int, rng: np.random.Generator) -> list[int]:
        """Shuffled indices cycled out to `count` entries."""
        order: list[int] = []
        while len(order) < count:
            order.extend(rng.permutation(len(self.clips)).tolist())
        return order[:count]

    def _prepare(self, clip: AudioClip, rng: np.random.Generator) -> np.ndarray:
        clip = crop_or_pad(clip, self.cfg.clip_seconds, rng)
        if self.augment is not None:
            clip = self._augmented(clip, rng)
        clip = normalize_peak(clip)
        if self.spec.head.kind == "speaker_id":
            clip = pre_emphasis(rms_normalize(clip))
        return clip.samples

    def _augmented(self, clip: AudioClip, rng: np.random.Generator) -> AudioClip:
        aug = self.augment
        if aug.pitch_prob > 0 and rng.random() < aug.pitch_prob:
            semis = float(rng.uniform(*aug.pitch_range))
            clip = pitch_shift(clip, semis, rng)
        if aug.noise_prob > 0 and rng.random() < aug.noise_prob and np.any(clip.samples):
            bank = self.noise_bank or NoiseBank(self.cfg.sample_rate)
            self.noise_bank = bank
            noise, kind = bank.sample(len(clip), rng)
            snr = float(rng.uniform(*aug.snr_range))
            clip = mix_at_snr(normalize_peak(clip), noise, snr, rng, noise_kind=kind).noisy
        return clip

    def make_batch(self, indices: list[int], rng: np.random.Generator) -> Batch:
        if not indices:
            raise ValueError(f"task {self.spec.name}: empty batch")
        kind = self.spec.head.kind
        waves = [self._prepare(self.clips[i], rng) for i in indices]
        x = np.stack(waves)[:, None, :].astype(np.float32)

        if kind in CLASSIFICATION_KINDS:
            labels = np.array([self.labels[i] for i in indices], dtype=np.int64)
            return Batch(x=x, labels=labels)
        if kind == "next_step":
            return Batch(x=x, target=x)
        if kind == "denoise":
            noisy = np.empty_like(x)
            clean = np.empty_like(x)
            for j in range(x.shape[0]):
                wave = x[j, 0].astype(np.float64)
                if not np.any(wave):
                    noisy[j, 0] = clean[j, 0] = 0.0
                    continue
                noise, tag = self.noise_bank.sample(wave.size, rng)
                snr = float(rng.uniform(10.0, 15.0))
                pair = mix_at_snr(AudioClip(wave, self.cfg.sample_rate), noise, snr, rng, noise_kind=tag)
                noisy[j, 0] = pair.noisy.samples.astype(np.float32)
                clean[j, 0] = pair.clean.samples.astype(np.float32)
            return Batch(x=noisy, target=clean)
        if kind == "upsample":
            low = np.empty_like(x)
            for j in range(x.shape[0]):
                inp, _ = make_upsample_pair(AudioClip(x[j, 0].astype(np.float64), self.cfg.sample_rate))
                low[j, 0] = inp.samples.astype(np.float32)
            return Batch(x=low, target=x)
        raise ValueError(f"unknown task kind {kind!r}")

    def eval_batches(self, batch_size: int):
        """Deterministic batches over every clip: center crop, eval preprocessing."""
        target_len = round(self.cfg.clip_seconds * self.cfg.sample_rate)
        for start in range(0, len(self.clips), batch_size):
            chunk = range(start, min(start + batch_size, len(self.clips)))
            waves = []
            for i in chunk:
                clip = self.clips[i]
                samples = _fit_length(clip.samples, target_len)
                clip = normalize_peak(AudioClip(samples, clip.sample_rate))
                if self.spec.head.kind == "speaker_id":
                    clip = pre_emphasis(rms_normalize(clip))
                waves.append(clip.samples)
            x = np.stack(waves)[:, None, :].astype(np.float32)
            labels = np.array([self.labels[i] for i in chunk], dtype=np.int64) if self.labels else None
            yield Batch(x=x, labels=labels)


def _fit_length(samples: np.ndarray, target: int) -> np.ndarray:
    if samples.size > target:
        start = (samples.size - target) // 2
        return samples[start : start + target]
    if samples.size < target:
        return np.concatenate([samples, np.zeros(target - samples.size)])
    return samples


@dataclass
class TaskRuntime:
    spec: TaskSpec
    data: TaskData
    optimizer: Adam


class Trainer:
    """Owns the model, task runtimes, and optimizers for one training run."""

    def __init__(self, model: MultitaskModel, tasks: list[TaskSpec], cfg: TrainConfig,
                 noise_bank: NoiseBank | None = None, augment: AugmentConfig | None = None,
                 base_dir: Path | None = None, config_snapshot: dict | None = None):
        if not tasks:
            raise ValueError("at least one task is required")
        names = [t.name for t in tasks]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate task names: {names}")
        uses_bn = any(t.head.kind in ("speaker_id", "speech_command") for t in tasks)
        if uses_bn and cfg.batch_size < 2:
            raise ValueError("batch_size must be >= 2 when a head uses batch norm")
        self.model = model
        self.cfg = cfg
        self.config_snapshot = config_snapshot or {}
        self.start_epoch = 0
        self.tasks: list[TaskRuntime] = []
        for spec in tasks:
            if spec.name not in model.heads:
                raise ValueError(f"model has no head for task {spec.name!r}")
            data = TaskData(spec, cfg, noise_bank=noise_bank, augment=augment, base_dir=base_dir)
            if len(data) < cfg.batch_size:
                raise ValueError(
                    f"task {spec.name}: dataset of {len(data)} clips is smaller than one "
                    f"batch of {cfg.batch_size}"
                )
            optimizer = Adam(model.heads[spec.name].named_params(), spec.optimizer)
            self.tasks.append(TaskRuntime(spec, data, optimizer))
        self.trunk_optimizer = Adam(model.trunk.named_params(), AdamConfig(lr=cfg.trunk_lr))
        self.regression_delay = (receptive_field(model.trunk_cfg) - 1) // 2

    # -- single step ------------------------------------------------------

    def task_loss(self, runtime: TaskRuntime, batch: Batch, mode: str,
                  rng: np.random.Generator | None) -> tuple[Array, Array | None]:
        """(loss, logits-if-classification) for one task batch."""
        head = self.model.heads[runtime.spec.name]
        emb = self.model.trunk(Array(batch.x))
        kind = runtime.spec.head.kind
        if kind in CLASSIFICATION_KINDS:
            logits = head.forward(emb, mode=mode, rng=rng)
            return nd.softmax_cross_entropy(logits, batch.labels), logits
        pred = head.forward(emb, mode=mode, rng=rng)
        if kind == "next_step":
            warmup = receptive_field(self.model.trunk_cfg) - 1 if runtime.spec.head.warmup_mask else 0
            return head.loss(pred, batch.target, warmup_frames=warmup), None
        return head.loss(pred, batch.target, delay=self.regression_delay), None

    def train_step(self, batches: dict[str, Batch], epoch: int,
                   rngs: dict[str, np.random.Generator] | None = None) -> dict[str, float]:
        """Forward every task, one shared backward, one Adam step per group."""
        rngs = rngs or {}
        losses: dict[str, float] = {}
        metrics: dict[str, float] = {}
        total: Array | None = None
        for runtime in self.tasks:
            name = runtime.spec.name
            loss, logits = self.task_loss(runtime, batches[name], "train", rngs.get(name))
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(f"task {name!r} produced a non-finite loss ({value})")
            losses[name] = value
            if logits is not None:
                metrics[name] = top_k_accuracy(logits.data, batches[name].labels, 1)
            weighted = nd.scale(loss, runtime.spec.weight)
            total = weighted if total is None else nd.add(total, weighted)
        losses["total"] = total.item()
        total.backward()

        if not self.cfg.freeze_trunk:
            self.trunk_optimizer.step(lr=self.cfg.schedule.effective_lr(self.cfg.trunk_lr, epoch))
        self.trunk_optimizer.zero_grad()
        for runtime in self.tasks:
            lr = runtime.spec.schedule.effective_lr(runtime.spec.optimizer.lr, epoch)
            runtime.optimizer.step(lr=lr)
            runtime.optimizer.zero_grad()
        losses.update({f"metric/{k}": v for k, v in metrics.items()})
        return losses

    # -- full loop --------------------------------------------------------

    def steps_per_epoch(self) -> int:
        largest = max(len(rt.data) for rt in self.tasks)
        return -(-largest // self.cfg.batch_size)

    def fit(self, log_path: str | Path | None = None, checkpoint_dir: str | Path | None = None,
            checkpoint_every: int = 0, on_epoch_end=None) -> list[dict]:
        """Run shuffled mini-batch epochs; returns one log row dict per task per epoch."""
        steps = self.steps_per_epoch()
        rows: list[dict] = []
        writer = _LogWriter(log_path)
        try:
            for epoch in range(self.start_epoch, self.cfg.epochs):
                epoch_rows = self._run_epoch(epoch, steps)
                rows.extend(epoch_rows)
                writer.write(epoch_rows)
                if checkpoint_dir and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
                    self.save(Path(checkpoint_dir) / f"epoch{epoch + 1:04d}.ckpt", epoch + 1)
                if on_epoch_end is not None and on_epoch_end(epoch_rows) is False:
                    break
        finally:
            writer.close()
        if checkpoint_dir:
            self.save(Path(checkpoint_dir) / "final.ckpt", min(self.cfg.epochs, self._next_epoch(rows)))
        return rows

    def _next_epoch(self, rows: list[dict]) -> int:
        return (max(r["epoch"] for r in rows) + 1) if rows else self.start_epoch

    def _run_epoch(self, epoch: int, steps: int) -> list[dict]:
        orders = {}
        rngs = {}
        for idx, runtime in enumerate(self.tasks):
            rng = np.random.default_rng(np.random.SeedSequence([self.cfg.seed, _SEED_EPOCH, epoch, idx]))
            rngs[runtime.spec.name] = rng
            orders[runtime.spec.name] = runtime.data.epoch_order(steps * self.cfg.batch_size, rng)

        sums = {rt.spec.name: 0.0 for rt in self.tasks}
        metric_sums = {rt.spec.name: 0.0 for rt in self.tasks}
        metric_counts = {rt.spec.name: 0 for rt in self.tasks}
        for step in range(steps):
            batches = {}
            for runtime in self.tasks:
                name = runtime.spec.name
                lo = step * self.cfg.batch_size
                idx = orders[name][lo : lo + self.cfg.batch_size]
                batches[name] = runtime.data.make_batch(idx, rngs[name])
            result = self.train_step(batches, epoch, rngs)
            for runtime in self.tasks:
                name = runtime.spec.name
                sums[name] += result[name]
                if f"metric/{name}" in result:
                    metric_sums[name] += result[f"metric/{name}"]
                    metric_counts[name] += 1

        rows = []
        for runtime in self.tasks:
            name = runtime.spec.name
            mean_loss = sums[name] / steps
            metric = metric_sums[name] / metric_counts[name] if metric_counts[name] else mean_loss
            rows.append(
                {
                    "epoch": epoch,
                    "task": name,
                    "loss": mean_loss,
                    "metric": metric,
                    "lr": runtime.spec.schedule.effective_lr(runtime.spec.optimizer.lr, epoch),
                }
            )
        return rows

    # -- evaluation -------------------------------------------------------

    def collect_logits(self, runtime: TaskRuntime) -> tuple[np.ndarray, np.ndarray]:
        head = self.model.heads[runtime.spec.name]
        parts = []
        labels = []
        for batch in runtime.data.eval_batches(self.cfg.batch_size):
            emb = self.model.trunk(Array(batch.x))
            parts.append(head.forward(emb, mode="eval").data)
            labels.append(batch.labels)
        return np.concatenate(parts), np.concatenate(labels)

    # -- persistence ------------------------------------------------------

    def save(self, path: str | Path, epoch: int) -> None:
        tensors = self.model.named_tensors()
        optim_meta = {}
        groups = [("trunk", self.trunk_optimizer)] + [
            (f"task/{rt.spec.name}", rt.optimizer) for rt in self.tasks
        ]
        for group_name, opt in groups:
            for k, v in opt.state_tensors().items():
                tensors[f"optim/{group_name}/{k}"] = v
            optim_meta[group_name] = {
                "lr": opt.cfg.lr,
                "beta0": opt.cfg.beta0,
                "beta1": opt.cfg.beta1,
                "epsilon": opt.cfg.epsilon,
                "step_count": opt.cfg.step_count,
            }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, tensors, epoch=epoch, config=self.config_snapshot, optim=optim_meta)

    def resume(self, path: str | Path) -> None:
        """Restore model, optimizer state, and the epoch counter from a checkpoint."""
        ckpt = load_checkpoint(path)
        self.model.load_tensors(ckpt.tensors)
        groups = [("trunk", self.trunk_optimizer)] + [
            (f"task/{rt.spec.name}", rt.optimizer) for rt in self.tasks
        ]
        for group_name, opt in groups:
            meta = ckpt.optim.get(group_name)
            if meta is None:
                raise CheckpointError(f"checkpoint has no optimizer state for group {group_name!r}")
            expected = {f"{k}/{kind}": tuple(p.shape) for k, p in opt.params.items() for kind in ("m", "v")}
            values = extract_group(ckpt, f"optim/{group_name}", expected)
            for k in opt.params:
                opt.m[k][...] = values[f"{k}/m"]
                opt.v[k][...] = values[f"{k}/v"]
            opt.cfg.step_count = int(meta["step_count"])
        self.start_epoch = ckpt.epoch


class _LogWriter:
    """Incremental CSV log: epoch,task,loss,metric,lr with LF endings."""

    def __init__(self, path: str | Path | None):
        self.fh = None
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self.fh = open(path, "w", encoding="utf-8", newline="\n")
            self.fh.write("epoch,task,loss,metric,lr\n")
            self.fh.flush()

    def write(self, rows: list[dict]) -> None:
        if self.fh is None:
            return
        for r in rows:
            self.fh.write(f"{r['epoch']},{r['task']},{r['loss']!r},{r['metric']!r},{r['lr']!r}\n")
        self.fh.flush()

    def close(self) -> None:
        if self.fh is not None:
            self.fh.close()
            self.fh = None
