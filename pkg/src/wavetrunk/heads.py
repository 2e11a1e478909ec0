"""Task-specific networks consuming trunk embeddings.

Three classifiers (tagging, speaker_id, speech_command) score pooled or
convolved embeddings against class labels; three regressors (next_step,
denoise, upsample) predict waveform values frame by frame. Heads own their
parameters and batch-norm running stats; losses with frame alignment live on
the regression heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad as nd
from .ndgrad import Array, BatchNormState

CLASSIFICATION_KINDS = ("tagging", "speaker_id", "speech_command")
REGRESSION_KINDS = ("next_step", "denoise", "upsample")
KINDS = CLASSIFICATION_KINDS + REGRESSION_KINDS

DEFAULT_LR = {
    "tagging": 5.37e-5,
    "speaker_id": 1e-4,
    "speech_command": 1e-4,
    "next_step": 5e-3,
    "denoise": 5e-3,
    "upsample": 5e-3,
}
DEFAULT_NUM_CLASSES = {"tagging": 41, "speech_command": 12}


@dataclass
class HeadSpec:
    """What to build for one task: head kind, output size, its learning rate."""

    kind: str
    num_classes: int | None = None
    lr: float | None = None
    dropout: float = 0.5
    warmup_mask: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown head kind {self.kind!r}; expected one of {KINDS}")
        if self.lr is None:
            self.lr = DEFAULT_LR[self.kind]
        if self.lr <= 0:
            raise ValueError(f"head lr must be positive, got {self.lr}")
        if self.kind in CLASSIFICATION_KINDS:
            if self.num_classes is None:
                self.num_classes = DEFAULT_NUM_CLASSES.get(self.kind)
            if self.num_classes is None:
                raise ValueError(f"{self.kind} head requires an explicit num_classes")
            if self.num_classes < 2:
                raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        elif self.num_classes is not None:
            raise ValueError(f"{self.kind} head takes no num_classes")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


def _dense_params(params, prefix, fan_in, fan_out, rng, dtype):
    params[f"{prefix}/w"] = nd.he_uniform((fan_in, fan_out), fan_in=fan_in, rng=rng, dtype=dtype)
    params[f"{prefix}/b"] = nd.zeros((fan_out,), dtype=dtype, requires_grad=True)


def _conv_params(params, prefix, c_out, c_in, width, rng, dtype):
    params[f"{prefix}/w"] = nd.he_uniform((c_out, c_in, width), fan_in=c_in * width, rng=rng, dtype=dtype)
    params[f"{prefix}/b"] = nd.zeros((c_out,), dtype=dtype, requires_grad=True)


class _Head:
    kind = "?"

    def __init__(self):
        self.params: dict[str, Array] = {}
        self.bn_states: dict[str, BatchNormState] = {}

    def named_params(self) -> dict[str, Array]:
        return dict(self.params)

    def named_buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for name, state in self.bn_states.items():
            out[f"{name}/running_mean"] = state.running_mean
            out[f"{name}/running_var"] = state.running_var
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())


class TaggingHead(_Head):
    """Time-average pooling, one hidden ReLU layer, class logits."""

    kind = "tagging"

    def __init__(self, in_channels: int, num_classes: int = 41, hidden: int = 512,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.num_classes = num_classes
        _dense_params(self.params, "fc1", in_channels, hidden, rng, dtype)
        _dense_params(self.params, "fc2", hidden, num_classes, rng, dtype)

    def forward(self, emb: Array, mode: str = "train", rng=None) -> Array:
        pooled = nd.global_avg_pool_time(emb)
        h = nd.relu(nd.dense(pooled, self.params["fc1/w"], self.params["fc1/b"]))
        return nd.dense(h, self.params["fc2/w"], self.params["fc2/b"])


class SpeakerHead(_Head):
    """Pooling followed by a 2-layer batch-normed perceptron."""

    kind = "speaker_id"

    def __init__(self, in_channels: int, num_classes: int, hidden: int = 1024,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.num_classes = num_classes
        _dense_params(self.params, "fc1", in_channels, hidden, rng, dtype)
        _dense_params(self.params, "fc2", hidden, hidden, rng, dtype)
        _dense_params(self.params, "out", hidden, num_classes, rng, dtype)
        for i, width in (("bn1", hidden), ("bn2", hidden)):
            self.params[f"{i}/gamma"] = nd.Array(np.ones(width, dtype=dtype), requires_grad=True)
            self.params[f"{i}/beta"] = nd.zeros((width,), dtype=dtype, requires_grad=True)
            self.bn_states[i] = BatchNormState.for_channels(width, dtype=dtype)

    def forward(self, emb: Array, mode: str = "train", rng=None) -> Array:
        h = nd.global_avg_pool_time(emb)
        for fc, bn in (("fc1", "bn1"), ("fc2", "bn2")):
            h = nd.dense(h, self.params[f"{fc}/w"], self.params[f"{fc}/b"])
            h = nd.batch_norm(h, self.params[f"{bn}/gamma"], self.params[f"{bn}/beta"],
                              self.bn_states[bn], mode=mode)
            h = nd.relu(h)
        return nd.dense(h, self.params["out/w"], self.params["out/b"])


class SpeechCommandHead(_Head):
    """Three strided valid convolutions with batch norm and dropout, then pooling."""

    kind = "speech_command"

    def __init__(self, in_channels: int, num_classes: int = 12, conv_channels: int = 64,
                 widths=(100, 50, 25), strides=(16, 8, 4), dropout: float = 0.5,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.num_classes = num_classes
        self.widths = tuple(widths)
        self.strides = tuple(strides)
        self.dropout = dropout
        c_in = in_channels
        for i, width in enumerate(self.widths, start=1):
            _conv_params(self.params, f"conv{i}", conv_channels, c_in, width, rng, dtype)
            self.params[f"bn{i}/gamma"] = nd.Array(np.ones(conv_channels, dtype=dtype), requires_grad=True)
            self.params[f"bn{i}/beta"] = nd.zeros((conv_channels,), dtype=dtype, requires_grad=True)
            self.bn_states[f"bn{i}"] = BatchNormState.for_channels(conv_channels, dtype=dtype)
            c_in = conv_channels
        _dense_params(self.params, "out", conv_channels, num_classes, rng, dtype)

    def min_input_length(self) -> int:
        """Shortest T for which every conv layer produces at least one frame."""
        t = 1
        for width, stride in zip(reversed(self.widths), reversed(self.strides)):
            t = (t - 1) * stride + width
        return t

    def frame_counts(self, T: int) -> list[int]:
        counts = []
        for width, stride in zip(self.widths, self.strides):
            T = (T - width) // stride + 1
            counts.append(T)
        return counts

    def forward(self, emb: Array, mode: str = "train", rng=None) -> Array:
        T = emb.shape[2]
        need = self.min_input_length()
        if T < need:
            raise ValueError(
                f"speech_command head needs at least {need} input frames for "
                f"widths {self.widths} / strides {self.strides}, got {T}"
            )
        h = emb
        for i, (width, stride) in enumerate(zip(self.widths, self.strides), start=1):
            h = nd.strided_conv1d(h, self.params[f"conv{i}/w"], self.params[f"conv{i}/b"], stride=stride)
            h = nd.batch_norm(h, self.params[f"bn{i}/gamma"], self.params[f"bn{i}/beta"],
                              self.bn_states[f"bn{i}"], mode=mode)
            h = nd.dropout(h, self.dropout, mode=mode, rng=rng)
            h = nd.relu(h)
        pooled = nd.global_avg_pool_time(h)
        return nd.dense(pooled, self.params["out/w"], self.params["out/b"])


class NextStepHead(_Head):
    """Width-1 conv stack predicting the next waveform sample from each frame."""

    kind = "next_step"

    def __init__(self, in_channels: int, hidden: int = 128,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        _conv_params(self.params, "conv1", hidden, in_channels, 1, rng, dtype)
        _conv_params(self.params, "conv2", 1, hidden, 1, rng, dtype)

    def forward(self, emb: Array, mode: str = "train", rng=None) -> Array:
        h = nd.relu(nd.causal_dilated_conv1d(emb, self.params["conv1/w"], self.params["conv1/b"]))
        return nd.causal_dilated_conv1d(h, self.params["conv2/w"], self.params["conv2/b"])

    def loss(self, pred: Array, wave: np.ndarray, warmup_frames: int = 0) -> Array:
        """MSE of pred[t] against wave[t+1] over every frame with a target.

        warmup_frames > 0 additionally drops that many left-padding-contaminated
        frames from the front.
        """
        T = pred.shape[2]
        if T < 2:
            raise ValueError(f"next_step loss needs at least 2 frames, got {T}")
        wave = np.asarray(wave)
        if wave.shape != tuple(pred.shape):
            raise ValueError(f"waveform shape {wave.shape} != prediction shape {tuple(pred.shape)}")
        start = min(int(warmup_frames), T - 2)
        return nd.mse_loss(nd.slice_time(pred, start, T - 1), wave[:, :, start + 1 :])


class _CausalRegressionHead(_Head):
    """Two causal convolutions of a fixed width; shared by denoise and upsample."""

    def __init__(self, in_channels: int, hidden: int = 128, width: int = 11,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.width = width
        _conv_params(self.params, "conv1", hidden, in_channels, width, rng, dtype)
        _conv_params(self.params, "conv2", 1, hidden, width, rng, dtype)

    def forward(self, emb: Array, mode: str = "train", rng=None) -> Array:
        h = nd.relu(nd.causal_dilated_conv1d(emb, self.params["conv1/w"], self.params["conv1/b"]))
        return nd.causal_dilated_conv1d(h, self.params["conv2/w"], self.params["conv2/b"])

    def loss(self, pred: Array, target: np.ndarray, delay: int) -> Array:
        """Smooth-L1 of pred[t] against target[t - delay], masked to full-context frames.

        A causal trunk cannot look ahead, so the regression target is delayed
        by half the receptive field; the first `delay` frames have no target
        and are excluded.
        """
        T = pred.shape[2]
        delay = int(delay)
        if delay < 0:
            raise ValueError("delay must be non-negative")
        if T <= delay:
            raise ValueError(f"input length {T} must exceed target delay {delay}")
        target = np.asarray(target)
        if target.shape != tuple(pred.shape):
            raise ValueError(f"target shape {target.shape} != prediction shape {tuple(pred.shape)}")
        if delay == 0:
            return nd.smooth_l1_loss(pred, target)
        return nd.smooth_l1_loss(nd.slice_time(pred, delay, T), target[:, :, : T - delay])


class DenoiseHead(_CausalRegressionHead):
    kind = "denoise"


class UpsampleHead(_CausalRegressionHead):
    kind = "upsample"


def build_head(spec: HeadSpec, in_channels: int, rng: np.random.Generator, dtype=np.float32):
    """Construct the head a spec describes, sized for the trunk's channel width."""
    if spec.kind == "tagging":
        return TaggingHead(in_channels, spec.num_classes, rng=rng, dtype=dtype)
    if spec.kind == "speaker_id":
        return SpeakerHead(in_channels, spec.num_classes, rng=rng, dtype=dtype)
    if spec.kind == "speech_command":
        return SpeechCommandHead(in_channels, spec.num_classes, dropout=spec.dropout, rng=rng, dtype=dtype)
    if spec.kind == "next_step":
        return NextStepHead(in_channels, rng=rng, dtype=dtype)
    if spec.kind == "denoise":
        return DenoiseHead(in_channels, rng=rng, dtype=dtype)
    if spec.kind == "upsample":
        return UpsampleHead(in_channels, rng=rng, dtype=dtype)
    raise ValueError(f"unknown head kind {spec.kind!r}")
