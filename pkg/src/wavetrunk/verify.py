"""Verification suites: gradient checks, DSP invariants, and property checks.

Backs the `verify` command. Every check returns a CheckResult with a
machine-readable name and a one-line detail; a suite passes only if every
check passes. Gradient checks run in 64-bit mode with per-op documented
tolerances (1e-4 default, 1e-3 for batch norm and composites, 1e-6 for the
pointwise sigmoid derivative).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ndgrad as nd
from .audiopipe import (
    AudioClip,
    NoiseBank,
    crop_or_pad,
    de_emphasis,
    make_upsample_pair,
    measured_snr_db,
    mix_at_snr,
    normalize_peak,
    pre_emphasis,
    resample,
)
from .heads import NextStepHead, TaggingHead
from .metrics import map_at_3, top_k_accuracy
from .ndgrad import Adam, AdamConfig, Array
from .ndgrad.gradcheck import check_gradients
from .trunk import Trunk, TrunkConfig, receptive_field

SUITE_NAMES = ("gradcheck", "dsp", "props")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} {self.detail}".rstrip()


def _check(results, name, passed, detail=""):
    results.append(CheckResult(name, bool(passed), detail))


def _f64(rng, shape, scale=1.0):
    return Array(rng.standard_normal(shape) * scale, requires_grad=True, dtype=np.float64)


# ---------------------------------------------------------------------------
# gradcheck suite
# ---------------------------------------------------------------------------

def _grad_case(name, build, tol, seeds=5):
    worst = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        fn, arrays = build(rng)
        worst = max(worst, check_gradients(fn, arrays))
    return CheckResult(f"gradcheck/{name}", worst < tol, f"max_rel_err={worst:.3e} tol={tol:g}")


def run_gradcheck() -> list[CheckResult]:
    results: list[CheckResult] = []

    def conv_case(rng):
        x = _f64(rng, (2, 3, 12))
        w = _f64(rng, (4, 3, 2), 0.5)
        b = _f64(rng, (4,), 0.1)
        t = rng.standard_normal((2, 4, 12))
        return (lambda: nd.mse_loss(nd.causal_dilated_conv1d(x, w, b, dilation=4), t)), [x, w, b]

    def strided_case(rng):
        x = _f64(rng, (2, 3, 17))
        w = _f64(rng, (2, 3, 4), 0.5)
        b = _f64(rng, (2,), 0.1)
        t = rng.standard_normal((2, 2, 5))
        return (lambda: nd.mse_loss(nd.strided_conv1d(x, w, b, stride=3), t)), [x, w, b]

    def dense_case(rng):
        x = _f64(rng, (3, 4))
        w = _f64(rng, (4, 2))
        b = _f64(rng, (2,))
        t = rng.standard_normal((3, 2))
        return (lambda: nd.mse_loss(nd.dense(x, w, b), t)), [x, w, b]

    def elementwise_case(rng):
        a = _f64(rng, (3, 5))
        b = _f64(rng, (3, 5))
        t = rng.standard_normal((3, 5))

        def fn():
            out = nd.mul(nd.sigmoid(a), nd.tanh(b))
            out = nd.add(out, nd.relu(a))
            return nd.mse_loss(out, t)

        return fn, [a, b]

    def pool_case(rng):
        x = _f64(rng, (2, 3, 9))
        t = rng.standard_normal((2, 3))
        return (lambda: nd.mse_loss(nd.global_avg_pool_time(x), t)), [x]

    def bn_case(rng):
        x = _f64(rng, (6, 4))
        gamma = Array(rng.uniform(0.5, 1.5, 4), requires_grad=True, dtype=np.float64)
        beta = _f64(rng, (4,), 0.1)
        t = rng.standard_normal((6, 4))

        def fn():
            state = nd.BatchNormState.for_channels(4, dtype=np.float64)
            return nd.mse_loss(nd.batch_norm(x, gamma, beta, state, mode="train"), t)

        return fn, [x, gamma, beta]

    def dropout_case(rng):
        x = _f64(rng, (4, 6))
        t = rng.standard_normal((4, 6))
        return (lambda: nd.mse_loss(nd.dropout(x, 0.4, "train", np.random.default_rng(7)), t)), [x]

    def ce_case(rng):
        logits = _f64(rng, (3, 6))
        labels = rng.integers(0, 6, 3)
        return (lambda: nd.softmax_cross_entropy(logits, labels)), [logits]

    def mse_case(rng):
        pred = _f64(rng, (3, 4))
        t = rng.standard_normal((3, 4))
        return (lambda: nd.mse_loss(pred, t)), [pred]

    def smooth_case(rng):
        pred = _f64(rng, (3, 4), 2.0)
        t = rng.standard_normal((3, 4))
        return (lambda: nd.smooth_l1_loss(pred, t)), [pred]

    for name, build, tol in (
        ("causal_dilated_conv1d", conv_case, 1e-4),
        ("strided_conv1d", strided_case, 1e-4),
        ("dense", dense_case, 1e-4),
        ("elementwise", elementwise_case, 1e-4),
        ("global_avg_pool_time", pool_case, 1e-4),
        ("batch_norm", bn_case, 1e-3),
        ("dropout", dropout_case, 1e-4),
        ("softmax_cross_entropy", ce_case, 1e-4),
        ("mse_loss", mse_case, 1e-4),
        ("smooth_l1_loss", smooth_case, 1e-4),
    ):
        results.append(_grad_case(name, build, tol))

    # pointwise sigmoid derivative at pinned inputs, tight tolerance
    x = Array(np.array([-2.0, 0.0, 3.0]), requires_grad=True, dtype=np.float64)
    err = check_gradients(lambda: nd.mse_loss(nd.sigmoid(x), np.zeros(3)), [x])
    _check(results, "gradcheck/sigmoid_pointwise", err < 1e-6, f"max_rel_err={err:.3e} tol=1e-06")

    results.append(_composite_gradcheck())
    return results


def _composite_gradcheck() -> CheckResult:
    """Trunk + classification + next-step mini-model, under 500 parameters."""
    rng = np.random.default_rng(0)
    cfg = TrunkConfig(blocks=1, layers_per_block=2, channels=4)
    trunk = Trunk(cfg, rng, dtype=np.float64)
    tag = TaggingHead(4, num_classes=3, hidden=8, rng=rng, dtype=np.float64)
    nxt = NextStepHead(4, hidden=4, rng=rng, dtype=np.float64)
    params = list(trunk.named_params().values()) + list(tag.params.values()) + list(nxt.params.values())
    total = sum(p.size for p in params)

    x = Array(rng.uniform(-1, 1, (2, 1, 16)), dtype=np.float64)
    wave = x.data.copy()
    labels = np.array([0, 2])

    def fn():
        emb = trunk.forward(x)
        ce = nd.softmax_cross_entropy(tag.forward(emb), labels)
        reg = nxt.loss(nxt.forward(emb), wave)
        return nd.add(ce, reg)

    err = check_gradients(fn, params)
    ok = err < 1e-3 and total <= 500
    return CheckResult("gradcheck/composite_trunk_heads", ok,
                       f"max_rel_err={err:.3e} tol=1e-03 params={total}")


# ---------------------------------------------------------------------------
# dsp suite
# ---------------------------------------------------------------------------

def run_dsp() -> list[CheckResult]:
    results: list[CheckResult] = []
    rng = np.random.default_rng(0)

    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(400, 2000))
        clean = AudioClip(rng.uniform(-0.8, 0.8, n), 16000)
        noise = AudioClip(rng.uniform(-0.8, 0.8, n + int(rng.integers(0, 200))), 16000)
        snr = float(rng.uniform(-5, 30))
        pair = mix_at_snr(clean, noise, snr, rng)
        worst = max(worst, abs(measured_snr_db(pair.clean.samples, pair.noisy.samples) - snr))
    _check(results, "dsp/mix_at_snr_accuracy", worst < 1e-6, f"max_abs_err_db={worst:.3e} tol=1e-06")

    err = 0.0
    for seed in range(5):
        r = np.random.default_rng(seed)
        clip = AudioClip(r.uniform(-1, 1, 16000), 16000)
        back = de_emphasis(pre_emphasis(clip, 0.97), 0.97)
        err = max(err, float(np.max(np.abs(back.samples - clip.samples))))
    _check(results, "dsp/pre_emphasis_roundtrip", err < 1e-6, f"max_abs_err={err:.3e} tol=1e-06")

    clip = AudioClip(rng.uniform(-1, 1, 4001), 16000)
    inp, target = make_upsample_pair(clip)
    blocks = inp.samples[:4000].reshape(1000, 4)
    periodic = bool(np.all(blocks == blocks[:, :1])) and len(inp) == len(clip)
    _check(results, "dsp/upsample_pair_4_periodic", periodic and np.array_equal(target.samples, clip.samples))

    t44 = np.arange(22050) / 44100.0
    sine44 = AudioClip(0.8 * np.sin(2 * np.pi * 440.0 * t44), 44100)
    out = resample(sine44, 16000)
    t16 = np.arange(len(out)) / 16000.0
    ref = 0.8 * np.sin(2 * np.pi * 440.0 * t16)
    a, b = out.samples[200:-200], ref[200:-200]
    corr = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    _check(results, "dsp/resample_440hz_sine", corr > 0.999, f"corr={corr:.6f} tol>0.999")

    dc = resample(AudioClip(np.ones(4000), 44100), 16000)
    dev = float(np.max(np.abs(dc.samples[100:-100] - 1.0)))
    _check(results, "dsp/resample_dc", dev < 1e-3, f"max_dev={dev:.3e} tol=1e-03")

    ok = True
    for n, dur in ((5, 0.7), (16000, 2.0), (48000, 2.0)):
        got = len(crop_or_pad(AudioClip(np.zeros(n), 16000), dur, rng))
        ok = ok and got == round(dur * 16000)
    _check(results, "dsp/crop_or_pad_length", ok)

    bounded = True
    bank = NoiseBank(16000)
    for _ in range(25):
        raw = AudioClip(rng.uniform(-3, 3, 8000), 16000)
        clean = normalize_peak(crop_or_pad(raw, 0.4, rng))
        noise, kind = bank.sample(len(clean), rng)
        pair = mix_at_snr(clean, noise, float(rng.uniform(10, 15)), rng, noise_kind=kind)
        for s in (clean.samples, pair.noisy.samples, pair.clean.samples):
            bounded = bounded and bool(np.all(np.abs(s) <= 1.0)) and bool(np.all(np.isfinite(s)))
    _check(results, "dsp/pipeline_outputs_bounded", bounded)

    return results


# ---------------------------------------------------------------------------
# props suite
# ---------------------------------------------------------------------------

def measured_receptive_field(cfg: TrunkConfig, seed: int, eps: float = 0.5) -> int:
    """Empirical receptive field by batched single-sample perturbation."""
    rng = np.random.default_rng(seed)
    trunk = Trunk(cfg, rng, dtype=np.float64)
    T = receptive_field(cfg) + 12
    x = rng.uniform(-1, 1, size=(1, 1, T))
    base = trunk.forward(Array(x, dtype=np.float64)).data[0, :, -1]
    probes = np.repeat(x, T, axis=0)
    probes[np.arange(T), 0, np.arange(T)] += eps
    out = trunk.forward(Array(probes, dtype=np.float64)).data[:, :, -1]
    changed = np.any(out != base[None, :], axis=1)
    influences = np.nonzero(changed)[0]
    if influences.size == 0:
        return 0
    return T - int(influences.min())


def check_receptive_fields(configs=((1, 2), (2, 3), (3, 6)), seeds=3) -> list[CheckResult]:
    results = []
    for blocks, layers in configs:
        channels = 64 if (blocks, layers) == (3, 6) else 8
        cfg = TrunkConfig(blocks, layers, channels)
        expected = receptive_field(cfg)
        measured = [measured_receptive_field(cfg, seed) for seed in range(seeds)]
        ok = all(m == expected for m in measured)
        _check(results, f"props/receptive_field_N{blocks}_S{layers}", ok,
               f"expected={expected} measured={measured}")
    return results


def check_causality(num_cases: int = 100, seed: int = 0) -> CheckResult:
    """Perturbing any input after t leaves trunk output at t bit-identical."""
    rng = np.random.default_rng(seed)
    cfg = TrunkConfig(2, 3, 8)
    ok = True
    cases = 0
    while cases < num_cases:
        trunk = Trunk(cfg, rng)
        x = rng.uniform(-1, 1, (1, 1, 48)).astype(np.float32)
        base = trunk.forward(Array(x)).data
        for _ in range(10):
            if cases >= num_cases:
                break
            t = int(rng.integers(0, 47))
            perturbed = x.copy()
            perturbed[:, :, t + 1 :] += rng.uniform(-1, 1, (1, 1, 47 - t)).astype(np.float32)
            out = trunk.forward(Array(perturbed)).data
            ok = ok and np.array_equal(out[:, :, : t + 1], base[:, :, : t + 1])
            cases += 1
    return CheckResult("props/causality_bit_exact", ok, f"cases={num_cases}")


def run_props() -> list[CheckResult]:
    results: list[CheckResult] = []
    results.extend(check_receptive_fields())
    results.append(check_causality())

    vals = [
        nd.smooth_l1_loss(Array(np.full(3, d), dtype=np.float64), np.zeros(3)).item()
        for d in (0.5, 1.0, 2.0)
    ]
    _check(results, "props/smooth_l1_values", vals == [0.125, 0.5, 1.5], f"values={vals}")

    ok = True
    for C in (2, 12, 41):
        loss = nd.softmax_cross_entropy(Array(np.zeros((4, C)), dtype=np.float64),
                                        np.zeros(4, dtype=np.int64)).item()
        ok = ok and abs(loss - math.log(C)) < 1e-6
    _check(results, "props/uniform_cross_entropy_ln_c", ok)

    rng = np.random.default_rng(1)
    head = NextStepHead(4, rng=rng, dtype=np.float64)
    wave = rng.uniform(-1, 1, (1, 1, 8))
    pred = Array(rng.uniform(-1, 1, (1, 1, 8)), dtype=np.float64)
    per_frame = [(pred.data[0, 0, t] - wave[0, 0, t + 1]) ** 2 for t in range(7)]
    got = head.loss(pred, wave).item()
    _check(results, "props/next_step_frame_loss", abs(got - np.mean(per_frame)) < 1e-12,
           f"loss={got:.6e}")

    probs = nd.softmax(rng.standard_normal((200, 9)) * 20)
    ok = bool(np.all(probs >= 0)) and bool(np.all(np.abs(probs.sum(axis=1) - 1) < 1e-6))
    _check(results, "props/softmax_simplex", ok)

    eps = 1e-7
    lo = nd.smooth_l1_loss(Array([1 - eps], dtype=np.float64), np.zeros(1)).item()
    hi = nd.smooth_l1_loss(Array([1 + eps], dtype=np.float64), np.zeros(1)).item()
    grads = []
    for d in (1 - eps, 1 + eps):
        p = Array([d], requires_grad=True, dtype=np.float64)
        nd.smooth_l1_loss(p, np.zeros(1)).backward()
        grads.append(float(p.grad[0]))
    ok = abs(hi - lo) < 1e-6 and abs(grads[0] - grads[1]) < 1e-6
    _check(results, "props/smooth_l1_c1_continuity", ok, f"value_gap={hi - lo:.2e} slope_gap={grads[1] - grads[0]:.2e}")

    cfg = TrunkConfig(2, 2, 8)
    outs = []
    for _ in range(2):
        trunk = Trunk(cfg, np.random.default_rng(42))
        x = np.random.default_rng(7).uniform(-1, 1, (2, 1, 64)).astype(np.float32)
        outs.append(trunk.forward(Array(x)).data)
    _check(results, "props/trunk_determinism", np.array_equal(outs[0], outs[1]))

    rng = np.random.default_rng(2)
    logits = np.round(rng.standard_normal((1000, 8)) * 2, 1)
    labels = rng.integers(0, 8, 1000)

    def brute_rank(row, label):
        order = sorted(range(row.size), key=lambda c: (-row[c], c))
        return order.index(label) + 1

    ranks = np.array([brute_rank(logits[i], labels[i]) for i in range(1000)])
    ok = all(
        top_k_accuracy(logits, labels, k) == float(np.mean(ranks <= k)) for k in (1, 3, 5)
    ) and map_at_3(logits, labels) == float(np.mean(np.where(ranks <= 3, 1.0 / ranks, 0.0)))
    _check(results, "props/metrics_brute_force", ok, "cases=1000")

    big = rng.standard_normal((100_000, 41))
    big_labels = rng.integers(0, 41, 100_000)
    expected = (1 + 0.5 + 1 / 3) / 41
    got = map_at_3(big, big_labels)
    _check(results, "props/map3_random_expectation", abs(got - expected) < 0.005,
           f"got={got:.5f} expected={expected:.5f}")

    p = Array(np.array([0.3, -0.7, 2.0]), requires_grad=True, dtype=np.float64)
    before = p.data.copy()
    g = np.array([0.5, -0.1, 0.02])
    cfg_a = AdamConfig(lr=0.01)
    opt = Adam({"p": p}, cfg_a)
    p.grad = g.copy()
    opt.step()
    expected_step = before - cfg_a.lr * g / (np.abs(g) + cfg_a.epsilon)
    _check(results, "props/adam_first_step_closed_form",
           bool(np.allclose(p.data, expected_step, rtol=1e-9)))

    return results


def run_suite(name: str) -> list[CheckResult]:
    if name == "all":
        return run_gradcheck() + run_dsp() + run_props()
    if name == "gradcheck":
        return run_gradcheck()
    if name == "dsp":
        return run_dsp()
    if name == "props":
        return run_props()
    raise ValueError(f"unknown suite {name!r}; expected gradcheck, dsp, props, or all")
