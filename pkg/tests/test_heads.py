import math

import numpy as np
import pytest

import wavetrunk.ndgrad as nd
from wavetrunk.heads import (
    DEFAULT_LR,
    DenoiseHead,
    HeadSpec,
    NextStepHead,
    SpeakerHead,
    SpeechCommandHead,
    TaggingHead,
    UpsampleHead,
    build_head,
)
from wavetrunk.ndgrad.gradcheck import check_gradients


def _emb(rng, B=2, C=8, T=32, dtype=np.float32):
    return nd.Array(rng.uniform(-1, 1, (B, C, T)).astype(dtype))


class TestHeadSpec:
    def test_defaults(self):
        assert HeadSpec("tagging").num_classes == 41
        assert HeadSpec("speech_command").num_classes == 12
        assert HeadSpec("tagging").lr == pytest.approx(5.37e-5)
        for kind in ("next_step", "denoise", "upsample"):
            assert HeadSpec(kind).lr == pytest.approx(5e-3)

    def test_speaker_requires_num_classes(self):
        with pytest.raises(ValueError, match="num_classes"):
            HeadSpec("speaker_id")
        assert HeadSpec("speaker_id", num_classes=10).num_classes == 10

    def test_regression_heads_take_no_classes(self):
        with pytest.raises(ValueError):
            HeadSpec("next_step", num_classes=4)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            HeadSpec("verse")


class TestTaggingHead:
    def test_time_permutation_invariance(self):
        rng = np.random.default_rng(0)
        head = TaggingHead(8, num_classes=5, rng=rng)
        emb = rng.uniform(-1, 1, (2, 8, 16)).astype(np.float32)
        perm = rng.permutation(16)
        a = head.forward(nd.Array(emb)).data
        b = head.forward(nd.Array(emb[:, :, perm])).data
        np.testing.assert_allclose(a, b, atol=1e-5)

    def test_zero_embedding_gives_uniform_loss(self):
        head = TaggingHead(8, num_classes=7, rng=np.random.default_rng(1))
        logits = head.forward(nd.Array(np.zeros((3, 8, 10), dtype=np.float32)))
        np.testing.assert_array_equal(logits.data, 0.0)
        loss = nd.softmax_cross_entropy(logits, np.zeros(3, dtype=np.int64))
        assert loss.item() == pytest.approx(math.log(7), abs=1e-3)

    def test_param_count(self):
        head = TaggingHead(64, num_classes=41)
        assert head.param_count() == 64 * 512 + 512 + 512 * 41 + 41

    def test_gradcheck(self):
        rng = np.random.default_rng(2)
        head = TaggingHead(4, num_classes=3, hidden=6, rng=rng, dtype=np.float64)
        emb = _emb(rng, B=2, C=4, T=8, dtype=np.float64)
        labels = np.array([0, 2])
        fn = lambda: nd.softmax_cross_entropy(head.forward(emb), labels)
        assert check_gradients(fn, list(head.params.values())) < 1e-4


class TestSpeakerHead:
    def test_eval_mode_deterministic(self):
        rng = np.random.default_rng(3)
        head = SpeakerHead(8, num_classes=4, rng=rng)
        emb = _emb(rng)
        a = head.forward(emb, mode="eval").data
        b = head.forward(emb, mode="eval").data
        assert np.array_equal(a, b)

    def test_time_permutation_invariance(self):
        rng = np.random.default_rng(4)
        head = SpeakerHead(8, num_classes=4, rng=rng)
        emb = rng.uniform(-1, 1, (3, 8, 12)).astype(np.float32)
        perm = rng.permutation(12)
        a = head.forward(nd.Array(emb), mode="eval").data
        b = head.forward(nd.Array(emb[:, :, perm]), mode="eval").data
        np.testing.assert_allclose(a, b, atol=1e-5)

    def test_batch_of_one_rejected_in_train(self):
        head = SpeakerHead(8, num_classes=4, rng=np.random.default_rng(5))
        with pytest.raises(ValueError, match="batch"):
            head.forward(_emb(np.random.default_rng(0), B=1), mode="train")

    def test_param_count(self):
        head = SpeakerHead(64, num_classes=10)
        dense = 64 * 1024 + 1024 + 1024 * 1024 + 1024 + 1024 * 10 + 10
        bn = 2 * (1024 + 1024)
        assert head.param_count() == dense + bn

    def test_gradcheck_tiny(self):
        rng = np.random.default_rng(6)
        head = SpeakerHead(4, num_classes=3, hidden=8, rng=rng, dtype=np.float64)
        emb = _emb(rng, B=3, C=4, T=6, dtype=np.float64)
        labels = np.array([0, 2, 1])
        fn = lambda: nd.softmax_cross_entropy(head.forward(emb, mode="train"), labels)
        assert check_gradients(fn, list(head.params.values())) < 1e-3


class TestSpeechCommandHead:
    def test_frame_counts_at_16k(self):
        head = SpeechCommandHead(64, rng=np.random.default_rng(7))
        assert head.frame_counts(16000) == [994, 119, 24]

    def test_min_input_length(self):
        head = SpeechCommandHead(64, rng=np.random.default_rng(8))
        need = head.min_input_length()
        assert need == 3956
        emb = nd.Array(np.zeros((2, 64, need - 1), dtype=np.float32))
        with pytest.raises(ValueError, match="3956"):
            head.forward(emb, mode="eval")

    def test_eval_mode_deterministic(self):
        rng = np.random.default_rng(9)
        head = SpeechCommandHead(4, num_classes=3, conv_channels=4,
                                 widths=(10, 5, 2), strides=(4, 2, 1), rng=rng)
        emb = _emb(rng, B=2, C=4, T=64)
        a = head.forward(emb, mode="eval").data
        b = head.forward(emb, mode="eval").data
        assert np.array_equal(a, b)

    def test_param_count(self):
        head = SpeechCommandHead(64, num_classes=12)
        convs = 64 * 64 * 100 + 64 + 64 * 64 * 50 + 64 + 64 * 64 * 25 + 64
        bn = 3 * (64 + 64)
        out = 64 * 12 + 12
        assert head.param_count() == convs + bn + out

    def test_gradcheck_tiny_analog(self):
        rng = np.random.default_rng(10)
        head = SpeechCommandHead(2, num_classes=3, conv_channels=3,
                                 widths=(10, 5, 2), strides=(4, 2, 1),
                                 dropout=0.3, rng=rng, dtype=np.float64)
        emb = _emb(rng, B=2, C=2, T=40, dtype=np.float64)
        labels = np.array([1, 0])

        def fn():
            logits = head.forward(emb, mode="train", rng=np.random.default_rng(123))
            return nd.softmax_cross_entropy(logits, labels)

        assert check_gradients(fn, list(head.params.values())) < 1e-3


class TestNextStepHead:
    def test_loss_zero_when_prediction_matches_shifted_input(self):
        rng = np.random.default_rng(11)
        head = NextStepHead(4, rng=rng)
        wave = rng.uniform(-1, 1, (2, 1, 10)).astype(np.float32)
        pred = nd.Array(np.concatenate([wave[:, :, 1:], np.zeros((2, 1, 1), np.float32)], axis=2))
        assert head.loss(pred, wave).item() == 0.0

    def test_zero_prediction_loss_is_mean_square_of_targets(self):
        rng = np.random.default_rng(12)
        head = NextStepHead(4, rng=rng)
        wave = rng.uniform(-1, 1, (1, 1, 9)).astype(np.float64)
        pred = nd.Array(np.zeros((1, 1, 9)), dtype=np.float64)
        expected = float(np.mean(wave[:, :, 1:] ** 2))
        assert head.loss(pred, wave).item() == pytest.approx(expected, rel=1e-6)

    def test_per_frame_loss_matches_scalar_oracle(self):
        rng = np.random.default_rng(13)
        head = NextStepHead(4, rng=rng)
        wave = rng.uniform(-1, 1, (1, 1, 8)).astype(np.float64)
        pred = nd.Array(rng.uniform(-1, 1, (1, 1, 8)), dtype=np.float64)
        per_frame = [(pred.data[0, 0, t] - wave[0, 0, t + 1]) ** 2 for t in range(7)]
        assert head.loss(pred, wave).item() == pytest.approx(sum(per_frame) / 7, rel=1e-12)

    def test_warmup_mask_drops_leading_frames(self):
        rng = np.random.default_rng(14)
        head = NextStepHead(4, rng=rng)
        wave = rng.uniform(-1, 1, (1, 1, 12)).astype(np.float64)
        pred = nd.Array(rng.uniform(-1, 1, (1, 1, 12)), dtype=np.float64)
        w = 3
        expected = np.mean((pred.data[:, :, w:-1] - wave[:, :, w + 1 :]) ** 2)
        assert head.loss(pred, wave, warmup_frames=w).item() == pytest.approx(expected, rel=1e-6)

    def test_too_short_rejected(self):
        head = NextStepHead(4, rng=np.random.default_rng(15))
        pred = nd.Array(np.zeros((1, 1, 1), np.float32))
        with pytest.raises(ValueError):
            head.loss(pred, np.zeros((1, 1, 1), np.float32))

    def test_param_count(self):
        head = NextStepHead(64)
        assert head.param_count() == 128 * 64 + 128 + 128 + 1


class TestCausalRegressionHeads:
    def test_loss_zero_at_exact_prediction(self):
        rng = np.random.default_rng(16)
        head = DenoiseHead(4, rng=rng)
        clean = rng.uniform(-1, 1, (1, 1, 20)).astype(np.float64)
        delay = 3
        pred = np.zeros_like(clean)
        pred[:, :, delay:] = clean[:, :, : 20 - delay]
        assert head.loss(nd.Array(pred, dtype=np.float64), clean, delay=delay).item() == 0.0

    def test_constant_offset_two_gives_linear_branch(self):
        head = DenoiseHead(4, rng=np.random.default_rng(17))
        clean = np.zeros((1, 1, 10), dtype=np.float64)
        pred = nd.Array(np.full((1, 1, 10), 2.0), dtype=np.float64)
        assert head.loss(pred, clean, delay=2).item() == pytest.approx(1.5)

    def test_masked_loss_equals_mask_weighted_oracle(self):
        rng = np.random.default_rng(18)
        head = DenoiseHead(4, rng=rng)
        T, delay = 24, 5
        clean = rng.uniform(-1, 1, (2, 1, T)).astype(np.float64)
        pred = nd.Array(rng.uniform(-2, 2, (2, 1, T)), dtype=np.float64)

        # independent mask-weighted evaluation over all frames
        d = np.zeros_like(pred.data)
        mask = np.zeros_like(pred.data)
        d[:, :, delay:] = pred.data[:, :, delay:] - clean[:, :, : T - delay]
        mask[:, :, delay:] = 1.0
        per = np.where(np.abs(d) < 1, 0.5 * d * d, np.abs(d) - 0.5) * mask
        expected = per.sum() / mask.sum()

        assert head.loss(pred, clean, delay=delay).item() == pytest.approx(expected, rel=1e-12)

    def test_length_not_exceeding_delay_rejected(self):
        head = UpsampleHead(4, rng=np.random.default_rng(19))
        pred = nd.Array(np.zeros((1, 1, 5), np.float64))
        with pytest.raises(ValueError):
            head.loss(pred, np.zeros((1, 1, 5)), delay=5)

    def test_param_count(self):
        head = DenoiseHead(64)
        assert head.param_count() == 128 * 64 * 11 + 128 + 128 * 11 + 1
        assert UpsampleHead(64).param_count() == head.param_count()

    def test_gradcheck(self):
        rng = np.random.default_rng(20)
        head = UpsampleHead(3, hidden=5, rng=rng, dtype=np.float64)
        emb = _emb(rng, B=1, C=3, T=12, dtype=np.float64)
        target = rng.uniform(-1, 1, (1, 1, 12))
        fn = lambda: head.loss(head.forward(emb), target, delay=2)
        assert check_gradients(fn, list(head.params.values())) < 1e-4


class TestHeadInvariants:
    @pytest.mark.parametrize("kind", ["tagging", "speaker_id", "speech_command",
                                      "next_step", "denoise", "upsample"])
    def test_finite_outputs_on_bounded_inputs(self, kind):
        rng = np.random.default_rng(21)
        spec = HeadSpec(kind, num_classes=4 if kind in ("tagging", "speaker_id", "speech_command") else None)
        C = 16
        head = build_head(spec, C, rng)
        T = head.min_input_length() if kind == "speech_command" else 64
        batches = 20 if kind == "speech_command" else 100
        for _ in range(batches):
            emb = nd.Array(rng.uniform(-1, 1, (2, C, T)).astype(np.float32))
            out = head.forward(emb, mode="eval").data
            assert np.all(np.isfinite(out))

    def test_loss_zero_iff_prediction_equals_target(self):
        rng = np.random.default_rng(22)
        head = DenoiseHead(4, rng=rng)
        T, delay = 16, 4
        clean = rng.uniform(-1, 1, (1, 1, T)).astype(np.float64)
        exact = np.zeros_like(clean)
        exact[:, :, delay:] = clean[:, :, : T - delay]
        assert head.loss(nd.Array(exact, dtype=np.float64), clean, delay=delay).item() == 0.0
        off = exact.copy()
        off[0, 0, delay + 2] += 0.25
        assert head.loss(nd.Array(off, dtype=np.float64), clean, delay=delay).item() > 0.0
        # mismatch only on a masked frame leaves the loss at zero
        masked_only = exact.copy()
        masked_only[0, 0, 0] += 5.0
        assert head.loss(nd.Array(masked_only, dtype=np.float64), clean, delay=delay).item() == 0.0

    def test_default_lr_table(self):
        assert DEFAULT_LR["tagging"] == pytest.approx(5.37e-5)
        assert DEFAULT_LR["next_step"] == DEFAULT_LR["denoise"] == DEFAULT_LR["upsample"] == pytest.approx(5e-3)
