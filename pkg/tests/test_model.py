import math

import numpy as np
import pytest

from asanacoach.biomech import NUM_ANGLES, FeatureVector
from asanacoach.errors import DimensionMismatch, EmptyClass
from asanacoach.model import (
    AdamOptimizer,
    ModelParams,
    TENSOR_FIELDS,
    TrainConfig,
    _INIT_STREAM,
    _loss_grads_arrays,
    _stream_rng,
    evaluate,
    forward,
    init_params,
    load_model,
    loss_and_gradients,
    lstm_step,
    metrics_from_confusion,
    save_model,
    sequences_to_arrays,
    softmax,
    split_indices,
    train,
)
from asanacoach.synth import Dataset, SequenceSample, make_dataset


def zero_params(k=4, c=3, h=5, m=4):
    p = init_params(k, c, h, m, np.random.default_rng(0))
    for name in TENSOR_FIELDS:
        getattr(p, name)[...] = 0.0
    return p


def random_samples(rng, n, t=6, k=NUM_ANGLES, m=3):
    samples = []
    for i in range(n):
        feats = tuple(
            FeatureVector(
                angles=rng.uniform(0, 180, k),
                mask=np.ones(k, dtype=bool),
                timestamp_ms=j * 33,
            )
            for j in range(t)
        )
        samples.append(SequenceSample(features=feats, label=int(rng.integers(0, m))))
    return samples


def scalar_lstm_oracle(x, h_prev, c_prev, p):
    """Pure-python per-element recurrence, independent of the numpy path."""

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    H = p.hidden
    xh = list(x) + list(h_prev)
    h, c = [], []
    for j in range(H):
        zi = sum(p.w_i[j, n] * xh[n] for n in range(len(xh))) + p.b_i[j]
        zf = sum(p.w_f[j, n] * xh[n] for n in range(len(xh))) + p.b_f[j]
        zo = sum(p.w_o[j, n] * xh[n] for n in range(len(xh))) + p.b_o[j]
        zg = sum(p.w_g[j, n] * xh[n] for n in range(len(xh))) + p.b_g[j]
        cj = sig(zf) * c_prev[j] + sig(zi) * math.tanh(zg)
        c.append(cj)
        h.append(sig(zo) * math.tanh(cj))
    return np.array(h), np.array(c)


class TestLstmStep:
    def test_zero_params_zero_state(self):
        p = zero_params(k=4, c=3, h=5)
        h, c = lstm_step(np.zeros(3), np.zeros(5), np.zeros(5), p)
        assert np.all(h == 0.0)
        assert np.all(c == 0.0)

    def test_forget_saturation_preserves_cell(self):
        p = zero_params(k=4, c=3, h=5)
        p.b_f[...] = 50.0
        v = np.array([0.3, -0.2, 0.9, 1.5, -0.7])
        h, c = lstm_step(np.zeros(3), np.zeros(5), v, p)
        assert c == pytest.approx(v, abs=1e-12)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(42)
        p = init_params(k=4, conv_channels=3, hidden=5, classes=2, rng=rng)
        for _ in range(20):
            x = rng.normal(0, 1, 3)
            h_prev = rng.normal(0, 1, 5)
            c_prev = rng.normal(0, 1, 5)
            h, c = lstm_step(x, h_prev, c_prev, p)
            h_ref, c_ref = scalar_lstm_oracle(x, h_prev, c_prev, p)
            assert h == pytest.approx(h_ref, abs=1e-12)
            assert c == pytest.approx(c_ref, abs=1e-12)

    def test_dimension_mismatch(self):
        p = zero_params(k=4, c=3, h=5)
        with pytest.raises(DimensionMismatch):
            lstm_step(np.zeros(4), np.zeros(5), np.zeros(5), p)
        with pytest.raises(DimensionMismatch):
            lstm_step(np.zeros(3), np.zeros(4), np.zeros(5), p)


class TestForward:
    def test_zero_params_uniform(self):
        p = zero_params(k=8, c=4, h=6, m=5)
        angles = np.random.default_rng(0).uniform(0, 180, (7, 8))
        probs = forward(angles, np.ones((7, 8), bool), p)
        assert probs == pytest.approx([0.2] * 5, abs=1e-15)

    def test_single_class_degenerate(self):
        p = zero_params(k=8, c=4, h=6, m=1)
        angles = np.random.default_rng(1).uniform(0, 180, (5, 8))
        probs = forward(angles, np.ones((5, 8), bool), p)
        assert probs == pytest.approx([1.0], abs=0)

    def test_probabilities_normalized(self):
        rng = np.random.default_rng(3)
        p = init_params(8, 6, 10, 4, rng)
        for _ in range(25):
            angles = rng.uniform(0, 180, (9, 8))
            mask = rng.random((9, 8)) > 0.2
            probs = forward(angles, mask, p)
            assert abs(probs.sum() - 1.0) < 1e-12
            assert np.all(probs > 0.0) and np.all(probs < 1.0)

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(4)
        p = init_params(8, 4, 6, 3, rng)
        angles = rng.uniform(0, 180, (6, 8))
        mask = np.ones((6, 8), bool)
        base = forward(angles, mask, p)
        p.head_b[...] += 123.456
        shifted = forward(angles, mask, p)
        assert shifted == pytest.approx(base, abs=1e-12)

    def test_too_short_sequence(self):
        p = init_params(8, 4, 6, 3, np.random.default_rng(0))
        with pytest.raises(DimensionMismatch):
            forward(np.zeros((2, 8)), np.ones((2, 8), bool), p)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        p = init_params(8, 4, 6, 3, rng)
        angles = rng.uniform(0, 180, (8, 8))
        mask = np.ones((8, 8), bool)
        a = forward(angles, mask, p)
        b = forward(angles, mask, p)
        assert np.array_equal(a, b)

    def test_training_forward_agrees_with_inference(self):
        rng = np.random.default_rng(6)
        p = init_params(8, 4, 6, 3, rng)
        samples = random_samples(rng, 4, t=7)
        X, labels = sequences_to_arrays(samples)
        probs, _, _ = _loss_grads_arrays(X, labels, p)
        for i, s in enumerate(samples):
            angles = np.stack([f.angles for f in s.features])
            mask = np.stack([f.mask for f in s.features])
            assert forward(angles, mask, p) == pytest.approx(probs[i], abs=1e-12)


class TestLossAndGradients:
    def test_zero_params_loss_is_log_m(self):
        rng = np.random.default_rng(7)
        for m in (2, 3, 5):
            p = zero_params(k=8, c=4, h=6, m=m)
            samples = random_samples(rng, 6, t=5, m=m)
            loss, _ = loss_and_gradients(samples, p)
            assert loss == pytest.approx(math.log(m), rel=1e-12)

    def test_duplicated_batch_same_loss_and_grads(self):
        rng = np.random.default_rng(8)
        p = init_params(8, 4, 6, 3, rng)
        samples = random_samples(rng, 3, t=6)
        loss1, g1 = loss_and_gradients(samples, p)
        loss2, g2 = loss_and_gradients(samples + samples, p)
        assert loss2 == pytest.approx(loss1, rel=1e-12)
        for name in TENSOR_FIELDS:
            assert getattr(g2, name) == pytest.approx(getattr(g1, name), rel=1e-9, abs=1e-12)

    def test_empty_batch(self):
        p = init_params(8, 4, 6, 3, np.random.default_rng(0))
        with pytest.raises(DimensionMismatch):
            loss_and_gradients([], p)

    def test_gradient_check_every_tensor(self):
        # compact version of the acceptance instance
        rng = np.random.default_rng(21)
        p = init_params(k=8, conv_channels=4, hidden=6, classes=3, rng=rng)
        X = rng.uniform(0, 1, size=(2, 5, 8))
        labels = np.array([0, 2])
        _, _, grads = _loss_grads_arrays(X, labels, p)
        step = 1e-5
        for name in TENSOR_FIELDS:
            arr = getattr(p, name)
            fd = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + step
                _, lp, _ = _loss_grads_arrays(X, labels, p)
                arr[idx] = orig - step
                _, lm, _ = _loss_grads_arrays(X, labels, p)
                arr[idx] = orig
                fd[idx] = (lp - lm) / (2 * step)
                it.iternext()
            an = grads[name]
            rel = np.linalg.norm(an - fd) / (
                np.linalg.norm(an) + np.linalg.norm(fd) + 1e-12
            )
            assert rel < 1e-4, f"{name}: rel error {rel}"


class TestSoftmax:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(9)
        logits = rng.normal(0, 10, (20, 6))
        probs = softmax(logits)
        assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-12
        assert np.all(probs > 0)

    def test_extreme_logits_stable(self):
        probs = softmax(np.array([1000.0, -1000.0, 0.0]))
        assert probs[0] == pytest.approx(1.0)
        assert np.isfinite(probs).all()


class TestTrain:
    def small_dataset(self, seed=11):
        return make_dataset(3, 12, 8, 3.0, seed)

    def test_zero_learning_rate_keeps_init(self):
        ds = self.small_dataset()
        cfg = TrainConfig(learning_rate=0.0, epochs=2, seed=3, conv_channels=4, hidden=6)
        params, _ = train(ds, cfg)
        expected = init_params(
            NUM_ANGLES, 4, 6, 3, _stream_rng(3, _INIT_STREAM)
        )
        for name in TENSOR_FIELDS:
            assert np.array_equal(getattr(params, name), getattr(expected, name))

    def test_one_epoch_one_batch_is_single_adam_step(self):
        ds = self.small_dataset()
        cfg = TrainConfig(
            epochs=1, batch_size=10_000, seed=5, conv_channels=4, hidden=6
        )
        params, history = train(ds, cfg)

        # reproduce by hand: same init stream, same shuffled batch
        rng = _stream_rng(5, _INIT_STREAM)
        expected = init_params(NUM_ANGLES, 4, 6, 3, rng)
        tr, _, _ = split_indices(len(ds.samples), cfg.split, cfg.seed)
        order = rng.permutation(len(tr))
        batch = [ds.samples[i] for i in tr[order]]
        _, grads = loss_and_gradients(batch, expected)
        opt = AdamOptimizer(expected, cfg)
        opt.step(expected, grads.tensors())
        for name in TENSOR_FIELDS:
            assert getattr(params, name) == pytest.approx(
                getattr(expected, name), abs=1e-15
            )
        assert history.best_epoch == 1

    def test_seeded_reproducibility(self):
        ds = self.small_dataset()
        cfg = TrainConfig(epochs=4, seed=7, conv_channels=4, hidden=6)
        p1, h1 = train(ds, cfg)
        p2, h2 = train(ds, cfg)
        assert h1.epochs == h2.epochs
        for name in TENSOR_FIELDS:
            assert np.array_equal(getattr(p1, name), getattr(p2, name))

    def test_empty_class_detected(self):
        rng = np.random.default_rng(2)
        samples = random_samples(rng, 12, t=6, m=2)  # labels only 0 or 1
        ds = Dataset(samples=tuple(samples), class_names=("a", "b", "c"),
                     frames_per_sample=6)
        with pytest.raises(EmptyClass):
            train(ds, TrainConfig(epochs=1, seed=0, conv_channels=4, hidden=6))

    def test_split_proportions(self):
        tr, va, te = split_indices(500, (0.70, 0.15, 0.15), 42)
        assert len(tr) == 350 and len(va) == 75 and len(te) == 75
        assert sorted(np.concatenate([tr, va, te]).tolist()) == list(range(500))

    def test_final_selection_profile(self):
        ds = self.small_dataset()
        cfg = TrainConfig(epochs=3, seed=7, conv_channels=4, hidden=6, selection="final")
        _, history = train(ds, cfg)
        assert history.best_epoch == 3


class TestMetrics:
    def test_worked_confusion(self):
        m = metrics_from_confusion(np.array([[3, 1], [2, 4]]))
        assert m.accuracy == pytest.approx(0.7)
        assert m.precision[0] == pytest.approx(3 / 5)
        assert m.recall[0] == pytest.approx(3 / 4)

    def test_perfect_predictions(self):
        m = metrics_from_confusion(np.diag([5, 7, 9]))
        assert m.accuracy == 1.0
        assert np.all(m.f1 == 1.0)
        assert m.macro_f1 == 1.0

    def test_single_class_always_correct(self):
        m = metrics_from_confusion(np.array([[10]]))
        assert m.precision[0] == 1.0 and m.recall[0] == 1.0

    def test_evaluate_on_trained_model(self):
        ds = make_dataset(3, 12, 8, 2.0, 9)
        params, history = train(
            ds, TrainConfig(epochs=6, seed=9, conv_channels=4, hidden=8)
        )
        test = [ds.samples[i] for i in history.test_indices]
        m = evaluate(params, test)
        assert m.confusion.sum() == len(test)
        assert 0.0 <= m.accuracy <= 1.0


class TestModelContainer:
    def test_save_load_bit_identical(self, tmp_path):
        rng = np.random.default_rng(12)
        params = init_params(8, 4, 6, 3, rng)
        path = tmp_path / "model.npz"
        save_model(path, params, ("a", "b", "c"))
        loaded, meta = load_model(path)
        assert meta.variant == "float"
        assert meta.class_names == ("a", "b", "c")
        assert meta.dims == {"k": 8, "conv_channels": 4, "hidden": 6, "classes": 3}
        for name in TENSOR_FIELDS:
            assert np.array_equal(getattr(loaded, name), getattr(params, name))

    def test_rejects_non_model_file(self, tmp_path):
        path = tmp_path / "junk.npz"
        np.savez(path, meta=np.array("{}"), x=np.zeros(3))
        with pytest.raises(ValueError):
            load_model(path)
