import numpy as np
import pytest

from asanacoach.edge_opt import (
    BENCH_MIN_FRAMES,
    BENCH_WARMUP_FRAMES,
    QuantizedParams,
    bench,
    prune,
    quantize,
    quantized_forward,
    quantized_forward_batch,
    sparsity,
)
from asanacoach.errors import InsufficientFrames, InvalidFraction, NonFiniteWeights
from asanacoach.model import (
    TENSOR_FIELDS,
    WEIGHT_FIELDS,
    forward,
    init_params,
)
from asanacoach.ingest import frame_to_line
from asanacoach.pipeline import PipelineConfig, SessionPipeline
from asanacoach.synth import SkeletonSpec, skeleton_to_frame


def small_params(seed=0):
    return init_params(8, 4, 6, 3, np.random.default_rng(seed))


class TestQuantize:
    def test_worked_example(self):
        p = small_params()
        p.head_w[...] = 0.0
        p.head_w[0, 0] = 1.27
        p.head_w[0, 1] = 0.5
        qp = quantize(p)
        assert qp.scales["head_w"] == pytest.approx(0.01)
        assert qp.weights_q["head_w"][0, 0] == 127
        assert qp.weights_q["head_w"][0, 1] == 50

    def test_all_zero_tensor(self):
        p = small_params()
        p.conv_w[...] = 0.0
        qp = quantize(p)
        assert qp.scales["conv_w"] == 1.0
        assert np.all(qp.weights_q["conv_w"] == 0)
        assert np.all(qp.dequantized().conv_w == 0.0)

    def test_rounding_bound(self):
        rng = np.random.default_rng(5)
        for seed in range(5):
            p = init_params(8, 4, 6, 3, np.random.default_rng(seed))
            for name in WEIGHT_FIELDS:
                getattr(p, name)[...] = rng.normal(0, rng.uniform(0.01, 10), getattr(p, name).shape)
            qp = quantize(p)
            deq = qp.dequantized()
            for name in WEIGHT_FIELDS:
                err = np.abs(getattr(deq, name) - getattr(p, name))
                assert np.all(err <= qp.scales[name] / 2 + 1e-15), name

    def test_int8_range(self):
        p = small_params(3)
        qp = quantize(p)
        for name in WEIGHT_FIELDS:
            q = qp.weights_q[name]
            assert q.dtype == np.int8
            assert q.min() >= -127 and q.max() <= 127

    def test_biases_kept_float(self):
        p = small_params(4)
        qp = quantize(p)
        for name in ("conv_b", "b_i", "b_f", "b_o", "b_g", "head_b"):
            assert np.array_equal(qp.biases[name], getattr(p, name))

    def test_non_finite_rejected(self):
        p = small_params()
        p.w_i[0, 0] = np.nan
        with pytest.raises(NonFiniteWeights):
            quantize(p)

    def test_payload_round_trip(self):
        p = small_params(6)
        qp = quantize(p)
        back = QuantizedParams.from_payload(
            {k: np.asarray(v) for k, v in qp.payload().items()}
        )
        for name in WEIGHT_FIELDS:
            assert np.array_equal(back.weights_q[name], qp.weights_q[name])
            assert back.scales[name] == qp.scales[name]


class TestQuantizedForward:
    def test_zero_model_matches_float(self):
        p = small_params()
        for name in TENSOR_FIELDS:
            getattr(p, name)[...] = 0.0
        qp = quantize(p)
        rng = np.random.default_rng(1)
        angles = rng.uniform(0, 180, (6, 8))
        mask = np.ones((6, 8), bool)
        qprobs = quantized_forward(angles, mask, qp)
        fprobs = forward(angles, mask, p)
        assert np.array_equal(qprobs, fprobs)
        assert qprobs == pytest.approx([1 / 3] * 3, abs=1e-15)

    def test_close_to_float_on_random_model(self):
        p = small_params(7)
        qp = quantize(p)
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 1, (16, 10, 8))
        fprobs = np.stack([forward(x * 180, np.ones_like(x, bool), p) for x in X])
        qprobs = quantized_forward_batch(X, qp)
        assert np.max(np.abs(fprobs - qprobs)) < 0.05
        assert np.max(np.abs(qprobs.sum(axis=1) - 1.0)) < 1e-12


class TestPrune:
    def test_zero_fraction_is_identity(self):
        p = small_params(8)
        out = prune(p, 0.0)
        for name in TENSOR_FIELDS:
            assert np.array_equal(getattr(out, name), getattr(p, name))

    def test_full_fraction_zeroes_weights_keeps_biases(self):
        p = small_params(9)
        p.b_g[...] = 0.7
        out = prune(p, 1.0)
        for name in WEIGHT_FIELDS:
            assert np.all(getattr(out, name) == 0.0)
        assert np.all(out.b_g == 0.7)
        assert np.all(out.b_f == p.b_f)

    def test_worked_example(self):
        p = small_params()
        p.head_w = np.array([[0.1, -0.5], [0.2, -0.05]])
        out = prune(p, 0.5)
        assert out.head_w.tolist() == [[0.0, -0.5], [0.2, 0.0]]

    def test_tie_break_lower_index_first(self):
        p = small_params()
        p.head_w = np.array([[0.3, 0.3], [0.3, 0.3]])
        out = prune(p, 0.5)
        assert out.head_w.tolist() == [[0.0, 0.0], [0.3, 0.3]]

    def test_sparsity_exactness(self):
        rng = np.random.default_rng(10)
        p = small_params(10)
        for fraction in (0.1, 0.25, 0.5, 0.9):
            out = prune(p, fraction)
            for name in WEIGHT_FIELDS:
                arr = getattr(out, name)
                expected = np.floor(fraction * arr.size) / arr.size
                assert np.mean(arr == 0.0) >= expected - 1e-12, (name, fraction)
                # with no pre-existing zeros the sparsity is exact
                assert np.sum(arr == 0.0) == int(np.floor(fraction * arr.size))

    def test_idempotent(self):
        p = small_params(11)
        for fraction in (0.3, 0.5, 0.77):
            once = prune(p, fraction)
            twice = prune(once, fraction)
            for name in TENSOR_FIELDS:
                assert np.array_equal(getattr(once, name), getattr(twice, name))

    def test_invalid_fraction(self):
        p = small_params()
        with pytest.raises(InvalidFraction):
            prune(p, -0.1)
        with pytest.raises(InvalidFraction):
            prune(p, 1.1)

    def test_input_not_mutated(self):
        p = small_params(12)
        before = {name: getattr(p, name).copy() for name in TENSOR_FIELDS}
        prune(p, 0.8)
        for name in TENSOR_FIELDS:
            assert np.array_equal(getattr(p, name), before[name])

    def test_sparsity_helper(self):
        p = small_params(13)
        out = prune(p, 0.5)
        sp = sparsity(out)
        for name in WEIGHT_FIELDS:
            assert sp[name] >= 0.5 - 1.0 / getattr(p, name).size


class TestBench:
    def make_lines(self, n):
        rng = np.random.default_rng(0)
        lines = []
        for i in range(n):
            angles = np.clip(rng.normal(120, 20, 8), 0, 180)
            frame = skeleton_to_frame(
                SkeletonSpec(angles_deg=angles), timestamp_ms=i * 33, frame_id=i
            )
            lines.append(frame_to_line(frame))
        return lines

    def test_insufficient_frames(self, poses):
        pipeline = SessionPipeline(PipelineConfig(pose=poses["tree"]))
        with pytest.raises(InsufficientFrames):
            bench(pipeline, self.make_lines(BENCH_WARMUP_FRAMES + BENCH_MIN_FRAMES - 1))

    def test_report_shape_and_percentiles(self, poses):
        params = small_params()
        pipeline = SessionPipeline(
            PipelineConfig(
                pose=poses["tree"], params=params, class_names=("a", "b", "c"),
                window=10, stride=5,
            )
        )
        lines = self.make_lines(BENCH_WARMUP_FRAMES + BENCH_MIN_FRAMES)
        report = bench(pipeline, lines)
        assert report.frames_measured == BENCH_MIN_FRAMES
        assert report.end_to_end.p95_us >= report.end_to_end.median_us
        assert report.end_to_end.max_us >= report.end_to_end.p95_us
        for name in ("ingest", "biomech", "evaluate", "feedback", "model"):
            assert name in report.stages
            assert report.stages[name].p95_us >= report.stages[name].median_us
        text = report.format_text()
        assert "end_to_end" in text
        assert report.to_dict()["variant"] == "float"
