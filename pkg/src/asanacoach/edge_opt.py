"""Edge deployment helpers: int8 weight quantization, magnitude pruning,
and per-stage latency benchmarking.

Quantization is symmetric per-tensor with zero point 0: q = round(w / s)
clamped to [-127, 127], s = max|w| / 127. Only weight matrices are
quantized; biases stay in floating point and activations are never
quantized, keeping the nonlinearity path exact. Inference accumulates
matrix products in floating point and applies the tensor scale afterward.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InsufficientFrames, InvalidFraction, NonFiniteWeights
from .model import (
    BIAS_FIELDS,
    ModelParams,
    WEIGHT_FIELDS,
    _forward_core,
    scale_inputs,
)

INT8_MAX = 127

BENCH_WARMUP_FRAMES = 20
BENCH_MIN_FRAMES = 100

STAGES = ("ingest", "biomech", "model", "evaluate", "feedback")


@dataclass
class QuantizedParams:
    """int8 weight tensors with per-tensor scales; float biases."""

    weights_q: dict[str, np.ndarray]
    scales: dict[str, float]
    biases: dict[str, np.ndarray]

    def __post_init__(self):
        self._weights_f = None

    @property
    def k(self) -> int:
        return self.weights_q["conv_w"].shape[1]

    @property
    def conv_channels(self) -> int:
        return self.weights_q["conv_w"].shape[0]

    @property
    def hidden(self) -> int:
        return self.weights_q["w_i"].shape[0]

    @property
    def classes(self) -> int:
        return self.weights_q["head_w"].shape[0]

    def dequantized(self) -> ModelParams:
        """Float reconstruction: value = int8 * scale per tensor."""
        tensors = {
            name: self.weights_q[name].astype(np.float64) * self.scales[name]
            for name in WEIGHT_FIELDS
        }
        tensors.update({name: self.biases[name].copy() for name in BIAS_FIELDS})
        return ModelParams(**tensors)

    def _float_weights(self) -> dict[str, np.ndarray]:
        # int8 -> float64 is exact; cached so inference casts once
        if self._weights_f is None:
            self._weights_f = {
                name: q.astype(np.float64) for name, q in self.weights_q.items()
            }
        return self._weights_f

    def payload(self) -> dict[str, np.ndarray]:
        """Arrays for the model container."""
        out = {f"q_{name}": self.weights_q[name] for name in WEIGHT_FIELDS}
        out.update(
            {f"scale_{name}": np.float64(self.scales[name]) for name in WEIGHT_FIELDS}
        )
        out.update({name: self.biases[name] for name in BIAS_FIELDS})
        return out

    @classmethod
    def from_payload(cls, arrays: dict[str, np.ndarray]) -> "QuantizedParams":
        return cls(
            weights_q={name: arrays[f"q_{name}"] for name in WEIGHT_FIELDS},
            scales={name: float(arrays[f"scale_{name}"]) for name in WEIGHT_FIELDS},
            biases={name: arrays[name] for name in BIAS_FIELDS},
        )


def quantize(params: ModelParams) -> QuantizedParams:
    """Symmetric per-tensor int8 quantization of the weight matrices."""
    tensors = params.tensors()
    if any(not np.all(np.isfinite(a)) for a in tensors.values()):
        raise NonFiniteWeights("model contains non-finite values")
    weights_q = {}
    scales = {}
    for name in WEIGHT_FIELDS:
        w = tensors[name]
        amax = float(np.max(np.abs(w))) if w.size else 0.0
        scale = amax / INT8_MAX if amax > 0.0 else 1.0
        q = np.clip(np.round(w / scale), -INT8_MAX, INT8_MAX).astype(np.int8)
        weights_q[name] = q
        scales[name] = scale
    biases = {name: tensors[name].copy() for name in BIAS_FIELDS}
    return QuantizedParams(weights_q=weights_q, scales=scales, biases=biases)


def quantized_forward(
    angles: np.ndarray, mask: np.ndarray, qparams: QuantizedParams
) -> np.ndarray:
    """Class probabilities using int8 weights (float accumulation + scale)."""
    X = scale_inputs(np.atleast_2d(angles), np.atleast_2d(mask))[np.newaxis]
    return quantized_forward_batch(X, qparams)[0]


def quantized_forward_batch(X: np.ndarray, qparams: QuantizedParams) -> np.ndarray:
    tensors = dict(qparams._float_weights())
    tensors.update(qparams.biases)
    probs, _ = _forward_core(X, tensors, scales=qparams.scales)
    return probs


def prune(params: ModelParams, p: float) -> ModelParams:
    """Zero the floor(p * count) smallest-magnitude entries per weight tensor.

    Ties break toward the lower flat index. Biases are never pruned.
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidFraction(f"fraction {p} outside [0, 1]")
    out = params.copy()
    for name in WEIGHT_FIELDS:
        w = getattr(out, name)
        flat = w.reshape(-1)
        count = int(np.floor(p * flat.size))
        if count == 0:
            continue
        order = np.argsort(np.abs(flat), kind="stable")
        flat[order[:count]] = 0.0
    return out


def sparsity(params: ModelParams) -> dict[str, float]:
    """Fraction of exactly-zero entries per weight tensor."""
    return {
        name: float(np.mean(getattr(params, name) == 0.0)) for name in WEIGHT_FIELDS
    }


# -- latency benchmarking -----------------------------------------------------

@dataclass
class LatencyStats:
    median_us: float
    p95_us: float
    max_us: float

    @classmethod
    def from_ns(cls, samples_ns: list[int]) -> "LatencyStats":
        us = np.asarray(samples_ns, dtype=np.float64) / 1000.0
        return cls(
            median_us=float(np.median(us)),
            p95_us=float(np.percentile(us, 95)),
            max_us=float(np.max(us)),
        )


@dataclass
class BenchReport:
    variant: str
    frames_measured: int
    stages: dict[str, LatencyStats]
    end_to_end: LatencyStats

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "frames_measured": self.frames_measured,
            "stages": {
                name: {
                    "median_us": s.median_us,
                    "p95_us": s.p95_us,
                    "max_us": s.max_us,
                }
                for name, s in self.stages.items()
            },
            "end_to_end": {
                "median_us": self.end_to_end.median_us,
                "p95_us": self.end_to_end.p95_us,
                "max_us": self.end_to_end.max_us,
            },
        }

    def format_text(self) -> str:
        lines = [
            f"variant: {self.variant}",
            f"frames measured: {self.frames_measured}",
            f"{'stage':<12}{'median_us':>12}{'p95_us':>12}{'max_us':>12}",
        ]
        for name, s in self.stages.items():
            lines.append(
                f"{name:<12}{s.median_us:>12.1f}{s.p95_us:>12.1f}{s.max_us:>12.1f}"
            )
        e = self.end_to_end
        lines.append(f"{'end_to_end':<12}{e.median_us:>12.1f}{e.p95_us:>12.1f}{e.max_us:>12.1f}")
        return "\n".join(lines)


def bench(pipeline, records: Iterable[str], warmup: int = BENCH_WARMUP_FRAMES) -> BenchReport:
    """Run a pipeline over recorded frames and report wall-clock latency.

    The first ``warmup`` frames are processed but excluded from the
    statistics. Runs single-threaded by design so the numbers stay
    interpretable.
    """
    records = list(records)
    if len(records) < warmup + BENCH_MIN_FRAMES:
        raise InsufficientFrames(
            f"need at least {warmup + BENCH_MIN_FRAMES} frames, got {len(records)}"
        )
    stage_ns: dict[str, list[int]] = {name: [] for name in STAGES}
    total_ns: list[int] = []
    for i, line in enumerate(records):
        timings: dict[str, int] = {}
        start = time.perf_counter_ns()
        pipeline.process_record(line, timings=timings)
        elapsed = time.perf_counter_ns() - start
        if i < warmup:
            continue
        total_ns.append(elapsed)
        for name in STAGES:
            if name in timings:
                stage_ns[name].append(timings[name])
    stages = {
        name: LatencyStats.from_ns(ns) for name, ns in stage_ns.items() if ns
    }
    return BenchReport(
        variant=pipeline.variant,
        frames_measured=len(total_ns),
        stages=stages,
        end_to_end=LatencyStats.from_ns(total_ns),
    )
