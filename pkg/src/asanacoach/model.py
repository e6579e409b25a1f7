"""Temporal classifier over joint-angle sequences, trained from scratch.

Architecture: angles scaled to [0, 1] feed a width-3 temporal convolution
(valid padding, ReLU), whose output sequence drives a standard gated LSTM;
the final hidden state goes through an affine head and softmax. All math
is plain numpy in double precision; gradients come from backpropagation
through time and are verified against finite differences in the tests.

The same forward core serves the float and weights-quantized paths: every
matrix product accepts a per-tensor scale applied after accumulation
(1.0 for float weights).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .biomech import ANGLE_TABLE_VERSION
from .errors import DimensionMismatch, EmptyClass
from .synth import Dataset, SequenceSample

CONV_WIDTH = 3
ANGLE_SCALE = 180.0

WEIGHT_FIELDS = ("conv_w", "w_i", "w_f", "w_o", "w_g", "head_w")
BIAS_FIELDS = ("conv_b", "b_i", "b_f", "b_o", "b_g", "head_b")
TENSOR_FIELDS = WEIGHT_FIELDS + BIAS_FIELDS

MODEL_FORMAT = "asanacoach-model"
MODEL_FORMAT_VERSION = 1

_SPLIT_STREAM = 0
_INIT_STREAM = 1


@dataclass
class ModelParams:
    """All trainable tensors. Gate matrices act on the concatenation [x; h]."""

    conv_w: np.ndarray  # (C, k, 3)
    conv_b: np.ndarray  # (C,)
    w_i: np.ndarray  # (H, C+H)
    w_f: np.ndarray
    w_o: np.ndarray
    w_g: np.ndarray
    b_i: np.ndarray  # (H,)
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    head_w: np.ndarray  # (M, H)
    head_b: np.ndarray  # (M,)

    @property
    def k(self) -> int:
        return self.conv_w.shape[1]

    @property
    def conv_channels(self) -> int:
        return self.conv_w.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_i.shape[0]

    @property
    def classes(self) -> int:
        return self.head_w.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "ModelParams":
        return ModelParams(**{n: a.copy() for n, a in self.tensors().items()})


def init_params(
    k: int = 8,
    conv_channels: int = 16,
    hidden: int = 32,
    classes: int = 5,
    rng: np.random.Generator | None = None,
) -> ModelParams:
    """Glorot-uniform weights; forget-gate bias starts at 1 so early cell
    state survives long enough for gradients to flow."""
    rng = rng if rng is not None else np.random.default_rng(0)
    c, h, m = conv_channels, hidden, classes

    def glorot(shape, fan_in, fan_out):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=shape)

    return ModelParams(
        conv_w=glorot((c, k, CONV_WIDTH), k * CONV_WIDTH, c * CONV_WIDTH),
        conv_b=np.zeros(c),
        w_i=glorot((h, c + h), c + h, h),
        w_f=glorot((h, c + h), c + h, h),
        w_o=glorot((h, c + h), c + h, h),
        w_g=glorot((h, c + h), c + h, h),
        b_i=np.zeros(h),
        b_f=np.ones(h),
        b_o=np.zeros(h),
        b_g=np.zeros(h),
        head_w=glorot((m, h), h, m),
        head_b=np.zeros(m),
    )


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def scale_inputs(angles: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Angles to [0, 1]; masked entries become exactly 0."""
    return np.where(mask, np.asarray(angles, dtype=np.float64) / ANGLE_SCALE, 0.0)


def features_to_input(features: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """(T, k) angle and mask arrays from a sequence of FeatureVectors."""
    angles = np.stack([f.angles for f in features])
    mask = np.stack([f.mask for f in features])
    return angles, mask


def sequences_to_arrays(samples: Sequence[SequenceSample]) -> tuple[np.ndarray, np.ndarray]:
    """(B, T, k) scaled input tensor and (B,) labels for a batch."""
    if len(samples) == 0:
        raise DimensionMismatch("empty batch")
    lengths = {len(s.features) for s in samples}
    if len(lengths) != 1:
        raise DimensionMismatch(f"mixed sequence lengths in batch: {sorted(lengths)}")
    xs = []
    for s in samples:
        angles, mask = features_to_input(s.features)
        xs.append(scale_inputs(angles, mask))
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return np.stack(xs), labels


def _unit_scales() -> dict[str, float]:
    return {name: 1.0 for name in WEIGHT_FIELDS}


def _check_input(X: np.ndarray, tensors: dict[str, np.ndarray]) -> None:
    if X.ndim != 3:
        raise DimensionMismatch(f"input must be (B, T, k), got shape {X.shape}")
    _, T, k = X.shape
    if T < CONV_WIDTH:
        raise DimensionMismatch(f"sequence length {T} below conv width {CONV_WIDTH}")
    if k != tensors["conv_w"].shape[1]:
        raise DimensionMismatch(
            f"feature width {k} != conv input channels {tensors['conv_w'].shape[1]}"
        )


def _forward_core(
    X: np.ndarray,
    tensors: dict[str, np.ndarray],
    scales: dict[str, float] | None = None,
    collect_cache: bool = False,
):
    """Batched forward pass. Returns (probs (B, M), cache or None).

    ``scales`` multiplies each weight tensor's matrix product after
    accumulation; the float path uses 1.0 everywhere, which is an exact
    no-op.
    """
    _check_input(X, tensors)
    s = scales if scales is not None else _unit_scales()
    conv_w, conv_b = tensors["conv_w"], tensors["conv_b"]
    head_w, head_b = tensors["head_w"], tensors["head_b"]
    B, T, _ = X.shape
    C = conv_w.shape[0]
    H = tensors["w_i"].shape[0]
    Tc = T - CONV_WIDTH + 1

    windows = np.stack([X[:, w : w + Tc] for w in range(CONV_WIDTH)], axis=3)
    z = np.tensordot(windows, conv_w, axes=([2, 3], [1, 2]))  # (B, Tc, C)
    if s["conv_w"] != 1.0:
        z = z * s["conv_w"]
    z = z + conv_b
    act = np.maximum(z, 0.0)

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = [] if collect_cache else None
    gate_w = {g: tensors[f"w_{g}"] for g in "ifog"}
    gate_b = {g: tensors[f"b_{g}"] for g in "ifog"}
    gate_s = {g: s[f"w_{g}"] for g in "ifog"}
    for t in range(Tc):
        xh = np.concatenate([act[:, t, :], h], axis=1)
        pre = {}
        for g in "ifog":
            y = xh @ gate_w[g].T
            if gate_s[g] != 1.0:
                y = y * gate_s[g]
            pre[g] = y + gate_b[g]
        gi = sigmoid(pre["i"])
        gf = sigmoid(pre["f"])
        go = sigmoid(pre["o"])
        gg = np.tanh(pre["g"])
        c_prev = c
        c = gf * c_prev + gi * gg
        tanh_c = np.tanh(c)
        h = go * tanh_c
        if collect_cache:
            steps.append((xh, gi, gf, go, gg, c_prev, tanh_c))

    logits = h @ head_w.T
    if s["head_w"] != 1.0:
        logits = logits * s["head_w"]
    logits = logits + head_b
    probs = softmax(logits)
    cache = None
    if collect_cache:
        cache = {"windows": windows, "z": z, "act": act, "steps": steps, "h_last": h}
    return probs, cache


def _backward_core(
    cache: dict,
    probs: np.ndarray,
    labels: np.ndarray,
    tensors: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """Gradients of mean cross-entropy w.r.t. every tensor (float path)."""
    B = probs.shape[0]
    C = tensors["conv_w"].shape[0]
    grads = {name: np.zeros_like(arr) for name, arr in tensors.items()}

    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    grads["head_w"] = dlogits.T @ cache["h_last"]
    grads["head_b"] = dlogits.sum(axis=0)

    dh = dlogits @ tensors["head_w"]
    dc = np.zeros_like(dh)
    act = cache["act"]
    d_act = np.zeros_like(act)
    for t in range(len(cache["steps"]) - 1, -1, -1):
        xh, gi, gf, go, gg, c_prev, tanh_c = cache["steps"][t]
        do = dh * tanh_c
        dc = dc + dh * go * (1.0 - tanh_c * tanh_c)
        di = dc * gg
        dg = dc * gi
        df = dc * c_prev
        dz = {
            "i": di * gi * (1.0 - gi),
            "f": df * gf * (1.0 - gf),
            "o": do * go * (1.0 - go),
            "g": dg * (1.0 - gg * gg),
        }
        dxh = np.zeros_like(xh)
        for g in "ifog":
            grads[f"w_{g}"] += dz[g].T @ xh
            grads[f"b_{g}"] += dz[g].sum(axis=0)
            dxh += dz[g] @ tensors[f"w_{g}"]
        d_act[:, t, :] = dxh[:, :C]
        dh = dxh[:, C:]
        dc = dc * gf

    d_pre = d_act * (cache["z"] > 0.0)
    grads["conv_w"] = np.tensordot(d_pre, cache["windows"], axes=([0, 1], [0, 1]))
    grads["conv_b"] = d_pre.sum(axis=(0, 1))
    return grads


def lstm_step(
    x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """One gated recurrence step on plain vectors."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    H = params.hidden
    in_width = params.w_i.shape[1] - H
    if x.shape != (in_width,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({in_width},)")
    if h_prev.shape != (H,) or c_prev.shape != (H,):
        raise DimensionMismatch(f"state shapes {h_prev.shape}, {c_prev.shape} != ({H},)")
    xh = np.concatenate([x, h_prev])
    gi = sigmoid(params.w_i @ xh + params.b_i)
    gf = sigmoid(params.w_f @ xh + params.b_f)
    go = sigmoid(params.w_o @ xh + params.b_o)
    gg = np.tanh(params.w_g @ xh + params.b_g)
    c = gf * c_prev + gi * gg
    h = go * np.tanh(c)
    return h, c


def forward(angles: np.ndarray, mask: np.ndarray, params: ModelParams) -> np.ndarray:
    """Class probabilities for one (T, k) masked angle sequence."""
    X = scale_inputs(np.atleast_2d(angles), np.atleast_2d(mask))[np.newaxis]
    probs, _ = _forward_core(X, params.tensors())
    return probs[0]


def forward_batch(X: np.ndarray, params: ModelParams) -> np.ndarray:
    """Class probabilities for a pre-scaled (B, T, k) input tensor."""
    probs, _ = _forward_core(X, params.tensors())
    return probs


def _loss_grads_arrays(
    X: np.ndarray, labels: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, float, dict[str, np.ndarray]]:
    tensors = params.tensors()
    probs, cache = _forward_core(X, tensors, collect_cache=True)
    loss = float(-np.mean(np.log(probs[np.arange(len(labels)), labels])))
    grads = _backward_core(cache, probs, labels, tensors)
    return probs, loss, grads


def loss_and_gradients(
    batch: Sequence[SequenceSample], params: ModelParams
) -> tuple[float, ModelParams]:
    """Mean cross-entropy and its gradients, shaped like the params."""
    X, labels = sequences_to_arrays(batch)
    _, loss, grads = _loss_grads_arrays(X, labels, params)
    return loss, ModelParams(**grads)


# -- training ----------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0
    conv_channels: int = 16
    hidden: int = 32
    # Sparsity profile for edge deployment: after each Adam step, shrink
    # weight magnitudes by lr * l1 (soft threshold), with l1 ramping from 0
    # to l1_strength across the given epoch fractions. Off by default; the
    # default schedule leaves every update a pure Adam step.
    l1_strength: float = 0.0
    l1_ramp: tuple[float, float] = (0.4, 0.72)
    selection: str = "best_val"  # or "final"

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split {self.split} does not sum to 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.selection not in ("best_val", "final"):
            raise ValueError(f"unknown selection {self.selection!r}")
        if self.l1_strength < 0:
            raise ValueError("l1_strength must be non-negative")


def edge_train_config(seed: int = 0, **overrides) -> TrainConfig:
    """Training profile for models headed to quantization/pruning: the
    ramped shrinkage drives unused weights to zero so magnitude pruning
    removes dead capacity instead of live structure."""
    defaults = dict(seed=seed, l1_strength=0.6, selection="final")
    defaults.update(overrides)
    return TrainConfig(**defaults)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainingHistory:
    epochs: list[EpochStats]
    best_epoch: int
    train_indices: np.ndarray
    val_indices: np.ndarray
    test_indices: np.ndarray


class AdamOptimizer:
    """Standard Adam with bias correction; updates params in place."""

    def __init__(self, params: ModelParams, config: TrainConfig):
        self.lr = config.learning_rate
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.eps
        self.t = 0
        self._m = {n: np.zeros_like(a) for n, a in params.tensors().items()}
        self._v = {n: np.zeros_like(a) for n, a in params.tensors().items()}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            getattr(params, name)[...] -= self.lr * update


def _stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def split_indices(
    n: int, fractions: tuple[float, float, float], seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle then proportional cut into train/val/test index sets."""
    rng = _stream_rng(seed, _SPLIT_STREAM)
    perm = rng.permutation(n)
    n_train = int(round(n * fractions[0]))
    n_val = int(round(n * fractions[1]))
    return (
        perm[:n_train],
        perm[n_train : n_train + n_val],
        perm[n_train + n_val :],
    )


def _eval_arrays(
    X: np.ndarray, labels: np.ndarray, params: ModelParams, chunk: int = 256
) -> tuple[float, float]:
    losses = []
    correct = 0
    for start in range(0, len(labels), chunk):
        xs = X[start : start + chunk]
        ys = labels[start : start + chunk]
        probs = forward_batch(xs, params)
        losses.append(-np.log(probs[np.arange(len(ys)), ys]))
        correct += int(np.sum(np.argmax(probs, axis=1) == ys))
    loss = float(np.mean(np.concatenate(losses)))
    return loss, correct / len(labels)


def train(dataset: Dataset, config: TrainConfig) -> tuple[ModelParams, TrainingHistory]:
    """Adam training with a seeded 70/15/15 split.

    Deterministic end to end for a fixed seed. Returns the parameters
    with the best validation accuracy (ties go to the earlier epoch)
    and the per-epoch history, which also records the split so held-out
    metrics can be reproduced later.
    """
    samples = dataset.samples
    n = len(samples)
    M = len(dataset.class_names)
    X_all, labels_all = sequences_to_arrays(samples)
    tr, va, te = split_indices(n, config.split, config.seed)
    present = set(labels_all[tr].tolist())
    missing = sorted(set(range(M)) - present)
    if missing:
        names = [dataset.class_names[c] for c in missing]
        raise EmptyClass(f"classes absent from training split: {names}")

    rng = _stream_rng(config.seed, _INIT_STREAM)
    params = init_params(
        k=X_all.shape[2],
        conv_channels=config.conv_channels,
        hidden=config.hidden,
        classes=M,
        rng=rng,
    )
    optimizer = AdamOptimizer(params, config)
    best_params = params.copy()
    best_acc = -1.0
    best_epoch = 0
    history: list[EpochStats] = []

    ramp_start = max(1, int(round(config.l1_ramp[0] * config.epochs)))
    ramp_end = max(ramp_start + 1, int(round(config.l1_ramp[1] * config.epochs)))

    for epoch in range(1, config.epochs + 1):
        if config.l1_strength > 0.0:
            if epoch >= ramp_end:
                lam = config.l1_strength
            elif epoch <= ramp_start:
                lam = 0.0
            else:
                lam = config.l1_strength * (epoch - ramp_start) / (ramp_end - ramp_start)
            shrink = config.learning_rate * lam
        else:
            shrink = 0.0
        order = rng.permutation(len(tr))
        total_loss = 0.0
        total_correct = 0
        for start in range(0, len(tr), config.batch_size):
            idx = tr[order[start : start + config.batch_size]]
            probs, loss, grads = _loss_grads_arrays(X_all[idx], labels_all[idx], params)
            optimizer.step(params, grads)
            if shrink > 0.0:
                for name in WEIGHT_FIELDS:
                    w = getattr(params, name)
                    np.copyto(w, np.sign(w) * np.maximum(np.abs(w) - shrink, 0.0))
            total_loss += loss * len(idx)
            total_correct += int(np.sum(np.argmax(probs, axis=1) == labels_all[idx]))
        train_loss = total_loss / len(tr)
        train_acc = total_correct / len(tr)
        val_loss, val_acc = _eval_arrays(X_all[va], labels_all[va], params)
        history.append(EpochStats(epoch, train_loss, train_acc, val_loss, val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_params = params.copy()

    if config.selection == "final":
        best_params = params.copy()
        best_epoch = config.epochs

    return best_params, TrainingHistory(
        epochs=history,
        best_epoch=best_epoch,
        train_indices=tr,
        val_indices=va,
        test_indices=te,
    )


# -- evaluation ---------------------------------------------------------------

@dataclass
class Metrics:
    accuracy: float
    confusion: np.ndarray  # (M, M), rows = true class, cols = predicted
    precision: np.ndarray  # (M,)
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float


def metrics_from_confusion(confusion: np.ndarray) -> Metrics:
    cm = np.asarray(confusion, dtype=np.int64)
    diag = np.diag(cm).astype(np.float64)
    col = cm.sum(axis=0).astype(np.float64)
    row = cm.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    return Metrics(
        accuracy=float(diag.sum() / cm.sum()) if cm.sum() else 0.0,
        confusion=cm,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        macro_f1=float(np.mean(f1)),
    )


def evaluate(params: ModelParams, samples: Sequence[SequenceSample]) -> Metrics:
    """Accuracy, per-class precision/recall/F1, and the confusion matrix."""
    X, labels = sequences_to_arrays(samples)
    M = params.classes
    cm = np.zeros((M, M), dtype=np.int64)
    for start in range(0, len(labels), 256):
        probs = forward_batch(X[start : start + 256], params)
        preds = np.argmax(probs, axis=1)
        for t, p in zip(labels[start : start + 256], preds):
            cm[t, p] += 1
    return metrics_from_confusion(cm)


# -- model container -----------------------------------------------------------

def save_model(
    path,
    params: ModelParams,
    class_names: Sequence[str],
    variant: str = "float",
    angle_table_version: str = ANGLE_TABLE_VERSION,
    tensor_payload: dict[str, np.ndarray] | None = None,
) -> None:
    """Write a model container (.npz): metadata plus all tensors row-major.

    ``tensor_payload`` overrides the stored arrays (used by the quantized
    variant, which stores int8 weights and per-tensor scales).
    """
    meta = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "variant": variant,
        "dims": {
            "k": params.k,
            "conv_channels": params.conv_channels,
            "hidden": params.hidden,
            "classes": params.classes,
        },
        "class_names": list(class_names),
        "angle_table_version": angle_table_version,
    }
    payload = tensor_payload if tensor_payload is not None else params.tensors()
    arrays = {f"tensor_{name}": arr for name, arr in payload.items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


@dataclass
class ModelMeta:
    variant: str
    class_names: tuple[str, ...]
    angle_table_version: str
    dims: dict


def load_model(path):
    """Load a model container; returns (params, ModelMeta).

    ``params`` is a ModelParams for float models or a QuantizedParams for
    quantized ones (dispatch on the stored variant tag).
    """
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a model container: {path}")
        arrays = {
            key[len("tensor_") :]: data[key] for key in data.files if key != "meta"
        }
    info = ModelMeta(
        variant=meta["variant"],
        class_names=tuple(meta["class_names"]),
        angle_table_version=meta["angle_table_version"],
        dims=meta["dims"],
    )
    if info.variant == "quantized":
        from .edge_opt import QuantizedParams

        params = QuantizedParams.from_payload(arrays)
    else:
        params = ModelParams(**{name: arrays[name] for name in TENSOR_FIELDS})
    return params, info
