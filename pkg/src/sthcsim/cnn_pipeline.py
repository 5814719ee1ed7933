"""Hybrid network: one 3D convolution layer (nine large kernels) plus a
fully-connected classifier.

Training is all-digital (Adam on softmax cross-entropy, gradients by hand
through the FC layer, ReLU, and the convolution); inference runs either
digitally or with the optical layer swapped in. Feature maps flatten in
(kernel, time, height, width) order everywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .errors import DimensionError, DivergenceError, FormatError, ParameterError
from .spectral_engine import (
    _WORKERS,
    FftConvBank,
    KernelSet,
    KernelShape,
    _next_fast_len,
    _volume_array,
)
from .sthc_optics import EchoTiming, OpticalConvEngine, OpticalParams, SlmFrameLayout

KERNEL_BANK_MAGIC = b"STHCKB1"
HEAD_BANK_MAGIC = b"STHCHD1"


@dataclass(frozen=True)
class ClassifierHead:
    """Dense classifier over the flattened feature volume."""

    weights: np.ndarray   # (num_classes, features)
    biases: np.ndarray    # (num_classes,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError(f"head weights must be 2D, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise DimensionError(f"head biases must have shape ({w.shape[0]},), got {b.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    # 1e-3 drives the 9600-weight kernels into an all-dead-ReLU state within
    # one epoch (Adam steps are scale-free); 2e-4 trains stably at this size.
    learning_rate: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be >= 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ParameterError("Adam betas must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise ParameterError("adam_eps must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ParameterError("batch_size and epochs must be >= 1")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass(frozen=True)
class TrainResult:
    kernels: KernelSet
    head: ClassifierHead
    log: tuple[EpochStats, ...]
    best_epoch: int


@dataclass(frozen=True)
class EvalReport:
    """Classification summary; confusion rows are true classes, columns predictions."""

    accuracy: float
    confusion_matrix: np.ndarray
    per_class_recall: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray


def param_count(shape: KernelShape, c_out: int) -> int:
    """Learnable weight count c_out * c_in * k_h * k_w * k_t (biases excluded)."""
    if c_out < 1:
        raise ParameterError("c_out must be >= 1")
    return c_out * shape.c_in * shape.k_h * shape.k_w * shape.k_t


def _flatten_maps(maps: np.ndarray) -> np.ndarray:
    # (K, H', W', T') -> (K, T', H', W') raveled
    return maps.transpose(0, 3, 1, 2).ravel()


def _unflatten_maps(flat: np.ndarray, maps_shape) -> np.ndarray:
    k, oh, ow, ot = maps_shape
    return flat.reshape(k, ot, oh, ow).transpose(0, 2, 3, 1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _cross_entropy(logits: np.ndarray, label: int) -> float:
    z = logits - logits.max()
    return float(np.log(np.exp(z).sum()) - z[label])


def digital_conv_maps(kernels: KernelSet, video) -> np.ndarray:
    """Valid correlation maps of the kernel bank, no bias, no activation."""
    x = _volume_array(video)
    return FftConvBank(kernels.weights, x.shape[:3]).maps(x)


def _logits_from_maps(maps, biases, head):
    feats = np.maximum(maps + biases[:, np.newaxis, np.newaxis, np.newaxis], 0.0)
    flat = _flatten_maps(feats)
    if flat.size != head.weights.shape[1]:
        raise DimensionError(
            f"flattened features ({flat.size}) do not match head width "
            f"({head.weights.shape[1]})"
        )
    return head.weights @ flat + head.biases


def forward_digital(kernels: KernelSet, head: ClassifierHead, video) -> np.ndarray:
    """Logits of the all-digital pipeline for one video."""
    return _logits_from_maps(digital_conv_maps(kernels, video), kernels.biases, head)


def forward_hybrid(kernels: KernelSet, head: ClassifierHead, video,
                   params: OpticalParams, layout: SlmFrameLayout,
                   timing: EchoTiming | None = None) -> np.ndarray:
    """Logits with the optical layer in place of the digital convolution."""
    x = _volume_array(video)
    maps = OpticalConvEngine(kernels, params, layout, x.shape[:3], timing).conv_maps(x)
    return _logits_from_maps(maps, kernels.biases, head)


def _weight_gradients(x: np.ndarray, dz: np.ndarray, kernel_extents) -> np.ndarray:
    """Per-kernel weight gradients: valid correlation of the input with the
    output gradient, one map per (kernel, channel)."""
    kh, kw, kt = kernel_extents
    oh, ow, ot = dz.shape[1:]
    grid = tuple(
        _next_fast_len(a + b - 1) for a, b in zip(x.shape[:3], dz.shape[1:])
    )
    xs = _fft.rfftn(x, s=grid, axes=(0, 1, 2), workers=_WORKERS)
    dzs = _fft.rfftn(dz[:, ::-1, ::-1, ::-1], s=grid, axes=(1, 2, 3), workers=_WORKERS)
    prod = np.einsum("xyzc,kxyz->kxyzc", xs, dzs)
    full = _fft.irfftn(prod, s=grid, axes=(1, 2, 3), workers=_WORKERS)
    return np.ascontiguousarray(
        full[:, oh - 1 : oh - 1 + kh, ow - 1 : ow - 1 + kw, ot - 1 : ot - 1 + kt, :]
    )


def loss_and_gradients(kernels: KernelSet, head: ClassifierHead, samples):
    """Mean cross-entropy over (volume, label) pairs plus all parameter gradients.

    Returns (loss, grads, predictions) where grads holds 'weights', 'biases',
    'head_weights', 'head_biases'. Backpropagates through the dense layer, the
    flatten, ReLU, and the convolution (weight gradient by input/output-grad
    correlation, bias gradient by summing the output gradient).
    """
    if not samples:
        raise ParameterError("samples must be non-empty")
    first = _volume_array(samples[0][0])
    bank = FftConvBank(kernels.weights, first.shape[:3])
    n = len(samples)
    d_w = np.zeros_like(kernels.weights)
    d_b = np.zeros_like(kernels.biases)
    d_hw = np.zeros_like(head.weights)
    d_hb = np.zeros_like(head.biases)
    loss = 0.0
    preds = np.empty(n, dtype=np.int64)
    for s, (video, label) in enumerate(samples):
        x = _volume_array(video)
        maps = bank.maps(x)
        pre = maps + kernels.biases[:, np.newaxis, np.newaxis, np.newaxis]
        feats = np.maximum(pre, 0.0)
        flat = _flatten_maps(feats)
        logits = head.weights @ flat + head.biases
        preds[s] = int(np.argmax(logits))
        loss += _cross_entropy(logits, label)

        dlogits = softmax(logits)
        dlogits[label] -= 1.0
        d_hw += np.outer(dlogits, flat)
        d_hb += dlogits
        dflat = head.weights.T @ dlogits
        dpre = _unflatten_maps(dflat, maps.shape) * (pre > 0.0)
        d_b += dpre.sum(axis=(1, 2, 3))
        d_w += _weight_gradients(x, dpre, bank.kernel_extents)

    grads = {
        "weights": d_w / n,
        "biases": d_b / n,
        "head_weights": d_hw / n,
        "head_biases": d_hb / n,
    }
    return loss / n, grads, preds


class _AdamState:
    def __init__(self, shapes, config: TrainConfig):
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.t = 0
        self.cfg = config

    def update(self, params: dict, grads: dict) -> dict:
        c = self.cfg
        self.t += 1
        out = {}
        for key, theta in params.items():
            g = grads[key]
            self.m[key] = c.adam_beta1 * self.m[key] + (1 - c.adam_beta1) * g
            self.v[key] = c.adam_beta2 * self.v[key] + (1 - c.adam_beta2) * g * g
            m_hat = self.m[key] / (1 - c.adam_beta1**self.t)
            v_hat = self.v[key] / (1 - c.adam_beta2**self.t)
            out[key] = theta - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.adam_eps)
        return out


def init_model(kernel_shape: KernelShape, num_kernels: int, num_classes: int,
               input_shape, rng: np.random.Generator):
    """Seeded uniform +-sqrt(6/fan_in) weight init, zero biases."""
    h, w, t = input_shape
    if not kernel_shape.fits_input(h, w, t):
        raise DimensionError(f"kernel {kernel_shape} larger than input {(h, w, t)}")
    fan_in = kernel_shape.k_h * kernel_shape.k_w * kernel_shape.k_t * kernel_shape.c_in
    bound = np.sqrt(6.0 / fan_in)
    weights = rng.uniform(
        -bound, bound,
        (num_kernels, kernel_shape.k_h, kernel_shape.k_w, kernel_shape.k_t, kernel_shape.c_in),
    )
    valid = (h - kernel_shape.k_h + 1) * (w - kernel_shape.k_w + 1) * (t - kernel_shape.k_t + 1)
    feat = num_kernels * valid
    head_bound = np.sqrt(6.0 / feat)
    head_w = rng.uniform(-head_bound, head_bound, (num_classes, feat))
    return (
        KernelSet(weights, np.zeros(num_kernels)),
        ClassifierHead(head_w, np.zeros(num_classes)),
    )


def train(train_samples, val_samples, config: TrainConfig,
          kernel_shape: KernelShape = KernelShape(30, 40, 8, 1),
          num_kernels: int = 9, num_classes: int = 4) -> TrainResult:
    """Adam on mean softmax cross-entropy; keeps the best-validation epoch.

    Fully deterministic for a given seed: one stream initializes parameters,
    a second one drives per-epoch shuffling.
    """
    if not train_samples or not val_samples:
        raise ParameterError("train and validation splits must be non-empty")
    shape = _volume_array(train_samples[0][0]).shape
    for vol, _ in list(train_samples) + list(val_samples):
        if _volume_array(vol).shape != shape:
            raise DimensionError("all samples must share one volume shape")

    init_seq, shuffle_seq = np.random.SeedSequence(config.seed).spawn(2)
    kernels, head = init_model(
        kernel_shape, num_kernels, num_classes, shape[:3], np.random.default_rng(init_seq)
    )
    shuffle_rng = np.random.default_rng(shuffle_seq)

    params = {
        "weights": kernels.weights,
        "biases": kernels.biases,
        "head_weights": head.weights,
        "head_biases": head.biases,
    }
    adam = _AdamState({k: v.shape for k, v in params.items()}, config)

    def as_model(p):
        return (
            KernelSet(p["weights"], p["biases"]),
            ClassifierHead(p["head_weights"], p["head_biases"]),
        )

    n = len(train_samples)
    log = []
    best_acc = -1.0
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        for batch_idx, lo in enumerate(range(0, n, config.batch_size)):
            batch = [train_samples[i] for i in order[lo : lo + config.batch_size]]
            kernels, head = as_model(params)
            loss, grads, preds = loss_and_gradients(kernels, head, batch)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}",
                    epoch=epoch, batch=batch_idx,
                )
            epoch_loss += loss * len(batch)
            correct += int(sum(p == lab for p, (_, lab) in zip(preds, batch)))
            params = adam.update(params, grads)
        kernels, head = as_model(params)
        val_acc = evaluate(kernels, head, val_samples).accuracy
        log.append(EpochStats(epoch, epoch_loss / n, correct / n, val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch

    kernels, head = as_model(best_params)
    return TrainResult(kernels, head, tuple(log), best_epoch)


def evaluate(kernels: KernelSet, head: ClassifierHead, samples, mode: str = "digital",
             params: OpticalParams | None = None, layout: SlmFrameLayout | None = None,
             timing: EchoTiming | None = None) -> EvalReport:
    """Argmax classification report over a split (ties go to the lowest class)."""
    if not samples:
        raise ParameterError("evaluation split must be non-empty")
    if mode not in ("digital", "hybrid"):
        raise ParameterError(f"mode must be 'digital' or 'hybrid', got {mode!r}")
    shape = _volume_array(samples[0][0]).shape
    if mode == "digital":
        bank = FftConvBank(kernels.weights, shape[:3])
        maps_of = bank.maps
    else:
        if params is None or layout is None:
            raise ParameterError("hybrid evaluation needs optical params and a layout")
        engine = OpticalConvEngine(kernels, params, layout, shape[:3], timing)
        maps_of = engine.conv_maps

    num_classes = head.num_classes
    labels = np.array([lab for _, lab in samples], dtype=np.int64)
    preds = np.empty(len(samples), dtype=np.int64)
    for i, (video, _) in enumerate(samples):
        logits = _logits_from_maps(maps_of(_volume_array(video)), kernels.biases, head)
        preds[i] = int(np.argmax(logits))

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for truth, pred in zip(labels, preds):
        confusion[truth, pred] += 1
    totals = confusion.sum(axis=1)
    recall = np.divide(
        np.diag(confusion), totals,
        out=np.zeros(num_classes), where=totals > 0,
    )
    accuracy = float(np.trace(confusion)) / len(samples)
    return EvalReport(accuracy, confusion, recall, preds, labels)


def export_kernels(kernels: KernelSet, path):
    """Write the kernel bank container (magic, u32 counts, f64 payload)."""
    k, kh, kw, kt, c = kernels.weights.shape
    ordered = np.ascontiguousarray(kernels.weights.transpose(0, 4, 3, 1, 2), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(KERNEL_BANK_MAGIC)
        fh.write(struct.pack("<5I", k, kh, kw, kt, c))
        fh.write(ordered.tobytes())
        fh.write(np.ascontiguousarray(kernels.biases, dtype="<f8").tobytes())


def import_kernels(path) -> KernelSet:
    """Read a kernel bank container; byte-exact inverse of export_kernels."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(KERNEL_BANK_MAGIC) + 20:
        raise FormatError(f"kernel bank {path} truncated before header")
    if blob[: len(KERNEL_BANK_MAGIC)] != KERNEL_BANK_MAGIC:
        raise FormatError(f"{path} is not a kernel bank (bad magic)")
    k, kh, kw, kt, c = struct.unpack_from("<5I", blob, len(KERNEL_BANK_MAGIC))
    header = len(KERNEL_BANK_MAGIC) + 20
    expected = header + 8 * (k * c * kt * kh * kw + k)
    if len(blob) != expected:
        raise FormatError(
            f"kernel bank {path} has {len(blob)} bytes, header implies {expected}"
        )
    weights = (
        np.frombuffer(blob, dtype="<f8", count=k * c * kt * kh * kw, offset=header)
        .reshape(k, c, kt, kh, kw)
        .transpose(0, 3, 4, 2, 1)
    )
    biases = np.frombuffer(blob, dtype="<f8", count=k, offset=expected - 8 * k)
    return KernelSet(weights.copy(), biases.copy())


def export_head(head: ClassifierHead, path):
    """Write the classifier head with the kernel-bank binary conventions."""
    n, feat = head.weights.shape
    with open(path, "wb") as fh:
        fh.write(HEAD_BANK_MAGIC)
        fh.write(struct.pack("<2I", n, feat))
        fh.write(np.ascontiguousarray(head.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(head.biases, dtype="<f8").tobytes())


def import_head(path) -> ClassifierHead:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(HEAD_BANK_MAGIC) + 8:
        raise FormatError(f"head bank {path} truncated before header")
    if blob[: len(HEAD_BANK_MAGIC)] != HEAD_BANK_MAGIC:
        raise FormatError(f"{path} is not a head bank (bad magic)")
    n, feat = struct.unpack_from("<2I", blob, len(HEAD_BANK_MAGIC))
    header = len(HEAD_BANK_MAGIC) + 8
    expected = header + 8 * (n * feat + n)
    if len(blob) != expected:
        raise FormatError(f"head bank {path} has {len(blob)} bytes, header implies {expected}")
    weights = np.frombuffer(blob, dtype="<f8", count=n * feat, offset=header).reshape(n, feat)
    biases = np.frombuffer(blob, dtype="<f8", count=n, offset=expected - 8 * n)
    return ClassifierHead(weights.copy(), biases.copy())
