"""Field regressor and its training loop.

A small fully connected network f: R^(D+1) -> R^(D+1) is fitted to the
normalized superposed field. Training points are drawn by interpolating each
sampled pair at a uniform height z and, in bridge mode, jittering by
N(0, s2(z) I) with s2(z) = L/2 - |L/2 - z| so the noise vanishes on the
plates and peaks mid-gap. Gradients are exact reverse-mode expressions for
the fixed dense topology; the optimizer is Adam with L2 weight decay folded
into the gradient, and an exponential moving average of the weights is kept
for inference.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import PairBatch, PlateGeometry, PointCloud, StringParams, validate_geometry
from .plans import PlanKind, sample_pairs
from .superpose import normalize_rows, superpose_grid

__all__ = [
    "FieldModel",
    "TrainConfig",
    "sample_training_point",
    "training_points_for_batch",
    "loss",
    "loss_and_gradients",
    "train",
    "save_model",
    "load_model",
    "write_loss_history",
    "learning_rate",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
WEIGHT_DECAY = 1e-4

CHECKPOINT_MAGIC = b"SFLD"
CHECKPOINT_VERSION = 1


def _silu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s


def _silu_grad(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


@dataclass
class FieldModel:
    """Dense field regressor plus its EMA shadow. Layer l maps via
    a @ W[l].T + b[l]; hidden layers use x*sigmoid(x), the output is linear."""

    weights: list
    biases: list
    ema_weights: list
    ema_biases: list
    ema_decay: float = 0.99
    activation: str = "silu"

    @classmethod
    def initialize(
        cls, data_dim: int, hidden, rng, ema_decay: float = 0.99, input_scales=None
    ) -> "FieldModel":
        """He-initialized dense stack.

        `input_scales` gives the typical magnitude of each input column; the
        first layer's columns are divided by it so unequal feature scales
        (the plate coordinate spans [0, L] while data is order one) start out
        balanced. The network still consumes raw inputs.
        """
        if not (0.0 < ema_decay < 1.0):
            raise ValueError(f"ema_decay must lie in (0,1), got {ema_decay}")
        sizes = [data_dim + 1, *hidden, data_dim + 1]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        if input_scales is not None:
            scales = np.asarray(input_scales, dtype=np.float64)
            if scales.shape != (data_dim + 1,) or np.any(scales <= 0):
                raise ValueError("input_scales must be positive with one entry per input")
            weights[0] /= scales[None, :]
        return cls(
            weights=weights,
            biases=biases,
            ema_weights=[w.copy() for w in weights],
            ema_biases=[b.copy() for b in biases],
            ema_decay=ema_decay,
        )

    @property
    def data_dim(self) -> int:
        return self.weights[0].shape[1] - 1

    @property
    def hidden(self) -> list:
        return [w.shape[0] for w in self.weights[:-1]]

    def parameters(self, ema: bool = False):
        if ema:
            return list(self.ema_weights) + list(self.ema_biases)
        return list(self.weights) + list(self.biases)

    def forward(self, points: np.ndarray, use_ema: bool = False) -> np.ndarray:
        W = self.ema_weights if use_ema else self.weights
        b = self.ema_biases if use_ema else self.biases
        a = np.asarray(points, dtype=np.float64)
        for l in range(len(W) - 1):
            a = _silu(a @ W[l].T + b[l])
        return a @ W[-1].T + b[-1]

    def _forward_cached(self, points):
        a = np.asarray(points, dtype=np.float64)
        acts, pre = [a], []
        for l in range(len(self.weights) - 1):
            z = acts[-1] @ self.weights[l].T + self.biases[l]
            pre.append(z)
            acts.append(_silu(z))
        out = acts[-1] @ self.weights[-1].T + self.biases[-1]
        return out, acts, pre

    def _backward(self, d_out, acts, pre):
        gW = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = d_out
        for l in range(len(self.weights) - 1, -1, -1):
            gW[l] = delta.T @ acts[l]
            gb[l] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ self.weights[l]) * _silu_grad(pre[l - 1])
        return gW, gb

    def ema_update(self):
        d = self.ema_decay
        for e, w in zip(self.ema_weights, self.weights):
            e *= d
            e += (1.0 - d) * w
        for e, b in zip(self.ema_biases, self.biases):
            e *= d
            e += (1.0 - d) * b


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs to be reproducible from one seed."""

    geometry: PlateGeometry
    params: StringParams
    batch: int = 1024
    learning_rate: float = 2e-4
    total_iterations: int = 10_000
    warmup_iterations: int = 5_000
    plan: PlanKind = PlanKind.MINIBATCH_OT
    noise_mode: str = "none"  # "none" or "bridge"
    seed: int = 0
    hidden: tuple = (256, 256, 256)
    ema_decay: float = 0.99
    include_sigma_power: bool = False

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.warmup_iterations > self.total_iterations:
            raise ValueError("warmup cannot exceed the total iteration count")
        if self.noise_mode not in ("none", "bridge"):
            raise ValueError(f"noise mode must be 'none' or 'bridge', got {self.noise_mode!r}")


def learning_rate(iteration: int, config: TrainConfig) -> float:
    """Linear warmup from zero, then a linear monotone decay toward zero."""
    lr, warm, total = config.learning_rate, config.warmup_iterations, config.total_iterations
    if warm > 0 and iteration < warm:
        return lr * (iteration + 1) / warm
    return lr * (total - iteration) / max(total - warm, 1)


def bridge_noise_scale(z, geometry: PlateGeometry):
    """Noise variance L/2 - |L/2 - z|; zero on the plates, maximal mid-gap."""
    half = geometry.gap / 2.0
    return np.sqrt(np.maximum(half - np.abs(half - np.asarray(z, dtype=np.float64)), 0.0))


def blend_pair(source_x, target_x, z, geometry: PlateGeometry, noise=None):
    """Deterministic part of the training-point draw: the straight-line blend
    of the pair at height z, plus an optional pre-drawn in-plane offset."""
    frac = z / geometry.gap
    x = (1.0 - frac) * np.asarray(source_x) + frac * np.asarray(target_x)
    if noise is not None:
        x = x + noise
    return x


def sample_training_point(pair, geometry: PlateGeometry, noise_mode: str, rng):
    """Draw one training point for a (source_x, target_x) pair.

    z is uniform on [0, L]; in bridge mode an isotropic Gaussian offset with
    the mid-gap variance profile is added, in none mode the point stays on
    the interpolation line.
    """
    source_x, target_x = pair
    z = rng.uniform(0.0, geometry.gap)
    noise = None
    if noise_mode == "bridge":
        noise = bridge_noise_scale(z, geometry) * rng.standard_normal(len(source_x))
    from .core import ExtendedPoint

    return ExtendedPoint(x=blend_pair(source_x, target_x, z, geometry, noise), z=z)


def training_points_for_batch(batch: PairBatch, noise_mode: str, rng):
    """Vectorized draw of one training point per pair; returns (x (B,D), z (B,))."""
    B, D = batch.source_x.shape
    z = rng.uniform(0.0, batch.geometry.gap, size=B)
    noise = None
    if noise_mode == "bridge":
        noise = bridge_noise_scale(z, batch.geometry)[:, None] * rng.standard_normal((B, D))
    x = blend_pair(batch.source_x, batch.target_x, z[:, None], batch.geometry, noise)
    return x, z


def loss(model: FieldModel, points: np.ndarray, targets: np.ndarray,
         degenerate: np.ndarray | None = None) -> float:
    """Mean squared error against unit-norm targets, degenerate rows excluded."""
    keep = ~degenerate if degenerate is not None else np.ones(len(points), dtype=bool)
    if not np.any(keep):
        raise ValueError("all target rows are degenerate")
    pred = model.forward(points[keep])
    diff = pred - targets[keep]
    return float(np.mean(np.sum(diff * diff, axis=1)))


def loss_and_gradients(model: FieldModel, points: np.ndarray, targets: np.ndarray,
                       degenerate: np.ndarray | None = None):
    """Loss plus exact gradients for every weight and bias."""
    keep = ~degenerate if degenerate is not None else np.ones(len(points), dtype=bool)
    if not np.any(keep):
        raise ValueError("all target rows are degenerate")
    pts, tgt = points[keep], targets[keep]
    out, acts, pre = model._forward_cached(pts)
    diff = out - tgt
    value = float(np.mean(np.sum(diff * diff, axis=1)))
    gW, gb = model._backward(2.0 * diff / len(pts), acts, pre)
    return value, gW, gb


def train(source: PointCloud, target: PointCloud, config: TrainConfig):
    """Fit the field regressor; returns (model, history).

    Each iteration draws a pair batch from the plan, one training point per
    pair, computes the normalized superposed field of the whole batch at
    those points (the sigma power is left off by default since it cancels
    under normalization), and takes one Adam step on the squared error.
    History rows are (iteration, loss, lr, degenerate_count).
    """
    validate_geometry(config.geometry, config.params)
    if source.dim != config.geometry.data_dim or target.dim != config.geometry.data_dim:
        raise ValueError("cloud dimension does not match the configured geometry")
    init_rng = np.random.default_rng([config.seed, _stream_id("init")])
    noise_rng = np.random.default_rng([config.seed, _stream_id("noise")])
    plan_rng = np.random.default_rng([config.seed, _stream_id("plan")])

    # Data coordinates are order one while z spans [0, L]; balance the first
    # layer at init by the uniform-height standard deviation.
    z_scale = max(config.geometry.gap / math.sqrt(12.0), 1.0)
    input_scales = np.ones(config.geometry.data_dim + 1)
    input_scales[-1] = z_scale
    model = FieldModel.initialize(
        config.geometry.data_dim,
        config.hidden,
        init_rng,
        ema_decay=config.ema_decay,
        input_scales=input_scales,
    )
    params = model.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    history = np.zeros((config.total_iterations, 4))

    for it in range(config.total_iterations):
        batch = sample_pairs(
            source,
            target,
            config.batch,
            config.plan,
            int(plan_rng.integers(np.iinfo(np.int64).max)),
            config.geometry,
        )
        pts_x, pts_z = training_points_for_batch(batch, config.noise_mode, noise_rng)
        raw = superpose_grid(pts_x, pts_z, batch, config.params, config.include_sigma_power)
        targets, degenerate = normalize_rows(raw)
        points = np.column_stack([pts_x, pts_z])
        value, gW, gb = loss_and_gradients(model, points, targets, degenerate)
        if not np.isfinite(value):
            raise RuntimeError(f"training diverged (loss not finite) at iteration {it}")
        lr = learning_rate(it, config)
        grads = gW + gb
        t = it + 1
        for p, g, mi, vi in zip(params, grads, m, v):
            g = g + WEIGHT_DECAY * p
            mi *= ADAM_BETA1
            mi += (1.0 - ADAM_BETA1) * g
            vi *= ADAM_BETA2
            vi += (1.0 - ADAM_BETA2) * g * g
            m_hat = mi / (1.0 - ADAM_BETA1**t)
            v_hat = vi / (1.0 - ADAM_BETA2**t)
            p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        model.ema_update()
        history[it] = (it, value, lr, int(degenerate.sum()))
    return model, history


def _stream_id(name: str) -> int:
    import zlib

    return zlib.crc32(name.encode())


def write_loss_history(path, history, seed=None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "loss", "lr", "degenerate_count"])
        for row in history:
            writer.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(row[3])])


def save_model(path, model: FieldModel, extra_header: dict | None = None) -> None:
    """Write a self-describing checkpoint.

    Layout: the 4-byte magic "SFLD", a little-endian uint32 header length, a
    UTF-8 JSON header (format_version, data_dim, hidden, activation,
    ema_decay plus any extras), then the raw arrays as little-endian float64
    in order: every live weight matrix (row-major) followed by its bias, then
    the same sequence for the EMA shadow.
    """
    header = {
        "format_version": CHECKPOINT_VERSION,
        "data_dim": model.data_dim,
        "hidden": list(model.hidden),
        "activation": model.activation,
        "ema_decay": model.ema_decay,
    }
    if extra_header:
        header.update(extra_header)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for W, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        for W, b in zip(model.ema_weights, model.ema_biases):
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path):
    """Read a checkpoint back; returns (model, header)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a field-model checkpoint (bad magic {magic!r})")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported format version {header.get('format_version')}")
        D = header["data_dim"]
        sizes = [D + 1, *header["hidden"], D + 1]

        def read_arrays():
            Ws, bs = [], []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                W = np.frombuffer(fh.read(8 * fan_out * fan_in), dtype="<f8").reshape(fan_out, fan_in)
                b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8")
                Ws.append(W.astype(np.float64))
                bs.append(b.astype(np.float64))
            return Ws, bs

        weights, biases = read_arrays()
        ema_weights, ema_biases = read_arrays()
    model = FieldModel(
        weights=weights,
        biases=biases,
        ema_weights=ema_weights,
        ema_biases=ema_biases,
        ema_decay=float(header["ema_decay"]),
        activation=header.get("activation", "silu"),
    )
    return model, header
