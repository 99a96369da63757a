from __future__ import annotations

import json
import logging
import struct
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from tqdm import tqdm

from voxtop.models import Export
from voxtop.models.Dataset import SampleRecord
from voxtop.models.Layers import LayerSpec, layer_backward, layer_forward
from voxtop.models.Metrics import binarize, binary_accuracy, evaluate_pairs, rms_accuracy
from voxtop.utils.Constants import Channels, Formats, Process, TrainDefaults
from voxtop.utils.Errors import NetworkShapeError, TrainingError, TruncatedFileError

CONFIG_LENGTH = struct.Struct("<I")


@dataclass(frozen=True)
class NetworkConfig:
    layers: typing.Tuple[LayerSpec, ...]
    channels: typing.Tuple[int, ...] = tuple(range(Channels.count))

    def __post_init__(self):
        if not self.layers:
            raise NetworkShapeError("Network needs at least one layer")
        if not self.channels or len(self.channels) > Channels.count:
            raise NetworkShapeError(f"Invalid input channel selection: '{self.channels}'")
        if len(set(self.channels)) != len(self.channels) or not all(
            0 <= c < Channels.count for c in self.channels
        ):
            raise NetworkShapeError(f"Invalid input channel selection: '{self.channels}'")
        if self.layers[0].in_channels != len(self.channels):
            raise NetworkShapeError(
                f"First layer takes {self.layers[0].in_channels} channel(s) but "
                f"{len(self.channels)} are selected"
            )
        for prev, nxt in zip(self.layers[:-1], self.layers[1:]):
            if prev.out_channels != nxt.in_channels:
                raise NetworkShapeError(
                    f"Channel mismatch between layers: {prev.out_channels} -> {nxt.in_channels}"
                )
        last = self.layers[-1]
        if last.activation != "tanh" or last.out_channels != 1:
            raise NetworkShapeError("Final layer must output one channel through tanh")

    @property
    def in_channels(self) -> int:
        return len(self.channels)

    def output_shape(self, shape: typing.Sequence[int]) -> typing.Tuple[int, int, int]:
        for spec in self.layers:
            shape = spec.output_shape(shape)
        return tuple(shape)

    def check_shape(self, shape: typing.Sequence[int]):
        """
        Raise NetworkShapeError unless the network maps this spatial shape onto itself
        """
        out = self.output_shape(shape)
        if out != tuple(shape):
            raise NetworkShapeError(f"Network maps spatial shape {tuple(shape)} to {out}")

    def toJSON(self) -> dict:
        return {"layers": [s.toJSON() for s in self.layers], "channels": list(self.channels)}

    @staticmethod
    def fromJSON(inJSON: dict) -> NetworkConfig:
        return NetworkConfig(
            layers=tuple(LayerSpec.fromJSON(s) for s in inJSON["layers"]),
            channels=tuple(inJSON["channels"]),
        )


def reference_config(
    channels: typing.Sequence[int] = tuple(range(Channels.count)), width: int = 16
) -> NetworkConfig:
    """
    Encoder-decoder: conv+ReLU, maxpool, conv+ReLU, then transpose conv+ReLU, conv+ReLU and a
    final single-channel conv+tanh; spatial shape is preserved for even grid dims
    """
    c = len(channels)
    layers = (
        LayerSpec("conv3d", c, width, kernel=3, padding=1, activation="relu"),
        LayerSpec("maxpool", width, width, kernel=2, stride=2),
        LayerSpec("conv3d", width, 2 * width, kernel=3, padding=1, activation="relu"),
        LayerSpec("transpose_conv3d", 2 * width, width, kernel=2, stride=2, activation="relu"),
        LayerSpec("conv3d", width, width // 2, kernel=3, padding=1, activation="relu"),
        LayerSpec("conv3d", width // 2, 1, kernel=3, padding=1, activation="tanh"),
    )
    return NetworkConfig(layers=layers, channels=tuple(channels))


@dataclass(eq=False)
class NetworkParameters:
    config: NetworkConfig
    weights: typing.List[typing.Optional[np.ndarray]]
    biases: typing.List[typing.Optional[np.ndarray]]

    def __post_init__(self):
        for spec, W, b in zip(self.config.layers, self.weights, self.biases):
            if not spec.has_parameters:
                continue
            if W is None or W.shape != spec.weight_shape or b is None or b.shape != (spec.out_channels,):
                raise NetworkShapeError(f"Parameter shapes do not match layer {spec}")

    def tensors(self) -> typing.Iterator[np.ndarray]:
        """
        Every parameter tensor in declaration order: weight then bias per parametrized layer
        """
        for W, b in zip(self.weights, self.biases):
            if W is not None:
                yield W
                yield b

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())

    def zeros_like(self) -> NetworkParameters:
        return NetworkParameters(
            self.config,
            [None if W is None else np.zeros_like(W) for W in self.weights],
            [None if b is None else np.zeros_like(b) for b in self.biases],
        )

    def copy(self) -> NetworkParameters:
        return NetworkParameters(
            self.config,
            [None if W is None else W.copy() for W in self.weights],
            [None if b is None else b.copy() for b in self.biases],
        )


def init_parameters(config: NetworkConfig, seed: int = 0) -> NetworkParameters:
    """
    Uniform fan-in initialization, W ~ U(-sqrt(6 / fan_in), sqrt(6 / fan_in)); zero biases
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in config.layers:
        if not spec.has_parameters:
            weights.append(None)
            biases.append(None)
            continue
        bound = np.sqrt(6.0 / spec.fan_in)
        weights.append(rng.uniform(-bound, bound, size=spec.weight_shape))
        biases.append(np.zeros(spec.out_channels))
    return NetworkParameters(config, weights, biases)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = TrainDefaults.lr
    momentum: float = TrainDefaults.momentum
    beta: float = TrainDefaults.beta
    epochs: int = TrainDefaults.epochs
    seed: int = 0
    eps: float = TrainDefaults.eps
    threshold: float = Process.threshold

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"Invalid epoch count: '{self.epochs}'")
        if not 0 < self.eps <= 0.01:
            raise ValueError(f"Invalid output clamp epsilon: '{self.eps}'")
        if self.lr < 0 or not 0 <= self.momentum < 1 or self.beta < 0:
            raise ValueError(
                f"Invalid optimizer settings: lr={self.lr}, momentum={self.momentum}, beta={self.beta}"
            )


def select_channels(inputs: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """
    Pick the configured channel subset out of a full 8-channel tensor; a tensor already
    holding exactly the subset passes through
    """
    if inputs.shape[0] == Channels.count and config.in_channels != Channels.count:
        return inputs[list(config.channels)]
    if inputs.shape[0] != config.in_channels:
        raise NetworkShapeError(
            f"Network expects {config.in_channels} input channel(s), got {inputs.shape[0]}"
        )
    return inputs


def _forward(params: NetworkParameters, inputs: np.ndarray):
    config = params.config
    if inputs.ndim != 4:
        raise NetworkShapeError(f"Expected a (C, nx, ny, nz) input, got shape {inputs.shape}")
    config.check_shape(inputs.shape[1:])

    x = np.asarray(inputs, dtype=float)
    caches = []
    for spec, W, b in zip(config.layers, params.weights, params.biases):
        x, cache = layer_forward(spec, x, W, b)
        caches.append(cache)
    return x[0], caches


def to_density(y: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(0.5 * (y + 1.0), eps, 1.0 - eps)


def forward(
    params: NetworkParameters, inputs: np.ndarray, eps: float = TrainDefaults.eps
) -> np.ndarray:
    """
    Predicted density field (nx, ny, nz): tanh output y mapped to (y + 1) / 2, clamped to
    [eps, 1 - eps]
    """
    y, _ = _forward(params, inputs)
    return to_density(y, eps)


def loss(pred: np.ndarray, target: np.ndarray, beta: float = TrainDefaults.beta) -> float:
    """
    Mean binary cross-entropy plus beta times the mean squared error
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"Shape mismatch: prediction {pred.shape} vs target {target.shape}")
    if np.any(pred <= 0) or np.any(pred >= 1):
        raise ValueError("Predictions must lie strictly inside (0, 1); clamp them first")
    bce = -np.mean(target * np.log(pred) + (1.0 - target) * np.log(1.0 - pred))
    return float(bce + beta * np.mean((pred - target) ** 2))


def loss_gradient(pred: np.ndarray, target: np.ndarray, beta: float) -> np.ndarray:
    n = pred.size
    return ((1.0 - target) / (1.0 - pred) - target / pred + 2.0 * beta * (pred - target)) / n


def backward(
    params: NetworkParameters,
    inputs: np.ndarray,
    target: np.ndarray,
    beta: float = TrainDefaults.beta,
    eps: float = TrainDefaults.eps,
) -> typing.Tuple[NetworkParameters, float, np.ndarray]:
    """
    Reverse-mode gradients of loss(forward(inputs), target) for every kernel and bias

    Returns (gradients, loss value, prediction). The clamp passes gradients only where the
    mapped output lies strictly inside (eps, 1 - eps)
    """
    y, caches = _forward(params, inputs)
    raw = 0.5 * (y + 1.0)
    pred = np.clip(raw, eps, 1.0 - eps)
    value = loss(pred, target, beta)

    inside = (raw > eps) & (raw < 1.0 - eps)
    g = (loss_gradient(pred, np.asarray(target, dtype=float), beta) * inside * 0.5)[None]

    grads = params.zeros_like()
    for i in reversed(range(len(params.config.layers))):
        spec = params.config.layers[i]
        g, dW, db = layer_backward(spec, g, caches[i], params.weights[i])
        if dW is not None:
            grads.weights[i] = dW
            grads.biases[i] = db

    return grads, value, pred


def sgd_momentum_step(
    params: NetworkParameters,
    grads: NetworkParameters,
    velocity: NetworkParameters,
    lr: float,
    mu: float,
) -> typing.Tuple[NetworkParameters, NetworkParameters]:
    """
    v' = mu * v + g; w' = w - lr * v'
    """
    new_params = params.copy()
    new_velocity = velocity.copy()
    for i, W in enumerate(params.weights):
        if W is None:
            continue
        new_velocity.weights[i] = mu * velocity.weights[i] + grads.weights[i]
        new_velocity.biases[i] = mu * velocity.biases[i] + grads.biases[i]
        new_params.weights[i] = W - lr * new_velocity.weights[i]
        new_params.biases[i] = params.biases[i] - lr * new_velocity.biases[i]
    return new_params, new_velocity


@dataclass
class TrainTelemetry:
    step_loss: typing.List[float] = field(default_factory=list)
    epoch_loss: typing.List[float] = field(default_factory=list)
    epoch_binary: typing.List[float] = field(default_factory=list)
    epoch_rms: typing.List[float] = field(default_factory=list)
    val_binary: typing.List[float] = field(default_factory=list)
    val_rms: typing.List[float] = field(default_factory=list)

    def save(self, outdir: Path):
        """
        Write steps.csv (per-sample loss) and epochs.csv (epoch averages & validation metrics)
        """
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        Export.write_csv(
            outdir / "steps.csv",
            ("step", "epoch", "loss"),
            (
                (i, i // self.steps_per_epoch if self.steps_per_epoch else 0, v)
                for i, v in enumerate(self.step_loss)
            ),
        )

        def val(series, epoch):
            return series[epoch] if epoch < len(series) else float("nan")

        Export.write_csv(
            outdir / "epochs.csv",
            ("epoch", "loss", "binary", "rms", "val_binary", "val_rms"),
            (
                (e, self.epoch_loss[e], self.epoch_binary[e], self.epoch_rms[e],
                 val(self.val_binary, e), val(self.val_rms, e))
                for e in range(len(self.epoch_loss))
            ),
        )

    @property
    def steps_per_epoch(self) -> int:
        return len(self.step_loss) // len(self.epoch_loss) if self.epoch_loss else 0

    def toJSON(self) -> dict:
        return asdict(self)


def evaluate(
    params: NetworkParameters,
    records: typing.Sequence[SampleRecord],
    threshold: float = Process.threshold,
    eps: float = TrainDefaults.eps,
    label: str = "",
):
    """
    MetricReport of the network's predictions against the records' targets
    """
    return evaluate_pairs(
        ((forward(params, select_channels(r.inputs, params.config), eps), r.target) for r in records),
        threshold=threshold,
        label=label,
    )


def train(
    records: typing.Sequence[SampleRecord],
    config: NetworkConfig,
    train_config: TrainConfig = TrainConfig(),
    validation: typing.Optional[typing.Sequence[SampleRecord]] = None,
    params: typing.Optional[NetworkParameters] = None,
    progress: bool = False,
) -> typing.Tuple[NetworkParameters, TrainTelemetry]:
    """
    Per-sample SGD with momentum over a seeded shuffle each epoch

    Initial parameters, when not given, are drawn from train_config.seed; the same seed drives
    the shuffle, so a run is reproducible end to end
    """
    if not records:
        raise ValueError("Cannot train on an empty dataset")
    config.check_shape(records[0].shape)

    rng = np.random.default_rng(train_config.seed)
    params = init_parameters(config, train_config.seed) if params is None else params
    velocity = params.zeros_like()
    telemetry = TrainTelemetry()
    tc = train_config

    for epoch in range(tc.epochs):
        order = rng.permutation(len(records))
        losses, binary, rms = [], [], []
        for step, idx in enumerate(tqdm(order, desc=f"epoch {epoch + 1}", disable=not progress)):
            record = records[idx]
            grads, value, pred = backward(
                params, select_channels(record.inputs, config), record.target, tc.beta, tc.eps
            )
            if not np.isfinite(value):
                raise TrainingError(f"Non-finite loss {value}", epoch=epoch, step=step)

            params, velocity = sgd_momentum_step(params, grads, velocity, tc.lr, tc.momentum)
            if not params.is_finite():
                raise TrainingError("Non-finite parameters after update", epoch=epoch, step=step)

            losses.append(value)
            binary.append(binary_accuracy(pred, record.target, tc.threshold))
            rms.append(rms_accuracy(pred, record.target))

        telemetry.step_loss.extend(losses)
        telemetry.epoch_loss.append(float(np.mean(losses)))
        telemetry.epoch_binary.append(float(np.mean(binary)))
        telemetry.epoch_rms.append(float(np.mean(rms)))

        msg = (
            f"Epoch {epoch + 1}/{tc.epochs}: loss {telemetry.epoch_loss[-1]:.5f}, "
            f"binary {telemetry.epoch_binary[-1]:.4f}, RMS {telemetry.epoch_rms[-1]:.4f}"
        )
        if validation:
            report = evaluate(params, validation, tc.threshold, tc.eps)
            telemetry.val_binary.append(report.binary)
            telemetry.val_rms.append(report.rms)
            msg += f", validation binary {report.binary:.4f}, RMS {report.rms:.4f}"
        logging.info(msg)

    return params, telemetry


def predict(
    params: NetworkParameters,
    inputs: np.ndarray,
    threshold: float = Process.threshold,
    eps: float = TrainDefaults.eps,
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Returns (float field, binary field); the binary field is 1 where float >= threshold
    """
    density = forward(params, select_channels(inputs, params.config), eps)
    return density, binarize(density, threshold)


def save_checkpoint(path: Path, params: NetworkParameters):
    """
    TOPO3DNN checkpoint: 32-byte header (count = parametrized layers), u32 length of the JSON
    config echo, the echo itself, then little-endian float32 weights & biases per layer
    """
    echo = json.dumps(params.config.toJSON(), sort_keys=True).encode()
    count = sum(1 for s in params.config.layers if s.has_parameters)
    with Path(path).open(mode="wb") as fID:
        Export.write_header(fID, Formats.network_magic, Formats.network_version, (0, 0, 0), count)
        fID.write(CONFIG_LENGTH.pack(len(echo)))
        fID.write(echo)
        for t in params.tensors():
            fID.write(np.ascontiguousarray(t).astype("<f4").tobytes())


def load_checkpoint(path: Path) -> NetworkParameters:
    with Path(path).open(mode="rb") as fID:
        _, count = Export.read_header(fID, Formats.network_magic, Formats.network_version)
        (length,) = CONFIG_LENGTH.unpack(Export.read_exact(fID, CONFIG_LENGTH.size, "config length"))
        try:
            config = NetworkConfig.fromJSON(json.loads(Export.read_exact(fID, length, "config echo")))
        except (ValueError, KeyError, TypeError) as e:
            raise TruncatedFileError(f"Unreadable network config in '{path}': {e}") from e

        if count != sum(1 for s in config.layers if s.has_parameters):
            raise NetworkShapeError(f"Checkpoint layer count {count} disagrees with its config")

        def read(shape, what):
            n = int(np.prod(shape))
            raw = Export.read_exact(fID, 4 * n, what)
            return np.frombuffer(raw, dtype="<f4").astype(float).reshape(shape)

        weights, biases = [], []
        for i, spec in enumerate(config.layers):
            if not spec.has_parameters:
                weights.append(None)
                biases.append(None)
                continue
            weights.append(read(spec.weight_shape, f"layer {i} weights"))
            biases.append(read((spec.out_channels,), f"layer {i} biases"))

        if fID.read(1):
            raise TruncatedFileError(f"Trailing bytes after parameters in '{path}'")

    return NetworkParameters(config, weights, biases)
