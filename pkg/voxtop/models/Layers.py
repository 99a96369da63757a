from __future__ import annotations

import itertools
import typing
from dataclasses import asdict, dataclass

import numpy as np

from voxtop.utils.Errors import NetworkShapeError

KINDS = ("conv3d", "maxpool", "transpose_conv3d")
ACTIVATIONS = ("relu", "tanh", "none")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    activation: str = "none"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NetworkShapeError(f"Unknown layer kind: '{self.kind}', must be one of {KINDS}")
        if self.activation not in ACTIVATIONS:
            raise NetworkShapeError(
                f"Unknown activation: '{self.activation}', must be one of {ACTIVATIONS}"
            )
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise NetworkShapeError(f"Invalid kernel/stride/padding in {self}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise NetworkShapeError(f"Invalid channel counts in {self}")
        if self.kind == "maxpool" and self.in_channels != self.out_channels:
            raise NetworkShapeError("Max pooling cannot change the channel count")

    @property
    def has_parameters(self) -> bool:
        return self.kind != "maxpool"

    @property
    def weight_shape(self) -> typing.Tuple[int, ...]:
        k = self.kernel
        if self.kind == "conv3d":
            return (self.out_channels, self.in_channels, k, k, k)
        if self.kind == "transpose_conv3d":
            return (self.in_channels, self.out_channels, k, k, k)
        return ()

    @property
    def fan_in(self) -> int:
        taps = self.kernel ** 3
        if self.kind == "transpose_conv3d":
            taps = max(taps // self.stride ** 3, 1)
        return self.in_channels * taps

    def output_dim(self, n: int) -> int:
        k, s, p = self.kernel, self.stride, self.padding
        if self.kind == "conv3d":
            return (n + 2 * p - k) // s + 1
        if self.kind == "maxpool":
            return (n - k) // s + 1
        return (n - 1) * s + k - 2 * p

    def output_shape(self, shape: typing.Sequence[int]) -> typing.Tuple[int, int, int]:
        out = tuple(self.output_dim(n) for n in shape)
        if min(out) < 1:
            raise NetworkShapeError(f"Layer {self.kind} maps spatial shape {tuple(shape)} to {out}")
        if self.kind == "maxpool" and any((n - self.kernel) % self.stride for n in shape):
            raise NetworkShapeError(
                f"Max pooling (kernel {self.kernel}, stride {self.stride}) does not tile "
                f"spatial shape {tuple(shape)}"
            )
        return out

    def toJSON(self) -> dict:
        return asdict(self)

    @staticmethod
    def fromJSON(inJSON: dict) -> LayerSpec:
        return LayerSpec(**inJSON)


def _offsets(k: int):
    return itertools.product(range(k), repeat=3)


def _window(a: int, b: int, c: int, shape: typing.Sequence[int], stride: int):
    """
    Strided slice picking, for kernel offset (a, b, c), the input taps of every output voxel
    """
    return (slice(None),) + tuple(
        slice(o, o + stride * (n - 1) + 1, stride) for o, n in zip((a, b, c), shape)
    )


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if not p:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p), (p, p)))


def conv3d_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, stride: int = 1, padding: int = 0):
    """
    Cross-correlate x (C_in, X, Y, Z) with W (C_out, C_in, k, k, k), adding bias b (C_out,)
    """
    k = W.shape[2]
    xp = _pad(x, padding)
    out_shape = tuple((n - k) // stride + 1 for n in xp.shape[1:])
    out = np.zeros((W.shape[0],) + out_shape)
    for a, bb, c in _offsets(k):
        out += np.tensordot(W[:, :, a, bb, c], xp[_window(a, bb, c, out_shape, stride)], axes=(1, 0))
    return out + b[:, None, None, None]


def conv3d_backward(
    gout: np.ndarray, x: np.ndarray, W: np.ndarray, stride: int = 1, padding: int = 0
):
    """
    Gradients (dx, dW, db) of conv3d_forward given the upstream gradient gout
    """
    k = W.shape[2]
    xp = _pad(x, padding)
    out_shape = gout.shape[1:]
    dxp = np.zeros_like(xp, dtype=float)
    dW = np.zeros_like(W, dtype=float)
    for a, bb, c in _offsets(k):
        window = _window(a, bb, c, out_shape, stride)
        dW[:, :, a, bb, c] = np.tensordot(gout, xp[window], axes=([1, 2, 3], [1, 2, 3]))
        dxp[window] += np.tensordot(W[:, :, a, bb, c], gout, axes=(0, 0))
    db = gout.sum(axis=(1, 2, 3))
    if padding:
        p = padding
        dxp = dxp[:, p:-p, p:-p, p:-p]
    return dxp, dW, db


def maxpool_forward(x: np.ndarray, kernel: int = 2, stride: int = 2):
    """
    Max pooling; returns the pooled array and the winning kernel offset per output voxel

    Ties go to the first offset in (a, b, c) lexicographic order
    """
    out_shape = tuple((n - kernel) // stride + 1 for n in x.shape[1:])
    out = np.full((x.shape[0],) + out_shape, -np.inf)
    arg = np.zeros(out.shape, dtype=np.int64)
    for o, (a, b, c) in enumerate(_offsets(kernel)):
        candidate = x[_window(a, b, c, out_shape, stride)]
        better = candidate > out
        out = np.where(better, candidate, out)
        arg = np.where(better, o, arg)
    return out, arg


def maxpool_backward(gout: np.ndarray, arg: np.ndarray, in_shape, kernel: int = 2, stride: int = 2):
    dx = np.zeros(in_shape)
    for o, (a, b, c) in enumerate(_offsets(kernel)):
        dx[_window(a, b, c, gout.shape[1:], stride)] += np.where(arg == o, gout, 0.0)
    return dx


def transpose_conv3d_forward(
    x: np.ndarray, W: np.ndarray, b: np.ndarray, stride: int = 1, padding: int = 0
):
    """
    Transposed convolution of x (C_in, X, Y, Z) with W (C_in, C_out, k, k, k)

    Output dims are (n - 1) * stride + k - 2 * padding
    """
    k = W.shape[2]
    in_shape = x.shape[1:]
    full = np.zeros((W.shape[1],) + tuple((n - 1) * stride + k for n in in_shape))
    for a, bb, c in _offsets(k):
        full[_window(a, bb, c, in_shape, stride)] += np.tensordot(
            W[:, :, a, bb, c], x, axes=(0, 0)
        )
    if padding:
        p = padding
        full = full[:, p:-p, p:-p, p:-p]
    return full + b[:, None, None, None]


def transpose_conv3d_backward(
    gout: np.ndarray, x: np.ndarray, W: np.ndarray, stride: int = 1, padding: int = 0
):
    k = W.shape[2]
    in_shape = x.shape[1:]
    gfull = _pad(gout, padding)
    dx = np.zeros(x.shape)
    dW = np.zeros_like(W, dtype=float)
    for a, bb, c in _offsets(k):
        g = gfull[_window(a, bb, c, in_shape, stride)]
        dx += np.tensordot(W[:, :, a, bb, c], g, axes=(1, 0))
        dW[:, :, a, bb, c] = np.tensordot(x, g, axes=([1, 2, 3], [1, 2, 3]))
    db = gout.sum(axis=(1, 2, 3))
    return dx, dW, db


def activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    return z


def activation_backward(g: np.ndarray, z: np.ndarray, y: np.ndarray, activation: str) -> np.ndarray:
    """
    Chain g through the activation, given its pre-activation z and output y
    """
    if activation == "relu":
        return g * (z > 0)
    if activation == "tanh":
        return g * (1.0 - y * y)
    return g


def layer_forward(spec: LayerSpec, x: np.ndarray, W=None, b=None):
    """
    Returns (output, cache) where cache holds whatever layer_backward needs
    """
    if x.shape[0] != spec.in_channels:
        raise NetworkShapeError(
            f"Layer {spec.kind} expects {spec.in_channels} channel(s), got {x.shape[0]}"
        )
    arg = None
    if spec.kind == "conv3d":
        z = conv3d_forward(x, W, b, spec.stride, spec.padding)
    elif spec.kind == "transpose_conv3d":
        z = transpose_conv3d_forward(x, W, b, spec.stride, spec.padding)
    else:
        z, arg = maxpool_forward(x, spec.kernel, spec.stride)
    y = activate(z, spec.activation)
    return y, (x, z, y, arg)


def layer_backward(spec: LayerSpec, gout: np.ndarray, cache, W=None):
    """
    Returns (dx, dW, db); dW & db are None for max pooling
    """
    x, z, y, arg = cache
    gz = activation_backward(gout, z, y, spec.activation)
    if spec.kind == "conv3d":
        return conv3d_backward(gz, x, W, spec.stride, spec.padding)
    if spec.kind == "transpose_conv3d":
        return transpose_conv3d_backward(gz, x, W, spec.stride, spec.padding)
    return maxpool_backward(gz, arg, x.shape, spec.kernel, spec.stride), None, None
