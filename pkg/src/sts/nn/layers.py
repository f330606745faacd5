"""Stateful layers with explicit forward/backward passes.

A layer owns ``params`` (trainable arrays), ``grads`` (same keys, filled by
``backward``) and optionally ``buffers`` (non-trainable state such as batch
norm running statistics). Composite layers expose their children's arrays
under dotted names so a whole network can be enumerated, checkpointed and
gradient-checked uniformly.
"""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from ..errors import ShapeError
from . import functional as F


class Layer:
    name = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def children(self) -> list[tuple[str, "Layer"]]:
        return []

    def named_params(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray, np.ndarray]]:
        for k, v in self.params.items():
            yield prefix + k, v, self.grads[k]
        for cname, child in self.children():
            yield from child.named_params(f"{prefix}{cname}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for k, v in self.buffers.items():
            yield prefix + k, v
        for cname, child in self.children():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def zero_grad(self):
        for _, _, g in self.named_params():
            g[...] = 0.0

    def astype(self, dtype):
        for d in (self.params, self.grads, self.buffers):
            for k in d:
                d[k] = d[k].astype(dtype)
        for _, child in self.children():
            child.astype(dtype)
        return self

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def _he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _xavier_uniform(rng, shape, fan_in, fan_out, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv3d(Layer):
    name = "conv3d"

    def __init__(self, c_in, c_out, kernel, *, padding=0, stride=1, bias=True, rng=None, dtype=np.float64):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        k = F.triple(kernel)
        self.stride, self.padding = F.triple(stride), F.triple(padding)
        fan_in = c_in * k[0] * k[1] * k[2]
        self.params["w"] = _he_uniform(rng, (c_out, c_in) + k, fan_in, dtype)
        self.grads["w"] = np.zeros_like(self.params["w"])
        if bias:
            self.params["b"] = np.zeros(c_out, dtype=dtype)
            self.grads["b"] = np.zeros(c_out, dtype=dtype)
        self.input_grad = True
        self._cache = None

    def forward(self, x, train=False):
        out, self._cache = F.conv3d_forward(x, self.params["w"], self.params.get("b"), self.stride, self.padding)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv3d_backward(dout, self._cache, input_grad=self.input_grad)
        self.grads["w"] += dw
        if db is not None:
            self.grads["b"] += db
        self._cache = None
        return dx


class BatchNorm3d(Layer):
    name = "batchnorm3d"

    def __init__(self, channels, *, momentum=0.1, eps=1e-5, dtype=np.float64):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)
        self._cache = None

    def forward(self, x, train=False):
        out, self._cache = F.batchnorm_forward(
            x, self.params["gamma"], self.params["beta"],
            self.buffers["running_mean"], self.buffers["running_var"],
            train=train, momentum=self.momentum, eps=self.eps,
        )
        return out

    def backward(self, dout):
        dx, dg, db = F.batchnorm_backward(dout, self._cache)
        self.grads["gamma"] += dg
        self.grads["beta"] += db
        self._cache = None
        return dx


class ReLU(Layer):
    name = "relu"

    def forward(self, x, train=False):
        out, self._mask = F.relu_forward(x)
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._mask)


class MaxPool3d(Layer):
    name = "maxpool3d"

    def __init__(self, window, stride=None, padding=0):
        super().__init__()
        self.window, self.stride, self.padding = window, stride, padding

    def forward(self, x, train=False):
        out, self._cache = F.maxpool3d_forward(x, self.window, self.stride, self.padding)
        return out

    def backward(self, dout):
        return F.maxpool3d_backward(dout, self._cache)


class AdaptiveMaxPoolHW(Layer):
    name = "adaptive_maxpool"

    def __init__(self, out_hw):
        super().__init__()
        self.out_hw = tuple(out_hw)

    def forward(self, x, train=False):
        out, self._cache = F.adaptive_maxpool_hw_forward(x, self.out_hw)
        return out

    def backward(self, dout):
        return F.adaptive_maxpool_hw_backward(dout, self._cache)


class Sequential(Layer):
    name = "sequential"

    def __init__(self, *layers: tuple[str, Layer]):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x, train=False):
        for _, layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for _, layer in reversed(self.layers):
            dout = layer.backward(dout)
            if dout is None:
                break
        return dout

    def disable_input_grad(self):
        """Stop backpropagation at the first parameterised layer (returns None)."""
        for i, (_, layer) in enumerate(self.layers):
            if isinstance(layer, Sequential):
                layer.disable_input_grad()
                return
            if isinstance(layer, Conv3d):
                layer.input_grad = False
                self.layers = [(n, _Frozen(l)) for n, l in self.layers[:i]] + self.layers[i:]
                return


class _Frozen(Layer):
    """Wraps a parameter-free layer whose input gradient is never needed."""

    def __init__(self, inner):
        super().__init__()
        self.inner = inner

    def forward(self, x, train=False):
        return self.inner.forward(x, train)

    def backward(self, dout):
        return None


def conv_bn_relu(c_in, c_out, kernel, rng, dtype):
    # the conv bias would be cancelled by batch norm, so it is omitted
    pad = (F.triple(kernel)[0] - 1) // 2
    return Sequential(
        ("conv", Conv3d(c_in, c_out, kernel, padding=pad, bias=False, rng=rng, dtype=dtype)),
        ("bn", BatchNorm3d(c_out, dtype=dtype)),
        ("relu", ReLU()),
    )


class InceptionStack(Layer):
    """Four parallel branches concatenated along channels.

    Branches: 1x1x1; 1x1x1 -> 3x3x3; 1x1x1 -> 3x3x3 -> 3x3x3;
    3x3x3 max-pool -> 1x1x1. Every conv is followed by batch norm and ReLU.
    ``c_out`` must be divisible by 4; the 1x1x1 reductions feeding 3x3x3
    convs are half a branch wide.
    """

    name = "inception"

    def __init__(self, c_in, c_out, *, rng=None, dtype=np.float64):
        super().__init__()
        if c_out % 4:
            raise ShapeError(f"inception output channels {c_out} not divisible by 4")
        rng = rng if rng is not None else np.random.default_rng(0)
        b = c_out // 4
        r = max(1, b // 2)
        self.branches = [
            ("b1", Sequential(("c1", conv_bn_relu(c_in, b, 1, rng, dtype)))),
            ("b2", Sequential(("c1", conv_bn_relu(c_in, r, 1, rng, dtype)),
                              ("c3", conv_bn_relu(r, b, 3, rng, dtype)))),
            ("b3", Sequential(("c1", conv_bn_relu(c_in, r, 1, rng, dtype)),
                              ("c3a", conv_bn_relu(r, b, 3, rng, dtype)),
                              ("c3b", conv_bn_relu(b, b, 3, rng, dtype)))),
            ("b4", Sequential(("pool", MaxPool3d(3, 1, 1)),
                              ("c1", conv_bn_relu(c_in, b, 1, rng, dtype)))),
        ]
        self.branch_width = b
        self.input_grad = True

    def children(self):
        return self.branches

    def disable_input_grad(self):
        self.input_grad = False
        for _, br in self.branches:
            br.disable_input_grad()

    def forward(self, x, train=False):
        return np.concatenate([br.forward(x, train) for _, br in self.branches], axis=1)

    def backward(self, dout):
        b = self.branch_width
        dx = None
        for k, (_, br) in enumerate(self.branches):
            g = br.backward(np.ascontiguousarray(dout[:, k * b : (k + 1) * b]))
            if g is not None:
                dx = g if dx is None else dx + g
        return dx


class LSTM(Layer):
    name = "lstm"

    def __init__(self, n_in, units, *, rng=None, dtype=np.float64):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["wx"] = _xavier_uniform(rng, (n_in, 4 * units), n_in, units, dtype)
        self.params["wh"] = _xavier_uniform(rng, (units, 4 * units), units, units, dtype)
        b = np.zeros(4 * units, dtype=dtype)
        b[units : 2 * units] = 1.0
        self.params["b"] = b
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x, train=False):
        h, self._cache = F.lstm_forward(x, self.params["wx"], self.params["wh"], self.params["b"])
        return h

    def backward(self, dh):
        dx, dwx, dwh, db = F.lstm_backward(dh, self._cache)
        self.grads["wx"] += dwx
        self.grads["wh"] += dwh
        self.grads["b"] += db
        self._cache = None
        return dx


class Dense(Layer):
    """Affine layer producing logits; softmax lives in the loss."""

    name = "dense"

    def __init__(self, n_in, n_out, *, rng=None, dtype=np.float64):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["w"] = _xavier_uniform(rng, (n_out, n_in), n_in, n_out, dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x, train=False):
        out, self._cache = F.dense_forward(x, self.params["w"], self.params["b"])
        return out

    def backward(self, dlogits):
        dx, dw, db = F.dense_backward(dlogits, self._cache)
        self.grads["w"] += dw
        self.grads["b"] += db
        return dx
