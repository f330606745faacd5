"""Inception-3D + LSTM clip classifier topology."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError
from ..nn import functional as F
from ..nn.layers import AdaptiveMaxPoolHW, Dense, InceptionStack, Layer, LSTM, MaxPool3d


@dataclass(frozen=True)
class NetworkConfig:
    stack_filters: tuple[int, ...] = (16, 32, 64, 128)
    lstm_units: int = 128
    input_shape: tuple[int, int, int] = (100, 100, 100)  # time, height, width
    classes: int = 3
    pseudo_time_steps: int = 25
    feature_dim: int = 512
    temporal_pool_after: tuple[int, ...] = (0, 1)
    pooled_hw: tuple[int, int] = (2, 2)

    def check(self) -> list[tuple[str, tuple[int, ...]]]:
        """Validate the shape arithmetic; return the per-stage activation table."""
        t, h, w = self.input_shape
        if any(f % 4 for f in self.stack_filters):
            raise ConfigurationError(f"stack filters {self.stack_filters} must be multiples of 4")
        table = [("input", (1, t, h, w))]
        for i, f in enumerate(self.stack_filters):
            table.append((f"stack{i}", (f, t, h, w)))
            kt = 2 if i in self.temporal_pool_after else 1
            if t < kt or h < 2 or w < 2:
                raise ConfigurationError(
                    f"input {self.input_shape} is too small: after stack {i} the activation is "
                    f"{t}x{h}x{w}, which cannot be pooled by ({kt}, 2, 2)"
                )
            t, h, w = t // kt, h // 2, w // 2
            table.append((f"pool{i}", (f, t, h, w)))
        ph, pw = self.pooled_hw
        if h < ph or w < pw:
            raise ConfigurationError(f"final spatial grid {h}x{w} smaller than the adaptive target {self.pooled_hw}")
        c = self.stack_filters[-1]
        table.append(("adaptive_pool", (c, t, ph, pw)))
        if t != self.pseudo_time_steps:
            raise ConfigurationError(
                f"{self.input_shape[0]} frames halved {len(self.temporal_pool_after)} times gives {t} "
                f"time steps, expected {self.pseudo_time_steps}"
            )
        if c * ph * pw != self.feature_dim:
            raise ConfigurationError(
                f"{c} channels x {ph}x{pw} positions = {c * ph * pw} features, expected {self.feature_dim}"
            )
        table.append(("sequence", (t, c * ph * pw)))
        table.append(("lstm", (self.lstm_units,)))
        table.append(("logits", (self.classes,)))
        return table

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        for k in ("stack_filters", "input_shape", "temporal_pool_after", "pooled_hw"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


# Reduced spatial resolution used for CPU-only training runs. Same depth,
# filters, LSTM and 25x512 sequence as the full model.
DESK_CONFIG = NetworkConfig(input_shape=(100, 32, 32))


class Network(Layer):
    name = "network"

    def __init__(self, config: NetworkConfig, *, seed: int = 0, dtype=np.float64):
        super().__init__()
        self.table = config.check()
        self.config = config
        rng = np.random.default_rng(seed)
        self.stages: list[tuple[str, Layer]] = []
        c_in = 1
        for i, f in enumerate(config.stack_filters):
            self.stages.append((f"stack{i}", InceptionStack(c_in, f, rng=rng, dtype=dtype)))
            kt = 2 if i in config.temporal_pool_after else 1
            self.stages.append((f"pool{i}", MaxPool3d((kt, 2, 2))))
            c_in = f
        # clips are data, so the first stack never needs an input gradient
        self.stages[0][1].disable_input_grad()
        self.stages.append(("adaptive_pool", AdaptiveMaxPoolHW(config.pooled_hw)))
        self.lstm = LSTM(config.feature_dim, config.lstm_units, rng=rng, dtype=dtype)
        self.head = Dense(config.lstm_units, config.classes, rng=rng, dtype=dtype)

    @property
    def dtype(self):
        return self.head.params["w"].dtype

    def children(self):
        return self.stages + [("lstm", self.lstm), ("head", self.head)]

    def features(self, x, train=False):
        for _, layer in self.stages:
            x = layer.forward(x, train)
        self._pooled_shape = x.shape
        n, c, t, h, w = x.shape
        return np.ascontiguousarray(x.transpose(0, 2, 1, 3, 4).reshape(n, t, c * h * w))

    def forward(self, x, train=False):
        """``x`` is (N, 1, T, H, W); returns logits (N, classes)."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 4:
            x = x[:, None]
        seq = self.features(x, train)
        return self.head.forward(self.lstm.forward(seq, train), train)

    def backward(self, dlogits):
        dseq = self.lstm.backward(self.head.backward(dlogits))
        n, c, t, h, w = self._pooled_shape
        dx = dseq.reshape(n, t, c, h, w).transpose(0, 2, 1, 3, 4)
        for _, layer in reversed(self.stages):
            dx = layer.backward(np.ascontiguousarray(dx))
            if dx is None:
                break
        return dx

    def predict_proba(self, x, batch: int = 4):
        out = []
        for i in range(0, len(x), batch):
            out.append(F.softmax(self.forward(x[i : i + batch], train=False)))
        return np.concatenate(out, axis=0)

    def trace_shapes(self, x) -> list[tuple[str, tuple[int, ...]]]:
        """Run a forward pass recording the per-sample shape after every stage."""
        x = np.asarray(x, dtype=self.dtype)
        trace = [("input", x.shape[1:])]
        for name, layer in self.stages:
            x = layer.forward(x, False)
            trace.append((name, x.shape[1:]))
        n, c, t, h, w = x.shape
        seq = x.transpose(0, 2, 1, 3, 4).reshape(n, t, c * h * w)
        trace.append(("sequence", seq.shape[1:]))
        hid = self.lstm.forward(seq)
        trace.append(("lstm", hid.shape[1:]))
        trace.append(("logits", self.head.forward(hid).shape[1:]))
        return trace

    def manifest(self) -> list[tuple[str, tuple[int, ...]]]:
        names = [(n, p.shape) for n, p, _ in self.named_params()]
        names += [(n, b.shape) for n, b in self.named_buffers()]
        return names


def build_network(config: NetworkConfig = NetworkConfig(), *, seed: int = 0, dtype=np.float64) -> Network:
    return Network(config, seed=seed, dtype=dtype)
