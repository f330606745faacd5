"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradReport:
    per_param: dict[str, float] = field(default_factory=dict)
    input_error: float | None = None

    @property
    def max_error(self) -> float:
        vals = list(self.per_param.values())
        if self.input_error is not None:
            vals.append(self.input_error)
        return max(vals) if vals else 0.0

    def per_layer(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name, err in self.per_param.items():
            layer = name.rsplit(".", 1)[0] if "." in name else name
            out[layer] = max(out.get(layer, 0.0), err)
        return out


def relative_error(a, n, floor: float = 1e-8):
    a, n = np.asarray(a, dtype=float), np.asarray(n, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(layer, x, *, train: bool = True, h: float = 1e-5, samples: int = 200, seed: int = 0,
               check_input: bool = True) -> GradReport:
    """Compare backprop gradients of a random linear readout of ``layer(x)``.

    The scalar objective is ``sum(r * layer(x))`` with a fixed random ``r``,
    so every output contributes. Up to ``samples`` entries of each parameter
    (and of the input) are perturbed by ``+-h``. Batch-norm running stats are
    restored after every evaluation so repeated forwards see the same state.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    buffers = [b for _, b in layer.named_buffers()]
    saved = [b.copy() for b in buffers]

    def restore():
        for b, s in zip(buffers, saved):
            b[...] = s

    out = layer.forward(x, train)
    r = rng.standard_normal(out.shape)
    restore()

    def evaluate():
        out = layer.forward(x, train).copy()
        restore()
        return out

    layer.zero_grad()
    layer.forward(x, train)
    dx = layer.backward(r)
    restore()

    def probe(arr, analytic):
        flat = arr.reshape(-1)
        idx = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        worst = 0.0
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = evaluate()
            flat[i] = old - h
            down = evaluate()
            flat[i] = old
            # difference before reducing: outputs the entry does not reach cancel
            # exactly instead of adding rounding noise to a large sum
            num = float(np.sum(r * (up - down))) / (2 * h)
            worst = max(worst, float(relative_error(analytic.reshape(-1)[i], num)))
        return worst

    report = GradReport()
    for name, p, g in layer.named_params():
        report.per_param[name] = probe(p, g.copy())
    if check_input and dx is not None:
        report.input_error = probe(x, dx)
    return report
