"""Small dense networks with hand-written reverse-mode gradients.

Inputs may be a single vector ``(d,)`` or a batch ``(n, d)``; gradients are
summed over the batch. Text serialization (``dumps``/``loads``)::

    densenet 1
    sizes 10 64 64 2
    hidden relu
    output tanh
    W0 10 64
    <10*64 floats, row-major, one line>
    b0 64
    <64 floats>
    ...

Floats are written with ``repr`` so a round trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

_OUTPUTS = ("linear", "tanh")


class DimensionError(ValueError):
    pass


@dataclass
class ParamGrad:
    dW: list[np.ndarray]
    db: list[np.ndarray]

    def scaled(self, k: float) -> "ParamGrad":
        return ParamGrad([w * k for w in self.dW], [b * k for b in self.db])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.dW, self.db) for a in pair])


class DenseNet:
    def __init__(
        self,
        sizes: Sequence[int],
        output: str = "linear",
        rng: np.random.Generator | None = None,
        final_scale: float | None = None,
    ):
        if len(sizes) < 2:
            raise DimensionError("need at least input and output sizes")
        if output not in _OUTPUTS:
            raise ValueError(f"output must be one of {_OUTPUTS}")
        self.sizes = [int(s) for s in sizes]
        self.output = output
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            lim = 1.0 / np.sqrt(fan_in)
            if i == n_layers - 1 and final_scale is not None:
                lim = final_scale
            self.W.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
            self.b.append(rng.uniform(-lim, lim, fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.W)

    def copy(self) -> "DenseNet":
        net = DenseNet.__new__(DenseNet)
        net.sizes = list(self.sizes)
        net.output = self.output
        net.W = [w.copy() for w in self.W]
        net.b = [b.copy() for b in self.b]
        return net

    def params(self) -> list[np.ndarray]:
        return [a for pair in zip(self.W, self.b) for a in pair]

    def zero_grad(self) -> ParamGrad:
        return ParamGrad([np.zeros_like(w) for w in self.W], [np.zeros_like(b) for b in self.b])

    def forward(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)

    def backward(self, x: np.ndarray, upstream: np.ndarray) -> tuple[ParamGrad, np.ndarray]:
        return backward(self, x, upstream)


def _as_batch(net: DenseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.sizes[0]:
        raise DimensionError(f"expected input dim {net.sizes[0]}, got shape {x.shape}")
    return xb, single


def _forward_cache(net: DenseNet, xb: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    acts = [xb]
    pres = []
    h = xb
    last = net.n_layers - 1
    for i, (W, b) in enumerate(zip(net.W, net.b)):
        z = h @ W + b
        pres.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
        elif net.output == "tanh":
            h = np.tanh(z)
        else:
            h = z
        acts.append(h)
    return acts, pres


def forward(net: DenseNet, x) -> np.ndarray:
    xb, single = _as_batch(net, x)
    out = _forward_cache(net, xb)[0][-1]
    return out[0] if single else out


def backward(net: DenseNet, x, upstream) -> tuple[ParamGrad, np.ndarray]:
    """Gradients of ``sum(output * upstream)`` w.r.t. parameters and input."""
    xb, single = _as_batch(net, x)
    g = np.asarray(upstream, dtype=np.float64)
    g = g[None, :] if g.ndim == 1 else g
    if g.shape != (xb.shape[0], net.sizes[-1]):
        raise DimensionError(f"upstream shape {g.shape} does not match output")
    acts, pres = _forward_cache(net, xb)
    last = net.n_layers - 1
    dW: list[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    db: list[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    if net.output == "tanh":
        g = g * (1.0 - acts[-1] ** 2)
    for i in range(last, -1, -1):
        if i < last:
            g = g * (pres[i] > 0.0)
        dW[i] = acts[i].T @ g
        db[i] = g.sum(axis=0)
        g = g @ net.W[i].T
    return ParamGrad(dW, db), (g[0] if single else g)


def _check_congruent(net: DenseNet, grad: ParamGrad) -> None:
    if len(grad.dW) != net.n_layers or any(
        w.shape != d.shape for w, d in zip(net.W + net.b, grad.dW + grad.db)
    ):
        raise DimensionError("gradient shapes do not match the network")


def sgd_update(net: DenseNet, grad: ParamGrad, lr: float) -> None:
    """Plain descent step, in place."""
    _check_congruent(net, grad)
    for W, b, dW, db in zip(net.W, net.b, grad.dW, grad.db):
        W -= lr * dW
        b -= lr * db


def soft_update(target: DenseNet, source: DenseNet, tau: float) -> None:
    """``target <- tau * source + (1 - tau) * target``, in place."""
    if target.sizes != source.sizes:
        raise DimensionError("target and source architectures differ")
    for t, s in zip(target.params(), source.params()):
        t *= 1.0 - tau
        t += tau * s


class SGD:
    def __init__(self, net: DenseNet, lr: float, momentum: float = 0.0):
        self.net = net
        self.lr = lr
        self.momentum = momentum
        self._v = [np.zeros_like(p) for p in net.params()]

    def step(self, grad: ParamGrad) -> None:
        _check_congruent(self.net, grad)
        if self.momentum == 0.0:
            sgd_update(self.net, grad, self.lr)
            return
        gs = [a for pair in zip(grad.dW, grad.db) for a in pair]
        for p, g, v in zip(self.net.params(), gs, self._v):
            v *= self.momentum
            v += g
            p -= self.lr * v


class Adam:
    def __init__(self, net: DenseNet, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m = [np.zeros_like(p) for p in net.params()]
        self._v = [np.zeros_like(p) for p in net.params()]
        self._t = 0

    def step(self, grad: ParamGrad) -> None:
        _check_congruent(self.net, grad)
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self._t
        c2 = 1.0 - b2 ** self._t
        gs = [a for pair in zip(grad.dW, grad.db) for a in pair]
        for p, g, m, v in zip(self.net.params(), gs, self._m, self._v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(net: DenseNet, kind: str, lr: float, momentum: float = 0.0):
    if kind == "adam":
        return Adam(net, lr)
    if kind == "sgd":
        return SGD(net, lr, momentum)
    raise ValueError(f"unknown optimizer {kind!r}")


def _fmt(a: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in a.ravel())


def dumps(net: DenseNet) -> str:
    lines = [
        "densenet 1",
        "sizes " + " ".join(str(s) for s in net.sizes),
        "hidden relu",
        f"output {net.output}",
    ]
    for i, (W, b) in enumerate(zip(net.W, net.b)):
        lines += [f"W{i} {W.shape[0]} {W.shape[1]}", _fmt(W), f"b{i} {b.shape[0]}", _fmt(b)]
    return "\n".join(lines) + "\n"


def loads(text: str) -> DenseNet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["densenet", "1"]:
        raise ValueError("not a densenet v1 block")
    sizes = [int(s) for s in lines[1].split()[1:]]
    output = lines[3].split()[1]
    net = DenseNet.__new__(DenseNet)
    net.sizes, net.output, net.W, net.b = sizes, output, [], []
    pos = 4
    for i in range(len(sizes) - 1):
        hdr = lines[pos].split()
        shape = (int(hdr[1]), int(hdr[2]))
        if hdr[0] != f"W{i}" or shape != (sizes[i], sizes[i + 1]):
            raise ValueError(f"bad weight header {lines[pos]!r}")
        net.W.append(np.array([float(v) for v in lines[pos + 1].split()]).reshape(shape))
        hdr = lines[pos + 2].split()
        if hdr[0] != f"b{i}" or int(hdr[1]) != sizes[i + 1]:
            raise ValueError(f"bad bias header {lines[pos + 2]!r}")
        net.b.append(np.array([float(v) for v in lines[pos + 3].split()]))
        pos += 4
    for p in net.params():
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite parameter in checkpoint")
    return net


def save(net: DenseNet, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(net))


def load(path) -> DenseNet:
    with open(path) as fh:
        return loads(fh.read())
