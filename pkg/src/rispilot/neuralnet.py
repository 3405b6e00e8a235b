"""A small dense-network engine: input batch norm, ReLU/linear layers,
L2-regularized MSE loss, exact backpropagation and Adam.

Weights are stored as ``(in_dim, out_dim)`` matrices so a batch ``x`` of
shape ``(B, in_dim)`` maps to ``x @ W + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

ACTIVATIONS = ("relu", "linear")
CHECKPOINT_MAGIC = "RSPNET v1"


class TrainingDivergence(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def identity(cls, dim: int, momentum: float = 0.9, eps: float = 1e-5) -> "BatchNormState":
        return cls(np.ones(dim), np.zeros(dim), np.zeros(dim), np.ones(dim), momentum, eps)

    def update_running(self, mean: np.ndarray, var: np.ndarray) -> None:
        self.running_mean *= self.momentum
        self.running_mean += (1.0 - self.momentum) * mean
        self.running_var *= self.momentum
        self.running_var += (1.0 - self.momentum) * var


def _split_flat(flat: np.ndarray, shapes) -> list[np.ndarray]:
    out, pos = [], 0
    for shape in shapes:
        k = math.prod(shape)
        out.append(flat[pos:pos + k].reshape(shape))
        pos += k
    return out


class Gradients(list):
    """Per-parameter gradients that are views into a single flat array ``flat``."""

    def __init__(self, flat: np.ndarray, shapes):
        super().__init__(_split_flat(flat, shapes))
        self.flat = flat


class Mlp:
    """Fully connected network with batch normalization on the input only."""

    def __init__(self, layers, weights, biases, bn: BatchNormState, l2: float = 1e-4):
        self.layers = list(layers)
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        weights = [np.asarray(w, dtype=np.float64) for w in weights]
        biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for spec, w, b in zip(self.layers, weights, biases):
            if w.shape != (spec.in_dim, spec.out_dim) or b.shape != (spec.out_dim,):
                raise ValueError(f"parameter shape mismatch for {spec}")
        if bn.gamma.shape != (self.in_dim,) or bn.beta.shape != (self.in_dim,):
            raise ValueError("batch-norm state does not match the input dimension")
        # all trainable arrays are views into one flat buffer so the optimizer
        # can update them in a single pass
        arrays = [bn.gamma, bn.beta]
        for w, b in zip(weights, biases):
            arrays += [w, b]
        self.flat = np.concatenate([a.reshape(-1) for a in arrays])
        views = _split_flat(self.flat, [a.shape for a in arrays])
        bn.gamma, bn.beta = views[0], views[1]
        self.weights = views[2::2]
        self.biases = views[3::2]
        self.bn = bn
        self.l2 = float(l2)
        if self.l2 < 0:
            raise ValueError("l2 coefficient must be non-negative")
        # bumped on every parameter update; lets backward detect stale caches
        self.version = 0

    @classmethod
    def initialize(cls, dims, activations, rng: np.random.Generator, l2: float = 1e-4,
                   bn_momentum: float = 0.9, bn_eps: float = 1e-5) -> "Mlp":
        """Fan-based uniform init ``U(-sqrt(6/(in+out)), +sqrt(6/(in+out)))``, zero biases."""
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        layers = [LayerSpec(i, o, a) for i, o, a in zip(dims, dims[1:], activations)]
        weights = []
        for spec in layers:
            limit = math.sqrt(6.0 / (spec.in_dim + spec.out_dim))
            weights.append(rng.uniform(-limit, limit, size=(spec.in_dim, spec.out_dim)))
        biases = [np.zeros(s.out_dim) for s in layers]
        return cls(layers, weights, biases, BatchNormState.identity(dims[0], bn_momentum, bn_eps), l2)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> list[int]:
        return [self.in_dim] + [s.out_dim for s in self.layers]

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order: gamma, beta, then (W, b) per layer."""
        out = [self.bn.gamma, self.bn.beta]
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def parameter_names(self) -> list[str]:
        names = ["bn.gamma", "bn.beta"]
        for i in range(len(self.layers)):
            names += [f"W{i + 1}", f"b{i + 1}"]
        return names

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "Mlp":
        bn = BatchNormState(self.bn.gamma.copy(), self.bn.beta.copy(),
                            self.bn.running_mean.copy(), self.bn.running_var.copy(),
                            self.bn.momentum, self.bn.eps)
        return Mlp(self.layers, [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], bn, self.l2)

    def __call__(self, x) -> np.ndarray:
        return forward(self, x, "infer")[0]


@dataclass
class ForwardCache:
    version: int
    xhat: np.ndarray
    activations: list = field(default_factory=list)  # input of every dense layer, then output
    consumed: bool = False


def _as_batch(net: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ValueError(f"expected input of width {net.in_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def forward(net: Mlp, x, mode: str = "infer", update_stats: bool = True):
    """Run the network on a batch.

    In ``train`` mode batch statistics normalize the input (and update the
    running estimates unless ``update_stats`` is false) and a cache for
    :func:`backward` is returned; in ``infer`` mode the running statistics
    are used and the cache is ``None``.
    """
    x = _as_batch(net, x)
    bn = net.bn
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("train-mode batch norm needs at least two samples")
        a, xhat, mean, var = kernels.bn_forward_train(x, bn.gamma, bn.beta, bn.eps)
        if update_stats:
            bn.update_running(mean, var)
    elif mode == "infer":
        a = kernels.bn_forward_infer(x, bn.gamma, bn.beta, bn.running_mean, bn.running_var, bn.eps)
        xhat = None
    else:
        raise ValueError(f"unknown mode {mode!r}")
    acts = [a]
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        z = a @ w
        a = kernels.bias_relu(z, b) if spec.activation == "relu" else kernels.bias_add(z, b)
        acts.append(a)
    if mode == "train":
        return a, ForwardCache(net.version, xhat, acts)
    return a, None


def l2_penalty(net: Mlp) -> float:
    return net.l2 * sum(float(np.sum(w * w)) for w in net.weights)


def loss_mse_l2(pred, label, net: Mlp) -> float:
    """Mean over samples of the squared error norm, plus ``l2 * sum ||W||^2``."""
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {label.shape}")
    if pred.ndim == 1:
        pred, label = pred[None], label[None]
    diff = label - pred
    return float(np.sum(diff * diff)) / pred.shape[0] + l2_penalty(net)


def backward(net: Mlp, cache: ForwardCache, label) -> list[np.ndarray]:
    """Gradients of :func:`loss_mse_l2` in :meth:`Mlp.parameters` order."""
    if cache is None or cache.version != net.version or cache.consumed:
        raise ValueError("stale forward cache: run forward in train mode on this batch first")
    cache.consumed = True
    acts = cache.activations
    pred = acts[-1]
    label = np.asarray(label, dtype=np.float64).reshape(pred.shape)
    grads = Gradients(np.empty_like(net.flat), [p.shape for p in net.parameters()])
    d = (2.0 / pred.shape[0]) * (pred - label)
    for i in range(len(net.layers) - 1, -1, -1):
        if net.layers[i].activation == "relu":
            d = kernels.relu_backward(d, acts[i + 1])
        w = net.weights[i]
        gw = grads[2 + 2 * i]
        np.matmul(acts[i].T, d, out=gw)
        if net.l2:
            gw += (2.0 * net.l2) * w
        np.sum(d, axis=0, out=grads[3 + 2 * i])
        d = d @ w.T
    grads[0][...], grads[1][...] = kernels.bn_backward_params(d, cache.xhat)
    return grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.99
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None  # first moments, flat like Mlp.flat
    v: np.ndarray | None = None

    @classmethod
    def for_net(cls, net: Mlp, lr: float = 1e-3, **kw) -> "AdamState":
        st = cls(lr=lr, **kw)
        st.m = np.zeros_like(net.flat)
        st.v = np.zeros_like(net.flat)
        return st


def adam_step(net: Mlp, grads, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``net`` and ``state``."""
    params = net.parameters()
    if len(grads) != len(params):
        raise ValueError("gradient list does not match the parameters")
    flat_g = getattr(grads, "flat", None)
    if flat_g is None:
        for name, p, g in zip(net.parameter_names(), params, grads):
            if np.shape(g) != p.shape:
                raise ValueError(f"gradient for {name} has shape {np.shape(g)}, expected {p.shape}")
        flat_g = np.concatenate([np.asarray(g, dtype=np.float64).reshape(-1) for g in grads])
    if not np.all(np.isfinite(flat_g)):
        names = [n for n, g in zip(net.parameter_names(), grads) if not np.all(np.isfinite(g))]
        raise TrainingDivergence(f"non-finite gradient for {', '.join(names)} at step {state.step + 1}")
    if not isinstance(state.m, np.ndarray) or state.m.shape != net.flat.shape:
        state.m = np.zeros_like(net.flat)
        state.v = np.zeros_like(net.flat)
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    kernels.adam_update(net.flat, flat_g, state.m, state.v,
                        state.lr, state.beta1, state.beta2, state.eps, bc1, bc2)
    net.version += 1


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_parameter: str
    passed: bool
    n_checked: int


def _train_loss(net: Mlp, x, label) -> float:
    pred, _ = forward(net, x, "train", update_stats=False)
    return loss_mse_l2(pred, label, net)


def grad_check(net: Mlp, batch, label, fd_step: float = 1e-5, tolerance: float = 1e-4,
               backward_fn=None) -> GradCheckReport:
    """Compare backprop against central finite differences, entry by entry.

    ``backward_fn`` replaces :func:`backward` (used to feed deliberately
    broken gradients in negative-control tests).
    """
    net = net.copy()
    backward_fn = backward_fn or backward
    _, cache = forward(net, batch, "train", update_stats=False)
    analytic = backward_fn(net, cache, label)
    worst, worst_name, count = 0.0, "", 0
    for name, p, g in zip(net.parameter_names(), net.parameters(), analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + fd_step
            up = _train_loss(net, batch, label)
            flat[k] = orig - fd_step
            down = _train_loss(net, batch, label)
            flat[k] = orig
            numeric = (up - down) / (2.0 * fd_step)
            err = abs(numeric - gflat[k]) / max(abs(numeric), abs(gflat[k]), 1e-8)
            count += 1
            if err > worst:
                worst, worst_name = err, f"{name}[{k}]"
    return GradCheckReport(worst, worst_name, worst < tolerance, count)


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(net: Mlp, path, arch: str = "mlp", n: int = 0) -> None:
    """Plain-text checkpoint; floats are written with ``repr`` so reload is bit-exact."""
    lines = [CHECKPOINT_MAGIC, f"arch {arch}", f"n {n}", f"layers {len(net.layers)}"]
    lines += [f"layer {s.in_dim} {s.out_dim} {s.activation}" for s in net.layers]
    lines += [f"l2 {net.l2!r}", f"bn_momentum {net.bn.momentum!r}", f"bn_eps {net.bn.eps!r}"]
    arrays = [net.bn.gamma, net.bn.beta, net.bn.running_mean, net.bn.running_var]
    for w, b in zip(net.weights, net.biases):
        arrays += [w, b]
    values = np.concatenate([a.reshape(-1) for a in arrays])
    lines.append(f"values {values.size}")
    lines += [repr(float(v)) for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Read a checkpoint; returns ``(net, arch, n)``."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    it = iter(text[1:])

    def field_(key):
        parts = next(it).split()
        if parts[0] != key:
            raise ValueError(f"{path}: expected {key!r}, found {parts[0]!r}")
        return parts[1:]

    arch = field_("arch")[0]
    n = int(field_("n")[0])
    n_layers = int(field_("layers")[0])
    layers = []
    for _ in range(n_layers):
        i, o, act = field_("layer")
        layers.append(LayerSpec(int(i), int(o), act))
    l2 = float(field_("l2")[0])
    momentum = float(field_("bn_momentum")[0])
    eps = float(field_("bn_eps")[0])
    count = int(field_("values")[0])
    values = np.array([float(v) for v in it if v.strip()], dtype=np.float64)
    if values.size != count:
        raise ValueError(f"{path}: expected {count} values, found {values.size}")
    d0 = layers[0].in_dim
    shapes = [(d0,)] * 4
    for s in layers:
        shapes += [(s.in_dim, s.out_dim), (s.out_dim,)]
    if sum(math.prod(s) for s in shapes) != count:
        raise ValueError(f"{path}: value count does not match the layer layout")
    arrays, pos = [], 0
    for s in shapes:
        k = math.prod(s)
        arrays.append(values[pos:pos + k].reshape(s).copy())
        pos += k
    bn = BatchNormState(arrays[0], arrays[1], arrays[2], arrays[3], momentum, eps)
    net = Mlp(layers, arrays[4::2], arrays[5::2], bn, l2)
    return net, arch, n
