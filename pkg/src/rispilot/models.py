"""CE-Net / FUS-Net wiring and the complex <-> real reshaping around them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neuralnet import Mlp, load_checkpoint, save_checkpoint

BN_FLOPS_PER_FEATURE = 4


def complex_to_real(v) -> np.ndarray:
    """Stack ``[Re(v), Im(v)]`` along the last axis."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1).astype(np.float64)


def real_to_complex(v) -> np.ndarray:
    """Inverse of :func:`complex_to_real`: first half real, second half imaginary."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] % 2:
        raise ValueError("real vector must have even length")
    n = v.shape[-1] // 2
    return v[..., :n] + 1j * v[..., n:]


def splice_fus_input(s_coarse, y) -> np.ndarray:
    """``[Re(s_coarse), Im(s_coarse), Re(y), Im(y)]``."""
    s_coarse = np.asarray(s_coarse)
    y = np.asarray(y)
    if s_coarse.shape != y.shape:
        raise ValueError(f"length mismatch {s_coarse.shape} vs {y.shape}")
    return np.concatenate([complex_to_real(s_coarse), complex_to_real(y)], axis=-1)


class _Model:
    arch = ""
    dims_factor: tuple = ()
    activations: tuple = ()

    def __init__(self, net: Mlp, n: int):
        expected = [f * n for f in self.dims_factor]
        if net.dims != expected or [s.activation for s in net.layers] != list(self.activations):
            raise ValueError(
                f"{self.arch} for N={n} needs dims {expected} and activations "
                f"{list(self.activations)}, got {net.dims}"
            )
        self.net = net
        self.n = n
        self.trained = False

    @classmethod
    def initialize(cls, n: int, rng: np.random.Generator, l2: float = 1e-4):
        dims = [f * n for f in cls.dims_factor]
        return cls(Mlp.initialize(dims, list(cls.activations), rng, l2), n)

    def save(self, path) -> None:
        save_checkpoint(self.net, path, self.arch, self.n)

    def copy(self):
        other = type(self)(self.net.copy(), self.n)
        other.trained = self.trained
        return other


class CeNet(_Model):
    """Channel refinement network, ``2N -> 6N -> 4N -> 2N``."""

    arch = "ce-net"
    dims_factor = (2, 6, 4, 2)
    activations = ("relu", "relu", "linear")

    def infer(self, h_ls) -> np.ndarray:
        h_ls = np.asarray(h_ls)
        if h_ls.shape[-1] != self.n:
            raise ValueError(f"expected {self.n} subcarriers, got {h_ls.shape[-1]}")
        out = self.net(complex_to_real(h_ls).reshape(-1, 2 * self.n))
        return real_to_complex(out).reshape(h_ls.shape)


class FusNet(_Model):
    """Detection network fusing coarse data and the received signal, ``4N -> 8N -> 2N``."""

    arch = "fus-net"
    dims_factor = (4, 8, 2)
    activations = ("relu", "linear")

    def infer(self, s_in) -> np.ndarray:
        s_in = np.asarray(s_in, dtype=np.float64)
        if s_in.shape[-1] != 4 * self.n:
            raise ValueError(f"expected input width {4 * self.n}, got {s_in.shape[-1]}")
        out = self.net(s_in.reshape(-1, 4 * self.n))
        return real_to_complex(out).reshape(s_in.shape[:-1] + (self.n,))


def ce_net_infer(model: CeNet, h_ls) -> np.ndarray:
    return model.infer(h_ls)


def fus_net_infer(model: FusNet, s_in) -> np.ndarray:
    return model.infer(s_in)


_ARCHS = {CeNet.arch: CeNet, FusNet.arch: FusNet}


def load_model(path, expect: str | None = None, n: int | None = None):
    """Load a CE-Net or FUS-Net checkpoint and validate its architecture."""
    net, arch, file_n = load_checkpoint(path)
    if arch not in _ARCHS:
        raise ValueError(f"{path}: unknown architecture tag {arch!r}")
    if expect is not None and arch != expect:
        raise ValueError(f"{path}: expected a {expect} checkpoint, found {arch}")
    if n is not None and file_n != n:
        raise ValueError(f"{path}: checkpoint is for N={file_n}, configuration uses N={n}")
    model = _ARCHS[arch](net, file_n)
    model.trained = True
    return model


@dataclass(frozen=True)
class ComplexityCount:
    weights: int          # dense weights plus biases
    dense_weights: int    # dense weights only
    flops: int            # 2 per multiply-accumulate, plus batch norm


def count_params_flops(model) -> ComplexityCount:
    net = model.net if hasattr(model, "net") else model
    dense = sum(s.in_dim * s.out_dim for s in net.layers)
    biases = sum(s.out_dim for s in net.layers)
    flops = 2 * dense + BN_FLOPS_PER_FEATURE * net.in_dim
    return ComplexityCount(dense + biases, dense, flops)


@dataclass(frozen=True)
class ProposedComplexity:
    n: int
    stated_weights: int
    stated_flops: int
    stated_total: int
    direct_weights: int
    direct_dense_weights: int
    direct_flops: int


def proposed_complexity(n: int) -> ProposedComplexity:
    """Stated CE-Net+FUS-Net aggregates next to a direct count over the layer dims.

    The stated figures (``28N^2+8N`` weights, ``56N^2-8N`` FLOPs) do not follow
    from the layer sizes; both are reported and neither is adjusted.
    """
    rng = np.random.default_rng(0)
    ce = count_params_flops(CeNet.initialize(n, rng))
    fus = count_params_flops(FusNet.initialize(n, rng))
    w = 28 * n * n + 8 * n
    f = 56 * n * n - 8 * n
    return ProposedComplexity(
        n, w, f, w + f,
        ce.weights + fus.weights, ce.dense_weights + fus.dense_weights, ce.flops + fus.flops,
    )
