"""Pure-numpy implementations of the fused kernels.

Signatures mirror ``_ckernels``; arrays passed for in-place update must be
C-contiguous float64 (complex128 for the receiver kernels).
"""

import numpy as np


def adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def bias_relu(z, b):
    z += b
    np.maximum(z, 0.0, out=z)
    return z


def bias_add(z, b):
    z += b
    return z


def relu_backward(dout, act):
    dout[act <= 0.0] = 0.0
    return dout


def bn_forward_train(x, gamma, beta, eps):
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    out = xhat * gamma + beta
    return out, xhat, mean, var


def bn_forward_infer(x, gamma, beta, running_mean, running_var, eps):
    scale = gamma / np.sqrt(running_var + eps)
    return (x - running_mean) * scale + beta


def bn_backward_params(dout, xhat):
    return (dout * xhat).sum(axis=0), dout.sum(axis=0)


def zf_cancel(y, h, pilot_term, eps):
    """``y / h - pilot_term`` with subcarriers where ``|h| <= eps`` zeroed."""
    erased = np.abs(h) <= eps
    s = np.where(erased, 0.0, y / np.where(erased, 1.0, h))
    return s - pilot_term, erased


class FrameReceiver:
    """Single-frame deployed receiver with parameters snapshotted at construction.

    ``run(y)`` returns the 2N detected bits of one frame; ``soft`` (optional,
    complex length N) receives the FUS-Net output.
    """

    def __init__(self, x_p, ls_scale, pilot_term, ce_bn, ce_layers, fus_bn, fus_layers, eps):
        self.x_p = np.array(x_p, dtype=np.complex128)
        self.n = self.x_p.shape[0]
        self.ls_scale = float(ls_scale)
        self.pilot_term = np.array(pilot_term, dtype=np.complex128)
        self.ce_bn = [np.array(a, dtype=np.float64) for a in ce_bn]
        self.fus_bn = [np.array(a, dtype=np.float64) for a in fus_bn]
        self.ce_layers = [(np.array(w, dtype=np.float64), np.array(b, dtype=np.float64), bool(r))
                          for w, b, r in ce_layers]
        self.fus_layers = [(np.array(w, dtype=np.float64), np.array(b, dtype=np.float64), bool(r))
                           for w, b, r in fus_layers]
        if self.ce_layers[0][0].shape[0] != 2 * self.n or self.ce_layers[-1][0].shape[1] != 2 * self.n:
            raise ValueError("CE-Net dims do not match the frame length")
        if self.fus_layers[0][0].shape[0] != 4 * self.n or self.fus_layers[-1][0].shape[1] != 2 * self.n:
            raise ValueError("FUS-Net dims do not match the frame length")
        self.eps = float(eps)

    @staticmethod
    def _mlp(x, bn, layers):
        rm, scale, beta = bn
        a = (x - rm) * scale + beta
        for w, b, relu in layers:
            a = a @ w + b
            if relu:
                np.maximum(a, 0.0, out=a)
        return a

    def run(self, y, soft=None):
        y = np.asarray(y, dtype=np.complex128)
        if y.shape != (self.n,):
            raise ValueError(f"expected {self.n} subcarriers, got {y.shape}")
        n = self.n
        h_ls = y / self.x_p / self.ls_scale
        a = self._mlp(np.concatenate([h_ls.real, h_ls.imag]), self.ce_bn, self.ce_layers)
        s, _ = zf_cancel(y, a[:n] + 1j * a[n:], self.pilot_term, self.eps)
        out = self._mlp(np.concatenate([s.real, s.imag, y.real, y.imag]), self.fus_bn, self.fus_layers)
        if soft is not None:
            soft[...] = out[:n] + 1j * out[n:]
        bits = np.empty(2 * n, dtype=np.uint8)
        bits[0::2] = out[:n] < 0.0
        bits[1::2] = out[n:] < 0.0
        return bits
