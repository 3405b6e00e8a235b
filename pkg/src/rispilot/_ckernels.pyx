# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused kernels; same signatures as ``_pykernels``."""

import numpy as np

from libc.math cimport sqrt, hypot


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps,
                double bc1, double bc2):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi, mi, vi
    cdef double c1 = 1.0 - beta1, c2 = 1.0 - beta2
    if g.shape[0] != n or m.shape[0] != n or v.shape[0] != n:
        raise ValueError("adam_update: length mismatch")
    with nogil:
        for i in range(n):
            gi = g[i]
            mi = beta1 * m[i] + c1 * gi
            vi = beta2 * v[i] + c2 * (gi * gi)
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / bc1) / (sqrt(vi / bc2) + eps)


def bias_relu(z_arr, double[::1] b):
    cdef double[:, ::1] z = z_arr
    cdef Py_ssize_t i, j, rows = z.shape[0], cols = z.shape[1]
    cdef double t
    if b.shape[0] != cols:
        raise ValueError("bias_relu: bias length mismatch")
    with nogil:
        for i in range(rows):
            for j in range(cols):
                t = z[i, j] + b[j]
                z[i, j] = t if t > 0.0 else 0.0
    return z_arr


def bias_add(z_arr, double[::1] b):
    cdef double[:, ::1] z = z_arr
    cdef Py_ssize_t i, j, rows = z.shape[0], cols = z.shape[1]
    if b.shape[0] != cols:
        raise ValueError("bias_add: bias length mismatch")
    with nogil:
        for i in range(rows):
            for j in range(cols):
                z[i, j] += b[j]
    return z_arr


def relu_backward(dout_arr, double[:, ::1] act):
    cdef double[:, ::1] dout = dout_arr
    cdef Py_ssize_t i, j, rows = dout.shape[0], cols = dout.shape[1]
    if act.shape[0] != rows or act.shape[1] != cols:
        raise ValueError("relu_backward: shape mismatch")
    with nogil:
        for i in range(rows):
            for j in range(cols):
                if act[i, j] <= 0.0:
                    dout[i, j] = 0.0
    return dout_arr


def bn_forward_train(x_in, double[::1] gamma, double[::1] beta, double eps):
    cdef double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t i, j, rows = x.shape[0], cols = x.shape[1]
    out_a = np.empty((rows, cols))
    xhat_a = np.empty((rows, cols))
    mean_a = np.zeros(cols)
    var_a = np.zeros(cols)
    inv_a = np.empty(cols)
    cdef double[::1] inv = inv_a
    cdef double[:, ::1] out = out_a
    cdef double[:, ::1] xhat = xhat_a
    cdef double[::1] mean = mean_a
    cdef double[::1] var = var_a
    cdef double t
    with nogil:
        for i in range(rows):
            for j in range(cols):
                mean[j] += x[i, j]
        for j in range(cols):
            mean[j] /= rows
        for i in range(rows):
            for j in range(cols):
                t = x[i, j] - mean[j]
                var[j] += t * t
        for j in range(cols):
            var[j] /= rows
            inv[j] = 1.0 / sqrt(var[j] + eps)
        for i in range(rows):
            for j in range(cols):
                t = (x[i, j] - mean[j]) * inv[j]
                xhat[i, j] = t
                out[i, j] = t * gamma[j] + beta[j]
    return out_a, xhat_a, mean_a, var_a


def bn_forward_infer(x_in, double[::1] gamma, double[::1] beta,
                     double[::1] running_mean, double[::1] running_var, double eps):
    cdef double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t i, j, rows = x.shape[0], cols = x.shape[1]
    out_a = np.empty((rows, cols))
    scale_a = np.empty(cols)
    cdef double[:, ::1] out = out_a
    cdef double[::1] scale = scale_a
    with nogil:
        for j in range(cols):
            scale[j] = gamma[j] / sqrt(running_var[j] + eps)
        for i in range(rows):
            for j in range(cols):
                out[i, j] = (x[i, j] - running_mean[j]) * scale[j] + beta[j]
    return out_a


def bn_backward_params(dout_in, xhat_in):
    cdef double[:, ::1] dout = np.ascontiguousarray(dout_in, dtype=np.float64)
    cdef double[:, ::1] xhat = np.ascontiguousarray(xhat_in, dtype=np.float64)
    cdef Py_ssize_t i, j, rows = dout.shape[0], cols = dout.shape[1]
    dgamma_a = np.zeros(cols)
    dbeta_a = np.zeros(cols)
    cdef double[::1] dgamma = dgamma_a
    cdef double[::1] dbeta = dbeta_a
    with nogil:
        for i in range(rows):
            for j in range(cols):
                dgamma[j] += dout[i, j] * xhat[i, j]
                dbeta[j] += dout[i, j]
    return dgamma_a, dbeta_a


def zf_cancel(y_in, h_in, pilot_in, double eps):
    y_a = np.ascontiguousarray(y_in, dtype=np.complex128)
    shape = y_a.shape
    h_a = np.ascontiguousarray(np.broadcast_to(h_in, shape), dtype=np.complex128)
    p_a = np.ascontiguousarray(np.broadcast_to(pilot_in, shape), dtype=np.complex128)
    cdef const double complex[::1] y = y_a.reshape(-1)
    cdef const double complex[::1] h = h_a.reshape(-1)
    cdef const double complex[::1] pt = p_a.reshape(-1)
    out_a = np.empty(y.shape[0], dtype=np.complex128)
    erased_a = np.zeros(y.shape[0], dtype=np.bool_)
    cdef double complex[::1] out = out_a
    cdef unsigned char[::1] erased = erased_a.view(np.uint8)
    cdef Py_ssize_t i, n = y.shape[0]
    cdef double hr, hi
    with nogil:
        for i in range(n):
            hr = h[i].real
            hi = h[i].imag
            if hypot(hr, hi) <= eps:
                erased[i] = 1
                out[i] = 0.0 - pt[i]
            else:
                out[i] = y[i] / h[i] - pt[i]
    return out_a.reshape(shape), erased_a.reshape(shape)


cdef void _dense_stack(const double* params, const int* dims, const unsigned char* relu, int n_layers,
                       double* a, double* b) noexcept nogil:
    # runs the layers on vector ``a`` (scratch ``b``); the result ends up in ``a``
    cdef int l, i, j, n_in, n_out
    cdef Py_ssize_t off = 0
    cdef const double* w
    cdef const double* w0
    cdef const double* w1
    cdef const double* w2
    cdef const double* w3
    cdef double xi, x0, x1, x2, x3, t
    for l in range(n_layers):
        n_in = dims[l]
        n_out = dims[l + 1]
        w = params + off
        off += <Py_ssize_t>n_in * n_out
        for j in range(n_out):
            b[j] = 0.0
        # four input rows per pass over ``b`` to cut its loads and stores
        i = 0
        while i + 4 <= n_in:
            w0 = w + <Py_ssize_t>i * n_out
            w1 = w0 + n_out
            w2 = w1 + n_out
            w3 = w2 + n_out
            x0, x1, x2, x3 = a[i], a[i + 1], a[i + 2], a[i + 3]
            for j in range(n_out):
                b[j] += (x0 * w0[j] + x1 * w1[j]) + (x2 * w2[j] + x3 * w3[j])
            i += 4
        while i < n_in:
            xi = a[i]
            w0 = w + <Py_ssize_t>i * n_out
            for j in range(n_out):
                b[j] += xi * w0[j]
            i += 1
        for j in range(n_out):
            t = b[j] + params[off + j]
            a[j] = (t if t > 0.0 else 0.0) if relu[l] else t
        off += n_out


cdef class FrameReceiver:
    """Single-frame deployed receiver with parameters snapshotted at construction.

    ``run(y)`` returns the 2N detected bits of one frame; ``soft`` (optional,
    complex length N) receives the FUS-Net output.
    """

    cdef int n, n_ce, n_fus
    cdef double ls_scale, eps
    cdef double complex[::1] x_p, pilot_term
    cdef double[::1] ce_rm, ce_scale, ce_beta, fus_rm, fus_scale, fus_beta
    cdef double[::1] ce_params, fus_params, buf_a, buf_b
    cdef int[::1] ce_dims, fus_dims
    cdef unsigned char[::1] ce_relu, fus_relu

    def __init__(self, x_p, double ls_scale, pilot_term, ce_bn, ce_layers, fus_bn, fus_layers, double eps):
        self.x_p = np.ascontiguousarray(x_p, dtype=np.complex128)
        self.pilot_term = np.ascontiguousarray(pilot_term, dtype=np.complex128)
        self.n = self.x_p.shape[0]
        self.ls_scale = ls_scale
        self.eps = eps
        self.ce_rm, self.ce_scale, self.ce_beta = [np.ascontiguousarray(a, dtype=np.float64) for a in ce_bn]
        self.fus_rm, self.fus_scale, self.fus_beta = [np.ascontiguousarray(a, dtype=np.float64) for a in fus_bn]
        self.ce_params, self.ce_dims, self.ce_relu = _pack(ce_layers)
        self.fus_params, self.fus_dims, self.fus_relu = _pack(fus_layers)
        self.n_ce = self.ce_dims.shape[0] - 1
        self.n_fus = self.fus_dims.shape[0] - 1
        if self.ce_dims[0] != 2 * self.n or self.ce_dims[self.n_ce] != 2 * self.n:
            raise ValueError("CE-Net dims do not match the frame length")
        if self.fus_dims[0] != 4 * self.n or self.fus_dims[self.n_fus] != 2 * self.n:
            raise ValueError("FUS-Net dims do not match the frame length")
        width = max(max(self.ce_dims), max(self.fus_dims))
        self.buf_a = np.empty(width)
        self.buf_b = np.empty(width)

    def run(self, y_in, soft=None):
        cdef const double complex[::1] y = np.ascontiguousarray(y_in, dtype=np.complex128)
        if y.shape[0] != self.n:
            raise ValueError(f"expected {self.n} subcarriers, got {y.shape[0]}")
        bits_a = np.empty(2 * self.n, dtype=np.uint8)
        cdef unsigned char[::1] bits = bits_a
        cdef double complex[::1] soft_v
        cdef bint want_soft = soft is not None
        if want_soft:
            soft_v = soft
            if soft_v.shape[0] != self.n:
                raise ValueError("soft output has the wrong length")
        cdef int k, n = self.n
        cdef double* a = &self.buf_a[0]
        cdef double* b = &self.buf_b[0]
        cdef double complex h, s
        cdef double re, im
        with nogil:
            for k in range(n):
                h = y[k] / self.x_p[k] / self.ls_scale
                a[k] = h.real
                a[n + k] = h.imag
            for k in range(2 * n):
                a[k] = (a[k] - self.ce_rm[k]) * self.ce_scale[k] + self.ce_beta[k]
            _dense_stack(&self.ce_params[0], &self.ce_dims[0], &self.ce_relu[0], self.n_ce, a, b)
            # a[0:2n] holds the refined channel; build the FUS-Net input in b
            for k in range(n):
                re = a[k]
                im = a[n + k]
                if hypot(re, im) <= self.eps:
                    s = 0.0 - self.pilot_term[k]
                else:
                    s = y[k] / (re + 1j * im) - self.pilot_term[k]
                b[k] = s.real
                b[n + k] = s.imag
                b[2 * n + k] = y[k].real
                b[3 * n + k] = y[k].imag
            for k in range(4 * n):
                a[k] = (b[k] - self.fus_rm[k]) * self.fus_scale[k] + self.fus_beta[k]
            _dense_stack(&self.fus_params[0], &self.fus_dims[0], &self.fus_relu[0], self.n_fus, a, b)
            for k in range(n):
                bits[2 * k] = a[k] < 0.0
                bits[2 * k + 1] = a[n + k] < 0.0
                if want_soft:
                    soft_v[k] = a[k] + 1j * a[n + k]
        return bits_a


def _pack(layers):
    """``layers`` is a list of ``(weight, bias, is_relu)``; returns flat params, dims, relu flags."""
    parts, dims, relu = [], [], []
    for w, b, r in layers:
        w = np.asarray(w, dtype=np.float64)
        if not dims:
            dims.append(w.shape[0])
        elif w.shape[0] != dims[len(dims) - 1]:
            raise ValueError("layer dims do not chain")
        dims.append(w.shape[1])
        parts += [w.reshape(-1), np.asarray(b, dtype=np.float64).reshape(-1)]
        relu.append(1 if r else 0)
    return (np.ascontiguousarray(np.concatenate(parts)), np.asarray(dims, dtype=np.intc),
            np.asarray(relu, dtype=np.uint8))
