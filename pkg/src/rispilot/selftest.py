"""Fast property suite behind ``rispilot selftest``."""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _pykernels, kernels
from .analysis import ResourceModel, complexity_table, energy_accounting
from .channel import ChannelConfig, compose_channel, draw_realization
from .estimators import cancel_pilot, zf_equalize
from .models import CeNet, FusNet, complex_to_real, load_model, real_to_complex
from .neuralnet import backward, grad_check
from .waveform import (PowerSplit, complex_noise, qpsk_demodulate, qpsk_modulate, random_bits,
                       snr_to_noise_var, zadoff_chu)


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _zc_unit_modulus(rng):
    worst = max(np.max(np.abs(np.abs(zadoff_chu(n, r)) - 1.0))
                for n, r in ((32, 1), (64, 1), (31, 2), (139, 5)))
    return worst < 1e-9, f"max | |x|-1 | = {worst:.2e}"


def _zc_autocorrelation(rng):
    worst = 0.0
    for n, r in ((32, 1), (64, 3), (31, 2), (139, 5)):
        x = zadoff_chu(n, r)
        for shift in range(1, n):
            worst = max(worst, abs(np.vdot(x, np.roll(x, shift))) / n)
    return worst < 1e-9, f"max off-peak |r| / N = {worst:.2e}"


def _reshape_bijection(rng):
    v = rng.standard_normal((50, 32)) + 1j * rng.standard_normal((50, 32))
    r = rng.standard_normal((50, 64))
    ok = np.array_equal(real_to_complex(complex_to_real(v)), v) and np.array_equal(complex_to_real(real_to_complex(r)), r)
    return ok, "complex->real->complex and real->complex->real exact"


def _compose_bruteforce(rng):
    cfg = ChannelConfig(phase_mode="uniform-random")
    worst = 0.0
    for _ in range(50):
        ch = draw_realization(cfg, rng)
        ref = np.array([ch.h_direct[k] + sum(ch.phase_shifts[g] * ch.h_tx_ris[g, k] * ch.h_ris_rx[g, k]
                                             for g in range(cfg.n_subsurfaces))
                        for k in range(cfg.n_subcarriers)])
        again = compose_channel(ch.h_direct, ch.h_tx_ris, ch.h_ris_rx, ch.phase_shifts).h_composite
        worst = max(worst, np.max(np.abs(ref - ch.h_composite)), np.max(np.abs(again - ch.h_composite)))
    return worst < 1e-12, f"max deviation {worst:.2e}"


def _noise_calibration(rng):
    worst = 0.0
    for snr in (0.0, 9.0, 18.0):
        nv = snr_to_noise_var(snr)
        w = complex_noise(200_000, nv, rng)
        worst = max(worst, abs(np.mean(np.abs(w) ** 2) / nv - 1.0))
    return worst < 0.01, f"worst relative error {worst:.4f}"


def _qpsk_awgn_ber(rng):
    details, ok = [], True
    for snr in (0.0, 4.0, 8.0):
        nv = snr_to_noise_var(snr)
        bits = random_bits(400_000, rng)
        s = qpsk_modulate(bits) + complex_noise(200_000, nv, rng)
        measured = float(np.mean(qpsk_demodulate(s) != bits))
        p = 0.5 * math.erfc(1.0 / math.sqrt(2.0 * nv))  # Q(1 / sigma)
        tol = 3.0 * math.sqrt(p * (1 - p) / bits.size)
        ok &= abs(measured - p) <= tol
        details.append(f"{snr:g} dB: {measured:.5f} vs {p:.5f}")
    return ok, "; ".join(details)


def _grad_check(kind, backward_fn):
    def check(rng):
        model = (CeNet if kind == "ce" else FusNet).initialize(2, rng)
        # random biases keep every pre-activation off the ReLU kink
        for b in model.net.biases:
            b[...] = 0.1 * rng.standard_normal(b.shape)
        x = rng.standard_normal((6, model.net.in_dim))
        t = rng.standard_normal((6, model.net.out_dim))
        rep = grad_check(model.net, x, t, backward_fn=backward_fn)
        return rep.passed, f"max rel err {rep.max_rel_err:.2e} at {rep.worst_parameter}"
    return check


def _perfect_csi(rng):
    cfg = ChannelConfig()
    split = PowerSplit()
    x_p = zadoff_chu(cfg.n_subcarriers)
    worst = 0.0
    for _ in range(1000):
        h = draw_realization(cfg, rng).h_composite
        x_d = qpsk_modulate(random_bits(2 * cfg.n_subcarriers, rng))
        y = h * (split.pilot_amp * x_p + split.data_amp * x_d)
        s = cancel_pilot(zf_equalize(y, h), x_p, split)
        worst = max(worst, np.max(np.abs(s - split.data_amp * x_d)))
    return worst < 1e-12, f"max |s - sqrt((1-lam)P) x_d| = {worst:.2e}"


def _complexity(rng):
    got = {(r.n, r.method): r.value for r in complexity_table([32, 64])}
    want = {(32, "proposed"): 86016, (32, "MMSE-CE+MMSE-SD"): 200768,
            (64, "proposed"): 344064, (64, "MMSE-CE+MMSE-SD"): 1589376}
    return got == want, str(sorted(got.items()))


def _energy(rng):
    rep = energy_accounting(ResourceModel(32, 32, 1.0, 1.0, 0.15))
    ok = (rep.e_nonsup, rep.e_prop, rep.bw_nonsup, rep.bw_prop) == (64, 32, 64, 32)
    return ok, f"E {rep.e_nonsup}T0P vs {rep.e_prop}T0P, BW {rep.bw_nonsup}T0 vs {rep.bw_prop}T0"


def _checkpoint(rng):
    model = CeNet.initialize(4, rng)
    x = rng.standard_normal((5, 8))
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "ce.ckpt"
        model.save(p)
        back = load_model(p, expect="ce-net", n=4)
    return np.array_equal(model.net(x), back.net(x)), "save -> load -> infer bit-identical"


def _backends(rng):
    z = rng.standard_normal((7, 5))
    b = rng.standard_normal(5)
    g, be = rng.standard_normal(5), rng.standard_normal(5)
    checks = [
        np.array_equal(kernels.bias_relu(z.copy(), b), _pykernels.bias_relu(z.copy(), b)),
        all(np.allclose(a, c, rtol=1e-13, atol=1e-13) for a, c in
            zip(kernels.bn_forward_train(z, g, be, 1e-5), _pykernels.bn_forward_train(z, g, be, 1e-5))),
    ]
    return all(checks), f"active backend: {kernels.BACKEND}"


def _config_roundtrip(rng):
    from .config import ExperimentConfig, dump_config, parse_config
    cfg = ExperimentConfig().with_seed(12345)
    return parse_config(dump_config(cfg)) == cfg, "parse(dump(cfg)) == cfg"


def _broken_backward(net, cache, label):
    grads = backward(net, cache, label)
    grads[-2] *= 1.5
    return grads


def properties(corrupt_backward: bool = False) -> list:
    bwd = _broken_backward if corrupt_backward else None
    return [
        ("zadoff_chu_unit_modulus", _zc_unit_modulus),
        ("zadoff_chu_zero_autocorrelation", _zc_autocorrelation),
        ("reshape_bijection", _reshape_bijection),
        ("compose_channel_bruteforce", _compose_bruteforce),
        ("noise_variance_calibration", _noise_calibration),
        ("qpsk_awgn_ber_closed_form", _qpsk_awgn_ber),
        ("grad_check_ce_net", _grad_check("ce", bwd)),
        ("grad_check_fus_net", _grad_check("fus", bwd)),
        ("perfect_csi_oracle", _perfect_csi),
        ("complexity_table_exact", _complexity),
        ("energy_accounting_exact", _energy),
        ("checkpoint_roundtrip", _checkpoint),
        ("kernel_backend_equivalence", _backends),
        ("config_roundtrip", _config_roundtrip),
    ]


def run_selftest(seed: int = 0, corrupt_backward: bool = False) -> list:
    results = []
    for i, (name, fn) in enumerate(properties(corrupt_backward)):
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failure of that property, not of the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(PropertyResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
