"""The ten acceptance criteria, each at its stated tolerance and time budget.

Every test prints (and records for the terminal summary) one
``criterion NN PASS|FAIL`` line before asserting.
"""

import csv
import io
import time
from pathlib import Path

import numpy as np

from conftest import run_desk
from rispilot.analysis import ResourceModel, energy_accounting, runtime_bench
from rispilot.channel import ChannelConfig, draw_realization
from rispilot.cli import CE_CKPT, FUS_CKPT, cell_dir, main
from rispilot.estimators import cancel_pilot, zf_equalize
from rispilot.models import CeNet, FusNet, load_model
from rispilot.neuralnet import grad_check
from rispilot.pipeline import (SNR_GRID_DB, SWEEP, SystemConfig, TrainedPair, run_test_phase,
                               simulate_frames)
from rispilot.selftest import run_selftest
from rispilot.waveform import PowerSplit, qpsk_modulate, random_bits, zadoff_chu

HIGH_SNR = [s for s in SNR_GRID_DB if s >= 12]


def verdict(log, num: int, ok: bool, text: str) -> None:
    line = f"criterion {num:02d} {'PASS' if ok else 'FAIL'}  {text}"
    log.append(line)
    print(line)
    assert ok, line


def read_csv(path: Path) -> list:
    return list(csv.DictReader(io.StringIO(path.read_text())))


def ordering_failures(report, lam, taps, snrs, nmse_margin: bool, ber_order: bool) -> list:
    """Human-readable list of every violated ordering in one (lambda, L) cell."""
    bad = []
    for snr in snrs:
        g = lambda m: report.get(m, snr, lam, taps)
        ls, mm, ce = g("LS-CE").nmse, g("MMSE-CE").nmse, g("CE-Net").nmse
        if not ce < mm < ls:
            bad.append(f"NMSE order at {snr} dB: CE {ce:.4g}, MMSE {mm:.4g}, LS {ls:.4g}")
        if nmse_margin and snr >= 12 and not ce <= 0.5 * mm:
            bad.append(f"NMSE margin at {snr} dB: CE {ce:.4g} > 0.5 x MMSE {mm:.4g}")
        if ber_order and snr >= 12:
            p, z, m = g("proposed").ber, g("CE-Net+ZF").ber, g("MMSE-CE+MMSE-SD").ber
            if not p < z < m:
                bad.append(f"BER order at {snr} dB: proposed {p:.5f}, CE-Net+ZF {z:.5f}, MMSE chain {m:.5f}")
    return bad


class TestAcceptance:
    def test_01_complexity_table(self, tmp_path, acceptance_log):
        t0 = time.perf_counter()
        code = main(["analyze", "--out", str(tmp_path), "--skip-runtime"])
        seconds = time.perf_counter() - t0
        rows = {int(r["n"]): (int(r["proposed"]), int(r["mmse_chain"])) for r in read_csv(tmp_path / "complexity.csv")}
        ok = code == 0 and rows == {32: (86_016, 200_768), 64: (344_064, 1_589_376)} and seconds < 1.0
        verdict(acceptance_log, 1, ok, f"complexity table {rows} in {seconds:.3f} s")

    def test_02_energy_accounting(self, tmp_path, acceptance_log):
        t0 = time.perf_counter()
        code = main(["analyze", "--out", str(tmp_path), "--skip-runtime"])
        rep = energy_accounting(ResourceModel(32, 32, 1.0, 1.0, 0.15))
        seconds = time.perf_counter() - t0
        rows = {r["quantity"]: (r["symbolic"], float(r["value"])) for r in read_csv(tmp_path / "energy.csv")}
        want = {"e_nonsup": ("64T0P", 64.0), "e_prop": ("32T0P", 32.0),
                "bw_nonsup": ("64T0", 64.0), "bw_prop": ("32T0", 32.0)}
        ok = (code == 0 and all(rows[k] == v for k, v in want.items())
              and (rep.e_nonsup, rep.e_prop, rep.bw_nonsup, rep.bw_prop) == (64, 32, 64, 32) and seconds < 1.0)
        verdict(acceptance_log, 2, ok, f"energy {rows['e_nonsup'][0]} vs {rows['e_prop'][0]}, "
                                       f"bandwidth {rows['bw_nonsup'][0]} vs {rows['bw_prop'][0]} in {seconds:.3f} s")

    def test_03_perfect_csi_oracle(self, acceptance_log):
        t0 = time.perf_counter()
        rng = np.random.default_rng(3)
        cfg, split = ChannelConfig(), PowerSplit(0.15)
        x_p = zadoff_chu(cfg.n_subcarriers)
        worst = 0.0
        for _ in range(1000):
            h = draw_realization(cfg, rng).h_composite
            x_d = qpsk_modulate(random_bits(2 * cfg.n_subcarriers, rng))
            y = h * (split.pilot_amp * x_p + split.data_amp * x_d)
            s = cancel_pilot(zf_equalize(y, h), x_p, split)
            worst = max(worst, float(np.max(np.abs(s - split.data_amp * x_d))))
        seconds = time.perf_counter() - t0
        verdict(acceptance_log, 3, worst < 1e-12 and seconds < 5.0,
                f"perfect-CSI max abs error {worst:.2e} over 1000 frames in {seconds:.2f} s")

    def test_04_gradient_check(self, acceptance_log):
        t0 = time.perf_counter()
        rng = np.random.default_rng(4)
        reports = {}
        for cls in (CeNet, FusNet):
            model = cls.initialize(2, rng)
            # random biases keep pre-activations away from the ReLU kink
            for b in model.net.biases:
                b[...] = 0.1 * rng.standard_normal(b.shape)
            x = rng.standard_normal((8, model.net.in_dim))
            t = rng.standard_normal((8, model.net.out_dim))
            reports[cls.arch] = grad_check(model.net, x, t, tolerance=1e-4)
        seconds = time.perf_counter() - t0
        ok = all(r.passed and r.max_rel_err < 1e-4 for r in reports.values()) and seconds < 30.0
        detail = ", ".join(f"{k} {r.max_rel_err:.1e}" for k, r in reports.items())
        verdict(acceptance_log, 4, ok, f"finite-difference max rel err {detail} in {seconds:.2f} s")

    def test_05_nmse_ordering(self, desk_base, acceptance_log):
        bad = ordering_failures(desk_base.report, 0.15, 5, SNR_GRID_DB, nmse_margin=True, ber_order=False)
        ok = not bad and desk_base.seconds <= 20 * 60
        r = desk_base.report
        detail = "; ".join(f"{s} dB CE {r.get('CE-Net', s, 0.15, 5).nmse:.3g} / MMSE "
                           f"{r.get('MMSE-CE', s, 0.15, 5).nmse:.3g} / LS {r.get('LS-CE', s, 0.15, 5).nmse:.3g}"
                           for s in (0, 12, 18))
        verdict(acceptance_log, 5, ok, f"desk run {desk_base.seconds / 60:.1f} min; {detail}"
                                       + (f"; violations: {bad}" if bad else ""))

    def test_06_ber_ordering(self, desk_base, acceptance_log):
        r = desk_base.report
        bad = ordering_failures(r, 0.15, 5, HIGH_SNR, nmse_margin=False, ber_order=True)
        p18 = r.get("proposed", 18, 0.15, 5).ber
        ok = not bad and p18 < 0.1
        detail = "; ".join(f"{s} dB {r.get('proposed', s, 0.15, 5).ber:.4f} < {r.get('CE-Net+ZF', s, 0.15, 5).ber:.4f}"
                           f" < {r.get('MMSE-CE+MMSE-SD', s, 0.15, 5).ber:.4f}" for s in HIGH_SNR)
        verdict(acceptance_log, 6, ok, f"BER proposed < CE-Net+ZF < MMSE chain: {detail}; "
                                       f"proposed at 18 dB {p18:.4f}" + (f"; violations: {bad}" if bad else ""))

    def test_07_robustness_grid(self, desk_grid, acceptance_log):
        cfg = desk_grid.config
        bad = []
        for lam in cfg.sweep.lambdas:
            for taps in cfg.sweep.taps:
                bad += [f"lambda={lam:g} L={taps}: {b}" for b in
                        ordering_failures(desk_grid.report, lam, taps, HIGH_SNR, nmse_margin=True, ber_order=True)]
        n_cells = len(cfg.sweep.lambdas) * len(cfg.sweep.taps)
        ok = not bad and desk_grid.seconds <= 60 * 60
        verdict(acceptance_log, 7, ok, f"{n_cells} (lambda, L) cells, orderings at >= 12 dB, "
                                       f"{desk_grid.seconds / 60:.1f} min" + (f"; violations: {bad}" if bad else ""))

    def test_08_running_time(self, desk_base, acceptance_log):
        d = cell_dir(desk_base.out, 0.15, 5)
        pair = TrainedPair(load_model(d / CE_CKPT, "ce-net", 32), load_model(d / FUS_CKPT, "fus-net", 32), None, None)
        sys_cfg = SystemConfig(desk_base.config.channel, desk_base.config.split)
        frames = simulate_frames(sys_cfg, 1000, desk_base.config.seed, (SWEEP, 12), (12,))
        rep = runtime_bench(pair, sys_cfg, frames.y, repetitions=5)
        verdict(acceptance_log, 8, rep.t_proposed < rep.t_mmse_chain,
                f"median per-frame {rep.t_proposed * 1e6:.1f} us (proposed) vs {rep.t_mmse_chain * 1e6:.1f} us "
                f"(MMSE chain), ratio {rep.ratio:.2f}, 1000 frames, 1 thread")

    def test_09_determinism(self, desk_base, tmp_path, acceptance_log, rng):
        second = run_desk(tmp_path / "again")
        same_csv = (second.out / "results.csv").read_bytes() == (desk_base.out / "results.csv").read_bytes()
        d1, d2 = cell_dir(desk_base.out, 0.15, 5), cell_dir(second.out, 0.15, 5)
        same_ckpt = all((d1 / f).read_bytes() == (d2 / f).read_bytes() for f in (CE_CKPT, FUS_CKPT))
        ce = load_model(d1 / CE_CKPT, "ce-net", 32)
        ce.save(tmp_path / "resaved.ckpt")
        back = load_model(tmp_path / "resaved.ckpt", "ce-net", 32)
        h = rng.standard_normal((50, 32)) + 1j * rng.standard_normal((50, 32))
        same_infer = np.array_equal(ce.infer(h), back.infer(h))
        y = simulate_frames(second.config.system, 50, 1, (SWEEP, 0), (12,)).y
        fus = load_model(d1 / FUS_CKPT, "fus-net", 32)
        same_rx = np.array_equal(run_test_phase(ce, fus, y, second.config.system).s_fus,
                                 run_test_phase(back, load_model(d2 / FUS_CKPT, "fus-net", 32), y,
                                                second.config.system).s_fus)
        ok = same_csv and same_ckpt and same_infer and same_rx
        verdict(acceptance_log, 9, ok, f"results.csv identical: {same_csv}; checkpoints identical: {same_ckpt}; "
                                       f"save/load/infer identical: {same_infer and same_rx}")

    def test_10_selftest(self, acceptance_log, capsys):
        t0 = time.perf_counter()
        code = main(["selftest"])
        seconds = time.perf_counter() - t0
        capsys.readouterr()
        results = {r.name: r.passed for r in run_selftest()}
        required = ("zadoff_chu_unit_modulus", "zadoff_chu_zero_autocorrelation", "reshape_bijection",
                    "compose_channel_bruteforce", "noise_variance_calibration", "qpsk_awgn_ber_closed_form")
        ok = code == 0 and all(results.get(k) for k in required) and seconds < 60.0
        verdict(acceptance_log, 10, ok, f"selftest exit {code}, {sum(results.values())}/{len(results)} "
                                        f"properties in {seconds:.1f} s")
