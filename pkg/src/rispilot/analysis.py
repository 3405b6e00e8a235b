"""Complexity table, pilot energy/bandwidth accounting and the running-time harness."""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from threadpoolctl import threadpool_limits

from .estimators import ChannelStatistics, effective_noise_var, lmmse_filter, ls_estimate, mmse_detect
from .waveform import snr_to_noise_var

MIN_TIMED_FRAMES = 100


# -- complexity -------------------------------------------------------------

@dataclass(frozen=True)
class ComplexityRow:
    method: str
    value: int
    n: int


def proposed_flops(n: int) -> int:
    """CE-Net plus FUS-Net aggregate, ``(28N^2 + 8N) + (56N^2 - 8N) = 84N^2``."""
    return (28 * n * n + 8 * n) + (56 * n * n - 8 * n)


def mmse_chain_flops(n: int) -> int:
    """LMMSE estimation plus MMSE detection, ``6N^3 + 4N^2 + 2N``."""
    return 6 * n ** 3 + 4 * n * n + 2 * n


def complexity_table(n_values) -> list:
    rows = []
    for n in n_values:
        n = int(n)
        if n <= 0:
            raise ValueError(f"N must be positive, got {n}")
        rows.append(ComplexityRow("proposed", proposed_flops(n), n))
        rows.append(ComplexityRow("MMSE-CE+MMSE-SD", mmse_chain_flops(n), n))
    return rows


def complexity_csv(rows) -> str:
    """One line per N: ``n,proposed,mmse_chain``."""
    by_n: dict = {}
    for r in rows:
        by_n.setdefault(r.n, {})[r.method] = r.value
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n", "proposed", "mmse_chain"))
    for n, v in by_n.items():
        w.writerow((n, v["proposed"], v["MMSE-CE+MMSE-SD"]))
    return buf.getvalue()


# -- energy / bandwidth -----------------------------------------------------

@dataclass(frozen=True)
class ResourceModel:
    n_data: int
    n_pilot: int
    symbol_duration: float = 1.0
    power: float = 1.0
    lam: float = 0.15

    def __post_init__(self):
        if self.n_data < 0 or self.n_pilot < 0:
            raise ValueError("symbol counts must be non-negative")
        if not self.symbol_duration > 0 or not self.power > 0:
            raise ValueError("symbol duration and power must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")


@dataclass(frozen=True)
class EnergyReport:
    """All quantities as exact rationals; energies in joules-like units of the inputs."""

    e_nonsup: Fraction
    e_prop: Fraction
    e_saved: Fraction
    bw_nonsup: Fraction
    bw_prop: Fraction
    bw_saved: Fraction


def energy_accounting(model: ResourceModel) -> EnergyReport:
    """Orthogonal-pilot frame versus a superimposed-pilot frame carrying the same data.

    Inputs are converted to exact rationals, so the identity
    ``e_saved = Nd T0 lam P + Np T0 (1-lam) P`` holds exactly.
    """
    nd, np_ = Fraction(model.n_data), Fraction(model.n_pilot)
    t0, p, lam = Fraction(model.symbol_duration), Fraction(model.power), Fraction(model.lam)
    e_nonsup = (nd + np_) * t0 * p
    e_prop = nd * t0 * (1 - lam) * p + np_ * t0 * lam * p
    bw_nonsup = (nd + np_) * t0
    bw_prop = nd * t0
    return EnergyReport(e_nonsup, e_prop, e_nonsup - e_prop, bw_nonsup, bw_prop, bw_nonsup - bw_prop)


def _sym(coef: Fraction, unit: str) -> str:
    c = str(coef.numerator) if coef.denominator == 1 else str(coef)
    return f"{c}{unit}"


def energy_csv(model: ResourceModel) -> str:
    """Symbolic quantities in units of ``T0`` and ``P`` next to their numeric values."""
    unit = energy_accounting(replace_units(model))
    num = energy_accounting(model)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("quantity", "symbolic", "value", "n_data", "n_pilot", "lambda"))
    for name, u in (("e_nonsup", "T0P"), ("e_prop", "T0P"), ("e_saved", "T0P"),
                    ("bw_nonsup", "T0"), ("bw_prop", "T0"), ("bw_saved", "T0")):
        w.writerow((name, _sym(getattr(unit, name), u), repr(float(getattr(num, name))),
                    model.n_data, model.n_pilot, repr(float(model.lam))))
    return buf.getvalue()


def replace_units(model: ResourceModel) -> ResourceModel:
    return ResourceModel(model.n_data, model.n_pilot, 1.0, 1.0, model.lam)


# -- running time -----------------------------------------------------------

@dataclass(frozen=True)
class RuntimeReport:
    t_proposed: float     # median seconds per frame
    t_mmse_chain: float
    n_frames: int
    repetitions: int

    @property
    def ratio(self) -> float:
        return self.t_proposed / self.t_mmse_chain


def _mmse_frame(y, x_p, split, stats, noise_var, eff):
    # the filter is rebuilt per frame, as a receiver tracking the noise level would
    w = lmmse_filter(stats.cov, eff, split.pilot_power)
    h = stats.mean + w @ (ls_estimate(y, x_p, split) - stats.mean)
    return mmse_detect(y, h, x_p, split, noise_var)


def runtime_bench(pair, sys_cfg, frames_y, snr_db: float = 12.0, repetitions: int = 5,
                  stats: ChannelStatistics | None = None) -> RuntimeReport:
    """Median per-frame wall-clock of both receivers on identical frames, one BLAS thread.

    Frames are processed one at a time, as a receiver would see them. The
    proposed chain runs through :func:`~rispilot.pipeline.compile_receiver`
    on the active kernel backend; the MMSE chain solves its filter per frame.
    """
    from .pipeline import compile_receiver

    frames_y = np.asarray(frames_y, dtype=complex)
    n_frames = frames_y.shape[0]
    if n_frames < MIN_TIMED_FRAMES:
        raise ValueError(f"need at least {MIN_TIMED_FRAMES} frames for a stable timing, got {n_frames}")
    if repetitions < 1:
        raise ValueError("repetitions must be positive")
    split = sys_cfg.split
    x_p = sys_cfg.pilot
    if stats is None:
        stats = ChannelStatistics.calibrate(sys_cfg.channel, 2000, np.random.default_rng(0))
    nv = snr_to_noise_var(snr_db, split.total_power)
    eff = effective_noise_var(split, nv, stats.mean_power)
    rx = compile_receiver(pair.ce, pair.fus, sys_cfg)
    t_prop, t_mmse = [], []
    with threadpool_limits(limits=1):
        # warm-up
        for y in frames_y[:10]:
            rx.run(y)
            _mmse_frame(y, x_p, split, stats, nv, eff)
        for _ in range(repetitions):
            t0 = time.perf_counter()
            for y in frames_y:
                rx.run(y)
            t1 = time.perf_counter()
            for y in frames_y:
                _mmse_frame(y, x_p, split, stats, nv, eff)
            t2 = time.perf_counter()
            t_prop.append((t1 - t0) / n_frames)
            t_mmse.append((t2 - t1) / n_frames)
    return RuntimeReport(statistics.median(t_prop), statistics.median(t_mmse), n_frames, repetitions)


def runtime_csv(reports: dict) -> str:
    """``reports`` maps G to a RuntimeReport."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("G", "n_frames", "repetitions", "t_proposed_s", "t_mmse_chain_s", "ratio"))
    for g, r in reports.items():
        w.writerow((g, r.n_frames, r.repetitions, repr(r.t_proposed), repr(r.t_mmse_chain), repr(r.ratio)))
    return buf.getvalue()
