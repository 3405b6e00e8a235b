"""Dataset generation, two-stage training, the online receiver chain and
Monte-Carlo NMSE/BER sweeps.

Every simulated sample owns a random stream derived from
``(seed, purpose, cell, snr index, sample index)``, so results do not depend
on how the work is split across worker processes.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import kernels
from .channel import ChannelConfig, draw_realization
from .estimators import (
    ZF_EPS,
    ChannelStatistics,
    cancel_pilot,
    effective_noise_var,
    lmmse_filter,
    ls_estimate,
    mmse_detect,
    zf_equalize,
)
from .models import CeNet, FusNet, complex_to_real, real_to_complex, splice_fus_input
from .neuralnet import AdamState, TrainingDivergence, backward, forward, loss_mse_l2, adam_step
from .waveform import PowerSplit, qpsk_demodulate, qpsk_modulate, random_bits, snr_to_noise_var, zadoff_chu

log = logging.getLogger(__name__)

SNR_GRID_DB = (0, 3, 6, 9, 12, 15, 18)
METHODS = ("LS-CE", "MMSE-CE", "CE-Net", "MMSE-CE+MMSE-SD", "CE-Net+ZF", "proposed")
SWEEP_HEADER = ("snr_db", "lambda", "L", "method", "nmse", "ber", "n_frames")

# stream purposes
CE_TRAIN, CE_VAL, FUS_TRAIN, FUS_VAL, SWEEP, INIT, SHUFFLE, CALIBRATE = range(1, 9)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


@dataclass(frozen=True)
class SystemConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    split: PowerSplit = field(default_factory=PowerSplit)
    zc_root: int = 1
    ls_normalized: bool = True

    @property
    def n(self) -> int:
        return self.channel.n_subcarriers

    @cached_property
    def pilot(self) -> np.ndarray:
        return zadoff_chu(self.n, self.zc_root)

    @property
    def cell_key(self) -> tuple:
        """Stream key of the (lambda, L) cell; independent of grid position."""
        return (int(round(self.split.lam * 1_000_000)), self.channel.n_taps)

    def with_cell(self, lam: float, n_taps: int) -> "SystemConfig":
        return replace(self, split=replace(self.split, lam=lam),
                       channel=replace(self.channel, n_taps=n_taps))


@dataclass(frozen=True)
class TrainConfig:
    n_train: int = 20_000
    n_val: int = 4_000
    batch: int = 80
    epochs_ce: int = 40
    epochs_fus: int = 100
    lr_ce: float = 1e-3
    lr_fus: float = 1e-3
    l2_ce: float = 1e-4
    l2_fus: float = 1e-4
    snr_grid_db: tuple = SNR_GRID_DB
    seed: int = 0

    def __post_init__(self):
        if self.n_train <= 0 or self.n_val < 0:
            raise ValueError("n_train must be positive and n_val non-negative")
        if not 0 < self.batch <= self.n_train:
            raise ValueError("batch must lie in [1, n_train]")
        if self.epochs_ce < 0 or self.epochs_fus < 0:
            raise ValueError("epoch counts must be non-negative")
        if not self.snr_grid_db:
            raise ValueError("snr grid must not be empty")

    def steps_per_epoch(self) -> int:
        return math.ceil(self.n_train / self.batch)


# -- frame simulation -------------------------------------------------------

@dataclass
class FrameBatch:
    """``n`` simulated frames stacked row-wise."""

    h: np.ndarray          # (n, N) true composite channel
    y: np.ndarray          # (n, N) received signal
    x_d: np.ndarray        # (n, N) data symbols
    bits: np.ndarray       # (n, 2N)
    snr_db: np.ndarray     # (n,)
    noise_var: np.ndarray  # (n,)

    def __len__(self) -> int:
        return self.h.shape[0]

    @staticmethod
    def concat(parts) -> "FrameBatch":
        return FrameBatch(*(np.concatenate([getattr(p, f) for p in parts])
                            for f in ("h", "y", "x_d", "bits", "snr_db", "noise_var")))


def _simulate_range(sys_cfg: SystemConfig, seed: int, key: tuple, start: int, stop: int,
                    snr_grid, noiseless: bool) -> FrameBatch:
    n = sys_cfg.n
    split = sys_cfg.split
    x_p = sys_cfg.pilot
    count = stop - start
    h = np.empty((count, n), complex)
    y = np.empty((count, n), complex)
    x_d = np.empty((count, n), complex)
    bits = np.empty((count, 2 * n), np.uint8)
    snr = np.empty(count)
    nvar = np.empty(count)
    grid = np.asarray(snr_grid, dtype=float)
    tx_pilot = split.pilot_amp * x_p
    for row, idx in enumerate(range(start, stop)):
        rng = stream(seed, *key, idx)
        ch = draw_realization(sys_cfg.channel, rng)
        b = random_bits(2 * n, rng)
        xd = qpsk_modulate(b)
        s = grid[rng.integers(grid.size)] if grid.size > 1 else grid[0]
        nv = 0.0 if noiseless else snr_to_noise_var(s, split.total_power)
        rx = ch.h_composite * (tx_pilot + split.data_amp * xd)
        if nv > 0:
            rx = rx + math.sqrt(nv / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        h[row], y[row], x_d[row], bits[row], snr[row], nvar[row] = ch.h_composite, rx, xd, b, s, nv
    return FrameBatch(h, y, x_d, bits, snr, nvar)


def simulate_frames(sys_cfg: SystemConfig, n_frames: int, seed: int, key: tuple,
                    snr_grid=SNR_GRID_DB, noiseless: bool = False, workers: int = 1) -> FrameBatch:
    """Simulate ``n_frames`` frames; SNR drawn uniformly from ``snr_grid`` per frame."""
    if workers <= 1 or n_frames < 2000:
        return _simulate_range(sys_cfg, seed, key, 0, n_frames, snr_grid, noiseless)
    bounds = np.linspace(0, n_frames, workers + 1).astype(int)
    with ProcessPoolExecutor(workers) as pool:
        futs = [pool.submit(_simulate_range, sys_cfg, seed, key, int(a), int(b), snr_grid, noiseless)
                for a, b in zip(bounds, bounds[1:]) if b > a]
        return FrameBatch.concat([f.result() for f in futs])


# -- datasets ---------------------------------------------------------------

@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    snr_db: np.ndarray
    lam: float
    seed_key: tuple = ()

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels must have the same number of rows")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def ce_features(frames: FrameBatch, sys_cfg: SystemConfig) -> np.ndarray:
    return complex_to_real(ls_estimate(frames.y, sys_cfg.pilot, sys_cfg.split, sys_cfg.ls_normalized))


def gen_ce_dataset(cfg: TrainConfig, sys_cfg: SystemConfig, n_samples: int | None = None,
                   purpose: int = CE_TRAIN, noiseless: bool = False, workers: int = 1) -> Dataset:
    """Pairs of (reshaped LS estimate, reshaped true channel) at mixed SNR."""
    n_samples = cfg.n_train if n_samples is None else n_samples
    key = (purpose,)
    frames = simulate_frames(sys_cfg, n_samples, cfg.seed, key, cfg.snr_grid_db, noiseless, workers)
    return Dataset(ce_features(frames, sys_cfg), complex_to_real(frames.h),
                   frames.snr_db, sys_cfg.split.lam, key)


def coarse_data(y, h_est, sys_cfg: SystemConfig) -> np.ndarray:
    """Zero-forcing with ``h_est`` followed by pilot cancellation."""
    s, _ = kernels.zf_cancel(np.asarray(y, complex), np.asarray(h_est, complex),
                             sys_cfg.split.pilot_amp * sys_cfg.pilot, ZF_EPS)
    return s


def gen_fus_dataset(cfg: TrainConfig, trained_ce: CeNet | None, sys_cfg: SystemConfig,
                    n_samples: int | None = None, purpose: int = FUS_TRAIN,
                    perfect_csi: bool = False, noiseless: bool = False, workers: int = 1) -> Dataset:
    """Pairs of (spliced coarse data and received signal, reshaped data symbols).

    The coarse data comes from the trained CE-Net, or from the true channel
    when ``perfect_csi`` is set.
    """
    if not perfect_csi and (trained_ce is None or not getattr(trained_ce, "trained", False)):
        raise ValueError("FUS-Net data needs a trained CE-Net; train the CE-Net first")
    n_samples = cfg.n_train if n_samples is None else n_samples
    key = (purpose,)
    frames = simulate_frames(sys_cfg, n_samples, cfg.seed, key, cfg.snr_grid_db, noiseless, workers)
    if perfect_csi:
        h_est = frames.h
    else:
        h_est = trained_ce.infer(ls_estimate(frames.y, sys_cfg.pilot, sys_cfg.split, sys_cfg.ls_normalized))
    s_d = coarse_data(frames.y, h_est, sys_cfg)
    return Dataset(splice_fus_input(s_d, frames.y), complex_to_real(frames.x_d),
                   frames.snr_db, sys_cfg.split.lam, key)


# -- training ---------------------------------------------------------------

@dataclass
class TrainResult:
    history: list  # (epoch, train_loss, val_loss); epoch 0 is the untrained net
    steps: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("epoch", "train_loss", "val_loss"))
        for epoch, tr, va in self.history:
            w.writerow((epoch, repr(float(tr)), "" if va is None else repr(float(va))))
        return buf.getvalue()


def _eval_loss(net, data: Dataset, chunk: int = 4096) -> float:
    sq = 0.0
    for a in range(0, len(data), chunk):
        pred = net(data.inputs[a:a + chunk])
        diff = data.labels[a:a + chunk] - pred
        sq += float(np.sum(diff * diff))
    return sq / len(data) + loss_mse_l2(np.zeros(1), np.zeros(1), net)


def train(model, data: Dataset, epochs: int, lr: float, batch: int, rng: np.random.Generator,
          val: Dataset | None = None, log_every: int = 0) -> TrainResult:
    """Minibatch Adam on the L2-regularized MSE loss.

    Each epoch visits every sample once in a fresh random order, in
    ``ceil(S / batch)`` steps (a trailing batch of one sample is dropped since
    batch statistics need two).
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    net = model.net if hasattr(model, "net") else model
    state = AdamState.for_net(net, lr=lr)
    history = [(0, _eval_loss(net, data), None if val is None else _eval_loss(net, val))]
    s = len(data)
    steps = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(s)
        total, seen = 0.0, 0
        for a in range(0, s, batch):
            idx = order[a:a + batch]
            if idx.size < 2:
                continue
            x = data.inputs[idx]
            t = data.labels[idx]
            pred, cache = forward(net, x, "train")
            loss = loss_mse_l2(pred, t, net)
            if not math.isfinite(loss):
                raise TrainingDivergence(f"loss became {loss} at epoch {epoch}, step {steps + 1}")
            adam_step(net, backward(net, cache, t), state)
            total += loss * idx.size
            seen += idx.size
            steps += 1
        val_loss = None if val is None else _eval_loss(net, val)
        history.append((epoch, total / seen, val_loss))
        if log_every and epoch % log_every == 0:
            log.info("epoch %d train %.5g val %s", epoch, total / seen, val_loss)
    if hasattr(model, "net"):
        model.trained = True
    return TrainResult(history, steps)


@dataclass
class TrainedPair:
    ce: CeNet
    fus: FusNet
    ce_result: TrainResult
    fus_result: TrainResult


def cell_seed(seed: int, sys_cfg: SystemConfig) -> int:
    return int(np.random.SeedSequence([seed, *sys_cfg.cell_key]).generate_state(1, np.uint64)[0])


def train_pair(cfg: TrainConfig, sys_cfg: SystemConfig, workers: int = 1) -> TrainedPair:
    """CE-Net first, then FUS-Net on features produced by the trained CE-Net."""
    n = sys_cfg.n
    cfg_cell = replace(cfg, seed=cell_seed(cfg.seed, sys_cfg))
    ce = CeNet.initialize(n, stream(cfg_cell.seed, INIT, 0), cfg.l2_ce)
    fus = FusNet.initialize(n, stream(cfg_cell.seed, INIT, 1), cfg.l2_fus)
    ce_train = gen_ce_dataset(cfg_cell, sys_cfg, cfg.n_train, CE_TRAIN, workers=workers)
    ce_val = gen_ce_dataset(cfg_cell, sys_cfg, cfg.n_val, CE_VAL, workers=workers) if cfg.n_val else None
    log.info("training CE-Net (N=%d, lambda=%g, L=%d)", n, sys_cfg.split.lam, sys_cfg.channel.n_taps)
    ce_res = train(ce, ce_train, cfg.epochs_ce, cfg.lr_ce, cfg.batch, stream(cfg_cell.seed, SHUFFLE, 0), ce_val)
    fus_train = gen_fus_dataset(cfg_cell, ce, sys_cfg, cfg.n_train, FUS_TRAIN, workers=workers)
    fus_val = gen_fus_dataset(cfg_cell, ce, sys_cfg, cfg.n_val, FUS_VAL, workers=workers) if cfg.n_val else None
    log.info("training FUS-Net")
    fus_res = train(fus, fus_train, cfg.epochs_fus, cfg.lr_fus, cfg.batch, stream(cfg_cell.seed, SHUFFLE, 1), fus_val)
    return TrainedPair(ce, fus, ce_res, fus_res)


# -- online receiver ----------------------------------------------------------

@dataclass
class TestPhaseOutput:
    __test__ = False  # not a pytest class

    h_ls: np.ndarray
    h_ce: np.ndarray
    s_coarse: np.ndarray
    s_fus: np.ndarray
    bits: np.ndarray


def run_test_phase(ce: CeNet, fus: FusNet, y, sys_cfg: SystemConfig, trace: list | None = None) -> TestPhaseOutput:
    """The deployed receiver: LS, CE-Net, ZF, pilot cancellation, FUS-Net, slicer.

    ``y`` may hold one frame or a batch of frames. When ``trace`` is a list,
    the name of every stage is appended to it in execution order.
    """
    y = np.asarray(y, dtype=complex)
    n = sys_cfg.n
    if ce.n != n or fus.n != n or y.shape[-1] != n:
        raise ValueError(f"subcarrier mismatch: CE-Net N={ce.n}, FUS-Net N={fus.n}, frame N={y.shape[-1]}")
    note = trace.append if trace is not None else (lambda _s: None)
    h_ls = ls_estimate(y, sys_cfg.pilot, sys_cfg.split, sys_cfg.ls_normalized)
    note("ls_estimate")
    h_ls_real = complex_to_real(h_ls)
    note("to_real")
    h_ce_real = ce.net(h_ls_real.reshape(-1, 2 * n))
    note("ce_net")
    h_ce = real_to_complex(h_ce_real).reshape(y.shape)
    note("to_complex")
    s_zf = zf_equalize(y, h_ce)
    note("zf_equalize")
    s_d = cancel_pilot(s_zf, sys_cfg.pilot, sys_cfg.split)
    note("cancel_pilot")
    s_in = splice_fus_input(s_d, y)
    note("splice")
    s_fus = fus.infer(s_in)
    note("fus_net")
    bits = qpsk_demodulate(s_fus)
    note("demodulate")
    return TestPhaseOutput(h_ls, h_ce, s_d, s_fus, bits)


def _bound_mlp(model):
    net = model.net
    bn = net.bn
    scale = bn.gamma / np.sqrt(bn.running_var + bn.eps)
    layers = [(w, b, spec.activation == "relu") for spec, w, b in zip(net.layers, net.weights, net.biases)]
    return (bn.running_mean, scale, bn.beta), layers


def compile_receiver(ce: CeNet, fus: FusNet, sys_cfg: SystemConfig):
    """Bind both networks into a single-frame receiver on the active kernel backend.

    Same chain as :func:`run_test_phase`; parameters are copied, so later
    training does not affect the returned object.
    """
    n = sys_cfg.n
    if ce.n != n or fus.n != n:
        raise ValueError(f"subcarrier mismatch: CE-Net N={ce.n}, FUS-Net N={fus.n}, system N={n}")
    split = sys_cfg.split
    ls_scale = split.pilot_amp if sys_cfg.ls_normalized else 1.0
    if ls_scale == 0:
        raise ValueError("normalized LS needs non-zero pilot power")
    ce_bn, ce_layers = _bound_mlp(ce)
    fus_bn, fus_layers = _bound_mlp(fus)
    return kernels.FrameReceiver(sys_cfg.pilot, ls_scale, split.pilot_amp * sys_cfg.pilot,
                                 ce_bn, ce_layers, fus_bn, fus_layers, ZF_EPS)


# -- metrics ----------------------------------------------------------------

def nmse(h_hat, h) -> float | np.ndarray:
    """``||h_hat - h||^2 / ||h||^2`` along the last axis."""
    h_hat = np.asarray(h_hat)
    h = np.asarray(h)
    den = np.sum(np.abs(h) ** 2, axis=-1)
    if np.any(den == 0):
        raise ValueError("NMSE undefined for an all-zero channel")
    out = np.sum(np.abs(h_hat - h) ** 2, axis=-1) / den
    return float(out) if np.ndim(out) == 0 else out


def ber(bits_hat, bits) -> float:
    bits_hat = np.asarray(bits_hat)
    bits = np.asarray(bits)
    if bits_hat.shape != bits.shape:
        raise ValueError(f"bit vector shapes differ: {bits_hat.shape} vs {bits.shape}")
    if bits.size == 0:
        raise ValueError("empty bit vectors")
    return float(np.count_nonzero(bits_hat != bits)) / bits.size


def qfunc(x):
    return 0.5 * np.vectorize(math.erfc)(np.asarray(x, dtype=float) / math.sqrt(2.0))


def known_channel_ber(h, noise_var, split: PowerSplit) -> float:
    """Expected QPSK bit error rate of ZF plus pilot cancellation with the true channel.

    Each subcarrier contributes ``Q(sqrt((1-lam) P) |h| / sigma)``.
    """
    h = np.asarray(h)
    sigma = np.sqrt(np.asarray(noise_var, dtype=float))
    if sigma.ndim:
        sigma = sigma[:, None]
    return float(np.mean(qfunc(split.data_amp * np.abs(h) / sigma)))


# -- sweeps -----------------------------------------------------------------

@dataclass
class SweepRow:
    snr_db: float
    lam: float
    n_taps: int
    method: str
    nmse: float
    ber: float
    n_frames: int


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in self.rows:
            w.writerow((_fmt(r.snr_db), _fmt(r.lam), r.n_taps, r.method,
                        repr(float(r.nmse)), repr(float(r.ber)), r.n_frames))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepReport":
        rd = csv.DictReader(io.StringIO(text))
        if tuple(rd.fieldnames or ()) != SWEEP_HEADER:
            raise ValueError(f"unexpected sweep header {rd.fieldnames}")
        return cls([SweepRow(float(r["snr_db"]), float(r["lambda"]), int(r["L"]), r["method"],
                             float(r["nmse"]), float(r["ber"]), int(r["n_frames"])) for r in rd])

    def get(self, method: str, snr_db: float, lam: float, n_taps: int) -> SweepRow:
        for r in self.rows:
            if (r.method == method and r.snr_db == snr_db and r.lam == lam and r.n_taps == n_taps):
                return r
        raise KeyError((method, snr_db, lam, n_taps))


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def sweep_cells(lambda_grid, taps_grid, base_lambda: float, base_taps: int, mode: str = "axes"):
    """(lambda, L) cells: one axis varied at a time around the base point, or the full grid."""
    if mode == "grid":
        return [(lam, taps) for lam in lambda_grid for taps in taps_grid]
    if mode != "axes":
        raise ValueError(f"unknown sweep mode {mode!r}")
    cells = [(lam, base_taps) for lam in lambda_grid]
    cells += [(base_lambda, taps) for taps in taps_grid if (base_lambda, taps) not in cells]
    return cells


def evaluate_cell(pair: TrainedPair | None, sys_cfg: SystemConfig, snr_grid, n_frames: int, seed: int,
                  methods=METHODS, stats: ChannelStatistics | None = None,
                  workers: int = 1) -> list:
    """NMSE/BER rows for one (lambda, L) cell over ``snr_grid``."""
    split = sys_cfg.split
    x_p = sys_cfg.pilot
    lam, taps = split.lam, sys_cfg.channel.n_taps
    cseed = cell_seed(seed, sys_cfg)
    need_nets = any(m in ("CE-Net", "CE-Net+ZF", "proposed") for m in methods)
    if need_nets and pair is None:
        raise ValueError("network methods need a trained CE-Net/FUS-Net pair")
    if stats is None and any(m.startswith("MMSE") for m in methods):
        stats = ChannelStatistics.calibrate(sys_cfg.channel, 10_000, stream(cseed, CALIBRATE))
    rows = []
    for si, snr in enumerate(snr_grid):
        fr = simulate_frames(sys_cfg, n_frames, cseed, (SWEEP, si), (snr,), workers=workers)
        nv = snr_to_noise_var(snr, split.total_power)
        h_ls = ls_estimate(fr.y, x_p, split, sys_cfg.ls_normalized)
        results = {}
        if "LS-CE" in methods:
            results["LS-CE"] = (h_ls, cancel_pilot(zf_equalize(fr.y, h_ls), x_p, split))
        if "MMSE-CE" in methods or "MMSE-CE+MMSE-SD" in methods:
            w = lmmse_filter(stats.cov, effective_noise_var(split, nv, stats.mean_power), split.pilot_power)
            h_mmse = stats.mean + (ls_estimate(fr.y, x_p, split) - stats.mean) @ w.T
            if "MMSE-CE" in methods:
                results["MMSE-CE"] = (h_mmse, cancel_pilot(zf_equalize(fr.y, h_mmse), x_p, split))
            if "MMSE-CE+MMSE-SD" in methods:
                results["MMSE-CE+MMSE-SD"] = (h_mmse, mmse_detect(fr.y, h_mmse, x_p, split, nv))
        if need_nets:
            out = run_test_phase(pair.ce, pair.fus, fr.y, sys_cfg)
            for m in ("CE-Net", "CE-Net+ZF"):
                results[m] = (out.h_ce, out.s_coarse)
            results["proposed"] = (out.h_ce, out.s_fus)
        for m in methods:
            h_est, s_hat = results[m]
            rows.append(SweepRow(snr, lam, taps, m, float(np.mean(nmse(h_est, fr.h))),
                                 ber(qpsk_demodulate(s_hat), fr.bits), n_frames))
    return rows


def evaluate_sweep(pairs: dict, base: SystemConfig, snr_grid, cells, n_frames: int, seed: int,
                   methods=METHODS, workers: int = 1) -> SweepReport:
    """Run every cell; ``pairs`` maps ``(lambda, L)`` to its trained networks."""
    report = SweepReport()
    for lam, taps in cells:
        sys_cell = base.with_cell(lam, taps)
        report.rows += evaluate_cell(pairs.get((lam, taps)), sys_cell, snr_grid, n_frames, seed,
                                     methods=methods, workers=workers)
    return report
