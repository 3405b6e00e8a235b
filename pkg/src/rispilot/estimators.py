"""Classical channel estimators and per-subcarrier equalizers.

All functions broadcast over leading axes, so a batch of frames can be
passed as ``(frames, N)`` arrays.
"""

from __future__ import annotations

import numpy as np

from .channel import ChannelConfig, draw_realization
from .waveform import PowerSplit

ZF_EPS = 1e-8


def ls_estimate(y, x_p, split: PowerSplit, normalized: bool = True) -> np.ndarray:
    """Per-subcarrier least-squares estimate ``y / x_p``.

    With ``normalized`` the pilot amplitude ``sqrt(lam * P)`` is divided out
    as well, so the estimate targets the channel itself.
    """
    x_p = np.asarray(x_p, dtype=complex)
    if np.any(np.abs(x_p) == 0):
        raise ValueError("pilot has a zero entry")
    h = np.asarray(y, dtype=complex) / x_p
    if normalized:
        if split.pilot_power == 0:
            raise ValueError("normalized LS needs non-zero pilot power")
        h = h / split.pilot_amp
    return h


class ChannelStatistics:
    """First and second moments of the composite channel.

    Built once from calibration draws, then read-only.
    """

    def __init__(self, mean: np.ndarray, cov: np.ndarray):
        self.mean = np.asarray(mean, dtype=complex)
        self.cov = np.asarray(cov, dtype=complex)
        self.mean.setflags(write=False)
        self.cov.setflags(write=False)

    @classmethod
    def calibrate(cls, cfg: ChannelConfig, n_draws: int = 10_000,
                  rng: np.random.Generator | None = None) -> "ChannelStatistics":
        rng = rng if rng is not None else np.random.default_rng([cfg.seed, 0xCA11B])
        hs = np.stack([draw_realization(cfg, rng).h_composite for _ in range(n_draws)])
        mean = hs.mean(axis=0)
        centered = hs - mean
        cov = centered.T @ centered.conj() / n_draws
        return cls(mean, cov)

    @property
    def mean_power(self) -> float:
        return float(np.real(np.trace(self.cov)) / self.cov.shape[0]
                     + np.mean(np.abs(self.mean) ** 2))


def lmmse_filter(channel_cov, eff_noise_var: float, pilot_power: float) -> np.ndarray:
    """Wiener matrix ``R (R + eff_noise_var / pilot_power * I)^-1``."""
    r = np.asarray(channel_cov, dtype=complex)
    n = r.shape[0]
    ridge = eff_noise_var / pilot_power
    a = r + ridge * np.eye(n)
    try:
        # W A = R  <=>  A^T W^T = R^T
        return np.linalg.solve(a.T, r.T).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("regularized channel covariance is singular") from exc


def effective_noise_var(split: PowerSplit, noise_var: float, mean_channel_power: float) -> float:
    """Noise plus data interference, the latter treated as white."""
    return noise_var + split.data_power * mean_channel_power


def lmmse_estimate(y, x_p, split: PowerSplit, stats: ChannelStatistics, noise_var: float,
                   eff_noise_var: float | None = None) -> np.ndarray:
    """Linear MMSE refinement of the normalized LS estimate.

    ``eff_noise_var`` overrides the default noise-plus-interference power.
    """
    h_ls = ls_estimate(y, x_p, split)
    if eff_noise_var is None:
        eff_noise_var = effective_noise_var(split, noise_var, stats.mean_power)
    w = lmmse_filter(stats.cov, eff_noise_var, split.pilot_power)
    return stats.mean + (h_ls - stats.mean) @ w.T


def zf_equalize(y, h_est, eps: float = ZF_EPS, return_erasures: bool = False):
    """Diagonal zero-forcing ``y / h_est``.

    Subcarriers with ``|h_est| <= eps`` are erased: their output is 0 and they
    are flagged in the optional erasure mask.
    """
    y = np.asarray(y, dtype=complex)
    h_est = np.asarray(h_est, dtype=complex)
    erased = np.abs(h_est) <= eps
    safe = np.where(erased, 1.0, h_est)
    s = np.where(erased, 0.0, y / safe)
    if return_erasures:
        return s, erased
    return s


def cancel_pilot(s_zf, x_p, split: PowerSplit) -> np.ndarray:
    """Subtract the known superimposed pilot from the equalized signal."""
    return np.asarray(s_zf, dtype=complex) - split.pilot_amp * np.asarray(x_p, dtype=complex)


def mmse_equalize(y, h_est, split: PowerSplit, noise_var: float) -> np.ndarray:
    h_est = np.asarray(h_est, dtype=complex)
    gain = h_est.conj() / (np.abs(h_est) ** 2 + noise_var / split.total_power)
    return gain * np.asarray(y, dtype=complex)


def mmse_detect(y, h_est, x_p, split: PowerSplit, noise_var: float) -> np.ndarray:
    """Per-subcarrier Wiener equalization followed by pilot cancellation."""
    return cancel_pilot(mmse_equalize(y, h_est, split, noise_var), x_p, split)
