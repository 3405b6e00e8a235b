"""RIS-assisted frequency-selective channel realizations.

Every link (direct, transmitter-RIS, RIS-receiver) is an ``L``-tap channel
with an exponential power-delay profile, returned as its ``N``-point
frequency response. The effective channel seen by the receiver is the direct
response plus the phase-weighted sum of the per-sub-surface cascades.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PHASE_MODES = ("all-zero-phase", "uniform-random")


@dataclass(frozen=True)
class ChannelConfig:
    n_subcarriers: int = 32
    n_subsurfaces: int = 12
    n_taps: int = 5
    cp_length: int = 8
    rician_k_db: float = 15.0
    pdp_decay: float = 0.5
    phase_mode: str = "all-zero-phase"
    seed: int = 0

    def __post_init__(self):
        if self.n_subcarriers <= 0:
            raise ValueError("n_subcarriers must be positive")
        if self.n_subsurfaces < 0:
            raise ValueError("n_subsurfaces must be non-negative")
        if self.n_taps <= 0 or self.cp_length <= 0:
            raise ValueError("n_taps and cp_length must be positive")
        if self.n_taps >= self.cp_length:
            raise ValueError(
                f"n_taps ({self.n_taps}) must be shorter than cp_length ({self.cp_length})"
            )
        if self.n_taps > self.n_subcarriers:
            raise ValueError("n_taps cannot exceed n_subcarriers")
        if self.pdp_decay < 0:
            raise ValueError("pdp_decay must be non-negative")
        if self.phase_mode not in PHASE_MODES:
            raise ValueError(f"phase_mode must be one of {PHASE_MODES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class ChannelRealization:
    h_direct: np.ndarray
    h_tx_ris: np.ndarray  # (G, N)
    h_ris_rx: np.ndarray  # (G, N)
    phase_shifts: np.ndarray
    h_composite: np.ndarray

    @property
    def n_subcarriers(self) -> int:
        return self.h_direct.shape[0]


def power_delay_profile(n_taps: int, decay: float) -> np.ndarray:
    """Exponential tap powers ``exp(-decay * l)`` normalized to unit sum."""
    p = np.exp(-decay * np.arange(n_taps))
    return p / p.sum()


def _draw_taps(cfg: ChannelConfig, rician: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Time-domain taps for ``len(rician)`` independent links, shape (links, L)."""
    n_links = rician.shape[0]
    pdp = power_delay_profile(cfg.n_taps, cfg.pdp_decay)
    diffuse = (rng.standard_normal((n_links, cfg.n_taps))
               + 1j * rng.standard_normal((n_links, cfg.n_taps))) / np.sqrt(2.0)
    taps = diffuse * np.sqrt(pdp)
    if np.any(rician):
        k = 10.0 ** (cfg.rician_k_db / 10.0)
        # deterministic line-of-sight component on tap 0, zero phase
        los = np.sqrt(k / (k + 1.0) * pdp[0])
        nlos = np.sqrt(1.0 / (k + 1.0))
        taps[rician, 0] = los + nlos * taps[rician, 0]
    return taps


def _taps_to_cfr(taps: np.ndarray, n_subcarriers: int) -> np.ndarray:
    return np.fft.fft(taps, n=n_subcarriers, axis=-1)


def draw_tap_channel(cfg: ChannelConfig, rician: bool, rng: np.random.Generator) -> np.ndarray:
    """Draw one link and return its length-``N`` frequency response."""
    taps = _draw_taps(cfg, np.array([bool(rician)]), rng)
    return _taps_to_cfr(taps, cfg.n_subcarriers)[0]


def make_phase_shifts(n: int, mode: str = "uniform-random",
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """Unit-modulus reflection coefficients for ``n`` sub-surfaces."""
    if n < 0:
        raise ValueError("number of sub-surfaces must be non-negative")
    if mode == "all-zero-phase":
        return np.ones(n, dtype=complex)
    if mode == "uniform-random":
        if rng is None:
            raise ValueError("uniform-random phases need a random generator")
        return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=n))
    raise ValueError(f"unknown phase mode {mode!r}")


def compose_channel(direct, tx_ris, ris_rx, phase_shifts) -> ChannelRealization:
    """Combine direct and cascaded links into the composite response.

    ``h = h_direct + sum_g phase_shifts[g] * tx_ris[g] * ris_rx[g]``.
    """
    direct = np.asarray(direct, dtype=complex)
    if direct.ndim != 1:
        raise ValueError("direct link must be a vector")
    n = direct.shape[0]
    tx_ris = np.asarray(tx_ris, dtype=complex).reshape(-1, n) if len(tx_ris) else np.zeros((0, n), complex)
    ris_rx = np.asarray(ris_rx, dtype=complex).reshape(-1, n) if len(ris_rx) else np.zeros((0, n), complex)
    phase_shifts = np.asarray(phase_shifts, dtype=complex).reshape(-1)
    g = phase_shifts.shape[0]
    if tx_ris.shape != (g, n) or ris_rx.shape != (g, n):
        raise ValueError(
            f"cascaded links must be {g} vectors of length {n}, "
            f"got {tx_ris.shape} and {ris_rx.shape}"
        )
    if not np.allclose(np.abs(phase_shifts), 1.0, atol=1e-9):
        raise ValueError("phase shifts must have unit modulus")
    composite = direct + phase_shifts @ (tx_ris * ris_rx)
    return ChannelRealization(direct, tx_ris, ris_rx, phase_shifts, composite)


def draw_realization(cfg: ChannelConfig, rng: np.random.Generator,
                     phase_mode: str | None = None) -> ChannelRealization:
    """Draw a full realization: Rayleigh direct link, Rician RIS segments."""
    g = cfg.n_subsurfaces
    rician = np.zeros(1 + 2 * g, dtype=bool)
    rician[1:] = True
    cfr = _taps_to_cfr(_draw_taps(cfg, rician, rng), cfg.n_subcarriers)
    phases = make_phase_shifts(g, phase_mode or cfg.phase_mode, rng)
    return compose_channel(cfr[0], cfr[1:1 + g], cfr[1 + g:], phases)
