"""Pilot/data generation and the superimposed frequency-domain link."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization


@dataclass(frozen=True)
class PowerSplit:
    """Fraction ``lam`` of the total power ``total_power`` goes to the pilot."""

    lam: float = 0.15
    total_power: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.total_power <= 0:
            raise ValueError("total_power must be positive")

    @property
    def pilot_power(self) -> float:
        return self.lam * self.total_power

    @property
    def data_power(self) -> float:
        return (1.0 - self.lam) * self.total_power

    @property
    def pilot_amp(self) -> float:
        return math.sqrt(self.pilot_power)

    @property
    def data_amp(self) -> float:
        return math.sqrt(self.data_power)


@dataclass(frozen=True)
class Frame:
    pilot: np.ndarray
    data_bits: np.ndarray
    data_symbols: np.ndarray
    received: np.ndarray
    noise_var: float
    split: PowerSplit


def zadoff_chu(n: int, root: int = 1) -> np.ndarray:
    """Length-``n`` Zadoff-Chu sequence with the given root, 0-based index."""
    if n <= 0:
        raise ValueError("sequence length must be positive")
    if root <= 0 or math.gcd(root, n) != 1:
        raise ValueError(f"root {root} must be a positive integer coprime with {n}")
    k = np.arange(n, dtype=np.int64)
    # reduce the integer exponent mod 2n before going to floating point
    if n % 2 == 0:
        e = (root * k * k) % (2 * n)
    else:
        e = (root * k * (k + 1)) % (2 * n)
    return np.exp(-1j * np.pi * e / n)


def random_bits(n_bits: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=n_bits, dtype=np.uint8)


def qpsk_modulate(bits) -> np.ndarray:
    """Gray-mapped unit-energy QPSK: ``(b0, b1) -> ((1-2b0) + j(1-2b1))/sqrt(2)``."""
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise ValueError("QPSK needs an even number of bits")
    b = bits.reshape(bits.shape[:-1] + (-1, 2)).astype(float)
    return ((1.0 - 2.0 * b[..., 0]) + 1j * (1.0 - 2.0 * b[..., 1])) / math.sqrt(2.0)


def qpsk_demodulate(symbols) -> np.ndarray:
    """Hard quadrant decision; a component that is exactly zero maps to bit 0."""
    s = np.asarray(symbols, dtype=complex)
    out = np.empty(s.shape + (2,), dtype=np.uint8)
    out[..., 0] = s.real < 0
    out[..., 1] = s.imag < 0
    return out.reshape(s.shape[:-1] + (-1,)) if s.ndim else out


def snr_to_noise_var(snr_db: float, total_power: float = 1.0) -> float:
    if total_power <= 0:
        raise ValueError("total_power must be positive")
    return total_power / 10.0 ** (snr_db / 10.0)


def complex_noise(shape, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric Gaussian noise with total variance ``noise_var``."""
    scale = math.sqrt(noise_var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def transmit(pilot, data_symbols, split: PowerSplit, channel, noise_var: float,
             rng: np.random.Generator | None = None, data_bits=None) -> Frame:
    """Superimpose pilot and data, pass them through ``channel`` and add noise.

    ``channel`` may be a :class:`ChannelRealization` or a bare frequency
    response vector.
    """
    h = channel.h_composite if isinstance(channel, ChannelRealization) else np.asarray(channel)
    pilot = np.asarray(pilot, dtype=complex)
    data_symbols = np.asarray(data_symbols, dtype=complex)
    if not (pilot.shape == data_symbols.shape == h.shape):
        raise ValueError(
            f"length mismatch: pilot {pilot.shape}, data {data_symbols.shape}, channel {h.shape}"
        )
    if noise_var < 0:
        raise ValueError("noise variance must be non-negative")
    tx = split.pilot_amp * pilot + split.data_amp * data_symbols
    y = h * tx
    if noise_var > 0:
        if rng is None:
            raise ValueError("a random generator is required for noisy transmission")
        y = y + complex_noise(h.shape, noise_var, rng)
    if data_bits is None:
        data_bits = qpsk_demodulate(data_symbols)
    return Frame(pilot, np.asarray(data_bits, dtype=np.uint8), data_symbols, y, float(noise_var), split)
