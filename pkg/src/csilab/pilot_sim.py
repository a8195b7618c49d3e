"""Pilot observation, ADC quantization and the least-squares channel estimate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int, check_random_state

# multi-bit quantizer clips at this many RMS values of the observation
CLIP_SIGMAS = 3.0


@dataclass(frozen=True)
class PilotBlock:
    """``N_U x P`` pilot matrix with its nominal per-symbol power."""

    symbols: np.ndarray
    power: float

    def __post_init__(self):
        symbols = np.atleast_2d(np.asarray(self.symbols, dtype=np.complex128))
        if symbols.shape[1] < 1:
            raise ValueError("pilot block needs at least one pilot (P >= 1)")
        measured = float(np.mean(np.abs(symbols) ** 2))
        if abs(measured - self.power) > 1e-9 * max(1.0, self.power):
            raise ValueError(f"pilot symbols have power {measured}, declared {self.power}")
        object.__setattr__(self, "symbols", symbols)

    @property
    def length(self) -> int:
        return self.symbols.shape[1]

    @classmethod
    def orthogonal(cls, n_ue: int, length: int, power: float = 1.0) -> "PilotBlock":
        """Rows of a DFT matrix: unit-modulus, mutually orthogonal when P >= N_U."""
        n_ue = check_positive_int(n_ue, "n_ue")
        length = check_positive_int(length, "length")
        n = max(n_ue, length)
        dft = np.exp(-2j * np.pi * np.outer(np.arange(n_ue), np.arange(length)) / n)
        return cls(np.sqrt(power) * dft, float(power))

    @classmethod
    def qpsk(cls, n_ue: int, length: int, power: float = 1.0, rng=None) -> "PilotBlock":
        rng = check_random_state(rng)
        bits = rng.integers(0, 2, size=(2, n_ue, length))
        symbols = ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / np.sqrt(2)
        return cls(np.sqrt(power) * symbols, float(power))


@dataclass(frozen=True)
class Observation:
    received: np.ndarray
    noise_variance: float
    quantizer_bits: int = 0


def transmit_pilots(h, x: PilotBlock, noise_variance: float, rng=None) -> Observation:
    """``Y = H X + Z`` with circularly symmetric complex Gaussian ``Z``."""
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    if h.shape[1] != x.symbols.shape[0]:
        raise ValueError(f"channel {h.shape} does not match pilots {x.symbols.shape}")
    if noise_variance < 0:
        raise ValueError("noise_variance must be nonnegative")
    clean = h @ x.symbols
    if noise_variance > 0:
        rng = check_random_state(rng)
        z = rng.standard_normal((2, *clean.shape))
        clean = clean + np.sqrt(noise_variance / 2) * (z[0] + 1j * z[1])
    return Observation(clean, float(noise_variance), 0)


def _uniform_quantize(v: np.ndarray, step: float, limit: float) -> np.ndarray:
    # mid-rise: reconstruction levels at odd multiples of step/2
    q = step * (np.floor(v / step) + 0.5)
    return np.clip(q, -limit + step / 2, limit - step / 2)


def quantize_observation(obs: Observation, bits: int) -> Observation:
    """Element-wise ADC model on real and imaginary parts.

    One bit keeps only the signs. More bits use a mid-rise uniform quantizer
    over ``[-3 sigma, 3 sigma]`` with ``sigma`` the RMS of the complex entries.
    """
    if isinstance(bits, bool) or int(bits) != bits or bits < 1:
        raise ValueError(f"bits must be a positive integer, got {bits!r}")
    y = obs.received
    if bits == 1:
        out = np.sign(y.real) + 1j * np.sign(y.imag)
        # sign(0) would leave a zero level; a 1-bit ADC always picks a side
        out = np.where(y.real == 0, 1.0, out.real) + 1j * np.where(y.imag == 0, 1.0, out.imag)
    else:
        sigma = float(np.sqrt(np.mean(np.abs(y) ** 2)))
        if sigma == 0:
            return Observation(np.zeros_like(y), obs.noise_variance, int(bits))
        limit = CLIP_SIGMAS * sigma
        step = 2 * limit / 2**bits
        out = _uniform_quantize(y.real, step, limit) + 1j * _uniform_quantize(y.imag, step, limit)
    return Observation(out, obs.noise_variance, int(bits))


def ls_estimate(obs: Observation, x: PilotBlock) -> np.ndarray:
    """Least-squares estimate ``Y X^+`` (minimum-norm when pilots are rank deficient)."""
    return obs.received @ np.linalg.pinv(x.symbols)
