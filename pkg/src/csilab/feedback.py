"""Uplink CSI feedback over SIMO OFDM subcarriers: capacity, outage and MRC.

The digital path idealizes channel coding as error-free transmission at
``C_FB = sum_j log2(1 + snr ||h_j||^2)`` bits: the payload arrives intact
when it fits and is lost (zero reconstruction, NMSE 0 dB) otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int, check_random_state
from .channel_gen import ScenarioConfig, channel_response, sample_multipath, sample_rng
from .errors import UndefinedChannelError


def db_to_linear(snr_db: float) -> float:
    return math.inf if math.isinf(snr_db) and snr_db > 0 else 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True)
class FeedbackConfig:
    k_uplink: int = 256
    n_feedback_subcarriers: int = 16
    snr_db: float = 10.0
    subcarrier_selection_seed: int = 0

    def __post_init__(self):
        check_positive_int(self.k_uplink, "k_uplink")
        check_positive_int(self.n_feedback_subcarriers, "n_feedback_subcarriers")
        if self.n_feedback_subcarriers > self.k_uplink:
            raise ValueError("cannot dedicate more feedback subcarriers than the uplink has")

    @property
    def overhead(self) -> float:
        """Feedback overhead ``rho = N_F / K_u``."""
        return self.n_feedback_subcarriers / self.k_uplink

    @property
    def snr(self) -> float:
        return db_to_linear(self.snr_db)

    @property
    def noise_variance(self) -> float:
        # unit average symbol power
        return 0.0 if math.isinf(self.snr) else 1.0 / self.snr

    @classmethod
    def from_overhead(cls, rho: float, k_uplink: int = 256, **kw) -> "FeedbackConfig":
        n_f = max(1, int(round(rho * k_uplink)))
        return cls(k_uplink=k_uplink, n_feedback_subcarriers=n_f, **kw)


@dataclass(frozen=True)
class FeedbackRealization:
    """Per-subcarrier SIMO channels ``h_F^j`` as rows of ``channels`` ``(N_F, N_B)``."""

    channels: np.ndarray
    noise_variance: float
    selected_indices: np.ndarray

    def __post_init__(self):
        ch = np.atleast_2d(np.asarray(self.channels, dtype=np.complex128))
        sel = np.asarray(self.selected_indices, dtype=np.int64).ravel()
        if sel.size != ch.shape[0]:
            raise ValueError("need one selected subcarrier index per feedback channel")
        if np.unique(sel).size != sel.size or np.any(sel < 0):
            raise ValueError("selected subcarrier indices must be distinct and nonnegative")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "selected_indices", sel)

    @property
    def n_feedback(self) -> int:
        return self.channels.shape[0]

    @classmethod
    def ideal(cls, n_feedback: int, n_bs: int, noise_variance: float = 0.0) -> "FeedbackRealization":
        """Every subcarrier reaches only the first BS antenna with unit gain."""
        ch = np.zeros((n_feedback, n_bs), dtype=np.complex128)
        ch[:, 0] = 1.0
        return cls(ch, noise_variance, np.arange(n_feedback))


@dataclass(frozen=True)
class DigitalFeedbackOutcome:
    delivered: bool
    capacity_bits: float
    payload_bits: int
    reconstruction: np.ndarray


def uplink_scenario(downlink: ScenarioConfig | None, k_uplink: int, n_bs: int | None = None) -> ScenarioConfig:
    """Uplink statistics: the downlink generator re-gridded to ``K_u`` subcarriers, one UE antenna."""
    base = downlink or ScenarioConfig()
    array = dict(base.array.__dict__, n_ue_antennas=1)
    if n_bs is not None:
        array["n_bs_antennas"] = n_bs
    ofdm = dict(base.ofdm.__dict__, n_subcarriers=k_uplink)
    name = f"{base.scenario_id}-uplink"
    return base.replace(array=array, ofdm=ofdm, name=name)


def draw_realization(cfg: FeedbackConfig, scenario: ScenarioConfig, rng=None) -> FeedbackRealization:
    """Pick ``N_F`` distinct uplink subcarriers uniformly and draw their channels.

    Uplink channels are independent of the downlink; ``scenario`` must be
    gridded with ``K_u`` subcarriers. The channel is drawn before the
    subcarrier permutation and the first ``N_F`` permuted indices are kept,
    so under a common seed a larger ``N_F`` selects a superset of
    subcarriers of the same channel.
    """
    if scenario.ofdm.n_subcarriers != cfg.k_uplink:
        raise ValueError("uplink scenario subcarrier count must equal k_uplink")
    rng = check_random_state(cfg.subcarrier_selection_seed if rng is None else rng)
    mp = sample_multipath(scenario, rng)
    sel = np.sort(rng.permutation(cfg.k_uplink)[: cfg.n_feedback_subcarriers])
    H = channel_response(mp, scenario.array, scenario.ofdm, sel)  # (N_F, N_U, N_B)
    return FeedbackRealization(H[:, 0, :], cfg.noise_variance, sel)


def trial_realization(cfg: FeedbackConfig, scenario: ScenarioConfig, trial: int) -> FeedbackRealization:
    """Realization for Monte-Carlo trial ``trial``, independent of scheduling order."""
    return draw_realization(cfg, scenario, sample_rng(cfg.subcarrier_selection_seed, trial))


def feedback_capacity(fr: FeedbackRealization, snr: float) -> float:
    """``sum_j log2(1 + snr ||h_j||^2)`` in bits."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    gains = np.sum(np.abs(fr.channels) ** 2, axis=1)
    return float(np.sum(np.log2(1.0 + snr * gains)))


def digital_feedback(bs, fr: FeedbackRealization, snr: float, decoder, shape) -> DigitalFeedbackOutcome:
    """Deliver ``bs`` if its payload fits the feedback capacity, else report an outage.

    ``decoder`` maps the bitstream to a reconstruction of ``shape``; it is
    only invoked on delivery.
    """
    capacity = feedback_capacity(fr, snr)
    payload = int(bs.bit_length)
    if payload <= capacity:
        return DigitalFeedbackOutcome(True, capacity, payload, np.asarray(decoder(bs)).reshape(shape))
    return DigitalFeedbackOutcome(False, capacity, payload, np.zeros(shape, dtype=np.complex128))


def pair_to_symbols(latent) -> np.ndarray:
    """Group consecutive real pairs into complex symbols ``v[2j] + i v[2j+1]``."""
    v = np.asarray(latent, dtype=np.float64).ravel()
    if v.size % 2:
        raise ValueError(f"need an even number of real features, got {v.size}")
    return v[0::2] + 1j * v[1::2]


def unpair_symbols(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128).ravel()
    out = np.empty(2 * x.size)
    out[0::2] = x.real
    out[1::2] = x.imag
    return out


def power_normalize(x) -> np.ndarray:
    """Scale to unit average symbol power, ``||out||^2 = N_F``. Zero passes through."""
    x = np.asarray(x, dtype=np.complex128)
    norm = np.linalg.norm(x)
    if norm == 0:
        return x.copy()
    return x * (np.sqrt(x.size) / norm)


def simo_transmit(x, fr: FeedbackRealization, rng=None, noise=None) -> np.ndarray:
    """``y_j = h_j x_j + z_j`` for every feedback subcarrier; returns ``(N_F, N_B)``.

    ``noise`` may be supplied to reuse a draw; otherwise it is sampled with
    variance ``fr.noise_variance``.
    """
    x = np.asarray(x, dtype=np.complex128).ravel()
    if x.size != fr.n_feedback:
        raise ValueError(f"{x.size} symbols for {fr.n_feedback} feedback subcarriers")
    y = fr.channels * x[:, None]
    if noise is None and fr.noise_variance > 0:
        rng = check_random_state(rng)
        z = rng.standard_normal((2, *y.shape))
        noise = np.sqrt(fr.noise_variance / 2) * (z[0] + 1j * z[1])
    if noise is not None:
        y = y + noise
    return y


def mrc_combine(y, h) -> complex:
    """Maximum ratio combining ``h^H y / ||h||^2``."""
    h = np.asarray(h, dtype=np.complex128).ravel()
    y = np.asarray(y, dtype=np.complex128).ravel()
    gain = float(np.vdot(h, h).real)
    if gain == 0:
        raise UndefinedChannelError("cannot combine over an all-zero channel")
    return complex(np.vdot(h, y) / gain)


def mrc_combine_all(Y, H) -> np.ndarray:
    """Row-wise :func:`mrc_combine` for ``(N_F, N_B)`` arrays."""
    gain = np.sum(np.abs(H) ** 2, axis=1)
    if np.any(gain == 0):
        raise UndefinedChannelError("cannot combine over an all-zero channel")
    return np.sum(H.conj() * Y, axis=1) / gain
