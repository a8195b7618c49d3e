"""Reconstruction and rate metrics."""

from __future__ import annotations

import math

import numpy as np

NMSE_FLOOR_DB = -120.0


def _as_array(h):
    return np.asarray(getattr(h, "data", h))


def nmse_ratio(h, h_hat) -> np.ndarray:
    """Per-sample ``||h - h_hat||^2 / ||h||^2`` over a leading batch axis.

    Single tensors are treated as a batch of one.
    """
    h = _as_array(h)
    h_hat = _as_array(h_hat)
    if h.shape != h_hat.shape:
        raise ValueError(f"shape mismatch {h.shape} vs {h_hat.shape}")
    if h.ndim <= 3:
        h, h_hat = h[None], h_hat[None]
    axes = tuple(range(1, h.ndim))
    ref = np.sum(np.abs(h) ** 2, axis=axes)
    if np.any(ref == 0):
        raise ValueError("NMSE is undefined for an all-zero reference channel")
    return np.sum(np.abs(h - h_hat) ** 2, axis=axes) / ref


def to_db(ratio) -> float:
    ratio = float(ratio)
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(ratio), NMSE_FLOOR_DB)


def nmse(h, h_hat) -> float:
    """NMSE in dB: 10 log10 of the mean per-sample error ratio, floored at -120 dB."""
    return to_db(np.mean(nmse_ratio(h, h_hat)))


def bits_per_entry(bs, h_shape, *, include_header: bool = False) -> float:
    """Coded bits per complex CSI coefficient ``(K, N_B, N_U)``.

    The 16-byte container header is excluded unless ``include_header``.
    """
    from .codec.entropy import HEADER_BITS

    entries = int(np.prod(h_shape))
    bits = getattr(bs, "bit_length", bs)
    if include_header and hasattr(bs, "symbol_count"):
        bits += HEADER_BITS
    return float(bits) / entries
