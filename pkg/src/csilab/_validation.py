"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numbers

import numpy as np


def check_channels(X, *, allow_empty: bool = False) -> np.ndarray:
    """Coerce a batch of channel tensors to complex128 ``(n, K, N_B, N_U)``.

    A 3-D array is read as ``(n, K, N_B)`` with a single UE antenna, so a
    lone ``(K, N_B, N_U)`` sample needs its leading axis added by the
    caller. ``ChannelTensor`` objects are accepted as one-sample batches.
    """
    if hasattr(X, "data") and hasattr(X, "scenario_id"):
        X = X.data[None]
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim != 4:
        raise ValueError(
            f"expected channels of shape (n, K, N_B[, N_U]), got {X.shape}"
        )
    if X.shape[0] == 0 and not allow_empty:
        raise ValueError("need at least one channel sample")
    if not np.iscomplexobj(X):
        X = X.astype(np.complex128)
    X = X.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError("channel tensor contains non-finite entries")
    return X


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive_real(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_random_state(seed) -> np.random.Generator:
    """Turn ``None``, an int or an existing Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise ValueError(f"cannot build a random generator from {seed!r}")
