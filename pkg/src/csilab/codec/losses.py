"""Straight-through quantization, the differentiable rate term and the RD objective."""

from __future__ import annotations

import numpy as np
import torch

from .entropy import EntropyModel


class _StraightThroughRound(torch.autograd.Function):
    @staticmethod
    def forward(ctx, z, step):
        return step * torch.round(z / step)

    @staticmethod
    def backward(ctx, grad):
        return grad, None


def ste_round(z: torch.Tensor, step: float = 1.0) -> torch.Tensor:
    """Round to multiples of ``step`` (ties to even) forward; identity backward.

    A custom function rather than ``z + (q - z).detach()`` so the forward
    value is exactly the rounded one, not a floating-point reconstruction.
    """
    return _StraightThroughRound.apply(z, float(step))


class SoftRate:
    """Code length of soft indices under frozen per-channel PMFs.

    ``-log2 p`` is interpolated linearly between neighbouring integers, so
    at integer indices it equals the ideal code length and in between it
    provides a gradient toward more probable indices.
    """

    def __init__(self, em: EntropyModel, dtype=torch.float32):
        self.lo, self.hi = em.support
        self.neglog = torch.as_tensor(-np.log2(em.pmfs), dtype=dtype)

    def __call__(self, t: torch.Tensor) -> torch.Tensor:
        """Bits per sample for soft indices ``t`` shaped ``(n, C, H, W)``."""
        n, C = t.shape[:2]
        flat = t.reshape(n, C, -1).clamp(self.lo, self.hi) - self.lo
        table = self.neglog.to(t.dtype)
        if self.hi == self.lo:
            return table[:, 0].sum() * flat.shape[2] * torch.ones(n, dtype=t.dtype)
        i0 = torch.floor(flat).clamp(max=self.hi - self.lo - 1)
        frac = flat - i0
        i0 = i0.long()
        expand = table.unsqueeze(0).expand(n, -1, -1)
        l0 = torch.gather(expand, 2, i0)
        l1 = torch.gather(expand, 2, i0 + 1)
        return ((1 - frac) * l0 + frac * l1).sum(dim=(1, 2))


def rd_loss(h, h_hat, rate_bits, rd_lambda: float):
    """``MSE + rd_lambda * rate_bits / entries`` for one channel tensor.

    MSE is the mean squared magnitude over complex entries, so a zero
    reconstruction of unit-power data scores 1. Larger ``rd_lambda`` charges
    more for every bit spent.
    """
    h = getattr(h, "data", h)
    h_hat = getattr(h_hat, "data", h_hat)
    h = np.asarray(h)
    h_hat = np.asarray(h_hat)
    if h.shape != h_hat.shape:
        raise ValueError(f"shape mismatch {h.shape} vs {h_hat.shape}")
    entries = h.size
    mse = float(np.mean(np.abs(h - h_hat) ** 2))
    return mse + rd_lambda * float(rate_bits) / entries
