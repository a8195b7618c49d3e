"""Top-k 2-D DCT compression, the classical comparator for the learned codec.

Bit layout: float16 peak amplitude, kept count ``k`` in ``ceil(log2(n+1))``
bits, ``k`` fixed-length coefficient codes, then the arithmetic-coded
significance map running to the end of the stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .entropy import EntropyModel, LatentBitstream, arith_decode, arith_encode


@dataclass(frozen=True)
class DctBitstream:
    payload: bytes
    bit_length: int


def _coefficients(h: np.ndarray) -> np.ndarray:
    # DCT over (K, N_B) of each real/imag plane of each UE antenna
    planes = np.stack([h.real, h.imag])  # (2, K, N_B, N_U)
    return dctn(planes, axes=(1, 2), norm="ortho")


def _significance_model(n: int, k: int) -> EntropyModel:
    f = min(max(k / n, 1e-4), 1 - 1e-4)
    return EntropyModel(np.array([[1 - f, f]]), (0, 1))


def _uint_bits(value: int, width: int) -> np.ndarray:
    return (np.asarray(value, dtype=np.int64)[..., None] >> np.arange(width - 1, -1, -1)) & 1


def _read_uint(bits: np.ndarray) -> np.ndarray:
    return bits @ (1 << np.arange(bits.shape[-1] - 1, -1, -1, dtype=np.int64))


def dct_baseline_compress(h, keep_fraction: float, bits_per_coeff: int):
    """Keep the largest ``keep_fraction`` of DCT coefficients, ``bits_per_coeff`` bits each.

    Returns ``(bitstream, h_hat)``; ``h_hat`` is decoded from the bitstream.
    """
    h = np.asarray(getattr(h, "data", h), dtype=np.complex128)
    if h.ndim == 2:
        h = h[..., None]
    if not 0 < keep_fraction <= 1:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    if not 1 <= bits_per_coeff <= 32:
        raise ValueError("bits_per_coeff must be between 1 and 32")
    coeffs = _coefficients(h).ravel()
    n = coeffs.size
    k = min(n, max(1, int(round(keep_fraction * n))))
    keep = np.argsort(-np.abs(coeffs), kind="stable")[:k]
    mask = np.zeros(n, dtype=np.int64)
    mask[keep] = 1
    kept = coeffs[mask.astype(bool)]
    amp = float(np.float16(np.max(np.abs(kept))))
    if amp < np.max(np.abs(kept)):
        amp = float(np.nextafter(np.float16(amp), np.float16(np.inf)))

    levels = 2**bits_per_coeff
    if amp > 0:
        step = 2 * amp / levels
        q = np.clip(np.floor((kept + amp) / step), 0, levels - 1).astype(np.int64)
    else:
        q = np.zeros(k, dtype=np.int64)
    sig = arith_encode(mask[None, :], _significance_model(n, k))
    amp_bits = _uint_bits(int(np.float16(amp).view(np.uint16)), 16)
    k_bits = _uint_bits(k, int(n).bit_length())
    coef_bits = _uint_bits(q, bits_per_coeff).ravel()
    sig_bits = np.unpackbits(np.frombuffer(sig.payload, dtype=np.uint8))[: sig.bit_length]
    bits = np.concatenate([amp_bits, k_bits, coef_bits, sig_bits]).astype(np.uint8)
    bs = DctBitstream(np.packbits(bits).tobytes(), int(bits.size))
    return bs, dct_baseline_decompress(bs, h.shape, bits_per_coeff)


def dct_baseline_decompress(bs: DctBitstream, shape, bits_per_coeff: int) -> np.ndarray:
    shape = tuple(shape)
    n = 2 * int(np.prod(shape))
    bits = np.unpackbits(np.frombuffer(bs.payload, dtype=np.uint8)).astype(np.int64)
    amp = float(np.uint16(_read_uint(bits[:16])).view(np.float16))
    pos = 16
    k_width = int(n).bit_length()
    k = int(_read_uint(bits[pos:pos + k_width]))
    pos += k_width
    q = _read_uint(bits[pos:pos + k * bits_per_coeff].reshape(k, bits_per_coeff))
    pos += k * bits_per_coeff
    em = _significance_model(n, k)
    sig_bits = bits[pos:bs.bit_length].astype(np.uint8)
    sig = LatentBitstream(np.packbits(sig_bits).tobytes(), int(sig_bits.size), n, em.pmf_id)
    mask = arith_decode(sig, em, (1, n)).indices.ravel().astype(bool)
    coeffs = np.zeros(n)
    if amp > 0:
        step = 2 * amp / 2**bits_per_coeff
        coeffs[mask] = -amp + (q + 0.5) * step
    planes = idctn(coeffs.reshape(2, *shape), axes=(1, 2), norm="ortho")
    return planes[0] + 1j * planes[1]
