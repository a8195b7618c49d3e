"""Latent types, the histogram entropy model and the arithmetic-coded bitstream."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import DecodeError
from . import _binary_coder as bc

MAGIC = b"CSIB"
BITSTREAM_VERSION = 1
HEADER_BYTES = 16
HEADER_BITS = 8 * HEADER_BYTES
_PMF_ID_MASK = (1 << 56) - 1


@dataclass(frozen=True)
class LatentTensor:
    """Encoder output ``(features, K / down, N_B / down)``."""

    values: np.ndarray
    quantized: bool = False
    step: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if self.quantized and values.size:
            ratio = values / self.step
            if not np.allclose(ratio, np.rint(ratio), rtol=0, atol=1e-9):
                raise ValueError("quantized latent values must be multiples of the step")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def indices(self) -> np.ndarray:
        if not self.quantized:
            raise ValueError("latent is not quantized")
        return np.rint(self.values / self.step).astype(np.int64)


def quantize_latent(z: LatentTensor, step: float | None = None) -> LatentTensor:
    """Round to the nearest multiple of ``step`` (ties to even)."""
    step = z.step if step is None else float(step)
    if step <= 0:
        raise ValueError("quantizer step must be positive")
    return LatentTensor(step * np.round(z.values / step), quantized=True, step=step)


@dataclass(frozen=True)
class EntropyModel:
    """Per-feature-channel PMFs over the integer indices ``[lo, hi]``."""

    pmfs: np.ndarray
    support: tuple[int, int]
    smoothing: float = 1e-3

    def __post_init__(self):
        pmfs = np.atleast_2d(np.asarray(self.pmfs, dtype=np.float64))
        lo, hi = (int(v) for v in self.support)
        if hi < lo or pmfs.shape[1] != hi - lo + 1:
            raise ValueError(f"PMF width {pmfs.shape[1]} does not match support {self.support}")
        if np.any(pmfs <= 0) or not np.allclose(pmfs.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("every PMF must be strictly positive and sum to one")
        pmfs.setflags(write=False)
        object.__setattr__(self, "pmfs", pmfs)
        object.__setattr__(self, "support", (lo, hi))

    @property
    def n_channels(self) -> int:
        return self.pmfs.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.pmfs.shape[1]

    @cached_property
    def pmf_id(self) -> int:
        """64-bit content hash identifying this frozen model."""
        h = hashlib.sha256()
        h.update(struct.pack("<qq", *self.support))
        h.update(self.pmfs.astype("<f8").tobytes())
        return int.from_bytes(h.digest()[:8], "little")

    @cached_property
    def _rank_tables(self):
        # ranks order the support by distance from zero so small magnitudes get short codes
        values = np.arange(self.support[0], self.support[1] + 1)
        order = np.lexsort((values < 0, np.abs(values)))
        rank_of = np.empty_like(order)
        rank_of[order] = np.arange(order.size)
        return values[order], rank_of

    @cached_property
    def _contexts(self):
        values_by_rank, _ = self._rank_tables
        lo = self.support[0]
        rank_pmfs = self.pmfs[:, values_by_rank - lo]
        n_ctx, offsets = bc.context_layout(self.n_symbols)
        n0, n1 = bc.initial_counts(rank_pmfs)
        return n_ctx, offsets, n0, n1

    def clamp(self, indices: np.ndarray) -> tuple[np.ndarray, int]:
        lo, hi = self.support
        clipped = np.clip(indices, lo, hi)
        return clipped, int(np.count_nonzero(clipped != indices))

    def entropy(self) -> np.ndarray:
        """Entropy in bits of each channel's PMF."""
        return -np.sum(self.pmfs * np.log2(self.pmfs), axis=1)

    def to_dict(self) -> dict:
        return {
            "support": list(self.support),
            "smoothing": self.smoothing,
            "pmfs": self.pmfs.tolist(),
            "pmf_id": str(self.pmf_id),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EntropyModel":
        em = cls(np.asarray(data["pmfs"]), tuple(data["support"]), float(data["smoothing"]))
        if "pmf_id" in data and int(data["pmf_id"]) != em.pmf_id:
            raise ValueError("stored pmf_id does not match the stored PMFs")
        return em


def _as_index_array(latents) -> np.ndarray:
    arrays = []
    for z in latents:
        if isinstance(z, LatentTensor):
            arrays.append(z.indices)
        else:
            arrays.append(np.asarray(z))
    if not arrays:
        raise ValueError("need at least one latent to fit an entropy model")
    C = arrays[0].shape[0]
    if any(a.shape[0] != C for a in arrays):
        raise ValueError("all latents must share the feature-channel count")
    return np.concatenate([a.reshape(C, -1) for a in arrays], axis=1)


def fit_entropy_model(latents, *, support: tuple[int, int] | None = None,
                      smoothing: float = 1e-3, max_abs_index: int = 255) -> EntropyModel:
    """Histogram each feature channel and mix in ``smoothing`` uniform mass.

    ``latents`` is a collection of quantized ``LatentTensor`` or of integer
    index arrays shaped ``(C, ...)``.
    """
    if isinstance(latents, LatentTensor):
        latents = [latents]
    elif isinstance(latents, np.ndarray):
        # a 4-D array is a stacked batch of (C, H, W) index maps
        latents = list(latents) if latents.ndim == 4 else [latents]
    idx = _as_index_array(list(latents))
    if not 0 < smoothing < 1:
        raise ValueError("smoothing mass must lie in (0, 1)")
    if support is None:
        if idx.size == 0:
            support = (0, 0)
        else:
            lo = max(int(idx.min()), -max_abs_index)
            hi = min(int(idx.max()), max_abs_index)
            support = (min(lo, 0), max(hi, 0))
    lo, hi = support
    M = hi - lo + 1
    C = idx.shape[0]
    counts = np.zeros((C, M))
    clipped = np.clip(idx, lo, hi) - lo
    for c in range(C):
        counts[c] = np.bincount(clipped[c], minlength=M)
    totals = counts.sum(axis=1, keepdims=True)
    empirical = np.divide(counts, totals, out=np.full_like(counts, 1.0 / M), where=totals > 0)
    pmfs = (1 - smoothing) * empirical + smoothing / M
    pmfs /= pmfs.sum(axis=1, keepdims=True)
    return EntropyModel(pmfs, (lo, hi), smoothing)


def _channel_ids(shape) -> np.ndarray:
    C = shape[0]
    per = int(np.prod(shape[1:])) if len(shape) > 1 else 1
    return np.repeat(np.arange(C, dtype=np.int64), per)


def entropy_rate(z: LatentTensor, em: EntropyModel, *, return_clamped: bool = False):
    """Ideal code length ``sum -log2 p(index)`` of a quantized latent, in bits."""
    idx = z.indices if isinstance(z, LatentTensor) else np.asarray(z, dtype=np.int64)
    if idx.shape[0] != em.n_channels:
        raise ValueError(f"latent has {idx.shape[0]} channels, model has {em.n_channels}")
    idx, n_clamped = em.clamp(idx)
    flat = idx.reshape(idx.shape[0], -1) - em.support[0]
    logp = np.log2(em.pmfs)
    bits = -float(np.take_along_axis(logp, flat, axis=1).sum())
    return (bits, n_clamped) if return_clamped else bits


@dataclass(frozen=True)
class LatentBitstream:
    """Arithmetic-coded latent. ``bit_length`` excludes the file header."""

    payload: bytes
    bit_length: int
    symbol_count: int
    pmf_id: int
    n_clamped: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.bit_length > 8 * len(self.payload):
            raise ValueError("bit_length exceeds the payload size")

    def to_bytes(self) -> bytes:
        """16-byte header (magic, version, symbol count, 56-bit pmf id) plus payload."""
        header = MAGIC + struct.pack("<BI", BITSTREAM_VERSION, self.symbol_count)
        header += (self.pmf_id & _PMF_ID_MASK).to_bytes(7, "little")
        return header + self.payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> "LatentBitstream":
        if len(blob) < HEADER_BYTES or blob[:4] != MAGIC:
            raise DecodeError("not a CSIB bitstream")
        version, count = struct.unpack("<BI", blob[4:9])
        if version != BITSTREAM_VERSION:
            raise DecodeError(f"unsupported bitstream version {version}")
        pmf_id = int.from_bytes(blob[9:16], "little")
        payload = blob[HEADER_BYTES:]
        bit_length = _trimmed_bit_length(payload)
        return cls(payload, bit_length, count, pmf_id)


def _trimmed_bit_length(payload: bytes) -> int:
    arr = np.frombuffer(payload, dtype=np.uint8)
    nz = np.flatnonzero(arr)
    if nz.size == 0:
        return 0
    last = int(nz[-1])
    byte = int(arr[last])
    trailing = (byte & -byte).bit_length() - 1
    return 8 * last + 8 - trailing


def _pmf_id_matches(bs: LatentBitstream, em: EntropyModel) -> bool:
    return (bs.pmf_id & _PMF_ID_MASK) == (em.pmf_id & _PMF_ID_MASK)


def arith_encode(z: LatentTensor, em: EntropyModel) -> LatentBitstream:
    """Losslessly code a quantized latent (out-of-support indices are clamped first)."""
    idx = z.indices if isinstance(z, LatentTensor) else np.asarray(z, dtype=np.int64)
    if idx.size and idx.shape[0] != em.n_channels:
        raise ValueError(f"latent has {idx.shape[0]} channels, model has {em.n_channels}")
    idx, n_clamped = em.clamp(idx)
    _, rank_of = em._rank_tables
    ranks = rank_of[(idx - em.support[0]).ravel()].astype(np.int64)
    channels = _channel_ids(idx.shape) if idx.size else np.zeros(0, dtype=np.int64)
    n_ctx, offsets, n0, n1 = em._contexts
    G = bc.n_groups(em.n_symbols)
    bits, n_bits = bc.encode_ranks(ranks, channels, G, n_ctx, offsets, n0, n1)
    bits = bits[:n_bits]
    # the decoder pads with zeros, so trailing zero bits carry no information
    ones = np.flatnonzero(bits)
    n_bits = int(ones[-1]) + 1 if ones.size else 0
    payload = np.packbits(bits[:n_bits]).tobytes()
    return LatentBitstream(payload, n_bits, int(idx.size), em.pmf_id, n_clamped)


def arith_decode(bs: LatentBitstream, em: EntropyModel, shape, step: float = 1.0) -> LatentTensor:
    """Inverse of :func:`arith_encode`; raises :class:`DecodeError` on corruption."""
    shape = tuple(int(s) for s in shape)
    n = int(np.prod(shape)) if shape else 0
    if n != bs.symbol_count:
        raise DecodeError(f"bitstream holds {bs.symbol_count} symbols, shape {shape} needs {n}")
    if not _pmf_id_matches(bs, em):
        raise DecodeError("bitstream was coded with a different entropy model")
    if n and shape[0] != em.n_channels:
        raise DecodeError(f"shape {shape} does not match a {em.n_channels}-channel model")
    bits = np.unpackbits(np.frombuffer(bs.payload, dtype=np.uint8))
    if np.any(bits[bs.bit_length:]):
        raise DecodeError("payload has set bits beyond bit_length")
    channels = _channel_ids(shape) if n else np.zeros(0, dtype=np.int64)
    n_ctx, offsets, n0, n1 = em._contexts
    G = bc.n_groups(em.n_symbols)
    ranks, status = bc.decode_ranks(bits, bs.bit_length, channels, G, em.n_symbols,
                                    n_ctx, offsets, n0, n1)
    if status == 1:
        raise DecodeError("decoded an index outside the model support")
    if status == 2:
        raise DecodeError("payload continues past the coder's termination point")
    values_by_rank, _ = em._rank_tables
    idx = values_by_rank[ranks].reshape(shape) if n else np.zeros(shape)
    return LatentTensor(step * idx.astype(np.float64), quantized=True, step=step)
