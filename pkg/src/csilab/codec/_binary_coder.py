"""Adaptive binary arithmetic coder over Exp-Golomb binarized symbols.

Symbols arrive as ranks ``u`` in ``[0, M)``. Each rank is binarized as a
unary group prefix (group ``g`` holds ``2**g`` ranks) followed by ``g``
suffix bits, MSB first. Every prefix position and every internal node of
each group's suffix tree owns an adaptive context, so with contexts
initialised from a PMF the binarization loses nothing against the PMF.

The coder is the classic 32-bit low/high interval coder with pending
(underflow) bits. Probabilities are 16-bit and come from per-context
integer counts that are halved once their total exceeds ``COUNT_LIMIT``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

PRECISION = 32
FULL = (1 << PRECISION) - 1
HALF = 1 << (PRECISION - 1)
QUARTER = 1 << (PRECISION - 2)
THREE_QUARTER = 3 * QUARTER

PROB_BITS = 16
PRIOR_WEIGHT = 4096
COUNT_INCREMENT = 32
COUNT_LIMIT = 1 << 16


def n_groups(M: int) -> int:
    """Number of Exp-Golomb groups needed to cover ``M`` ranks."""
    G = 0
    while (1 << G) - 1 < M:
        G += 1
    return max(G, 1)


def context_layout(M: int) -> tuple[int, np.ndarray]:
    """Per-channel context count and the suffix-context offset of each group."""
    G = n_groups(M)
    offsets = np.zeros(G, dtype=np.int64)
    acc = G - 1
    for g in range(G):
        offsets[g] = acc
        acc += (1 << g) - 1
    return acc, offsets


def initial_counts(pmfs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Context counts ``(n0, n1)`` reproducing each channel's PMF exactly.

    ``pmfs`` is ``(C, M)`` indexed by rank.
    """
    C, M = pmfs.shape
    G = n_groups(M)
    n_ctx, offsets = context_layout(M)
    p1 = np.full((C, n_ctx), 0.5)
    padded = np.zeros((C, (1 << G) - 1))
    padded[:, :M] = pmfs
    cum = np.concatenate([np.zeros((C, 1)), np.cumsum(padded, axis=1)], axis=1)

    def mass(a, b):
        return cum[:, b] - cum[:, a]

    total = cum[:, -1]
    for i in range(G - 1):
        # reached prefix position i means u >= 2**i - 1
        reach = total - cum[:, (1 << i) - 1]
        more = total - cum[:, (1 << (i + 1)) - 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            p1[:, i] = np.where(reach > 0, more / reach, 0.5)
    for g in range(1, G):
        base = (1 << g) - 1
        for node in range(1, 1 << g):
            depth = node.bit_length() - 1
            path = node - (1 << depth)
            width = 1 << (g - depth)
            a = base + path * width
            whole = mass(a, a + width)
            right = mass(a + width // 2, a + width)
            with np.errstate(invalid="ignore", divide="ignore"):
                p1[:, offsets[g] + node - 1] = np.where(whole > 0, right / whole, 0.5)
    n1 = np.clip(np.rint(p1 * PRIOR_WEIGHT), 1, PRIOR_WEIGHT - 1).astype(np.int64)
    n0 = PRIOR_WEIGHT - n1
    return n0, n1


@njit(cache=True)
def _prob_one(n0, n1):
    p = (n1 << PROB_BITS) // (n0 + n1)
    if p < 1:
        p = 1
    elif p > (1 << PROB_BITS) - 1:
        p = (1 << PROB_BITS) - 1
    return p


@njit(cache=True)
def _update(n0, n1, ctx, bit):
    if bit:
        n1[ctx] += COUNT_INCREMENT
    else:
        n0[ctx] += COUNT_INCREMENT
    if n0[ctx] + n1[ctx] > COUNT_LIMIT:
        n0[ctx] = (n0[ctx] + 1) >> 1
        n1[ctx] = (n1[ctx] + 1) >> 1


@njit(cache=True)
def _emit(out, pos, bit, pending):
    out[pos] = bit
    pos += 1
    for _ in range(pending):
        out[pos] = 1 - bit
        pos += 1
    return pos


@njit(cache=True)
def encode_ranks(ranks, channels, G, n_ctx, offsets, n0_init, n1_init):
    """Code ``ranks`` (one channel id per symbol); returns (bits, n_bits)."""
    n0 = n0_init.copy().ravel()
    n1 = n1_init.copy().ravel()
    out = np.zeros(ranks.size * (G * 2 + 1) * (PROB_BITS + 1) + 64, dtype=np.uint8)
    pos = 0
    pending = 0
    low = 0
    high = FULL
    for s in range(ranks.size):
        u = ranks[s]
        base_ctx = channels[s] * n_ctx
        g = 0
        while g < G - 1 and u >= (1 << (g + 1)) - 1:
            g += 1
        n_bins = 0
        # prefix bins, then suffix bins
        for step in range(2 * G):
            if step < G - 1:
                if step > g:
                    continue
                bit = 1 if step < g else 0
                ctx = base_ctx + step
            else:
                d = step - (G - 1)
                if d >= g:
                    continue
                r = u - ((1 << g) - 1)
                node = (r >> (g - d)) | (1 << d)
                bit = (r >> (g - 1 - d)) & 1
                ctx = base_ctx + offsets[g] + node - 1
            n_bins += 1
            p1 = _prob_one(n0[ctx], n1[ctx])
            rng = high - low + 1
            split = low + ((rng * ((1 << PROB_BITS) - p1)) >> PROB_BITS) - 1
            if bit:
                low = split + 1
            else:
                high = split
            _update(n0, n1, ctx, bit)
            while True:
                if high < HALF:
                    pos = _emit(out, pos, 0, pending)
                    pending = 0
                elif low >= HALF:
                    pos = _emit(out, pos, 1, pending)
                    pending = 0
                    low -= HALF
                    high -= HALF
                elif low >= QUARTER and high < THREE_QUARTER:
                    pending += 1
                    low -= QUARTER
                    high -= QUARTER
                else:
                    break
                low = low << 1
                high = (high << 1) | 1
    if ranks.size > 0:
        pending += 1
        if low < QUARTER:
            pos = _emit(out, pos, 0, pending)
        else:
            pos = _emit(out, pos, 1, pending)
    return out, pos


@njit(cache=True)
def decode_ranks(bits, n_bits, channels, G, M, n_ctx, offsets, n0_init, n1_init):
    """Inverse of ``encode_ranks``.

    Returns ``(ranks, status)``; status 0 is success, 1 an out-of-support
    rank, 2 payload bits beyond the coder's terminating position.
    """
    n_sym = channels.size
    ranks = np.zeros(n_sym, dtype=np.int64)
    if n_sym == 0:
        return ranks, 0 if n_bits == 0 else 2
    n0 = n0_init.copy().ravel()
    n1 = n1_init.copy().ravel()
    low = 0
    high = FULL
    code = 0
    pos = 0
    for _ in range(PRECISION):
        b = bits[pos] if pos < n_bits else 0
        code = (code << 1) | b
        pos += 1
    shifts = 0
    for s in range(n_sym):
        base_ctx = channels[s] * n_ctx
        g = 0
        r = 0
        in_prefix = True
        d = 0
        while True:
            if in_prefix and g < G - 1:
                ctx = base_ctx + g
            elif d < g:
                in_prefix = False
                node = r | (1 << d)
                ctx = base_ctx + offsets[g] + node - 1
            else:
                break
            p1 = _prob_one(n0[ctx], n1[ctx])
            rng = high - low + 1
            split = low + ((rng * ((1 << PROB_BITS) - p1)) >> PROB_BITS) - 1
            if code <= split:
                bit = 0
                high = split
            else:
                bit = 1
                low = split + 1
            _update(n0, n1, ctx, bit)
            while True:
                if high < HALF:
                    pass
                elif low >= HALF:
                    low -= HALF
                    high -= HALF
                    code -= HALF
                elif low >= QUARTER and high < THREE_QUARTER:
                    low -= QUARTER
                    high -= QUARTER
                    code -= QUARTER
                else:
                    break
                low = low << 1
                high = (high << 1) | 1
                b = bits[pos] if pos < n_bits else 0
                code = (code << 1) | b
                pos += 1
                shifts += 1
            if in_prefix:
                if bit == 1:
                    g += 1
                else:
                    in_prefix = False
            else:
                r = (r << 1) | bit
                d += 1
        u = (1 << g) - 1 + r
        if u >= M:
            return ranks, 1
        ranks[s] = u
    if n_bits > shifts + 2:
        return ranks, 2
    return ranks, 0
