"""Learned CSI codec, entropy coding and the DCT baseline."""

from .dct import DctBitstream, dct_baseline_compress, dct_baseline_decompress
from .deepcmc import DeepCMC
from .entropy import (
    EntropyModel,
    LatentBitstream,
    LatentTensor,
    arith_decode,
    arith_encode,
    entropy_rate,
    fit_entropy_model,
    quantize_latent,
)
from .losses import SoftRate, rd_loss, ste_round

__all__ = [
    "DctBitstream", "DeepCMC", "EntropyModel", "LatentBitstream", "LatentTensor", "SoftRate",
    "arith_decode", "arith_encode", "dct_baseline_compress", "dct_baseline_decompress",
    "entropy_rate", "fit_entropy_model", "quantize_latent", "rd_loss", "ste_round",
]
