"""Learned rate-distortion CSI codec with entropy-coded latents."""

from __future__ import annotations

import logging

import numpy as np
import torch
from sklearn.base import TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import check_channels
from ..errors import DecodeError, NumericalError
from .autoencoder import ConvAutoencoderBase
from .entropy import (
    EntropyModel,
    LatentBitstream,
    LatentTensor,
    arith_decode,
    arith_encode,
    fit_entropy_model,
)
from .losses import SoftRate, ste_round

log = logging.getLogger(__name__)

DEFAULT_ENCODER = (
    (256, (9, 9), (2, 2)),
    (64, (5, 5), (2, 2)),
    (32, (5, 5), (1, 1)),
)


class DeepCMC(TransformerMixin, ConvAutoencoderBase):
    """Convolutional CSI compressor trained on ``MSE + rd_lambda * rate``.

    ``transform`` returns quantized latents (multiples of ``latent_step``),
    ``inverse_transform`` decodes them, and ``compress``/``decompress`` add
    the arithmetic-coding stage. One fitted instance is one operating point;
    keep a bank of instances for several rates.

    Parameters
    ----------
    encoder_layers : sequence of (features, kernel, stride)
        Encoder stages; the decoder mirrors them.
    residual_blocks : int
        Residual blocks in the decoder, one after each of its first stages.
    rd_lambda : float
        Price of one bit per CSI entry in units of per-entry MSE.
    latent_step : float
        Quantizer step. The network learns the latent scale, so 1.0 is fine.
    input_scale : float or None
        Global amplitude normalization; ``None`` uses the training-set RMS.
    entropy_refresh : int
        Refit the histogram entropy model every this many epochs.
    """

    _model_kind = "deepcmc"

    def __init__(self, encoder_layers=DEFAULT_ENCODER, residual_blocks=2, residual_kernel=3,
                 batch_norm=True, latent_step=1.0, rd_lambda=0.01, n_epochs=30, batch_size=100,
                 learning_rate=1e-3, entropy_refresh=1, smoothing=1e-3, input_scale=None,
                 dtype="float32", random_state=0, verbose=False):
        self.encoder_layers = encoder_layers
        self.residual_blocks = residual_blocks
        self.residual_kernel = residual_kernel
        self.batch_norm = batch_norm
        self.latent_step = latent_step
        self.rd_lambda = rd_lambda
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.entropy_refresh = entropy_refresh
        self.smoothing = smoothing
        self.input_scale = input_scale
        self.dtype = dtype
        self.random_state = random_state
        self.verbose = verbose

    # -- training -----------------------------------------------------------
    def _latent_indices(self, P: torch.Tensor) -> np.ndarray:
        self._eval()
        out = []
        with torch.no_grad():
            for sl in self._chunks(len(P)):
                z = self.encoder_(P[sl]) / self.latent_step
                out.append(torch.round(z).numpy().astype(np.int64))
        return np.concatenate(out)

    def _refit_entropy(self, indices: np.ndarray) -> EntropyModel:
        return fit_entropy_model(indices, smoothing=self.smoothing)

    def fit(self, X, y=None):
        """Train on channels ``X`` shaped ``(n, K, N_B[, N_U])``."""
        if self.rd_lambda < 0:
            raise ValueError("rd_lambda must be nonnegative")
        if self.latent_step <= 0:
            raise ValueError("latent_step must be positive")
        X = check_channels(X)
        self.n_ue_ = X.shape[3]
        self.input_shape_ = X.shape[1:]
        self._check_shape(X)
        self.input_scale_ = self._scale_for(X)
        self._build(self.n_ue_)
        P = self._to_tensor(X)
        entries = float(np.prod(X.shape[1:]))
        step = float(self.latent_step)

        self.entropy_model_ = self._refit_entropy(self._latent_indices(P))
        params = self._parameters()
        opt = torch.optim.Adam(params, lr=self.learning_rate)
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(1, self.n_epochs),
                                                           eta_min=0.05 * self.learning_rate)
        gen = torch.Generator().manual_seed(self.random_state if self.random_state is not None else 0)
        self.training_log_ = []
        for epoch in range(self.n_epochs):
            rate = SoftRate(self.entropy_model_, P.dtype)
            self._train()
            sums = np.zeros(3)
            collected = []
            for idx in self._minibatches(len(P), gen):
                x = P[idx]
                z = self.encoder_(x)
                x_hat = self.decoder_(ste_round(z, step))
                dist = ((x_hat - x) ** 2).sum(dim=(1, 2, 3)) / entries
                bits = rate(z / step) / entries
                loss = (dist + self.rd_lambda * bits).mean()
                if not torch.isfinite(loss):
                    raise NumericalError(f"loss became non-finite in epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                with torch.no_grad():
                    q = torch.round(z / step)
                    sums += len(idx) * np.array([loss.item(), dist.mean().item(),
                                                 (rate(q) / entries).mean().item()])
                    collected.append(q.numpy().astype(np.int64))
            sched.step()
            loss_, mse_, bpe_ = sums / len(P)
            self.training_log_.append({"epoch": epoch, "loss": loss_, "mse": mse_,
                                       "rate_bits_per_entry": bpe_})
            if self.verbose:
                log.info("epoch %d loss %.5f mse %.5f rate %.4f b/entry", epoch, loss_, mse_, bpe_)
            if (epoch + 1) % max(1, self.entropy_refresh) == 0:
                self.entropy_model_ = self._refit_entropy(np.concatenate(collected))
        self.entropy_model_ = self._refit_entropy(self._latent_indices(P))
        self._eval()
        return self

    # -- inference ----------------------------------------------------------
    def transform(self, X) -> np.ndarray:
        """Quantized latents ``(n, C, K/down, N_B/down)``."""
        z = self.encode_features(X)
        return self.latent_step * np.round(z / self.latent_step)

    def inverse_transform(self, Z) -> np.ndarray:
        """Decode latents back to channels ``(n, K, N_B, N_U)``."""
        check_is_fitted(self, "decoder_")
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim == 3:
            Z = Z[None]
        C = self._layers()[-1].features
        if Z.ndim != 4 or Z.shape[1] != C:
            raise ValueError(f"expected latents shaped (n, {C}, H, W), got {Z.shape}")
        self._eval()
        out = []
        with torch.no_grad():
            for sl in self._chunks(len(Z)):
                zt = torch.as_tensor(Z[sl], dtype=self._torch_dtype())
                out.append(self._from_tensor(self.decoder_(zt)))
        return np.concatenate(out)

    def reconstruct(self, X) -> np.ndarray:
        return self.inverse_transform(self.transform(X))

    def compress(self, X) -> list[LatentBitstream]:
        """Entropy-code each sample's quantized latent."""
        Z = self.transform(X)
        return [arith_encode(LatentTensor(z, quantized=True, step=self.latent_step),
                             self.entropy_model_) for z in Z]

    def decompress(self, streams, channel_shape=None) -> np.ndarray:
        """Decode bitstreams; ``channel_shape`` defaults to the training shape."""
        check_is_fitted(self, "entropy_model_")
        shape = self.latent_shape(channel_shape or self.input_shape_)
        Z = []
        for bs in streams:
            if isinstance(bs, (bytes, bytearray)):
                bs = LatentBitstream.from_bytes(bytes(bs))
            Z.append(arith_decode(bs, self.entropy_model_, shape, self.latent_step).values)
        if not Z:
            raise DecodeError("no bitstreams to decode")
        return self.inverse_transform(np.stack(Z))

    # -- checkpoints --------------------------------------------------------
    def _extra_arch(self) -> dict:
        em = self.entropy_model_
        return {"latent_step": self.latent_step, "rd_lambda": self.rd_lambda,
                "pmf_id": str(em.pmf_id), "entropy_model": em.to_dict(),
                "training_log": self.training_log_}

    def _load_extra(self, arch: dict) -> None:
        self.entropy_model_ = EntropyModel.from_dict(arch["entropy_model"])
        self.training_log_ = arch.get("training_log", [])
