"""Analog CSI feedback: the autoencoder transmits its features as channel symbols.

Encoder features are paired into complex symbols, normalized to unit
average power and sent over ``N_F`` SIMO uplink subcarriers; the BS applies
MRC and decodes. The channel and MRC sit inside the network as layers
without parameters, so the model is trained with noise and fading in the
loop.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import torch
from sklearn.utils.validation import check_is_fitted

from ._validation import check_channels, check_random_state
from .channel_gen import ScenarioConfig
from .codec.autoencoder import ConvAutoencoderBase
from .codec.networks import LayerSpec, total_stride
from .errors import NumericalError
from .feedback import FeedbackConfig, FeedbackRealization, draw_realization, uplink_scenario

log = logging.getLogger(__name__)


def analog_layers(hidden, n_feedback: int, channel_shape, kernel=(3, 3)) -> list[tuple]:
    """Append a stride-1 latent stage sized so the encoder emits ``2 N_F`` reals."""
    hidden = [LayerSpec.coerce(l) for l in hidden]
    sh, sw = total_stride(hidden)
    positions = (channel_shape[0] // sh) * (channel_shape[1] // sw)
    if (2 * n_feedback) % positions:
        raise ValueError(
            f"2*N_F = {2 * n_feedback} reals cannot be spread over {positions} latent positions"
        )
    layers = [l.to_list() for l in hidden]
    layers.append([2 * n_feedback // positions, list(kernel), [1, 1]])
    return [tuple(l) for l in layers]


def channel_layer(z: torch.Tensor, H: torch.Tensor | None, noise: torch.Tensor | None) -> torch.Tensor:
    """Pair, power-normalize, send over ``H`` ``(n|1, N_F, N_B)`` with MRC, and unpair.

    ``H=None`` bypasses the channel (pairing and normalization still apply).
    """
    n = z.shape[0]
    flat = z.reshape(n, -1)
    x = torch.complex(flat[:, 0::2], flat[:, 1::2])
    n_f = x.shape[1]
    norm = torch.linalg.vector_norm(x, dim=1, keepdim=True)
    x = torch.where(norm > 0, x * (math.sqrt(n_f) / torch.clamp(norm, min=1e-30)), x)
    if H is not None:
        y = H * x.unsqueeze(-1)
        if noise is not None:
            y = y + noise
        gain = (H.abs() ** 2).sum(-1)
        x = (H.conj() * y).sum(-1) / gain
    out = torch.stack([x.real, x.imag], dim=-1).reshape(n, -1)
    return out.reshape(z.shape)


class AnalogDeepCMC(ConvAutoencoderBase):
    """Joint source-channel CSI autoencoder for ``N_F`` uplink subcarriers.

    The last encoder stage must produce exactly ``2 * n_feedback_subcarriers``
    reals per sample; :func:`analog_layers` builds such a layer list. A model
    is tied to one overhead ``rho = N_F / K_u`` and one training SNR.
    """

    _model_kind = "analog-deepcmc"

    def __init__(self, encoder_layers=None, n_feedback_subcarriers=16, k_uplink=256, snr_db=10.0,
                 channel_in_loop=True, uplink=None, residual_blocks=2, residual_kernel=3,
                 batch_norm=True, n_epochs=30, batch_size=100, learning_rate=1e-3,
                 input_scale=None, dtype="float32", random_state=0, verbose=False):
        self.encoder_layers = encoder_layers
        self.n_feedback_subcarriers = n_feedback_subcarriers
        self.k_uplink = k_uplink
        self.snr_db = snr_db
        self.channel_in_loop = channel_in_loop
        self.uplink = uplink
        self.residual_blocks = residual_blocks
        self.residual_kernel = residual_kernel
        self.batch_norm = batch_norm
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.input_scale = input_scale
        self.dtype = dtype
        self.random_state = random_state
        self.verbose = verbose

    @property
    def feedback_config(self) -> FeedbackConfig:
        return FeedbackConfig(self.k_uplink, self.n_feedback_subcarriers, self.snr_db,
                              self.random_state or 0)

    def _layers(self):
        if self.encoder_layers is None:
            raise ValueError("encoder_layers must be given; see analog_layers()")
        return super()._layers()

    def _check_shape(self, X):
        super()._check_shape(X)
        C, h, w = self.latent_shape(X.shape[1:])
        if C * h * w != 2 * self.n_feedback_subcarriers:
            raise ValueError(
                f"encoder emits {C * h * w} reals per sample but N_F = {self.n_feedback_subcarriers} "
                f"needs {2 * self.n_feedback_subcarriers}"
            )

    def _uplink_scenario(self, n_bs: int) -> ScenarioConfig:
        up = self.uplink
        if isinstance(up, dict):
            up = ScenarioConfig.from_dict(up)
        if up is None or up.ofdm.n_subcarriers != self.k_uplink:
            up = uplink_scenario(up, self.k_uplink, n_bs)
        return up

    def _channel_tensors(self, fr: FeedbackRealization, n: int, rng: np.random.Generator):
        ctype = torch.complex64 if self._torch_dtype() == torch.float32 else torch.complex128
        H = torch.as_tensor(fr.channels, dtype=ctype).unsqueeze(0)
        noise = None
        if fr.noise_variance > 0:
            z = rng.standard_normal((2, n, *fr.channels.shape))
            noise = torch.as_tensor(np.sqrt(fr.noise_variance / 2) * (z[0] + 1j * z[1]), dtype=ctype)
        return H, noise

    def _forward(self, x, fr, rng):
        z = self.encoder_(x)
        if self.channel_in_loop:
            H, noise = self._channel_tensors(fr, len(x), rng)
            z = channel_layer(z, H, noise)
        else:
            z = channel_layer(z, None, None)
        return self.decoder_(z)

    def fit(self, X, y=None):
        """Train end to end with a fresh uplink realization for every minibatch."""
        X = check_channels(X)
        self.n_ue_ = X.shape[3]
        self.input_shape_ = X.shape[1:]
        self._check_shape(X)
        self.input_scale_ = self._scale_for(X)
        self._build(self.n_ue_)
        up = self._uplink_scenario(X.shape[2])
        self.uplink_ = up.to_dict()
        cfg = self.feedback_config
        P = self._to_tensor(X)
        entries = float(np.prod(X.shape[1:]))
        rng = np.random.default_rng([self.random_state or 0, 1])
        gen = torch.Generator().manual_seed(self.random_state or 0)
        opt = torch.optim.Adam(self._parameters(), lr=self.learning_rate)
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(1, self.n_epochs),
                                                           eta_min=0.05 * self.learning_rate)
        self.training_log_ = []
        for epoch in range(self.n_epochs):
            self._train()
            total = 0.0
            for idx in self._minibatches(len(P), gen):
                fr = draw_realization(cfg, up, rng)
                x = P[idx]
                x_hat = self._forward(x, fr, rng)
                loss = (((x_hat - x) ** 2).sum(dim=(1, 2, 3)) / entries).mean()
                if not torch.isfinite(loss):
                    raise NumericalError(f"loss became non-finite in epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
            sched.step()
            self.training_log_.append({"epoch": epoch, "mse": total / len(P)})
            if self.verbose:
                log.info("epoch %d mse %.5f", epoch, total / len(P))
        self._eval()
        return self

    def predict(self, X, realizations=None, snr_db=None, rng=None) -> np.ndarray:
        """Reconstruct ``X`` after analog transmission.

        ``realizations`` is one :class:`FeedbackRealization` per sample (or a
        single one shared by all); by default each sample gets a fresh draw
        at ``snr_db`` (the training SNR unless overridden).
        """
        X = self._prepare(X)
        rng = check_random_state(self.random_state if rng is None else rng)
        if realizations is None:
            cfg = self.feedback_config
            if snr_db is not None:
                cfg = FeedbackConfig(cfg.k_uplink, cfg.n_feedback_subcarriers, snr_db,
                                     cfg.subcarrier_selection_seed)
            up = self._uplink_scenario(X.shape[2])
            realizations = [draw_realization(cfg, up, rng) for _ in range(len(X))]
        elif isinstance(realizations, FeedbackRealization):
            realizations = [realizations] * len(X)
        if len(realizations) != len(X):
            raise ValueError("need one feedback realization per sample")
        for fr in realizations:
            if fr.n_feedback != self.n_feedback_subcarriers:
                raise ValueError(
                    f"realization has {fr.n_feedback} subcarriers, model uses {self.n_feedback_subcarriers}"
                )
        self._eval()
        out = []
        with torch.no_grad():
            for sl in self._chunks(len(X)):
                x = self._to_tensor(X[sl])
                z = self.encoder_(x)
                frs = realizations[sl]
                Hs, noises = zip(*(self._channel_tensors(fr, 1, rng) for fr in frs))
                H = torch.cat(Hs)
                noise = None
                if any(nz is not None for nz in noises):
                    noise = torch.cat([nz if nz is not None else torch.zeros_like(H[:1]) for nz in noises])
                out.append(self._from_tensor(self.decoder_(channel_layer(z, H, noise))))
        return np.concatenate(out)

    def reconstruct(self, X) -> np.ndarray:
        return self.predict(X)

    def _extra_arch(self) -> dict:
        return {"uplink_scenario": self.uplink_, "training_log": self.training_log_}

    def _load_extra(self, arch: dict) -> None:
        self.uplink_ = arch.get("uplink_scenario")
        self.training_log_ = arch.get("training_log", [])


def analog_feedback_forward(h_d, fr: FeedbackRealization, model: AnalogDeepCMC, rng=None) -> np.ndarray:
    """One channel tensor through encoder, pairing, normalization, SIMO channel, MRC and decoder."""
    h = np.asarray(getattr(h_d, "data", h_d))
    check_is_fitted(model, "encoder_")
    return model.predict(h[None], realizations=[fr], rng=rng)[0]
