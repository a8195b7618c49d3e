"""Shared plumbing for the convolutional CSI autoencoders (digital and analog)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import check_channels
from ..metrics import nmse
from .networks import (
    FeatureDecoder,
    FeatureEncoder,
    LayerSpec,
    channels_to_planes,
    export_weights,
    import_weights,
    planes_to_channels,
    total_stride,
)

CHECKPOINT_VERSION = 1
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class ConvAutoencoderBase(BaseEstimator):
    """Builds, runs and (de)serialises an encoder/decoder pair.

    Subclasses implement ``fit`` and decide what travels between the two
    halves. Parameters follow the scikit-learn convention: constructor
    arguments are stored verbatim and fitted state ends in an underscore.
    """

    _model_kind = "autoencoder"
    _inference_chunk = 512

    # -- construction -----------------------------------------------------
    def _layers(self) -> list[LayerSpec]:
        return [LayerSpec.coerce(l) for l in self.encoder_layers]

    def _torch_dtype(self):
        try:
            return _DTYPES[self.dtype]
        except KeyError:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}, got {self.dtype!r}") from None

    def _build(self, n_ue: int) -> None:
        layers = self._layers()
        if not layers:
            raise ValueError("encoder_layers must not be empty")
        torch.manual_seed(self.random_state if self.random_state is not None else 0)
        dtype = self._torch_dtype()
        self.encoder_ = FeatureEncoder(2 * n_ue, layers, self.batch_norm).to(dtype)
        self.decoder_ = FeatureDecoder(
            2 * n_ue, layers, self.residual_blocks, self.residual_kernel, self.batch_norm
        ).to(dtype)

    def _check_shape(self, X: np.ndarray) -> None:
        K, n_b, n_u = X.shape[1:]
        sh, sw = total_stride(self._layers())
        if K % sh or n_b % sw:
            raise ValueError(
                f"channel grid ({K}, {n_b}) is not divisible by the encoder downsampling ({sh}, {sw})"
            )
        if hasattr(self, "n_ue_") and n_u != self.n_ue_:
            raise ValueError(f"model expects {self.n_ue_} UE antennas, got {n_u}")

    def latent_shape(self, channel_shape) -> tuple[int, int, int]:
        K, n_b = channel_shape[0], channel_shape[1]
        layers = self._layers()
        sh, sw = total_stride(layers)
        return (layers[-1].features, K // sh, n_b // sw)

    def _scale_for(self, X: np.ndarray) -> float:
        if self.input_scale is not None:
            return float(self.input_scale)
        return float(np.sqrt(np.mean(np.abs(X) ** 2)))

    def _to_tensor(self, X: np.ndarray) -> torch.Tensor:
        P = channels_to_planes(X, self.input_scale_)
        return torch.as_tensor(P, dtype=self._torch_dtype())

    def _from_tensor(self, P: torch.Tensor) -> np.ndarray:
        return planes_to_channels(P.detach().cpu().numpy().astype(np.float64), self.input_scale_)

    def _chunks(self, n: int):
        for start in range(0, n, self._inference_chunk):
            yield slice(start, min(n, start + self._inference_chunk))

    def _prepare(self, X) -> np.ndarray:
        check_is_fitted(self, "encoder_")
        X = check_channels(X)
        self._check_shape(X)
        return X

    def _eval(self):
        self.encoder_.eval()
        self.decoder_.eval()

    def _train(self):
        self.encoder_.train()
        self.decoder_.train()

    def _parameters(self):
        return list(self.encoder_.parameters()) + list(self.decoder_.parameters())

    def _minibatches(self, n: int, generator: torch.Generator):
        perm = torch.randperm(n, generator=generator)
        for start in range(0, n, self.batch_size):
            yield perm[start:start + self.batch_size]

    def encode_features(self, X) -> np.ndarray:
        """Unquantized latent features ``(n, C, K/down, N_B/down)``."""
        X = self._prepare(X)
        self._eval()
        out = []
        with torch.no_grad():
            for sl in self._chunks(len(X)):
                out.append(self.encoder_(self._to_tensor(X[sl])).numpy().astype(np.float64))
        return np.concatenate(out)

    def score(self, X, y=None) -> float:
        """Negative NMSE in dB (higher is better), for model selection tools."""
        X = check_channels(X)
        return -nmse(X, self.reconstruct(X))

    # -- checkpoints ------------------------------------------------------
    def _extra_arch(self) -> dict:
        return {}

    def _load_extra(self, arch: dict) -> None:
        pass

    def save(self, path) -> Path:
        """Write ``arch.json`` and ``weights.bin`` into directory ``path``."""
        check_is_fitted(self, "encoder_")
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        enc_blob, enc_table = export_weights(self.encoder_)
        dec_blob, dec_table = export_weights(self.decoder_)
        params = {k: (v.to_dict() if hasattr(v, "to_dict") else v)
                  for k, v in self.get_params().items()}
        params["encoder_layers"] = [l.to_list() for l in self._layers()]
        arch = {
            "format_version": CHECKPOINT_VERSION,
            "model": self._model_kind,
            "params": params,
            "input_shape": list(self.input_shape_),
            "input_scale": self.input_scale_,
            "n_ue": self.n_ue_,
            "tensors": [dict(t, module="encoder") for t in enc_table]
            + [dict(t, module="decoder") for t in dec_table],
        }
        arch.update(self._extra_arch())
        with open(path / "arch.json", "w", encoding="utf-8") as fh:
            json.dump(arch, fh, indent=1)
            fh.write("\n")
        with open(path / "weights.bin", "wb") as fh:
            fh.write(enc_blob + dec_blob)
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path / "arch.json", encoding="utf-8") as fh:
            arch = json.load(fh)
        if arch.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {arch.get('format_version')}")
        if arch.get("model") != cls._model_kind:
            raise ValueError(f"checkpoint holds a {arch.get('model')!r} model, not {cls._model_kind!r}")
        params = dict(arch["params"])
        params["encoder_layers"] = [tuple(l) for l in params["encoder_layers"]]
        model = cls(**params)
        model.n_ue_ = int(arch["n_ue"])
        model.input_shape_ = tuple(arch["input_shape"])
        model.input_scale_ = float(arch["input_scale"])
        model._load_extra(arch)
        model._build(model.n_ue_)
        blob = (path / "weights.bin").read_bytes()
        enc_table = [t for t in arch["tensors"] if t["module"] == "encoder"]
        dec_table = [t for t in arch["tensors"] if t["module"] == "decoder"]
        n_enc = sum(int(np.prod(t["shape"])) for t in enc_table) * 4
        import_weights(model.encoder_, blob[:n_enc], enc_table)
        import_weights(model.decoder_, blob[n_enc:], dec_table)
        model._eval()
        return model
