"""Fully convolutional feature encoder/decoder used by both feedback schemes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


@dataclass(frozen=True)
class LayerSpec:
    """One ``Conv | features | kernel | stride`` encoder stage."""

    features: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)

    def __post_init__(self):
        kernel = _pair(self.kernel)
        stride = _pair(self.stride)
        if self.features < 1 or min(kernel) < 1 or min(stride) < 1:
            raise ValueError(f"invalid layer {self}")
        if kernel[0] % 2 == 0 or kernel[1] % 2 == 0:
            raise ValueError("kernels must have odd sizes for 'same' padding")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "stride", stride)

    def to_list(self) -> list:
        return [self.features, list(self.kernel), list(self.stride)]

    @classmethod
    def coerce(cls, spec) -> "LayerSpec":
        if isinstance(spec, LayerSpec):
            return spec
        if isinstance(spec, dict):
            return cls(**spec)
        return cls(*spec)


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return (int(v), int(v))
    a, b = v
    return (int(a), int(b))


def total_stride(layers) -> tuple[int, int]:
    sh = sw = 1
    for layer in map(LayerSpec.coerce, layers):
        sh *= layer.stride[0]
        sw *= layer.stride[1]
    return sh, sw


def _conv(cin, cout, kernel, stride=(1, 1)):
    return nn.Conv2d(cin, cout, kernel, stride=stride, padding=(kernel[0] // 2, kernel[1] // 2))


def _stage(cin, cout, kernel, stride, batch_norm):
    mods = [_conv(cin, cout, kernel, stride)]
    if batch_norm:
        mods.append(nn.BatchNorm2d(cout))
    mods.append(nn.PReLU(cout))
    return mods


class ResidualBlock(nn.Module):
    """Two stride-1 convolutions with an element-wise-addition shortcut."""

    def __init__(self, features: int, kernel=(3, 3), batch_norm: bool = True):
        super().__init__()
        kernel = _pair(kernel)
        mods = _stage(features, features, kernel, (1, 1), batch_norm)
        mods.append(_conv(features, features, kernel))
        if batch_norm:
            mods.append(nn.BatchNorm2d(features))
        self.body = nn.Sequential(*mods)

    def forward(self, x):
        return x + self.body(x)


class FeatureEncoder(nn.Module):
    """Strided conv stages; the last stage is linear and emits the latent."""

    def __init__(self, in_channels: int, layers, batch_norm: bool = True):
        super().__init__()
        layers = [LayerSpec.coerce(l) for l in layers]
        mods = []
        cin = in_channels
        for i, layer in enumerate(layers):
            if i == len(layers) - 1:
                mods.append(_conv(cin, layer.features, layer.kernel, layer.stride))
            else:
                mods.extend(_stage(cin, layer.features, layer.kernel, layer.stride, batch_norm))
            cin = layer.features
        self.net = nn.Sequential(*mods)

    def forward(self, x):
        return self.net(x)


class FeatureDecoder(nn.Module):
    """Mirror of :class:`FeatureEncoder` with nearest-neighbour upsampling.

    Stage ``i`` undoes encoder stage ``n-1-i``; the first
    ``residual_blocks`` stages are each followed by a residual block and the
    final stage is linear so the output can take any sign.
    """

    def __init__(self, out_channels: int, layers, residual_blocks: int = 2,
                 residual_kernel=(3, 3), batch_norm: bool = True):
        super().__init__()
        layers = [LayerSpec.coerce(l) for l in layers]
        n = len(layers)
        mods = []
        cin = layers[-1].features
        for i in range(n):
            enc = layers[n - 1 - i]
            cout = layers[n - 2 - i].features if i < n - 1 else out_channels
            if enc.stride != (1, 1):
                mods.append(nn.Upsample(scale_factor=enc.stride, mode="nearest"))
            if i == n - 1:
                mods.append(_conv(cin, cout, enc.kernel))
            else:
                mods.extend(_stage(cin, cout, enc.kernel, (1, 1), batch_norm))
            if i < residual_blocks and i < n - 1:
                mods.append(ResidualBlock(cout, residual_kernel, batch_norm))
            cin = cout
        self.net = nn.Sequential(*mods)

    def forward(self, z):
        return self.net(z)


def channels_to_planes(X: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """``(n, K, N_B, N_U)`` complex -> ``(n, 2 N_U, K, N_B)`` real planes."""
    Xs = X / scale
    re = np.moveaxis(Xs.real, 3, 1)
    im = np.moveaxis(Xs.imag, 3, 1)
    return np.concatenate([re, im], axis=1)


def planes_to_channels(P: np.ndarray, scale: float = 1.0) -> np.ndarray:
    n_u = P.shape[1] // 2
    re = np.moveaxis(P[:, :n_u], 1, 3)
    im = np.moveaxis(P[:, n_u:], 1, 3)
    return scale * (re + 1j * im)


def state_tensors(module: nn.Module) -> list[tuple[str, torch.Tensor]]:
    """Floating-point parameters and buffers in ``state_dict`` order."""
    return [(k, v) for k, v in module.state_dict().items() if v.is_floating_point()]


def export_weights(module: nn.Module) -> tuple[bytes, list[dict]]:
    entries = state_tensors(module)
    blob = b"".join(v.detach().cpu().numpy().astype("<f4").tobytes() for _, v in entries)
    table = [{"name": k, "shape": list(v.shape)} for k, v in entries]
    return blob, table


def import_weights(module: nn.Module, blob: bytes, table: list[dict]) -> None:
    flat = np.frombuffer(blob, dtype="<f4")
    state = module.state_dict()
    offset = 0
    for entry in table:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        if entry["name"] not in state or tuple(state[entry["name"]].shape) != shape:
            raise ValueError(f"checkpoint tensor {entry['name']} {shape} does not fit the model")
        chunk = flat[offset:offset + size].reshape(shape)
        state[entry["name"]] = torch.as_tensor(chunk.copy(), dtype=state[entry["name"]].dtype)
        offset += size
    if offset != flat.size:
        raise ValueError("weights.bin size does not match arch.json")
    module.load_state_dict(state)
