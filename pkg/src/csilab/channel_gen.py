"""Geometric multipath MIMO-OFDM channel generation and the dataset container.

Channels follow the clustered ULA model

    H_k = sqrt(N_U N_B / L) * sum_l a_l exp(-j 2 pi tau_l f_s k / K) a_U(theta_l) a_B(phi_l)^H

evaluated per subcarrier. Datasets store ``H_k^T`` so that every sample is a
``(K, N_B, N_U)`` array, matching the layout of ``tensors.bin``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_positive_int, check_positive_real

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
TENSORS_NAME = "tensors.bin"
LAYOUT = "per-sample real plane then imag plane; each plane (K, N_B, N_U) C-order"


@dataclass(frozen=True)
class ArrayConfig:
    n_bs_antennas: int = 8
    n_ue_antennas: int = 1
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        check_positive_int(self.n_bs_antennas, "n_bs_antennas")
        check_positive_int(self.n_ue_antennas, "n_ue_antennas")
        check_positive_real(self.spacing_over_wavelength, "spacing_over_wavelength")


@dataclass(frozen=True)
class OfdmConfig:
    n_subcarriers: int = 32
    sample_rate: float = 20e6

    def __post_init__(self):
        check_positive_int(self.n_subcarriers, "n_subcarriers")
        check_positive_real(self.sample_rate, "sample_rate")


@dataclass(frozen=True)
class MultipathParams:
    """Per-path gains, delays (s) and angles (rad) of one realization."""

    gains: np.ndarray
    delays: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.complex128).ravel()
        delays = np.asarray(self.delays, dtype=np.float64).ravel()
        aoa = np.asarray(self.aoa, dtype=np.float64).ravel()
        aod = np.asarray(self.aod, dtype=np.float64).ravel()
        n = gains.size
        if n < 1 or not (delays.size == aoa.size == aod.size == n):
            raise ValueError(
                "gains, delays, aoa and aod must be nonempty and of equal length, "
                f"got {gains.size}, {delays.size}, {aoa.size}, {aod.size}"
            )
        if np.any(delays < 0) or not np.all(np.isfinite(delays)):
            raise ValueError("path delays must be finite and nonnegative")
        for name, ang in (("aoa", aoa), ("aod", aod)):
            if np.any(np.abs(ang) > np.pi / 2 + 1e-12):
                raise ValueError(f"{name} angles must lie in [-pi/2, pi/2]")
        for name, value in (("gains", gains), ("delays", delays), ("aoa", aoa), ("aod", aod)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_paths(self) -> int:
        return self.gains.size


@dataclass(frozen=True)
class ScenarioConfig:
    """Statistics of the clustered multipath generator.

    ``delay_spread`` is the mean of the exponential delay draw and
    ``angle_spread`` the standard deviation of the Laplacian intra-cluster
    angle offsets.
    """

    array: ArrayConfig = field(default_factory=ArrayConfig)
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    path_count_range: tuple[int, int] = (4, 12)
    delay_spread: float = 100e-9
    angle_spread: float = 0.1
    cluster_count: int = 3
    rng_seed: int = 0
    name: str | None = None

    def __post_init__(self):
        if isinstance(self.array, dict):
            object.__setattr__(self, "array", ArrayConfig(**self.array))
        if isinstance(self.ofdm, dict):
            object.__setattr__(self, "ofdm", OfdmConfig(**self.ofdm))
        lo, hi = (int(v) for v in self.path_count_range)
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid path_count_range {self.path_count_range}")
        object.__setattr__(self, "path_count_range", (lo, hi))
        check_positive_real(self.delay_spread, "delay_spread")
        check_positive_real(self.angle_spread, "angle_spread")
        check_positive_int(self.cluster_count, "cluster_count")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.ofdm.n_subcarriers, self.array.n_bs_antennas, self.array.n_ue_antennas)

    @property
    def scenario_id(self) -> str:
        if self.name:
            return self.name
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return "scn-" + hashlib.sha256(blob).hexdigest()[:10]

    def replace(self, **changes) -> "ScenarioConfig":
        data = self.to_dict()
        data.update(changes)
        return ScenarioConfig.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["path_count_range"] = list(self.path_count_range)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        array = data.pop("array", {})
        ofdm = data.pop("ofdm", {})
        if not isinstance(array, ArrayConfig):
            array = ArrayConfig(**array)
        if not isinstance(ofdm, OfdmConfig):
            ofdm = OfdmConfig(**ofdm)
        if "path_count_range" in data:
            data["path_count_range"] = tuple(data["path_count_range"])
        return cls(array=array, ofdm=ofdm, **data)


@dataclass(frozen=True)
class ChannelTensor:
    data: np.ndarray
    scenario_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 3:
            raise ValueError(f"ChannelTensor must be (K, N_B, N_U), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("ChannelTensor entries must be finite")
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class DatasetManifest:
    scenario: dict | None
    scenario_id: str
    seed: int | None
    n_samples: int
    shape: tuple[int, int, int]
    scale: dict
    format_version: int = FORMAT_VERSION
    dtype: str = "float32-le"
    layout: str = LAYOUT

    def to_dict(self) -> dict:
        data = asdict(self)
        data["shape"] = list(self.shape)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        data = dict(data)
        data["shape"] = tuple(data["shape"])
        return cls(**data)


def steering_vector(angle: float, n_antennas: int, spacing_over_wavelength: float = 0.5) -> np.ndarray:
    """Unit-norm ULA response ``exp(-j 2 pi d m sin(angle)) / sqrt(N)``."""
    n_antennas = check_positive_int(n_antennas, "n_antennas")
    angle = float(angle)
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle}")
    m = np.arange(n_antennas)
    phase = -2j * np.pi * spacing_over_wavelength * m * np.sin(angle)
    return np.exp(phase) / np.sqrt(n_antennas)


def _steering_matrix(angles: np.ndarray, n_antennas: int, spacing: float) -> np.ndarray:
    # (n_antennas, L), one column per path
    m = np.arange(n_antennas)[:, None]
    return np.exp(-2j * np.pi * spacing * m * np.sin(angles)[None, :]) / np.sqrt(n_antennas)


def channel_response(
    mp: MultipathParams,
    array: ArrayConfig,
    ofdm: OfdmConfig,
    subcarriers=None,
) -> np.ndarray:
    """Evaluate ``H_k`` for several subcarriers; returns ``(len(k), N_U, N_B)``."""
    K = ofdm.n_subcarriers
    k = np.arange(K) if subcarriers is None else np.asarray(subcarriers)
    n_u, n_b = array.n_ue_antennas, array.n_bs_antennas
    a_u = _steering_matrix(mp.aoa, n_u, array.spacing_over_wavelength)
    a_b = _steering_matrix(mp.aod, n_b, array.spacing_over_wavelength)
    phases = np.exp(-2j * np.pi * np.outer(k, mp.delays) * ofdm.sample_rate / K)  # (k, L)
    weights = phases * mp.gains[None, :]
    scale = np.sqrt(n_u * n_b / mp.n_paths)
    return scale * np.einsum("kl,ul,bl->kub", weights, a_u, a_b.conj())


def channel_at_subcarrier(mp: MultipathParams, array: ArrayConfig, ofdm: OfdmConfig, k: int) -> np.ndarray:
    """Channel matrix ``H_k`` of shape ``(N_U, N_B)``."""
    if not 0 <= k < ofdm.n_subcarriers:
        raise ValueError(f"subcarrier index {k} outside [0, {ofdm.n_subcarriers})")
    return channel_response(mp, array, ofdm, [k])[0]


def sample_multipath(cfg: ScenarioConfig, rng: np.random.Generator) -> MultipathParams:
    """Draw one clustered multipath realization.

    Path powers decay exponentially in delay and are rescaled to sum to L,
    which makes ``E||H||_F^2 = K N_B N_U`` over the ensemble.
    """
    lo, hi = cfg.path_count_range
    n_paths = int(rng.integers(lo, hi + 1))
    delays = np.sort(rng.exponential(cfg.delay_spread, size=n_paths))

    half_pi = np.pi / 2
    centers_aod = rng.uniform(-half_pi, half_pi, size=cfg.cluster_count)
    centers_aoa = rng.uniform(-half_pi, half_pi, size=cfg.cluster_count)
    cluster = rng.integers(0, cfg.cluster_count, size=n_paths)
    # Laplace scale b gives standard deviation b * sqrt(2)
    b = cfg.angle_spread / np.sqrt(2)
    aod = np.clip(centers_aod[cluster] + rng.laplace(0.0, b, size=n_paths), -half_pi, half_pi)
    aoa = np.clip(centers_aoa[cluster] + rng.laplace(0.0, b, size=n_paths), -half_pi, half_pi)

    power = np.exp(-delays / cfg.delay_spread)
    power *= n_paths / power.sum()
    g = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2)
    return MultipathParams(gains=g * np.sqrt(power), delays=delays, aoa=aoa, aod=aod)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for sample ``index``; identical however samples are scheduled."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def generate_channel(cfg: ScenarioConfig, index: int, seed: int | None = None) -> np.ndarray:
    """Sample ``index`` of the scenario as a ``(K, N_B, N_U)`` array."""
    rng = sample_rng(cfg.rng_seed if seed is None else seed, index)
    mp = sample_multipath(cfg, rng)
    return channel_response(mp, cfg.array, cfg.ofdm).transpose(0, 2, 1)


def generate_channels(cfg: ScenarioConfig, n_samples: int, seed: int | None = None,
                      start: int = 0, n_jobs: int | None = None) -> np.ndarray:
    """Generate ``n_samples`` channels as ``(n, K, N_B, N_U)`` complex128."""
    indices = range(start, start + n_samples)
    if n_jobs and n_jobs != 1 and n_samples > 1:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=n_jobs)(delayed(generate_channel)(cfg, i, seed) for i in indices)
    else:
        parts = [generate_channel(cfg, i, seed) for i in indices]
    if not parts:
        return np.zeros((0, *cfg.shape), dtype=np.complex128)
    return np.stack(parts)


def _to_planes(X: np.ndarray) -> np.ndarray:
    # (n, K, N_B, N_U) complex -> (n, 2, K, N_B, N_U) little-endian float32
    planes = np.stack([X.real, X.imag], axis=1)
    return planes.astype("<f4")


def _scale_stats(X: np.ndarray) -> dict:
    if X.shape[0] == 0:
        return {"mean_power": None, "rms": None, "max_abs": None}
    power = float(np.mean(np.abs(X) ** 2))
    return {"mean_power": power, "rms": math.sqrt(power), "max_abs": float(np.max(np.abs(X)))}


def write_dataset(X: np.ndarray, out_path, *, scenario: ScenarioConfig | None = None,
                  scenario_id: str | None = None, seed: int | None = None,
                  force: bool = False) -> DatasetManifest:
    """Write channels to a dataset container directory."""
    out = Path(out_path)
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim != 4:
        raise ValueError(f"expected (n, K, N_B, N_U) channels, got {X.shape}")
    if (out / MANIFEST_NAME).exists() and not force:
        raise FileExistsError(f"{out} already holds a dataset; overwrite with force (CLI: --force)")
    out.mkdir(parents=True, exist_ok=True)

    if scenario_id is None:
        scenario_id = scenario.scenario_id if scenario is not None else "imported"
    manifest = DatasetManifest(
        scenario=scenario.to_dict() if scenario is not None else None,
        scenario_id=scenario_id,
        seed=seed,
        n_samples=int(X.shape[0]),
        shape=tuple(int(s) for s in X.shape[1:]),
        scale=_scale_stats(X),
    )
    tmp = out / (TENSORS_NAME + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_to_planes(X).tobytes())
    os.replace(tmp, out / TENSORS_NAME)
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def generate_dataset(cfg: ScenarioConfig, n_samples: int, out_path, *, seed: int | None = None,
                     force: bool = False, n_jobs: int | None = None) -> DatasetManifest:
    """Generate ``n_samples`` channels and persist them under ``out_path``."""
    if n_samples < 0:
        raise ValueError("n_samples must be nonnegative")
    seed = cfg.rng_seed if seed is None else int(seed)
    X = generate_channels(cfg, n_samples, seed=seed, n_jobs=n_jobs)
    return write_dataset(X, out_path, scenario=cfg, seed=seed, force=force)


def import_dataset(X, out_path, *, scenario_id: str = "imported", force: bool = False) -> DatasetManifest:
    """Store externally produced channels (e.g. from a COST 2100 run) in the container."""
    X = np.asarray(X)
    if not np.iscomplexobj(X):
        raise ValueError("imported channels must be complex-valued")
    return write_dataset(X, out_path, scenario_id=scenario_id, force=force)


def read_manifest(path) -> DatasetManifest:
    with open(Path(path) / MANIFEST_NAME, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version {data.get('format_version')}")
    return DatasetManifest.from_dict(data)


def load_dataset(path) -> tuple[np.ndarray, DatasetManifest]:
    """Read a container back as complex128 ``(n, K, N_B, N_U)``."""
    path = Path(path)
    manifest = read_manifest(path)
    raw = np.fromfile(path / TENSORS_NAME, dtype="<f4")
    expected = manifest.n_samples * 2 * int(np.prod(manifest.shape))
    if raw.size != expected:
        raise ValueError(f"{path / TENSORS_NAME} holds {raw.size} values, manifest implies {expected}")
    planes = raw.reshape(manifest.n_samples, 2, *manifest.shape).astype(np.float64)
    return planes[:, 0] + 1j * planes[:, 1], manifest
