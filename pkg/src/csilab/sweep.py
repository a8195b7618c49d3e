"""Monte-Carlo sweeps producing rate-NMSE and overhead-NMSE tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_channels
from .channel_gen import ScenarioConfig, load_dataset
from .codec.dct import dct_baseline_compress
from .errors import ConfigError
from .feedback import (
    FeedbackConfig,
    db_to_linear,
    feedback_capacity,
    trial_realization,
    uplink_scenario,
)
from .metrics import nmse_ratio, to_db

AXES = ("rd_lambda", "rho", "snr_db", "keep_fraction")
MODES = ("codec", "dct", "digital", "analog")
FEEDBACK_COLUMNS = ["scenario_id", "rho", "snr_db", "trial", "payload_bits",
                    "capacity_bits", "outage", "nmse_db"]
SPEC_VERSION = 1


@dataclass(frozen=True)
class RateDistortionPoint:
    bits_per_entry: float
    nmse_db: float
    rd_lambda: float
    scenario_id: str

    def __post_init__(self):
        if self.bits_per_entry < 0:
            raise ValueError("bits_per_entry must be nonnegative")


@dataclass
class SweepSpec:
    """One experiment: an axis, its values and what to evaluate along it."""

    axis: str
    values: list
    mode: str
    dataset: str
    checkpoints: list = field(default_factory=list)
    trials: int = 1
    snr_db: float = 10.0
    rho: float = 0.125
    k_uplink: int = 256
    bits_per_coeff: int = 4
    max_samples: int | None = None
    seed: int = 0
    version: int = SPEC_VERSION

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        vals = [float(v) for v in self.values]
        if not vals or vals != sorted(vals):
            raise ConfigError("sweep values must be a nonempty ascending list")
        self.values = vals
        if int(self.trials) < 1:
            raise ConfigError("trials must be at least 1")
        allowed = {"codec": ("rd_lambda",), "dct": ("keep_fraction",),
                   "digital": ("rho", "snr_db"), "analog": ("rho", "snr_db")}
        if self.axis not in allowed[self.mode]:
            raise ConfigError(f"mode {self.mode!r} sweeps {allowed[self.mode]}, not {self.axis!r}")
        if self.mode != "dct" and not self.checkpoints:
            raise ConfigError(f"mode {self.mode!r} needs at least one checkpoint")
        if self.version != SPEC_VERSION:
            raise ConfigError(f"unsupported sweep spec version {self.version}")

    @classmethod
    def from_file(cls, path) -> "SweepSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class SweepResult:
    spec: dict
    columns: list
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\r\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(row.get(k)) for k in self.columns})
        return buf.getvalue()

    def to_json(self) -> str:
        envelope = {"spec": self.spec, "version": version_string(), "rows": self.rows}
        return json.dumps(envelope, indent=1, default=_jsonable)

    def summary(self, axis: str) -> list[dict]:
        return summarize(self.rows, axis)


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return "" if v is None else v


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(type(v))


def version_string() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return f"v{version('artifact')}"
    except PackageNotFoundError:
        return "v0.0.0-unknown"


def summarize(rows: list[dict], axis: str) -> list[dict]:
    """Per axis value (and checkpoint): pooled NMSE, outage-excluded NMSE, outage rate."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row.get("checkpoint", ""), row[axis]), []).append(row)
    out = []
    for (ckpt, value), grp in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        ratios = np.array([10 ** (r["nmse_db"] / 10) for r in grp])
        outage = np.array([bool(r.get("outage", False)) for r in grp])
        kept = ratios[~outage]
        out.append({
            "checkpoint": ckpt,
            axis: value,
            "trials": len(grp),
            "nmse_db": to_db(ratios.mean()),
            "nmse_db_delivered": to_db(kept.mean()) if kept.size else None,
            "outage_rate": float(outage.mean()),
        })
    return out


def rate_distortion_point(codec, X, scenario_id: str = "") -> RateDistortionPoint:
    """Average coded bits per entry and dataset NMSE of one trained codec."""
    X = check_channels(X)
    streams = codec.compress(X)
    bits = np.mean([bs.bit_length for bs in streams]) / np.prod(X.shape[1:])
    rec = codec.decompress(streams, X.shape[1:])
    return RateDistortionPoint(float(bits), to_db(np.mean(nmse_ratio(X, rec))),
                               float(codec.rd_lambda), scenario_id)


def dct_rate_distortion(X, keep_fraction: float, bits_per_coeff: int) -> tuple[float, float]:
    """Mean bits per entry and dataset NMSE (dB) of the DCT baseline."""
    X = check_channels(X)
    bits, ratios = [], []
    for h in X:
        bs, h_hat = dct_baseline_compress(h, keep_fraction, bits_per_coeff)
        bits.append(bs.bit_length)
        ratios.append(nmse_ratio(h, h_hat)[0])
    return float(np.mean(bits) / np.prod(X.shape[1:])), to_db(np.mean(ratios))


def dct_rate_curve(X, keep_fractions, bits_options=(2, 3, 4, 5, 6, 8)) -> np.ndarray:
    """Lower envelope ``(bits_per_entry, nmse_db)`` of the DCT baseline over a grid."""
    pts = sorted(dct_rate_distortion(X, f, b) for f in keep_fractions for b in bits_options)
    env = []
    for r, d in pts:
        if not env or d < env[-1][1]:
            env.append((r, d))
    return np.array(env)


def interpolate_curve(curve: np.ndarray, rate: float) -> float:
    """NMSE of a monotone rate curve at ``rate`` (linear in rate)."""
    if rate < curve[0, 0] or rate > curve[-1, 0]:
        raise ValueError(f"rate {rate} outside the curve's range [{curve[0, 0]}, {curve[-1, 0]}]")
    return float(np.interp(rate, curve[:, 0], curve[:, 1]))


class DigitalFeedbackSimulator:
    """Outage simulation for one codec over a fixed set of dataset samples.

    Bitstream lengths and reconstructions are computed once; each trial
    draws an uplink realization and decides delivery from its capacity.
    """

    def __init__(self, codec, X, scenario_id: str = "", uplink: ScenarioConfig | None = None,
                 k_uplink: int = 256, seed: int = 0):
        self.X = check_channels(X)
        self.scenario_id = scenario_id
        self.k_uplink = k_uplink
        self.seed = seed
        self.uplink = uplink or uplink_scenario(None, k_uplink, self.X.shape[2])
        streams = codec.compress(self.X)
        self.payload_bits = np.array([bs.bit_length for bs in streams])
        self.delivered_ratio = nmse_ratio(self.X, codec.decompress(streams, self.X.shape[1:]))

    def run(self, rho: float, snr_db: float, trials: int) -> list[dict]:
        cfg = FeedbackConfig.from_overhead(rho, self.k_uplink, snr_db=snr_db,
                                           subcarrier_selection_seed=self.seed)
        snr = db_to_linear(snr_db)
        rows = []
        for t in range(trials):
            i = t % len(self.X)
            cap = feedback_capacity(trial_realization(cfg, self.uplink, t), snr)
            outage = bool(self.payload_bits[i] > cap)
            rows.append({
                "scenario_id": self.scenario_id, "rho": float(rho), "snr_db": float(snr_db),
                "trial": t, "payload_bits": int(self.payload_bits[i]), "capacity_bits": cap,
                "outage": outage, "nmse_db": 0.0 if outage else to_db(self.delivered_ratio[i]),
            })
        return rows


def analog_rows(model, X, snr_db: float, trials: int, *, scenario_id: str = "",
                uplink: ScenarioConfig | None = None, seed: int = 0) -> list[dict]:
    """Per-trial NMSE of an analog model; trial ``t`` sends sample ``t mod n``."""
    X = check_channels(X)
    cfg = FeedbackConfig(model.k_uplink, model.n_feedback_subcarriers, snr_db, seed)
    up = uplink or model._uplink_scenario(X.shape[2])
    idx = np.arange(trials) % len(X)
    realizations = [trial_realization(cfg, up, t) for t in range(trials)]
    rng = np.random.default_rng([seed, 2])
    rec = model.predict(X[idx], realizations=realizations, rng=rng)
    ratios = nmse_ratio(X[idx], rec)
    snr = db_to_linear(snr_db)
    return [{
        "scenario_id": scenario_id, "rho": cfg.overhead, "snr_db": float(snr_db), "trial": t,
        "payload_bits": None, "capacity_bits": feedback_capacity(fr, snr), "outage": False,
        "nmse_db": to_db(ratios[t]),
    } for t, fr in enumerate(realizations)]


def _load_checkpoints(paths, kind):
    from .analog import AnalogDeepCMC
    from .codec.deepcmc import DeepCMC

    cls = AnalogDeepCMC if kind == "analog" else DeepCMC
    missing = [p for p in paths if not (Path(p) / "arch.json").exists()]
    if missing:
        raise ConfigError("missing checkpoint(s): " + ", ".join(map(str, missing)))
    return [(str(p), cls.load(p)) for p in paths]


def _uplink_from_manifest(manifest, k_uplink: int, n_bs: int) -> ScenarioConfig:
    scenario = ScenarioConfig.from_dict(manifest.scenario) if manifest.scenario else None
    return uplink_scenario(scenario, k_uplink, n_bs)


def run_sweep(spec: SweepSpec, plot_path=None) -> SweepResult:
    """Evaluate ``spec``; rows are ordered by (checkpoint, axis value, trial)."""
    X, manifest = load_dataset(spec.dataset)
    if spec.max_samples is not None:
        X = X[: spec.max_samples]
    if len(X) == 0:
        raise ConfigError(f"dataset {spec.dataset} is empty")
    sid = manifest.scenario_id
    rows: list[dict] = []
    if spec.mode == "dct":
        columns = ["scenario_id", "keep_fraction", "bits_per_coeff", "bits_per_entry", "nmse_db"]
        for f in spec.values:
            bpe, db = dct_rate_distortion(X, f, spec.bits_per_coeff)
            rows.append({"scenario_id": sid, "keep_fraction": f, "bits_per_coeff": spec.bits_per_coeff,
                         "bits_per_entry": bpe, "nmse_db": db})
    elif spec.mode == "codec":
        columns = ["scenario_id", "checkpoint", "rd_lambda", "bits_per_entry", "nmse_db"]
        bank = _load_checkpoints(spec.checkpoints, "codec")
        for value in spec.values:
            match = [(p, m) for p, m in bank if math.isclose(m.rd_lambda, value, rel_tol=1e-9)]
            if not match:
                raise ConfigError(f"no checkpoint trained with rd_lambda={value}")
            p, model = match[0]
            pt = rate_distortion_point(model, X, sid)
            rows.append({"scenario_id": sid, "checkpoint": p, "rd_lambda": value,
                         "bits_per_entry": pt.bits_per_entry, "nmse_db": pt.nmse_db})
    else:
        columns = FEEDBACK_COLUMNS + ["checkpoint"]
        up = _uplink_from_manifest(manifest, spec.k_uplink, X.shape[2])
        bank = _load_checkpoints(spec.checkpoints, spec.mode)
        if spec.mode == "digital":
            n_used = min(len(X), spec.trials)
            for p, model in bank:
                sim = DigitalFeedbackSimulator(model, X[:n_used], sid, up, spec.k_uplink, spec.seed)
                for value in spec.values:
                    rho, snr_db = (value, spec.snr_db) if spec.axis == "rho" else (spec.rho, value)
                    rows.extend(dict(r, checkpoint=p) for r in sim.run(rho, snr_db, spec.trials))
        else:
            for value in spec.values:
                p, model = _pick_analog(bank, spec, value)
                snr_db = value if spec.axis == "snr_db" else spec.snr_db
                rows.extend(dict(r, checkpoint=p) for r in
                            analog_rows(model, X, snr_db, spec.trials, scenario_id=sid,
                                        uplink=up, seed=spec.seed))
    result = SweepResult(asdict(spec), columns, rows)
    if plot_path is not None:
        plot_result(result, spec.axis, plot_path)
    return result


def _pick_analog(bank, spec: SweepSpec, value: float):
    if spec.axis == "rho":
        n_f = max(1, int(round(value * spec.k_uplink)))
        match = [(p, m) for p, m in bank if m.n_feedback_subcarriers == n_f]
        if not match:
            raise ConfigError(f"no analog checkpoint for N_F={n_f} (rho={value})")
        return match[0]
    match = [(p, m) for p, m in bank if math.isclose(m.snr_db, value)]
    if match:
        return match[0]
    if len(bank) == 1:
        return bank[0]
    raise ConfigError(f"no analog checkpoint trained at {value} dB")


def plot_result(result: SweepResult, axis: str, path) -> Path:
    """Render NMSE against the sweep axis (one line per checkpoint) to a static image."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x_key = "bits_per_entry" if axis in ("rd_lambda", "keep_fraction") else axis
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if x_key == "bits_per_entry":
        pts = sorted((r["bits_per_entry"], r["nmse_db"]) for r in result.rows)
        ax.plot(*zip(*pts), marker="o")
    else:
        series: dict = {}
        for s in result.summary(axis):
            series.setdefault(s["checkpoint"], []).append((s[axis], s["nmse_db"]))
        for name, pts in series.items():
            ax.plot(*zip(*pts), marker="o", label=Path(name).name or None)
        if len(series) > 1:
            ax.legend(fontsize=7)
    ax.set_xlabel({"bits_per_entry": "bits per CSI entry", "rho": "feedback overhead rho",
                   "snr_db": "uplink SNR (dB)"}[x_key])
    ax.set_ylabel("NMSE (dB)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
