"""``csilab`` command-line interface.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DecodeError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("csilab")


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\r\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else
                                 int(row[k]) if isinstance(row[k], bool) else row[k])
                             for k in columns})


def cmd_gen(args) -> None:
    from .channel_gen import generate_dataset, import_dataset
    from .config import load_scenario

    if args.from_npy:
        X = np.load(args.from_npy)
        manifest = import_dataset(X, args.out, scenario_id=Path(args.from_npy).stem, force=args.force)
    else:
        cfg = load_scenario(args.config)
        manifest = generate_dataset(cfg, args.samples, args.out, seed=args.seed, force=args.force)
    log.info("wrote %d samples of shape %s to %s", manifest.n_samples, manifest.shape, args.out)


def cmd_pilots(args) -> None:
    from .channel_gen import load_dataset
    from .feedback import db_to_linear
    from .metrics import nmse_ratio, to_db
    from .pilot_sim import PilotBlock, ls_estimate, quantize_observation, transmit_pilots

    X, manifest = load_dataset(args.dataset)
    rng = np.random.default_rng(args.seed or 0)
    n_u = X.shape[3]
    pilots = PilotBlock.orthogonal(n_u, args.pilot_len)
    noise_var = pilots.power / db_to_linear(args.snr_db)
    rows = []
    for i, h in enumerate(X):
        est = np.empty_like(h)
        for k in range(h.shape[0]):
            obs = transmit_pilots(h[k], pilots, noise_var, rng)
            if args.adc_bits:
                obs = quantize_observation(obs, args.adc_bits)
            est[k] = ls_estimate(obs, pilots)
        rows.append({"scenario_id": manifest.scenario_id, "sample": i, "pilot_len": args.pilot_len,
                     "snr_db": args.snr_db, "adc_bits": args.adc_bits or 0,
                     "nmse_db": to_db(nmse_ratio(h, est)[0])})
    _write_csv(args.out, list(rows[0]) if rows else
               ["scenario_id", "sample", "pilot_len", "snr_db", "adc_bits", "nmse_db"], rows)


def cmd_train(args) -> None:
    from .channel_gen import load_dataset
    from .codec.deepcmc import DeepCMC
    from .config import build_model

    X, manifest = load_dataset(args.dataset)
    overrides = {"random_state": args.seed}
    model = build_model(args.config, **overrides)
    if isinstance(model, DeepCMC):
        if args.rd_lambda is not None:
            model.set_params(rd_lambda=args.rd_lambda)
        if model.input_scale is None and manifest.scale.get("rms"):
            model.set_params(input_scale=manifest.scale["rms"])
    elif manifest.scenario and model.uplink is None:
        model.set_params(uplink=manifest.scenario)
    model.set_params(verbose=args.verbose)
    model.fit(X)
    model.save(args.out)
    log.info("saved %s to %s", type(model).__name__, args.out)


def cmd_compress(args) -> None:
    from .channel_gen import load_dataset
    from .codec.deepcmc import DeepCMC

    codec = DeepCMC.load(args.ckpt)
    X, manifest = load_dataset(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    streams = codec.compress(X)
    for i, bs in enumerate(streams):
        (out / f"sample_{i:06d}.csib").write_bytes(bs.to_bytes())
    index = {"scenario_id": manifest.scenario_id, "n_samples": len(streams),
             "channel_shape": list(X.shape[1:]), "pmf_id": str(codec.entropy_model_.pmf_id),
             "payload_bits": [bs.bit_length for bs in streams]}
    with open(out / "index.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=1)


def cmd_decompress(args) -> None:
    from .channel_gen import write_dataset
    from .codec.deepcmc import DeepCMC

    codec = DeepCMC.load(args.ckpt)
    src = Path(args.input)
    with open(src / "index.json", encoding="utf-8") as fh:
        index = json.load(fh)
    blobs = [(src / f"sample_{i:06d}.csib").read_bytes() for i in range(index["n_samples"])]
    X = codec.decompress(blobs, tuple(index["channel_shape"]))
    write_dataset(X, args.out, scenario_id=index["scenario_id"], force=args.force)


def cmd_fb_digital(args) -> None:
    from .channel_gen import load_dataset
    from .codec.deepcmc import DeepCMC
    from .sweep import FEEDBACK_COLUMNS, DigitalFeedbackSimulator, _uplink_from_manifest

    codec = DeepCMC.load(args.ckpt)
    X, manifest = load_dataset(args.dataset)
    X = X[: args.trials]
    up = _uplink_from_manifest(manifest, args.k_uplink, X.shape[2])
    sim = DigitalFeedbackSimulator(codec, X, manifest.scenario_id, up, args.k_uplink, args.seed or 0)
    _write_csv(args.out, FEEDBACK_COLUMNS, sim.run(args.rho, args.snr_db, args.trials))


def cmd_fb_analog(args) -> None:
    from .analog import AnalogDeepCMC
    from .channel_gen import load_dataset
    from .sweep import FEEDBACK_COLUMNS, analog_rows

    model = AnalogDeepCMC.load(args.ckpt)
    X, manifest = load_dataset(args.dataset)
    snr_db = model.snr_db if args.snr_db is None else args.snr_db
    rows = analog_rows(model, X, snr_db, args.trials, scenario_id=manifest.scenario_id,
                       seed=args.seed or 0)
    _write_csv(args.out, FEEDBACK_COLUMNS, rows)


def cmd_sweep(args) -> None:
    from .sweep import SweepSpec, run_sweep

    spec = SweepSpec.from_file(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    result = run_sweep(spec, plot_path=args.plot)
    Path(args.out).write_text(result.to_csv(), encoding="utf-8", newline="")
    if args.json:
        Path(args.json).write_text(result.to_json(), encoding="utf-8")


def cmd_plot(args) -> None:
    from .sweep import SweepResult, plot_result

    with open(args.input, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except (TypeError, ValueError):
                    parsed[k] = v
            if "outage" in parsed:
                parsed["outage"] = bool(parsed["outage"])
            rows.append(parsed)
        columns = reader.fieldnames or []
    if args.axis not in columns and not (args.axis in ("rd_lambda", "keep_fraction")
                                         and "bits_per_entry" in columns):
        raise ConfigError(f"column {args.axis!r} not found in {args.input}")
    plot_result(SweepResult({}, columns, rows), args.axis, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csilab", description="Learned CSI compression and feedback lab")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.set_defaults(func=func)
        return p

    p = add("gen", cmd_gen, "generate a channel dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.add_argument("--from-npy", help="import complex (n, K, N_B[, N_U]) channels instead of generating")

    p = add("pilots", cmd_pilots, "LS channel estimation from noisy (optionally quantized) pilots")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pilot-len", type=int, required=True)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--adc-bits", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a codec or analog feedback model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--rd-lambda", type=float)
    p.add_argument("--out", required=True)

    p = add("compress", cmd_compress, "entropy-code a dataset with a trained codec")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = add("decompress", cmd_decompress, "decode compressed samples into a dataset container")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = add("fb-digital", cmd_fb_digital, "digital feedback outage simulation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--k-uplink", type=int, default=256)
    p.add_argument("--out", required=True)

    p = add("fb-analog", cmd_fb_analog, "analog feedback simulation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out", required=True)

    p = add("sweep", cmd_sweep, "run a sweep specification")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json")
    p.add_argument("--plot")

    p = add("plot", cmd_plot, "plot NMSE against a column of a results CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--axis", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen" and not args.config and not args.from_npy:
            raise ConfigError("gen needs --config or --from-npy")
        args.func(args)
    except ConfigError as exc:
        print(f"csilab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DecodeError) as exc:
        print(f"csilab: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"csilab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"csilab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
