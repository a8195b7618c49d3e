import csv
import json

import numpy as np
import pytest

from csilab.channel_gen import load_dataset
from csilab.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main

SCENARIO = {"version": 1, "scenario": {"rng_seed": 3, "name": "cli"}}
MODEL = {"version": 1, "model": "deepcmc",
         "params": {"encoder_layers": [[8, [3, 3], [2, 2]], [4, [3, 3], [1, 1]]], "n_epochs": 1}}
ANALOG = {"version": 1, "model": "analog-deepcmc",
          "params": {"encoder_layers": [[8, [3, 3], [2, 2]], [8, [3, 3], [4, 4]], [2, [3, 3], [1, 1]]],
                     "n_feedback_subcarriers": 4, "n_epochs": 1}}


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    for name, data in (("scn.json", SCENARIO), ("m.json", MODEL), ("a.json", ANALOG)):
        (root / name).write_text(json.dumps(data))
    assert main(["gen", "--config", str(root / "scn.json"), "--out", str(root / "ds"), "--samples", "40"]) == 0
    return root


def test_gen_is_seeded(work):
    out = work / "ds7"
    assert main(["gen", "--config", str(work / "scn.json"), "--out", str(out), "--samples", "4",
                 "--seed", "7"]) == EXIT_OK
    X7, m = load_dataset(out)
    X3, _ = load_dataset(work / "ds")
    assert m.seed == 7 and not np.allclose(X7, X3[:4])


def test_gen_refuses_overwrite(work):
    args = ["gen", "--config", str(work / "scn.json"), "--out", str(work / "ds"), "--samples", "2"]
    assert main(args) == EXIT_IO
    assert main(args + ["--force", "--out", str(work / "ds_copy")]) == EXIT_OK


def test_gen_needs_source(work, capsys):
    assert main(["gen", "--out", str(work / "x")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_gen_from_npy(work, rng):
    np.save(work / "ext.npy", rng.standard_normal((3, 8, 4)) + 1j)
    assert main(["gen", "--from-npy", str(work / "ext.npy"), "--out", str(work / "imp")]) == EXIT_OK
    assert load_dataset(work / "imp")[0].shape == (3, 8, 4, 1)


def test_bad_config(work):
    (work / "bad.json").write_text('{"version": 1, "scenario": {"delay_spread": -1}}')
    assert main(["gen", "--config", str(work / "bad.json"), "--out", str(work / "b"), "--samples", "1"]) == EXIT_CONFIG
    (work / "v9.json").write_text('{"version": 9}')
    assert main(["gen", "--config", str(work / "v9.json"), "--out", str(work / "b"), "--samples", "1"]) == EXIT_CONFIG


def test_pilots(work):
    out = work / "pilots.csv"
    assert main(["pilots", "--dataset", str(work / "ds"), "--pilot-len", "2", "--snr-db", "20",
                 "--out", str(out)]) == EXIT_OK
    rows = _read_csv(out)
    assert len(rows) == 40 and float(rows[0]["nmse_db"]) < -10
    assert open(out, newline="").read().count("\r\n") == 41


def test_codec_round_trip(work):
    ck, cz, rec = work / "ck", work / "cz", work / "rec"
    assert main(["train", "--dataset", str(work / "ds"), "--config", str(work / "m.json"),
                 "--rd-lambda", "0.3", "--out", str(ck), "--seed", "1"]) == EXIT_OK
    assert json.loads((ck / "arch.json").read_text())["rd_lambda"] == 0.3
    assert main(["compress", "--ckpt", str(ck), "--in", str(work / "ds"), "--out", str(cz)]) == EXIT_OK
    assert (cz / "sample_000000.csib").read_bytes()[:4] == b"CSIB"
    assert main(["decompress", "--ckpt", str(ck), "--in", str(cz), "--out", str(rec)]) == EXIT_OK
    X, _ = load_dataset(rec)
    assert X.shape == (40, 32, 8, 1)


def test_corrupt_stream_is_io_error(work):
    ck, cz = work / "ck2", work / "cz2"
    main(["train", "--dataset", str(work / "ds"), "--config", str(work / "m.json"), "--out", str(ck)])
    main(["compress", "--ckpt", str(ck), "--in", str(work / "ds"), "--out", str(cz)])
    (cz / "sample_000001.csib").write_bytes(b"JUNK" + bytes(30))
    assert main(["decompress", "--ckpt", str(ck), "--in", str(cz), "--out", str(work / "r2")]) == EXIT_IO


def test_feedback_commands(work):
    ck = work / "ck3"
    main(["train", "--dataset", str(work / "ds"), "--config", str(work / "m.json"), "--out", str(ck)])
    out = work / "fd.csv"
    assert main(["fb-digital", "--ckpt", str(ck), "--dataset", str(work / "ds"), "--rho", "0.01",
                 "--snr-db", "0", "--trials", "5", "--out", str(out)]) == EXIT_OK
    rows = _read_csv(out)
    assert list(rows[0]) == ["scenario_id", "rho", "snr_db", "trial", "payload_bits",
                             "capacity_bits", "outage", "nmse_db"]
    assert all(float(r["nmse_db"]) == 0.0 for r in rows if r["outage"] == "1")

    an = work / "an"
    assert main(["train", "--dataset", str(work / "ds"), "--config", str(work / "a.json"), "--out", str(an)]) == EXIT_OK
    out = work / "fa.csv"
    assert main(["fb-analog", "--ckpt", str(an), "--dataset", str(work / "ds"), "--trials", "6",
                 "--out", str(out)]) == EXIT_OK
    assert len(_read_csv(out)) == 6


def test_sweep_and_plot(work):
    ck = work / "ck4"
    main(["train", "--dataset", str(work / "ds"), "--config", str(work / "m.json"), "--out", str(ck)])
    spec = {"axis": "rho", "values": [0.02, 0.2], "mode": "digital", "dataset": str(work / "ds"),
            "checkpoints": [str(ck)], "trials": 4}
    (work / "sw.json").write_text(json.dumps(spec))
    assert main(["sweep", "--spec", str(work / "sw.json"), "--out", str(work / "sw.csv"),
                 "--json", str(work / "sw_env.json"), "--plot", str(work / "sw.png")]) == EXIT_OK
    assert len(_read_csv(work / "sw.csv")) == 8
    assert (work / "sw.png").exists()
    assert main(["plot", "--in", str(work / "sw.csv"), "--axis", "rho", "--out", str(work / "p.png")]) == EXIT_OK
    assert main(["plot", "--in", str(work / "sw.csv"), "--axis", "nope", "--out", str(work / "q.png")]) == EXIT_CONFIG


def test_missing_checkpoint_exit_code(work, capsys):
    spec = {"axis": "rho", "values": [0.1], "mode": "digital", "dataset": str(work / "ds"),
            "checkpoints": [str(work / "absent")]}
    (work / "sw2.json").write_text(json.dumps(spec))
    assert main(["sweep", "--spec", str(work / "sw2.json"), "--out", str(work / "x.csv")]) == EXIT_CONFIG
    assert "absent" in capsys.readouterr().err


def test_missing_dataset_is_io_error(work):
    assert main(["pilots", "--dataset", str(work / "nowhere"), "--pilot-len", "1", "--snr-db", "0",
                 "--out", str(work / "p.csv")]) == EXIT_IO
