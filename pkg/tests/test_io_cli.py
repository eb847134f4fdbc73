import csv
import json
import math

import jsonschema
import numpy as np
import pytest
import yaml

from hesssketch import cli, io
from hesssketch.errors import FactorFormatError
from hesssketch.numkit import GramFactor


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestFactorFormat:
    def test_roundtrip_bitwise(self, tmp_path):
        phi = np.random.default_rng(0).standard_normal((37, 5))
        phi[0, 0] = -0.0
        phi[1, 1] = 5e-324
        io.save_factor(tmp_path / "f.hsk", GramFactor(phi))
        back = io.load_factor(tmp_path / "f.hsk")
        assert back.phi.tobytes() == phi.tobytes()

    def test_layout_arithmetic(self, tmp_path):
        path = tmp_path / "two.hsk"
        io.save_factor(path, GramFactor(np.array([[1.0], [2.0]])))
        data = path.read_bytes()
        assert len(data) == 4 + 16 + 16
        assert data[:4] == b"HSK1"
        assert int.from_bytes(data[4:12], "little") == 2 and int.from_bytes(data[12:20], "little") == 1

    @pytest.mark.parametrize("mutate", [lambda d: d[:-1], lambda d: d + b"\0", lambda d: b"HSK2" + d[4:], lambda d: d[:10]])
    def test_corrupt(self, tmp_path, mutate):
        path = tmp_path / "f.hsk"
        io.save_factor(path, GramFactor(np.eye(3)))
        path.write_bytes(mutate(path.read_bytes()))
        with pytest.raises(FactorFormatError):
            io.load_factor(path)


def test_json_encoding():
    text = io.dumps({"b": math.inf, "a": np.float64(1.5), "c": (np.int64(2), -math.inf), "d": np.bool_(True)})
    assert json.loads(text) == {"a": 1.5, "b": "inf", "c": [2, "-inf"], "d": True}
    assert text.index('"a"') < text.index('"b"')


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestCli:
    def test_ensemble_reports(self, tmp_path, capsys):
        out = tmp_path / "ens"
        argv = ["ensemble", "--dist", "gaussian", "--n", "400", "--r", "20", "--m", "5,10", "--trials", "300", "--seed", "7", "--out", str(out)]
        code, _, err = run(argv, capsys)
        assert code == 0, err
        schema = io.load_schema("ensemble")
        for m in (5, 10):
            doc = json.loads((out / f"ensemble_m{m}.json").read_text())
            jsonschema.validate(doc, schema)
            assert doc["config"]["seed"] == 7 and doc["config"]["m"] == m
            assert doc["experiment"]["trials"] == 300
            rows = read_csv(out / f"ensemble_m{m}.csv")
            assert tuple(rows[0]) == io.ENSEMBLE_COLUMNS and len(rows) == 301
        summary = json.loads((out / "summary.json").read_text())
        jsonschema.validate(summary, io.load_schema("summary"))
        assert tuple(read_csv(out / "summary.csv")[0]) == io.SUMMARY_COLUMNS

    def test_deterministic_across_threads(self, tmp_path, capsys, monkeypatch):
        outputs = []
        for threads in ("1", "4"):
            monkeypatch.setenv("HESSSKETCH_THREADS", threads)
            out = tmp_path / threads
            argv = ["ensemble", "--n", "600", "--r", "10", "--m", "8", "--trials", "1000", "--seed", "3", "--out", str(out)]
            assert run(argv, capsys)[0] == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert outputs[0] == outputs[1]

    def test_config_file_and_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(yaml.safe_dump({"n": 300, "r": 5, "m": [4], "trials": 50, "seed": 1, "dist": "uniform01"}))
        out = tmp_path / "o"
        code, _, err = run(["ensemble", "--config", str(cfg), "--seed", "9", "--out", str(out)], capsys)
        assert code == 0, err
        exp = json.loads((out / "ensemble_m4.json").read_text())["experiment"]
        assert exp["seed"] == 9 and exp["n"] == 300 and exp["dist"] == "uniform01"
        jcfg = tmp_path / "cfg.json"
        jcfg.write_text(json.dumps({"n": 300, "r": 5, "m": "4", "trials": 50}))
        assert run(["ensemble", "--config", str(jcfg), "--out", str(out)], capsys)[0] == 0

    def test_bounds_stdout(self, tmp_path, capsys):
        path = tmp_path / "phi.hsk"
        io.save_factor(path, GramFactor(np.random.default_rng(0).standard_normal((300, 8))))
        code, out, err = run(["bounds", "--from-factor", str(path), "--m", "1,30", "--out", str(tmp_path / "b")], capsys)
        assert code == 0, err
        doc = json.loads(out)
        jsonschema.validate(doc, io.load_schema("theorem"))
        assert [t["m"] for t in doc["theorem"]] == [1, 30]
        assert doc["config"]["from_factor"] == str(path)
        rows = read_csv(tmp_path / "b" / "bounds.csv")
        assert tuple(rows[0]) == io.BOUNDS_COLUMNS and rows[2][2] == "inf"

    def test_moments(self, tmp_path, capsys):
        out = tmp_path / "mo"
        code, _, err = run(["moments", "--n", "500", "--r", "50", "--m", "10", "--p", "2,4", "--trials", "500", "--out", str(out)], capsys)
        assert code == 0, err
        doc = json.loads((out / "moments.json").read_text())
        assert [row["p"] for row in doc["moments"]] == [2.0, 4.0]
        assert all(row["estimate"] <= row["bound"] for row in doc["moments"])

    def test_elliptic_preset(self, tmp_path, capsys):
        out = tmp_path / "d1"
        code, _, err = run(["elliptic", "--preset", "paper-D1", "--m", "5", "--trials", "200", "--out", str(out)], capsys)
        assert code == 0, err
        f = io.load_factor(out / "factor.hsk")
        assert (f.n, f.r) == (4225, 384)
        assert len(read_csv(out / "layout.csv")) == 385
        assert len(read_csv(out / "media.csv")) == 4226
        doc = json.loads((out / "ensemble_m5.json").read_text())
        assert doc["config"]["mode"] == "noreplace" and doc["experiment"]["preset"] == "paper-D1"

    def test_synthetic(self, tmp_path, capsys):
        out = tmp_path / "s"
        assert run(["synthetic", "--dist", "bernoulli01", "--n", "50", "--r", "3", "--out", str(out)], capsys)[0] == 0
        meta = json.loads((out / "summary.json").read_text())["meta"]
        assert meta["distribution"] == "bernoulli01"
        assert io.load_factor(out / "factor.hsk").phi.shape == (50, 3)

    @pytest.mark.parametrize(
        "argv",
        [
            ["ensemble", "--n", "3", "--r", "5", "--m", "2"],
            ["ensemble", "--n", "30", "--r", "5"],
            ["ensemble", "--n", "30", "--r", "5", "--m", "40", "--mode", "noreplace"],
            ["ensemble", "--trials", "zero"],
            ["bounds", "--n", "30", "--r", "5", "--m", "2", "--preset", "nowhere"],
            ["frobnicate"],
        ],
    )
    def test_config_errors(self, argv, capsys, tmp_path):
        code, _, err = run(argv + ["--out", str(tmp_path)] if argv != ["frobnicate"] else argv, capsys)
        assert code == 2
        record = json.loads(err.strip().splitlines()[-1])
        assert record["exit_code"] == 2 and record["error"] == "ConfigError"

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"nn": 5}))
        assert run(["ensemble", "--config", str(cfg)], capsys)[0] == 2

    def test_degenerate(self, tmp_path, capsys):
        path = tmp_path / "zero.hsk"
        phi = np.ones((10, 2))
        phi[3] = 0.0
        io.save_factor(path, GramFactor(phi))
        code, _, err = run(["bounds", "--from-factor", str(path), "--m", "2"], capsys)
        assert code == 3
        assert json.loads(err)["error"] == "DegenerateError"

    def test_io_errors(self, tmp_path, capsys):
        assert run(["bounds", "--from-factor", str(tmp_path / "missing.hsk"), "--m", "2"], capsys)[0] == 4
        bad = tmp_path / "bad.hsk"
        bad.write_bytes(b"HSK1" + b"\0" * 3)
        code, _, err = run(["bounds", "--from-factor", str(bad), "--m", "2"], capsys)
        assert code == 4 and json.loads(err)["error"] == "FactorFormatError"
