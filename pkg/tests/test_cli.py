import json

import numpy as np
import pytest

from chanstate.cli import load_config_file, main, parse_grid, parse_values
from chanstate.io import atomic_write, config_hash, emit_csv, format_value, read_csv
from chanstate.specs import parse_channel, parse_state, split_spec
from chanstate.states import von_neumann_entropy

QUICK = ["--restarts", "3", "--max-evals", "2000", "--jobs", "1"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestSpecs:
    def test_split(self):
        assert split_spec("erasure:p=0.5,d=3") == ("erasure", {"p": "0.5", "d": "3"})
        assert split_spec("bell") == ("bell", {})
        with pytest.raises(ValueError):
            split_spec("erasure:p")

    def test_channels(self):
        assert parse_channel("erasure:p=0.5,d=3").dout == 4
        assert parse_channel("identity:d=3").din == 3
        assert parse_channel("identity").din == 2
        assert len(parse_channel("depolarizing:p=0.2").kraus) == 4
        with pytest.raises(ValueError, match="missing"):
            parse_channel("erasure")
        with pytest.raises(ValueError, match="unknown"):
            parse_channel("erasure:p=0.1,q=2")
        with pytest.raises(ValueError, match="not a number"):
            parse_channel("erasure:p=abc")

    def test_kraus_file(self, tmp_path):
        k = np.sqrt(0.5) * np.eye(2)
        mats = [[[[z.real, z.imag] for z in row] for row in m] for m in (k, k)]
        path = tmp_path / "ch.json"
        path.write_text(json.dumps({"kind": "kraus", "kraus": mats}))
        assert len(parse_channel(f"kraus-file:{path}").kraus) == 2

    def test_states(self):
        assert von_neumann_entropy(parse_state("maximally-mixed:d=2")) == pytest.approx(1.0)
        assert parse_state("maximally-mixed:d=2,dB=3").dims == (2, 3)
        assert parse_state("bell").labels == ("A2", "B2")
        assert parse_state("trivial").dims == (1, 1)
        assert parse_state("isotropic:F=0.8,d=3").dims == (3, 3)
        assert parse_state("horodecki:a=0.5").dims == (3, 3)
        np.testing.assert_allclose(parse_state("cc-correlated").data, np.diag([0.5, 0, 0, 0.5]))
        np.testing.assert_allclose(parse_state("bell-diagonal:w=1/0/0/0").data, parse_state("bell").density(), atol=1e-15)
        with pytest.raises(ValueError):
            parse_state("werner:p=0.2")

    def test_state_file(self, tmp_path):
        path = tmp_path / "s.json"
        s = 1 / np.sqrt(2)
        path.write_text(json.dumps({"systems": [["A2", 2], ["B2", 2]], "vector": [[s, 0], [0, 0], [0, 0], [s, 0]]}))
        rho = parse_state(f"file:{path}")
        assert rho.is_pure and rho.labels == ("A2", "B2")


class TestIO:
    SCHEMA = [("name", str), ("x", float), ("k", int), ("ok", bool)]

    def test_format(self):
        assert format_value(1 / 3, float) == "0.333333"
        assert format_value(True, bool) == "true"
        assert format_value(3.0, int) == "3"

    def test_header_only(self, tmp_path):
        path = tmp_path / "e.csv"
        emit_csv([], self.SCHEMA, path)
        assert path.read_bytes() == b"name,x,k,ok\n"

    def test_rfc4180_quoting_and_lf(self, tmp_path):
        path = tmp_path / "q.csv"
        emit_csv([{"name": 'a,"b"', "x": 0.5, "k": 2, "ok": False}], self.SCHEMA, path)
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw.splitlines()[1] == b'"a,""b""",0.500000,2,false'
        assert read_csv(path)[0]["name"] == 'a,"b"'

    def test_missing_column(self, tmp_path):
        with pytest.raises(ValueError, match="missing"):
            emit_csv([{"name": "a"}], self.SCHEMA, tmp_path / "m.csv")

    def test_io_error_names_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            emit_csv([], self.SCHEMA, blocker / "out.csv")

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        atomic_write(tmp_path / "a.txt", "hello")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["a.txt"]

    def test_config_hash_is_canonical(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestGrid:
    def test_values(self):
        assert parse_values("0,0.1,0.25") == [0.0, 0.1, 0.25]
        assert parse_values("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_grid(self):
        assert parse_grid("n=1,2;rate=0:0.4:0.2") == {"n": [1.0, 2.0], "rate": [0.0, 0.2, 0.4]}
        with pytest.raises(ValueError):
            parse_grid("")
        with pytest.raises(ValueError):
            parse_grid("n")


class TestCommands:
    def test_info_entropy(self, capsys, tmp_path):
        code, out, _ = run(capsys, "info", "entropy", "--state", "maximally-mixed:d=2", "--out", tmp_path)
        assert code == 0
        assert out.strip() == "1.000000"
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["outputs"] == ["info.csv"]
        assert {"config_hash", "seed", "version", "wall_time_s"} <= set(manifest)

    def test_info_mother(self, capsys, tmp_path):
        code, out, _ = run(capsys, "info", "mother", "--state", "cc-correlated", "--out", tmp_path)
        assert code == 0
        assert out.split() == ["mother_rate", "0.500000", "mother_qubit_cost", "0.500000"]

    def test_capacity_pinned(self, capsys, tmp_path):
        code, out, _ = run(capsys, "capacity", "--channel", "erasure:p=0.25", "--state", "bell", "--seed", 7, "--out", tmp_path, *QUICK)
        assert code == 0
        # half a Bell pair on A2 plus the 1 - 2p erasure term
        assert out.strip() == "joint_rate 1.500000"
        rows = read_csv(tmp_path / "capacity.csv")
        assert rows[0]["joint_rate"] == "1.500000"
        assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 7

    def test_compare(self, capsys, tmp_path):
        code, out, _ = run(capsys, "compare", "--channel", "erasure:p=0.5", "--state", "bell", "--out", tmp_path, *QUICK)
        assert code == 0
        values = dict(line.split() for line in out.strip().splitlines())
        assert float(values["joint_rate"]) >= 1.0 - 1e-6
        assert values["separate_rate"] == "1.000000"

    def test_sweep_round_trip(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "sweep", "--channel", "erasure", "--state", "trivial", "--grid", "p=0:0.5:0.25", "--out", tmp_path, *QUICK
        )
        assert code == 0
        rows = read_csv(tmp_path / "sweep.csv")
        assert len(rows) == 3
        for row in rows:
            assert float(row["joint_rate"]) == pytest.approx(max(0.0, 1 - 2 * float(row["value"])), abs=1e-3)

    def test_decouple_header(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "decouple", "--channel", "erasure:p=0.25", "--state", "trivial",
            "--grid", "n=1,2;rate=0,0.5", "--trials", 3, "--decode", "--out", tmp_path,
        )
        assert code == 0
        lines = (tmp_path / "decouple.csv").read_text().splitlines()
        assert lines[0] == "n,log_S_per_n,mean_error,stderr,acceptance,trials"
        assert len(lines) == 5
        assert len(read_csv(tmp_path / "decouple_trials.csv")) == 12

    def test_superact(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "superact", "--channel", "erasure:p=0.5", "--state", "isotropic:F=0.6", "--state", "bell",
            "--out", tmp_path, *QUICK,
        )
        assert code == 0
        lines = (tmp_path / "superact.csv").read_text().splitlines()
        assert lines[0] == "state_id,channel,joint_rate,separate_rate,gap,ppt,seed"
        assert len(lines) == 3
        details = sorted(p.name for p in tmp_path.glob("detail_*.json"))
        assert len(details) == 2 and all("erasure_p=0.5" in d for d in details)

    def test_determinism(self, capsys, tmp_path):
        args = ["compare", "--channel", "depolarizing:p=0.2", "--state", "isotropic:F=0.8", "--seed", 3, *QUICK]
        run(capsys, *args, "--out", tmp_path / "a")
        run(capsys, *args, "--out", tmp_path / "b")
        assert (tmp_path / "a" / "compare.csv").read_bytes() == (tmp_path / "b" / "compare.csv").read_bytes()


class TestConfig:
    def test_file_with_flag_override(self, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"state": "maximally-mixed:d=4", "quantity": "entropy"}))
        code, out, _ = run(capsys, "info", "entropy", "--config", cfg, "--state", "maximally-mixed:d=2", "--out", tmp_path / "o")
        assert code == 0 and out.strip() == "1.000000"
        code, out, _ = run(capsys, "info", "entropy", "--config", cfg, "--out", tmp_path / "o")
        assert out.strip() == "2.000000"

    def test_unknown_key_line_number(self, capsys, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{\n  "state": "bell",\n  "colour": 3\n}\n')
        code, _, err = run(capsys, "info", "entropy", "--config", cfg, "--out", tmp_path / "o")
        assert code == 2
        assert f"{cfg}:3:" in err and "colour" in err
        assert not (tmp_path / "o").exists()

    def test_bad_value_line_number(self, capsys, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{\n  "channel": "erasure:p=0.2",\n  "state": "bell",\n  "optimizer": {\n    "restarts": "many"\n  }\n}\n')
        code, _, err = run(capsys, "capacity", "--config", cfg, "--out", tmp_path / "o")
        assert code == 2 and f"{cfg}:5:" in err

    def test_malformed_json(self, capsys, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{\n  "state": "bell",\n  "seed": \n}\n')
        code, _, err = run(capsys, "info", "entropy", "--config", cfg)
        assert code == 2 and "invalid JSON" in err

    def test_load_config_flattens_optimizer(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"channel": "bell", "optimizer": {"seed": 4, "tol": 1e-6}}))
        flat = load_config_file(str(cfg))
        assert flat["seed"] == 4 and flat["channels"] == ["bell"]

    @pytest.mark.parametrize(
        "argv",
        [
            ["capacity", "--state", "bell"],
            ["capacity", "--channel", "warp:p=1", "--state", "bell"],
            ["capacity", "--channel", "erasure:p=1.5", "--state", "bell"],
            ["capacity", "--channel", "erasure:p=0.1", "--state", "file:/nonexistent.json"],
            ["capacity", "--channel", "erasure:p=0.1", "--state", "bell", "--seed", "-1"],
            ["capacity", "--channel", "erasure:p=0.1", "--state", "bell", "--block-level", "3"],
            ["sweep", "--channel", "erasure", "--state", "bell"],
            ["decouple", "--channel", "erasure:p=0.1", "--state", "trivial", "--grid", "n=1"],
            ["info", "coherent", "--state", "maximally-mixed:d=2,dB=2", "--restarts", "0"],
        ],
    )
    def test_config_errors_exit_2(self, capsys, tmp_path, argv):
        code, _, err = run(capsys, *argv, "--out", tmp_path)
        assert code == 2
        assert "error" in err
        assert not (tmp_path / "manifest.json").exists()

    def test_cap_exceeded_is_config_error(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("CSC_DIM_CAP", "16")
        code, _, err = run(capsys, "capacity", "--channel", "erasure:p=0.1", "--state", "bell", "--out", tmp_path)
        assert code == 2 and "cap" in err

    def test_numerical_failure_exit_3(self, capsys, tmp_path, monkeypatch):
        import chanstate.cli as cli

        def broken(*args, **kwargs):
            raise np.linalg.LinAlgError("SVD did not converge")

        monkeypatch.setattr(cli, "mother_rates", broken)
        code, _, err = run(capsys, "info", "mother", "--state", "bell", "--out", tmp_path)
        assert code == 3
        assert "numerical failure" in err and "SVD did not converge" in err
        assert not (tmp_path / "manifest.json").exists()
