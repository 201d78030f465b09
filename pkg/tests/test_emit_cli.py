import json
import os
import subprocess
import sys

import pytest

from qml import cli, emit
from qml.errors import AccuracyError, CacheError

HEADER = ("k", "X", "sum")
ROWS = [{"k": 1.0, "X": 1e4, "sum": 0.1 + 0.2}, {"k": 2, "X": 1e5, "sum": float("inf")}]


def run(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestEmit:
    def test_csv_format(self):
        text = emit.to_csv(HEADER, ROWS)
        assert text.splitlines() == ["k,X,sum", "1,10000,0.30000000000000004", "2,100000,inf"]

    def test_json_matches_csv(self):
        data = json.loads(emit.to_json(HEADER, ROWS[:1]))
        assert data == [{"k": 1.0, "X": 1e4, "sum": 0.30000000000000004}]
        assert json.loads(emit.to_json(HEADER, ROWS))[1]["sum"] is None

    def test_metadata(self):
        data = json.loads(emit.to_json(HEADER, ROWS[:1], {"eps": 1e-8}))
        assert data[0]["metadata"] == {"eps": 1e-8}

    def test_empty(self):
        assert emit.render(HEADER, [], "csv") == "k,X,sum\n"
        assert emit.render(HEADER, [], "json") == "[]\n"

    def test_byte_stable(self):
        assert emit.render(HEADER, ROWS, "json") == emit.render(HEADER, [dict(r) for r in ROWS], "json")

    def test_bools(self):
        assert emit.format_value(True) == "true" and emit.format_value(None) == ""

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit.render(HEADER, ROWS, "xml")

    def test_atomic_failure_keeps_old(self, tmp_path, monkeypatch):
        path = tmp_path / "out.csv"
        path.write_text("old\n")

        def boom(*args):
            raise OSError("disk full")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(CacheError):
            emit.atomic_write_text(path, "new\n")
        assert path.read_text() == "old\n"
        assert sorted(p.name for p in tmp_path.iterdir()) == ["out.csv"]


class TestCli:
    def test_help_lists_flags(self):
        out = subprocess.run(
            [sys.executable, "-m", "qml.cli", "moments", "--help"], capture_output=True, text=True
        )
        assert out.returncode == 0
        for flag in ("--k", "--X", "--weight", "--power", "--M", "--cache", "--eps", "--offline",
                     "--workers", "--format", "--output", "--config"):
            assert flag in out.stdout

    def test_top_help(self):
        out = subprocess.run([sys.executable, "-m", "qml.cli", "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        for cmd in cli.COMMANDS:
            assert cmd in out.stdout

    def test_sieve(self, capsys, tmp_path):
        code, out, _ = run(["sieve", "--limit", "1e6", "--table", str(tmp_path / "t.bin")], capsys)
        assert code == 0 and out == "limit,count\n1000000,78498\n"

    def test_usage_error_exit_1(self, capsys):
        code, _, err = run(["charsum", "--X", "1e4"], capsys)
        assert code == 1 and "required" in err
        code, _, _ = run(["nonsense"], capsys)
        assert code == 1

    def test_twisted_ell_zero(self, capsys):
        code, out, err = run(["twisted", "--ell", "0", "--X", "1e4"], capsys)
        assert code == 1 and out == "" and "ell" in err

    def test_charsum(self, capsys):
        code, out, _ = run(["charsum", "--c", "1", "9", "3", "--X", "1e4", "--format", "json"], capsys)
        rows = json.loads(out)
        assert code == 0 and [r["c"] for r in rows] == [1, 9, 3]
        assert rows[0]["sum"] == rows[1]["sum"] and rows[2]["main"] == 0

    def test_lvalues_rerun_noop(self, capsys, tmp_path):
        cache = tmp_path / "cv.csv"
        code, _, err = run(["lvalues", "--pmax", "5000", "--cache", str(cache)], capsys)
        assert code == 0
        first = cache.read_bytes()
        code, _, err = run(["lvalues", "--pmax", "5000", "--cache", str(cache)], capsys)
        assert code == 0 and err.startswith("qml: 0 computed")
        assert cache.read_bytes() == first

    def test_offline_missing(self, capsys, tmp_path):
        cache = tmp_path / "cv.csv"
        run(["lvalues", "--pmax", "500", "--cache", str(cache)], capsys)
        code, _, err = run(["report", "--k", "1", "--X", "1000", "--cache", str(cache), "--offline"], capsys)
        assert code == 1 and "missing" in err

    def test_eps_mismatch(self, capsys, tmp_path):
        cache = tmp_path / "cv.csv"
        run(["lvalues", "--pmax", "100", "--cache", str(cache)], capsys)
        code, _, _ = run(["lvalues", "--pmax", "100", "--cache", str(cache), "--eps", "1e-10"], capsys)
        assert code == 1

    def test_corrupt_cache_exit_2(self, capsys, tmp_path):
        cache = tmp_path / "cv.csv"
        cache.write_text("QMLCV1,eps=1e-08\n3,x,1,1\n")
        code, _, err = run(["report", "--k", "1", "--X", "100", "--cache", str(cache)], capsys)
        assert code == 2 and "cv.csv:2" in err

    def test_output_dir_missing_exit_2(self, capsys, tmp_path):
        code, _, _ = run(["sieve", "--limit", "100", "--output", str(tmp_path / "no" / "x.csv")], capsys)
        assert code == 2

    def test_accuracy_exit_3(self, capsys, monkeypatch):
        def fail(args):
            raise AccuracyError("residue disagrees")

        monkeypatch.setitem(cli.COMMANDS, "charsum", fail)
        code, _, _ = run(["charsum", "--c", "1", "--X", "1e4"], capsys)
        assert code == 3

    def test_report_deterministic(self, capsys, tmp_path):
        cache = str(tmp_path / "cv.csv")
        args = ["report", "--k", "0", "1", "--X", "1000", "2000", "--cache", cache]
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        assert cli.main([*args, "--format", "json", "--output", str(a), "--workers", "1"]) == 0
        assert cli.main([*args, "--format", "json", "--output", str(b), "--workers", "3"]) == 0
        assert a.read_bytes() == b.read_bytes()
        csv_rows = tmp_path / "a.csv"
        assert cli.main([*args, "--output", str(csv_rows)]) == 0
        lines = csv_rows.read_text().splitlines()
        data = json.loads(a.read_text())
        assert lines[0] == "k,X,sum,normalized,band_ratio" and len(lines) == len(data) + 1
        assert [float(x) for x in lines[1].split(",")] == [data[0][h] for h in ("k", "X", "sum", "normalized", "band_ratio")]

    def test_config_and_override(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# defaults\nX = 1e4\nc = 3\nformat = json\n")
        code, out, _ = run(["charsum", "--config", str(cfg)], capsys)
        assert code == 0 and [r["c"] for r in json.loads(out)] == [3]
        code, out, _ = run(["charsum", "--config", str(cfg), "--c", "1", "--format", "csv"], capsys)
        assert code == 0 and out.startswith("c,X,sum") and out.splitlines()[1].startswith("1,")

    def test_config_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("colour = blue\n")
        code, _, err = run(["charsum", "--config", str(cfg), "--c", "1", "--X", "1e4"], capsys)
        assert code == 1 and "colour" in err

    def test_workers_env(self, monkeypatch):
        monkeypatch.setenv("QML_WORKERS", "3")
        assert cli.default_workers() == 3
        monkeypatch.setenv("QML_WORKERS", "zero")
        with pytest.raises(Exception):
            cli.default_workers()

    def test_mollify_verify(self, capsys):
        code, out, err = run(["mollify-verify", "--k", "1", "--X", "1e4", "--pmax", "200", "--format", "json"], capsys)
        rows = json.loads(out)
        assert code == 0 and rows and "0 failed" in err
        assert {"p", "block", "check", "pass", "witness", "constant"} <= set(rows[0])

    def test_mollify_verify_half(self, capsys):
        code, _, _ = run(["mollify-verify", "--k", "0.5", "--X", "1e4"], capsys)
        assert code == 1

    def test_deviations_and_moments(self, capsys, tmp_path):
        cache = str(tmp_path / "cv.csv")
        code, out, _ = run(["deviations", "--X", "2000", "--V", "-1", "0", "1", "--cache", cache], capsys)
        assert code == 0 and out.startswith("V,count,gaussian_proxy")
        code, out, _ = run(["moments", "--k", "1", "--X", "2000", "--power", "N+Q", "--cache", cache], capsys)
        assert code == 0 and len(out.splitlines()) == 2
