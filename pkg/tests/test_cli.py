import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from softtorus.cli import (
    SWEEP_HEADER,
    load_pair,
    main,
    pair_from_document,
    pair_to_document,
    parse_theta,
    save_pair,
)
from softtorus.errors import IrrationalTarget
from softtorus.generators import RationalAngle, haar_pair, perturb_pair, theta_pair, voiculescu
from softtorus.invariants import bott_pair, defect, winding


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


class TestSerialization:
    @given(st.integers(0, 2**31 - 1), st.integers(1, 6))
    def test_roundtrip_bit_exact(self, seed, n):
        pair = perturb_pair(haar_pair(n, seed, RationalAngle(1, 3)), 0.01, seed)
        back = pair_from_document(json.loads(json.dumps(pair_to_document(pair))))
        assert np.array_equal(back.u, pair.u) and np.array_equal(back.v, pair.v)
        assert back.theta == pair.theta

    def test_file_roundtrip_invariants(self, tmp_path):
        pair = voiculescu(12)
        path = tmp_path / "p.json"
        save_pair(pair, str(path))
        back = load_pair(str(path))
        assert abs(defect(back) - defect(pair)) <= 1e-12
        assert abs(winding(back) - winding(pair)) <= 1e-12
        assert bott_pair(back).bott == bott_pair(pair).bott
        assert not list(tmp_path.glob(".tmp-*"))

    def test_document_fields(self):
        doc = pair_to_document(theta_pair(RationalAngle(1, 2), 1))
        assert set(doc) == {"n", "theta", "u", "v"}
        assert doc["theta"] == "1/2" and doc["v"][0][1] == [1.0, 0.0]

    def test_parse_theta(self, caplog):
        assert parse_theta("1/3") == RationalAngle(1, 3)
        assert parse_theta("0.25") == RationalAngle(1, 4)
        with caplog.at_level("WARNING"):
            assert parse_theta("0.3333333333") == RationalAngle(1, 3)
        assert "snapped" in caplog.text
        assert isinstance(parse_theta("0.1234567"), float)
        with pytest.raises(IrrationalTarget):
            parse_theta("0.1234567", strict=True)


class TestGen:
    def test_voiculescu(self, tmp_path, capsys):
        out = tmp_path / "v.json"
        code, text, _ = run(capsys, "gen", "voiculescu", "--n", 16, "--out", out)
        assert code == 0
        assert "n=16" in text
        value = float(text.split("defect=")[1].split()[0])
        assert value == pytest.approx(2 * math.sin(math.pi / 16), abs=1e-9)
        assert defect(load_pair(str(out))) == pytest.approx(0.390181, abs=1e-6)

    def test_clockshift(self, tmp_path, capsys):
        out = tmp_path / "c.json"
        assert run(capsys, "gen", "clockshift", "--theta", "1/3", "--m", 2, "--out", out)[0] == 0
        pair = load_pair(str(out))
        assert pair.n == 6 and defect(pair) <= 1e-13

    def test_deterministic(self, tmp_path, capsys):
        args = ["gen", "perturbed", "--theta", "1/2", "--m", 4, "--eps", 0.02, "--seed", 7]
        run(capsys, *args, "--out", tmp_path / "a.json")
        run(capsys, *args, "--out", tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    @pytest.mark.parametrize("kind,extra,n", [
        ("haar", ["--n", 5], 5),
        ("lift", ["--theta", "1/3", "--m", 2, "--eps", 0.01], 18),
        ("twist", ["--theta", "1/4", "--m", 2, "--t1", 0.1, "--t2", 0.3], 8),
        ("irrep", ["--theta", "1/3", "--t1", 0.25, "--t2", 0.5], 3),
    ])
    def test_kinds(self, tmp_path, capsys, kind, extra, n):
        out = tmp_path / "x.json"
        assert run(capsys, "gen", kind, *extra, "--out", out)[0] == 0
        assert load_pair(str(out)).n == n

    def test_usage_errors(self, tmp_path, capsys):
        assert run(capsys, "gen", "bogus", "--out", tmp_path / "x.json")[0] == 2
        assert run(capsys, "gen", "voiculescu", "--n", 1, "--out", tmp_path / "x.json")[0] == 2
        assert run(capsys, "gen", "clockshift", "--theta", "0.1234567", "--out", tmp_path / "x.json")[0] == 2
        assert run(capsys)[0] == 2


class TestInvariants:
    def test_voiculescu(self, tmp_path, capsys):
        path = tmp_path / "v.json"
        save_pair(voiculescu(16), str(path))
        code, text, _ = run(capsys, "invariants", path)
        assert code == 0
        assert "bott=1 winding=1 exel=pass" in text

    def test_log0_half(self, tmp_path, capsys):
        path = tmp_path / "h.json"
        save_pair(theta_pair(RationalAngle(1, 2), 2), str(path))
        code, text, _ = run(capsys, "invariants", path, "--branch", "log0")
        assert "winding_norm=0.5" in text
        # bott 0 against winding n/2: the pair is far from commuting
        assert code == 1
        code, text, _ = run(capsys, "invariants", path, "--lift")
        assert code == 0 and "bott=0 winding=0 exel=pass" in text

    def test_commuting(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        save_pair(theta_pair(RationalAngle(0), 3), str(path))
        code, text, _ = run(capsys, "invariants", path)
        assert code == 0
        assert "defect=0" in text and "winding_norm=0" in text and "bott=0 winding=0 exel=pass" in text

    def test_json_report(self, tmp_path, capsys):
        path = tmp_path / "v.json"
        save_pair(voiculescu(8), str(path))
        code, text, _ = run(capsys, "invariants", path, "--json")
        doc = json.loads(text)
        assert code == 0 and doc["bott"] == 1 and doc["exel"] == "pass"
        assert doc["winding_norm"] == pytest.approx(1 / 8)

    def test_gap_exit(self, tmp_path, capsys):
        path = tmp_path / "v.json"
        save_pair(voiculescu(16), str(path))
        assert run(capsys, "invariants", path, "--gap-policy", 0.45)[0] == 3

    def test_cut_exit(self, tmp_path, capsys):
        path = tmp_path / "h.json"
        save_pair(theta_pair(RationalAngle(1, 2), 1), str(path))
        assert run(capsys, "invariants", path)[0] == 4

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "invariants", tmp_path / "nope.json")[0] == 2

    def test_malformed_file(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"n": 2, "theta": "0/1", "u": [[1, 0], [0, 1]], "v": []}))
        assert run(capsys, "invariants", path)[0] == 2


class TestSolve:
    def test_perturbed_half(self, tmp_path, capsys):
        src, dst = tmp_path / "p.json", tmp_path / "s.json"
        run(capsys, "gen", "perturbed", "--theta", "1/2", "--m", 4, "--eps", 0.02, "--seed", 7, "--out", src)
        code, text, _ = run(capsys, "solve", src, "--out", dst)
        report = last_json(text)
        assert code == 0 and report["converged"]
        assert report["relation_residual"] <= 1e-12
        assert report["obstruction"] == pytest.approx(0.5, abs=1e-6)
        assert defect(load_pair(str(dst))) <= 1e-12

    def test_voiculescu_infeasible(self, tmp_path, capsys):
        src = tmp_path / "v.json"
        save_pair(voiculescu(8), str(src))
        code, text, _ = run(capsys, "solve", src, "--theta", "0/1")
        report = last_json(text)
        assert code == 5
        assert report["obstruction"] == pytest.approx(1 / 8, abs=1e-9)

    def test_exact_pair(self, tmp_path, capsys):
        src = tmp_path / "e.json"
        save_pair(theta_pair(RationalAngle(1, 3), 2), str(src))
        code, text, _ = run(capsys, "solve", src)
        report = last_json(text)
        assert code == 0 and max(report["dist_u"], report["dist_v"]) <= 1e-12

    def test_max_iterations_exit(self, tmp_path, capsys):
        src = tmp_path / "p.json"
        save_pair(perturb_pair(theta_pair(RationalAngle(1, 2), 4), 0.05, 2), str(src))
        code, text, _ = run(capsys, "solve", src, "--max-iter", 1)
        assert code == 6 and last_json(text)["status"] == "max_iterations"

    def test_irrational_target(self, tmp_path, capsys):
        src = tmp_path / "p.json"
        save_pair(theta_pair(RationalAngle(0), 2), str(src))
        assert run(capsys, "solve", src, "--theta", "0.1234567")[0] == 5


class TestSweep:
    def test_single_row(self, capsys):
        code, text, _ = run(capsys, "sweep", "--theta", "1/2", "--n-list", 8, "--eps-list", "0.0", "--trials", 1)
        lines = text.splitlines()
        assert code == 0 and lines[0] == ",".join(SWEEP_HEADER) and len(lines) == 2
        row = dict(zip(SWEEP_HEADER, lines[1].split(",")))
        assert float(row["defect"]) == 0 or float(row["defect"]) <= 1e-15
        assert row["bott"] == "0"
        assert float(row["solve_dist"]) <= 1e-12
        assert row["wall_ms"] == "-1"

    def test_exel_rows_and_determinism(self, tmp_path, capsys, monkeypatch):
        args = ["sweep", "--theta", "0/1", "--n-list", "8,12", "--eps-list", "0.01,0.02", "--trials", 25]
        assert run(capsys, *args, "--out", tmp_path / "a.csv")[0] == 0
        monkeypatch.setenv("SOFT_TORUS_THREADS", "2")
        assert run(capsys, *args, "--out", tmp_path / "b.csv")[0] == 0
        a = (tmp_path / "a.csv").read_bytes()
        assert a == (tmp_path / "b.csv").read_bytes()
        assert b"\r" not in a
        lines = a.decode().splitlines()
        assert len(lines) == 101
        rows = [dict(zip(SWEEP_HEADER, line.split(","))) for line in lines[1:]]
        assert all(r["exel_ok"] == "1" for r in rows)
        keys = [(int(r["n"]), float(r["eps"]), int(r["seed"])) for r in rows]
        assert keys == sorted(keys)
        assert sorted(int(r["seed"]) for r in rows) == list(range(100))

    def test_timing_flag(self, capsys):
        code, text, _ = run(capsys, "sweep", "--n-list", 4, "--eps-list", "0.01", "--timing")
        row = dict(zip(SWEEP_HEADER, text.splitlines()[1].split(",")))
        assert float(row["wall_ms"]) > 0

    def test_usage(self, capsys, monkeypatch):
        assert run(capsys, "sweep", "--theta", "1/3", "--n-list", 8, "--eps-list", "0.0")[0] == 2
        assert run(capsys, "sweep", "--n-list", "x", "--eps-list", "0.0")[0] == 2
        assert run(capsys, "sweep", "--n-list", 4, "--eps-list", "0.9")[0] == 2
        monkeypatch.setenv("SOFT_TORUS_THREADS", "many")
        assert run(capsys, "sweep", "--n-list", 4, "--eps-list", "0.0")[0] == 2


def test_module_entry_point(tmp_path):
    out = tmp_path / "v.json"
    proc = subprocess.run([sys.executable, "-m", "softtorus", "gen", "voiculescu", "--n", "4", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "n=4" in proc.stdout
