import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest
from _reference import TABLE_II_ROWS, TABLE_II_W_THEORY, VIOLATION_INTERVAL, printed_precision

from biphoton.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=object)


class TestWitness:
    def test_row_six(self, capsys):
        code, out, _ = run(capsys, "witness", "--c", "35e-6", "--L", "1.8e-2", "--lambda", "710e-9")
        assert code == 0
        d = json.loads(out)
        assert d["w"] == pytest.approx(0.43, abs=0.015)
        assert d["gaussian_bound_violated"] is True

    def test_gaussian_product_state(self, capsys):
        code, out, _ = run(capsys, "witness", "--gaussian", "--p", "1")
        d = json.loads(out)
        assert code == 0 and d["w"] == pytest.approx(0.25, abs=1e-12)
        assert d["gaussian_bound_violated"] is False

    @pytest.mark.parametrize("argv", [
        ("--c", "-1"), ("--c", "1e-4", "--p", "0.5"), (), ("--gaussian",),
        ("--c", "1e-4", "--L", "0"), ("--c", "abc"), ("--c", "1e-4", "--rtol", "0"),
    ])
    def test_validation_exit_code(self, capsys, argv):
        code, _, err = run(capsys, "witness", *argv)
        assert code == 2
        assert err

    def test_numerical_failure_exit_code(self, capsys):
        code, _, err = run(capsys, "witness", "--c", "1.0")
        assert code == 3
        assert "numerical" in err

    def test_csv_header_units(self, capsys):
        _, out, _ = run(capsys, "witness", "--c", "45e-6", "--format", "csv")
        header, rows = table(out)
        assert "var_q_given_0_per_m2" in header and "var_x_given_0_m2" in header
        assert len(rows) == 1


class TestSweep:
    def test_gaussian_columns(self, capsys):
        code, out, _ = run(capsys, "sweep", "--p-min", "0.5", "--p-max", "2", "--steps", "3")
        header, rows = table(out)
        assert code == 0
        assert header == ["P", "K_gaussian_1d", "W_gaussian", "K_spdc_1d", "W_spdc"]
        assert len(out.strip().splitlines()) == 3 + 1
        np.testing.assert_allclose(rows[:, 2].astype(float), [0.16, 0.25, 0.16], atol=1e-12)

    def test_spdc_row(self, capsys):
        _, out, _ = run(capsys, "sweep", "--p-min", "0.7087", "--p-max", "0.9", "--steps", "2")
        _, rows = table(out)
        assert float(rows[0, 0]) == 0.7087
        assert float(rows[0, 4]) == pytest.approx(0.34, abs=0.01)

    def test_deterministic_across_threads(self, capsys, monkeypatch):
        argv = ("sweep", "--p-min", "0.4", "--p-max", "2.5", "--steps", "5")
        monkeypatch.setenv("BIPHOTON_THREADS", "1")
        _, one, _ = run(capsys, *argv)
        monkeypatch.setenv("BIPHOTON_THREADS", "3")
        _, three, _ = run(capsys, *argv)
        assert one == three


class TestInterval:
    def test_defaults(self, capsys):
        code, out, _ = run(capsys, "interval")
        d = json.loads(out)
        assert code == 0 and d["status"] == "violated"
        assert abs(d["p_low"] - VIOLATION_INTERVAL[0]) <= 0.03
        assert abs(d["p_high"] - VIOLATION_INTERVAL[1]) <= 0.03

    def test_gaussian_family(self, capsys):
        code, out, _ = run(capsys, "interval", "--family", "gaussian")
        d = json.loads(out)
        assert code == 0
        assert d["p_low"] is None and d["p_high"] is None
        assert d["status"].startswith("no violation")


class TestDistribution:
    def test_near_field_normalized(self, capsys):
        code, out, _ = run(capsys, "distribution", "--c", "100e-6", "--plane", "near")
        header, rows = table(out)
        assert code == 0 and header == ["position_m", "density_per_m"]
        x, f = rows[:, 0].astype(float), rows[:, 1].astype(float)
        assert abs(np.trapezoid(f, x) - 1) < 1e-8
        # single central peak, monotone flanks out to a couple of pump waists
        assert np.argmax(f) in (len(f) // 2 - 1, len(f) // 2)

    def test_far_field_side_lobes(self, capsys):
        _, out, _ = run(capsys, "distribution", "--c", "35e-6", "--plane", "far", "--format", "json")
        d = json.loads(out)
        f = np.array(d["density_per_m"])
        assert abs(np.trapezoid(f, d["position_m"]) - 1) < 1e-8
        interior = (f[1:-1] < f[:-2]) & (f[1:-1] < f[2:])
        minima = f[1:-1][interior]
        assert minima.size >= 2
        assert np.all(minima < 1e-3 * f.max())

    def test_aperture_flag(self, capsys):
        _, plain, _ = run(capsys, "distribution", "--c", "200e-6", "--plane", "far")
        _, slit, _ = run(capsys, "distribution", "--c", "200e-6", "--plane", "far", "--aperture")
        assert plain != slit

    def test_deterministic(self, capsys):
        argv = ("distribution", "--c", "70e-6", "--plane", "far", "--points", "512")
        assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


class TestDisplace:
    def test_zero_row_equals_distribution(self, capsys):
        _, disp, _ = run(capsys, "displace", "--c", "200e-6", "--points", "1024",
                         "--z", "0,4.5e-3", "--z", "-4.5e-3")
        _, dist, _ = run(capsys, "distribution", "--c", "200e-6", "--plane", "near", "--points", "1024")
        header, rows = table(disp)
        assert header == ["z_m", "position_m", "density_per_m"]
        zero = [r[1:] for r in rows if float(r[0]) == 0.0]
        _, ref = table(dist)
        assert [list(r) for r in zero] == [list(r) for r in ref]
        assert sorted({float(z) for z in rows[:, 0]}) == [-4.5e-3, 0.0, 4.5e-3]

    def test_default_planes_normalized(self, capsys):
        _, out, _ = run(capsys, "displace", "--c", "100e-6", "--points", "1025")
        _, rows = table(out)
        zs = rows[:, 0].astype(float)
        assert len(set(zs)) == 5
        for z in set(zs):
            sel = zs == z
            x, f = rows[sel, 1].astype(float), rows[sel, 2].astype(float)
            assert abs(np.trapezoid(f, x) - 1) < 1e-8

    def test_rejects_far_plane(self, capsys):
        code, _, _ = run(capsys, "displace", "--c", "100e-6", "--z", "0.05")
        assert code == 2


class TestSimulateAndFit:
    def test_round_trip(self, capsys, tmp_path):
        scan = tmp_path / "scan.csv"
        code, _, _ = run(capsys, "simulate", "--c", "70e-6", "--plane", "far", "--seed", "4",
                         "--output", str(scan))
        assert code == 0
        first = scan.read_bytes()
        run(capsys, "simulate", "--c", "70e-6", "--plane", "far", "--seed", "4", "--output", str(scan))
        assert scan.read_bytes() == first
        assert first.decode().splitlines()[3] == "position_m,counts"
        code, out, _ = run(capsys, "fit", str(scan), "--c", "70e-6", "--truth")
        d = json.loads(out)
        assert code == 0 and d["converged"] is True and d["within_3_sigma"] is True

    def test_missing_file(self, capsys, tmp_path):
        code, _, _ = run(capsys, "fit", str(tmp_path / "nope.csv"), "--c", "70e-6")
        assert code == 2


class TestTable2:
    def test_reproduce(self, capsys):
        code, out, _ = run(capsys, "reproduce-table2")
        header, rows = table(out)
        assert code == 0
        w_t = rows[:, header.index("W_T")].astype(float)
        np.testing.assert_allclose(w_t, TABLE_II_W_THEORY, atol=0.015)
        for row, ref in zip(rows, TABLE_II_ROWS):
            w = float(row[header.index("W_E")])
            s = float(row[header.index("W_E_sigma")])
            assert printed_precision(w, ref[2]) == ref[2]
            assert printed_precision(s, ref[3]) == ref[3]

    def test_json(self, capsys):
        _, out, _ = run(capsys, "reproduce-table2", "--format", "json", "--mode", "quadrature")
        d = json.loads(out)
        assert len(d["rows"]) == 6 and "W_T" in d["columns"]


class TestConfig:
    def test_config_and_flag_precedence(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# experiment row six\nc = 35e-6\nformat = csv\n")
        _, out, _ = run(capsys, "witness", "--config", str(cfg))
        header, rows = table(out)
        assert float(rows[0, header.index("w")]) == pytest.approx(0.43, abs=0.015)
        _, out, _ = run(capsys, "witness", "--config", str(cfg), "--c", "200e-6")
        header, rows = table(out)
        assert float(rows[0, header.index("w")]) == pytest.approx(0.033, abs=0.015)

    @pytest.mark.parametrize("text", ["bogus = 1\n", "c 35e-6\n", "c = x\n", "format = xml\n"])
    def test_bad_config(self, capsys, tmp_path, text):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(text)
        assert run(capsys, "witness", "--config", str(cfg))[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "biphoton", "witness", "--gaussian", "--p", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["w"] == pytest.approx(0.16)


def test_unknown_command_exit_code(capsys):
    assert run(capsys, "frobnicate")[0] == 2


def test_negative_exponent_values_are_not_flags(capsys):
    code, out, _ = run(capsys, "displace", "--c", "200e-6", "--points", "16", "--z", "-4.5e-3,-1e-3")
    assert code == 0
    assert {float(r[0]) for r in table(out)[1]} == {-4.5e-3, -1e-3}
