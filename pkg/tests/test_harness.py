import numpy as np
import pytest

from fraclap_lab import cli, harness
from fraclap_lab.errors import ConfigurationError, ParameterError
from fraclap_lab.grid import build_grid, write_function_csv
from fraclap_lab.harness import (
    RegularityReport,
    RegularityRow,
    RunConfig,
    exponent_passes,
    parse_diffusivity,
    parse_rhs,
    predicted_exponent,
    regularity_sweep,
    resolve_suites,
)


@pytest.mark.parametrize(
    "p,s,expected",
    [(2, 0.75, 1.25), (3, 0.3, 0.45), (1.5, 0.3, 0.6), (3, 0.8, 0.8 + 1 / 3), (1.5, 0.75, 1.25), (2, 0.5, 1.0)],
)
def test_predicted_exponent_examples(p, s, expected):
    assert predicted_exponent(p, s) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("p", [2.0, 2.5, 3.0, 4.0, 10.0])
def test_predicted_exponent_continuous_at_switch(p):
    s0 = 1 - 1 / p  # 1/p'
    d = 1e-9
    assert abs(predicted_exponent(p, s0 - d) - predicted_exponent(p, s0 + d)) < 1e-8


def test_predicted_exponent_continuous_below_two():
    for p in (1.1, 1.5, 1.9):
        assert abs(predicted_exponent(p, 0.5 - 1e-9) - predicted_exponent(p, 0.5 + 1e-9)) < 1e-8


@pytest.mark.parametrize("p", [1.2, 1.5, 2.0, 3.0, 6.0])
def test_predicted_exponent_monotone_in_s(p):
    vals = [predicted_exponent(p, s) for s in np.linspace(0.01, 0.99, 99)]
    assert np.all(np.diff(vals) >= 0)


@pytest.mark.parametrize("p,s", [(1.0, 0.5), (0.9, 0.5), (2, 0.0), (2, 1.0)])
def test_predicted_exponent_rejects(p, s):
    with pytest.raises(ParameterError):
        predicted_exponent(p, s)


def test_pass_rule():
    assert exponent_passes(1.16, 1.25, 2.0) and not exponent_passes(1.36, 1.25, 2.0)
    assert exponent_passes(1.9, 1.1333, 3.0) and not exponent_passes(1.0, 1.1333, 3.0)
    assert exponent_passes(0.51, 0.6, 1.5)


def test_rhs_and_diffusivity_parsing(tmp_path):
    assert parse_rhs("const:2.5") == 2.5
    f = parse_rhs("bump")
    assert f(np.array([0.0]))[0] == pytest.approx(1.0) and f(np.array([1.0]))[0] == 0
    g = build_grid(2, 1, 16)
    path = tmp_path / "f.csv"
    write_function_csv(path, g, g.x**2)
    h = parse_rhs(f"file:{path}")
    assert h(np.array([0.5]))[0] == pytest.approx(0.25) and h(np.array([5.0]))[0] == 0
    with pytest.raises(ParameterError):
        parse_rhs("sine")
    with pytest.raises(ParameterError):
        parse_rhs("const:abc")
    assert parse_diffusivity(None) == (None, None)
    assert parse_diffusivity("const:3") == (3.0, (3.0, 3.0))
    with pytest.raises(ParameterError):
        parse_diffusivity("const:-1")
    write_function_csv(path, g, 1 + 0.5 * np.sin(g.x))
    A, bounds = parse_diffusivity(f"file:{path}")
    assert bounds[0] == pytest.approx(1 + 0.5 * np.sin(g.x).min()) and A(np.array([0.0]))[0] == pytest.approx(1.0)


def test_config_validation(tmp_path):
    assert RunConfig.from_mapping({"command": "sweep"}).window == 2.0
    assert RunConfig.from_mapping({"command": "solve"}).window == 8.0
    assert RunConfig.from_mapping({"command": "solve", "L": "4"}).window == 4.0
    with pytest.raises(ConfigurationError):
        RunConfig.from_mapping({"bogus": 1})
    with pytest.raises(ParameterError):
        RunConfig.from_mapping({"p": "0.9"})
    with pytest.raises(ParameterError):
        RunConfig.from_mapping({"n": "many"})
    with pytest.raises(ConfigurationError):
        RunConfig.from_mapping({"out": str(tmp_path / "missing" / "x.csv")})
    cfg = RunConfig.from_mapping({"command": "sweep", "p_list": "2, 3", "s_list": "0.5"})
    assert cfg.p_list == (2.0, 3.0) and cfg.explicit == {"command", "p_list", "s_list"}


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# defaults\np = 3\ns = 0.4  # trailing comment\nn = 512\n")
    cfg = cli.config_from_args(["solve", "--config", str(conf), "--s", "0.6"])
    assert (cfg.p, cfg.s, cfg.n) == (3.0, 0.6, 512)
    conf.write_text("p 3\n")
    with pytest.raises(ConfigurationError):
        cli.config_from_args(["solve", "--config", str(conf)])


def test_unknown_suite():
    with pytest.raises(ParameterError):
        resolve_suites(["duality", "nonsense"])
    assert resolve_suites(["all"]) == list(harness.SUITES)
    assert resolve_suites(["parity", "parity"]) == ["parity"]


def test_report_format():
    rows = [
        RegularityRow(2.0, 0.5, 1.0, 0.97, 0.01, True, "abc"),
        RegularityRow(3.0, 0.3, 0.45, float("nan"), float("nan"), False, "def", "MeasurementError: x"),
    ]
    text = RegularityReport(rows).to_text().splitlines()
    assert text[0] == "p,s,predicted,measured,residual,pass"
    assert text[1].endswith(",true") and text[2].endswith(",false")
    assert "# error,3,0.29999999999999999,MeasurementError: x" in text
    assert not RegularityReport(rows).all_passed and not RegularityReport([]).all_passed


def test_sweep_marks_failed_rows():
    # n = 512 leaves fewer than 4 dyadic steps above 4 dx: the fit fails, the row is marked
    cfg = RunConfig.from_mapping({"command": "sweep", "n": 512})
    report = regularity_sweep(cfg, [(2.0, 0.5), (3.0, 0.8)])
    assert [(r.p, r.s) for r in report.rows] == [(2.0, 0.5), (3.0, 0.8)]
    assert all(not r.passed and "MeasurementError" in r.error for r in report.rows)


def test_sweep_reproducible(tmp_path):
    out = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path, workers in zip(out, (1, 2)):
        assert cli.main(["sweep", "--p-list", "2", "--s-list", "0.5", "--workers", str(workers), "--out", str(path)]) == 0
    assert out[0].read_bytes() == out[1].read_bytes()
    lines = out[0].read_text().splitlines()
    assert lines[0] == "p,s,predicted,measured,residual,pass" and lines[1].endswith(",true")


def test_cli_solve(tmp_path, capsys):
    path = tmp_path / "u.csv"
    assert cli.main(["solve", "--n", "2048", "--L", "8", "--out", str(path)]) == 0
    u0 = float(capsys.readouterr().out.split("u(0)=")[1].split()[0])
    assert u0 == pytest.approx(1.0, abs=0.02)
    assert path.read_text().startswith("# p,s,L,a,n,energy,residual,iters")
    # dx = 1/128 on the L = 8 window leaves two probe steps above 4 dx
    assert cli.main(["measure", "--input", str(path)]) == 3
    fine = tmp_path / "u2.csv"
    assert cli.main(["solve", "--n", "2048", "--L", "2", "--out", str(fine)]) == 0
    capsys.readouterr()
    assert cli.main(["measure", "--input", str(fine)]) == 0
    slope = float(capsys.readouterr().out.split("slope=")[1].split()[0])
    assert slope == pytest.approx(1.0, abs=0.1)
    assert cli.main(["solve", "--rhs", "const:0", "--n", "256"]) == 0
    assert "iterations=0" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["solve", "--p", "0.9"]) == 1
    assert cli.main(["solve", "--bogus", "1"]) == 1
    assert cli.main(["launch"]) == 1
    assert cli.main(["verify", "--suite", "nonsense"]) == 1
    assert cli.main(["solve", "--rhs", "file:" + str(tmp_path / "absent.csv")]) == 1
    assert cli.main(["solve", "--n", "64", "--tol", "1e-30"]) == 2
    g = build_grid(2, 1, 2048)
    zero = tmp_path / "zero.csv"
    write_function_csv(zero, g, np.zeros(g.n_nodes))
    assert cli.main(["measure", "--input", str(zero)]) == 3
    absx = tmp_path / "abs.csv"
    write_function_csv(absx, g, np.where(np.abs(g.x) <= 1, np.abs(g.x), 0.0))
    capsys.readouterr()
    assert cli.main(["measure", "--input", str(absx)]) == 0
    slope = float(capsys.readouterr().out.split("slope=")[1].split()[0])
    assert slope == pytest.approx(1.5, abs=0.05)


def test_cli_verify_single_suite(tmp_path, capsys):
    out = tmp_path / "v.csv"
    assert cli.main(["verify", "--suite", "homogeneity", "--p", "3", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "suite,check,value,threshold,pass" and len(lines) == 2
    assert lines[1].startswith("homogeneity,") and lines[1].endswith(",true")
