import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from kingldp import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def meta(text):
    return {
        line[2:].split(":", 1)[0]: json.loads(line.split(":", 1)[1])
        for line in text.splitlines()
        if line.startswith("# ") and ":" in line
    }


def test_parse_grid():
    assert np.allclose(cli.parse_grid("0:1:0.25"), [0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(cli.parse_grid("1.05:1.95:0.3"), [1.05, 1.35, 1.65, 1.95])
    assert np.allclose(cli.parse_grid("3"), [3.0])
    for bad in ("1:0:0.1", "0:1:0", "0:1", "a:b:c"):
        with pytest.raises(cli.UsageError):
            cli.parse_grid(bad)


def test_rate_I_at_two(capsys):
    code, out, _ = run(capsys, "rate", "I", "--grid", "1:3:1")
    assert code == 0
    rows = table(out)
    assert list(rows[0]) == cli.RATE_COLUMNS
    assert float(rows[1]["value"]) == 0.0
    assert meta(out)["config"]["function"] == "I"


def test_rate_I_hat_at_zero_and_domain_rows(capsys):
    code, out, _ = run(capsys, "rate", "I_hat", "--grid=-1:0:1")
    assert code == 0
    rows = table(out)
    assert rows[0]["value"] == "inf"
    assert float(rows[1]["value"]) == pytest.approx(math.pi**2 / 2, abs=1e-15)
    code, out, _ = run(capsys, "rate", "f", "--grid", "0:2:0.5")
    rows = table(out)
    assert [r["status"].startswith("domain_error") for r in rows] == [False, False, True, True, True]
    assert float(rows[0]["value"]) == 2.0


def test_rate_bounds_at_one_and_a_half(capsys):
    _, out, _ = run(capsys, "rate", "bounds", "--grid", "1.5")
    row = table(out)[0]
    assert float(row["T3"]) == pytest.approx(0.414214, abs=1e-6)
    assert float(row["g_bound"]) == pytest.approx(0.7939, abs=1e-4)
    assert row["angel"] == ""


def test_rate_I_tilde_columns(capsys):
    _, out, _ = run(capsys, "rate", "I_tilde", "--grid", "1.5", "--format", "json")
    doc = json.loads(out)
    assert doc["columns"] == cli.I_TILDE_COLUMNS
    row = dict(zip(doc["columns"], doc["rows"][0]))
    assert row["converged"] is True
    assert row["value"] == pytest.approx(0.0755271, abs=1e-7)
    assert row["c_star"] == pytest.approx(math.sqrt(1.5), rel=1e-6)


def test_rate_lambda_infinite_json(capsys):
    _, out, _ = run(capsys, "rate", "Lambda", "--grid", "0.5:1:0.5", "--format", "json")
    doc = json.loads(out)
    assert doc["rows"][0][1] == pytest.approx(2 * math.log(2))
    assert doc["rows"][1][1] == "inf"


def test_float_format_round_trips():
    for v in (0.1, 1 / 3, 2.0**-1074, 1e300):
        assert float(cli.fmt_cell(v)) == v
    assert cli.fmt_cell(True) == "true" and cli.fmt_cell(None) == ""


def test_figure_T1(capsys):
    _, out, _ = run(capsys, "figure", "fig_T1", "--resolution", "41")
    rows = table(out)
    i_rows = [r for r in rows if r["curve"] == "I"]
    best = min(i_rows, key=lambda r: float(r["value"]))
    assert float(best["arg"]) == 2.0 and float(best["value"]) == 0.0
    f0 = [r for r in rows if r["curve"] == "f" and float(r["arg"]) == 0.0]
    assert float(f0[0]["value"]) == 2.0


def test_figure_cor1_bound(capsys):
    _, out, _ = run(capsys, "figure", "fig_cor1", "--resolution", "81")
    rows = table(out)
    inside = [r for r in rows if 1.5 < float(r["x"]) < 2.5]
    assert inside
    assert all(float(r["I_hat"]) >= float(r["quadratic_bound"]) for r in inside)
    assert float(rows[0]["I_hat"]) == pytest.approx(math.pi**2 / 2)


def test_figure_T2a_bound(capsys, tmp_path):
    path = tmp_path / "t2a.csv"
    code, _, _ = run(capsys, "figure", "fig_T2a", "--resolution", "11", "--out", str(path))
    assert code == 0
    rows = table(path.read_text())
    assert len(rows) == 11
    assert all(float(r["I_tilde"]) <= float(r["T3_bound"]) for r in rows)
    assert all(r["converged"] == "true" for r in rows)


def test_simulate_Wn_one(capsys):
    _, out, _ = run(capsys, "simulate", "Wn", "--size", "1", "--trials", "50")
    assert all(float(r["value"]) == 1.0 for r in table(out))


def test_simulate_nTn_mean_and_metadata(capsys):
    _, out, _ = run(capsys, "simulate", "nTn", "--size", "10", "--trials", "100000", "--seed", "5")
    v = np.array([float(r["value"]) for r in table(out)])
    assert abs(v.mean() - 2.0) < 3 * v.std() / math.sqrt(v.size)
    m = meta(out)
    assert m["seed"] == 5 and m["truncation_K"] == 256
    assert m["bias_bound"] == pytest.approx(2 / 256)


def test_simulate_replays_from_metadata(capsys, tmp_path):
    first = tmp_path / "a.csv"
    run(capsys, "simulate", "epsNeps", "--size", "0.5", "--trials", "5000", "--seed", "9", "--out", str(first))
    config = meta(first.read_text())["config"]
    second = tmp_path / "b.csv"
    argv = [config["command"], config["statistic"], "--size", str(config["size"]), "--trials",
            str(config["trials"]), "--seed", str(config["seed"]), "--threads", "3", "--out", str(second)]
    run(capsys, *argv)
    col = lambda p: [r["value"] for r in table(p.read_text())]
    assert col(first) == col(second)


def test_simulate_bad_size(capsys):
    code, _, err = run(capsys, "simulate", "nTn", "--size", "2.5")
    assert code == 2 and "integer" in err


def test_output_error_has_path(capsys, tmp_path):
    bad = tmp_path / "missing" / "x.csv"
    code, _, err = run(capsys, "rate", "I", "--grid", "1", "--out", str(bad))
    assert code == 2 and str(bad) in err


def test_usage_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["rate", "nope", "--grid", "1"])
    assert exc.value.code == 2
    code, _, _ = run(capsys, "rate", "I", "--grid", "3:1:1")
    assert code == 2
    with pytest.raises(SystemExit):
        cli.main(["simulate", "Wn", "--size", "3", "--threads", "0"])


def test_threads_env_default(monkeypatch):
    monkeypatch.setenv("KINGLDP_THREADS", "6")
    args = cli.build_parser().parse_args(["simulate", "Wn", "--size", "3"])
    assert args.threads == 6


def test_verify_rates_exit_code(capsys):
    code, out, err = run(capsys, "verify", "rates")
    assert code == 0
    rows = table(out)
    assert list(rows[0]) == cli.VERIFY_COLUMNS
    assert all(r["passed"] == "true" for r in rows)
    assert "checks passed" in err


def test_verify_failure_exit_code(capsys, monkeypatch):
    from kingldp import verification

    failing = verification.CheckResult("rates", "forced", False, 1.0, 0.0)
    monkeypatch.setattr(verification, "run_suite", lambda *a, **k: [failing])
    code, _, _ = run(capsys, "verify", "rates")
    assert code == 1


def test_verify_budget_too_small(capsys):
    code, _, _ = run(capsys, "verify", "distributions", "--budget", "10")
    assert code == 2


def test_console_script_module():
    proc = subprocess.run([sys.executable, "-m", "kingldp.cli", "rate", "I", "--grid", "2"],
                          capture_output=True, text=True, check=True)
    assert table(proc.stdout)[0]["value"] == "0"
