import json
import subprocess
import sys

import pytest

from ipsim import cli
from ipsim.engine import RateBoundViolation

BASE = """\
[model]
name = lattice_bd
lambda = 1.0

[window]
radii = 4 8

[run]
tau = 1.0
replicates = 20
seed = 7

[statistic]
experiment = lln
functional = moment
"""

COUPLE = """\
[model]
name = lattice_bd
lambda = 1.0

[window]
radii = 10 20

[run]
tau = 1.0
replicates = 30
seed = 1

[statistic]
experiment = couple
probes = 0
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cli(tmp_path, text, *extra):
    out = tmp_path / "out"
    code = cli.main(["run", write(tmp_path, text), "--out", str(out), "--workers", "1", *extra])
    return code, out


def test_lln_schema(tmp_path):
    code, out = run_cli(tmp_path, BASE)
    assert code == 0
    lines = (out / "lln.csv").read_text().splitlines()
    assert lines[0] == "model,functional,window_radius,window_size,tau,replicates,mean,std_err"
    assert len(lines) == 3
    doc = json.loads((out / "summary.json").read_text())
    assert doc["seed"] == 7 and doc["config"]["model"]["name"] == "lattice_bd"


def test_float_format_round_trips(tmp_path):
    code, out = run_cli(tmp_path, BASE)
    row = (out / "lln.csv").read_text().splitlines()[1].split(",")
    mean = float(row[6])
    assert format(mean, ".17g") == row[6]


def test_byte_identical_and_worker_independent(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    cfg = write(tmp_path, BASE)
    assert cli.main(["run", cfg, "--out", str(a), "--workers", "1"]) == 0
    assert cli.main(["run", cfg, "--out", str(b), "--workers", "2"]) == 0
    for name in ("lln.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    _, out = run_cli(tmp_path, BASE)
    first = (out / "lln.csv").read_text()
    _, out = run_cli(tmp_path, BASE, "--seed", "8")
    assert (out / "lln.csv").read_text() != first


def test_config_error_exit_1(tmp_path, capsys):
    code, out = run_cli(tmp_path, BASE.replace("lambda = 1.0", "lambda = -1"))
    assert code == 1
    assert "lambda" in capsys.readouterr().err
    assert not out.exists()


def test_missing_file_exit_1(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.cfg")]) == 1


def test_bad_override_exit_1(tmp_path):
    assert run_cli(tmp_path, BASE, "--replicates", "1")[0] == 1


def test_coupling_ok_and_fault_exit_3(tmp_path):
    code, out = run_cli(tmp_path, COUPLE)
    assert code == 0
    lines = (out / "couple.csv").read_text().splitlines()
    assert lines[0] == "probe_site,hypothesis_met,agreement"
    hyp, agree = map(int, lines[1].split(",")[1:])
    assert hyp == agree
    out2 = tmp_path / "faulty"
    code = cli.main(["run", write(tmp_path, COUPLE + "[debug]\ninject_coupling_fault = true\n", "f.cfg"),
                     "--out", str(out2), "--workers", "1"])
    assert code == 3
    assert not out2.exists() or not any(out2.iterdir())


def test_rate_violation_exit_2(tmp_path, monkeypatch):
    def boom(cfg, workers=1):
        raise RateBoundViolation("synthetic")

    monkeypatch.setattr(cli, "execute", boom)
    code, out = run_cli(tmp_path, BASE)
    assert code == 2
    assert not out.exists()


def test_oracle_with_trace(tmp_path):
    text = """\
[model]
name = lattice_bd
lambda = 1.0
[window]
shape = interval
lengths = 2
[run]
tau = 0.1
replicates = 2000
seed = 3
[statistic]
experiment = oracle
functional = moment
cap = 5
[output]
trace = true
"""
    code, out = run_cli(tmp_path, text)
    assert code == 0
    header = (out / "oracle.csv").read_text().splitlines()[0]
    assert header == "functional,tau,simulated,exact,z"
    for line in (out / "trace.ndjson").read_text().splitlines():
        json.loads(line)


@pytest.mark.parametrize("experiment,extra,header", [
    ("clt", "", "window_size,s,t,cov_scaled,skew,ex_kurtosis,gof_stat,replicates"),
    ("sigma", "sigma_runs = 6\nmax_lag = 2\n", "s,t,sigma_scaling,sigma_sum,se_a,se_b,agree"),
    ("decay", "distances = 0 1 2\n", "distance,abs_cov,std_err,envelope"),
    ("cluster", "n_values = 1 2\n", "n,time,empirical_p,bound,replicates"),
    ("increments", "", "s,t,gap,fourth_moment,std_err,replicates"),
])
def test_experiment_schemas(tmp_path, experiment, extra, header):
    text = BASE.replace("experiment = lln", f"experiment = {experiment}\n{extra}").replace(
        "tau = 1.0", "tau = 1.0\ntimes = 0.5 1.0").replace("radii = 4 8", "radii = 8 16")
    code, out = run_cli(tmp_path, text)
    assert code == 0
    assert (out / f"{experiment}.csv").read_text().splitlines()[0] == header


def test_list_sorted(capsys):
    assert cli.main(["list"]) == 0
    text = capsys.readouterr().out
    sections = text.split("functionals:")
    models = [ln.split(":")[0].strip() for ln in sections[0].splitlines()[1:] if ln.startswith("  ") and not ln.startswith("    ")]
    assert models == sorted(models)
    for name in ("lattice_bd", "lattice_bd_relaxed", "rsa", "multilayer_bd_stick", "monolayer_bd_rolling_1d",
                 "exclusion", "zero_range", "voter_I", "voter_II"):
        assert name in models
    for name in ("phi1", "phi2", "phi3", "phi4", "phi5", "moment"):
        assert f"  {name}:" in sections[1]


def test_list_stable():
    assert cli.list_registry() == cli.list_registry()


def test_format_value():
    assert cli.format_value(True) == "true"
    assert cli.format_value(0.1) == "0.10000000000000001"
    assert cli.format_value(float("nan")) == "nan"
    assert cli.format_value(3) == "3"


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ipsim", "list"], capture_output=True, text=True, check=True)
    assert "models:" in res.stdout
