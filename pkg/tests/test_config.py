import pytest

from ipsim.config import ConfigError, parse_config

MINIMAL = """\
[model]
name = lattice_bd
lambda = 1.0

[window]
shape = box
radii = 4 8

[run]
tau = 1.0
replicates = 100
seed = 7

[statistic]
experiment = lln
"""


def errors_of(text):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    return exc.value.errors


def test_minimal():
    cfg = parse_config(MINIMAL)
    assert cfg.model == "lattice_bd" and cfg.model_params["lambda"] == 1.0
    assert cfg.sizes == [4, 8] and cfg.times == [1.0]
    assert cfg.replicates == 100 and cfg.seed == 7 and cfg.experiment == "lln"
    assert cfg.functional == "one" and cfg.formats == ["csv", "json"]


def test_negative_lambda_names_key():
    errs = errors_of(MINIMAL.replace("lambda = 1.0", "lambda = -1"))
    assert len(errs) == 1
    assert "lambda" in errs[0] and errs[0].startswith("line 3:")


def test_unknown_functional_lists_registry():
    errs = errors_of(MINIMAL + "functional = phi9\n")
    assert "phi9" in errs[0]
    for name in ("moment", "one", "phi1", "phi5"):
        assert name in errs[0]


def test_collects_every_error():
    text = MINIMAL.replace("lambda = 1.0", "lambda = -1\nwidth = 3").replace("seed = 7", "seed = -2")
    text += "bogus = 1\n[output]\nformats = xml\n"
    errs = errors_of(text)
    assert len(errs) == 5
    assert [int(e.split()[1].rstrip(":")) for e in errs] == [3, 4, 13, 17, 19]


def test_unknown_model_and_section():
    errs = errors_of(MINIMAL.replace("name = lattice_bd", "name = sandpile") + "[extra]\n")
    assert any("sandpile" in e and "rsa" in e for e in errs)
    assert any("unknown section" in e for e in errs)


def test_missing_sections():
    errs = errors_of("[model]\nname = rsa\nlambda = 1\n")
    assert {"missing section [window]", "missing section [run]", "missing section [statistic]"} <= set(errs)


def test_times_and_options():
    text = MINIMAL.replace("tau = 1.0", "tau = 1.0\ntimes = 0.5 1.0").replace(
        "experiment = lln", "experiment = sigma\nfunctional = moment\nk = 2\ns = 0.5\nt = 1.0\nsigma_runs = 10")
    cfg = parse_config(text)
    assert cfg.times == [0.5, 1.0]
    assert cfg.functional_params == {"k": 2}
    assert cfg.options == {"s": 0.5, "t": 1.0, "sigma_runs": 10}


def test_time_not_planned():
    errs = errors_of(MINIMAL.replace("experiment = lln", "experiment = sigma\ns = 0.3"))
    assert "not one of the run times" in errs[0]


def test_interval_window():
    text = MINIMAL.replace("shape = box\nradii = 4 8", "shape = interval\nlengths = 2")
    cfg = parse_config(text)
    assert cfg.window_shape == "interval" and cfg.sizes == [2]


def test_dimension_mismatch():
    errs = errors_of(MINIMAL.replace("radii = 4 8", "radii = 4 8\ndimension = 2"))
    assert "one-dimensional" in errs[0] or "differs" in errs[0]
    cfg = parse_config(MINIMAL.replace("lambda = 1.0", "lambda = 1.0\ndim = 2").replace(
        "radii = 4 8", "radii = 4 8\ndimension = 2"))
    assert cfg.dimension == 2


def test_comments_and_duplicates():
    cfg = parse_config("# header\n" + MINIMAL.replace("seed = 7", "seed = 7   # fixed"))
    assert cfg.seed == 7
    errs = errors_of(MINIMAL + "experiment = clt\n")
    assert "duplicate" in errs[0]


def test_coupling_needs_two_windows():
    errs = errors_of(MINIMAL.replace("radii = 4 8", "radii = 4").replace("experiment = lln", "experiment = couple"))
    assert "two window" in errs[0]


def test_resolved_excludes_directory():
    a = parse_config(MINIMAL + "[output]\ndirectory = a\n").resolved()
    b = parse_config(MINIMAL + "[output]\ndirectory = b\n").resolved()
    assert a == b and a["run"]["seed"] == 7
