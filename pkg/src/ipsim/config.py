"""Sectioned ``key = value`` run configuration.

Grammar::

    # comment            (also ';' comments; blank lines ignored)
    [section]
    key = value          (lists are whitespace separated)

Sections and keys:

``[model]``       ``name`` plus the model's parameters (see ``ipsim list``)
``[init]``        ``law`` = constant | jittered_center | uniform_points,
                  with ``jitter`` / ``count``
``[window]``      ``shape`` = box | interval, ``dimension``, ``radii``
                  (box) or ``lengths`` (interval, d = 1, sites ``0..L-1``)
``[run]``         ``tau``, ``times`` (default: tau), ``replicates``, ``seed``
``[statistic]``   ``experiment``, ``functional`` plus its parameters, and the
                  experiment keys ``s``, ``t``, ``distances``, ``n_values``,
                  ``delta``, ``probes``, ``cap``, ``sigma_runs``, ``max_lag``
``[output]``      ``directory``, ``formats`` (subset of csv json), ``trace``
``[debug]``       ``inject_coupling_fault``

Every problem found is reported with its line number; parsing never stops at
the first error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .functionals import FUNCTIONALS
from .harness import EXPERIMENTS
from .models import MODELS


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _floats(text):
    return [float(x) for x in text.split()]


def _ints(text):
    out = []
    for x in text.split():
        out.append(int(x))
    return out


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _sites(text):
    """``"0 1 -1"`` or ``"0,0 1,0"``: whitespace separated, comma separated coordinates."""
    return [tuple(int(c) for c in tok.split(",")) for tok in text.split()]


# key -> (parser, check or None, rule text)
_FIXED: dict[str, dict[str, tuple]] = {
    "window": {
        "shape": (str, lambda v: v in ("box", "interval"), "box or interval"),
        "dimension": (int, lambda v: v >= 1, ">= 1"),
        "radii": (_ints, lambda v: len(v) > 0 and all(r >= 0 for r in v), "non-empty, each >= 0"),
        "lengths": (_ints, lambda v: len(v) > 0 and all(r >= 1 for r in v), "non-empty, each >= 1"),
    },
    "run": {
        "tau": (float, lambda v: v >= 0, ">= 0"),
        "times": (_floats, lambda v: len(v) > 0 and all(t >= 0 for t in v), "non-empty, each >= 0"),
        "replicates": (int, lambda v: v >= 2, ">= 2"),
        "seed": (int, lambda v: 0 <= v < 2 ** 64, "in [0, 2^64)"),
    },
    "output": {
        "directory": (str, None, ""),
        "formats": (lambda t: t.split(), lambda v: len(v) > 0 and set(v) <= {"csv", "json"}, "subset of csv json"),
        "trace": (_bool, None, ""),
    },
    "debug": {
        "inject_coupling_fault": (_bool, None, ""),
    },
    "init": {
        "law": (str, lambda v: v in ("constant", "jittered_center", "uniform_points"),
                "constant, jittered_center or uniform_points"),
        "jitter": (float, lambda v: 0 <= v <= 0.5, "in [0, 0.5]"),
        "count": (int, lambda v: v >= 0, ">= 0"),
    },
}

_EXPERIMENT_KEYS = {
    "experiment": (str, None, ""),
    "functional": (str, None, ""),
    "s": (float, lambda v: v >= 0, ">= 0"),
    "t": (float, lambda v: v >= 0, ">= 0"),
    "distances": (_ints, lambda v: len(v) > 0 and all(r >= 0 for r in v), "non-empty, each >= 0"),
    "n_values": (_ints, lambda v: len(v) > 0 and all(n >= 1 for n in v), "non-empty, each >= 1"),
    "delta": (float, lambda v: v > 0, "> 0"),
    "probes": (_sites, lambda v: len(v) > 0, "non-empty"),
    "cap": (int, lambda v: v >= 1, ">= 1"),
    "sigma_runs": (int, lambda v: v >= 2, ">= 2"),
    "max_lag": (int, lambda v: v >= 0, ">= 0"),
}

_SECTIONS = ("model", "init", "window", "run", "statistic", "output", "debug")
_REQUIRED = {"model": ("name",), "window": ("radii",), "run": ("tau", "replicates", "seed"),
             "statistic": ("experiment",)}


@dataclass
class RunConfig:
    model: str
    model_params: dict
    window_shape: str
    dimension: int
    sizes: list  # radii (box) or lengths (interval)
    tau: float
    times: list
    replicates: int
    seed: int
    experiment: str
    functional: str
    functional_params: dict
    options: dict
    init: dict = field(default_factory=lambda: {"law": "constant"})
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json"])
    trace: bool = False
    inject_coupling_fault: bool = False

    def resolved(self) -> dict:
        """Plain-data view used for the JSON summary."""
        return {
            "model": {"name": self.model, **self.model_params},
            "init": dict(self.init),
            "window": {"shape": self.window_shape, "dimension": self.dimension,
                       ("radii" if self.window_shape == "box" else "lengths"): list(self.sizes)},
            "run": {"tau": self.tau, "times": list(self.times), "replicates": self.replicates, "seed": self.seed},
            "statistic": {"experiment": self.experiment, "functional": self.functional,
                          **self.functional_params,
                          **{k: ([list(p) for p in v] if k == "probes" else v) for k, v in self.options.items()}},
            # the directory is left out so relocated runs stay byte-identical
            "output": {"formats": list(self.formats), "trace": self.trace},
            "debug": {"inject_coupling_fault": self.inject_coupling_fault},
        }


_HEADER = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")


def _lex(text: str, errors: list) -> dict:
    """``{section: {key: (value, line)}}`` plus ``{section: (None, header line)}`` under key ``""``."""
    out: dict[str, dict[str, tuple]] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = _HEADER.match(line)
        if m:
            section = m.group(1).lower()
            if section not in _SECTIONS:
                errors.append(f"line {no}: unknown section [{section}]; expected one of {', '.join(_SECTIONS)}")
                section = "!ignored"
            if section in out and section != "!ignored":
                errors.append(f"line {no}: section [{section}] repeated")
            out.setdefault(section, {})[""] = ("", no)
            continue
        if "=" not in line:
            errors.append(f"line {no}: expected 'key = value', got {line!r}")
            continue
        if section is None:
            errors.append(f"line {no}: key outside any section")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        for mark in (" #", " ;"):
            if mark in value:
                value = value.split(mark, 1)[0].rstrip()
        if not key:
            errors.append(f"line {no}: empty key")
            continue
        if key in out[section]:
            errors.append(f"line {no}: duplicate key {key!r} in [{section}]")
            continue
        out[section][key] = (value, no)
    out.pop("!ignored", None)
    return out


def _parse_value(section, key, value, no, schema, errors):
    parser, check, rule = schema
    try:
        v = parser(value)
    except (TypeError, ValueError):
        errors.append(f"line {no}: [{section}] {key} = {value!r} is not a valid {getattr(parser, '__name__', 'value').strip('_')}")
        return None
    if check is not None and not check(v):
        errors.append(f"line {no}: [{section}] {key} = {value!r} out of range (must be {rule})")
        return None
    return v


def _line_of(msg: str) -> int:
    m = re.match(r"line (\d+):", msg)
    return int(m.group(1)) if m else 0


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration, raising :class:`ConfigError` with every problem."""
    errors: list[str] = []
    raw = _lex(text, errors)
    for sec, keys in _REQUIRED.items():
        if sec not in raw:
            errors.append(f"missing section [{sec}]")
            continue
        for k in keys:
            if k not in raw[sec]:
                if not (sec == "window" and k == "radii" and "lengths" in raw[sec]):
                    errors.append(f"line {raw[sec][''][1]}: [{sec}] missing required key {k!r}")

    vals: dict[str, dict[str, Any]] = {s: {} for s in _SECTIONS}
    for sec in ("window", "run", "output", "debug", "init"):
        for key, (value, no) in raw.get(sec, {}).items():
            if key == "":
                continue
            schema = _FIXED[sec].get(key)
            if schema is None:
                errors.append(f"line {no}: unknown key {key!r} in [{sec}]; expected one of {', '.join(sorted(_FIXED[sec]))}")
                continue
            v = _parse_value(sec, key, value, no, schema, errors)
            if v is not None:
                vals[sec][key] = v

    # model
    model_sec = raw.get("model", {})
    model_name = model_sec.get("name", (None, 0))[0]
    model_params: dict = {}
    spec = None
    if model_name is not None:
        spec = MODELS.get(model_name)
        if spec is None:
            errors.append(f"line {model_sec['name'][1]}: unknown model {model_name!r}; available: "
                          f"{', '.join(sorted(MODELS))}")
    if spec is not None:
        given = {k: v for k, (v, _) in model_sec.items() if k not in ("", "name")}
        lines = {k: no for k, (_, no) in model_sec.items()}
        known = {p.name: p for p in spec.params}
        for k in given:
            if k not in known:
                errors.append(f"line {lines[k]}: unknown key {k!r} in [model] for {model_name}; "
                              f"expected one of {', '.join(sorted(known))}")
        for p in spec.params:
            if p.name not in given:
                if p.required:
                    errors.append(f"line {lines['']}: [model] {model_name} needs {p.name!r}")
                else:
                    model_params[p.name] = p.default
                continue
            try:
                v = p.coerce(given[p.name])
            except (TypeError, ValueError):
                errors.append(f"line {lines[p.name]}: [model] {p.name} = {given[p.name]!r} is not a valid {p.kind.__name__}")
                continue
            msg = p.validate(v)
            if msg:
                errors.append(f"line {lines[p.name]}: [model] {p.name} = {given[p.name]!r} out of range ({msg})")
                continue
            model_params[p.name] = v

    # statistic
    stat = raw.get("statistic", {})
    experiment = stat.get("experiment", (None, 0))[0]
    if experiment is not None and experiment not in EXPERIMENTS:
        errors.append(f"line {stat['experiment'][1]}: unknown experiment {experiment!r}; available: "
                      f"{', '.join(sorted(EXPERIMENTS))}")
    fname = stat.get("functional", ("one", 0))[0]
    fspec = FUNCTIONALS.get(fname)
    if fspec is None:
        errors.append(f"line {stat['functional'][1]}: unknown functional {fname!r}; available: "
                      f"{', '.join(sorted(FUNCTIONALS))}")
    fparams: dict = {}
    options: dict = {}
    fknown = {p.name: p for p in fspec.params} if fspec else {}
    for key, (value, no) in stat.items():
        if key in ("", "experiment", "functional"):
            continue
        if key in fknown:
            p = fknown[key]
            try:
                v = p.coerce(value)
            except (TypeError, ValueError):
                errors.append(f"line {no}: [statistic] {key} = {value!r} is not a valid {p.kind.__name__}")
                continue
            msg = p.validate(v)
            if msg:
                errors.append(f"line {no}: [statistic] {key} = {value!r} out of range ({msg})")
                continue
            fparams[key] = v
        elif key in _EXPERIMENT_KEYS:
            v = _parse_value("statistic", key, value, no, _EXPERIMENT_KEYS[key], errors)
            if v is not None:
                options[key] = v
        else:
            allowed = sorted(set(fknown) | set(_EXPERIMENT_KEYS))
            errors.append(f"line {no}: unknown key {key!r} in [statistic]; expected one of {', '.join(allowed)}")
    if fspec:
        for p in fspec.params:
            fparams.setdefault(p.name, p.default)

    w = vals["window"]
    shape = w.get("shape", "box")
    dim = w.get("dimension", 1)
    if shape == "box":
        sizes = w.get("radii", [])
        if "lengths" in w:
            errors.append(f"line {raw['window']['lengths'][1]}: [window] lengths needs shape = interval")
    else:
        sizes = w.get("lengths", [])
        if dim != 1:
            errors.append(f"line {raw['window'].get('dimension', ('', 0))[1]}: [window] interval windows need dimension = 1")
        if not sizes and "window" in raw:
            errors.append(f"line {raw['window'][''][1]}: [window] shape = interval needs 'lengths'")
    if sizes and sorted(sizes) != list(sizes):
        errors.append(f"line {raw['window'].get('radii', raw['window'].get('lengths'))[1]}: window sizes must be increasing")
    if "dim" in model_params and model_params["dim"] != dim and spec is not None:
        errors.append(f"line {raw['model'].get('dim', raw['model'][''])[1]}: [model] dim = {model_params['dim']} "
                      f"differs from [window] dimension = {dim}")
    if spec is not None and "dim" not in model_params and dim != 1:
        errors.append(f"line {raw['window'].get('dimension', ('', 0))[1]}: model {model_name} is one-dimensional")

    run = vals["run"]
    tau = run.get("tau", 0.0)
    times = run.get("times", [tau])
    if "times" in run and any(t > tau for t in times):
        errors.append(f"line {raw['run']['times'][1]}: [run] times must not exceed tau = {tau}")
    for key in ("s", "t"):
        if key in options and options[key] not in times:
            errors.append(f"line {stat[key][1]}: [statistic] {key} = {options[key]} is not one of the run times")
    if "probes" in options and any(len(p) != dim for p in options["probes"]):
        errors.append(f"line {stat['probes'][1]}: [statistic] probes must have {dim} coordinates")
    if experiment == "couple" and len(sizes) < 2:
        errors.append("coupling needs two window sizes (inner and outer)")
    if experiment in ("sigma", "decay", "increments") and len(times) < 1:
        errors.append("this experiment needs observation times")

    if errors:
        raise ConfigError(sorted(errors, key=_line_of))
    out = vals["output"]
    return RunConfig(
        model=model_name, model_params=model_params, window_shape=shape, dimension=dim, sizes=list(sizes),
        tau=tau, times=sorted(set(times) | {tau}), replicates=run["replicates"], seed=run["seed"],
        experiment=experiment, functional=fname, functional_params=fparams, options=options,
        init={"law": "constant", **vals["init"]},
        directory=out.get("directory", "out"), formats=out.get("formats", ["csv", "json"]),
        trace=out.get("trace", False),
        inject_coupling_fault=vals["debug"].get("inject_coupling_fault", False))
