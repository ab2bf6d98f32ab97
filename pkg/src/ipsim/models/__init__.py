"""Model registry: every shipped model addressable by name plus keyword parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from ..lattice import NeighborhoodTemplate
from .continuum import (
    RSA,
    ContinuumModel,
    Exclusion,
    InitialConditionError,
    JitteredCenter,
    MonolayerRolling1D,
    MultilayerStick,
    RateFamily,
    UniformBall,
    UniformPoints,
    Voter,
    ZeroRange,
    embed,
    hardcore_cap,
    unembed,
)
from .lattice import LatticeBD, LatticeBDRelaxed, SpinFlip


@dataclass(frozen=True)
class Param:
    """One model or functional parameter: type, default and admissible range."""

    name: str
    kind: type
    default: Any = None
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    choices: tuple = ()

    @property
    def required(self) -> bool:
        return self.default is None

    def coerce(self, raw):
        if self.kind is bool and isinstance(raw, str):
            low = raw.strip().lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        value = self.kind(raw)
        if self.kind is int and isinstance(raw, float) and raw != int(raw):
            raise ValueError(f"expected an integer, got {raw!r}")
        return value

    def validate(self, value) -> str | None:
        if self.choices and value not in self.choices:
            return f"must be one of {', '.join(map(str, self.choices))}"
        if self.check is not None and not self.check(value):
            return f"must satisfy {self.rule}"
        return None

    def describe(self) -> str:
        parts = [self.kind.__name__]
        if self.choices:
            parts.append("{" + ",".join(map(str, self.choices)) + "}")
        elif self.rule:
            parts.append(self.rule)
        parts.append("required" if self.required else f"default {self.default}")
        return f"{self.name} ({'; '.join(parts)})"


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


@dataclass(frozen=True)
class ModelSpec:
    name: str
    summary: str
    params: tuple[Param, ...]
    factory: Callable[..., Any]
    finite: bool = False  # enumerable jump kernel, usable with the generator oracle

    def resolve(self, given: dict) -> tuple[dict, list[str]]:
        """Coerce and range-check ``given``; returns ``(values, errors)``."""
        known = {p.name: p for p in self.params}
        values, errors = {}, []
        for key in given:
            if key not in known:
                errors.append(f"unknown parameter {key!r} for {self.name}; expected one of {sorted(known)}")
        for p in self.params:
            if p.name not in given:
                if p.required:
                    errors.append(f"{self.name}: missing required parameter {p.name!r}")
                else:
                    values[p.name] = p.default
                continue
            try:
                v = p.coerce(given[p.name])
            except (TypeError, ValueError) as exc:
                errors.append(f"{p.name}: {exc}")
                continue
            msg = p.validate(v)
            if msg:
                errors.append(f"{p.name} = {v!r} out of range: {msg}")
            values[p.name] = v
        return values, errors

    def build(self, **given):
        values, errors = self.resolve(given)
        if errors:
            raise ValueError("; ".join(errors))
        return self.factory(**values)


def _lattice_template(dim, neighborhood):
    if neighborhood == "cross":
        return NeighborhoodTemplate.cross(dim)
    if neighborhood == "identity":
        return NeighborhoodTemplate.identity(dim)
    return NeighborhoodTemplate.box(dim, 1)


def _rates(kind, lam):
    return RateFamily(kind, lam)


_LAM = Param("lambda", float, None, _pos, "> 0")
_DIM = Param("dim", int, 1, lambda d: 1 <= d <= 3, "1..3")
_LDIM = Param("dim", int, 1, lambda d: d >= 1, ">= 1")
_NBR = Param("neighborhood", str, "cross", choices=("box", "cross", "identity"))

MODELS: dict[str, ModelSpec] = {}


def _register(spec: ModelSpec):
    MODELS[spec.name] = spec


_register(ModelSpec(
    "lattice_bd", "multilayer lattice ballistic deposition (heights)",
    (_LAM, _LDIM, _NBR),
    lambda **k: LatticeBD(k["lambda"], _lattice_template(k["dim"], k["neighborhood"])),
    finite=True))
_register(ModelSpec(
    "lattice_bd_relaxed", "lattice deposition with surface relaxation to a lowest neighbour",
    (_LAM, _LDIM, _NBR),
    lambda **k: LatticeBDRelaxed(k["lambda"], _lattice_template(k["dim"], k["neighborhood"])),
    finite=True))
_register(ModelSpec(
    "flip", "independent two-state spins",
    (Param("up", float, 1.0, _nonneg, ">= 0"), Param("down", float, 1.0, _nonneg, ">= 0"), _LDIM),
    lambda **k: SpinFlip(k["up"], k["down"], k["dim"]),
    finite=True))
_register(ModelSpec(
    "rsa", "random sequential adsorption of unit hard spheres, optional desorption",
    (_LAM, Param("desorption", float, 0.0, _nonneg, ">= 0"), _DIM, Param("R", float, 1.0, lambda r: r >= 1, ">= 1")),
    lambda **k: RSA(k["lambda"], k["desorption"], k["dim"], k["R"])))
_register(ModelSpec(
    "multilayer_bd_stick", "multilayer continuum ballistic deposition, sticking on first contact",
    (_LAM, Param("dim", int, 1, choices=(1, 2))),
    lambda **k: MultilayerStick(k["lambda"], k["dim"])))
_register(ModelSpec(
    "monolayer_bd_rolling_1d", "monolayer ballistic deposition with rolling, d = 1",
    (_LAM,),
    lambda **k: MonolayerRolling1D(k["lambda"])))
_register(ModelSpec(
    "exclusion", "continuum exclusion process with uniform-ball jumps",
    (_LAM, Param("eps", float, None, _pos, "> 0"), Param("jump_radius", float, 1.0, _pos, "> 0"), _DIM),
    lambda **k: Exclusion(k["lambda"], k["eps"], UniformBall(k["jump_radius"], k["dim"]), k["dim"])))
_register(ModelSpec(
    "zero_range", "continuum zero-range process, lambda_n from a named family",
    (_LAM, Param("eps", float, None, _pos, "> 0"), Param("jump_radius", float, 1.0, _pos, "> 0"),
     Param("rates", str, "harmonic", choices=("harmonic", "isolated")), _DIM),
    lambda **k: ZeroRange(_rates(k["rates"], k["lambda"]), k["eps"], UniformBall(k["jump_radius"], k["dim"]), k["dim"])))
for _variant in ("I", "II"):
    _register(ModelSpec(
        f"voter_{_variant}",
        "continuum voter, copy a random point within R with probability p" if _variant == "I"
        else "continuum voter, copy the nearest point within R",
        (_LAM, Param("R", float, 1.0, _pos, "> 0"), Param("p", float, 1.0, lambda p: 0 <= p <= 1, "in [0, 1]"), _DIM),
        lambda _v=_variant, **k: Voter(k["lambda"], k["R"], k["p"], _v, k["dim"])))


def build_model(name: str, **params):
    try:
        spec = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(sorted(MODELS))}") from None
    return spec.build(**params)


__all__ = [
    "MODELS", "ModelSpec", "Param", "build_model",
    "LatticeBD", "LatticeBDRelaxed", "SpinFlip",
    "ContinuumModel", "RSA", "MultilayerStick", "MonolayerRolling1D", "Exclusion", "ZeroRange", "Voter",
    "UniformBall", "RateFamily", "JitteredCenter", "UniformPoints", "InitialConditionError",
    "embed", "unembed", "hardcore_cap",
]
