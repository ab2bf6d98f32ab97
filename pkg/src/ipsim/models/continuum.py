"""Continuum marked point processes embedded in unit cubes.

The local state of site ``v`` is the tuple of points in the cube
``C_v = v + [0, 1)^d``, each stored as ``(local_position, mark)`` with the
position relative to the cube corner. Points inside a cube are kept sorted so
that equal configurations have equal representations.

Geometry inside a patch works in coordinates relative to the corner of the
centre cube: a point of cube offset ``o`` at local position ``p`` sits at
``o + p``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..engine import Configuration, InitialDistribution, JumpModel
from ..lattice import NeighborhoodTemplate, Site, sorted_sites
from ..streams import label_stream, label_uniforms

CONTACT_TOL = 1e-9

Point = tuple  # (position tuple, mark)


class InitialConditionError(ValueError):
    pass


def hardcore_cap(eps: float, dim: int) -> int:
    """Upper bound on how many points with pairwise distance >= ``eps`` fit in a unit cube."""
    if dim == 1:
        return math.ceil(1.0 / eps - 1e-12)
    # disjoint balls of radius eps/2 inside the eps/2-enlarged cube
    ball = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * (eps / 2) ** dim
    return math.floor((1.0 + eps) ** dim / ball)


def cube_of(position: Sequence[float]) -> tuple[Site, tuple[float, ...]]:
    """Split a position into its cube index and the local coordinates."""
    site, local = [], []
    for x in position:
        f = math.floor(x)
        r = x - f
        if r >= 1.0:  # rounding of tiny negative coordinates
            f, r = f + 1, 0.0
        site.append(int(f))
        local.append(r)
    return tuple(site), tuple(local)


def _dist2(a, b):
    return sum((x - y) * (x - y) for x, y in zip(a, b))


class ContinuumModel(JumpModel):
    """Shared cube-patch geometry for continuum models."""

    dim: int = 1
    default_state = ()

    def _init_geometry(self, reach: float):
        tmpl = NeighborhoodTemplate.box(self.dim, max(1, math.ceil(reach - 1e-12)))
        object.__setattr__(self, "template", tmpl)
        object.__setattr__(self, "_offs", tuple(tuple(float(c) for c in o) for o in tmpl.offsets))
        object.__setattr__(self, "_cube_index", {o: i for i, o in enumerate(tmpl.offsets)})

    def points(self, patch):
        """``(relative_position, mark, cube_index, point_index)`` for every point of the patch."""
        out = []
        for ci, (off, cube) in enumerate(zip(self._offs, patch)):
            for pi, (pos, mark) in enumerate(cube):
                out.append((tuple(o + p for o, p in zip(off, pos)), mark, ci, pi))
        return out

    def place(self, cubes: list, rel_pos, mark) -> None:
        """Insert a point given in patch-relative coordinates."""
        off, local = cube_of(rel_pos)
        ci = self._cube_index.get(off)
        if ci is None:
            raise RuntimeError(f"{self.name}: placement {rel_pos} left the patch")
        cubes[ci] = tuple(sorted(cubes[ci] + ((local, mark),)))

    @staticmethod
    def remove(cubes: list, ci: int, pi: int) -> Point:
        cube = cubes[ci]
        cubes[ci] = cube[:pi] + cube[pi + 1:]
        return cube[pi]


# --------------------------------------------------------------------------
# deposition models


@dataclass(frozen=True, eq=False)
class RSA(ContinuumModel):
    """Random sequential adsorption of unit-diameter hard spheres, optional desorption.

    Arrivals are uniform in the cube at rate ``lam`` and are kept iff no
    existing centre lies within distance 1. With ``desorption > 0`` every
    particle leaves at that rate.
    """

    lam: float
    desorption: float = 0.0
    dim: int = 1
    R: float = 1.0
    name: str = "rsa"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.desorption < 0:
            raise ValueError("desorption rate must be non-negative")
        if self.R < 1:
            raise ValueError("RSA needs interaction range R >= 1")
        self._init_geometry(self.R)

    @property
    def c_max(self) -> float:
        return self.lam + self.desorption * hardcore_cap(1.0, self.dim)

    def local_rate(self, patch):
        return self.lam + self.desorption * len(patch[self.center])

    def jump(self, patch, u):
        s = u * self.local_rate(patch)
        if s < self.lam:
            pos = label_uniforms(s / self.lam, self.dim)
            for off, cube in zip(self._offs, patch):
                for p, _ in cube:
                    if _dist2([o + q for o, q in zip(off, p)], pos) < 1.0:
                        return patch
            cubes = list(patch)
            cubes[self.center] = tuple(sorted(patch[self.center] + ((pos, None),)))
            return tuple(cubes)
        n = len(patch[self.center])
        k = min(int((s - self.lam) / self.desorption), n - 1)
        cubes = list(patch)
        self.remove(cubes, self.center, k)
        return tuple(cubes)


@dataclass(frozen=True, eq=False)
class MultilayerStick(ContinuumModel):
    """Multilayer ballistic deposition of unit balls that stick on first contact.

    The mark is the height of the ball centre above the substrate.
    """

    lam: float
    dim: int = 1
    name: str = "multilayer_bd_stick"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.dim not in (1, 2):
            raise ValueError("substrate dimension must be 1 or 2")
        self._init_geometry(1.0)

    @property
    def c_max(self) -> float:
        return self.lam

    def local_rate(self, patch):
        return self.lam

    @staticmethod
    def landing_height(pos, balls) -> float:
        """Centre height of a ball dropped at ``pos`` onto ``balls`` = [(position, height)]."""
        theta = 0.5
        for rel, h in balls:
            r2 = _dist2(rel, pos)
            if r2 < 1.0:
                theta = max(theta, h + math.sqrt(1.0 - r2))
        return theta

    def jump(self, patch, u):
        pos = label_uniforms(u, self.dim)
        theta = self.landing_height(pos, [(rel, h) for rel, h, _, _ in self.points(patch)])
        cubes = list(patch)
        cubes[self.center] = tuple(sorted(patch[self.center] + ((pos, theta),)))
        return tuple(cubes)


@dataclass(frozen=True, eq=False)
class MonolayerRolling1D(ContinuumModel):
    """Monolayer ballistic deposition on a line with rolling.

    A ball falling at ``x`` with no centre within distance 1 lands at ``x``.
    Otherwise it strikes the horizontally nearest centre ``c`` and rolls off
    it to ``c ± 1``, away from ``x``; it stays there only if no other centre is
    closer than 1.
    """

    lam: float
    name: str = "monolayer_bd_rolling_1d"
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        self._init_geometry(2.0)

    @property
    def c_max(self) -> float:
        return self.lam

    def local_rate(self, patch):
        return self.lam

    def landing(self, x: float, centers: Sequence[float], tie: float) -> float | None:
        """Resting position for a drop at ``x``, or ``None`` if rejected."""
        near = [c for c in centers if abs(x - c) < 1.0]
        if not near:
            return x
        dmin = min(abs(x - c) for c in near)
        ties = sorted(c for c in near if abs(x - c) == dmin)
        k = min(int(tie * len(ties)), len(ties) - 1)
        target = ties[k]
        if x > target:
            new = target + 1.0
        elif x < target:
            new = target - 1.0
        else:
            # dead-centre hit: reuse the tie uniform's position within its bin
            frac = tie * len(ties) - k
            new = target + (1.0 if frac >= 0.5 else -1.0)
        for c in centers:
            if c is not target and abs(new - c) < 1.0 - CONTACT_TOL:
                return None
        return new

    def jump(self, patch, u):
        x, tie = label_uniforms(u, 2)
        centers = [rel[0] for rel, _, _, _ in self.points(patch)]
        new = self.landing(x, centers, tie)
        if new is None:
            return patch
        cubes = list(patch)
        self.place(cubes, (new,), None)
        return tuple(cubes)


# --------------------------------------------------------------------------
# off-lattice interacting particles


@dataclass(frozen=True)
class UniformBall:
    """Uniform jump law on the closed ball of the given radius."""

    radius: float
    dim: int = 1

    def sample(self, us) -> tuple[float, ...]:
        us = iter(us)
        if self.dim == 1:
            return ((2.0 * next(us) - 1.0) * self.radius,)
        if self.dim == 2:
            r = self.radius * math.sqrt(next(us))
            a = 2.0 * math.pi * next(us)
            return (r * math.cos(a), r * math.sin(a))
        while True:
            y = tuple(2.0 * next(us) - 1.0 for _ in range(self.dim))
            if sum(c * c for c in y) <= 1.0:
                return tuple(self.radius * c for c in y)


def _validate_spacing(model, config: Configuration, eps: float):
    pts = []
    for site in sorted_sites(config.states):
        for pos, _ in config.states[site]:
            pts.append(tuple(s + p for s, p in zip(site, pos)))
    # cube bucketing keeps this near-linear
    buckets: dict = {}
    for i, p in enumerate(pts):
        buckets.setdefault(tuple(math.floor(c / eps) for c in p), []).append(i)
    for key, idx in buckets.items():
        for delta in itertools.product((-1, 0, 1), repeat=len(key)):
            other = buckets.get(tuple(k + d for k, d in zip(key, delta)), ())
            for i in idx:
                for j in other:
                    if i < j and _dist2(pts[i], pts[j]) < eps * eps:
                        raise InitialConditionError(
                            f"{model.name}: initial points {pts[i]} and {pts[j]} closer than {eps}")


@dataclass(frozen=True, eq=False)
class Exclusion(ContinuumModel):
    """Continuum exclusion: jumps by ``Y ~ beta`` succeed iff nobody is within ``eps`` of the target."""

    lam: float
    eps: float
    jump_law: UniformBall = field(default_factory=lambda: UniformBall(1.0))
    dim: int = 1
    name: str = "exclusion"

    def __post_init__(self):
        if not (self.lam > 0 and self.eps > 0):
            raise ValueError("lambda and epsilon must be positive")
        if self.jump_law.dim != self.dim:
            raise ValueError("jump law dimension differs from model dimension")
        self._init_geometry(self.jump_law.radius + self.eps)

    @property
    def c_max(self) -> float:
        return self.lam * hardcore_cap(self.eps, self.dim)

    def local_rate(self, patch):
        return self.lam * len(patch[self.center])

    def validate(self, config):
        _validate_spacing(self, config, self.eps)

    def jump(self, patch, u):
        cube = patch[self.center]
        s = u * len(cube)
        k = min(int(s), len(cube) - 1)
        y = self.jump_law.sample(label_stream(s - k))
        pos = cube[k][0]
        dest = tuple(o + p + d for o, p, d in zip(self._offs[self.center], pos, y))
        eps2 = self.eps * self.eps
        for rel, _, ci, pi in self.points(patch):
            if ci == self.center and pi == k:
                continue
            if _dist2(rel, dest) < eps2:
                return patch
        cubes = list(patch)
        _, mark = self.remove(cubes, self.center, k)
        self.place(cubes, dest, mark)
        return tuple(cubes)


@dataclass(frozen=True)
class RateFamily:
    """Jump rates ``lambda_n`` of the zero-range process with declared suprema."""

    kind: str
    lam: float

    def rate(self, n: int) -> float:
        if self.kind == "harmonic":
            return self.lam / (n + 1)
        if self.kind == "isolated":
            return self.lam if n == 0 else 0.0
        raise ValueError(f"unknown rate family {self.kind!r}")

    @property
    def sup_rate(self) -> float:
        return self.lam

    @property
    def sup_n_rate(self) -> float:
        """``sup_n n * lambda_n``."""
        return self.lam if self.kind == "harmonic" else 0.0


@dataclass(frozen=True, eq=False)
class ZeroRange(ContinuumModel):
    """Continuum zero-range process: a particle with ``n`` others within ``eps`` jumps at ``lambda_n``."""

    rates: RateFamily
    eps: float
    jump_law: UniformBall = field(default_factory=lambda: UniformBall(1.0))
    dim: int = 1
    name: str = "zero_range"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("epsilon must be positive")
        if self.jump_law.dim != self.dim:
            raise ValueError("jump law dimension differs from model dimension")
        self._init_geometry(max(self.jump_law.radius, self.eps))

    @property
    def c_max(self) -> float:
        # cells of diameter <= eps: m particles sharing a cell each see >= m-1 others
        cells = math.ceil(math.sqrt(self.dim) / self.eps - 1e-12) ** self.dim
        return cells * max(self.rates.sup_rate, 2.0 * self.rates.sup_n_rate)

    def _particle_rates(self, patch):
        pts = self.points(patch)
        eps2 = self.eps * self.eps
        rates = []
        for rel, _, ci, pi in pts:
            if ci != self.center:
                continue
            n = sum(1 for q, _, cj, pj in pts if (cj, pj) != (ci, pi) and _dist2(rel, q) <= eps2)
            rates.append(self.rates.rate(n))
        return rates

    def local_rate(self, patch):
        return sum(self._particle_rates(patch))

    def jump(self, patch, u):
        rates = self._particle_rates(patch)
        total = sum(rates)
        s = u * total
        acc = 0.0
        k = len(rates) - 1
        for i, r in enumerate(rates):
            if s < acc + r:
                k = i
                break
            acc += r
        frac = min(max((s - acc) / rates[k], 0.0), 1.0 - 1e-16) if rates[k] > 0 else 0.5
        y = self.jump_law.sample(label_stream(frac))
        cube = patch[self.center]
        dest = tuple(o + p + d for o, p, d in zip(self._offs[self.center], cube[k][0], y))
        cubes = list(patch)
        _, mark = self.remove(cubes, self.center, k)
        self.place(cubes, dest, mark)
        return tuple(cubes)


@dataclass(frozen=True, eq=False)
class Voter(ContinuumModel):
    """Continuum voter models with two colours (marks 0 and 1).

    Variant ``"I"``: the newcomer copies a uniformly chosen point within ``R``
    with probability ``p``, otherwise takes a fair coin. Variant ``"II"``:
    copies the nearest point within ``R``. With nobody within ``R`` the colour
    is a fair coin.
    """

    lam: float
    R: float = 1.0
    p: float = 1.0
    variant: str = "I"
    dim: int = 1
    name: str = "voter"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.variant not in ("I", "II"):
            raise ValueError("variant must be 'I' or 'II'")
        if not self.R > 0:
            raise ValueError("R must be positive")
        object.__setattr__(self, "name", f"voter_{self.variant}")
        self._init_geometry(self.R)

    @property
    def c_max(self) -> float:
        return self.lam

    def local_rate(self, patch):
        return self.lam

    def colour(self, pos, neighbours, a: float, b: float) -> int:
        R2 = self.R * self.R
        cands = sorted((_dist2(rel, pos), rel, mark) for rel, mark in neighbours if _dist2(rel, pos) <= R2)
        coin = 1 if b < 0.5 else 0
        if not cands:
            return coin
        if self.variant == "II":
            return cands[0][2]
        if a < self.p:
            return cands[min(int(b * len(cands)), len(cands) - 1)][2]
        return coin

    def jump(self, patch, u):
        us = label_uniforms(u, self.dim + 2)
        pos = us[: self.dim]
        neighbours = [(rel, mark) for rel, mark, _, _ in self.points(patch)]
        c = self.colour(pos, neighbours, us[self.dim], us[self.dim + 1])
        cubes = list(patch)
        cubes[self.center] = tuple(sorted(patch[self.center] + ((pos, c),)))
        return tuple(cubes)


# --------------------------------------------------------------------------
# initial laws for particle-conserving models


@dataclass(frozen=True)
class JitteredCenter(InitialDistribution):
    """One point per cube at the cube centre displaced by at most ``jitter`` per axis."""

    jitter: float
    dim: int = 1
    mark: object = None
    name: str = "jittered_center"

    @property
    def uniforms(self):
        return self.dim

    def sample(self, us):
        return (((tuple(0.5 + self.jitter * (2.0 * u - 1.0) for u in us)), self.mark),)


@dataclass(frozen=True)
class UniformPoints(InitialDistribution):
    """A fixed number of independent uniform points per cube."""

    count: int
    dim: int = 1
    name: str = "uniform_points"

    @property
    def uniforms(self):
        return self.count * self.dim

    def sample(self, us):
        pts = [(tuple(us[i * self.dim:(i + 1) * self.dim]), None) for i in range(self.count)]
        return tuple(sorted(pts))


# --------------------------------------------------------------------------
# the cube embedding


def embed(X: Iterable[Point], region: Iterable[Site] | None = None, dim: int | None = None) -> Configuration:
    """Cube embedding of a finite marked point set.

    ``X`` holds ``(position, mark)`` pairs in global coordinates. Every cube
    of ``region`` is materialised (empty if it holds no point) and cubes
    outside default to empty.
    """
    states: dict[Site, list] = {}
    for pos, mark in X:
        pos = (pos,) if isinstance(pos, (int, float)) else tuple(pos)
        site, local = cube_of(pos)
        states.setdefault(site, []).append((local, mark))
    if region is not None:
        region = frozenset(region)
        outside = [s for s in states if s not in region]
        if outside:
            raise ValueError(f"points in cubes {sorted(outside)[:3]} lie outside the region")
        for s in region:
            states.setdefault(s, [])
    return Configuration({s: tuple(sorted(p)) for s, p in states.items()}, default=())


def unembed(config: Configuration) -> list[Point]:
    """Inverse of :func:`embed`: global ``(position, mark)`` pairs in canonical order."""
    out = []
    for site in sorted_sites(config.states):
        for local, mark in config.states[site]:
            out.append((tuple(s + p for s, p in zip(site, local)), mark))
    return out
