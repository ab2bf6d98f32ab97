"""Additive set functionals on windows.

Two evaluation paths exist for continuum models:

* :func:`eval_point_functional` sums a per-point functional ``phi`` over the
  points of a global marked point set lying in a union of cubes;
* :func:`eval_additive` sums a patch functional ``H`` over the sites of a
  window of the cube embedding, with ``H_phi`` built by :func:`point_to_local`.

Both must give the same number, which :func:`embedding_identity_check` tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .engine import Configuration, UnmaterializedSite
from .lattice import NeighborhoodTemplate, Site, neighborhood, sorted_sites
from .models import Param
from .models.continuum import CONTACT_TOL, cube_of

Neighbour = tuple  # (relative position, mark)


class UnsupportedFunctional(ValueError):
    pass


# --------------------------------------------------------------------------
# patch functionals


@dataclass(frozen=True)
class LocalFunctional:
    """``H``: a real function of the recentred patch ``(states on v + N)``."""

    name: str
    template: NeighborhoodTemplate

    def evaluate(self, patch) -> float:
        raise NotImplementedError

    def __call__(self, patch) -> float:
        return self.evaluate(patch)

    @property
    def center(self) -> int:
        return self.template.center_index


@dataclass(frozen=True)
class ConstantOne(LocalFunctional):
    name: str = "one"
    template: NeighborhoodTemplate = field(default_factory=lambda: NeighborhoodTemplate.identity(1))

    def evaluate(self, patch):
        return 1.0


@dataclass(frozen=True)
class LatticeMoment(LocalFunctional):
    """``H(patch) = state(center) ** k`` for integer-valued sites."""

    k: int = 1
    name: str = "moment"
    template: NeighborhoodTemplate = field(default_factory=lambda: NeighborhoodTemplate.identity(1))

    def evaluate(self, patch):
        return float(patch[self.center]) ** self.k


def eval_additive(H: LocalFunctional, A: Iterable[Site], xi: Configuration) -> float:
    """``S_H^A(xi)``: the sum of ``H`` over the recentred patches of sites in ``A``.

    Raises :class:`UnmaterializedSite` if a patch reaches a site whose state is
    unknown.
    """
    total = 0.0
    if H.template.degree == 0:
        for v in sorted_sites(A):
            total += H.evaluate((xi[v],))
        return total
    for v in sorted_sites(A):
        total += H.evaluate(xi.patch(v, H.template))
    return total


def site_values(H: LocalFunctional, sites: Sequence[Site], xi: Configuration) -> np.ndarray:
    """The field ``H(L_v xi)`` for each ``v`` in ``sites``, in the given order."""
    if H.template.degree == 0:
        return np.array([H.evaluate((xi[v],)) for v in sites], dtype=float)
    return np.array([H.evaluate(xi.patch(v, H.template)) for v in sites], dtype=float)


# --------------------------------------------------------------------------
# point functionals


def _d2(a, b):
    return sum((x - y) * (x - y) for x, y in zip(a, b))


@dataclass(frozen=True)
class PointFunctional:
    """``phi(theta, X)``: a function of a point's mark and its neighbours within ``reach``.

    ``neighbours`` lists the *other* points within horizontal distance
    ``reach``, as ``(position relative to the point, mark)``.
    """

    name: str
    reach: float = 0.0

    def evaluate(self, mark, neighbours: Sequence[Neighbour]) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Phi1(PointFunctional):
    """Counts points."""

    name: str = "phi1"

    def evaluate(self, mark, neighbours):
        return 1.0


@dataclass(frozen=True)
class Phi2(PointFunctional):
    """Half the number of other points within ``R1``: sums to the number of close pairs."""

    R1: float = 1.0
    name: str = "phi2"

    def __post_init__(self):
        object.__setattr__(self, "reach", self.R1)

    def evaluate(self, mark, neighbours):
        r2 = self.R1 * self.R1
        zero = (0.0,) * len(neighbours[0][0]) if neighbours else ()
        return 0.5 * sum(1 for pos, _ in neighbours if _d2(pos, zero) <= r2)


def _height(mark, name):
    if not isinstance(mark, (int, float)) or isinstance(mark, bool):
        raise UnsupportedFunctional(f"{name} needs height marks, got {mark!r}")
    return float(mark)


@dataclass(frozen=True)
class Phi3(PointFunctional):
    """1 if the point's height is at most ``R3``."""

    R3: float = 0.5
    name: str = "phi3"

    def evaluate(self, mark, neighbours):
        return 1.0 if _height(mark, self.name) <= self.R3 else 0.0


@dataclass(frozen=True)
class Phi4(PointFunctional):
    """Half the number of balls in contact, using (d+1)-dimensional distance with heights."""

    name: str = "phi4"
    reach: float = 1.0

    def evaluate(self, mark, neighbours):
        th = _height(mark, self.name)
        n = 0
        for pos, m in neighbours:
            dist = math.sqrt(sum(c * c for c in pos) + (_height(m, self.name) - th) ** 2)
            if abs(dist - 1.0) <= CONTACT_TOL:
                n += 1
        return 0.5 * n


def _arc_crossings(a, ha, b, hb):
    """Abscissae where the upper unit semicircles centred at ``(a, ha)`` and ``(b, hb)`` meet."""
    dx, dy = b - a, hb - ha
    d2 = dx * dx + dy * dy
    if d2 == 0.0 or d2 > 4.0:
        return []
    h = math.sqrt(max(0.0, 1.0 - d2 / 4.0))
    d = math.sqrt(d2)
    mx, my = a + dx / 2, ha + dy / 2
    out = []
    for sgn in (1.0, -1.0):
        x = mx - sgn * h * dy / d
        y = my + sgn * h * dx / d
        if y >= max(ha, hb) - 1e-12:
            out.append(x)
    return out


def _contact_height(u, x, h):
    r2 = (u - x) * (u - x)
    return h + math.sqrt(1.0 - r2) if r2 < 1.0 else -math.inf


def is_exposed_1d(height: float, neighbours: Sequence[Neighbour]) -> bool:
    """Whether some drop position makes first contact with the ball at ``(0, height)``.

    A ball dropped at ``u`` hits the ball maximising the contact height
    ``theta_j + sqrt(1 - (u - x_j)^2)``. Between consecutive crossing points
    of the competing arcs the ordering is fixed, so testing one abscissa per
    sub-interval decides whether the ball wins on a set of positive length.
    """
    others = [(pos[0], float(m)) for pos, m in neighbours if abs(pos[0]) < 2.0]
    cuts = {-1.0, 1.0}
    for x, h in others:
        for c in (x - 1.0, x + 1.0):
            if -1.0 < c < 1.0:
                cuts.add(c)
        for c in _arc_crossings(0.0, height, x, h):
            if -1.0 < c < 1.0:
                cuts.add(c)
    cuts = sorted(cuts)
    for lo, hi in zip(cuts, cuts[1:]):
        if hi - lo <= 1e-12:
            continue
        u = 0.5 * (lo + hi)
        mine = _contact_height(u, 0.0, height)
        if all(_contact_height(u, x, h) < mine for x, h in others):
            return True
    return False


@dataclass(frozen=True)
class Phi5(PointFunctional):
    """The height of the ball if it is exposed (d = 1 only), else 0."""

    name: str = "phi5"
    reach: float = 2.0

    def evaluate(self, mark, neighbours):
        th = _height(mark, self.name)
        if neighbours and len(neighbours[0][0]) != 1:
            raise UnsupportedFunctional("phi5 is only defined for d = 1")
        return th if is_exposed_1d(th, neighbours) else 0.0


# --------------------------------------------------------------------------
# the two evaluation paths


def _as_points(X) -> list:
    pts = []
    for pos, mark in X:
        pos = (float(pos),) if isinstance(pos, (int, float)) else tuple(float(c) for c in pos)
        pts.append((pos, mark))
    return pts


def _cube_template(dim: int, reach: float) -> NeighborhoodTemplate:
    r = math.ceil(reach - 1e-12) if reach > 0 else 0
    return NeighborhoodTemplate.box(dim, r) if r > 0 else NeighborhoodTemplate.identity(dim)


def eval_point_functional(phi: PointFunctional, region: Iterable[Site], X,
                          materialized: Iterable[Site] | None = None) -> float:
    """``S_phi`` over the union of the cubes in ``region``.

    ``X`` is a finite global marked point set (pairs ``(position, mark)``).
    ``materialized`` lists the cubes on which ``X`` is known; every cube
    within ``reach`` of the region must be among them. ``None`` means ``X``
    is known everywhere.
    """
    region = frozenset(region)
    if not region:
        return 0.0
    dim = len(next(iter(region)))
    pts = _as_points(X)
    if materialized is not None:
        halo = neighborhood(region, _cube_template(dim, phi.reach))
        missing = halo - frozenset(materialized)
        if missing:
            raise UnmaterializedSite(f"{phi.name} needs the halo cubes {sorted(missing)[:4]}")
    if not pts:
        return 0.0
    P = np.array([p for p, _ in pts], dtype=float).reshape(len(pts), dim)
    inside = [i for i, (p, _) in enumerate(pts) if cube_of(p)[0] in region]
    r2 = phi.reach * phi.reach
    total = 0.0
    for i in inside:
        neigh = []
        if phi.reach > 0:
            diff = P - P[i]
            close = np.flatnonzero(np.einsum("ij,ij->i", diff, diff) <= r2 * (1 + 1e-12) + 1e-12)
            for j in close:
                if j != i:
                    neigh.append((tuple(b - a for a, b in zip(pts[i][0], pts[j][0])), pts[j][1]))
        total += phi.evaluate(pts[i][1], neigh)
    return total


@dataclass(frozen=True)
class PointSumLocal(LocalFunctional):
    """``H_phi``: ``phi`` summed over the points of the centre cube, neighbours read from the patch."""

    phi: PointFunctional = field(default_factory=Phi1)

    def evaluate(self, patch):
        c = self.center
        if self.phi.reach <= 0:
            return sum(self.phi.evaluate(m, ()) for _, m in patch[c])
        offs = self.template.offsets
        pts = []
        for ci, cube in enumerate(patch):
            o = offs[ci]
            for pos, m in cube:
                pts.append((ci, tuple(a + p for a, p in zip(o, pos)), m))
        r2 = self.phi.reach * self.phi.reach
        total = 0.0
        for k, (ci, rel, m) in enumerate(pts):
            if ci != c:
                continue
            neigh = []
            for j, (_, q, mq) in enumerate(pts):
                if j == k:
                    continue
                d = tuple(b - a for a, b in zip(rel, q))
                if sum(x * x for x in d) <= r2 * (1 + 1e-12) + 1e-12:
                    neigh.append((d, mq))
            total += self.phi.evaluate(m, neigh)
        return total


def point_to_local(phi: PointFunctional, dim: int) -> PointSumLocal:
    """Build ``H_phi`` on a cube template wide enough to see every neighbour within ``reach``."""
    return PointSumLocal(phi.name, _cube_template(dim, phi.reach), phi)


@dataclass(frozen=True)
class IdentityCheck:
    ok: bool
    point_value: float
    lattice_value: float


def embedding_identity_check(phi: PointFunctional, A: Iterable[Site], X, rtol: float = 1e-12) -> IdentityCheck:
    """Compare ``S_phi`` over the cubes of ``A`` with ``S_{H_phi}^A`` of the embedding of ``X``."""
    from .models.continuum import embed

    A = frozenset(A)
    pts = _as_points(X)
    dim = len(next(iter(A)))
    a = eval_point_functional(phi, A, pts)
    b = eval_additive(point_to_local(phi, dim), A, embed(pts))
    ok = abs(a - b) <= rtol * max(abs(a), abs(b)) or a == b
    return IdentityCheck(ok, a, b)


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class FunctionalSpec:
    name: str
    summary: str
    params: tuple[Param, ...]
    factory: Callable[..., Any]
    kind: str  # "lattice" or "point"

    def build(self, dim: int = 1, **given) -> LocalFunctional:
        from .models import ModelSpec

        values, errors = ModelSpec(self.name, "", self.params, lambda **k: k).resolve(given)
        if errors:
            raise ValueError("; ".join(errors))
        made = self.factory(dim=dim, **values)
        return point_to_local(made, dim) if isinstance(made, PointFunctional) else made


FUNCTIONALS: dict[str, FunctionalSpec] = {
    "one": FunctionalSpec("one", "H = 1 (site count)", (),
                          lambda dim: ConstantOne(template=NeighborhoodTemplate.identity(dim)), "lattice"),
    "moment": FunctionalSpec("moment", "lattice moment: state at the site to the power k",
                             (Param("k", int, 1, lambda k: k >= 1, ">= 1"),),
                             lambda dim, k: LatticeMoment(k=k, name=f"moment{k}",
                                                          template=NeighborhoodTemplate.identity(dim)), "lattice"),
    "phi1": FunctionalSpec("phi1", "number of points", (), lambda dim: Phi1(), "point"),
    "phi2": FunctionalSpec("phi2", "number of pairs within R1 (half weight across the boundary)",
                           (Param("R1", float, 1.0, lambda r: r >= 1, ">= 1"),),
                           lambda dim, R1: Phi2(R1=R1), "point"),
    "phi3": FunctionalSpec("phi3", "number of balls with height at most R3",
                           (Param("R3", float, 0.5, lambda r: r > 0, "> 0"),),
                           lambda dim, R3: Phi3(R3=R3), "point"),
    "phi4": FunctionalSpec("phi4", "number of ball contacts", (), lambda dim: Phi4(), "point"),
    "phi5": FunctionalSpec("phi5", "total height of exposed balls (d = 1)", (), lambda dim: _phi5(dim), "point"),
}


def _phi5(dim):
    if dim != 1:
        raise UnsupportedFunctional("phi5 is only defined for d = 1")
    return Phi5()


def build_functional(name: str, dim: int = 1, **params) -> LocalFunctional:
    try:
        spec = FUNCTIONALS[name]
    except KeyError:
        raise KeyError(f"unknown functional {name!r}; available: {', '.join(sorted(FUNCTIONALS))}") from None
    return spec.build(dim, **params)
