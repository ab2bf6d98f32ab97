"""Lattice geometry on Z^d: neighbourhood templates, windows and their boundaries.

Sites are plain tuples of ints. Windows are frozensets of sites; every function
that returns a site collection returns a frozenset, and :func:`sorted_sites`
gives the canonical (lexicographic) iteration order used everywhere else.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

Site = tuple[int, ...]
Window = frozenset


def _add(v: Site, u: Site) -> Site:
    return tuple(a + b for a, b in zip(v, u))


def sorted_sites(sites: Iterable[Site]) -> list[Site]:
    return sorted(sites)


@dataclass(frozen=True)
class NeighborhoodTemplate:
    """Finite symmetric set of offsets containing the origin.

    ``N_v = v + offsets``. The degree bound of the induced graph is
    ``len(offsets) - 1``.
    """

    offsets: tuple[Site, ...]
    dim: int = field(init=False)
    center_index: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        offs = tuple(sorted({tuple(int(c) for c in o) for o in self.offsets}))
        if not offs:
            raise ValueError("template must be non-empty")
        dims = {len(o) for o in offs}
        if len(dims) != 1:
            raise ValueError(f"offsets have mixed dimensions {sorted(dims)}")
        d = dims.pop()
        if d < 1:
            raise ValueError("dimension must be >= 1")
        s = set(offs)
        if (0,) * d not in s:
            raise ValueError("template must contain the zero offset")
        bad = [o for o in offs if tuple(-c for c in o) not in s]
        if bad:
            raise ValueError(f"template is not symmetric: missing negatives of {bad}")
        object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "center_index", offs.index((0,) * d))

    @classmethod
    def box(cls, dim: int, radius: int = 1) -> "NeighborhoodTemplate":
        """All offsets with sup-norm at most ``radius``."""
        rng = range(-radius, radius + 1)
        return cls(tuple(itertools.product(rng, repeat=dim)))

    @classmethod
    def cross(cls, dim: int) -> "NeighborhoodTemplate":
        """Origin plus the 2*dim nearest neighbours (von Neumann)."""
        offs = [(0,) * dim]
        for k in range(dim):
            for sgn in (-1, 1):
                e = [0] * dim
                e[k] = sgn
                offs.append(tuple(e))
        return cls(tuple(offs))

    @classmethod
    def identity(cls, dim: int) -> "NeighborhoodTemplate":
        return cls(((0,) * dim,))

    @property
    def degree(self) -> int:
        return len(self.offsets) - 1

    @property
    def radius(self) -> int:
        """Sup-norm reach of the template."""
        return max(max(abs(c) for c in o) for o in self.offsets)

    def at(self, v: Site) -> list[Site]:
        """Sites of ``N_v`` in template order."""
        return [_add(v, o) for o in self.offsets]

    def dilate(self, other: "NeighborhoodTemplate") -> "NeighborhoodTemplate":
        return NeighborhoodTemplate(tuple({_add(a, b) for a in self.offsets for b in other.offsets}))


def box_window(radius: int, dim: int = 1) -> Window:
    """The box ``([-radius, radius] ∩ Z)^d``."""
    rng = range(-radius, radius + 1)
    return frozenset(itertools.product(rng, repeat=dim))


def interval_window(lo: int, hi: int) -> Window:
    """Sites ``lo..hi-1`` of Z (half-open)."""
    return frozenset((x,) for x in range(lo, hi))


def neighborhood(A: Iterable[Site], N: NeighborhoodTemplate) -> Window:
    A = list(A)
    if not A:
        raise ValueError("window must be non-empty")
    return frozenset(_add(v, o) for v in A for o in N.offsets)


def exterior_boundary(A: Iterable[Site], N: NeighborhoodTemplate) -> Window:
    A = frozenset(A)
    return neighborhood(A, N) - A


def interior(A: Iterable[Site], N: NeighborhoodTemplate) -> Window:
    # valid because N is symmetric: Z^d \ N_{A^c} = {v : v + N ⊆ A}
    A = frozenset(A)
    return frozenset(v for v in A if all(_add(v, o) in A for o in N.offsets))


def two_neighborhood(v: Site, N: NeighborhoodTemplate) -> Window:
    return neighborhood(neighborhood([v], N), N)


def graph_distance(v: Site, w: Site, N: NeighborhoodTemplate, limit: int = 10_000) -> int:
    """Hop distance between ``v`` and ``w`` in the graph with steps ``N \\ {0}``."""
    target = tuple(b - a for a, b in zip(v, w))
    zero = (0,) * N.dim
    if target == zero:
        return 0
    steps = [o for o in N.offsets if o != zero]
    r = N.radius
    # any shortest path stays within the bounding box of the target widened by r
    lo = [min(0, t) - r for t in target]
    hi = [max(0, t) + r for t in target]
    seen = {zero}
    frontier = deque([(zero, 0)])
    while frontier:
        x, dist = frontier.popleft()
        if dist >= limit:
            break
        for s in steps:
            y = _add(x, s)
            if y in seen or any(c < l or c > h for c, l, h in zip(y, lo, hi)):
                continue
            if y == target:
                return dist + 1
            seen.add(y)
            frontier.append((y, dist + 1))
    raise ValueError(f"{w} unreachable from {v} with template {N.offsets}")


@dataclass(frozen=True)
class WindowCheck:
    size: int
    boundary_size: int
    ratio: float
    interior_consistent: bool


@dataclass(frozen=True)
class WindowSequenceReport:
    rows: tuple[WindowCheck, ...]
    ratio_decreasing: bool
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_window_sequence(windows: Sequence[Iterable[Site]], N: NeighborhoodTemplate) -> WindowSequenceReport:
    """Boundary-to-volume ratios and the ``(N_A)° = A`` test for each window."""
    if not windows:
        raise ValueError("window list must be non-empty")
    rows = []
    violations = []
    for i, A in enumerate(windows):
        A = frozenset(A)
        boundary = exterior_boundary(A, N)
        consistent = interior(neighborhood(A, N), N) == A
        rows.append(WindowCheck(len(A), len(boundary), len(boundary) / len(A), consistent))
        if not consistent:
            violations.append(f"window {i}: interior of its neighbourhood differs from the window")
    ratios = [r.ratio for r in rows]
    decreasing = all(b < a for a, b in zip(ratios, ratios[1:]))
    if len(rows) > 1 and not decreasing:
        violations.append("boundary/volume ratio is not strictly decreasing")
    return WindowSequenceReport(tuple(rows), decreasing, tuple(violations))
