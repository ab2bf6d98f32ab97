"""Integer-valued lattice models: ballistic deposition, surface relaxation, spin flips."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..engine import JumpModel
from ..lattice import NeighborhoodTemplate


def _check_rate(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True, eq=False)
class LatticeBD(JumpModel):
    """Multilayer lattice ballistic deposition.

    A particle arriving at ``v`` sticks one layer above the tallest column in
    ``N_v``. Heights never decrease.
    """

    lam: float
    template: NeighborhoodTemplate = field(default_factory=lambda: NeighborhoodTemplate.cross(1))
    name: str = "lattice_bd"
    default_state: int = 0

    def __post_init__(self):
        _check_rate("lambda", self.lam)

    @property
    def c_max(self) -> float:
        return self.lam

    def local_rate(self, patch):
        return self.lam

    def jump(self, patch, u):
        c = self.center
        out = list(patch)
        out[c] = max(patch) + 1
        return tuple(out)

    def transitions(self, patch):
        return [(self.jump(patch, 0.0), self.lam)]


@dataclass(frozen=True, eq=False)
class LatticeBDRelaxed(JumpModel):
    """Deposition with surface relaxation: the particle lands on a lowest column of ``N_v``."""

    lam: float
    template: NeighborhoodTemplate = field(default_factory=lambda: NeighborhoodTemplate.cross(1))
    name: str = "lattice_bd_relaxed"
    default_state: int = 0

    def __post_init__(self):
        _check_rate("lambda", self.lam)

    @property
    def c_max(self) -> float:
        return self.lam

    def local_rate(self, patch):
        return self.lam

    @staticmethod
    def _minima(patch):
        low = min(patch)
        return [i for i, h in enumerate(patch) if h == low]

    def jump(self, patch, u):
        mins = self._minima(patch)
        k = mins[min(int(u * len(mins)), len(mins) - 1)]
        out = list(patch)
        out[k] += 1
        return tuple(out)

    def transitions(self, patch):
        mins = self._minima(patch)
        res = []
        for k in mins:
            out = list(patch)
            out[k] += 1
            res.append((tuple(out), self.lam / len(mins)))
        return res


@dataclass(frozen=True, eq=False)
class SpinFlip(JumpModel):
    """Independent two-state sites: 0 -> 1 at ``up``, 1 -> 0 at ``down``."""

    up: float = 1.0
    down: float = 1.0
    dim: int = 1
    name: str = "flip"
    default_state: int = 0

    def __post_init__(self):
        if self.up < 0 or self.down < 0 or max(self.up, self.down) <= 0:
            raise ValueError("flip rates must be non-negative and not both zero")

    @property
    def template(self) -> NeighborhoodTemplate:
        return NeighborhoodTemplate.identity(self.dim)

    @property
    def c_max(self) -> float:
        return max(self.up, self.down)

    def local_rate(self, patch):
        return self.up if patch[0] == 0 else self.down

    def jump(self, patch, u):
        return (1 - patch[0],)

    def transitions(self, patch):
        r = self.local_rate(patch)
        return [((1 - patch[0],), r)] if r > 0 else []
