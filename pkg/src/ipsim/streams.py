"""Counter-based Poisson event streams, one per lattice site.

Every random number is a pure function of ``(seed, site, counter)``: a site key
is hashed from the seed and the site coordinates, and the ``j``-th uniform of
that site is the ``j``-th output of a SplitMix64 generator started at the key.
Nothing depends on which other sites are materialised, so two windows built
from the same seed see identical clocks at every shared site.

Event ``i`` of a site consumes counters ``2i`` (exponential spacing) and
``2i + 1`` (the uniform label).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .lattice import Site

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)

# salts separating the independent families drawn from one user seed
EVENTS = 0x5EED_0001
INITIAL = 0x5EED_0002
REPLICATE = 0x5EED_0003

_G = np.uint64(GOLDEN)
_C1 = np.uint64(_M1)
_C2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


def mix64(z: int) -> int:
    """SplitMix64 finaliser on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


def derive_seed(seed: int, *parts: int) -> int:
    """Hash a seed together with integer tags into a fresh 64-bit seed."""
    h = mix64(seed + GOLDEN)
    for p in parts:
        h = mix64(h ^ mix64((p & MASK64) + GOLDEN))
    return h


def site_key(seed: int, site: Site) -> int:
    return derive_seed(seed, *site)


def site_keys(seed: int, coords: np.ndarray) -> np.ndarray:
    """Vectorised :func:`site_key` over an ``(m, d)`` integer array."""
    with np.errstate(over="ignore"):
        h = np.full(coords.shape[0], mix64(seed + GOLDEN), dtype=np.uint64)
        for k in range(coords.shape[1]):
            c = coords[:, k].astype(np.int64).view(np.uint64)
            h = _mix_array(h ^ _mix_array(c + _G))
    return h


def uniform_at(key: int, counter: int) -> float:
    """The ``counter``-th uniform on (0, 1) of the SplitMix64 stream at ``key``."""
    z = mix64(key + (counter + 1) * GOLDEN)
    return ((z >> 11) + 0.5) * _INV53


def _uniform_block(keys: np.ndarray, start: int, count: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        ctr = (np.arange(start, start + count, dtype=np.uint64) + np.uint64(1)) * _G
        z = _mix_array(keys[:, None] + ctr[None, :])
    return ((z >> _S11).astype(np.float64) + 0.5) * _INV53


def label_uniforms(u: float, k: int) -> tuple[float, ...]:
    """Expand one uniform label into ``k`` uniforms.

    The first value is ``u`` itself; the rest come from a SplitMix64 stream
    keyed by the bit pattern of ``u``.
    """
    if k <= 1:
        return (u,)
    key = struct.unpack("<Q", struct.pack("<d", u))[0]
    return (u,) + tuple(uniform_at(key, j) for j in range(k - 1))


def label_stream(u: float) -> Iterator[float]:
    """Unbounded version of :func:`label_uniforms`: ``u`` then its hashed successors."""
    yield u
    key = struct.unpack("<Q", struct.pack("<d", u))[0]
    j = 0
    while True:
        yield uniform_at(key, j)
        j += 1


@dataclass(frozen=True)
class EventStream:
    """The Poisson clock of one site: arrival times and uniform labels."""

    site: Site
    rate: float
    key: int

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """First ``n`` events as ``(times, labels)``."""
        u = _uniform_block(np.array([self.key], dtype=np.uint64), 0, 2 * n)[0]
        spacings = -np.log(u[0::2]) / self.rate
        return np.cumsum(spacings), u[1::2]

    def until(self, horizon: float) -> tuple[np.ndarray, np.ndarray]:
        """All events with time at most ``horizon``."""
        n = _block_size(self.rate * horizon)
        while True:
            t, lab = self.take(n)
            if t[-1] > horizon:
                k = int(np.searchsorted(t, horizon, side="right"))
                return t[:k], lab[:k]
            n *= 2


def _block_size(mean: float) -> int:
    return max(8, int(mean + 6.0 * math.sqrt(mean) + 8))


class StreamFamily:
    """All site streams for one seed and one thinning rate."""

    def __init__(self, seed: int, rate: float):
        if not rate > 0:
            raise ValueError(f"stream rate must be positive, got {rate}")
        self.seed = int(seed)
        self.rate = float(rate)
        self._event_seed = derive_seed(self.seed, EVENTS)
        self._cache: dict[Site, tuple[np.ndarray, np.ndarray]] = {}
        self._cache_horizon = -1.0

    def stream(self, site: Site) -> EventStream:
        return EventStream(tuple(site), self.rate, site_key(self._event_seed, site))

    def times_until(self, site: Site, horizon: float) -> np.ndarray:
        """Cached arrival times of ``site`` up to ``horizon``."""
        if horizon > self._cache_horizon:
            self._cache.clear()
            self._cache_horizon = horizon
        hit = self._cache.get(site)
        if hit is None:
            hit = self.stream(site).until(self._cache_horizon)
            self._cache[site] = hit
        t = hit[0]
        if horizon < self._cache_horizon:
            return t[: int(np.searchsorted(t, horizon, side="right"))]
        return t

    def window_events(self, sites: Sequence[Site], horizon: float):
        """Every event of ``sites`` in ``[0, horizon]`` in processing order.

        Returns ``(site_index, times, labels)`` sorted by time, with exact time
        ties broken by position in ``sites`` (callers pass canonical order).
        """
        m = len(sites)
        if m == 0 or horizon <= 0:
            empty = np.empty(0)
            return np.empty(0, dtype=np.int64), empty, empty
        coords = np.asarray(sites, dtype=np.int64).reshape(m, -1)
        keys = site_keys(self._event_seed, coords)
        n = _block_size(self.rate * horizon)
        u = _uniform_block(keys, 0, 2 * n)
        times = np.cumsum(-np.log(u[:, 0::2]) / self.rate, axis=1)
        labels = u[:, 1::2]
        short = np.flatnonzero(times[:, -1] <= horizon)
        if short.size:
            # rare: some clocks need more events than the block holds
            extra_t, extra_l = [], []
            for i in short:
                t, lab = EventStream(tuple(sites[i]), self.rate, int(keys[i])).until(horizon)
                extra_t.append(t)
                extra_l.append(lab)
        mask = times <= horizon
        if short.size:
            mask[short] = False
        idx = np.nonzero(mask)
        site_idx = idx[0]
        t_all = times[idx]
        l_all = labels[idx]
        if short.size:
            site_idx = np.concatenate([site_idx] + [np.full(len(t), i) for i, t in zip(short, extra_t)])
            t_all = np.concatenate([t_all] + extra_t)
            l_all = np.concatenate([l_all] + extra_l)
        order = np.lexsort((site_idx, t_all))
        return site_idx[order], t_all[order], l_all[order]


def make_streams(seed: int, sites: Iterable[Site], c_max: float) -> dict[Site, EventStream]:
    """Per-site event streams at rate ``c_max``."""
    family = StreamFamily(seed, c_max)
    return {tuple(s): family.stream(s) for s in sites}


def initial_uniforms(seed: int, site: Site, k: int) -> tuple[float, ...]:
    """``k`` uniforms reserved for drawing the initial state of ``site``."""
    key = site_key(derive_seed(seed, INITIAL), site)
    return tuple(uniform_at(key, j) for j in range(k))


def replicate_seed(seed: int, index: int) -> int:
    return derive_seed(seed, REPLICATE, index)
