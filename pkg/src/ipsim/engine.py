"""Graphical construction of finite-range interacting particle systems.

Each site carries a Poisson clock of rate ``c_max`` with uniform labels. At an
arrival ``(T, u)`` at site ``v`` the patch ``x`` on ``N_v`` is replaced by
``psi(x, u)``, where ``psi`` thins the model's jump kernel: ``u`` below
``alpha(x) / c_max`` selects a jump whose law is sampled from the rescaled
label, anything else leaves the patch alone.

Windowed dynamics only fire clocks of sites inside the window; states on the
exterior boundary are materialised and stay frozen.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .lattice import (
    NeighborhoodTemplate,
    Site,
    Window,
    neighborhood,
    sorted_sites,
    two_neighborhood,
)
from .streams import StreamFamily, initial_uniforms

Patch = tuple
_RATE_SLACK = 1e-12


class RateBoundViolation(RuntimeError):
    """A local rate exceeded the model's declared ``c_max``."""


class ClusterEscape(RuntimeError):
    """Influence reachability left the region whose streams were examined."""


class StateSpaceTooLarge(RuntimeError):
    pass


class TruncationBreach(RuntimeError):
    """A simulated or enumerated state left the admissible (truncated) space."""


class UnmaterializedSite(KeyError):
    pass


class JumpModel:
    """Base class for translation-invariant jump models.

    Subclasses set ``name``, ``template`` and ``c_max`` and implement
    :meth:`local_rate` and :meth:`jump`. Patches are tuples of local states
    ordered like ``template.offsets``.
    """

    name: str = "model"
    template: NeighborhoodTemplate
    c_max: float
    default_state: Any = None

    def local_rate(self, patch: Patch) -> float:
        raise NotImplementedError

    def jump(self, patch: Patch, u: float) -> Patch:
        """Sample from ``alpha(x, .) / alpha(x)`` driven by the uniform ``u``."""
        raise NotImplementedError

    def transitions(self, patch: Patch) -> list[tuple[Patch, float]]:
        """Exact jump kernel as ``(new_patch, rate)`` pairs (finite models only)."""
        raise NotImplementedError(f"{self.name} has no enumerable jump kernel")

    def validate(self, config: "Configuration") -> None:
        """Reject illegal initial configurations (no-op by default)."""

    @property
    def center(self) -> int:
        return self.template.center_index


def thinned(model: JumpModel, patch: Patch, u: float) -> Patch:
    """The update map ``psi(x, u)`` of the graphical construction."""
    rate = model.local_rate(patch)
    cmax = model.c_max
    if rate > cmax * (1.0 + _RATE_SLACK):
        raise RateBoundViolation(f"{model.name}: local rate {rate!r} exceeds c_max {cmax!r}")
    scaled = u * cmax
    if scaled < rate:
        return model.jump(patch, scaled / rate)
    return patch


# --------------------------------------------------------------------------
# initial distributions


class InitialDistribution:
    """Product measure: each site drawn independently from ``sample``."""

    uniforms = 0
    name = "initial"

    def sample(self, us: tuple[float, ...]) -> Any:
        raise NotImplementedError

    @property
    def deterministic(self) -> bool:
        return self.uniforms == 0


@dataclass(frozen=True)
class Constant(InitialDistribution):
    state: Any
    name: str = "constant"

    def sample(self, us):
        return self.state


def _draw_initial(init: InitialDistribution, seed: int, sites: Iterable[Site]) -> dict[Site, Any]:
    if init.deterministic:
        s = init.sample(())
        return {v: s for v in sites}
    k = init.uniforms
    return {v: init.sample(initial_uniforms(seed, v, k)) for v in sites}


# --------------------------------------------------------------------------
# configurations and trajectories


class Configuration:
    """Local states on a finite materialised region.

    ``default`` is the frozen state assumed outside the region; it is only
    available when the initial law is deterministic, otherwise reading an
    unmaterialised site raises :class:`UnmaterializedSite`.
    """

    __slots__ = ("states", "default", "has_default")
    _MISSING = object()

    def __init__(self, states: dict[Site, Any], default: Any = _MISSING):
        self.states = states
        self.has_default = default is not Configuration._MISSING
        self.default = default if self.has_default else None

    @property
    def region(self) -> frozenset:
        return frozenset(self.states)

    def __getitem__(self, site: Site):
        try:
            return self.states[site]
        except KeyError:
            if self.has_default:
                return self.default
            raise UnmaterializedSite(site) from None

    def __contains__(self, site):
        return site in self.states

    def patch(self, v: Site, template: NeighborhoodTemplate) -> Patch:
        return tuple(self[w] for w in template.at(v))

    def copy(self) -> "Configuration":
        c = Configuration(dict(self.states))
        c.has_default, c.default = self.has_default, self.default
        return c

    def restrict(self, sites: Iterable[Site]) -> dict[Site, Any]:
        return {s: self[s] for s in sites}

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.states == other.states and self.default == other.default

    def __repr__(self):
        return f"Configuration({len(self.states)} sites)"


def apply_event(model: JumpModel, config: Configuration, v: Site, u: float) -> Configuration:
    """Return a new configuration after one clock ring at ``v`` with label ``u``."""
    sites = model.template.at(v)
    missing = [w for w in sites if w not in config.states]
    if missing:
        raise UnmaterializedSite(f"patch of {v} reaches unmaterialised sites {missing}")
    before = tuple(config.states[w] for w in sites)
    after = thinned(model, before, u)
    out = config.copy()
    for w, s in zip(sites, after):
        out.states[w] = s
    return out


@dataclass(frozen=True)
class EventRecord:
    time: float
    site: Site
    label: float
    before: Patch
    after: Patch

    @property
    def changed(self) -> bool:
        return self.before != self.after


@dataclass
class Trajectory:
    initial: Configuration
    final: Configuration
    horizon: float
    window: Window
    template: NeighborhoodTemplate
    n_events: int
    n_jumps: int
    events: list[EventRecord] = field(default_factory=list)
    snapshots: dict[float, Configuration] = field(default_factory=dict)

    def state_at(self, t: float) -> Configuration:
        """Replay recorded events up to time ``t`` (right-continuous)."""
        if t in self.snapshots:
            return self.snapshots[t]
        if t >= self.horizon:
            return self.final
        if not self.events and self.n_events:
            raise ValueError("trajectory was simulated without recording events")
        conf = self.initial.copy()
        for ev in self.events:
            if ev.time > t:
                break
            _write_patch(conf.states, ev.site, ev.after, self.template)
        return conf

    def write_ndjson(self, fh) -> None:
        """One JSON object per event: time, site, kind and the changed sites."""
        for ev in self.events:
            changes = {}
            for w, a, b in zip(self.template.at(ev.site), ev.before, ev.after):
                if a != b:
                    changes[",".join(map(str, w))] = _jsonable(b)
            rec = {
                "time": ev.time,
                "site": list(ev.site),
                "kind": "jump" if ev.changed else "idle",
                "label": ev.label,
                "changes": changes,
            }
            fh.write(json.dumps(rec) + "\n")


def _jsonable(state):
    if isinstance(state, tuple):
        return [_jsonable(s) for s in state]
    return state


def _write_patch(states, v, after, template):
    for w, s in zip(template.at(v), after):
        states[w] = s


@dataclass(frozen=True)
class Layout:
    """Precomputed patch addresses of a window under a template."""

    sites: tuple[Site, ...]
    region: Window
    patch_sites: tuple[tuple[Site, ...], ...]


@lru_cache(maxsize=64)
def layout(window: Window, template: NeighborhoodTemplate) -> Layout:
    sites = tuple(sorted_sites(window))
    region = neighborhood(window, template)
    return Layout(sites, region, tuple(tuple(template.at(v)) for v in sites))


def initial_configuration(model: JumpModel, window: Window, seed: int,
                          init: InitialDistribution | None = None) -> Configuration:
    init = init if init is not None else Constant(model.default_state)
    lay = layout(frozenset(window), model.template)
    states = _draw_initial(init, seed, sorted_sites(lay.region))
    if init.deterministic:
        conf = Configuration(states, default=init.sample(()))
    else:
        conf = Configuration(states)
    model.validate(conf)
    return conf


def simulate_window(model: JumpModel, window: Iterable[Site], tau: float, seed: int,
                    init: InitialDistribution | None = None, *, init_seed: int | None = None,
                    snapshots: Sequence[float] = (), record: bool = False,
                    on_event: Callable[[float, Site, Patch, Patch, dict], None] | None = None,
                    streams: StreamFamily | None = None) -> Trajectory:
    """Run the windowed process up to ``tau``.

    Only clocks of sites in ``window`` ring; the initial law is sampled on the
    whole neighbourhood of the window. ``snapshots`` are taken right after all
    events at times ``<= s``. ``on_event(time, site, before, after, states)``
    is called after every processed event (idle or not).
    """
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    window = frozenset(window)
    if not window:
        raise ValueError("window must be non-empty")
    lay = layout(window, model.template)
    initial = initial_configuration(model, window, seed if init_seed is None else init_seed, init)
    states = dict(initial.states)
    family = streams if streams is not None else StreamFamily(seed, model.c_max)
    site_idx, times, labels = family.window_events(lay.sites, tau)

    snap_times = sorted(set(float(s) for s in snapshots))
    if any(s < 0 or s > tau for s in snap_times):
        raise ValueError("snapshot times must lie in [0, tau]")
    snaps: dict[float, Configuration] = {}
    next_snap = 0

    def snapshot(t):
        c = Configuration(dict(states))
        c.has_default, c.default = initial.has_default, initial.default
        snaps[t] = c

    local_rate, jump = model.local_rate, model.jump
    cmax = model.c_max
    bound = cmax * (1.0 + _RATE_SLACK)
    patch_sites = lay.patch_sites
    events: list[EventRecord] = []
    n_jumps = 0
    for i, t, u in zip(site_idx.tolist(), times.tolist(), labels.tolist()):
        while next_snap < len(snap_times) and snap_times[next_snap] < t:
            snapshot(snap_times[next_snap])
            next_snap += 1
        keys = patch_sites[i]
        before = tuple([states[k] for k in keys])
        rate = local_rate(before)
        if rate > bound:
            raise RateBoundViolation(f"{model.name}: local rate {rate!r} exceeds c_max {cmax!r} at {lay.sites[i]}")
        scaled = u * cmax
        if scaled < rate:
            after = jump(before, scaled / rate)
            if after != before:
                n_jumps += 1
                for k, a, b in zip(keys, before, after):
                    if a is not b:
                        states[k] = b
        else:
            after = before
        if record:
            events.append(EventRecord(t, lay.sites[i], u, before, after))
        if on_event is not None:
            on_event(t, lay.sites[i], before, after, states)
    while next_snap < len(snap_times):
        snapshot(snap_times[next_snap])
        next_snap += 1

    final = Configuration(states)
    final.has_default, final.default = initial.has_default, initial.default
    return Trajectory(initial, final, float(tau), window, model.template, len(times), n_jumps, events, snaps)


# --------------------------------------------------------------------------
# influence clusters


@dataclass(frozen=True)
class InfluenceCluster:
    center: Site
    time: float
    members: frozenset

    def __len__(self):
        return len(self.members)


def _latest_before(times: np.ndarray, t: float, strict: bool) -> float | None:
    k = int(np.searchsorted(times, t, side="left" if strict else "right"))
    return float(times[k - 1]) if k > 0 else None


def _reverse_reach(streams: StreamFamily, targets: Iterable[Site], tau: float,
                   template: NeighborhoodTemplate, region: frozenset | None,
                   stop_outside: frozenset | None = None):
    """Latest reachable arrival time per site, propagated backwards in time.

    An arrival ``(u, T')`` precedes ``(z, T)`` when ``u`` is in the
    2-neighbourhood of ``z`` and ``T' < T``; if the arrival at ``z`` with
    time ``T`` reaches the targets then so does every earlier arrival at
    ``z``, so one time per site is enough. Returns ``(latest, members)``
    where ``members`` is the union of 2-neighbourhoods of reached sites,
    i.e. every ``w`` whose generation-0 point reaches a target.
    Returns ``None`` early if ``stop_outside`` is given and a member falls
    outside it.
    """
    plus = template.dilate(template)
    latest: dict[Site, float] = {}
    heap: list = []

    def times_of(site):
        if region is not None and site not in region:
            raise ClusterEscape(f"reachability left the examined region at {site}")
        return streams.times_until(site, tau)

    for z in sorted_sites(targets):
        last = _latest_before(times_of(z), tau, strict=False)
        if last is not None:
            latest[z] = last
            heapq.heappush(heap, (-last, z))
    members: set = set()
    while heap:
        neg, z = heapq.heappop(heap)
        T = -neg
        if latest.get(z, -1.0) > T:
            continue
        for u in plus.at(z):
            if u not in members:
                if stop_outside is not None and u not in stop_outside:
                    return None
                if region is not None and u not in region:
                    raise ClusterEscape(f"cluster reaches {u}, outside the examined region")
                members.add(u)
            prev = _latest_before(times_of(u), T, strict=True)
            if prev is not None and prev > latest.get(u, -1.0):
                latest[u] = prev
                heapq.heappush(heap, (-prev, u))
    return latest, frozenset(members)


def influence_cluster(streams: StreamFamily, v: Site, tau: float, template: NeighborhoodTemplate,
                      region: Iterable[Site]) -> InfluenceCluster:
    """Sites whose generation-0 point has a directed path to an arrival in ``N_v^+`` by ``tau``.

    ``region`` bounds the sites whose streams may be consulted; touching its
    edge raises :class:`ClusterEscape` so the caller can enlarge it.
    """
    region = frozenset(region)
    _, members = _reverse_reach(streams, two_neighborhood(v, template), tau, template, region)
    return InfluenceCluster(tuple(v), float(tau), members)


def cluster_contained(streams: StreamFamily, v: Site, tau: float, template: NeighborhoodTemplate,
                      A: Iterable[Site]) -> bool:
    """Whether ``C_{v,tau}`` is a subset of ``A`` (never raises on escape)."""
    res = _reverse_reach(streams, two_neighborhood(v, template), tau, template, None,
                         stop_outside=frozenset(A))
    return res is not None


def affecting_sites(streams: StreamFamily, v: Site, tau: float, template: NeighborhoodTemplate,
                    region: Iterable[Site]) -> frozenset:
    """Sites ``w`` that affect ``v`` before ``tau`` (paths ending at an arrival at ``v``)."""
    _, members = _reverse_reach(streams, [v], tau, template, frozenset(region))
    return members


# --------------------------------------------------------------------------
# coupling of nested windows


@dataclass(frozen=True)
class ProbeAgreement:
    site: Site
    hypothesis_met: bool
    agreement: bool


@dataclass
class CoupledRun:
    inner: Trajectory
    outer: Trajectory
    probes: list[ProbeAgreement]

    @property
    def violations(self) -> int:
        return sum(1 for p in self.probes if p.hypothesis_met and not p.agreement)


def coupled_windows(model: JumpModel, A: Iterable[Site], B: Iterable[Site], tau: float, seed: int,
                    init: InitialDistribution | None = None, probes: Sequence[Site] | None = None,
                    *, outer_seed: int | None = None) -> CoupledRun:
    """Simulate ``A ⊆ B`` with shared streams and initial draws and compare probes.

    ``outer_seed`` exists only for fault injection: giving the outer window a
    different stream seed breaks the coupling on purpose.
    """
    A, B = frozenset(A), frozenset(B)
    if not A <= B:
        raise ValueError("inner window must be a subset of the outer window")
    family = StreamFamily(seed, model.c_max)
    inner = simulate_window(model, A, tau, seed, init, streams=family)
    if outer_seed is None:
        outer = simulate_window(model, B, tau, seed, init, streams=family)
    else:
        outer = simulate_window(model, B, tau, outer_seed, init, init_seed=seed)
    if probes is None:
        probes = [(0,) * model.template.dim]
    rows = []
    for v in probes:
        v = tuple(v)
        hyp = cluster_contained(family, v, tau, model.template, A)
        nv = model.template.at(v)
        agree = all(inner.final[w] == outer.final[w] for w in nv)
        rows.append(ProbeAgreement(v, hyp, agree))
    return CoupledRun(inner, outer, rows)


# --------------------------------------------------------------------------
# exact generator on a window


@dataclass
class GeneratorMatrix:
    states: list[tuple]
    index: dict
    Q: np.ndarray
    sites: tuple[Site, ...]
    sink: int | None = None

    def distribution(self, t: float, start: int = 0) -> np.ndarray:
        from scipy.linalg import expm

        p0 = np.zeros(len(self.states))
        p0[start] = 1.0
        return p0 @ expm(self.Q * t)

    def expectation(self, f: Callable[[dict], float], t: float, start: int = 0) -> tuple[float, float]:
        """``(E f, truncated mass)`` at time ``t``; the sink state contributes 0 to ``E f``."""
        p = self.distribution(t, start)
        vals = np.array([0.0 if i == self.sink else f(dict(zip(self.sites, s)))
                         for i, s in enumerate(self.states)])
        lost = float(p[self.sink]) if self.sink is not None else 0.0
        return float(p @ vals), lost


TRUNCATED = ("<truncated>",)


def generator_matrix(model: JumpModel, window: Iterable[Site], initial: Configuration | None = None,
                     admissible: Callable[[Any], bool] | None = None,
                     max_states: int = 4096) -> GeneratorMatrix:
    """Rate matrix of the windowed chain on states reachable from ``initial``.

    States are tuples of local states over the window's neighbourhood in
    canonical site order. Jumps into states failing ``admissible`` (applied
    per local state) are redirected to one absorbing sink.
    """
    window = frozenset(window)
    lay = layout(window, model.template)
    if initial is None:
        initial = initial_configuration(model, window, 0)
    sites = tuple(sorted_sites(lay.region))
    pos = {s: i for i, s in enumerate(sites)}
    start = tuple(initial[s] for s in sites)
    patch_pos = [tuple(pos[w] for w in ps) for ps in lay.patch_sites]

    def ok(state):
        return admissible is None or all(admissible(x) for x in state)

    if not ok(start):
        raise TruncationBreach("initial state is not admissible")
    states = [start]
    index = {start: 0}
    rates: dict[tuple[int, int], float] = {}
    sink = None
    k = 0
    while k < len(states):
        x = states[k]
        if x is TRUNCATED:
            k += 1
            continue
        for pp in patch_pos:
            before = tuple(x[j] for j in pp)
            for after, r in model.transitions(before):
                if after == before or r == 0:
                    continue
                y = list(x)
                for j, s in zip(pp, after):
                    y[j] = s
                y = tuple(y)
                if not ok(y):
                    if sink is None:
                        sink = len(states)
                        states.append(TRUNCATED)
                        index[TRUNCATED] = sink
                    j = sink
                else:
                    j = index.get(y)
                    if j is None:
                        if len(states) >= max_states:
                            raise StateSpaceTooLarge(f"more than {max_states} reachable states")
                        j = len(states)
                        states.append(y)
                        index[y] = j
                rates[(k, j)] = rates.get((k, j), 0.0) + r
        k += 1
    n = len(states)
    Q = np.zeros((n, n))
    for (a, b), r in rates.items():
        Q[a, b] += r
    Q[np.diag_indices(n)] = -Q.sum(axis=1)
    return GeneratorMatrix(states, index, Q, sites, sink)

