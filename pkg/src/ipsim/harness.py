"""Monte Carlo experiment drivers.

Every driver is a pure function of its plan and seed: replicate ``r`` of
window ``n`` always uses the seed ``derive_seed(seed, salt, n, r)``, tasks are
mapped in index order and reduced with numpy's pairwise sums, so reports do
not depend on the number of workers.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .engine import (
    ClusterEscape,
    InitialDistribution,
    JumpModel,
    TruncationBreach,
    affecting_sites,
    coupled_windows,
    generator_matrix,
    initial_configuration,
    simulate_window,
)
from .functionals import LocalFunctional, eval_additive, site_values
from .lattice import NeighborhoodTemplate, Site, box_window, graph_distance, sorted_sites
from .streams import REPLICATE, StreamFamily, derive_seed

# seed salts per experiment family
_SUMS = REPLICATE
_FIELDS = 0x5EED_0010
_CLUSTER = 0x5EED_0011
_COUPLE = 0x5EED_0012
_ORACLE = 0x5EED_0013


@dataclass
class ExperimentPlan:
    """What to simulate and how often.

    ``times`` are the observation times; the horizon is their maximum.
    ``options`` holds per-experiment knobs (see each driver).
    """

    model: JumpModel
    functional: LocalFunctional
    windows: list
    times: tuple
    replicates: int
    seed: int
    init: InitialDistribution | None = None
    model_name: str = ""
    functional_name: str = ""
    radii: tuple | None = None
    workers: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.windows:
            raise ValueError("plan needs at least one window")
        self.windows = [frozenset(w) for w in self.windows]
        self.times = tuple(sorted(set(float(t) for t in self.times)))
        if not self.times or self.times[0] < 0:
            raise ValueError("observation times must be non-negative and non-empty")
        if self.replicates < 2:
            raise ValueError("need at least 2 replicates for standard errors")
        if not self.model_name:
            self.model_name = self.model.name
        if not self.functional_name:
            self.functional_name = self.functional.name
        if self.radii is None:
            self.radii = tuple(window_radius(w) for w in self.windows)

    @property
    def tau(self) -> float:
        return self.times[-1]


@dataclass
class ExperimentReport:
    """Tabular result of one experiment plus named pass/fail checks."""

    kind: str
    columns: tuple
    rows: list
    checks: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def column(self, name) -> list:
        return [r[name] for r in self.rows]


def window_radius(w: Iterable[Site]):
    """Sup-norm radius if ``w`` is a centred box, else its size."""
    w = frozenset(w)
    r = max(max(abs(c) for c in v) for v in w)
    d = len(next(iter(w)))
    return r if len(w) == (2 * r + 1) ** d and w == box_window(r, d) else len(w)


# --------------------------------------------------------------------------
# worker pool


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def pool_map(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """``[fn(t) for t in tasks]``, possibly across processes, always in task order."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))


# --------------------------------------------------------------------------
# replicate tasks (top level so they pickle)


def _sum_task(args) -> np.ndarray:
    model, H, window, times, init, seed = args
    tr = simulate_window(model, window, times[-1], seed, init, snapshots=times)
    return np.array([eval_additive(H, window, tr.state_at(t)) for t in times])


def _field_task(args) -> np.ndarray:
    model, H, window, times, init, seed = args
    sites = sorted_sites(window)
    tr = simulate_window(model, window, times[-1], seed, init, snapshots=times)
    return np.stack([site_values(H, sites, tr.state_at(t)) for t in times])


def window_sums(plan: ExperimentPlan, index: int) -> np.ndarray:
    """``(replicates, len(times))`` array of ``S_H^A`` for window ``index``."""
    A = plan.windows[index]
    tasks = [(plan.model, plan.functional, A, plan.times, plan.init, derive_seed(plan.seed, _SUMS, index, r))
             for r in range(plan.replicates)]
    return np.array(pool_map(_sum_task, tasks, plan.workers)).reshape(plan.replicates, len(plan.times))


def grid_shape(window: Iterable[Site]) -> tuple:
    """Shape of ``window`` as a full rectangular grid, raising if it is not one."""
    sites = np.array(sorted_sites(window))
    lo, hi = sites.min(axis=0), sites.max(axis=0)
    shape = tuple(int(x) for x in hi - lo + 1)
    if int(np.prod(shape)) != len(sites):
        raise ValueError("field statistics need a rectangular window")
    return shape


def window_fields(plan: ExperimentPlan, window, runs: int, salt: int = _FIELDS) -> np.ndarray:
    """``(runs, len(times), *grid)`` array of the site field ``H(L_v xi_t)``."""
    shape = grid_shape(window)
    tasks = [(plan.model, plan.functional, window, plan.times, plan.init, derive_seed(plan.seed, salt, r))
             for r in range(runs)]
    out = np.array(pool_map(_field_task, tasks, plan.workers))
    return out.reshape((runs, len(plan.times)) + shape)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


def _cov_se(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Sample covariance and its standard error from the centred products."""
    p = (x - x.mean()) * (y - y.mean())
    n = len(x)
    return float(p.sum() / (n - 1)), float(np.std(p, ddof=1) / math.sqrt(n))


# --------------------------------------------------------------------------
# LLN


LLN_COLUMNS = ("model", "functional", "window_radius", "window_size", "tau", "replicates", "mean", "std_err")


def run_lln(plan: ExperimentPlan) -> ExperimentReport:
    """Mean of ``|A_n|^{-1} S_H^{A_n}`` per window and observation time."""
    rows = []
    final = []
    for n, A in enumerate(plan.windows):
        sums = window_sums(plan, n) / len(A)
        for k, t in enumerate(plan.times):
            m, se = _mean_se(sums[:, k])
            rows.append(dict(model=plan.model_name, functional=plan.functional_name,
                             window_radius=plan.radii[n], window_size=len(A), tau=t,
                             replicates=plan.replicates, mean=m, std_err=se))
        final.append(_mean_se(sums[:, -1]))
    report = ExperimentReport("lln", LLN_COLUMNS, rows, metadata=_meta(plan))
    if len(final) >= 2:
        (m1, s1), (m2, s2) = final[-2], final[-1]
        gap, band = abs(m2 - m1), 3.0 * math.hypot(s1, s2)
        report.summary.update(last_gap=gap, last_band=band)
        report.checks["stabilized"] = gap <= band or gap == 0.0
        if not report.checks["stabilized"]:
            report.warnings.append(f"means not stabilized: |m_N - m_N-1| = {gap:.4g} > 3 SE = {band:.4g}")
    return report


def _meta(plan: ExperimentPlan) -> dict:
    return dict(seed=plan.seed, replicates=plan.replicates, model=plan.model_name,
                functional=plan.functional_name, times=list(plan.times),
                window_sizes=[len(w) for w in plan.windows])


# --------------------------------------------------------------------------
# CLT


CLT_COLUMNS = ("window_size", "s", "t", "cov_scaled", "skew", "ex_kurtosis", "gof_stat", "replicates")


def _shape_stats(x: np.ndarray) -> tuple[float, float, float]:
    """Skewness, excess kurtosis (bias-corrected) and the KS distance to the fitted normal."""
    if np.std(x) == 0.0:
        return math.nan, math.nan, math.nan
    skew = float(stats.skew(x, bias=False))
    kurt = float(stats.kurtosis(x, fisher=True, bias=False))
    z = (x - x.mean()) / x.std(ddof=1)
    gof = float(stats.kstest(z, "norm").statistic)
    return skew, kurt, gof


def run_clt(plan: ExperimentPlan) -> ExperimentReport:
    """Scaled covariances ``|A_n|^{-1} Cov(S_s, S_t)`` and normality statistics.

    Shape statistics in each row describe the marginal at the later time ``t``.
    """
    R = plan.replicates
    rows, extra = [], []
    report = ExperimentReport("clt", CLT_COLUMNS, rows, metadata=_meta(plan))
    pairs = [(i, j) for i in range(len(plan.times)) for j in range(i, len(plan.times))]
    per_window = []
    for n, A in enumerate(plan.windows):
        sums = window_sums(plan, n)
        shape = [_shape_stats(sums[:, j]) for j in range(len(plan.times))]
        var_final = None
        for i, j in pairs:
            c, se = _cov_se(sums[:, i], sums[:, j])
            c, se = c / len(A), se / len(A)
            sk, ku, gof = shape[j]
            rows.append(dict(window_size=len(A), s=plan.times[i], t=plan.times[j], cov_scaled=c,
                             skew=sk, ex_kurtosis=ku, gof_stat=gof, replicates=R))
            extra.append(dict(window_size=len(A), s=plan.times[i], t=plan.times[j], std_err=se))
            if i == j and (abs(c) <= 3 * se or (c == 0.0 and se == 0.0)):
                report.warnings.append(
                    f"degenerate variance at window {len(A)}, t={plan.times[j]}: {c:.4g} (SE {se:.2g})")
            if i == j == len(plan.times) - 1:
                var_final = (c, se)
        per_window.append(var_final)
    report.summary["std_err"] = extra
    sk, ku, gof = _shape_stats(sums[:, -1])
    band_s, band_k = 3 * math.sqrt(6.0 / R), 3 * math.sqrt(24.0 / R)
    report.summary.update(skew=sk, ex_kurtosis=ku, gof_stat=gof, skew_band=band_s, kurtosis_band=band_k)
    report.checks["normal_shape"] = bool(abs(sk) <= band_s and abs(ku) <= band_k)
    if len(per_window) >= 2:
        (v1, s1), (v2, s2) = per_window[-2], per_window[-1]
        tol = max(0.05 * max(abs(v1), abs(v2)), 3.0 * math.hypot(s1, s2))
        report.summary.update(variance_gap=abs(v2 - v1), variance_tolerance=tol)
        report.checks["variance_scaling"] = abs(v2 - v1) <= tol
    return report


# --------------------------------------------------------------------------
# spatial covariances of the site field


def _shift_cov(Fs: np.ndarray, Ft: np.ndarray, mus: float, mut: float, z: tuple, margin: int) -> np.ndarray:
    """Per-run mean over interior ``v`` of ``(Y_s(v) - mu_s)(Y_t(v + z) - mu_t)``.

    ``Fs``, ``Ft`` have shape ``(runs, *grid)``; interior sites keep
    ``margin`` cells from every face.
    """
    sl_v, sl_w = [slice(None)], [slice(None)]
    for k, zk in enumerate(z):
        L = Fs.shape[k + 1]
        sl_v.append(slice(margin, L - margin))
        sl_w.append(slice(margin + zk, L - margin + zk))
    a = Fs[tuple(sl_v)] - mus
    b = Ft[tuple(sl_w)] - mut
    axes = tuple(range(1, Fs.ndim))
    return np.mean(a * b, axis=axes)


def _sup(z):
    return max((abs(c) for c in z), default=0)


@dataclass(frozen=True)
class FieldCovariance:
    """Per-run spatial covariance estimates ``c_r(z)`` for ``|z|_inf <= max_lag``."""

    lags: tuple
    per_run: np.ndarray  # (runs, len(lags))

    def mean(self) -> np.ndarray:
        return self.per_run.mean(axis=0)

    def se(self) -> np.ndarray:
        return self.per_run.std(axis=0, ddof=1) / math.sqrt(self.per_run.shape[0])

    def shell_runs(self, k: int) -> np.ndarray:
        idx = [i for i, z in enumerate(self.lags) if _sup(z) == k]
        return self.per_run[:, idx].sum(axis=1)


def field_covariance(fields: np.ndarray, i: int, j: int, max_lag: int, margin: int,
                     lags: Sequence[tuple] | None = None) -> FieldCovariance:
    """Covariances between the field at times ``i`` and ``j`` over interior sites.

    The mean is pooled over interior sites and runs.
    """
    d = fields.ndim - 2
    if lags is None:
        lags = list(itertools.product(range(-max_lag, max_lag + 1), repeat=d))
    lags = [tuple(z) for z in lags]
    need = margin + max(_sup(z) for z in lags)
    if any(2 * need >= L for L in fields.shape[2:]):
        raise ValueError(f"window too small for lag {max_lag} plus margin {margin}")
    Fs, Ft = fields[:, i], fields[:, j]
    core = (slice(None),) + tuple(slice(need, L - need) for L in Fs.shape[1:])
    mus, mut = float(Fs[core].mean()), float(Ft[core].mean())
    per = np.stack([_shift_cov(Fs, Ft, mus, mut, z, need) for z in lags], axis=1)
    return FieldCovariance(tuple(lags), per)


def _significant_prefix(mean: np.ndarray, se: np.ndarray) -> int:
    """Number of leading entries with ``|mean| > 3 SE``."""
    k = 0
    while k < len(mean) and abs(mean[k]) > 3.0 * se[k]:
        k += 1
    return k


SIGMA_COLUMNS = ("s", "t", "sigma_scaling", "sigma_sum", "se_a", "se_b", "agree")


def estimate_sigma(plan: ExperimentPlan, s: float, t: float) -> ExperimentReport:
    """Two estimates of the limiting covariance ``sigma(s, t)``.

    Method A scales the replicate covariance of ``S_s, S_t`` on the largest
    window. Method B sums the spatial covariances of the site field over
    ``|z|_inf <= r`` from independent runs on one large window, using only
    interior sites. ``r`` is the extent of the significant part of the
    covariance shells (plus one shell), and the interior margin equals the
    same dependence range.

    Options: ``sigma_runs`` (default 40), ``sigma_window`` (default the
    largest window), ``max_lag`` (default 12).
    """
    opts = plan.options
    if s not in plan.times or t not in plan.times:
        raise ValueError("s and t must be observation times of the plan")
    i, j = plan.times.index(s), plan.times.index(t)
    if i > j:
        i, j = j, i
    n = len(plan.windows) - 1
    A = plan.windows[n]
    sums = window_sums(plan, n)
    a, se_a = _cov_se(sums[:, i], sums[:, j])
    a, se_a = a / len(A), se_a / len(A)

    W = frozenset(opts.get("sigma_window", A))
    runs = int(opts.get("sigma_runs", 40))
    max_lag = int(opts.get("max_lag", 12))
    fields = window_fields(plan, W, runs)
    # first pass: how far do the covariance shells stay significant?
    probe = field_covariance(fields, i, j, max_lag, margin=max_lag)
    shells = np.stack([probe.shell_runs(k) for k in range(max_lag + 1)], axis=1)
    sh_mean = shells.mean(axis=0)
    sh_se = shells.std(axis=0, ddof=1) / math.sqrt(runs)
    sig = _significant_prefix(sh_mean, sh_se)
    r = min(max_lag, sig)
    margin = max(r, 1)
    cov = field_covariance(fields, i, j, r, margin=margin)
    per_run = np.stack([cov.shell_runs(k) for k in range(r + 1)], axis=1)
    b_runs = per_run.sum(axis=1)
    b, se_b = _mean_se(b_runs)
    agree = abs(a - b) <= 3.0 * math.hypot(se_a, se_b)
    report = ExperimentReport("sigma", SIGMA_COLUMNS, [dict(s=plan.times[i], t=plan.times[j], sigma_scaling=a,
                                                            sigma_sum=b, se_a=se_a, se_b=se_b, agree=agree)],
                              metadata=_meta(plan))
    last = float(per_run[:, r].mean())
    report.summary.update(truncation_radius=r, interior_margin=margin, runs=runs,
                          shell_means=[float(x) for x in per_run.mean(axis=0)])
    if b != 0 and abs(last) > 0.01 * abs(b):
        report.warnings.append(f"truncation: last shell r={r} carries {abs(last / b):.1%} of the sum")
    if sig > max_lag:
        report.warnings.append(f"covariance still significant at max_lag={max_lag}")
    report.checks["methods_agree"] = bool(agree)
    if i == j:
        report.checks["nonnegative"] = bool(a >= -3 * se_a and b >= -3 * se_b)
    return report


DECAY_COLUMNS = ("distance", "abs_cov", "std_err", "envelope")


def covariance_decay(plan: ExperimentPlan, s: float, t: float,
                     distances: Sequence[int] | None = None) -> ExperimentReport:
    """``|Cov(Y_{0,s}, Y_{z,t})|`` along the first axis with an exponential envelope.

    Runs ``plan.replicates`` independent copies on the largest window. The
    fit ``log|C| = a - b|z|`` uses the significant prefix (``|C| > 3 SE``);
    the envelope is ``K exp(-|z|/K)`` with ``K = max(1/b, e^a, |C(0)|)``,
    which lies on or above the fitted line everywhere.
    """
    i, j = plan.times.index(s), plan.times.index(t)
    if distances is None:
        distances = list(range(0, 9))
    distances = sorted(int(r) for r in distances)
    A = plan.windows[-1]
    d = len(next(iter(A)))
    fields = window_fields(plan, A, plan.replicates)
    lags = [(r,) + (0,) * (d - 1) for r in distances]
    cov = field_covariance(fields, i, j, max(distances), margin=max(distances), lags=lags)
    mean, se = np.abs(cov.mean()), cov.se()
    k = _significant_prefix(mean, se)
    report = ExperimentReport("decay", DECAY_COLUMNS, [], metadata=_meta(plan))
    K = math.nan
    rate = math.nan
    if k >= 2:
        x = np.array(distances[:k], dtype=float)
        slope, icpt = np.polyfit(x, np.log(mean[:k]), 1)
        rate = -slope
        if rate > 0:
            # the bound also covers v = w, so the amplitude must reach the measured variance
            zero = float(mean[0]) if distances[0] == 0 else 0.0
            K = max(1.0 / rate, math.exp(icpt), zero)
        report.summary.update(fit_intercept=float(icpt), fit_rate=float(rate))
    else:
        report.warnings.append("fewer than two significant distances; no envelope fit")
    for r, m, e in zip(distances, mean, se):
        env = K * math.exp(-r / K) if K == K else math.nan
        report.rows.append(dict(distance=r, abs_cov=float(m), std_err=float(e), envelope=env))
    if k < len(distances):
        report.warnings.append(f"noise floor reached at distance {distances[k]}")
    sigm = mean[:k]
    report.summary.update(K=K, significant_range=distances[:k])
    report.checks["positive_rate"] = bool(rate > 0)
    report.checks["decreasing"] = bool(k >= 2 and np.all(np.diff(sigm) < 0))
    report.checks["below_envelope"] = bool(
        K == K and all(m <= K * math.exp(-r / K) for r, m in zip(distances[:k], sigm)))
    return report


# --------------------------------------------------------------------------
# cluster tails


def tail_time_scale(model: JumpModel) -> tuple[float, float]:
    """``(theta, delta)`` with ``c/(c+theta) < 1/(4 D^2)`` and ``e^{theta delta} < 2``."""
    D = max(1, model.template.degree)
    theta = 4.0 * D * D * model.c_max
    return theta, 0.99 * math.log(2.0) / theta


CLUSTER_COLUMNS = ("n", "time", "empirical_p", "bound", "replicates")


@lru_cache(maxsize=4096)
def _distance(w: Site, template: NeighborhoodTemplate) -> int:
    return graph_distance((0,) * template.dim, w, template)


def _far_affects(streams: StreamFamily, v: Site, t: float, template: NeighborhoodTemplate, n: int) -> bool:
    reach = 2 * template.radius * (2 * n + 4)
    while True:
        region = frozenset(tuple(a + b for a, b in zip(v, o))
                           for o in itertools.product(range(-reach, reach + 1), repeat=template.dim))
        try:
            members = affecting_sites(streams, v, t, template, region)
            break
        except ClusterEscape:
            reach *= 2
    return any(_distance(tuple(a - b for a, b in zip(w, v)), template) >= 2 * n for w in members)


def _cluster_task(args) -> list:
    model, v, delta, n_values, seed = args
    streams = StreamFamily(seed, model.c_max)
    return [_far_affects(streams, v, delta * n, model.template, n) for n in n_values]


def cluster_tail_probe(model: JumpModel, delta: float | None = None, n_values: Sequence[int] = (1, 2, 3),
                       replicates: int = 10_000, seed: int = 0, workers: int = 1,
                       v: Site | None = None) -> ExperimentReport:
    """Empirical ``P[some w at graph distance >= 2n affects v by delta n]`` against ``2^-n``."""
    theta, recipe = tail_time_scale(model)
    delta = recipe if delta is None else float(delta)
    v = (0,) * model.template.dim if v is None else tuple(v)
    tasks = [(model, v, delta, tuple(n_values), derive_seed(seed, _CLUSTER, r)) for r in range(replicates)]
    hits = np.array(pool_map(_cluster_task, tasks, workers), dtype=bool).reshape(replicates, len(n_values))
    rows, ok = [], True
    probs = []
    for k, n in enumerate(n_values):
        p = float(hits[:, k].mean())
        se = math.sqrt(p * (1 - p) / replicates)
        bound = 2.0 ** -n
        ok &= p <= bound + 3 * se
        probs.append(p)
        rows.append(dict(n=n, time=delta * n, empirical_p=p, bound=bound, replicates=replicates))
    report = ExperimentReport("cluster", CLUSTER_COLUMNS, rows,
                              metadata=dict(seed=seed, replicates=replicates, model=model.name))
    report.summary.update(theta=theta, delta=delta, degree=model.template.degree)
    report.checks["bound_holds"] = bool(ok)
    logs = [math.log(p) if p > 0 else -math.inf for p in probs]
    report.checks["log_decreasing"] = all(b <= a for a, b in zip(logs, logs[1:]))
    return report


# --------------------------------------------------------------------------
# coupling


COUPLE_COLUMNS = ("probe_site", "hypothesis_met", "agreement")


def _couple_task(args):
    model, A, B, tau, init, probes, seed, fault = args
    outer = derive_seed(seed, 1) if fault else None
    run = coupled_windows(model, A, B, tau, seed, init, probes, outer_seed=outer)
    return [(p.hypothesis_met, p.agreement) for p in run.probes]


def coupling_check(model: JumpModel, A, B, tau: float, probes: Sequence[Site] | None = None,
                   replicates: int = 200, seed: int = 0, init: InitialDistribution | None = None,
                   workers: int = 1, fault: bool = False) -> ExperimentReport:
    """Count probes whose cluster fits in ``A`` and, among those, exact agreements.

    Rows aggregate over replicates: ``hypothesis_met`` counts replicates with
    ``C_{v,tau}`` inside ``A`` and ``agreement`` counts those where the two
    windows agree on ``N_v``. ``fault`` decouples the outer window's streams.
    """
    A, B = frozenset(A), frozenset(B)
    probes = [(0,) * model.template.dim] if probes is None else [tuple(p) for p in probes]
    tasks = [(model, A, B, tau, init, probes, derive_seed(seed, _COUPLE, r), fault) for r in range(replicates)]
    res = pool_map(_couple_task, tasks, workers)
    rows = []
    total_hyp = total_viol = 0
    for k, p in enumerate(probes):
        hyp = sum(1 for r in res if r[k][0])
        agree = sum(1 for r in res if r[k][0] and r[k][1])
        total_hyp += hyp
        total_viol += hyp - agree
        rows.append(dict(probe_site=" ".join(map(str, p)), hypothesis_met=hyp, agreement=agree))
    escaped = replicates * len(probes) - total_hyp
    report = ExperimentReport("couple", COUPLE_COLUMNS, rows,
                              metadata=dict(seed=seed, replicates=replicates, model=model.name, tau=tau))
    report.summary.update(hypothesis_met=total_hyp, violations=total_viol, escaped=escaped)
    report.checks["no_violations"] = total_viol == 0
    return report


# --------------------------------------------------------------------------
# generator oracle


ORACLE_COLUMNS = ("functional", "tau", "simulated", "exact", "z")


def _oracle_task(args):
    model, A, tau, H, probe, init, cap, seed = args
    breach = []

    def watch(t, v, before, after, states):
        if cap is not None and any(x > cap for x in after):
            breach.append((t, v))

    tr = simulate_window(model, A, tau, seed, init, on_event=watch)
    if breach:
        raise TruncationBreach(f"state above cap {cap} at time {breach[0][0]:.4g}, site {breach[0][1]}")
    return H.evaluate(tr.final.patch(probe, H.template))


def oracle_compare(model: JumpModel, A, tau: float, H: LocalFunctional, replicates: int = 10_000,
                   seed: int = 0, cap: int | None = None, probe: Site | None = None,
                   init: InitialDistribution | None = None, workers: int = 1,
                   max_states: int = 4096) -> ExperimentReport:
    """Simulated ``E H(xi_tau at probe)`` against the matrix-exponential value.

    ``cap`` truncates the state space (states above it go to a sink); a
    simulated path exceeding it raises :class:`TruncationBreach`.
    """
    A = frozenset(A)
    probe = (0,) * model.template.dim if probe is None else tuple(probe)
    initial = initial_configuration(model, A, seed, init)
    if init is not None and not init.deterministic:
        raise ValueError("the generator oracle needs a deterministic initial state")
    admissible = (lambda x: x <= cap) if cap is not None else None
    G = generator_matrix(model, A, initial, admissible, max_states=max_states)

    def f(states: dict) -> float:
        return H.evaluate(tuple(states[w] for w in H.template.at(probe)))

    exact, lost = G.expectation(f, tau)
    tasks = [(model, A, tau, H, probe, init, cap, derive_seed(seed, _ORACLE, r)) for r in range(replicates)]
    vals = np.array(pool_map(_oracle_task, tasks, workers), dtype=float)
    sim, se = _mean_se(vals)
    if se > 0:
        z = (sim - exact) / se
    else:
        z = 0.0 if abs(sim - exact) <= 1e-12 * max(1.0, abs(exact)) else math.inf
    report = ExperimentReport("oracle", ORACLE_COLUMNS,
                              [dict(functional=H.name, tau=tau, simulated=sim, exact=exact, z=z)],
                              metadata=dict(seed=seed, replicates=replicates, model=model.name))
    report.summary.update(states=len(G.states), truncated_mass=lost, std_err=se)
    report.checks["within_3se"] = bool(abs(z) <= 3.0)
    return report


# --------------------------------------------------------------------------
# increments


INCREMENT_COLUMNS = ("s", "t", "gap", "fourth_moment", "std_err", "replicates")


def increment_moment_probe(plan: ExperimentPlan) -> ExperimentReport:
    """``E[(zeta_t - zeta_s)^4]`` for ``zeta_t = |A|^{-1/2}(S_t - E S_t)`` on the largest window.

    ``s`` is the first observation time; every later time gives one gap.
    The fitted exponent is the slope of ``log m4`` against ``log gap``.
    """
    n = len(plan.windows) - 1
    A = plan.windows[n]
    sums = window_sums(plan, n)
    s = plan.times[0]
    rows, gaps, m4s = [], [], []
    for k, t in enumerate(plan.times):
        inc = sums[:, k] - sums[:, 0]
        inc = (inc - inc.mean()) / math.sqrt(len(A))
        q = inc ** 4
        m4, se = _mean_se(q)
        rows.append(dict(s=s, t=t, gap=t - s, fourth_moment=m4, std_err=se, replicates=plan.replicates))
        if t > s and m4 > 0:
            gaps.append(t - s)
            m4s.append(m4)
    report = ExperimentReport("increments", INCREMENT_COLUMNS, rows, metadata=_meta(plan))
    if len(gaps) >= 2:
        slope, _ = np.polyfit(np.log(gaps), np.log(m4s), 1)
        report.summary["fitted_exponent"] = float(slope)
    else:
        report.summary["fitted_exponent"] = math.nan
    report.checks["zero_gap_zero"] = rows[0]["fourth_moment"] == 0.0
    return report


EXPERIMENTS = ("lln", "clt", "sigma", "decay", "cluster", "couple", "oracle", "increments")
