import math

import pytest

from ipsim.engine import TruncationBreach
from ipsim.functionals import build_functional
from ipsim.harness import (
    ExperimentPlan,
    cluster_tail_probe,
    coupling_check,
    covariance_decay,
    estimate_sigma,
    increment_moment_probe,
    oracle_compare,
    run_clt,
    run_lln,
    tail_time_scale,
    window_fields,
    window_radius,
)
from ipsim.lattice import box_window, interval_window
from ipsim.models import build_model


def plan(model, functional="moment", windows=(box_window(4),), times=(1.0,), replicates=200, seed=1, **kw):
    m = build_model(*model) if isinstance(model, tuple) else model
    H = build_functional(functional, 1) if isinstance(functional, str) else functional
    return ExperimentPlan(m, H, list(windows), times, replicates, seed, **kw)


def bd(**kw):
    return build_model("lattice_bd", **{"lambda": 1.0, **kw})


def test_window_radius():
    assert window_radius(box_window(5)) == 5
    assert window_radius(interval_window(0, 2)) == 2


def test_plan_validation():
    with pytest.raises(ValueError):
        plan(bd(), windows=())
    with pytest.raises(ValueError):
        plan(bd(), replicates=1)


class TestLLN:
    def test_constant_one(self):
        rep = run_lln(plan(bd(), "one", windows=(box_window(2), box_window(4)), replicates=20))
        assert rep.column("mean") == [1.0, 1.0]
        assert rep.column("std_err") == [0.0, 0.0]
        assert rep.checks["stabilized"]

    def test_stick_density_is_lambda_tau(self):
        m = build_model("multilayer_bd_stick", **{"lambda": 1.5})
        p = plan(m, build_functional("phi1"), windows=(box_window(20),), times=(2.0,), replicates=100)
        row = run_lln(p).rows[0]
        assert abs(row["mean"] - 3.0) < 3 * row["std_err"]

    def test_rsa_density_matches_parking_integral(self):
        # rho(2) from the parking integral, computed independently with scipy.integrate.quad
        rho2 = 0.5934596383796454
        m = build_model("rsa", **{"lambda": 1.0})
        p = plan(m, build_functional("phi1"), windows=(box_window(250),), times=(2.0,), replicates=60)
        row = run_lln(p).rows[0]
        assert abs(row["mean"] - rho2) < 3 * row["std_err"]

    def test_columns_and_rows(self):
        rep = run_lln(plan(bd(), windows=(box_window(2), box_window(3)), times=(0.5, 1.0), replicates=10))
        assert rep.columns == ("model", "functional", "window_radius", "window_size", "tau",
                               "replicates", "mean", "std_err")
        assert len(rep.rows) == 4
        assert rep.rows[0]["model"] == "lattice_bd" and rep.rows[0]["functional"] == "moment1"

    def test_worker_independent(self):
        p1 = plan(bd(), windows=(box_window(3),), replicates=30)
        p2 = plan(bd(), windows=(box_window(3),), replicates=30, workers=2)
        assert run_lln(p1).rows == run_lln(p2).rows


class TestCLT:
    def test_degenerate_variance_flagged(self):
        m = build_model("flip", up=0.0, down=1.0)
        rep = run_clt(plan(m, windows=(box_window(3),), replicates=50))
        assert any("degenerate" in w for w in rep.warnings)
        assert rep.rows[0]["cov_scaled"] == 0.0

    def test_single_site_poisson_variance(self):
        lam, tau = 1.0, 2.0
        p = plan(bd(), windows=([(0,)],), times=(tau,), replicates=4000)
        rep = run_clt(p)
        var, se = rep.rows[0]["cov_scaled"], rep.summary["std_err"][0]["std_err"]
        assert abs(var - lam * tau) < 3 * se

    def test_independent_sites_covariance(self):
        # N = {0}: sites are independent Poisson counters, Cov(S_s, S_t)/|A| = lambda * s
        m = bd(neighborhood="identity")
        rep = run_clt(plan(m, windows=(box_window(5), box_window(10)), times=(0.5, 1.0), replicates=3000))
        for row, extra in zip(rep.rows, rep.summary["std_err"]):
            assert abs(row["cov_scaled"] - min(row["s"], row["t"])) < 3 * extra["std_err"]
        assert rep.checks["variance_scaling"]
        assert set(rep.checks) == {"normal_shape", "variance_scaling"}


class TestSigma:
    def test_independent_sites_oracle(self):
        m = bd(neighborhood="identity")
        p = plan(m, windows=(box_window(30),), times=(0.5, 1.0), replicates=1500,
                 options={"sigma_runs": 40, "max_lag": 3})
        rep = estimate_sigma(p, 0.5, 1.0)
        row = rep.rows[0]
        assert abs(row["sigma_scaling"] - 0.5) < 3 * row["se_a"]
        assert abs(row["sigma_sum"] - 0.5) < 3 * row["se_b"]
        assert row["agree"]

    def test_variance_nonnegative(self):
        p = plan(bd(), windows=(box_window(30),), times=(1.0,), replicates=400,
                 options={"sigma_runs": 20, "max_lag": 4})
        rep = estimate_sigma(p, 1.0, 1.0)
        assert rep.checks["nonnegative"]

    def test_times_must_be_planned(self):
        with pytest.raises(ValueError):
            estimate_sigma(plan(bd()), 0.3, 1.0)


class TestDecay:
    def test_independent_sites(self):
        m = bd(neighborhood="identity")
        p = plan(m, windows=(box_window(60),), times=(1.0,), replicates=60)
        rep = covariance_decay(p, 1.0, 1.0, distances=[0, 1, 2, 3])
        rows = rep.rows
        assert abs(rows[0]["abs_cov"] - 1.0) < 3 * rows[0]["std_err"]
        for r in rows[1:]:
            assert r["abs_cov"] < 3 * r["std_err"]
        assert rep.summary["significant_range"] == [0]

    def test_zero_lag_is_variance(self):
        p = plan(bd(), windows=(box_window(40),), times=(1.0,), replicates=30)
        rep = covariance_decay(p, 1.0, 1.0, distances=[0, 1])
        f = window_fields(p, p.windows[-1], 30)[:, 0]
        core = f[:, 2:-2]  # margin plus largest lag
        mu = core.mean()
        per_run = ((core - mu) ** 2).mean(axis=1)
        assert rep.rows[0]["abs_cov"] == pytest.approx(per_run.mean(), rel=1e-12)


class TestCluster:
    def test_recipe(self):
        theta, delta = tail_time_scale(bd())
        D = 2
        assert theta > 1.0 * (4 * D * D - 1)
        assert math.exp(theta * delta) < 2
        assert 1.0 / (1.0 + theta) < 1 / (4 * D * D)

    def test_no_arrivals_no_paths(self):
        rep = cluster_tail_probe(bd(), delta=1e-9, n_values=(1, 2), replicates=200)
        assert rep.column("empirical_p") == [0.0, 0.0]

    def test_small_run_bound(self):
        rep = cluster_tail_probe(bd(), n_values=(1, 2), replicates=500, seed=3)
        assert rep.checks["bound_holds"]
        assert rep.columns == ("n", "time", "empirical_p", "bound", "replicates")


class TestCoupling:
    def test_equal_windows(self):
        rep = coupling_check(bd(), box_window(5), box_window(5), 1.0, replicates=30)
        row = rep.rows[0]
        assert row["agreement"] == row["hypothesis_met"]
        assert rep.checks["no_violations"]

    def test_nested(self):
        rep = coupling_check(bd(), box_window(8), box_window(16), 1.0, probes=[(0,), (5,)], replicates=60)
        assert rep.summary["violations"] == 0
        assert rep.summary["escaped"] > 0 and rep.summary["hypothesis_met"] > 0

    def test_fault_detected(self):
        rep = coupling_check(bd(), box_window(10), box_window(20), 1.0, replicates=40, fault=True)
        assert not rep.checks["no_violations"]


class TestOracle:
    def test_tau_zero(self):
        rep = oracle_compare(build_model("flip"), [(0,)], 0.0, build_functional("moment"), replicates=20)
        row = rep.rows[0]
        assert row["simulated"] == row["exact"] == 0.0 and row["z"] == 0.0

    def test_flip(self):
        rep = oracle_compare(build_model("flip"), [(0,)], 0.5, build_functional("moment"), replicates=20_000)
        row = rep.rows[0]
        assert row["exact"] == pytest.approx((1 - math.exp(-1)) / 2, abs=1e-12)
        assert rep.checks["within_3se"]

    def test_two_site_bd(self):
        rep = oracle_compare(bd(), interval_window(0, 2), 0.1, build_functional("moment"),
                             replicates=20_000, cap=5)
        assert rep.checks["within_3se"]
        assert rep.summary["truncated_mass"] < 1e-6

    def test_breach(self):
        with pytest.raises(TruncationBreach):
            oracle_compare(bd(), interval_window(0, 2), 3.0, build_functional("moment"), replicates=50, cap=2)


class TestIncrements:
    def test_poisson_fourth_moment(self):
        lam = 1.0
        m = bd(neighborhood="identity")
        A = box_window(10)
        p = plan(m, windows=(A,), times=(1.0, 1.25, 1.5, 2.0, 3.0), replicates=4000)
        rep = increment_moment_probe(p)
        assert rep.rows[0]["fourth_moment"] == 0.0 and rep.checks["zero_gap_zero"]
        for row in rep.rows[1:]:
            g = row["gap"]
            exact = 3 * lam ** 2 * g ** 2 + lam * g / len(A)
            assert abs(row["fourth_moment"] - exact) < 3 * row["std_err"]
        assert rep.summary["fitted_exponent"] >= 1.0
