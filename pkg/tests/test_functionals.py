import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipsim.engine import Configuration, UnmaterializedSite, simulate_window
from ipsim.functionals import (
    FUNCTIONALS,
    ConstantOne,
    LatticeMoment,
    Phi1,
    Phi2,
    Phi3,
    Phi4,
    Phi5,
    UnsupportedFunctional,
    build_functional,
    embedding_identity_check,
    eval_additive,
    eval_point_functional,
    is_exposed_1d,
    site_values,
)
from ipsim.lattice import NeighborhoodTemplate, box_window, interval_window
from ipsim.models import RSA, LatticeBD, MultilayerStick, unembed

ID1 = NeighborhoodTemplate.identity(1)


def pile(seed, n=10, tau=3.0, dim=1):
    tr = simulate_window(MultilayerStick(1.0, dim), box_window(n, dim), tau, seed)
    return unembed(tr.final)


class TestAdditive:
    def test_constant_one(self):
        A = box_window(7)
        conf = Configuration({}, default=0)
        assert eval_additive(ConstantOne(template=ID1), A, conf) == len(A)

    def test_zero_events(self):
        tr = simulate_window(LatticeBD(1.0), box_window(5), 0.0, 1)
        assert eval_additive(LatticeMoment(k=1, template=ID1), box_window(5), tr.final) == 0

    @given(st.integers(0, 10 ** 6), st.integers(1, 3))
    def test_additive_over_disjoint(self, seed, k):
        tr = simulate_window(LatticeBD(1.0), box_window(12), 2.0, seed)
        H = LatticeMoment(k=k, template=ID1)
        A, B = interval_window(-12, 0), interval_window(0, 13)
        assert eval_additive(H, A | B, tr.final) == eval_additive(H, A, tr.final) + eval_additive(H, B, tr.final)

    def test_site_values_sum(self):
        tr = simulate_window(LatticeBD(1.0), box_window(6), 2.0, 3)
        H = LatticeMoment(k=2, template=ID1)
        sites = sorted(box_window(6))
        assert site_values(H, sites, tr.final).sum() == eval_additive(H, sites, tr.final)

    def test_unmaterialised(self):
        conf = Configuration({(0,): ((),)})
        H = build_functional("phi2")
        with pytest.raises(UnmaterializedSite):
            eval_additive(H, [(0,)], conf)


class TestPointExamples:
    def test_phi1_counts(self):
        X = [((0.1,), None), ((0.5,), None), ((2.5,), None)]
        assert eval_point_functional(Phi1(), interval_window(0, 3), X) == 3

    def test_phi2_pair(self):
        X = [((0.2,), None), ((1.1,), None)]
        assert eval_point_functional(Phi2(R1=1.0), interval_window(0, 2), X) == 1.0

    def test_phi2_half_outside(self):
        X = [((0.2,), None), ((1.1,), None)]
        assert eval_point_functional(Phi2(R1=1.0), interval_window(0, 1), X) == 0.5

    def test_phi3_stack(self):
        X = [((0.3,), 0.5), ((0.3,), 1.5)]
        assert eval_point_functional(Phi3(R3=0.5), interval_window(0, 1), X) == 1

    def test_phi4_stack(self):
        X = [((0.3,), 0.5), ((0.3,), 1.5)]
        assert eval_point_functional(Phi4(), interval_window(0, 1), X) == 1.0

    def test_phi5_single(self):
        assert eval_point_functional(Phi5(), interval_window(-1, 2), [((0.4,), 0.5)]) == 0.5

    def test_phi5_stack_buries_bottom(self):
        X = [((0.3,), 0.5), ((0.3,), 1.5)]
        assert eval_point_functional(Phi5(), interval_window(-1, 2), X) == 1.5

    def test_phi5_side_neighbour_both_exposed(self):
        X = [((0.0,), 0.5), ((1.5,), 0.5)]
        assert eval_point_functional(Phi5(), interval_window(-2, 3), X) == 1.0

    def test_exposed_helper(self):
        assert is_exposed_1d(0.5, [])
        assert not is_exposed_1d(0.5, [((0.0,), 1.5)])
        # shoulder partly covered from both sides stays exposed in the middle
        h = 0.5 + math.sqrt(1 - 0.81)
        assert is_exposed_1d(0.5, [((-0.9,), h), ((0.9,), h)])

    def test_halo_required(self):
        with pytest.raises(UnmaterializedSite):
            eval_point_functional(Phi2(R1=1.0), [(0,)], [((0.5,), None)], materialized=[(0,)])
        assert eval_point_functional(Phi2(R1=1.0), [(0,)], [((0.5,), None)],
                                     materialized=[(-1,), (0,), (1,)]) == 0.0

    def test_phi5_needs_d1(self):
        with pytest.raises(UnsupportedFunctional):
            build_functional("phi5", dim=2)

    def test_height_marks_required(self):
        with pytest.raises(UnsupportedFunctional):
            eval_point_functional(Phi4(), [(0,)], [((0.5,), None)])


def brute_pairs(pts, R):
    return sum(1 for a, b in itertools.combinations(pts, 2) if math.dist(a, b) <= R)


@given(st.lists(st.tuples(st.floats(0, 5, exclude_max=True), st.floats(0, 5, exclude_max=True)),
                max_size=100), st.floats(1.0, 2.0))
def test_phi2_pair_count_oracle(raw, R):
    X = [(p, None) for p in raw]
    region = [(a, b) for a in range(5) for b in range(5)]
    assert eval_point_functional(Phi2(R1=R), region, X) == pytest.approx(brute_pairs(raw, R), abs=1e-9)


@given(st.integers(0, 10 ** 6), st.integers(-5, 5))
def test_translation_covariance(seed, shift):
    X = pile(seed, n=6)
    moved = [((p[0] + shift,), m) for p, m in X]
    A = interval_window(-3, 4)
    B = interval_window(-3 + shift, 4 + shift)
    for phi in (Phi1(), Phi2(R1=1.0), Phi3(R3=0.5), Phi4(), Phi5()):
        assert eval_point_functional(phi, B, moved) == pytest.approx(eval_point_functional(phi, A, X), abs=1e-9)


@given(st.integers(0, 10 ** 6))
def test_phi4_total_is_integer(seed):
    X = pile(seed, n=5)
    region = {cube for cube in box_window(8)}
    total = eval_point_functional(Phi4(), region, X)
    assert abs(total - round(total)) < 1e-9


@pytest.mark.parametrize("phi", [Phi1(), Phi2(R1=1.0), Phi2(R1=1.7), Phi3(R3=1.0), Phi4(), Phi5()],
                         ids=lambda p: p.name)
def test_embedding_identity_on_piles(phi):
    for seed in range(10):
        X = pile(seed, n=8)
        for A in (interval_window(-3, 4), interval_window(-8, 9), box_window(1)):
            r = embedding_identity_check(phi, A, X)
            assert r.ok, (seed, r)


def test_embedding_identity_on_rsa_and_2d():
    for seed in range(5):
        X = unembed(simulate_window(RSA(1.0), box_window(20), 5.0, seed).final)
        for phi in (Phi1(), Phi2(R1=1.5)):
            assert embedding_identity_check(phi, interval_window(-10, 10), X).ok
        Y = pile(seed, n=3, tau=2.0, dim=2)
        for phi in (Phi1(), Phi2(R1=1.0), Phi3(), Phi4()):
            assert embedding_identity_check(phi, box_window(2, 2), Y).ok


def test_embedding_identity_empty():
    r = embedding_identity_check(Phi2(), box_window(3), [])
    assert r.ok and r.point_value == r.lattice_value == 0


def test_registry():
    assert {"phi1", "phi2", "phi3", "phi4", "phi5", "moment"} <= set(FUNCTIONALS)
    with pytest.raises(ValueError, match="R1"):
        build_functional("phi2", R1=0.5)
    with pytest.raises(KeyError, match="available"):
        build_functional("phi9")
    H = build_functional("moment", k=2)
    conf = Configuration({(0,): 3})
    assert H.evaluate(conf.patch((0,), H.template)) == 9
    assert np.isfinite(eval_additive(build_functional("phi4"), box_window(2),
                                     Configuration({}, default=())))
