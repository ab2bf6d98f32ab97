import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipsim.lattice import (
    NeighborhoodTemplate,
    box_window,
    check_window_sequence,
    exterior_boundary,
    graph_distance,
    interior,
    interval_window,
    neighborhood,
    two_neighborhood,
)

N1 = NeighborhoodTemplate.box(1)
N2 = NeighborhoodTemplate.box(2)
ID1 = NeighborhoodTemplate.identity(1)


def ints(*xs):
    return {(x,) for x in xs}


def square(lo, hi):
    return set(itertools.product(range(lo, hi + 1), repeat=2))


def brute_neighborhood(A, N):
    return {tuple(a + o for a, o in zip(v, off)) for v in A for off in N.offsets}


class TestTemplate:
    def test_rejects_missing_origin(self):
        with pytest.raises(ValueError):
            NeighborhoodTemplate(((1,), (-1,)))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            NeighborhoodTemplate(((0,), (1,)))

    def test_rejects_mixed_dimension(self):
        with pytest.raises(ValueError):
            NeighborhoodTemplate(((0,), (0, 0)))

    def test_degree_and_radius(self):
        assert N1.degree == 2
        assert N2.degree == 8
        assert NeighborhoodTemplate.cross(2).degree == 4
        assert NeighborhoodTemplate.box(3, 2).radius == 2

    def test_at_is_template_order(self):
        assert N1.at((5,)) == [(4,), (5,), (6,)]


class TestNeighborhood:
    def test_interval(self):
        assert neighborhood(ints(*range(10)), N1) == ints(*range(-1, 11))

    def test_identity(self):
        assert neighborhood(ints(0), ID1) == ints(0)

    def test_square(self):
        assert neighborhood(square(-1, 1), N2) == square(-2, 2)


class TestExteriorBoundary:
    def test_interval(self):
        assert exterior_boundary(ints(*range(10)), N1) == ints(-1, 10)

    def test_single_site(self):
        assert exterior_boundary(ints(0), N1) == ints(-1, 1)

    def test_square_ring(self):
        ring = exterior_boundary(square(-1, 1), N2)
        assert len(ring) == 16
        assert ring == square(-2, 2) - square(-1, 1)


class TestInterior:
    def test_interval(self):
        assert interior(ints(*range(10)), N1) == ints(*range(1, 9))

    def test_single_site_empty(self):
        assert interior(ints(0), N1) == set()

    def test_square(self):
        assert interior(square(-2, 2), N2) == square(-1, 1)


class TestTwoNeighborhood:
    def test_line(self):
        assert two_neighborhood((0,), N1) == ints(-2, -1, 0, 1, 2)

    def test_identity(self):
        assert two_neighborhood((0,), ID1) == ints(0)

    def test_square(self):
        assert two_neighborhood((0, 0), N2) == square(-2, 2)


def test_interval_window_bounds():
    assert interval_window(0, 2) == ints(0, 1)


def test_graph_distance():
    assert graph_distance((0,), (5,), N1) == 5
    assert graph_distance((0, 0), (3, 2), N2) == 3
    assert graph_distance((0, 0), (3, 2), NeighborhoodTemplate.cross(2)) == 5


class TestWindowSequence:
    def test_boxes(self):
        rep = check_window_sequence([box_window(n) for n in (2, 4, 8)], N1)
        assert rep.ok and rep.ratio_decreasing
        assert [r.ratio for r in rep.rows] == [2 / 5, 2 / 9, 2 / 17]

    def test_single_site(self):
        rep = check_window_sequence([ints(0)], N1)
        assert rep.ok
        assert rep.rows[0].ratio == 2.0

    def test_l_shape(self):
        L = square(0, 3) - set(itertools.product(range(2, 4), range(2, 4)))
        rep = check_window_sequence([L], N2)
        # enumeration oracle
        nb = brute_neighborhood(L, N2)
        ext = nb - L
        inner = {v for v in nb if brute_neighborhood({v}, N2) <= nb}
        assert rep.rows[0].ratio == len(ext) / len(L)
        assert rep.rows[0].interior_consistent == (inner == L)

    def test_flags_non_decreasing(self):
        rep = check_window_sequence([box_window(4), box_window(2)], N1)
        assert not rep.ok


sites2 = st.sets(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=1, max_size=20)
templates2 = st.sampled_from([N2, NeighborhoodTemplate.cross(2), NeighborhoodTemplate.identity(2),
                              NeighborhoodTemplate.box(2, 2)])


@given(sites2, templates2)
def test_boundary_partition(A, N):
    ext = exterior_boundary(A, N)
    assert not (ext & A)
    assert ext | A == neighborhood(A, N)
    assert neighborhood(A, N) == brute_neighborhood(A, N)


@given(sites2, templates2)
def test_interior_characterisation(A, N):
    inner = interior(A, N)
    for v in A:
        inside = set(N.at(v)) <= A
        assert (v in inner) == inside


@given(sites2, sites2, templates2)
def test_monotone(A, extra, N):
    B = A | extra
    assert interior(A, N) <= interior(B, N)
    assert neighborhood(A, N) <= neighborhood(B, N)


@given(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), templates2)
def test_two_neighborhood_degree_bound(v, N):
    nplus = two_neighborhood(v, N)
    assert nplus == neighborhood(set(N.at(v)), N)
    assert len(nplus) <= 1 + N.degree ** 2
