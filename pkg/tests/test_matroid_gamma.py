import random
from itertools import combinations

import pytest
from hypothesis import given, settings, strategies as st

from artifact.exact_arith import ExactMatrix, RationalFunction
from artifact.matroid_gamma import (
    AmbiguousRank, ChartBasisMissing, NotFound, OffChartU, RankDeficient, Tracker, TrackedPoint, check_matroid,
    curve_matroid, gamma_from_matroid, gamma_samples, gamma_scheme_equations, gamma_zero_one_sets, make_matroid,
    matroid_from_matrix, pluecker_values, polytope_dim, random_point_matrix, realization_curve, relevant_blocks,
    sample_realization, uniform_matroid,
)
from artifact.poly_core import parse_polynomial
from oracles import matroid_axioms_ok, non_bases_by_det, random_matrix

EXAMPLE = [[1, 0, 0, 1, 2], [0, 1, 0, 1, 1], [0, 0, 1, 1, 1]]
FANO_LINES = [(1, 2, 4), (2, 3, 5), (3, 4, 6), (4, 5, 7), (1, 5, 6), (2, 6, 7), (1, 3, 7)]


def cone_matroid():
    return make_matroid(5, [u for u in uniform_matroid(5).bases if u != (1, 4, 5)])


def test_matroid_from_matrix_examples():
    m = matroid_from_matrix(ExactMatrix.from_rows(EXAMPLE, 0))
    assert m.non_bases == [(1, 4, 5)]
    dep = [[1, 0, 0, 1, 3], [0, 1, 0, 1, 5], [0, 0, 1, 0, 7]]
    assert (1, 2, 4) in matroid_from_matrix(ExactMatrix.from_rows(dep, 0)).non_bases
    with pytest.raises(RankDeficient):
        matroid_from_matrix(ExactMatrix.from_rows([[1, 2, 3], [2, 4, 6], [0, 0, 0]], 0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0, 2, 3, 101]), st.integers(4, 6))
def test_matroid_from_matrix_matches_determinant_oracle(seed, p, n):
    rng = random.Random(seed)
    mat = random_matrix(rng, 3, n, p, spread=2)
    em = ExactMatrix.from_rows(mat, p)
    try:
        m = matroid_from_matrix(em)
    except RankDeficient:
        return
    assert set(m.non_bases) == non_bases_by_det(mat, p)
    assert check_matroid(m.bases, n)[0]
    assert matroid_axioms_ok(set(m.bases))


def test_check_matroid_examples():
    ok, witness = check_matroid([(1, 2, 3), (1, 4, 5)], 5)
    assert not ok and witness["reason"] == "exchange"
    assert check_matroid(uniform_matroid(5).bases, 5)[0]


def test_polytope_dimension_examples():
    assert polytope_dim(uniform_matroid(5)) == 4
    assert polytope_dim(make_matroid(5, [(1, 2, 3)])) == 0
    assert polytope_dim(cone_matroid()) == 4


def test_gamma_from_matroid_examples():
    assert gamma_from_matroid(uniform_matroid(5)) == frozenset()
    assert gamma_from_matroid(cone_matroid()) == {(1, 4, 5)}
    bad = make_matroid(5, [u for u in uniform_matroid(5).bases if u != (1, 2, 3)])
    with pytest.raises(ChartBasisMissing) as exc:
        gamma_from_matroid(bad)
    assert exc.value.permutation is not None


def test_gamma_scheme_equations():
    eq = gamma_scheme_equations([(1, 4, 5)], 5)
    cone = parse_polynomial("x[124]*x[135] - x[125]*x[134]")
    assert any(p in (cone, -cone) for _, p in eq.restricted)
    assert all(relevant_blocks([(1, 4, 5)], 5).values())
    assert relevant_blocks([(1, 4, 5), (1, 2, 4), (1, 3, 4)], 5)[1] is False


def test_sample_realization():
    m = sample_realization(uniform_matroid(5), 101, seed=42)
    assert matroid_from_matrix(m) == uniform_matroid(5)
    cone = sample_realization(cone_matroid(), 0, seed=1)
    assert matroid_from_matrix(cone) == cone_matroid()
    fano = make_matroid(7, [u for u in combinations(range(1, 8), 3) if u not in FANO_LINES])
    with pytest.raises(NotFound):
        sample_realization(fano, 0, seed=0, tries=20)
    assert matroid_from_matrix(sample_realization(fano, 2, seed=0)) == fano


def test_realization_curves_realize_the_matroid():
    rng = random.Random(4)
    for p in (0, 7):
        for special, rows in gamma_samples(cone_matroid(), p, rng, 6, special_every=2):
            assert curve_matroid(rows) == cone_matroid()
            x = pluecker_values(rows, 5)
            assert x[(1, 4, 5)].is_zero()
            if special:
                assert all(x[u].at_zero().is_zero() for u in [(1, 2, 4), (1, 3, 4), (1, 2, 5), (1, 3, 5)])


@pytest.fixture(scope="module")
def tracker(atlas5):
    return Tracker(atlas5, seed=1)


def test_tracking_generic_points_over_f7(tracker, atlas5):
    rng = random.Random(5)
    for _ in range(5):
        pt = tracker.track(random_point_matrix(5, 7, rng), 7, None)
        ch = atlas5.charts[pt.final_chart]
        assert not pt.residual_failures
        assert all(atlas5.terminated(ch, 3).values())


def test_step0_rho_coordinates_are_products(atlas5):
    tr = Tracker(atlas5, seed=2)
    src = EXAMPLE[:2] + [[0, 0, 1, 1, 3]]
    pt = tr.track(src, 0, None)
    step0 = atlas5.charts[pt.step0_chart]
    x = {u: v.at_zero() for u, v in pluecker_values(
        [[RationalFunction.constant(a) for a in r] for r in src], 5).items()}
    for F in atlas5.relations:
        one = step0.one_rho[F.k]
        pair_one = next(t.pair for t in F.terms if t.rho == one)
        base = x[pair_one[0]] * x[pair_one[1]]
        for t in F.terms:
            if t.rho == one:
                continue
            assert pt.step0_coords[t.rho] * base == x[t.pair[0]] * x[t.pair[1]]


def test_off_chart_source_rejected(tracker):
    with pytest.raises(OffChartU):
        tracker.track([[1, 0, 0, 1, 1], [0, 1, 0, 1, 1], [0, 0, 0, 1, 2]], 0, None)


def test_gamma_sets_consensus_and_flags():
    def fake(chart, zero):
        pt = TrackedPoint(0, [], None, 0, {})
        pt.final_chart = chart
        pt.values = {v: RationalFunction.constant(0 if v in zero else 1) for v in ("a", "b", "c")}
        return pt

    one = gamma_zero_one_sets([fake(4, {"a"})], 4)
    assert one.zero == {"a"} and not one.flagged
    both = gamma_zero_one_sets([fake(4, {"a"}), fake(4, {"a", "b"})], 4)
    assert both.zero == {"a"} and both.flagged == {"b"}
    with pytest.raises(AmbiguousRank):
        gamma_zero_one_sets([fake(4, {"a"}), fake(4, {"a", "b"})], 4, strict=True)
    with pytest.raises(ValueError):
        gamma_zero_one_sets([fake(4, set())], 5)


def test_realization_curve_requires_chart_basis():
    bad = make_matroid(5, [u for u in uniform_matroid(5).bases if u != (1, 2, 3)])
    with pytest.raises(ChartBasisMissing):
        realization_curve(bad, 0, random.Random(0))
