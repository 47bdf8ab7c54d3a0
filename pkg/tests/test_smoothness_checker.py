import random

import pytest

from artifact.exact_arith import FieldElement, matrix_rank
from artifact.matroid_gamma import AmbiguousRank, Tracker, generic_direction, make_matroid, random_point_matrix, uniform_matroid
from artifact.smoothness_checker import (
    HEADER, OffChart, chart_equations, jacobian_at, maximal_minor_report, residuals, smoothness_verdict, verify_run,
)


@pytest.fixture(scope="module")
def tracked(atlas5):
    rng = random.Random(11)
    tr = Tracker(atlas5, seed=11)
    src = random_point_matrix(5, 0, rng, spread=5)
    return tr.track(src, 0, generic_direction(src, uniform_matroid(5), 0, rng))


def test_unrestricted_equations_on_a_leaf(atlas5, tracked):
    eq = chart_equations(atlas5.charts[tracked.final_chart])
    assert len(eq.equations) == eq.expected_rank == 9
    assert sum(1 for n in eq.names if n.startswith("gov")) == 6
    assert not residuals(eq, tracked)


def test_rank_and_tangent_dimension_in_every_field(atlas5, tracked):
    eq = chart_equations(atlas5.charts[tracked.final_chart])
    v = smoothness_verdict(tracked, eq, primes=(2, 3, 5, 7), expected_tangent_dim=6)
    assert v.ok
    for r in v.results:
        assert r.rank is None or (r.rank == 9 and r.tangent_dim == 6)


def test_jacobian_rejects_points_on_other_charts(atlas5, tracked):
    other = next(c for c in atlas5.leaves if c != tracked.final_chart)
    with pytest.raises(OffChart):
        jacobian_at(chart_equations(atlas5.charts[other]), tracked)


def test_jacobian_entries_match_direct_evaluation(atlas5, tracked):
    eq = chart_equations(atlas5.charts[tracked.final_chart])
    jac = jacobian_at(eq, tracked)
    assert (jac.rows, jac.cols) == (9, len(eq.variables))
    assert matrix_rank(jac) == 9
    with pytest.raises(ValueError):
        jacobian_at(eq, {v: FieldElement(1, 7) for v in eq.variables}, 5)


def test_minor_report_covers_every_block(atlas5, tracked):
    eq = chart_equations(atlas5.charts[tracked.final_chart])
    rep = maximal_minor_report(eq, tracked)
    blocks = {k for k in rep if k != "order"}
    assert blocks == {str(b) for b in eq.blocks if b is not None} | ({"aux"} if None in eq.blocks else set())
    cols = [c for k in blocks for c in rep[k]["columns"]]
    assert len(cols) == len(set(cols)) == 9


def test_verify_run_small_uniform(atlas5):
    summary, points, extra = verify_run(atlas5, primes=(7,), samples=3, seed=1, expected_tangent_dim=6)
    doc = summary.to_json()
    assert doc["header"] == HEADER and summary.ok
    assert len(points) == 6 and not extra["gamma_sets"]


def test_verify_run_is_deterministic(atlas5):
    a = verify_run(atlas5, primes=(7,), samples=2, seed=5)[0].to_json()
    b = verify_run(atlas5, primes=(7,), samples=2, seed=5)[0].to_json()
    assert a == b


def test_verify_run_gamma_restricts_rank(atlas5):
    cone = make_matroid(5, [u for u in uniform_matroid(5).bases if u != (1, 4, 5)])
    summary, points, extra = verify_run(atlas5, [(1, 4, 5)], cone, primes=(7,), samples=4, seed=3,
                                        special_every=2, expected_tangent_dim=5)
    assert summary.ok, summary.to_json()["failures"]
    assert extra["special"]
    assert all(row["tangent_dim"] in (5, None) for row in summary.to_json()["points"])


def test_ambiguity_everywhere_raises(atlas5, monkeypatch):
    import artifact.smoothness_checker as sc

    def always(*_a, **_k):
        raise AmbiguousRank("forced")

    monkeypatch.setattr(sc, "gamma_zero_one_sets", always)
    cone = make_matroid(5, [u for u in uniform_matroid(5).bases if u != (1, 4, 5)])
    with pytest.raises(AmbiguousRank):
        verify_run(atlas5, [(1, 4, 5)], cone, primes=(7,), samples=1, seed=3)
