import pytest

from artifact.blowup_engine import (
    Atlas, CenterOffChart, DivisorLabel, RoundCapExceeded, _termination_summary, fresh_name, map_monomial,
    proper_transform, run_pipeline, theta_centers, theta_sequence, update_associations, wp_sets,
)
from artifact.pluecker_model import governing_binomials, phi
from artifact.poly_core import BinomialRelation, Monomial, Polynomial


def _b(plus: dict, minus: dict) -> BinomialRelation:
    return BinomialRelation(Monomial.from_map(1, plus), Monomial.from_map(1, minus), ("t",))


def test_theta_centers():
    assert [(c.plus, c.minus) for c in theta_centers(5)] == [
        ("pi:145", "rho:123|145"), ("pi:245", "rho:123|245"), ("pi:345", "rho:123|345")]
    assert theta_centers(4) == []
    assert len(theta_centers(6)) == 10


def test_proper_transform_divides_common_power():
    b = _b({"m0": 1, "y0": 1}, {"m1": 1, "y1": 3})
    rule = {"y0": (("z", 1),), "y1": (("y1", 1), ("z", 1))}
    out = proper_transform(b, rule, "z")
    assert out.plus.exps == (("m0", 1),)
    assert dict(out.minus.exps) == {"m1": 1, "y1": 3, "z": 2}


def test_proper_transform_without_common_factor_only_renames():
    b = _b({"a": 1}, {"y1": 1})
    out = proper_transform(b, {"y0": (("z", 1),), "y1": (("y1", 1), ("z", 1))}, "z")
    assert out.plus.exps == (("a", 1),) and dict(out.minus.exps) == {"y1": 1, "z": 1}


def test_update_associations_rule():
    tp, tm = ("B", "+"), ("B", "-")
    a = DivisorLabel("A", "pi", mult={tp: 1})
    b = DivisorLabel("B", "pi", mult={tm: 1})
    assert update_associations("E", 1, ("x",), [a, b], [(tp, tm)], []).mult == {}
    c = DivisorLabel("C", "pi", mult={tm: 2})
    assert update_associations("E", 1, ("x",), [a, c], [(tp, tm)], []).mult == {tm: 1}
    s = ("lin", 1, 0)
    d = DivisorLabel("D", "rho", mult={s: 1})
    assert update_associations("E", 1, ("x",), [d, a], [], [s]).mult == {s: 1}


def test_fresh_names():
    assert fresh_name("x[145]", 3) == "eps[145]@s3"
    assert fresh_name("r[123|145]", 1) == "del[123|145]@s1"


def test_blow_up_off_chart_rejected():
    atlas = Atlas(5)
    ch = atlas.charts[atlas.leaves[0]]
    with pytest.raises(CenterOffChart):
        atlas.blow_up(ch, "x[145]", "nope", 1, "theta")


def test_n4_is_trivial():
    atlas = run_pipeline(4)
    assert len(atlas.charts) == 1 and not atlas.steps and atlas.report()["counts"]["wp_steps"] == 0


def test_theta_preferred_charts_lie_over_unit_or_rho(theta5):
    for cid in theta5.leaves:
        ch = theta5.charts[cid]
        assert ch.preferred
        assert set(ch.theta_type.values()) <= {"one", "rho"}


def test_theta_dependence_both_chart_types(theta5_full):
    kinds = {d["chart_type"] for d in theta5_full.dependence}
    assert kinds == {"one", "rho", "pi"}
    assert all(d["ok"] for d in theta5_full.dependence)
    assert len(theta5_full.leaves) > len(theta_sequence(5).leaves)


def test_wp_centers_never_use_the_leading_rho_as_minus():
    atlas = theta_sequence(5)
    for k in (1,):
        for tau in (1, 2):
            centers = wp_sets(atlas, k, tau, 1)
            assert centers
            assert not any(c.minus == "rho:123|145" for c in centers)


def test_pipeline_report(atlas5):
    rep = atlas5.report()
    assert rep["invariants_ok"]
    assert all(v >= 1 for v in rep["rho"].values()) and len(rep["rho"]) == 6
    assert rep["charts"]["leaves"] == rep["charts"]["preferred"]
    assert all(atlas5.ell_met.values())


def test_every_binomial_terminates_on_every_leaf(atlas5):
    for cid in atlas5.leaves:
        ch = atlas5.charts[cid]
        assert all(atlas5.terminated(ch, 3).values())
    summary = _termination_summary(atlas5, 3)
    assert summary["unit_term"] == summary["binomial_chart_pairs"]


def test_atlas_consistency(atlas5):
    assert atlas5.check_consistency() == []


def test_pullback_of_step0_relations(atlas5):
    """Each step-0 governing binomial pulls back to a monomial times its chart transform."""
    gov0 = {(b.origin[1], b.origin[2]): b for b in governing_binomials(5)}
    for cid in atlas5.leaves[::10]:
        ch = atlas5.charts[cid]
        for key, b in gov0.items():
            pulled = Polynomial({map_monomial(b.plus.exps, ch.to_root): 1}) - Polynomial(
                {map_monomial(b.minus.exps, ch.to_root): 1})
            chart_b = ch.gov[key].polynomial()
            top = dict(map_monomial(b.plus.exps, ch.to_root))
            low = dict(ch.gov[key].plus.exps)
            factor = {v: top.get(v, 0) - low.get(v, 0) for v in set(top) | set(low)}
            assert all(e >= 0 for e in factor.values())
            assert pulled == Polynomial.monomial(1, {v: e for v, e in factor.items() if e}) * chart_b


def test_ell_children_take_the_fiber_form(atlas5):
    seen = 0
    for ch in atlas5.charts.values():
        rec = ch.ell_record
        if rec is None:
            continue
        kids = [c for c in ch.split.children if c["kept"]]
        for c in kids:
            kid = atlas5.charts[c["child"]]
            lin = kid.lin_polynomial(rec["k"])
            assert lin == Polynomial.monomial(rec["sign"], {rec["y"]: 1}) + 1
            assert rec["y"] in kid.units
            seen += 1
    assert seen > 0


def test_round_cap():
    with pytest.raises(RoundCapExceeded):
        run_pipeline(5, max_rounds=0, check_invariants=False)


def test_conservative_policy_terminates():
    atlas = run_pipeline(5, policy="conservative", check_invariants=False)
    assert all(v >= 1 for v in atlas.rho.values())


def test_phi_of_governing_zero():
    for b in governing_binomials(5):
        assert phi(b.polynomial()).is_zero()
