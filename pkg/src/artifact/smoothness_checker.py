"""Chart equations, exact Jacobians at tracked points, rank verdicts and block minors."""

from __future__ import annotations

import multiprocessing
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .blowup_engine import Atlas, Chart
from .exact_arith import ExactMatrix, FieldElement, ZeroDenominator, matrix_rank, row_echelon_pivots
from .matroid_gamma import (
    AmbiguousRank, GammaSets, Matroid3, NotFound, TrackedPoint, Tracker, TrackingError, gamma_zero_one_sets, generic_direction,
    random_point_matrix, realization_curve, uniform_matroid,
)
from .poly_core import Polynomial, evaluate, partial_derivative, pi_var, substitute

HEADER = "pointwise certificates: smoothness is established at the tracked points only"


class OffChart(ValueError):
    pass


class MinorNotFound(RuntimeError):
    pass


@dataclass
class ChartEquationSet:
    chart: int
    gamma_zero: frozenset
    gamma_one: frozenset
    names: list[str]
    equations: list[Polynomial]
    blocks: list[int | None]
    variables: list[str]
    expected_rank: int
    unrestricted_count: int
    eliminated: list[str] = field(default_factory=list)
    _derivs: list[list[Polynomial]] | None = field(default=None, repr=False)

    def derivatives(self) -> list[list[Polynomial]]:
        if self._derivs is None:
            self._derivs = [[partial_derivative(e, v) for v in self.variables] for e in self.equations]
        return self._derivs

    def to_json(self) -> dict:
        return {
            "chart": self.chart,
            "gamma_zero": sorted(self.gamma_zero),
            "gamma_one": sorted(self.gamma_one),
            "equations": [{"name": n, "text": e.to_text()} for n, e in zip(self.names, self.equations)],
            "variables": self.variables,
            "expected_rank": self.expected_rank,
            "eliminated": self.eliminated,
        }


def chart_equations(chart: Chart, gamma: GammaSets | None = None) -> ChartEquationSet:
    """Governing and linearized relations (rb omitted), restricted by the Gamma-tilde sets.

    An ell-variable lam occurring only in its defining relation lam - L* is eliminated
    together with that relation, unless lam is pinned by the Gamma-tilde sets; otherwise
    the relation is kept as an equation.
    """
    zero = frozenset(gamma.zero) if gamma else frozenset()
    one = frozenset(gamma.one) if gamma else frozenset()
    rel = chart.relations(include_rb=False, include_aux=False)
    used = set().union(*(p.variables() for _, p in rel)) if rel else set()
    used |= zero | one
    eliminated = [v for v in chart.aux if v not in used]
    rel += [(f"aux:{v}", p) for v, p in sorted(chart.aux.items()) if v in used]
    unrestricted = len(rel)
    rule = {v: Polynomial.const(0) for v in zero} | {v: Polynomial.const(1) for v in one}
    names, eqs, blocks = [], [], []
    for name, p in rel:
        q = substitute(p, rule) if rule else p
        if q.is_zero():
            continue
        names.append(name)
        eqs.append(q)
        blocks.append(_block_of(name))
    variables = sorted(v for v in chart.vars if v not in zero and v not in one and v not in eliminated)
    return ChartEquationSet(chart.id, zero, one, names, eqs, blocks, variables, len(eqs), unrestricted, eliminated)


def _block_of(name: str) -> int | None:
    kind, rest = name.split(":", 1)
    if kind == "gov":
        return int(rest.split(",")[0])
    if kind == "lin":
        return int(rest)
    return None


def _point_values(point: TrackedPoint | Mapping[str, FieldElement], p: int | None) -> dict[str, FieldElement]:
    coords = point.coords if isinstance(point, TrackedPoint) else dict(point)
    if p is None:
        return coords
    src = next(iter(coords.values())).p if coords else 0
    if src == p:
        return coords
    if src != 0:
        raise ValueError(f"cannot move a point from characteristic {src} to {p}")
    return {v: FieldElement(x.v, p) for v, x in coords.items()}


def jacobian_at(eqset: ChartEquationSet, point: TrackedPoint | Mapping[str, FieldElement],
                p: int | None = None) -> ExactMatrix:
    if isinstance(point, TrackedPoint) and point.final_chart != eqset.chart:
        raise OffChart(f"point lies on chart {point.final_chart}, not {eqset.chart}")
    vals = _point_values(point, p)
    char = p if p is not None else (next(iter(vals.values())).p if vals else 0)
    one = FieldElement(1, char)
    missing = [v for v in eqset.variables if v not in vals]
    if missing:
        raise OffChart(f"point has no coordinate for {missing[0]}")
    full = dict(vals)
    for v in eqset.gamma_zero:
        full.setdefault(v, FieldElement(0, char))
    for v in eqset.gamma_one:
        full.setdefault(v, one)
    rows = [[evaluate(d, full, one=one) for d in row] for row in eqset.derivatives()]
    return ExactMatrix(len(rows), len(eqset.variables), rows, char)


def residuals(eqset: ChartEquationSet, point: TrackedPoint, p: int | None = None) -> list[str]:
    vals = _point_values(point, p)
    char = p if p is not None else point.characteristic
    one = FieldElement(1, char)
    full = dict(vals)
    for v in eqset.gamma_zero:
        full[v] = FieldElement(0, char)
    for v in eqset.gamma_one:
        full[v] = one
    return [n for n, e in zip(eqset.names, eqset.equations) if not evaluate(e, full, one=one).is_zero()]


@dataclass
class FieldResult:
    field: int
    rank: int | None
    expected: int
    tangent_dim: int | None
    ok: bool
    note: str = ""

    def to_json(self) -> dict:
        return {"field": "Q" if self.field == 0 else f"Fp:{self.field}", "rank": self.rank,
                "expected": self.expected, "tangent_dim": self.tangent_dim, "ok": self.ok, "note": self.note}


@dataclass
class SmoothnessVerdict:
    point: int
    chart: int
    results: list[FieldResult]
    expected_rank: int
    expected_tangent_dim: int | None
    minor: dict | None = None
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results if r.rank is not None) and not self.failures

    def to_json(self) -> dict:
        return {
            "id": self.point,
            "chart": self.chart,
            "fields": [r.to_json() for r in self.results],
            "expected": self.expected_rank,
            "expected_tangent_dim": self.expected_tangent_dim,
            "ok": self.ok,
            "minor": self.minor,
            "failures": self.failures,
        }


def smoothness_verdict(point: TrackedPoint, eqset: ChartEquationSet, primes: Sequence[int] = (0,),
                       expected_tangent_dim: int | None = None, point_id: int = 0,
                       with_minor: bool = True) -> SmoothnessVerdict:
    """Rank of the restricted Jacobian in each requested characteristic (0 = Q).

    A point sampled over F_p is judged over F_p only; a rational point over Q and
    over every prime not dividing a coordinate denominator.
    """
    fields = [point.characteristic] if point.characteristic else list(dict.fromkeys([0, *primes]))
    results, failures = [], []
    expected = eqset.expected_rank
    res = residuals(eqset, point)
    if res:
        failures.append({"reason": "point off the chart equations", "equations": res})
    for p in fields:
        try:
            jac = jacobian_at(eqset, point, p)
        except ZeroDenominator:
            results.append(FieldResult(p, None, expected, None, False, "coordinates not reducible"))
            continue
        r = matrix_rank(jac)
        tdim = len(eqset.variables) - r
        ok = r == expected and (expected_tangent_dim is None or tdim == expected_tangent_dim)
        results.append(FieldResult(p, r, expected, tdim, ok))
        if not ok:
            failures.append({"field": p, "rank": r, "expected": expected, "tangent_dim": tdim})
    minor = None
    if with_minor:
        try:
            minor = maximal_minor_report(eqset, point)
        except MinorNotFound as exc:
            minor = {"error": str(exc)}
    return SmoothnessVerdict(point_id, eqset.chart, results, expected, expected_tangent_dim, minor, failures)


def maximal_minor_report(eqset: ChartEquationSet, point: TrackedPoint) -> dict:
    """Per block, columns of an invertible square minor built from pleasant variables.

    A block may only use variables absent from the equations of all earlier blocks,
    which makes the assembled minor block lower-triangular. The relation order is
    tried first, then other block orders (at most `_MAX_ORDERS`); failing that the
    pivot columns of the whole Jacobian are reported with "pleasant": false.
    """
    jac = jacobian_at(eqset, point)
    blocks = sorted({b for b in eqset.blocks if b is not None})
    tail = [None] if None in eqset.blocks else []
    tried = 0
    for order in _block_orders(blocks):
        tried += 1
        found = _pleasant_minor(eqset, jac, list(order) + tail)
        if found is not None:
            found["order"] = [str(b) for b in order]
            return found
        if tried >= _MAX_ORDERS:
            break
    piv = row_echelon_pivots(jac)
    if len(piv) < jac.rows:
        raise MinorNotFound(f"Jacobian rank {len(piv)} < {jac.rows}")
    cols = {r: eqset.variables[c] for r, c in piv}
    out: dict = {}
    for b in blocks + tail:
        rows = [i for i, blk in enumerate(eqset.blocks) if blk == b]
        out["aux" if b is None else str(b)] = {"columns": [cols[i] for i in rows],
                                               "rows": [eqset.names[i] for i in rows],
                                               "case": _case(eqset, rows, b), "pleasant": False}
    out["order"] = None
    return out


_MAX_ORDERS = 120


def _block_orders(blocks: list[int]):
    from itertools import permutations

    yield tuple(blocks)
    for perm in permutations(blocks):
        if list(perm) != blocks:
            yield perm


def _case(eqset: ChartEquationSet, rows: list[int], b) -> str | None:
    lin_row = next((i for i in rows if eqset.names[i] == f"lin:{b}"), None)
    if lin_row is None:
        return None
    return "beta" if any(v.startswith("y[") for v in eqset.equations[lin_row].variables()) else "alpha"


def _pleasant_minor(eqset: ChartEquationSet, jac: ExactMatrix, order: list) -> dict | None:
    col = {v: j for j, v in enumerate(eqset.variables)}
    seen: set[str] = set()
    report: dict = {}
    for b in order:
        rows = [i for i, blk in enumerate(eqset.blocks) if blk == b]
        pleasant = [v for v in eqset.variables if v not in seen]
        sub = ExactMatrix(len(rows), len(pleasant), [[jac[i, col[v]] for v in pleasant] for i in rows],
                          jac.characteristic)
        piv = row_echelon_pivots(sub)
        if len(piv) < len(rows):
            return None
        report["aux" if b is None else str(b)] = {"columns": [pleasant[c] for _, c in piv],
                                                  "rows": [eqset.names[i] for i in rows],
                                                  "case": _case(eqset, rows, b), "pleasant": True}
        for i in rows:
            seen |= eqset.equations[i].variables()
    return report


def derivative_by_interpolation(poly: Polynomial, point: Mapping[str, Fraction | FieldElement], var: str):
    """d poly / d var at the point, read off the line point + s*e_var by exact interpolation."""
    deg = poly.degree_in(var)
    base = {v: (x.v if isinstance(x, FieldElement) else Fraction(x)) for v, x in point.items()}
    xs = list(range(deg + 1))
    ys = []
    for s in xs:
        pt = dict(base)
        pt[var] = base[var] + s
        ys.append(evaluate(poly, pt, one=Fraction(1)))
    # coefficient of s^1 of the interpolating polynomial, via Lagrange basis derivatives at 0
    total = Fraction(0)
    for i, xi in enumerate(xs):
        others = [xj for j, xj in enumerate(xs) if j != i]
        denom = Fraction(1)
        for xj in others:
            denom *= xi - xj
        # derivative at 0 of prod (s - xj)
        d0 = Fraction(0)
        for m, xm in enumerate(others):
            prod = Fraction(1)
            for q, xq in enumerate(others):
                if q != m:
                    prod *= -xq
            d0 += prod
        total += ys[i] * d0 / denom
    return total


@dataclass
class VerifySummary:
    n: int
    gamma: list[str]
    verdicts: list[SmoothnessVerdict]
    excluded: list[dict]

    @property
    def ok(self) -> bool:
        return bool(self.verdicts) and all(v.ok for v in self.verdicts)

    def to_json(self) -> dict:
        points = []
        for v in self.verdicts:
            for r in v.results:
                points.append({"id": v.point, "chart": v.chart, "field": r.to_json()["field"], "rank": r.rank,
                               "expected": r.expected, "tangent_dim": r.tangent_dim, "ok": r.ok,
                               "minor": {k: m["columns"] for k, m in (v.minor or {}).items()
                                         if isinstance(m, dict) and "columns" in m}})
        return {
            "header": HEADER,
            "n": self.n,
            "gamma": self.gamma,
            "points": points,
            "verdict": "smooth-at-all-tracked-points" if self.ok else "failure",
            "failures": [dict(f, id=v.point, chart=v.chart) for v in self.verdicts for f in v.failures],
            "excluded": self.excluded,
        }


def equation_sets(atlas: Atlas, charts: Iterable[int], gamma_sets: Mapping[int, GammaSets] | None = None
                  ) -> dict[int, ChartEquationSet]:
    return {c: chart_equations(atlas.charts[c], (gamma_sets or {}).get(c)) for c in charts}


# ---------------------------------------------------------------- orchestration

_WORKER: dict = {}


def _track_job(job: tuple) -> tuple:
    """Sample and track one point; job = (index, characteristic, special)."""
    i, p, special = job
    atlas, gamma, m, seed = _WORKER["atlas"], _WORKER["gamma"], _WORKER["matroid"], _WORKER["seed"]
    rng = random.Random(f"{seed}:{p}:{i}")
    tracker = Tracker(atlas, gamma, seed=f"{seed}:{p}:{i}:track")
    try:
        if gamma:
            rows = realization_curve(m, p, rng, spread=5, special=special)
            return job, tracker.track_curve(rows, p), None
        source = random_point_matrix(atlas.n, p, rng)
        return job, tracker.track(source, p, generic_direction(source, m, p, rng)), None
    except (NotFound, TrackingError, ValueError, ZeroDivisionError) as exc:
        return job, None, f"{type(exc).__name__}: {exc}"


def _verdict_job(job: tuple) -> SmoothnessVerdict:
    pid, pt, eqset, primes, tdim = job
    return smoothness_verdict(pt, eqset, primes, tdim, pid)


def _run(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def track_samples(atlas: Atlas, gamma: Iterable = (), matroid: Matroid3 | None = None, primes: Sequence[int] = (0,),
                  samples: int = 100, seed: int = 0, special_every: int = 0, workers: int = 1
                  ) -> tuple[list[tuple[tuple, TrackedPoint]], list[dict]]:
    """Sample and track `samples` points natively in Q and in each F_p.

    Returns ((index, characteristic, special), point) pairs and the excluded draws.
    """
    gamma = sorted(tuple(u) for u in gamma)
    m = matroid if matroid is not None else uniform_matroid(atlas.n)
    fields = list(dict.fromkeys([0, *primes]))
    _WORKER.update(atlas=atlas, gamma=gamma, matroid=m, seed=seed)
    jobs = [(i, p, bool(gamma) and bool(special_every) and i % special_every == 0)
            for p in fields for i in range(samples)]
    tracked = _run(_track_job, jobs, workers)
    points = [(job, pt) for job, pt, err in tracked if pt is not None]
    excluded = [{"sample": job[0], "field": "Q" if not job[1] else f"Fp:{job[1]}", "special": job[2], "reason": err}
                for job, pt, err in tracked if pt is None]
    return points, excluded


def verify_run(atlas: Atlas, gamma: Iterable = (), matroid: Matroid3 | None = None, primes: Sequence[int] = (0,),
               samples: int = 100, seed: int = 0, special_every: int = 0, workers: int = 1,
               expected_tangent_dim: int | None = None) -> tuple[VerifySummary, list[TrackedPoint], dict]:
    """Track sample points and judge the restricted Jacobian at each.

    Gamma-tilde sets come from consensus over the generic samples landing on each
    chart. Points on a chart whose generic samples disagree are excluded and listed;
    AmbiguousRank is raised when that leaves nothing to judge. Charts reached only
    by special samples use their own consensus.
    """
    gamma = sorted(tuple(u) for u in gamma)
    fields = list(dict.fromkeys([0, *primes]))
    points, excluded = track_samples(atlas, gamma, matroid, fields, samples, seed, special_every, workers)
    gsets: dict[int, GammaSets] = {}
    if gamma:
        ambiguous: dict[int, str] = {}
        for c in sorted({pt.final_chart for _, pt in points}):
            generic = [pt for job, pt in points if pt.final_chart == c and not job[2]]
            try:
                gsets[c] = gamma_zero_one_sets(generic or [pt for _, pt in points], c, strict=bool(generic))
            except AmbiguousRank as exc:
                ambiguous[c] = str(exc)
        excluded += [{"sample": job[0], "field": "Q" if not job[1] else f"Fp:{job[1]}", "special": job[2],
                      "reason": f"AmbiguousRank: {ambiguous[pt.final_chart]}"}
                     for job, pt in points if pt.final_chart in ambiguous]
        points = [(job, pt) for job, pt in points if pt.final_chart not in ambiguous]
        if ambiguous and not points:
            raise AmbiguousRank(f"every tracked point lies on an ambiguous chart: {sorted(ambiguous)}")
    eqsets = equation_sets(atlas, sorted({pt.final_chart for _, pt in points}), gsets)
    vjobs = [(pid, pt, eqsets[pt.final_chart], fields, expected_tangent_dim) for pid, (_, pt) in enumerate(points)]
    verdicts = _run(_verdict_job, vjobs, workers)
    for v, (job, pt) in zip(verdicts, points):
        for f in pt.ell_checks:
            if not (f["ok"] and f["inverse_ok"]):
                v.failures.append({"reason": "ell fiber coordinate", **f})
        if pt.residual_failures:
            v.failures.append({"reason": "residuals along the track", "details": pt.residual_failures})
    summary = VerifySummary(atlas.n, [pi_var(u) for u in gamma], verdicts, excluded)
    extra = {"gamma_sets": {str(c): g.to_json() for c, g in sorted(gsets.items())},
             "special": [pid for pid, (job, _) in enumerate(points) if job[2]]}
    return summary, [pt for _, pt in points], extra


__all__ = [
    "ChartEquationSet", "FieldResult", "HEADER", "MinorNotFound", "OffChart", "SmoothnessVerdict",
    "VerifySummary", "chart_equations", "derivative_by_interpolation", "equation_sets", "jacobian_at",
    "maximal_minor_report", "residuals", "smoothness_verdict", "track_samples", "verify_run",
]
