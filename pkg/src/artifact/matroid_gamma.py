"""Rank-3 matroids, Gamma-schemes on U, realization sampling and pointwise tracking.

Points are tracked over K = F(t): a source matrix M0 (optionally moved along a
line M0 + t*M1) gives Pluecker coordinates in K, every blowup is followed on
the level of K-values, and the point of the final chart is the value at t = 0.
A constant point is the case M1 = 0.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

from .blowup_engine import Atlas, Chart
from .exact_arith import ExactMatrix, FieldElement, RationalFunction, check_characteristic, matrix_rank
from .pluecker_model import M, primary_relations
from .poly_core import Polynomial, evaluate, fmt_triple, pi_var

Triple = tuple[int, int, int]


class RankDeficient(ValueError):
    pass


class ChartBasisMissing(ValueError):
    def __init__(self, message: str, permutation: dict[int, int] | None):
        super().__init__(message)
        self.permutation = permutation


class NotFound(RuntimeError):
    pass


class OffChartU(ValueError):
    pass


class AmbiguousRank(RuntimeError):
    pass


class TrackingError(RuntimeError):
    pass


# ---------------------------------------------------------------- matroids


@dataclass(frozen=True)
class Matroid3:
    n: int
    bases: frozenset

    def rank(self, subset: Iterable[int]) -> int:
        s = set(subset)
        return max((len(s & set(b)) for b in self.bases), default=0)

    def d(self, subset: Iterable[int]) -> int:
        rest = set(range(1, self.n + 1)) - set(subset)
        return 3 - self.rank(rest)

    @property
    def non_bases(self) -> list[Triple]:
        return [u for u in combinations(range(1, self.n + 1), 3) if u not in self.bases]

    def to_json(self) -> dict:
        return {"n": self.n, "bases": [list(b) for b in sorted(self.bases)]}


def make_matroid(n: int, bases: Iterable[Iterable[int]]) -> Matroid3:
    return Matroid3(n, frozenset(tuple(sorted(b)) for b in bases))


def uniform_matroid(n: int) -> Matroid3:
    return Matroid3(n, frozenset(combinations(range(1, n + 1), 3)))


def check_matroid(bases: Iterable[Iterable[int]], n: int | None = None) -> tuple[bool, dict | None]:
    """Brute-force basis exchange plus submodularity of d; returns (ok, witness)."""
    bs = {tuple(sorted(b)) for b in bases}
    if not bs:
        return False, {"reason": "no bases"}
    if any(len(set(b)) != 3 for b in bs):
        return False, {"reason": "a basis is not a 3-set"}
    n = n if n is not None else max(max(b) for b in bs)
    for b1 in sorted(bs):
        for b2 in sorted(bs):
            for e in sorted(set(b1) - set(b2)):
                if not any(tuple(sorted((set(b1) - {e}) | {f})) in bs for f in set(b2) - set(b1)):
                    return False, {"reason": "exchange", "B1": list(b1), "B2": list(b2), "e": e}
    m = Matroid3(n, frozenset(bs))
    ground = range(1, n + 1)
    subsets = [frozenset(c) for r in range(n + 1) for c in combinations(ground, r)]
    d = {s: m.d(s) for s in subsets}
    if d[frozenset()] != 0 or d[frozenset(ground)] != 3:
        return False, {"reason": "normalization"}
    for a in subsets:
        for b in subsets:
            if d[a] + d[b] > d[a | b] + d[a & b]:
                return False, {"reason": "submodularity", "I": sorted(a), "J": sorted(b)}
    return True, None


def det3(cols: Sequence[Sequence]):
    (a, b, c), (d, e, f), (g, h, i) = cols
    return a * (e * i - f * h) - d * (b * i - c * h) + g * (b * f - c * e)


def _columns(mat: ExactMatrix | Sequence[Sequence]) -> list[list]:
    rows = mat.entries if isinstance(mat, ExactMatrix) else mat
    return [[rows[r][c] for r in range(3)] for c in range(len(rows[0]))]


def matroid_from_matrix(mat: ExactMatrix) -> Matroid3:
    if mat.rows != 3:
        raise RankDeficient("expected a 3 x n matrix")
    if matrix_rank(mat) < 3:
        raise RankDeficient("matrix has rank < 3")
    cols = _columns(mat)
    n = mat.cols
    bases = [u for u in combinations(range(1, n + 1), 3) if not det3([cols[i - 1] for i in u]).is_zero()]
    return make_matroid(n, bases)


def polytope_dim(m: Matroid3) -> int:
    verts = [[1 if i in b else 0 for i in range(1, m.n + 1)] for b in sorted(m.bases)]
    if len(verts) <= 1:
        return 0
    v0 = verts[0]
    diffs = [[x - y for x, y in zip(v, v0)] for v in verts[1:]]
    return matrix_rank(ExactMatrix.from_rows(diffs, 0))


def gamma_from_matroid(m: Matroid3) -> frozenset:
    if M not in m.bases:
        perm = None
        if m.bases:
            b = sorted(m.bases)[0]
            rest = [i for i in range(1, m.n + 1) if i not in b]
            perm = {old: new for new, old in enumerate(list(b) + rest, start=1)}
        raise ChartBasisMissing(f"{fmt_triple(M)} is not a basis; relabel with {perm}", perm)
    return frozenset(m.non_bases)


# ---------------------------------------------------------------- Gamma-scheme equations


@dataclass
class GammaEquations:
    gamma: frozenset
    full: list[Polynomial]
    restricted: list[tuple[int, Polynomial]]
    relevant: dict[int, bool]

    def to_json(self) -> dict:
        return {
            "gamma": [fmt_triple(u) for u in sorted(self.gamma)],
            "full": [p.to_text() for p in self.full],
            "restricted": [{"k": k, "text": p.to_text()} for k, p in self.restricted],
            "relevant": {str(k): v for k, v in sorted(self.relevant.items())},
        }


def gamma_scheme_equations(gamma: Iterable[Triple], n: int) -> GammaEquations:
    g = frozenset(tuple(u) for u in gamma)
    if M in g:
        raise ValueError(f"{fmt_triple(M)} cannot belong to Gamma")
    gvars = {pi_var(u) for u in g}
    full = [Polynomial.var(v) for v in sorted(gvars)]
    restricted, relevant = [], {}
    for F in primary_relations(n):
        poly = _pi_polynomial(F)
        full.append(poly)
        kept = Polynomial({k: c for k, c in poly.terms.items() if not any(v in gvars for v, _ in k)})
        relevant[F.k] = not kept.is_zero()
        if relevant[F.k]:
            restricted.append((F.k, kept))
    return GammaEquations(g, full, restricted, relevant)


def _pi_polynomial(F) -> Polynomial:
    acc = Polynomial()
    for t in F.terms:
        acc = acc + Polynomial.monomial(t.sign, t.pi_monomial)
    return acc


def relevant_blocks(gamma: Iterable[Triple], n: int) -> dict[int, bool]:
    return gamma_scheme_equations(gamma, n).relevant


# ---------------------------------------------------------------- sampling


def _rand(rng: random.Random, p: int, spread: int) -> int:
    return rng.randrange(p) if p else rng.randint(-spread, spread)


def _kernel_basis(rows: list[list], p: int) -> list[list]:
    """Kernel basis over K of the row span, one vector per free column (value 1 there)."""
    one = RationalFunction.constant(1, p)
    zero = RationalFunction.constant(0, p)
    work = [list(r) for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(3):
        piv = next((i for i in range(r, len(work)) if not work[i][c].is_zero()), None)
        if piv is None:
            continue
        work[r], work[piv] = work[piv], work[r]
        inv = one / work[r][c]
        work[r] = [x * inv for x in work[r]]
        for i in range(len(work)):
            if i != r and not work[i][c].is_zero():
                f = work[i][c]
                work[i] = [a - f * b for a, b in zip(work[i], work[r])]
        pivots.append(c)
        r += 1
    free = [c for c in range(3) if c not in pivots]
    basis = []
    for f in free:
        v = [zero] * 3
        v[f] = one
        for row, c in zip(work, pivots):
            v[c] = -row[f]
        basis.append(v)
    return basis


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def realization_curve(m: Matroid3, p: int, rng: random.Random, anchor: dict[int, Sequence[int]] | None = None,
                      spread: int = 30, tries: int = 50, special: bool = False) -> list[list[RationalFunction]]:
    """Columns over K realizing m for generic t, built one column at a time.

    Columns of (123) are the identity. Column j is a K-combination of the kernel
    basis of its dependency constraints; `anchor[j]` fixes the t^0 part of the
    coefficients (the t^1 part is random), otherwise coefficients are random constants.
    With `special`, every unanchored column gets t^0 coefficients (c, 0, ..., 0), so the
    limit point sits in a degenerate stratum of the closure.
    Draws are repeated until the matroid over K is exactly m.
    """
    if M not in m.bases:
        raise ChartBasisMissing(f"{fmt_triple(M)} is not a basis", None)
    for _ in range(tries):
        try:
            rows = _curve_once(m, p, rng, anchor, spread, special)
        except NotFound:
            continue
        if curve_matroid(rows) == m:
            return rows
    raise NotFound(f"no curve realizing the matroid in {tries} tries")


def _nonzero(rng: random.Random, p: int, spread: int) -> int:
    return rng.randrange(1, p) if p else rng.choice([-1, 1]) * rng.randint(1, spread)


def _curve_once(m: Matroid3, p: int, rng: random.Random, anchor, spread: int,
                special: bool = False) -> list[list[RationalFunction]]:
    nb = set(m.non_bases)
    cols: list[list[RationalFunction]] = []
    for j in range(1, m.n + 1):
        if j <= 3:
            cols.append([RationalFunction.constant(1 if i == j - 1 else 0, p) for i in range(3)])
            continue
        rows = [_cross(cols[a - 1], cols[b - 1]) for a, b in combinations(range(1, j), 2) if (a, b, j) in nb]
        rows = [r for r in rows if any(not x.is_zero() for x in r)]
        basis = _kernel_basis(rows, p)
        if not basis:
            raise NotFound(f"column {j} is forced to vanish")
        if anchor and j in anchor:
            g = list(anchor[j])
            if len(g) != len(basis):
                raise ValueError(f"anchor for column {j} needs {len(basis)} coefficients")
            coeffs = [RationalFunction([g[i], _rand(rng, p, spread)], [1], p) for i in range(len(basis))]
        elif special:
            g = [_nonzero(rng, p, spread)] + [0] * (len(basis) - 1)
            coeffs = [RationalFunction([g[i], _rand(rng, p, spread)], [1], p) for i in range(len(basis))]
        else:
            coeffs = [RationalFunction.constant(_rand(rng, p, spread), p) for _ in basis]
        col = [RationalFunction.constant(0, p)] * 3
        for c, v in zip(coeffs, basis):
            col = [x + c * y for x, y in zip(col, v)]
        cols.append(col)
    return [[cols[j][i] for j in range(m.n)] for i in range(3)]


def curve_matroid(rows: list[list[RationalFunction]]) -> Matroid3:
    cols = _columns(rows)
    n = len(cols)
    return make_matroid(n, [u for u in combinations(range(1, n + 1), 3)
                            if not det3([cols[i - 1] for i in u]).is_zero()])


def sample_realization(m: Matroid3, p: int = 0, seed: int = 0, tries: int = 200, spread: int = 30) -> ExactMatrix:
    """A constant matrix over Q or F_p whose matroid is exactly m."""
    check_characteristic(p)
    rng = random.Random(seed)
    perm = None
    if M not in m.bases:
        b = sorted(m.bases)[0] if m.bases else None
        if b is None:
            raise NotFound("empty matroid")
        order = list(b) + [i for i in range(1, m.n + 1) if i not in b]
        perm = {old: new for new, old in enumerate(order, start=1)}
        m = make_matroid(m.n, [[perm[i] for i in u] for u in m.bases])
    for _ in range(tries):
        try:
            rows = _curve_once(m, p, rng, None, spread)
        except NotFound:
            continue
        if curve_matroid(rows) == m:
            mat = [[x.at_zero() for x in r] for r in rows]
            if perm:
                mat = [[r[perm[j] - 1] for j in range(1, m.n + 1)] for r in mat]
            return ExactMatrix.from_rows([[x.v for x in r] for r in mat], p)
    raise NotFound(f"no realization found in {tries} tries over {'Q' if not p else f'F_{p}'}")


def random_point_matrix(n: int, p: int, rng: random.Random, spread: int = 3) -> list[list[int]]:
    """[I | A] with A uniform over F_p (or small integers over Q): generic or special points of U."""
    rows = [[1 if i == j else 0 for j in range(3)] for i in range(3)]
    for r in rows:
        r.extend(_rand(rng, p, spread) for _ in range(n - 3))
    return rows


def generic_direction(source: Sequence[Sequence], m: Matroid3, p: int, rng: random.Random, tries: int = 200,
                      spread: int = 3) -> list[list[int]] | None:
    """Direction M1 such that M0 + t*M1 has matroid m over F(t); None if M0 itself realizes m."""
    n = len(source[0])
    const = [[RationalFunction.constant(_fe(x, p), p) for x in r] for r in source]
    if curve_matroid(const) == m:
        return None
    for _ in range(tries):
        d = [[_rand(rng, p, spread) for _ in range(n)] for _ in range(3)]
        rows = [[RationalFunction([_fe(a, p), b], [1], p) for a, b in zip(r, dr)] for r, dr in zip(source, d)]
        if curve_matroid(rows) == m:
            return d
    raise NotFound("no direction realizing the matroid along a line")


# ---------------------------------------------------------------- tracking


@dataclass
class TrackedPoint:
    characteristic: int
    source: list[list]
    direction: list[list] | None
    step0_chart: int
    step0_coords: dict[str, FieldElement]
    steps: list[dict] = field(default_factory=list)
    final_chart: int = -1
    values: dict[str, RationalFunction] = field(default_factory=dict)
    coords: dict[str, FieldElement] = field(default_factory=dict)
    star_b: set = field(default_factory=set)
    ell_checks: list[dict] = field(default_factory=list)
    residual_failures: list[dict] = field(default_factory=list)
    linear_system_steps: int = 0

    @property
    def zero_set(self) -> set[str]:
        return {v for v, x in self.values.items() if x.is_zero()}

    @property
    def one_set(self) -> set[str]:
        return {v for v in self.star_b if v in self.values and self.values[v] == 1}

    def to_json(self) -> dict:
        return {
            "field": "Q" if not self.characteristic else f"Fp:{self.characteristic}",
            "source": [[str(x) for x in r] for r in self.source],
            "direction": [[str(x) for x in r] for r in self.direction] if self.direction else None,
            "steps": self.steps,
            "final": {"chart": self.final_chart, "coords": {v: self.coords[v].to_json() for v in sorted(self.coords)}},
        }


def _val(x: RationalFunction) -> float:
    return x.valuation()


def _at0(x: RationalFunction) -> str:
    return x.at_zero().to_json() if _val(x) >= 0 else "inf"


def pluecker_values(rows: list[list[RationalFunction]], n: int) -> dict[Triple, RationalFunction]:
    cols = _columns(rows)
    base = det3([cols[i - 1] for i in M])
    if base.is_zero():
        raise OffChartU(f"p_{fmt_triple(M)} vanishes")
    return {u: det3([cols[i - 1] for i in u]) / base for u in combinations(range(1, n + 1), 3)}


class Tracker:
    """Follows points through a pipeline atlas."""

    def __init__(self, atlas: Atlas, gamma: Iterable[Triple] = (), seed: int = 0, check_residuals: bool = True,
                 step0: str = "random"):
        if step0 not in ("random", "leading"):
            raise ValueError(f"unknown step-0 chart policy {step0!r}")
        self.step0_policy = step0
        self.atlas = atlas
        self.gamma = frozenset(tuple(u) for u in gamma)
        self.rng = random.Random(seed)
        self.check_residuals = check_residuals
        self.step0 = {tuple(sorted(self.atlas.charts[c].one_rho.items())): c
                      for c in self.atlas.charts if self.atlas.charts[c].parent is None}
        self.relevant = relevant_blocks(self.gamma, atlas.n) if self.gamma else {}

    def track(self, source: Sequence[Sequence], p: int, direction: Sequence[Sequence] | None = None,
              prefer: int | None = None) -> TrackedPoint:
        rows = [[RationalFunction([_fe(a, p), _fe(b, p) if direction else 0], [1], p)
                 for a, b in zip(r, direction[i] if direction else r)] for i, r in enumerate(source)]
        pt = self.track_curve(rows, p, prefer)
        pt.source = [list(r) for r in source]
        pt.direction = [list(r) for r in direction] if direction else None
        return pt

    def track_curve(self, rows: Sequence[Sequence[RationalFunction]], p: int, prefer: int | None = None
                    ) -> TrackedPoint:
        """Track the limit at t = 0 of a K-valued 3 x n matrix."""
        for r in rows:
            for e in r:
                if _val(e) < 0:
                    raise ValueError("curve has a pole at t = 0")
        if det3([[rows[r][c] for r in range(3)] for c in (0, 1, 2)]).at_zero().is_zero():
            raise OffChartU(f"p_{fmt_triple(M)} vanishes at the source point")
        x = pluecker_values(rows, self.atlas.n)
        for u in self.gamma:
            if not x[u].is_zero():
                raise ValueError(f"source curve is not on the Gamma-scheme: x_{fmt_triple(u)} != 0")
        vals, chart_id = self._step0(x, p)
        start = {v: a.at_zero() for v, a in vals.items() if _val(a) >= 0}
        pt = TrackedPoint(p, [[e.at_zero().v for e in r] for r in rows], None, chart_id, start)
        chart = self.atlas.charts[chart_id]
        self._residuals(pt, chart, vals, 0)
        while chart.split is not None:
            rec = chart.split
            if rec.kind == "ell":
                chart, vals = self._ell(pt, chart, vals)
            else:
                chart, vals = self._split(pt, chart, vals, prefer)
            if chart is None:
                raise TrackingError(f"step {rec.step}: point leaves the admissible charts")
            self._residuals(pt, chart, vals, rec.step)
        pt.final_chart = chart.id
        pt.values = vals
        for v, a in vals.items():
            if _val(a) < 0:
                raise TrackingError(f"coordinate {v} has a pole at the source point")
        pt.coords = {v: a.at_zero() for v, a in vals.items()}
        self._final_residuals(pt, chart)
        return pt

    # -------------------------------------------------------- step 0

    def _step0(self, x: dict[Triple, RationalFunction], p: int) -> tuple[dict[str, RationalFunction], int]:
        vals = {pi_var(u): a for u, a in x.items() if u != M}
        picks: dict[int, str] = {}
        for F in self.atlas.relations:
            prods = [x[t.pair[0]] * x[t.pair[1]] for t in F.terms]
            nz = [i for i, a in enumerate(prods) if not a.is_zero()]
            if nz:
                low = min(_val(prods[i]) for i in nz)
                cands = [i for i in nz if _val(prods[i]) == low]
                if self.step0_policy == "leading" and 0 in cands:
                    i0 = 0
                else:
                    i0 = cands[self.rng.randrange(len(cands))]
                coords = [a / prods[i0] for a in prods]
            else:
                coords = self._irrelevant_point(F, p)
                i0 = next(i for i, c in enumerate(coords) if c == 1)
            picks[F.k] = F.terms[i0].rho
            for i, t in enumerate(F.terms):
                if i != i0:
                    vals[t.rho] = coords[i]
        key = tuple(sorted(picks.items()))
        if key not in self.step0:
            raise TrackingError(f"step-0 chart {key} was pruned")
        chart = self.atlas.charts[self.step0[key]]
        return {v: vals[v] for v in chart.vars}, chart.id

    def _irrelevant_point(self, F, p: int) -> list[RationalFunction]:
        # every product vanishes; take the kernel vector of L_F with the first free coordinate 1
        one, zero = RationalFunction.constant(1, p), RationalFunction.constant(0, p)
        coords = [zero] * len(F.terms)
        coords[0] = one * (-F.terms[1].sign * F.terms[0].sign)
        coords[1] = one
        return coords

    # -------------------------------------------------------- blowups

    def _split(self, pt: TrackedPoint, chart: Chart, vals: dict, prefer: int | None):
        rec = chart.split
        a0, a1 = vals[rec.y0], vals[rec.y1]
        kept = [(i, c) for i, c in enumerate(rec.children) if c["kept"]]
        if not kept:
            return None, vals
        z0, z1 = a0.is_zero(), a1.is_zero()
        if not z0 and not z1:
            low = min(_val(a0), _val(a1))
            ok = [(i, c) for i, c in kept if _val(a0 if i == 0 else a1) == low]
            if not ok:
                raise TrackingError(f"step {rec.step}: limit lies on a pruned child")
            if prefer is not None and any(i == prefer for i, _ in ok):
                i, c = next((i, c) for i, c in ok if i == prefer)
            else:
                i, c = ok[self.rng.randrange(len(ok))]
            return self._enter(pt, chart, vals, i, c, "direct")
        if z0 != z1:
            i = 1 if z0 else 0
            c = rec.children[i]
            if not c["kept"]:
                raise TrackingError(f"step {rec.step}: point lies on a pruned child")
            return self._enter(pt, chart, vals, i, c, "direct")
        order = kept if prefer is None else sorted(kept, key=lambda ic: ic[0] != prefer)
        for i, c in order:
            child = self.atlas.charts[c["child"]]
            other = rec.y1 if i == 0 else rec.y0
            sol, branch = self._linear_system(child, vals, rec, c["zeta"], other)
            if sol is None or _val(sol) < 0:
                continue
            new = {v: a for v, a in vals.items() if v not in (rec.y0, rec.y1)}
            new[c["zeta"]] = vals[rec.y0 if i == 0 else rec.y1]
            new[other] = sol
            pt.linear_system_steps += 1
            if branch == "star_b":
                pt.star_b.add(other)
            pt.star_b.discard(rec.y0 if i == 0 else rec.y1)
            pt.steps.append({"step": rec.step, "chart": child.id, "branch": branch,
                             "coords": {other: _at0(sol)}})
            return child, new
        raise TrackingError(f"step {rec.step}: linear system has no finite solution on the kept children")

    def _enter(self, pt, chart, vals, i, c, branch):
        rec = chart.split
        gen, other = (rec.y0, rec.y1) if i == 0 else (rec.y1, rec.y0)
        child = self.atlas.charts[c["child"]]
        new = {v: a for v, a in vals.items() if v not in (gen, other)}
        new[c["zeta"]] = vals[gen]
        new[other] = vals[other] / vals[gen] if not vals[other].is_zero() else vals[other]
        pt.star_b.discard(gen)
        pt.star_b.discard(other)
        pt.steps.append({"step": rec.step, "chart": child.id, "branch": branch,
                         "coords": {c["zeta"]: _at0(new[c["zeta"]]), other: _at0(new[other])}})
        return child, new

    def _linear_system(self, child: Chart, vals: dict, rec, zeta: str, other: str):
        known = {v: a for v, a in vals.items() if v not in (rec.y0, rec.y1)}
        p = next(iter(vals.values())).p
        zero = RationalFunction.constant(0, p)
        known[zeta] = zero
        coeffs = []
        for _, poly in child.relations():
            a, b = zero, zero
            for k, c in poly.terms.items():
                e = dict(k).get(other, 0)
                rest = {w: f for w, f in k if w != other}
                val = evaluate(Polynomial({tuple(sorted(rest.items())): c}), known, one=RationalFunction.constant(1, p))
                if val.is_zero():
                    continue
                if e == 0:
                    b = b + val
                elif e == 1:
                    a = a + val
                else:
                    raise TrackingError(f"relation is not linear in {other} on the center")
            coeffs.append((a, b))
        live = [(a, b) for a, b in coeffs if not a.is_zero()]
        if live:
            a, b = live[0]
            sol = -b / a
            if any(not (x * sol + y).is_zero() for x, y in coeffs):
                return None, "inconsistent"
            return sol, "star_a"
        if any(not b.is_zero() for _, b in coeffs):
            return None, "inconsistent"
        return RationalFunction.constant(1, p), "star_b"

    def _ell(self, pt: TrackedPoint, chart: Chart, vals: dict):
        rec = chart.split
        kept = rec.children[0]
        if not kept["kept"]:
            return None, vals
        info = chart.ell_record
        child = self.atlas.charts[kept["child"]]
        p = next(iter(vals.values())).p
        one = RationalFunction.constant(1, p)
        d = vals[info["delta"]]
        lam = evaluate(info["L_star"], vals, one=one)
        sgn = info["sign"]
        if not lam.is_zero():
            y = d / lam
            branch = "direct"
        elif d.is_zero():
            y = one * (-sgn)
            branch = "star_a"
        else:
            raise TrackingError(f"step {rec.step}: point is off the model (L* = 0, delta != 0)")
        new = {v: a for v, a in vals.items() if v != info["delta"]}
        new[info["lam"]] = lam
        new[info["y"]] = y
        back = lam * y
        pt.ell_checks.append({"k": info["k"], "y": _at0(y), "expected": str(-sgn),
                              "ok": y == one * (-sgn), "inverse_ok": back == d})
        pt.steps.append({"step": rec.step, "chart": child.id, "branch": f"ell:{branch}",
                         "coords": {info["y"]: _at0(y), info["lam"]: _at0(lam)}})
        return child, new

    # -------------------------------------------------------- checks

    def _residuals(self, pt: TrackedPoint, chart: Chart, vals: dict, step: int) -> None:
        if not self.check_residuals:
            return
        one = RationalFunction.constant(1, next(iter(vals.values())).p)
        for name, poly in chart.relations():
            if not evaluate(poly, vals, one=one).is_zero():
                pt.residual_failures.append({"step": step, "chart": chart.id, "relation": name})

    def _final_residuals(self, pt: TrackedPoint, chart: Chart) -> None:
        one = FieldElement(1, pt.characteristic)
        for name, poly in chart.relations():
            if not evaluate(poly, pt.coords, one=one).is_zero():
                pt.residual_failures.append({"step": "final", "chart": chart.id, "relation": name})


def _fe(x, p: int):
    if isinstance(x, FieldElement):
        return x.v
    if isinstance(x, str):
        x = Fraction(x)
    return x % p if p and isinstance(x, int) else x


def gamma_samples(m: Matroid3, p: int, rng: random.Random, count: int, special_every: int = 0,
                  spread: int = 5) -> list[tuple[bool, list[list[RationalFunction]]]]:
    """Curves realizing m; every `special_every`-th one (if nonzero) has a degenerate limit."""
    out = []
    for i in range(count):
        special = bool(special_every) and i % special_every == 0
        out.append((special, realization_curve(m, p, rng, spread=spread, special=special)))
    return out


def track_point(atlas: Atlas, source, p: int = 0, direction=None, gamma: Iterable[Triple] = (), seed: int = 0,
                prefer: int | None = None) -> TrackedPoint:
    return Tracker(atlas, gamma, seed).track(source, p, direction, prefer)


@dataclass
class GammaSets:
    chart: int
    zero: set
    one: set
    flagged: set
    samples: int

    def to_json(self) -> dict:
        return {"chart": self.chart, "zero": sorted(self.zero), "one": sorted(self.one),
                "flagged": sorted(self.flagged), "samples": self.samples}


def gamma_zero_one_sets(samples: Sequence[TrackedPoint], chart: int, strict: bool = False) -> GammaSets:
    """Consensus Gamma-tilde sets on a chart; with `strict`, disagreement raises AmbiguousRank."""
    on = [s for s in samples if s.final_chart == chart]
    if not on:
        raise ValueError(f"no sample lands on chart {chart}")
    zero = set.intersection(*(s.zero_set for s in on))
    ones = [s.one_set for s in on]
    one = set.intersection(*ones)
    flagged = (set.union(*ones) - one) | (set.union(*(s.zero_set for s in on)) - zero)
    if strict and flagged:
        raise AmbiguousRank(f"chart {chart}: samples disagree on {sorted(flagged)}")
    return GammaSets(chart, zero, one, flagged, len(on))


__all__ = [
    "AmbiguousRank", "ChartBasisMissing", "GammaEquations", "GammaSets", "Matroid3", "NotFound", "OffChartU",
    "RankDeficient", "TrackedPoint", "Tracker", "TrackingError", "check_matroid", "gamma_from_matroid",
    "gamma_scheme_equations", "gamma_zero_one_sets", "make_matroid", "matroid_from_matrix", "polytope_dim",
    "gamma_samples", "generic_direction", "random_point_matrix", "realization_curve", "sample_realization", "track_point", "uniform_matroid",
]
