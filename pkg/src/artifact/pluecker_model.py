"""Step-0 combinatorics on the chart p_123 = 1 of Gr(3, n).

Index sets and sign normalization, the primary Pluecker relations in their
total order, the monomial map phi, the binomial families living in its kernel,
linearized relations, and a bounded kernel oracle with classification.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, combinations_with_replacement, product
from math import comb
from typing import Iterable, Mapping, Sequence

from .poly_core import (
    BinomialRelation,
    Monomial,
    Polynomial,
    Triple,
    fmt_triple,
    parse_variable,
    pi_var,
    rho_var,
    substitute,
)

M: Triple = (1, 2, 3)
MAX_KERNEL_BOUND = 3


class OutOfRange(ValueError):
    pass


class NTooSmall(ValueError):
    pass


class NotAStepZeroPolynomial(ValueError):
    pass


class BoundTooLarge(ValueError):
    pass


class NotInKernel(ValueError):
    pass


# ---------------------------------------------------------------- indices


@dataclass(frozen=True)
class PlueckerIndex:
    """Sorted triple with the parity sign of the sorting permutation; triple None is the zero symbol."""

    triple: Triple | None
    sign: int

    @property
    def is_zero(self) -> bool:
        return self.triple is None

    def __str__(self) -> str:
        if self.triple is None:
            return "0"
        return ("-" if self.sign < 0 else "+") + fmt_triple(self.triple)


def normalize_index(raw: Sequence[int], n: int | None = None) -> PlueckerIndex:
    raw = tuple(int(i) for i in raw)
    if len(raw) != 3:
        raise OutOfRange(f"expected a triple, got {raw}")
    for i in raw:
        if i < 1 or (n is not None and i > n):
            raise OutOfRange(f"index {i} outside [1, {n}]")
    if len(set(raw)) < 3:
        return PlueckerIndex(None, 0)
    inversions = sum(1 for a, b in combinations(raw, 2) if a > b)
    return PlueckerIndex(tuple(sorted(raw)), -1 if inversions % 2 else 1)  # type: ignore[arg-type]


def permute_index(u: Sequence[int], perm: Mapping[int, int] | Sequence[int]) -> PlueckerIndex:
    """Image of p_u under the relabeling i -> perm(i); a sequence perm is read 1-based."""
    if not isinstance(perm, Mapping):
        perm = {i + 1: int(j) for i, j in enumerate(perm)}
    return normalize_index([perm[i] for i in u])


def upsilon(n: int) -> int:
    return comb(n, 3) - 1 - 3 * (n - 3)


def index_rank(u: Triple) -> int:
    """-2 for m itself, -1 for 12u/13u/23u, 0 for iuv, 1 for abc."""
    return 1 - sum(1 for i in u if i in M)


def var_order_key(u: Triple) -> tuple:
    return (index_rank(u), tuple(i for i in u if i not in M), tuple(i for i in u if i in M))


def all_triples(n: int) -> list[Triple]:
    return [t for t in combinations(range(1, n + 1), 3)]


def pi_triples(n: int) -> list[Triple]:
    return [t for t in all_triples(n) if t != M]


def lt_indices(n: int) -> list[Triple]:
    """Leading indices (iuv) and (abc), in relation order."""
    return sorted((u for u in all_triples(n) if index_rank(u) >= 0), key=var_order_key)


# ---------------------------------------------------------------- primary relations


def _pair_key(pair: tuple[Triple, Triple]) -> tuple:
    return tuple(var_order_key(u) for u in pair)


def _ordered_pair(u: Triple, v: Triple) -> tuple[Triple, Triple]:
    return (u, v) if var_order_key(u) <= var_order_key(v) else (v, u)


def pi_of(u: Triple) -> Polynomial:
    return Polynomial.const(1) if u == M else Polynomial.var(pi_var(u))


def pi_factors(pair: tuple[Triple, Triple]) -> dict[str, int]:
    out: dict[str, int] = {}
    for u in pair:
        if u != M:
            out[pi_var(u)] = out.get(pi_var(u), 0) + 1
    return out


@dataclass(frozen=True)
class Term:
    """sgn(s) x_{u_s} x_{v_s} as a signed index pair, ordered by the variable order."""

    sign: int
    pair: tuple[Triple, Triple]

    @property
    def rho(self) -> str:
        return rho_var(*self.pair)

    @property
    def pi_monomial(self) -> dict[str, int]:
        return pi_factors(self.pair)


@dataclass(frozen=True)
class PrimaryRelation:
    """F with leading term first, then the governed terms in governing order (tau = 1..t_F)."""

    k: int
    leading_index: Triple
    terms: tuple[Term, ...]

    @property
    def leading(self) -> str:
        return pi_var(self.leading_index)

    @property
    def leading_rho(self) -> str:
        return rho_var(M, self.leading_index)

    @property
    def rank(self) -> int:
        return index_rank(self.leading_index)

    @property
    def t_F(self) -> int:
        return len(self.terms) - 1

    @property
    def s_F(self) -> int:
        return 0

    @property
    def S_F(self) -> range:
        return range(len(self.terms))

    @property
    def polynomial(self) -> Polynomial:
        acc = Polynomial()
        for t in self.terms:
            acc = acc + Polynomial.monomial(t.sign, t.pi_monomial)
        return acc

    @property
    def linearized(self) -> Polynomial:
        acc = Polynomial()
        for t in self.terms:
            acc = acc + Polynomial.monomial(t.sign, {t.rho: 1})
        return acc

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "leading": self.leading,
            "rank": self.rank,
            "t_F": self.t_F,
            "terms": [{"sign": t.sign, "pair": [fmt_triple(u) for u in t.pair]} for t in self.terms],
            "poly": self.polynomial.to_json(),
            "text": self.polynomial.to_text(),
        }


def _raw_terms(u: Triple) -> list[tuple[int, Triple, Triple]]:
    if index_rank(u) == 0:
        i, a, b = u
        p, q = [s for s in ((1, 2), (1, 3), (2, 3)) if i in s]
        return [
            (1, M, u),
            (-1, tuple(sorted(p + (a,))), tuple(sorted(q + (b,)))),
            (1, tuple(sorted(q + (a,))), tuple(sorted(p + (b,)))),
        ]
    a, b, c = u
    return [
        (1, M, u),
        (-1, (1, 2, a), (3, b, c)),
        (1, (1, 3, a), (2, b, c)),
        (-1, (2, 3, a), (1, b, c)),
    ]


@lru_cache(maxsize=None)
def _primary(n: int) -> tuple[PrimaryRelation, ...]:
    out = []
    for k, u in enumerate(lt_indices(n), start=1):
        raw = _raw_terms(u)
        lead = Term(raw[0][0], _ordered_pair(raw[0][1], raw[0][2]))
        rest = sorted((Term(s, _ordered_pair(a, b)) for s, a, b in raw[1:]), key=lambda t: _pair_key(t.pair))
        out.append(PrimaryRelation(k, u, (lead, *rest)))
    return tuple(out)


def primary_relations(n: int) -> list[PrimaryRelation]:
    if n < 4:
        raise NTooSmall(f"n = {n}; need n >= 4")
    return list(_primary(n))


@lru_cache(maxsize=None)
def rho_blocks(n: int) -> dict[str, int]:
    """rho-variable name -> position k of the relation whose projective space it coordinatizes."""
    return {t.rho: F.k for F in _primary(n) for t in F.terms}


@lru_cache(maxsize=None)
def rho_pairs(n: int) -> dict[str, tuple[Triple, Triple]]:
    return {t.rho: t.pair for F in _primary(n) for t in F.terms}


def infer_n(names: Iterable[str]) -> int:
    top = 4
    for name in names:
        for u in parse_variable(name).payload:
            top = max(top, *u)
    return top


# ---------------------------------------------------------------- phi


def phi(p: Polynomial) -> Polynomial:
    rule: dict[str, Polynomial] = {}
    for v in p.variables():
        vid = parse_variable(v)
        if vid.birth_step is not None or vid.kind not in ("pi", "rho"):
            raise NotAStepZeroPolynomial(f"{v} is not a step-0 variable")
        if vid.kind == "rho":
            a, b = vid.payload
            rule[v] = pi_of(a) * pi_of(b)
        elif vid.payload[0] == M:
            rule[v] = Polynomial.const(1)
    return substitute(p, rule)


def _phi_counter(exps: Mapping[str, int], pairs: Mapping[str, tuple[Triple, Triple]]) -> Counter:
    out: Counter = Counter()
    for v, e in exps.items():
        if v in pairs:
            for u in pairs[v]:
                if u != M:
                    out[pi_var(u)] += e
        else:
            out[v] += e
    return out


# ---------------------------------------------------------------- binomial families


def _mono(exps: Mapping[str, int]) -> Monomial:
    return Monomial.from_map(1, exps)


def _merge(*maps: Mapping[str, int]) -> dict[str, int]:
    out: dict[str, int] = {}
    for m in maps:
        for v, e in m.items():
            out[v] = out.get(v, 0) + e
    return out


def governing_binomials(n: int) -> list[BinomialRelation]:
    out = []
    for F in primary_relations(n):
        for tau in range(1, F.t_F + 1):
            t = F.terms[tau]
            plus = _mono(_merge({t.rho: 1}, {F.leading: 1}))
            minus = _mono(_merge({F.leading_rho: 1}, t.pi_monomial))
            out.append(BinomialRelation(plus, minus, ("governing", F.k, tau)))
    return out


def _pair_binomial(F: PrimaryRelation, s: int, t: int, tag: str) -> BinomialRelation:
    ts, tt = F.terms[s], F.terms[t]
    plus = _mono(_merge({ts.rho: 1}, tt.pi_monomial))
    minus = _mono(_merge({tt.rho: 1}, ts.pi_monomial))
    return BinomialRelation(plus, minus, (tag, F.k, s, t))


def non_governing_binomials(n: int) -> list[BinomialRelation]:
    return [
        _pair_binomial(F, s, t, "non_governing")
        for F in primary_relations(n)
        for s, t in combinations(range(1, F.t_F + 1), 2)
    ]


def wp_binomials(n: int) -> list[BinomialRelation]:
    return [_pair_binomial(F, s, t, "wp") for F in primary_relations(n) for s, t in combinations(F.S_F, 2)]


def linearized_relations(n: int) -> list[Polynomial]:
    return [F.linearized for F in primary_relations(n)]


def check_hpl_identity(F: PrimaryRelation, parts: Sequence[Polynomial]) -> list[tuple[int, int, bool]]:
    """For f = sum sgn(s) f_s, test x_(u_t,v_t) f_s - x_(u_s,v_s) f_t in ker phi for all s < t."""
    if len(parts) != len(F.terms):
        raise ValueError(f"expected {len(F.terms)} parts, got {len(parts)}")
    out = []
    for s, t in combinations(F.S_F, 2):
        g = Polynomial.var(F.terms[t].rho) * parts[s] - Polynomial.var(F.terms[s].rho) * parts[t]
        out.append((s, t, phi(g).is_zero()))
    return out


# ---------------------------------------------------------------- kernel oracle


def _multidegree(exps: Mapping[str, int], blocks: Mapping[str, int]) -> tuple:
    deg: Counter = Counter()
    for v, e in exps.items():
        if v in blocks:
            deg[blocks[v]] += e
    return tuple(sorted(deg.items()))


def _orient(a: dict[str, int], b: dict[str, int], origin: tuple) -> BinomialRelation:
    ma, mb = _mono(a), _mono(b)
    if ma.exps < mb.exps:
        ma, mb = mb, ma
    return BinomialRelation(ma, mb, origin)


def _check_bounds(pi_bound: int, rho_bound: int, cap: int) -> None:
    if pi_bound < 0 or rho_bound < 0:
        raise ValueError("bounds must be nonnegative")
    if pi_bound > cap or rho_bound > cap:
        raise BoundTooLarge(f"bounds ({pi_bound}, {rho_bound}) exceed cap {cap}")


def _sort_binomials(bs: Iterable[BinomialRelation]) -> list[BinomialRelation]:
    return sorted(bs, key=lambda b: (rho_degree(b), b.plus.exps, b.minus.exps))


def kernel_binomials_bruteforce(
    n: int, pi_degree_bound: int, rho_degree_bound: int, cap: int = MAX_KERNEL_BOUND
) -> list[BinomialRelation]:
    """All coprime multi-homogeneous m - m' with phi(m) = phi(m') inside the bounds (naive enumeration)."""
    _check_bounds(pi_degree_bound, rho_degree_bound, cap)
    pairs = rho_pairs(n)
    blocks = rho_blocks(n)
    pis = [pi_var(u) for u in pi_triples(n)]
    rhos = sorted(pairs)
    pi_monos = [Counter(c) for d in range(pi_degree_bound + 1) for c in combinations_with_replacement(pis, d)]
    rho_monos = [Counter(c) for d in range(1, rho_degree_bound + 1) for c in combinations_with_replacement(rhos, d)]
    buckets: dict[tuple, list[dict[str, int]]] = defaultdict(list)
    for P, R in product(pi_monos, rho_monos):
        m = dict(P + R)
        key = (_multidegree(R, blocks), tuple(sorted(_phi_counter(m, pairs).items())))
        buckets[key].append(m)
    out = []
    for group in buckets.values():
        for a, b in combinations(group, 2):
            if a.keys().isdisjoint(b.keys()):
                out.append(_orient(a, b, ("kernel",)))
    return _sort_binomials(out)


def kernel_binomials_by_pairing(
    n: int, pi_degree_bound: int, rho_degree_bound: int, rho_linear_only: bool = False
) -> list[BinomialRelation]:
    """Same set as the naive oracle, built from pairs of rho-parts with coprime pi-cofactors."""
    pairs = rho_pairs(n)
    blocks = rho_blocks(n)
    by_block: dict[int, list[str]] = defaultdict(list)
    for v in sorted(pairs):
        by_block[blocks[v]].append(v)
    classes: dict[tuple, list[Counter]] = defaultdict(list)
    if rho_linear_only:
        ks = sorted(by_block)
        for d in range(1, rho_degree_bound + 1):
            for chosen in combinations(ks, d):
                for pick in product(*(by_block[k] for k in chosen)):
                    classes[tuple((k, 1) for k in chosen)].append(Counter(pick))
    else:
        rhos = sorted(pairs)
        for d in range(1, rho_degree_bound + 1):
            for c in combinations_with_replacement(rhos, d):
                R = Counter(c)
                classes[_multidegree(R, blocks)].append(R)
    out = []
    for group in classes.values():
        images = [_phi_counter(R, pairs) for R in group]
        for i, j in combinations(range(len(group)), 2):
            R, S = group[i], group[j]
            if not R.keys().isdisjoint(S.keys()):
                continue
            g = images[i] & images[j]
            P = images[j] - g
            Q = images[i] - g
            if sum(P.values()) > pi_degree_bound or sum(Q.values()) > pi_degree_bound:
                continue
            out.append(_orient(dict(P + R), dict(Q + S), ("kernel",)))
    return _sort_binomials(out)


# ---------------------------------------------------------------- classification


def rho_degree(b: BinomialRelation) -> int:
    return sum(e for v, e in b.plus.exps if v.startswith("r["))


@dataclass(frozen=True)
class BinomialClass:
    wp_reducible: bool
    b_irreducible_at_low_degree: bool | str
    rho_linear: bool
    phi_square_free: bool
    rb_candidate: bool | str
    rho_degree: int = 0
    is_wp_binomial: bool = False
    root: bool = False
    coprime: bool = True
    no_abc_factor: bool = True
    no_leading_split: bool = True

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _divides(small: Mapping[str, int], big: Mapping[str, int]) -> bool:
    return all(big.get(v, 0) >= e for v, e in small.items())


def _minus(big: Mapping[str, int], small: Mapping[str, int]) -> dict[str, int]:
    out = dict(big)
    for v, e in small.items():
        out[v] -= e
        if not out[v]:
            del out[v]
    return out


def _divisors(m: Mapping[str, int]) -> list[dict[str, int]]:
    items = sorted(m.items())
    out = []
    for es in product(*(range(e + 1) for _, e in items)):
        out.append({v: e for (v, _), e in zip(items, es) if e})
    return out


class _Context:
    def __init__(self, n: int):
        self.n = n
        self.pairs = rho_pairs(n)
        self.blocks = rho_blocks(n)
        self.block_vars: dict[int, list[str]] = defaultdict(list)
        for v in sorted(self.pairs):
            self.block_vars[self.blocks[v]].append(v)

    def phi_of(self, v: str) -> dict[str, int]:
        return pi_factors(self.pairs[v])

    def lifts_available(self, pi_part: Mapping[str, int], need: list[int]) -> bool:
        """Can disjoint factors x_u x_v with (u,v) in the given blocks be split off pi_part?"""
        if not need:
            return True
        k, rest = need[0], need[1:]
        for v in self.block_vars[k]:
            f = self.phi_of(v)
            if _divides(f, pi_part) and self.lifts_available(_minus(pi_part, f), rest):
                return True
        return False

    def liftable(self, a: Mapping[str, int], b: Mapping[str, int]) -> bool:
        """Is a - b a (partial) descendant of a multi-homogeneous binomial?"""
        da = dict(_multidegree(a, self.blocks))
        db = dict(_multidegree(b, self.blocks))
        need_a: list[int] = []
        need_b: list[int] = []
        for k in set(da) | set(db):
            d = db.get(k, 0) - da.get(k, 0)
            (need_a if d > 0 else need_b).extend([k] * abs(d))
        pa = {v: e for v, e in a.items() if v not in self.pairs}
        pb = {v: e for v, e in b.items() if v not in self.pairs}
        return self.lifts_available(pa, sorted(need_a)) and self.lifts_available(pb, sorted(need_b))


def _wp_reducible(ctx: _Context, m: Mapping[str, int], mp: Mapping[str, int]) -> bool:
    for vars_ in ctx.block_vars.values():
        for P, Q in product(vars_, repeat=2):
            if P == Q:
                continue
            lhs = _merge({P: 1}, ctx.phi_of(Q))
            if (_divides(lhs, m) and mp.get(Q, 0)) or (_divides(lhs, mp) and m.get(Q, 0)):
                return True
    return False


def _is_root(ctx: _Context, m: Mapping[str, int], mp: Mapping[str, int]) -> bool:
    for vars_ in ctx.block_vars.values():
        left = any(_divides(ctx.phi_of(v), m) for v in vars_)
        right = any(_divides(ctx.phi_of(v), mp) for v in vars_)
        if left and right:
            return False
    return True


def _b_reducible(ctx: _Context, m: Mapping[str, int], mp: Mapping[str, int], budget: int) -> bool | None:
    """Search for a b-reducible decomposition; None when the search budget is exhausted."""
    dm, dmp = _divisors(m), _divisors(mp)
    if len(dm) * len(dmp) > budget:
        return None
    by_image: dict[tuple, list[dict[str, int]]] = defaultdict(list)
    for d in dmp:
        if d and d != dict(mp):
            by_image[tuple(sorted(_phi_counter(d, ctx.pairs).items()))].append(d)
    for d in dm:
        if not d or d == dict(m):
            continue
        for dp in by_image.get(tuple(sorted(_phi_counter(d, ctx.pairs).items())), ()):
            if ctx.liftable(d, dp) and ctx.liftable(_minus(m, d), _minus(mp, dp)):
                return True
    return False


def classify_binomial(b: BinomialRelation, n: int | None = None, budget: int = 200_000) -> BinomialClass:
    names = b.variables()
    for v in names:
        vid = parse_variable(v)
        if vid.birth_step is not None or vid.kind not in ("pi", "rho"):
            raise NotInKernel(f"{v} is not a step-0 variable")
    n = n or infer_n(names)
    ctx = _Context(n)
    m, mp = dict(b.plus.exps), dict(b.minus.exps)
    if b.plus.coeff != b.minus.coeff or b.plus.coeff == 0:
        raise NotInKernel("coefficients differ")
    if _phi_counter(m, ctx.pairs) != _phi_counter(mp, ctx.pairs):
        raise NotInKernel("phi images differ")
    if _multidegree(m, ctx.blocks) != _multidegree(mp, ctx.blocks):
        raise NotInKernel("not multi-homogeneous")
    if m == mp:
        raise NotInKernel("zero binomial")

    md = dict(_multidegree(m, ctx.blocks))
    rho_linear = all(d <= 1 for d in md.values())
    image = _phi_counter(m, ctx.pairs)
    sq_free = all(e == 1 for e in image.values())
    coprime = set(m).isdisjoint(mp)
    wp_red = _wp_reducible(ctx, m, mp)
    root = _is_root(ctx, m, mp)
    red = _b_reducible(ctx, m, mp, budget)
    b_irr: bool | str = "undecided" if red is None else (not red)
    wp_set = {(x.plus.exps, x.minus.exps) for x in wp_binomials(n)}
    is_wp = (b.plus.exps, b.minus.exps) in wp_set or (b.minus.exps, b.plus.exps) in wp_set
    abc = [u for u in pi_triples(n) if index_rank(u) == 1]
    no_abc = not any(m.get(pi_var(u)) or mp.get(pi_var(u)) or m.get(rho_var(M, u)) or mp.get(rho_var(M, u)) for u in abc)
    iuv = [u for u in pi_triples(n) if index_rank(u) == 0]
    mm = _merge(m, mp)
    no_split = not any(mm.get(pi_var(u)) and mm.get(rho_var(M, u)) for u in iuv)
    if b_irr == "undecided":
        rb: bool | str = "undecided" if (root and not wp_red) else False
    else:
        rb = bool(root and b_irr and not wp_red)
    return BinomialClass(
        wp_reducible=wp_red,
        b_irreducible_at_low_degree=b_irr,
        rho_linear=rho_linear,
        phi_square_free=sq_free,
        rb_candidate=rb,
        rho_degree=sum(md.values()),
        is_wp_binomial=is_wp,
        root=root,
        coprime=coprime,
        no_abc_factor=no_abc,
        no_leading_split=no_split,
    )


def rb_sample(n: int, pi_degree_bound: int = 2, rho_degree_bound: int = 3) -> list[BinomialRelation]:
    """rb-binomials within the bounds; rho-linear by construction since every rb-binomial is."""
    out = []
    for b in kernel_binomials_by_pairing(n, pi_degree_bound, rho_degree_bound, rho_linear_only=True):
        if rho_degree(b) < 2:
            continue
        if classify_binomial(b, n).rb_candidate is True:
            out.append(BinomialRelation(b.plus, b.minus, ("rb", len(out) + 1)))
    return out


# ---------------------------------------------------------------- families and document


@dataclass
class RelationFamilies:
    n: int
    primary: list[PrimaryRelation]
    governing: list[BinomialRelation]
    non_governing: list[BinomialRelation]
    wp: list[BinomialRelation]
    linearized: list[Polynomial]
    rb: list[BinomialRelation] = field(default_factory=list)

    def block(self, k: int) -> tuple[list[BinomialRelation], Polynomial]:
        return [b for b in self.governing if b.origin[1] == k], self.linearized[k - 1]


def relation_families(n: int, rb_bounds: tuple[int, int] | None = (2, 3)) -> RelationFamilies:
    return RelationFamilies(
        n=n,
        primary=primary_relations(n),
        governing=governing_binomials(n),
        non_governing=non_governing_binomials(n),
        wp=wp_binomials(n),
        linearized=linearized_relations(n),
        rb=rb_sample(n, *rb_bounds) if rb_bounds else [],
    )


def relations_document(n: int, rb_bounds: tuple[int, int] | None = (2, 3)) -> dict:
    fam = relation_families(n, rb_bounds)

    def bino(b: BinomialRelation) -> dict:
        d = b.to_json()
        d["text"] = str(b)
        return d

    return {
        "n": n,
        "upsilon": upsilon(n),
        "primary": [F.to_json() for F in fam.primary],
        "governing": [bino(b) for b in fam.governing],
        "non_governing": [bino(b) for b in fam.non_governing],
        "linearized": [{"k": i + 1, "poly": L.to_json(), "text": L.to_text()} for i, L in enumerate(fam.linearized)],
        "rb_sample": [bino(b) for b in fam.rb],
    }
