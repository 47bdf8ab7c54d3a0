"""Chart atlas and the theta -> (wp rounds, ell) blowup tower over U x prod P_F.

Every blowup substitution used here is a monomial map, so each chart keeps an
exact monomial pullback of every step-0 variable. Divisor identities are global
(DivisorLabel); on a chart a divisor is either represented by one variable or
does not meet the chart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping

from .pluecker_model import (
    M,
    PrimaryRelation,
    governing_binomials,
    non_governing_binomials,
    primary_relations,
    rb_sample,
    upsilon,
    var_order_key,
)
from .poly_core import (
    BinomialRelation,
    ExpKey,
    Monomial,
    Polynomial,
    fmt_triple,
    parse_triple,
    pi_var,
    rho_var,
    var_prefix,
    var_slot,
)

POLICIES = ("certificate", "conservative")
DEFAULT_MAX_ROUNDS = 64


class CenterOffChart(ValueError):
    pass


class IdenticallyZeroOnCenter(ArithmeticError):
    pass


class RoundCapExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------- monomial maps


def _exps(m: Mapping[str, int] | ExpKey) -> dict[str, int]:
    return dict(m.items()) if isinstance(m, Mapping) else dict(m)


def _key(d: Mapping[str, int]) -> ExpKey:
    return tuple(sorted((v, e) for v, e in d.items() if e))


def map_monomial(exps: ExpKey, rule: Mapping[str, ExpKey]) -> ExpKey:
    """Apply a monomial substitution var -> monomial to an exponent key."""
    if not any(v in rule for v, _ in exps):
        return exps
    out: dict[str, int] = {}
    for v, e in exps:
        img = rule.get(v)
        if img is None:
            out[v] = out.get(v, 0) + e
        else:
            for w, f in img:
                out[w] = out.get(w, 0) + f * e
    return _key(out)


def exponent(exps: ExpKey, v: str) -> int:
    for w, e in exps:
        if w == v:
            return e
    return 0


def divide_key(exps: ExpKey, v: str, e: int) -> ExpKey:
    if e == 0:
        return exps
    return _key({w: (f - e if w == v else f) for w, f in exps})


def map_polynomial(p: Polynomial, rule: Mapping[str, ExpKey]) -> Polynomial:
    acc: dict[ExpKey, int] = {}
    for k, c in p.terms.items():
        kk = map_monomial(k, rule)
        acc[kk] = acc.get(kk, 0) + c
    return Polynomial(acc)


# ---------------------------------------------------------------- divisor labels


def pi_label(u) -> str:
    return f"pi:{fmt_triple(u)}"


def rho_label(u, v) -> str:
    return "rho:" + rho_var(u, v)[2:-1]


@dataclass
class DivisorLabel:
    """Global divisor with its association multiplicities to binomial and linearized terms."""

    key: str
    kind: str  # pi | rho | exceptional | ell
    birth_step: int | None = None
    origin: tuple = ()
    mult: dict[tuple, int] = field(default_factory=dict)

    def m(self, tag: tuple) -> int:
        return self.mult.get(tag, 0)

    def to_json(self) -> dict:
        return {
            "key": self.key,
            "kind": self.kind,
            "birth_step": self.birth_step,
            "origin": list(self.origin),
            "mult": {"/".join(str(x) for x in t): v for t, v in sorted(self.mult.items(), key=str) if v},
        }


def gov_tag(k: int, tau: int, side: str) -> tuple:
    return ("gov", k, tau, side)


def rb_tag(i: int, side: str) -> tuple:
    return ("rb", i, side)


def lin_tag(k: int, s: int) -> tuple:
    return ("lin", k, s)


def update_associations(new_key: str, step: int, origin: tuple, parts: Iterable[DivisorLabel],
                        binomial_tags: Iterable[tuple[tuple, tuple]], lin_tags: Iterable[tuple]) -> DivisorLabel:
    """Exceptional divisor of a blowup along the intersection of `parts`.

    Binomial term T gets m_{phi,T} - l_{phi,B} with l the smaller of the two terms'
    sums; linearized terms get the plain sum.
    """
    parts = list(parts)
    mult: dict[tuple, int] = {}
    for tp, tm in binomial_tags:
        mp = sum(p.m(tp) for p in parts)
        mm = sum(p.m(tm) for p in parts)
        low = min(mp, mm)
        if mp - low:
            mult[tp] = mp - low
        if mm - low:
            mult[tm] = mm - low
    for t in lin_tags:
        s = sum(p.m(t) for p in parts)
        if s:
            mult[t] = s
    return DivisorLabel(new_key, "exceptional", step, origin, mult)


# ---------------------------------------------------------------- charts


@dataclass
class LinTerm:
    sign: int
    exps: ExpKey


@dataclass
class SplitRecord:
    step: int
    kind: str
    y0: str
    y1: str
    children: list[dict]


@dataclass
class Chart:
    id: int
    parent: int | None
    branch: str
    step: int
    vars: dict[str, str]
    units: dict[str, str]
    gov: dict[tuple[int, int], BinomialRelation]
    ngv: dict[tuple[int, int, int], BinomialRelation]
    lin: dict[int, list[LinTerm]]
    rb: list[BinomialRelation]
    aux: dict[str, Polynomial]
    to_root: dict[str, ExpKey]
    one_rho: dict[int, str]
    e_V: set = field(default_factory=set)
    d_V: set = field(default_factory=set)
    l_V: set = field(default_factory=set)
    theta_type: dict[int, str] = field(default_factory=dict)
    ell_done: set = field(default_factory=set)
    split: SplitRecord | None = None
    ell_record: dict | None = None
    _index: dict | None = field(default=None, repr=False, compare=False)

    def var_of(self, label: str) -> str | None:
        if self._index is None:
            self._index = {lab: v for v, lab in self.vars.items()}
        return self._index.get(label)

    def is_unit(self, v: str) -> bool:
        return v in self.units

    def lin_polynomial(self, k: int) -> Polynomial:
        acc = Polynomial()
        for t in self.lin[k]:
            acc = acc + Polynomial({t.exps: t.sign})
        return acc

    def relations(self, include_rb: bool = True, include_aux: bool = True) -> list[tuple[str, Polynomial]]:
        out = [(f"gov:{k},{t}", b.polynomial()) for (k, t), b in sorted(self.gov.items())]
        out += [(f"lin:{k}", self.lin_polynomial(k)) for k in sorted(self.lin)]
        if include_rb:
            out += [(f"rb:{b.origin[1]}", b.polynomial()) for b in self.rb]
        if include_aux:
            out += [(f"aux:{v}", p) for v, p in sorted(self.aux.items())]
        return out

    @property
    def preferred(self) -> bool:
        return all(t in ("one", "rho") for t in self.theta_type.values())

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "parent": self.parent,
            "branch": self.branch,
            "e_V": sorted(self.e_V),
            "d_V": sorted(self.d_V),
            "l_V": sorted(self.l_V),
            "vars": [{"name": v, "label": self.vars[v]} for v in sorted(self.vars)],
            "invertible": sorted(self.units),
            "relations": {
                "gov": [dict(b.to_json(), text=str(b)) for _, b in sorted(self.gov.items())],
                "lin": [{"k": k, "text": self.lin_polynomial(k).to_text(), "poly": self.lin_polynomial(k).to_json()}
                        for k in sorted(self.lin)],
                "rb": [dict(b.to_json(), text=str(b)) for b in self.rb],
                "aux": [{"var": v, "text": p.to_text()} for v, p in sorted(self.aux.items())],
            },
        }


def fresh_name(gen: str, step: int) -> str:
    prefix = {"x": "eps", "eps": "eps", "r": "del", "del": "del", "y": "y", "lam": "lam"}[var_prefix(gen)]
    return f"{prefix}{var_slot(gen)}@s{step}"


# ---------------------------------------------------------------- proper transforms


def proper_transform(b: BinomialRelation, rule: Mapping[str, ExpKey], zeta: str) -> BinomialRelation:
    """Pull back along a monomial substitution and divide by the common power of zeta."""
    p = map_monomial(b.plus.exps, rule)
    m = map_monomial(b.minus.exps, rule)
    low = min(exponent(p, zeta), exponent(m, zeta))
    return BinomialRelation(Monomial(b.plus.coeff, divide_key(p, zeta, low)),
                            Monomial(b.minus.coeff, divide_key(m, zeta, low)), b.origin)


def _transform_lin(terms: list[LinTerm], rule: Mapping[str, ExpKey], zeta: str, what: str) -> list[LinTerm]:
    out = [LinTerm(t.sign, map_monomial(t.exps, rule)) for t in terms]
    if out and min(exponent(t.exps, zeta) for t in out) > 0:
        raise IdenticallyZeroOnCenter(f"{what} vanishes identically on the center")
    return out


def _transform_aux(p: Polynomial, rule: Mapping[str, ExpKey], zeta: str) -> Polynomial:
    q = map_polynomial(p, rule)
    low = min((exponent(k, zeta) for k in q.terms), default=0)
    if low:
        q = Polynomial({divide_key(k, zeta, low): c for k, c in q.terms.items()})
    return q


# ---------------------------------------------------------------- unit closure and pruning


def _term_is_unit(exps: ExpKey, units: Mapping[str, str]) -> bool:
    return all(v in units for v, _ in exps)


def unit_closure(chart: Chart) -> bool:
    """Propagate invertibility through two-term relations; False if the chart misses the model."""
    pairs: list[tuple[str, ExpKey, ExpKey]] = []
    for (k, t), b in chart.gov.items():
        pairs.append((f"gov:{k},{t}", b.plus.exps, b.minus.exps))
    for b in chart.rb:
        pairs.append((f"rb:{b.origin[1]}", b.plus.exps, b.minus.exps))
    for k, terms in chart.lin.items():
        if len(terms) == 2:
            pairs.append((f"lin:{k}", terms[0].exps, terms[1].exps))
        if len(terms) == 1 and _term_is_unit(terms[0].exps, chart.units):
            return False
    for v, p in chart.aux.items():
        ks = list(p.terms)
        if len(ks) == 2:
            pairs.append((f"aux:{v}", ks[0], ks[1]))
    changed = True
    while changed:
        changed = False
        for name, a, b in pairs:
            for x, y in ((a, b), (b, a)):
                if _term_is_unit(x, chart.units):
                    for v, _ in y:
                        if v not in chart.units:
                            chart.units[v] = name
                            changed = True
    for v, p in chart.aux.items():
        if p.is_constant() and not p.is_zero():
            return False
    return True


# ---------------------------------------------------------------- atlas


@dataclass
class StepRecord:
    step: int
    kind: str  # theta | wp | ell
    address: tuple
    center: tuple[str, str]
    split_charts: int
    label: str | None

    def to_json(self) -> dict:
        return {"step": self.step, "kind": self.kind, "address": list(self.address),
                "center": list(self.center), "split_charts": self.split_charts, "label": self.label}


@dataclass
class BlowupCenter:
    plus: str
    minus: str
    address: tuple

    def __iter__(self):
        return iter((self.plus, self.minus))


@dataclass
class InvariantLog:
    square_free: list = field(default_factory=list)
    linear_or_vanish: list = field(default_factory=list)
    monotone: list = field(default_factory=list)
    multiplicity: list = field(default_factory=list)
    consistency: list = field(default_factory=list)
    checks: int = 0

    def ok(self) -> bool:
        return not (self.square_free or self.linear_or_vanish or self.monotone or self.multiplicity
                    or self.consistency)

    def to_json(self) -> dict:
        return {
            "checks": self.checks,
            "square_free_violations": self.square_free[:20],
            "linear_or_vanish_violations": self.linear_or_vanish[:20],
            "monotone_violations": self.monotone[:20],
            "multiplicity_violations": self.multiplicity[:20],
            "consistency_violations": self.consistency[:20],
        }


class Atlas:
    """All charts ever created (a tree) plus the current leaves and the global divisor labels."""

    def __init__(self, n: int, policy: str = "certificate", mode: str = "preferred",
                 with_rb: bool = True, check_invariants: bool = True):
        if policy not in POLICIES:
            raise ValueError(f"unknown center policy {policy!r}")
        if mode not in ("preferred", "full"):
            raise ValueError(f"unknown mode {mode!r}")
        self.n = n
        self.policy = policy
        self.mode = mode
        self.relations = primary_relations(n)
        self.rb_relations = rb_sample(n) if with_rb else []
        self.charts: dict[int, Chart] = {}
        self.leaves: list[int] = []
        self.labels: dict[str, DivisorLabel] = {}
        self.steps: list[StepRecord] = []
        self.step_counter = 0
        self.theta_step: dict[int, int] = {}
        self.ell_step: dict[int, int] = {}
        self.rho: dict[tuple[int, int], int] = {}
        self.sigma: dict[tuple[int, int, int], int] = {}
        self.skipped_centers: list[dict] = []
        self.ell_met: dict[int, bool] = {}
        self.block_termination: dict[int, dict] = {}
        self.log = InvariantLog()
        self.check_invariants = check_invariants
        self.dependence: list[dict] = []
        self._init_labels()
        self._init_charts()

    # ------------------------------------------------------------ setup

    def relation(self, k: int) -> PrimaryRelation:
        return self.relations[k - 1]

    def binomial_tags(self) -> list[tuple[tuple, tuple]]:
        tags = [(gov_tag(F.k, t, "+"), gov_tag(F.k, t, "-")) for F in self.relations for t in range(1, F.t_F + 1)]
        tags += [(rb_tag(b.origin[1], "+"), rb_tag(b.origin[1], "-")) for b in self.rb_relations]
        return tags

    def lin_tags(self) -> list[tuple]:
        return [lin_tag(F.k, s) for F in self.relations for s in F.S_F]

    def _init_labels(self) -> None:
        for u in (t for t in _triples(self.n) if t != M):
            self.labels[pi_label(u)] = DivisorLabel(pi_label(u), "pi")
        for F in self.relations:
            for s, t in enumerate(F.terms):
                self.labels[rho_label(*t.pair)] = DivisorLabel(rho_label(*t.pair), "rho", origin=("block", F.k))
        for b in governing_binomials(self.n):
            _, k, tau = b.origin
            for side, mono in (("+", b.plus), ("-", b.minus)):
                for v, e in mono.exps:
                    self.labels[self.label_of_step0(v)].mult[gov_tag(k, tau, side)] = e
        for b in self.rb_relations:
            i = b.origin[1]
            for side, mono in (("+", b.plus), ("-", b.minus)):
                for v, e in mono.exps:
                    self.labels[self.label_of_step0(v)].mult[rb_tag(i, side)] = e
        for F in self.relations:
            for s, t in enumerate(F.terms):
                self.labels[rho_label(*t.pair)].mult[lin_tag(F.k, s)] = 1

    @staticmethod
    def label_of_step0(v: str) -> str:
        body = var_slot(v)[1:-1]
        return ("pi:" if v.startswith("x[") else "rho:") + body

    def _new_id(self) -> int:
        return len(self.charts)

    def _init_charts(self) -> None:
        choices = [[t.rho for t in F.terms] for F in self.relations]
        pis = [pi_var(u) for u in _triples(self.n) if u != M]
        all_rho = [r for c in choices for r in c]
        gov = governing_binomials(self.n)
        ngv = non_governing_binomials(self.n)
        for pick in product(*choices) if choices else [()]:
            ones = set(pick)
            rule = {r: () for r in ones}
            vars_ = {v: self.label_of_step0(v) for v in pis}
            vars_.update({r: self.label_of_step0(r) for r in all_rho if r not in ones})
            ch = Chart(
                id=self._new_id(),
                parent=None,
                branch="step0:" + ",".join(p[2:-1] for p in pick),
                step=0,
                vars=vars_,
                units={},
                gov={(b.origin[1], b.origin[2]): proper_transform(b, rule, "") for b in gov},
                ngv={(b.origin[1], b.origin[2], b.origin[3]): proper_transform(b, rule, "") for b in ngv},
                lin={F.k: [LinTerm(t.sign, map_monomial(((t.rho, 1),), rule)) for t in F.terms]
                     for F in self.relations},
                rb=[proper_transform(b, rule, "") for b in self.rb_relations],
                aux={},
                to_root={v: ((v, 1),) for v in vars_} | {r: () for r in ones},
                one_rho={F.k: pick[i] for i, F in enumerate(self.relations)},
            )
            ch.d_V = set()
            if unit_closure(ch):
                self.charts[ch.id] = ch
                self.leaves.append(ch.id)

    # ------------------------------------------------------------ primitive blowup

    def _next_step(self) -> int:
        self.step_counter += 1
        return self.step_counter

    def blow_up(self, chart: Chart, y0: str, y1: str, step: int, kind: str,
                keep: tuple[bool, bool] = (True, True), prune_inside: bool = True) -> list[Chart]:
        """Blow up the chart along (y0, y1); returns the kept children (xi_0 = 1 first)."""
        if y0 not in chart.vars or y1 not in chart.vars:
            raise CenterOffChart(f"center ({y0}, {y1}) is not on chart {chart.id}")
        records = []
        kids: list[Chart] = []
        for idx, (gen, other) in enumerate(((y0, y1), (y1, y0))):
            zeta = fresh_name(gen, step)
            rule = {gen: ((zeta, 1),), other: _key({zeta: 1, other: 1})}
            if not keep[idx]:
                records.append({"child": None, "generator": gen, "zeta": zeta, "kept": False, "reason": "not preferred"})
                continue
            kid = self._child(chart, rule, gen, other, zeta, step, f"{kind}@s{step}:{gen}")
            feasible = kid is not None and unit_closure(kid)
            reason = "kept" if feasible else "misses the model"
            records.append({"child": kid, "generator": gen, "zeta": zeta, "kept": feasible, "reason": reason,
                            "other": other})
        # a child on which the other coordinate is a unit lies inside its sibling
        live = [r for r in records if r["kept"]]
        if len(live) == 2 and prune_inside:
            redundant = [r for r in live if r["other"] in r["child"].units]
            if len(redundant) == 2:
                redundant = [live[0]]
            for r in redundant:
                r["kept"] = False
                r["reason"] = "inside sibling"
        for r in records:
            if r["kept"]:
                kid = r["child"]
                kid.id = self._new_id()
                self.charts[kid.id] = kid
                kids.append(kid)
        chart.split = SplitRecord(step, kind, y0, y1, [
            {"child": r["child"].id if r["kept"] else None, "generator": r["generator"], "zeta": r["zeta"],
             "kept": r["kept"], "reason": r["reason"]} for r in records])
        return kids

    def _child(self, chart: Chart, rule: dict[str, ExpKey], gen: str, other: str, zeta: str,
               step: int, branch: str) -> Chart | None:
        label = f"E:s{step}"
        vars_ = {v: lab for v, lab in chart.vars.items() if v != gen}
        vars_[zeta] = label
        units = {v: r for v, r in chart.units.items() if v not in (gen, other)}
        if gen in chart.units:
            units[zeta] = chart.units[gen]
        if other in chart.units:
            units[zeta] = units[other] = chart.units[other]
        try:
            lin = {k: (terms if k in chart.ell_done else _transform_lin(terms, rule, zeta, f"L{k}"))
                   for k, terms in chart.lin.items()}
        except IdenticallyZeroOnCenter:
            raise
        kid = Chart(
            id=-1,
            parent=chart.id,
            branch=branch,
            step=step,
            vars=vars_,
            units=units,
            gov={key: proper_transform(b, rule, zeta) for key, b in chart.gov.items()},
            ngv={key: proper_transform(b, rule, zeta) for key, b in chart.ngv.items()},
            lin=lin,
            rb=[proper_transform(b, rule, zeta) for b in chart.rb],
            aux={v: _transform_aux(p, rule, zeta) for v, p in chart.aux.items()},
            to_root={v: map_monomial(img, rule) for v, img in chart.to_root.items()},
            one_rho=chart.one_rho,
            e_V=set(chart.e_V),
            d_V=set(chart.d_V),
            l_V=set(chart.l_V),
            theta_type=dict(chart.theta_type),
            ell_done=set(chart.ell_done),
        )
        slot = var_slot(gen)[1:-1]
        if var_prefix(gen) in ("x",):
            kid.e_V.add(slot)
        elif var_prefix(gen) in ("r",):
            kid.d_V.add(slot)
        return kid

    # ------------------------------------------------------------ theta

    def theta_centers(self) -> list[BlowupCenter]:
        return [BlowupCenter(pi_label(F.leading_index), rho_label(M, F.leading_index), ("theta", F.k))
                for F in self.relations]

    def theta_sequence(self) -> None:
        for center in self.theta_centers():
            k = center.address[1]
            step = self._next_step()
            self.theta_step[k] = step
            F = self.relation(k)
            new_leaves: list[int] = []
            split = 0
            for cid in self.leaves:
                ch = self.charts[cid]
                y_pi, y_rho = ch.var_of(center.plus), ch.var_of(center.minus)
                if y_rho is None:
                    ch.theta_type[k] = "one"
                    new_leaves.append(cid)
                    continue
                keep = (self.mode == "full", True)
                kids = self.blow_up(ch, y_pi, y_rho, step, "theta", keep, prune_inside=self.mode == "preferred")
                for kid in kids:
                    gen = next(r["generator"] for r in ch.split.children if r["child"] == kid.id)
                    kid.theta_type[k] = "pi" if gen == y_pi else "rho"
                split += 1
                new_leaves.extend(k.id for k in kids)
            self.leaves = new_leaves
            lab = update_associations(f"E:s{step}", step, ("theta", k),
                                      [self.labels[center.plus], self.labels[center.minus]],
                                      self.binomial_tags(), self.lin_tags())
            self.labels[lab.key] = lab
            self.steps.append(StepRecord(step, "theta", ("theta", k), (center.plus, center.minus), split, lab.key))
            if self.check_invariants:
                self._check_square_free(step)
                self._check_multiplicities(step)
        for cid in self.leaves:
            self.dependence.extend(check_theta_dependence(self, self.charts[cid]))
            self.charts[cid].ngv = {}

    # ------------------------------------------------------------ wp rounds

    def associated(self, tag: tuple) -> list[DivisorLabel]:
        return [lab for lab in self.labels.values() if lab.m(tag) > 0]

    def _plus_key(self, lab: DivisorLabel, k: int, tau: int) -> tuple:
        if lab.kind in ("exceptional", "ell"):
            return (0, -(lab.birth_step or 0))
        if lab.kind == "pi":
            return (1,)
        return (2,)

    def _minus_key(self, lab: DivisorLabel) -> tuple:
        if lab.kind in ("exceptional", "ell"):
            return (0, -(lab.birth_step or 0))
        if lab.kind == "pi":
            return (1, var_order_key(parse_triple(lab.key[3:])))
        return (2, lab.key)

    def _center_live(self, ch: Chart, plus: str, minus: str) -> bool:
        y0, y1 = ch.var_of(plus), ch.var_of(minus)
        if y0 is None or y1 is None:
            return False
        if self.policy == "certificate" and (y0 in ch.units or y1 in ch.units):
            return False
        return True

    def wp_sets(self, k: int, tau: int, mu: int) -> list[BlowupCenter]:
        lead_rho = rho_label(M, self.relation(k).leading_index)
        plus = [lab for lab in self.associated(gov_tag(k, tau, "+"))]
        minus = [lab for lab in self.associated(gov_tag(k, tau, "-")) if lab.key != lead_rho]
        cands = []
        for yp in plus:
            for ym in minus:
                if yp.key == ym.key:
                    continue
                if any(self._center_live(self.charts[c], yp.key, ym.key) for c in self.leaves):
                    cands.append(((self._plus_key(yp, k, tau), self._minus_key(ym)), yp.key, ym.key))
        cands.sort()
        return [BlowupCenter(p, m, ("wp", k, tau, mu, h + 1)) for h, (_, p, m) in enumerate(cands)]

    def _apply_center(self, center: BlowupCenter) -> int:
        step = self.step_counter + 1
        new_leaves: list[int] = []
        split = 0
        k, tau = center.address[1], center.address[2]
        for cid in self.leaves:
            ch = self.charts[cid]
            y0, y1 = ch.var_of(center.plus), ch.var_of(center.minus)
            if y0 is None or y1 is None or (self.policy == "certificate" and (y0 in ch.units or y1 in ch.units)):
                new_leaves.append(cid)
                continue
            kids = self.blow_up(ch, y0, y1, step, "wp")
            split += 1
            new_leaves.extend(kid.id for kid in kids)
            if self.check_invariants:
                self._check_step_local(ch, kids, k, tau)
        if not split:
            self.skipped_centers.append({"address": list(center.address), "center": [center.plus, center.minus]})
            return 0
        self.step_counter = step
        self.leaves = new_leaves
        lab = update_associations(f"E:s{step}", step, center.address,
                                  [self.labels[center.plus], self.labels[center.minus]],
                                  self.binomial_tags(), self.lin_tags())
        self.labels[lab.key] = lab
        self.steps.append(StepRecord(step, "wp", center.address, (center.plus, center.minus), split, lab.key))
        if self.check_invariants:
            self._check_square_free(step)
            self._check_multiplicities(step)
        return split

    def wp_block(self, k: int, max_rounds: int = DEFAULT_MAX_ROUNDS) -> None:
        F = self.relation(k)
        for tau in range(1, F.t_F + 1):
            mu = 0
            while True:
                centers = self.wp_sets(k, tau, mu + 1)
                if not centers:
                    break
                mu += 1
                if mu > max_rounds:
                    raise RoundCapExceeded(f"block {k}, tau {tau}: more than {max_rounds} rounds")
                count = 0
                for c in centers:
                    count += 1 if self._apply_center(c) else 0
                self.sigma[(k, tau, mu)] = count
            self.rho[(k, tau)] = mu

    # ------------------------------------------------------------ ell

    def ell_step_block(self, k: int) -> None:
        F = self.relation(k)
        step = self._next_step()
        self.ell_step[k] = step
        theta_label = f"E:s{self.theta_step[k]}"
        sgn = F.terms[F.s_F].sign
        lam_name = f"lam[{fmt_triple(M)}|{fmt_triple(F.leading_index)}]@s{step}"
        y_name = f"y[{fmt_triple(M)}|{fmt_triple(F.leading_index)}]"
        met = 0
        new_leaves: list[int] = []
        for cid in self.leaves:
            ch = self.charts[cid]
            delta = ch.var_of(theta_label)
            if delta is None or delta in ch.units:
                new_leaves.append(cid)
                continue
            kid = self._ell_child(ch, k, delta, lam_name, y_name, sgn, step)
            if kid is None or not unit_closure(kid):
                ch.split = SplitRecord(step, "ell", delta, "L", [{"child": None, "kept": False}])
                continue
            kid.id = self._new_id()
            self.charts[kid.id] = kid
            ch.split = SplitRecord(step, "ell", delta, "L", [{"child": kid.id, "generator": "L", "zeta": lam_name,
                                                                "kept": True, "reason": "kept"}])
            new_leaves.append(kid.id)
            met += 1
        self.leaves = new_leaves
        self.ell_met[k] = met > 0
        theta_lab = self.labels[theta_label]
        lab = DivisorLabel(f"ell:{k}", "ell", step, ("ell", k), dict(theta_lab.mult))
        self.labels[lab.key] = lab
        self.steps.append(StepRecord(step, "ell", ("ell", k), (f"L:{k}", theta_label), met, lab.key))

    def _ell_child(self, ch: Chart, k: int, delta: str, lam: str, y: str, sgn: int, step: int) -> Chart | None:
        terms = ch.lin[k]
        lead = terms[0]
        if lead.exps != ((delta, 1),) or lead.sign != sgn:
            raise IdenticallyZeroOnCenter(f"chart {ch.id}: leading term of L{k} is {lead} not {delta}")
        rest = Polynomial()
        for t in terms[1:]:
            if exponent(t.exps, delta):
                raise IdenticallyZeroOnCenter(f"chart {ch.id}: L{k} has {delta} outside its leading term")
            rest = rest + Polynomial({t.exps: t.sign})
        rule = {delta: _key({lam: 1, y: 1})}
        vars_ = {v: lab for v, lab in ch.vars.items() if v != delta}
        vars_[y] = ch.vars[delta]
        vars_[lam] = f"ell:{k}"
        units = dict(ch.units)
        units[y] = f"lin:{k}"
        aux = {v: _transform_aux(p, rule, lam) for v, p in ch.aux.items()}
        aux[lam] = Polynomial.var(lam) - rest
        lin = dict(ch.lin)
        lin[k] = [LinTerm(sgn, ((y, 1),)), LinTerm(1, ())]
        kid = Chart(
            id=-1,
            parent=ch.id,
            branch=f"ell@s{step}",
            step=step,
            vars=vars_,
            units=units,
            gov={key: proper_transform(b, rule, lam) for key, b in ch.gov.items()},
            ngv={},
            lin={j: (t if j == k or j in ch.ell_done else [LinTerm(x.sign, map_monomial(x.exps, rule)) for x in t])
                 for j, t in lin.items()},
            rb=[proper_transform(b, rule, lam) for b in ch.rb],
            aux=aux,
            to_root={v: map_monomial(img, rule) for v, img in ch.to_root.items()},
            one_rho=ch.one_rho,
            e_V=set(ch.e_V),
            d_V=set(ch.d_V),
            l_V=set(ch.l_V) | {k},
            theta_type=dict(ch.theta_type),
            ell_done=set(ch.ell_done) | {k},
        )
        ch.ell_record = {"step": step, "k": k, "delta": delta, "lam": lam, "y": y, "sign": sgn,
                         "L_star": rest}
        return kid

    # ------------------------------------------------------------ invariants

    def _check_square_free(self, step: int) -> None:
        for cid in self.leaves:
            ch = self.charts[cid]
            for key, b in ch.gov.items():
                self.log.checks += 1
                if any(e > 1 for _, e in b.plus.exps):
                    self.log.square_free.append({"step": step, "chart": cid, "B": list(key), "plus": str(b.plus)})

    def _check_multiplicities(self, step: int) -> None:
        for cid in self.leaves:
            ch = self.charts[cid]
            for v, lab_key in ch.vars.items():
                lab = self.labels.get(lab_key)
                if lab is None:
                    continue
                for (k, tau), b in ch.gov.items():
                    for side, mono in (("+", b.plus), ("-", b.minus)):
                        self.log.checks += 1
                        if exponent(mono.exps, v) != lab.m(gov_tag(k, tau, side)):
                            self.log.multiplicity.append({"step": step, "chart": cid, "var": v, "label": lab_key,
                                                          "term": [k, tau, side]})

    def _check_step_local(self, parent: Chart, kids: list[Chart], k: int, tau: int) -> None:
        split = parent.split
        b0 = parent.gov[(k, tau)]
        d0 = (_deg(b0.plus.exps), _deg(b0.minus.exps))
        for kid in kids:
            rec = next(r for r in split.children if r["child"] == kid.id)
            zeta, gen = rec["zeta"], rec["generator"]
            other = split.y1 if gen == split.y0 else split.y0
            b1 = kid.gov[(k, tau)]
            d1 = (_deg(b1.plus.exps), _deg(b1.minus.exps))
            self.log.checks += 1
            if not ((d1[0] < d0[0] and d1[1] <= d0[1]) or (d1[1] < d0[1] and d1[0] <= d0[0])):
                self.log.monotone.append({"chart": kid.id, "B": [k, tau], "before": d0, "after": d1})
            for b in list(kid.gov.values()) + kid.rb:
                for mono in (b.plus, b.minus):
                    e = exponent(mono.exps, other)
                    self.log.checks += 1
                    if e > 1 and not exponent(mono.exps, zeta):
                        self.log.linear_or_vanish.append({"chart": kid.id, "B": list(b.origin), "var": other})

    def check_consistency(self) -> list[dict]:
        """Pullback of every step-0 binomial equals a monomial times its chart transform."""
        bad = []
        gov0 = {(b.origin[1], b.origin[2]): b for b in governing_binomials(self.n)}
        for cid in self.leaves:
            ch = self.charts[cid]
            pairs = [(gov0[key], ch.gov[key]) for key in ch.gov]
            pairs += list(zip(self.rb_relations, ch.rb))
            for b0, b in pairs:
                p = map_monomial(b0.plus.exps, ch.to_root)
                m = map_monomial(b0.minus.exps, ch.to_root)
                fp = _quotient(p, b.plus.exps)
                fm = _quotient(m, b.minus.exps)
                self.log.checks += 1
                if fp is None or fp != fm:
                    bad.append({"chart": cid, "B": list(b.origin)})
        self.log.consistency.extend(bad)
        return bad

    def terminated(self, ch: Chart, k: int) -> dict[tuple[int, int], bool]:
        """Per governing binomial of blocks <= k: does one term consist of units only?"""
        return {key: _term_is_unit(b.plus.exps, ch.units) or _term_is_unit(b.minus.exps, ch.units)
                for key, b in ch.gov.items() if key[0] <= k}

    # ------------------------------------------------------------ reporting

    def census(self) -> dict:
        leaves = [self.charts[c] for c in self.leaves]
        return {"total": len(self.charts), "leaves": len(leaves), "admissible": len(leaves),
                "preferred": sum(1 for c in leaves if c.preferred)}

    def report(self) -> dict:
        counts = {"theta": len(self.theta_step), "wp_steps": sum(1 for s in self.steps if s.kind == "wp"),
                  "ell": len(self.ell_step)}
        return {
            "n": self.n,
            "policy": self.policy,
            "mode": self.mode,
            "counts": counts,
            "rho": {f"({k},{t})": v for (k, t), v in sorted(self.rho.items())},
            "sigma": {f"({k},{t}){mu}": v for (k, t, mu), v in sorted(self.sigma.items())},
            "charts": self.census(),
            "ell_met": {str(k): v for k, v in sorted(self.ell_met.items())},
            "termination": {str(k): v for k, v in sorted(self.block_termination.items())},
            "skipped_centers": len(self.skipped_centers),
            "invariants": self.log.to_json(),
            "invariants_ok": self.log.ok(),
            "steps": [s.to_json() for s in self.steps],
        }

    def chart_dump(self, leaves_only: bool = True) -> list[dict]:
        ids = self.leaves if leaves_only else sorted(self.charts)
        return [self.charts[c].to_json() for c in ids]


def _triples(n: int):
    from itertools import combinations

    return list(combinations(range(1, n + 1), 3))


def _deg(exps: ExpKey) -> int:
    return sum(e for _, e in exps)


def _quotient(big: ExpKey, small: ExpKey) -> ExpKey | None:
    d = dict(big)
    for v, e in small:
        if d.get(v, 0) < e:
            return None
        d[v] -= e
    return _key(d)


# ---------------------------------------------------------------- theta dependence


def check_theta_dependence(atlas: Atlas, ch: Chart) -> list[dict]:
    """Non-governing binomials versus the stated combination of governing transforms.

    rho-type chart (or x_(m,u_k) = 1): B_(s,t) = x_(u_s,v_s) B_(sF,t) - x_(u_t,v_t) B_(sF,s);
    pi-type chart: B_(s,t) = x_{u_t} x_{v_t} B_(sF,s) - x_{u_s} x_{v_s} B_(sF,t),
    with B_(sF,t) oriented as the wp-binomial of the pair (s_F, t).
    """
    out = []
    for (k, s, t), ngv in sorted(ch.ngv.items()):
        kind = ch.theta_type.get(k, "one")
        bs, bt = ch.gov[(k, s)], ch.gov[(k, t)]
        if kind in ("one", "rho"):
            # wp orientation of (s_F, t) is minus the governing binomial
            rs = _lin_coeff(ch, k, s)
            rt = _lin_coeff(ch, k, t)
            rhs = rs * (-bt.polynomial()) - rt * (-bs.polynomial())
        else:
            ps = Polynomial({bs.minus.exps: 1})
            pt = Polynomial({bt.minus.exps: 1})
            xi = ch.var_of(rho_label(M, atlas.relation(k).leading_index))
            ps = _drop_var(ps, xi)
            pt = _drop_var(pt, xi)
            rhs = pt * bs.polynomial() - ps * bt.polynomial()
        lhs = ngv.polynomial()
        ok = lhs == rhs
        out.append({"chart": ch.id, "k": k, "s": s, "t": t, "chart_type": kind, "ok": ok,
                    "sign": 1 if ok else (-1 if lhs == -rhs else 0)})
    return out


def _lin_coeff(ch: Chart, k: int, s: int) -> Polynomial:
    return Polynomial({ch.lin[k][s].exps: 1})


def _drop_var(p: Polynomial, v: str | None) -> Polynomial:
    if v is None:
        return p
    return Polynomial({tuple((w, e) for w, e in k if w != v): c for k, c in p.terms.items()})


# ---------------------------------------------------------------- pipeline


def theta_centers(n: int) -> list[BlowupCenter]:
    return [BlowupCenter(pi_label(F.leading_index), rho_label(M, F.leading_index), ("theta", F.k))
            for F in primary_relations(n)] if n >= 4 else []


def theta_sequence(n: int, mode: str = "preferred", with_rb: bool = True) -> Atlas:
    atlas = Atlas(n, mode=mode, with_rb=with_rb)
    atlas.theta_sequence()
    return atlas


def wp_sets(atlas: Atlas, k: int, tau: int, mu: int) -> list[BlowupCenter]:
    return atlas.wp_sets(k, tau, mu)


def run_pipeline(n: int, policy: str = "certificate", max_rounds: int = DEFAULT_MAX_ROUNDS,
                 with_rb: bool = True, check_invariants: bool = True) -> Atlas:
    atlas = Atlas(n, policy=policy, with_rb=with_rb, check_invariants=check_invariants)
    atlas.theta_sequence()
    for F in atlas.relations:
        atlas.wp_block(F.k, max_rounds)
        atlas.block_termination[F.k] = _termination_summary(atlas, F.k)
        atlas.ell_step_block(F.k)
    if check_invariants:
        atlas.check_consistency()
    return atlas


def _termination_summary(atlas: Atlas, k: int) -> dict:
    total = unit = 0
    for cid in atlas.leaves:
        for _, ok in atlas.terminated(atlas.charts[cid], k).items():
            total += 1
            unit += ok
    return {"binomial_chart_pairs": total, "unit_term": unit}


__all__ = [
    "Atlas", "BlowupCenter", "Chart", "DivisorLabel", "CenterOffChart", "IdenticallyZeroOnCenter",
    "RoundCapExceeded", "proper_transform", "run_pipeline", "theta_centers", "theta_sequence",
    "update_associations", "wp_sets", "upsilon",
]
