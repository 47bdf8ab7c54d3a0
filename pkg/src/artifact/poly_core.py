"""Sparse multivariate polynomials over named variables with integer coefficients."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

Triple = tuple[int, int, int]
ExpKey = tuple[tuple[str, int], ...]


class NotDivisible(ArithmeticError):
    pass


class MissingCoordinate(KeyError):
    pass


class ParseError(ValueError):
    pass


# ---------------------------------------------------------------- variables

KIND_PREFIX = {"pi": "x", "rho": "r", "eps": "eps", "del": "del", "ell_y": "y", "aux": "lam"}
PREFIX_KIND = {v: k for k, v in KIND_PREFIX.items()}


def fmt_triple(u: Iterable[int]) -> str:
    u = tuple(u)
    if all(0 <= i <= 9 for i in u):
        return "".join(str(i) for i in u)
    return ",".join(str(i) for i in u)


def parse_triple(s: str) -> Triple:
    parts = s.split(",") if "," in s else list(s)
    if len(parts) != 3:
        raise ParseError(f"bad triple {s!r}")
    return tuple(int(x) for x in parts)  # type: ignore[return-value]


def canonical_pair(u: Triple, v: Triple) -> tuple[Triple, Triple]:
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class VariableId:
    """Structured identity of a chart variable; `name` is the canonical text form."""

    kind: str
    payload: tuple
    birth_step: int | None = None

    def __post_init__(self):
        if self.kind not in KIND_PREFIX:
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if len(self.payload) == 2:
            object.__setattr__(self, "payload", canonical_pair(*self.payload))
        for u in self.payload:
            if list(u) != sorted(set(u)) or len(u) != 3:
                raise ValueError(f"payload triple {u} is not strictly increasing")

    @property
    def name(self) -> str:
        body = "|".join(fmt_triple(u) for u in self.payload)
        suffix = f"@s{self.birth_step}" if self.birth_step is not None else ""
        return f"{KIND_PREFIX[self.kind]}[{body}]{suffix}"

    def __str__(self) -> str:
        return self.name


_VAR_RE = re.compile(r"^(x|r|eps|del|y|lam)\[([0-9,|]+)\](?:@s(\d+))?$")


def parse_variable(name: str) -> VariableId:
    m = _VAR_RE.match(name)
    if not m:
        raise ParseError(f"bad variable name {name!r}")
    kind = PREFIX_KIND[m.group(1)]
    payload = tuple(parse_triple(s) for s in m.group(2).split("|"))
    step = int(m.group(3)) if m.group(3) else None
    return VariableId(kind, payload, step)


def pi_var(u: Iterable[int]) -> str:
    return f"x[{fmt_triple(u)}]"


def rho_var(u: Triple, v: Triple) -> str:
    a, b = canonical_pair(tuple(u), tuple(v))
    return f"r[{fmt_triple(a)}|{fmt_triple(b)}]"


def var_slot(name: str) -> str:
    """Payload part of a name, shared by all variables living in one coordinate slot."""
    return name[name.index("[") : name.index("]") + 1]


def var_prefix(name: str) -> str:
    return name[: name.index("[")]


# ---------------------------------------------------------------- monomials


def _mono_mul(a: ExpKey, b: ExpKey) -> ExpKey:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for v, e in b:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


@dataclass(frozen=True)
class Monomial:
    coeff: int
    exps: ExpKey = ()

    @classmethod
    def from_map(cls, coeff: int, exps: Mapping[str, int]) -> "Monomial":
        return cls(coeff, tuple(sorted((v, e) for v, e in exps.items() if e)))

    def exponent(self, v: str) -> int:
        for w, e in self.exps:
            if w == v:
                return e
        return 0

    def variables(self) -> list[str]:
        return [v for v, _ in self.exps]

    def degree(self) -> int:
        return sum(e for _, e in self.exps)

    def __mul__(self, other: "Monomial") -> "Monomial":
        return Monomial(self.coeff * other.coeff, _mono_mul(self.exps, other.exps))

    def to_poly(self) -> "Polynomial":
        return Polynomial({self.exps: self.coeff})

    def __str__(self) -> str:
        return self.to_poly().to_text()


def divide_by_variable_power(m: Monomial, v: str, e: int) -> Monomial:
    if e < 0:
        raise ValueError("negative exponent")
    if e == 0:
        return m
    have = m.exponent(v)
    if have < e:
        raise NotDivisible(f"{v}^{e} does not divide the monomial")
    exps = tuple((w, x - e if w == v else x) for w, x in m.exps if not (w == v and x == e))
    return Monomial(m.coeff, exps)


def is_square_free(m: Monomial) -> bool:
    return all(e == 1 for _, e in m.exps)


# ---------------------------------------------------------------- polynomials


class Polynomial:
    """Immutable sparse polynomial: map from exponent key to nonzero integer coefficient."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[ExpKey, int] | None = None):
        self.terms: dict[ExpKey, int] = {k: c for k, c in (terms or {}).items() if c != 0}
        self._hash = None

    # constructors
    @classmethod
    def const(cls, c: int) -> "Polynomial":
        return cls({(): c})

    @classmethod
    def var(cls, name: str, exp: int = 1) -> "Polynomial":
        return cls({((name, exp),): 1})

    @classmethod
    def monomial(cls, coeff: int, exps: Mapping[str, int]) -> "Polynomial":
        return cls({tuple(sorted((v, e) for v, e in exps.items() if e)): coeff})

    # structure
    def is_zero(self) -> bool:
        return not self.terms

    def monomials(self) -> list[Monomial]:
        return [Monomial(c, k) for k, c in sorted(self.terms.items())]

    def variables(self) -> set[str]:
        return {v for k in self.terms for v, _ in k}

    def degree_in(self, v: str) -> int:
        return max((dict(k).get(v, 0) for k in self.terms), default=0)

    def total_degree(self) -> int:
        return max((sum(e for _, e in k) for k in self.terms), default=0)

    def constant_term(self) -> int:
        return self.terms.get((), 0)

    def is_constant(self) -> bool:
        return all(k == () for k in self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    # arithmetic
    def __add__(self, other) -> "Polynomial":
        o = _as_poly(other)
        out = dict(self.terms)
        for k, c in o.terms.items():
            out[k] = out.get(k, 0) + c
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({k: -c for k, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "Polynomial":
        return _as_poly(other) - self

    def __mul__(self, other) -> "Polynomial":
        o = _as_poly(other)
        out: dict[ExpKey, int] = {}
        for k1, c1 in self.terms.items():
            for k2, c2 in o.terms.items():
                k = _mono_mul(k1, k2)
                out[k] = out.get(k, 0) + c1 * c2
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, e: int) -> "Polynomial":
        if e < 0:
            raise ValueError("negative power")
        out = Polynomial.const(1)
        base = self
        while e:
            if e & 1:
                out = out * base
            base = base * base
            e >>= 1
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, int):
            other = Polynomial.const(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    # text form
    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for k, c in sorted(self.terms.items()):
            body = "*".join(v if e == 1 else f"{v}^{e}" for v, e in k)
            mag = abs(c)
            if not body:
                t = str(mag)
            elif mag == 1:
                t = body
            else:
                t = f"{mag}*{body}"
            parts.append(("-" if c < 0 else "+", t))
        head = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        return head + "".join(f" {s} {t}" for s, t in parts[1:])

    __str__ = to_text

    def __repr__(self) -> str:
        return f"Polynomial({self.to_text()!r})"

    def to_json(self) -> list[dict]:
        return [
            {"coeff": str(c), "vars": [[v, e] for v, e in k]}
            for k, c in sorted(self.terms.items())
        ]

    @classmethod
    def from_json(cls, data: list[dict]) -> "Polynomial":
        out: dict[ExpKey, int] = {}
        for t in data:
            k = tuple(sorted((v, int(e)) for v, e in t["vars"]))
            out[k] = out.get(k, 0) + int(t["coeff"])
        return cls(out)


def _as_poly(x) -> Polynomial:
    if isinstance(x, Polynomial):
        return x
    if isinstance(x, int):
        return Polynomial.const(x)
    if isinstance(x, Monomial):
        return x.to_poly()
    raise TypeError(f"cannot treat {type(x).__name__} as a polynomial")


def parse_polynomial(text: str) -> Polynomial:
    """Parse the text produced by Polynomial.to_text."""
    s = text.strip()
    if s == "0":
        return Polynomial()
    tokens: list[tuple[str, str]] = []
    sign = "+"
    buf = ""
    depth = 0
    for ch in s:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch in "+-" and depth == 0:
            if buf.strip():
                tokens.append((sign, buf.strip()))
                buf = ""
            sign = ch
            continue
        buf += ch
    if buf.strip():
        tokens.append((sign, buf.strip()))
    out: dict[ExpKey, int] = {}
    for sg, body in tokens:
        coeff = 1
        exps: dict[str, int] = {}
        for factor in body.split("*"):
            factor = factor.strip()
            if not factor:
                raise ParseError(f"empty factor in {text!r}")
            if factor.isdigit():
                coeff *= int(factor)
                continue
            if "^" in factor:
                v, e = factor.rsplit("^", 1)
                exp = int(e)
            else:
                v, exp = factor, 1
            parse_variable(v)
            exps[v] = exps.get(v, 0) + exp
        k = tuple(sorted(exps.items()))
        out[k] = out.get(k, 0) + (coeff if sg == "+" else -coeff)
    return Polynomial(out)


# ---------------------------------------------------------------- operations


def substitute(p: Polynomial, rule: Mapping[str, Polynomial]) -> Polynomial:
    """Ring homomorphism sending each mapped variable to its image; others fixed."""
    if not rule or not (p.variables() & rule.keys()):
        return p
    cache: dict[tuple[str, int], Polynomial] = {}
    acc: dict[ExpKey, int] = {}
    for k, c in p.terms.items():
        fixed: list[tuple[str, int]] = []
        term = None
        for v, e in k:
            if v in rule:
                img = cache.get((v, e))
                if img is None:
                    img = rule[v] ** e
                    cache[(v, e)] = img
                term = img if term is None else term * img
            else:
                fixed.append((v, e))
        base = Polynomial({tuple(fixed): c})
        full = base if term is None else base * term
        for kk, cc in full.terms.items():
            acc[kk] = acc.get(kk, 0) + cc
    return Polynomial(acc)


def rename(p: Polynomial, mapping: Mapping[str, str]) -> Polynomial:
    acc: dict[ExpKey, int] = {}
    for k, c in p.terms.items():
        d: dict[str, int] = {}
        for v, e in k:
            w = mapping.get(v, v)
            d[w] = d.get(w, 0) + e
        kk = tuple(sorted(d.items()))
        acc[kk] = acc.get(kk, 0) + c
    return Polynomial(acc)


def partial_derivative(p: Polynomial, v: str) -> Polynomial:
    acc: dict[ExpKey, int] = {}
    for k, c in p.terms.items():
        e = dict(k).get(v, 0)
        if e == 0:
            continue
        kk = tuple((w, x - 1 if w == v else x) for w, x in k if not (w == v and x == 1))
        acc[kk] = acc.get(kk, 0) + c * e
    return Polynomial(acc)


def evaluate(p: Polynomial, point: Mapping[str, object], one=None):
    """Exact value of p at a point whose values support + and * (FieldElement etc.)."""
    total = None
    for k, c in p.terms.items():
        val = None
        for v, e in k:
            try:
                x = point[v]
            except KeyError as exc:
                raise MissingCoordinate(v) from exc
            xe = x if e == 1 else x**e
            val = xe if val is None else val * xe
        if val is None:
            val = c if one is None else one * c
        elif c != 1:
            val = val * c
        total = val if total is None else total + val
    if total is None:
        if one is None:
            some = next(iter(point.values()), None)
            return some * 0 if some is not None else 0
        return one * 0
    if isinstance(total, int) and one is not None:
        return one * total
    return total


def divide_poly_by_variable_power(p: Polynomial, v: str, e: int) -> Polynomial:
    return Polynomial({divide_by_variable_power(Monomial(c, k), v, e).exps: c for k, c in p.terms.items()})


def min_exponent(p: Polynomial, v: str) -> int:
    return min((dict(k).get(v, 0) for k in p.terms), default=0)


# ---------------------------------------------------------------- binomials


@dataclass(frozen=True)
class BinomialRelation:
    """plus - minus, with a provenance tag such as ("governing", k, tau)."""

    plus: Monomial
    minus: Monomial
    origin: tuple = ()

    def polynomial(self) -> Polynomial:
        return self.plus.to_poly() - self.minus.to_poly()

    def variables(self) -> set[str]:
        return set(self.plus.variables()) | set(self.minus.variables())

    def map_terms(self, f: Callable[[Monomial], Monomial]) -> "BinomialRelation":
        return BinomialRelation(f(self.plus), f(self.minus), self.origin)

    def __str__(self) -> str:
        return self.polynomial().to_text()

    def to_json(self) -> dict:
        return {
            "origin": list(self.origin),
            "plus": self.plus.to_poly().to_json(),
            "minus": self.minus.to_poly().to_json(),
        }
