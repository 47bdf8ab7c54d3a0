"""Exact field arithmetic over the rationals and prime fields, plus exact rank."""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence


class ZeroInverse(ZeroDivisionError):
    pass


class BadModulus(ValueError):
    pass


class ZeroDenominator(ZeroDivisionError):
    pass


_PRIME_CACHE: dict[int, bool] = {}


def is_prime(p: int) -> bool:
    if p in _PRIME_CACHE:
        return _PRIME_CACHE[p]
    ok = p >= 2
    d = 2
    while ok and d * d <= p:
        if p % d == 0:
            ok = False
        d += 1
    _PRIME_CACHE[p] = ok
    return ok


def check_characteristic(p: int) -> None:
    if p != 0 and not is_prime(p):
        raise BadModulus(f"characteristic {p} is neither 0 nor prime")


class FieldElement:
    """Element of Q (characteristic 0) or F_p; immutable."""

    __slots__ = ("p", "v")

    def __init__(self, value, p: int = 0):
        if p < 0:
            raise BadModulus(f"negative characteristic {p}")
        if p == 0:
            v = value if isinstance(value, Fraction) else Fraction(value)
        else:
            check_characteristic(p)
            if isinstance(value, Fraction):
                if value.denominator % p == 0:
                    raise ZeroDenominator(f"denominator divisible by {p}")
                v = value.numerator * pow(value.denominator, -1, p) % p
            else:
                v = int(value) % p
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    @classmethod
    def _raw(cls, v, p: int) -> "FieldElement":
        e = object.__new__(cls)
        object.__setattr__(e, "p", p)
        object.__setattr__(e, "v", v)
        return e

    def __setattr__(self, name, value):
        raise AttributeError("FieldElement is immutable")

    def __reduce__(self):
        return (FieldElement._raw, (self.v, self.p))

    @property
    def characteristic(self) -> int:
        return self.p

    @property
    def numerator(self) -> int:
        return self.v.numerator if self.p == 0 else self.v

    @property
    def denominator(self) -> int:
        return self.v.denominator if self.p == 0 else 1

    def _coerce(self, other) -> "FieldElement":
        if isinstance(other, FieldElement):
            if other.p != self.p:
                raise BadModulus(f"mixed characteristics {self.p} and {other.p}")
            return other
        if isinstance(other, (int, Fraction)):
            return FieldElement(other, self.p)
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if self.p:
            return FieldElement._raw((self.v + o.v) % self.p, self.p)
        return FieldElement._raw(self.v + o.v, 0)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if self.p:
            return FieldElement._raw((self.v - o.v) % self.p, self.p)
        return FieldElement._raw(self.v - o.v, 0)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o - self

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if self.p:
            return FieldElement._raw(self.v * o.v % self.p, self.p)
        return FieldElement._raw(self.v * o.v, 0)

    __rmul__ = __mul__

    def __neg__(self):
        if self.p:
            return FieldElement._raw(-self.v % self.p, self.p)
        return FieldElement._raw(-self.v, 0)

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self * field_inverse(o)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o * field_inverse(self)

    def __pow__(self, e: int):
        if e < 0:
            return field_inverse(self) ** (-e)
        if self.p:
            return FieldElement._raw(pow(self.v, e, self.p), self.p)
        return FieldElement._raw(self.v**e, 0)

    def is_zero(self) -> bool:
        return self.v == 0

    def __bool__(self) -> bool:
        return self.v != 0

    def __eq__(self, other) -> bool:
        if isinstance(other, FieldElement):
            return self.p == other.p and self.v == other.v
        if isinstance(other, (int, Fraction)):
            try:
                return self.v == FieldElement(other, self.p).v
            except ZeroDenominator:
                return False
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.p, self.v))

    def __repr__(self) -> str:
        if self.p:
            return f"{self.v} (mod {self.p})"
        return str(self.v)

    def to_json(self) -> str:
        return str(self.v)


def field_inverse(a: FieldElement) -> FieldElement:
    check_characteristic(a.p)
    if a.v == 0:
        raise ZeroInverse("inverse of zero")
    if a.p:
        return FieldElement._raw(pow(a.v, -1, a.p), a.p)
    return FieldElement._raw(1 / a.v, 0)


def normalize_rational(n: int, d: int) -> FieldElement:
    if d == 0:
        raise ZeroDenominator("zero denominator")
    return FieldElement(Fraction(n, d), 0)


def element(value, p: int = 0) -> FieldElement:
    if isinstance(value, FieldElement):
        if value.p != p:
            if value.p == 0:
                return FieldElement(value.v, p)
            raise BadModulus(f"cannot move an element of F_{value.p} to characteristic {p}")
        return value
    return FieldElement(value, p)


class ExactMatrix:
    """Dense row-major matrix over a single exact field."""

    __slots__ = ("rows", "cols", "entries", "characteristic")

    def __init__(self, rows: int, cols: int, entries: Sequence[Sequence], characteristic: int = 0):
        check_characteristic(characteristic)
        grid = tuple(tuple(element(x, characteristic) for x in row) for row in entries)
        if len(grid) != rows or any(len(r) != cols for r in grid):
            raise ValueError(f"entry grid does not match shape {rows}x{cols}")
        self.rows = rows
        self.cols = cols
        self.entries = grid
        self.characteristic = characteristic

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], characteristic: int = 0, cols: int | None = None) -> "ExactMatrix":
        rows = [list(r) for r in rows]
        ncols = cols if cols is not None else (len(rows[0]) if rows else 0)
        return cls(len(rows), ncols, rows, characteristic)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def reduce_mod(self, p: int) -> "ExactMatrix":
        if self.characteristic != 0:
            raise BadModulus("only rational matrices can be reduced")
        return ExactMatrix(self.rows, self.cols, [[FieldElement(x.v, p) for x in r] for r in self.entries], p)

    def to_lists(self) -> list[list[str]]:
        return [[x.to_json() for x in r] for r in self.entries]


def row_echelon_pivots(m: ExactMatrix) -> list[tuple[int, int]]:
    """Pivot positions (original row, column) of a pivoted Gaussian elimination."""
    p = m.characteristic
    work = [[x.v for x in row] for row in m.entries]
    row_ids = list(range(m.rows))
    pivots: list[tuple[int, int]] = []
    r = 0
    for c in range(m.cols):
        if r >= m.rows:
            break
        piv = next((i for i in range(r, m.rows) if work[i][c] != 0), None)
        if piv is None:
            continue
        work[r], work[piv] = work[piv], work[r]
        row_ids[r], row_ids[piv] = row_ids[piv], row_ids[r]
        inv = pow(work[r][c], -1, p) if p else 1 / work[r][c]
        for i in range(r + 1, m.rows):
            f = work[i][c]
            if f == 0:
                continue
            f = f * inv
            ri, rr = work[i], work[r]
            if p:
                for j in range(c, m.cols):
                    ri[j] = (ri[j] - f * rr[j]) % p
            else:
                for j in range(c, m.cols):
                    ri[j] = ri[j] - f * rr[j]
        pivots.append((row_ids[r], c))
        r += 1
    return pivots


def matrix_rank(m: ExactMatrix) -> int:
    return len(row_echelon_pivots(m))


def determinant(rows: Sequence[Sequence[FieldElement]]) -> FieldElement:
    """Determinant of a square matrix by elimination."""
    n = len(rows)
    if n == 0:
        return FieldElement(1)
    p = rows[0][0].p
    work = [[x.v for x in r] for r in rows]
    det = Fraction(1) if p == 0 else 1
    for c in range(n):
        piv = next((i for i in range(c, n) if work[i][c] != 0), None)
        if piv is None:
            return FieldElement(0, p)
        if piv != c:
            work[c], work[piv] = work[piv], work[c]
            det = -det
        det = det * work[c][c]
        inv = pow(work[c][c], -1, p) if p else 1 / work[c][c]
        for i in range(c + 1, n):
            f = work[i][c] * inv
            if f:
                for j in range(c, n):
                    work[i][j] = work[i][j] - f * work[c][j]
                    if p:
                        work[i][j] %= p
    return FieldElement(det, p)


# Univariate rational functions in a curve parameter t, used to track points
# along curves through special points and read off limits at t = 0.

def _strip(a: list) -> list:
    while a and a[-1] == 0:
        a.pop()
    return a


def _pmul(a: list, b: list, p: int) -> list:
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    if p:
        out = [x % p for x in out]
    return _strip(out)


def _padd(a: list, b: list, p: int, sign: int = 1) -> list:
    n = max(len(a), len(b))
    out = []
    for i in range(n):
        x = (a[i] if i < len(a) else 0) + sign * (b[i] if i < len(b) else 0)
        out.append(x % p if p else x)
    return _strip(out)


def _inv(x, p: int):
    return pow(x, -1, p) if p else 1 / Fraction(x)


def _pdivmod(a: list, b: list, p: int) -> tuple[list, list]:
    a = list(a)
    q = [0] * max(len(a) - len(b) + 1, 0)
    lead_inv = _inv(b[-1], p)
    while len(a) >= len(b) and a:
        shift = len(a) - len(b)
        f = a[-1] * lead_inv
        if p:
            f %= p
        q[shift] = f
        for i, y in enumerate(b):
            a[i + shift] -= f * y
            if p:
                a[i + shift] %= p
        _strip(a)
    return _strip(q), a


def _pmonic(a: list, p: int) -> tuple[list, object]:
    lead = a[-1]
    inv = _inv(lead, p)
    return [(x * inv) % p if p else x * inv for x in a], lead


def _pgcd(a: list, b: list, p: int) -> list:
    while b:
        _, r = _pdivmod(a, b, p)
        a, b = b, r
    return _pmonic(a, p)[0] if a else []


class RationalFunction:
    """Element of F(t) for F = Q or F_p, kept as reduced num/den with monic den."""

    __slots__ = ("p", "num", "den")

    def __init__(self, num: Iterable, den: Iterable = (1,), p: int = 0, _reduced: bool = False):
        conv = (lambda x: x % p) if p else (lambda x: Fraction(x))
        n = _strip([conv(x.v if isinstance(x, FieldElement) else x) for x in num])
        d = _strip([conv(x.v if isinstance(x, FieldElement) else x) for x in den])
        if not d:
            raise ZeroDenominator("zero denominator polynomial")
        self.p = p
        if not n:
            self.num, self.den = (), (conv(1),)
            return
        if not _reduced:
            g = _pgcd(n, d, p)
            if len(g) > 1:
                n = _pdivmod(n, g, p)[0]
                d = _pdivmod(d, g, p)[0]
        d, lead = _pmonic(d, p)
        inv = _inv(lead, p)
        n = [(x * inv) % p if p else x * inv for x in n]
        self.num, self.den = tuple(n), tuple(d)

    @classmethod
    def constant(cls, c, p: int = 0) -> "RationalFunction":
        return cls([c], [1], p, _reduced=True)

    @classmethod
    def t(cls, p: int = 0) -> "RationalFunction":
        return cls([0, 1], [1], p, _reduced=True)

    def _coerce(self, other) -> "RationalFunction":
        if isinstance(other, RationalFunction):
            return other
        if isinstance(other, FieldElement):
            return RationalFunction.constant(other.v, self.p)
        return RationalFunction.constant(other, self.p)

    def __add__(self, other):
        o = self._coerce(other)
        p = self.p
        if self.den == o.den:
            return RationalFunction(_padd(list(self.num), list(o.num), p), self.den, p)
        n = _padd(_pmul(list(self.num), list(o.den), p), _pmul(list(o.num), list(self.den), p), p)
        return RationalFunction(n, _pmul(list(self.den), list(o.den), p), p)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction([-x for x in self.num], self.den, self.p, _reduced=True)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        p = self.p
        return RationalFunction(_pmul(list(self.num), list(o.num), p), _pmul(list(self.den), list(o.den), p), p)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if not o.num:
            raise ZeroInverse("division by the zero rational function")
        p = self.p
        return RationalFunction(_pmul(list(self.num), list(o.den), p), _pmul(list(self.den), list(o.num), p), p)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, e: int):
        out = RationalFunction.constant(1, self.p)
        base = self if e >= 0 else RationalFunction.constant(1, self.p) / self
        for _ in range(abs(e)):
            out = out * base
        return out

    def is_zero(self) -> bool:
        return not self.num

    def __bool__(self) -> bool:
        return bool(self.num)

    def __eq__(self, other) -> bool:
        try:
            o = self._coerce(other)
        except (BadModulus, ZeroDenominator):
            return False
        return self.p == o.p and self.num == o.num and self.den == o.den

    def __hash__(self) -> int:
        return hash((self.p, self.num, self.den))

    def valuation(self) -> float:
        """Order of vanishing at t = 0 (infinity for zero)."""
        if not self.num:
            return float("inf")

        def low(a):
            return next(i for i, x in enumerate(a) if x != 0)

        return low(self.num) - low(self.den)

    def at_zero(self) -> FieldElement:
        """Value at t = 0; requires nonnegative valuation."""
        v = self.valuation()
        if v < 0:
            raise ZeroDivisionError("pole at t = 0")
        if v > 0:
            return FieldElement(0, self.p)
        return FieldElement(self.num[0], self.p) / FieldElement(self.den[0], self.p)

    def __repr__(self) -> str:
        return f"({list(self.num)})/({list(self.den)}) [p={self.p}]"
