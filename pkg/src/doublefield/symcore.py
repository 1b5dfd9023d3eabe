"""Exact rational functions of the distinguished coordinates.

A :class:`ScalarExpr` is a quotient of two multivariate polynomials with
rational coefficients over the ``2m`` coordinates ``x1..xm, xt1..xtm``.
Values are kept in a canonical form: numerator and denominator coprime and
the leading coefficient of the denominator (degrevlex order) equal to one,
so structural equality coincides with equality of functions.

Polynomial arithmetic and gcds are delegated to ``python-flint``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

import flint
import numpy as np

DEFAULT_MAX_DEGREE = 32


class SymcoreError(ValueError):
    """Base class for scalar-algebra errors."""


class ParseError(SymcoreError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnknownCoordinateError(ParseError):
    pass


class ZeroDivisionExprError(SymcoreError, ZeroDivisionError):
    pass


class PoleError(SymcoreError):
    pass


class DegreeOverflowError(SymcoreError):
    pass


@dataclass(frozen=True)
class CoordSystem:
    """Distinguished coordinates ``(x^1..x^m, x~_1..x~_m)`` of a double manifold.

    Index ``i`` of the base block pairs with index ``i`` of the tilde block;
    internally coordinates are numbered ``0..2m-1`` in that order.
    """

    m: int
    names: tuple[str, ...] = ()
    max_degree: int = DEFAULT_MAX_DEGREE
    _ctx: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 1:
            raise SymcoreError("half-dimension m must be >= 1")
        names = tuple(self.names) or tuple(
            [f"x{i}" for i in range(1, self.m + 1)] + [f"xt{i}" for i in range(1, self.m + 1)]
        )
        if len(names) != 2 * self.m:
            raise SymcoreError(f"expected {2 * self.m} coordinate labels, got {len(names)}")
        if len(set(names)) != len(names):
            raise SymcoreError("coordinate labels must be unique")
        for name in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name):
                raise SymcoreError(f"invalid coordinate label {name!r}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_ctx", flint.fmpq_mpoly_ctx.get(names, "degrevlex"))

    @property
    def n(self) -> int:
        return 2 * self.m

    @property
    def ctx(self):
        return self._ctx

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownCoordinateError(f"unknown coordinate {name!r}", 0) from None

    def is_tilde(self, index: int) -> bool:
        return index >= self.m

    def tilde_indices(self) -> range:
        return range(self.m, 2 * self.m)

    def base_indices(self) -> range:
        return range(self.m)

    # constructors
    def const(self, value) -> "ScalarExpr":
        q = _to_fmpq(value)
        return ScalarExpr._raw(self, self._ctx.from_dict({(0,) * self.n: q}) if q != 0 else self._ctx.from_dict({}), self._one_poly())

    def zero(self) -> "ScalarExpr":
        return ScalarExpr._raw(self, self._ctx.from_dict({}), self._one_poly())

    def one(self) -> "ScalarExpr":
        return self.const(1)

    def coord(self, which) -> "ScalarExpr":
        i = which if isinstance(which, int) else self.index(which)
        if not 0 <= i < self.n:
            raise SymcoreError(f"coordinate index {i} out of range")
        return ScalarExpr._raw(self, self._ctx.gens()[i], self._one_poly())

    def coords(self) -> list["ScalarExpr"]:
        return [self.coord(i) for i in range(self.n)]

    def parse(self, text: str) -> "ScalarExpr":
        return _Parser(text, self).parse()

    def _one_poly(self):
        return self._ctx.from_dict({(0,) * self.n: 1})


def _to_fmpq(value) -> flint.fmpq:
    if isinstance(value, flint.fmpq):
        return value
    if isinstance(value, bool):
        return flint.fmpq(int(value))
    if isinstance(value, int):
        return flint.fmpq(value)
    if isinstance(value, Rational):
        return flint.fmpq(int(value.numerator), int(value.denominator))
    if isinstance(value, str):
        f = Fraction(value)
        return flint.fmpq(f.numerator, f.denominator)
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


def _fmpq_to_fraction(q) -> Fraction:
    return Fraction(int(q.p), int(q.q))


class ScalarExpr:
    """Immutable canonical rational function on a :class:`CoordSystem`."""

    __slots__ = ("cs", "num", "den")

    def __init__(self, cs: CoordSystem, num, den=None):
        if den is None:
            den = cs._one_poly()
        if den.is_zero():
            raise ZeroDivisionExprError("denominator is identically zero")
        n, d = _canonical(num, den)
        _check_degree(cs, n, d)
        object.__setattr__(self, "cs", cs)
        object.__setattr__(self, "num", n)
        object.__setattr__(self, "den", d)

    @classmethod
    def _raw(cls, cs, num, den) -> "ScalarExpr":
        obj = object.__new__(cls)
        object.__setattr__(obj, "cs", cs)
        object.__setattr__(obj, "num", num)
        object.__setattr__(obj, "den", den)
        return obj

    def __setattr__(self, key, value):
        raise AttributeError("ScalarExpr is immutable")

    # predicates
    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_constant(self) -> bool:
        return self.num.is_constant() and self.den.is_constant()

    def is_polynomial(self) -> bool:
        return self.den.is_constant()

    def depends_on(self, index: int) -> bool:
        return self.num.degrees()[index] > 0 or self.den.degrees()[index] > 0

    def free_indices(self) -> set[int]:
        dn = self.num.degrees() if not self.num.is_zero() else (0,) * self.cs.n
        dd = self.den.degrees()
        return {i for i in range(self.cs.n) if dn[i] > 0 or dd[i] > 0}

    def total_degree(self) -> int:
        return max(_tdeg(self.num), _tdeg(self.den))

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise SymcoreError(f"{self} is not constant")
        if self.num.is_zero():
            return Fraction(0)
        return _fmpq_to_fraction(self.num.leading_coefficient() / self.den.leading_coefficient())

    # arithmetic
    def _coerce(self, other) -> "ScalarExpr | None":
        if isinstance(other, ScalarExpr):
            if other.cs is not self.cs and other.cs != self.cs:
                raise SymcoreError("operands live on different coordinate systems")
            return other
        if isinstance(other, (int, Rational, flint.fmpq)):
            return self.cs.const(other)
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if o.num.is_zero():
            return self
        if self.num.is_zero():
            return o
        if self.den == o.den:
            return _make(self.cs, self.num + o.num, self.den)
        return _make(self.cs, self.num * o.den + o.num * self.den, self.den * o.den)

    __radd__ = __add__

    def __neg__(self):
        return ScalarExpr._raw(self.cs, -self.num, self.den)

    def __pos__(self):
        return self

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if self.num.is_zero() or o.num.is_zero():
            return self.cs.zero()
        if o.is_constant() and o.den.is_one():
            c = o.num.leading_coefficient()
            return ScalarExpr._raw(self.cs, self.num * c, self.den)
        if self.is_constant() and self.den.is_one():
            c = self.num.leading_coefficient()
            return ScalarExpr._raw(self.cs, o.num * c, o.den)
        return _make(self.cs, self.num * o.num, self.den * o.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if o.num.is_zero():
            raise ZeroDivisionExprError("division by the zero rational function")
        return _make(self.cs, self.num * o.den, self.den * o.num)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o / self

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            if self.num.is_zero():
                raise ZeroDivisionExprError("negative power of zero")
            return _make(self.cs, self.den ** (-k), self.num ** (-k))
        if k == 0:
            return self.cs.one()
        return _make(self.cs, self.num**k, self.den**k)

    def inverse(self) -> "ScalarExpr":
        return self ** -1

    # comparisons
    def __eq__(self, other):
        o = self._coerce(other) if not isinstance(other, ScalarExpr) else other
        if o is None:
            return NotImplemented
        return self.num == o.num and self.den == o.den

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __hash__(self):
        return hash((str(self.num), str(self.den)))

    def __bool__(self):
        return not self.num.is_zero()

    # calculus
    def diff(self, which) -> "ScalarExpr":
        """Exact partial derivative with respect to a coordinate (index or label)."""
        i = which if isinstance(which, int) else self.cs.index(which)
        if not 0 <= i < self.cs.n:
            raise SymcoreError(f"coordinate index {i} out of range")
        if self.num.is_zero():
            return self
        if self.den.is_constant():
            return ScalarExpr._raw(self.cs, self.num.derivative(i), self.den)
        dn = self.num.derivative(i)
        dd = self.den.derivative(i)
        if dd.is_zero():
            return _make(self.cs, dn, self.den)
        return _make(self.cs, dn * self.den - self.num * dd, self.den * self.den)

    def grad(self) -> list["ScalarExpr"]:
        return [self.diff(i) for i in range(self.cs.n)]

    # evaluation
    def eval(self, point: Sequence) -> Fraction:
        """Exact value at a rational point of length ``2m``."""
        pt = _point(self.cs, point)
        d = self.den(*pt)
        if d == 0:
            raise PoleError(f"denominator of {self} vanishes at {tuple(str(p) for p in pt)}")
        return _fmpq_to_fraction(self.num(*pt) / d)

    def __call__(self, *point):
        if len(point) == 1 and not isinstance(point[0], (int, Rational, flint.fmpq)):
            point = point[0]
        return self.eval(point)

    def subs(self, values: dict) -> "ScalarExpr":
        """Substitute rational constants for some coordinates."""
        pairs = []
        for k, v in values.items():
            i = k if isinstance(k, int) else self.cs.index(k)
            pairs.append((i, _to_fmpq(v)))
        num = self.num.subs(dict(pairs)) if pairs else self.num
        den = self.den.subs(dict(pairs)) if pairs else self.den
        if den.is_zero():
            raise PoleError("substitution hits a pole")
        return _make(self.cs, num, den)

    def compose(self, exprs: Sequence["ScalarExpr"]) -> "ScalarExpr":
        """Substitute ``exprs[i]`` for coordinate ``i`` (all on a common target system)."""
        if len(exprs) != self.cs.n:
            raise SymcoreError("compose needs one expression per coordinate")
        target = exprs[0].cs
        nums = [e.num for e in exprs]
        dens = [e.den for e in exprs]
        if all(d.is_one() for d in dens):
            num = self.num.compose(*nums, ctx=target.ctx) if not self.num.is_zero() else target.ctx.from_dict({})
            den = self.den.compose(*nums, ctx=target.ctx)
            if den.is_zero():
                raise PoleError("composition hits a pole")
            return _make(target, num, den)
        # general rational substitution via Horner on terms
        return _subst_rational(self.num, exprs) / _subst_rational(self.den, exprs)

    def to_callable(self):
        """Vectorised float evaluator ``f(*coords) -> ndarray``."""
        nterms = list(self.num.terms())
        dterms = list(self.den.terms())
        return _compile_terms(nterms, dterms, self.cs.n)

    # display
    def __str__(self):
        ns = _poly_str(self.num, self.cs.names)
        if self.den.is_one():
            return ns
        ds = _poly_str(self.den, self.cs.names)
        return f"({ns})/({ds})"

    def __repr__(self):
        return f"ScalarExpr({str(self)!r})"


def _tdeg(p) -> int:
    return p.total_degree() if not p.is_zero() else 0


def _canonical(num, den):
    if num.is_zero():
        return num, den.context().from_dict({(0,) * den.context().nvars(): 1})
    if not den.is_constant():
        g = num.gcd(den)
        if not g.is_one():
            num = num / g
            den = den / g
    lc = den.leading_coefficient()
    if lc != 1:
        num = num / lc
        den = den / lc
    return num, den


def _check_degree(cs: CoordSystem, num, den):
    if _tdeg(num) > cs.max_degree or _tdeg(den) > cs.max_degree:
        raise DegreeOverflowError(
            f"total degree {max(_tdeg(num), _tdeg(den))} exceeds the limit {cs.max_degree}"
        )


def _make(cs: CoordSystem, num, den) -> ScalarExpr:
    n, d = _canonical(num, den)
    _check_degree(cs, n, d)
    return ScalarExpr._raw(cs, n, d)


def _point(cs: CoordSystem, point) -> list:
    pt = list(point)
    if len(pt) != cs.n:
        raise SymcoreError(f"point must have {cs.n} coordinates, got {len(pt)}")
    return [_to_fmpq(v) for v in pt]


def _subst_rational(poly, exprs: Sequence[ScalarExpr]) -> ScalarExpr:
    target = exprs[0].cs
    out = target.zero()
    for monom, coeff in poly.terms():
        term = target.const(coeff)
        for e, k in zip(exprs, monom):
            if k:
                term = term * e**k
        out = out + term
    return out


def _compile_terms(nterms, dterms, nvars):
    def poly_eval(terms, args):
        shape = np.broadcast(*args).shape if args else ()
        acc = np.zeros(shape, dtype=float)
        for monom, coeff in terms:
            t = np.full(shape, float(int(coeff.p)) / float(int(coeff.q)))
            for a, k in zip(args, monom):
                if k:
                    t = t * a ** int(k)
            acc = acc + t
        return acc

    def f(*args):
        if len(args) != nvars:
            raise SymcoreError(f"expected {nvars} coordinate arrays")
        args = [np.asarray(a, dtype=float) for a in args]
        num = poly_eval(nterms, args)
        den = poly_eval(dterms, args)
        if np.any(den == 0):
            raise PoleError("denominator vanishes at an evaluation node")
        return num / den

    f.denominator = lambda *args: poly_eval(dterms, [np.asarray(a, dtype=float) for a in args])
    return f


def _poly_str(poly, names) -> str:
    if poly.is_zero():
        return "0"
    parts = []
    for monom, coeff in poly.terms():
        c = _fmpq_to_fraction(coeff)
        factors = []
        for name, k in zip(names, monom):
            if k == 1:
                factors.append(name)
            elif k > 1:
                factors.append(f"{name}^{k}")
        mono = "*".join(factors)
        sign = "-" if c < 0 else "+"
        a = abs(c)
        if mono:
            body = mono if a == 1 else f"{a}*{mono}"
        else:
            body = str(a)
        parts.append((sign, body))
    first_sign, first = parts[0]
    s = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        s += f" {sign} {body}"
    return s


# --- parsing -----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


class _Parser:
    """Recursive-descent parser for the expression grammar (see README)."""

    def __init__(self, text: str, cs: CoordSystem):
        self.text = text
        self.cs = cs
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _tokenize(self, text):
        tokens = []
        i = 0
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            mt = _TOKEN.match(text, i)
            if not mt or mt.end() == i:
                raise ParseError(f"unexpected character {text[i]!r}", i, text)
            start = mt.start(mt.lastindex)
            if mt.group(1) is not None:
                tokens.append(("num", mt.group(1), start))
            elif mt.group(2) is not None:
                tokens.append(("id", mt.group(2), start))
            else:
                op = mt.group(3)
                tokens.append(("op", "^" if op == "**" else op, start))
            i = mt.end()
        tokens.append(("end", "", len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] not in ("op",):
            raise ParseError(f"expected {value!r}", tok[2], self.text)
        return tok

    def parse(self) -> ScalarExpr:
        if self.peek()[0] == "end":
            raise ParseError("empty expression", 0, self.text)
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2], self.text)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            tok = self.take()
            rhs = self.unary()
            if tok[1] == "*":
                e = e * rhs
            else:
                if rhs.is_zero():
                    raise ParseError("division by the zero polynomial", tok[2], self.text)
                e = e / rhs
        return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            e = self.unary()
            return -e if tok[1] == "-" else e
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            exp_pos = self.peek()[2]
            exponent = self.unary()
            if not exponent.is_constant() or exponent.constant_value().denominator != 1:
                raise ParseError("exponent must be an integer constant", exp_pos, self.text)
            k = int(exponent.constant_value())
            if k < 0 and base.is_zero():
                raise ParseError("negative power of zero", exp_pos, self.text)
            return base**k
        return base

    def atom(self):
        tok = self.take()
        kind, value, pos = tok
        if kind == "num":
            return self.cs.const(int(value))
        if kind == "id":
            if value not in self.cs.names:
                raise UnknownCoordinateError(f"unknown coordinate {value!r}", pos, self.text)
            return self.cs.coord(self.cs.names.index(value))
        if kind == "op" and value == "(":
            e = self.expr()
            close = self.peek()
            if close[0] != "op" or close[1] != ")":
                raise ParseError("expected ')'", close[2], self.text)
            self.take()
            return e
        if kind == "end":
            raise ParseError("unexpected end of expression", pos, self.text)
        raise ParseError(f"unexpected token {value!r}", pos, self.text)


# --- operation-level API -------------------------------------------------------

def scalar_parse(text: str, cs: CoordSystem) -> ScalarExpr:
    return cs.parse(text)


def scalar_arith(a: ScalarExpr, b: ScalarExpr, op: str) -> ScalarExpr:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise SymcoreError(f"unknown operation {op!r}")


def scalar_diff(f: ScalarExpr, coord: int) -> ScalarExpr:
    """Partial derivative; ``coord`` is 1-based (``1..m`` base, ``m+1..2m`` tilde)."""
    if not 1 <= coord <= f.cs.n:
        raise SymcoreError(f"coordinate index {coord} out of range 1..{f.cs.n}")
    return f.diff(coord - 1)


def scalar_eval(f: ScalarExpr, point: Sequence) -> Fraction:
    return f.eval(point)


def as_expr(cs: CoordSystem, value) -> ScalarExpr:
    """Coerce a number, string or ScalarExpr to a ScalarExpr on ``cs``."""
    if isinstance(value, ScalarExpr):
        return value
    if isinstance(value, str):
        return cs.parse(value)
    return cs.const(value)


def random_poly(cs: CoordSystem, rng, degree: int = 3, terms: int = 3,
                variables: Iterable[int] | None = None, coeff_range: int = 3) -> ScalarExpr:
    """Sparse random polynomial with small integer coefficients.

    ``rng`` is a :class:`random.Random`; ``variables`` restricts the support
    (e.g. base coordinates only for foliated functions).
    """
    variables = list(range(cs.n)) if variables is None else list(variables)
    data: dict[tuple[int, ...], int] = {}
    for _ in range(terms):
        deg = rng.randint(0, degree)
        exps = [0] * cs.n
        for _ in range(deg):
            if variables:
                exps[rng.choice(variables)] += 1
        c = rng.randint(-coeff_range, coeff_range)
        if c:
            key = tuple(exps)
            data[key] = data.get(key, 0) + c
    data = {k: v for k, v in data.items() if v}
    return ScalarExpr._raw(cs, cs.ctx.from_dict(data) if data else cs.ctx.from_dict({}), cs._one_poly())
