"""Sparse homogeneous polynomials with exact rational coefficients.

A :class:`Polynomial` maps exponent tuples to nonzero :class:`fractions.Fraction`
coefficients.  Conversion to float happens only when a conic program is
assembled or a polynomial is evaluated.
"""
from fractions import Fraction
from math import comb

import numpy as np

from . import _kernels

MAX_VARIABLES = 20
MAX_DEGREE = 40


class DimensionError(ValueError):
    """Operands live in different numbers of variables."""


class CapExceeded(ValueError):
    """A degree or variable-count guard was hit."""


class PolynomialSyntaxError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownVariable(ValueError):
    pass


def _check_caps(n, deg):
    if n < 1:
        raise ValueError("need at least one variable")
    if n > MAX_VARIABLES:
        raise CapExceeded(f"{n} variables exceeds the cap of {MAX_VARIABLES}")
    if deg < 0:
        raise ValueError("degree must be nonnegative")
    if deg > MAX_DEGREE:
        raise CapExceeded(f"degree {deg} exceeds the cap of {MAX_DEGREE}")


def _compositions(n, deg):
    # lexicographic, larger leading exponent first
    if n == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _compositions(n - 1, deg - first):
            yield (first,) + rest


def monomial_basis(n, deg):
    """All exponent tuples of total degree ``deg`` in ``n`` variables.

    Ordered x1-major: ``x1^deg`` comes first and ``xn^deg`` last.
    """
    _check_caps(n, deg)
    return list(_compositions(n, deg))


def basis_size(n, deg):
    return comb(n + deg - 1, n - 1)


def monomial_index(monomials, deg=None):
    """Positions of exponent tuples inside ``monomial_basis(n, deg)``."""
    arr = np.asarray(monomials, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if deg is None:
        deg = int(arr.sum(axis=1).max()) if arr.size else 0
    n = arr.shape[1]
    binom = _kernels.binomial_table(n + deg + 2)
    return _kernels.monomial_ranks(arr, binom)


def _to_fraction(value):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value)
    return Fraction(value)


class Polynomial:
    """Immutable sparse polynomial in ``n`` variables."""

    __slots__ = ("_n", "_terms", "_hash")

    def __init__(self, n, terms=None):
        if n < 1:
            raise ValueError("need at least one variable")
        clean = {}
        for mono, coeff in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != n:
                raise DimensionError(f"monomial {mono} does not have {n} exponents")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in {mono}")
            c = _to_fraction(coeff)
            if c != 0:
                clean[mono] = clean.get(mono, Fraction(0)) + c
                if clean[mono] == 0:
                    del clean[mono]
        self._n = n
        self._terms = clean
        self._hash = None

    @classmethod
    def constant(cls, n, value=1):
        return cls(n, {(0,) * n: value})

    @classmethod
    def variable(cls, n, index):
        """The monomial x_index (1-based)."""
        if not 1 <= index <= n:
            raise UnknownVariable(f"x{index} is not one of x1..x{n}")
        mono = [0] * n
        mono[index - 1] = 1
        return cls(n, {tuple(mono): 1})

    @property
    def n(self):
        return self._n

    @property
    def terms(self):
        return dict(self._terms)

    def items(self):
        return sorted(self._terms.items(), key=lambda kv: (-sum(kv[0]), tuple(-e for e in kv[0])))

    def coefficient(self, mono):
        return self._terms.get(tuple(mono), Fraction(0))

    def is_zero(self):
        return not self._terms

    @property
    def degree(self):
        if not self._terms:
            return 0
        return max(sum(m) for m in self._terms)

    def is_homogeneous(self):
        return len({sum(m) for m in self._terms}) <= 1

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._n == other._n and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._n, frozenset(self._terms.items())))
        return self._hash

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other._n != self._n:
                raise DimensionError(f"{self._n} variables vs {other._n}")
            return other
        return Polynomial.constant(self._n, other)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, Fraction(0)) + c
        return Polynomial(self._n, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._n, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return multiply(self, other)
        c = _to_fraction(other)
        return Polynomial(self._n, {m: c * v for m, v in self._terms.items()})

    def __rmul__(self, other):
        return self * other

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers")
        result = Polynomial.constant(self._n)
        base = self
        while k:
            if k & 1:
                result = multiply(result, base)
            k >>= 1
            if k:
                base = multiply(base, base)
        return result

    def to_arrays(self):
        """Exponent matrix (terms x n, int64) and float coefficient vector."""
        items = self.items()
        exps = np.array([m for m, _ in items], dtype=np.int64).reshape(len(items), self._n)
        coeffs = np.array([float(c) for _, c in items], dtype=np.float64)
        return exps, coeffs

    def max_abs_coefficient(self):
        return max((abs(float(c)) for c in self._terms.values()), default=0.0)

    def __repr__(self):
        return f"Polynomial({self._n}, {format_polynomial(self)!r})"

    def __str__(self):
        return format_polynomial(self)


def multiply(p, q):
    if p.n != q.n:
        raise DimensionError(f"cannot multiply polynomials in {p.n} and {q.n} variables")
    out = {}
    for m1, c1 in p._terms.items():
        for m2, c2 in q._terms.items():
            m = tuple(a + b for a, b in zip(m1, m2))
            out[m] = out.get(m, Fraction(0)) + c1 * c2
    if out and max(sum(m) for m in out) > MAX_DEGREE:
        raise CapExceeded(f"product degree exceeds the cap of {MAX_DEGREE}")
    return Polynomial(p.n, out)


def sphere_power(n, r):
    """``(x1^2 + ... + xn^2)^r``; the constant 1 when ``r == 0``."""
    _check_caps(n, 2 * r)
    square_sum = Polynomial(n, {tuple(2 if k == i else 0 for k in range(n)): 1 for i in range(n)})
    return square_sum ** r


def evaluate(p, point):
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (p.n,):
        raise DimensionError(f"point has shape {point.shape}, expected ({p.n},)")
    return float(evaluate_many(p, point[None, :])[0])


def evaluate_many(p, points):
    """Values of ``p`` at each row of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != p.n:
        raise DimensionError(f"points have {points.shape[1]} columns, expected {p.n}")
    exps, coeffs = p.to_arrays()
    return _kernels.evaluate_many(exps, coeffs, points)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def _format_coefficient(c):
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _format_monomial(mono):
    parts = []
    for i, e in enumerate(mono, start=1):
        if e == 1:
            parts.append(f"x{i}")
        elif e > 1:
            parts.append(f"x{i}^{e}")
    return "*".join(parts)


def format_polynomial(p):
    """Canonical text: graded-lex term order, exact rational coefficients."""
    if p.is_zero():
        return "0"
    out = []
    for mono, c in p.items():
        sign = "-" if c < 0 else "+"
        a = abs(c)
        body = _format_monomial(mono)
        if not body:
            term = _format_coefficient(a)
        elif a == 1:
            term = body
        else:
            term = f"{_format_coefficient(a)}*{body}"
        if not out:
            out.append(term if sign == "+" else f"-{term}")
        else:
            out.append(f" {sign} {term}")
    return "".join(out)


class _Parser:
    def __init__(self, text, n):
        self.text = text
        self.n = n
        self.pos = 0

    def error(self, message, pos=None):
        raise PolynomialSyntaxError(message, self.pos if pos is None else pos)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch):
        if self.peek() == ch:
            self.pos += 1
            return True
        return False

    def digits(self):
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if start == self.pos:
            self.error("expected digits")
        return self.text[start:self.pos]

    def parse(self):
        if not self.text.strip():
            self.error("empty expression", 0)
        result = self.expr()
        if self.peek():
            self.error(f"unexpected {self.peek()!r}")
        return result

    def expr(self):
        sign = 1
        if self.take("-"):
            sign = -1
        elif self.take("+"):
            pass
        total = self.term() * sign
        while True:
            if self.take("+"):
                total = total + self.term()
            elif self.take("-"):
                total = total - self.term()
            else:
                return total

    def term(self):
        value = self.factor()
        while self.take("*"):
            value = value * self.factor()
        return value

    def factor(self):
        base = self.base()
        if self.take("^"):
            at = self.pos
            k = int(self.digits())
            if k > MAX_DEGREE or (not base.is_zero() and base.degree * k > MAX_DEGREE):
                raise CapExceeded(f"exponent {k} at position {at} exceeds the degree cap of {MAX_DEGREE}")
            base = base ** k
        return base

    def base(self):
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            inner = self.expr()
            if not self.take(")"):
                self.error("expected ')'")
            return inner
        if ch == "x":
            at = self.pos
            self.pos += 1
            if self.pos >= len(self.text) or not self.text[self.pos].isdigit():
                self.error("expected variable index after 'x'")
            idx = int(self.digits())
            if not 1 <= idx <= self.n:
                raise UnknownVariable(f"x{idx} at position {at} is not one of x1..x{self.n}")
            return Polynomial.variable(self.n, idx)
        if ch.isdigit() or ch == ".":
            return Polynomial.constant(self.n, self.number())
        if not ch:
            self.error("unexpected end of input")
        self.error(f"unexpected {ch!r}")

    def number(self):
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isdigit() or self.text[self.pos] == "."):
            self.pos += 1
        if self.pos < len(self.text) and self.text[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(self.text) and self.text[self.pos] in "+-":
                self.pos += 1
            if self.pos >= len(self.text) or not self.text[self.pos].isdigit():
                self.pos = mark
            else:
                while self.pos < len(self.text) and self.text[self.pos].isdigit():
                    self.pos += 1
        literal = self.text[start:self.pos]
        try:
            value = Fraction(literal)
        except ValueError:
            self.error(f"bad number {literal!r}", start)
        if "." not in literal and "e" not in literal.lower():
            # int '/' uint
            save = self.pos
            if self.take("/"):
                if not self.peek().isdigit():
                    self.pos = save
                    self.error("expected denominator")
                den = int(self.digits())
                if den == 0:
                    self.error("zero denominator", save)
                value = value / den
        return value


def parse_polynomial(text, n):
    """Parse and expand ``text`` into a :class:`Polynomial` in ``n`` variables.

    Grammar::

        expr   := ['+'|'-'] term (('+'|'-') term)*
        term   := factor ('*' factor)*
        factor := base ('^' uint)?
        base   := rational | 'x' uint | '(' expr ')'

    Coefficients are exact rationals (decimals included).
    """
    _check_caps(n, 0)
    p = _Parser(text, n).parse()
    if p.degree > MAX_DEGREE:
        raise CapExceeded(f"degree {p.degree} exceeds the cap of {MAX_DEGREE}")
    return p
