"""Sparse multivariate polynomials and symmetric polynomial matrices.

A polynomial lives in variables ``x = (x_1..x_n)`` followed by ``y = (y_1..y_m)``.
Monomials are exponent tuples of length ``n + m``; coefficients are
``Fraction`` (exact mode, the default) or ``float``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from numbers import Rational, Real
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]
Coef = Fraction | float

# Degree reported for the zero polynomial / zero matrix.
ZERO_DEGREE = -1


def to_fraction(value) -> Fraction:
    """Exact rational from int, Fraction, "num/den" string or float.

    Floats go through their shortest decimal repr, so ``1.1`` becomes ``11/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        return Fraction(int(value))
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, Real):
        f = float(value)
        if not math.isfinite(f):
            raise ValueError(f"non-finite coefficient {value!r}")
        return Fraction(repr(f))
    raise TypeError(f"cannot convert {type(value).__name__} to Fraction")


def fraction_str(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def monomials_of_degree(n: int, t: int) -> list[Monomial]:
    """All exponent tuples with ``|a| == t``, in the order x1^t, x1^(t-1)x2, ..."""
    if n == 0:
        return [()] if t == 0 else []
    out = []
    for combo in combinations_with_replacement(range(n), t):
        e = [0] * n
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    return out


@dataclass(frozen=True)
class MonomialBasis:
    """Graded-lex basis ``[x]_d`` = 1, x1, .., xn, x1^2, x1x2, .., xn^d.

    ``homogeneous=True`` keeps only the exact-degree-``d`` monomials.
    ``support`` restricts to monomials in the given (0-based) variables.
    """

    n: int
    d: int
    homogeneous: bool = False
    support: tuple[int, ...] | None = None

    @property
    def order(self) -> tuple[Monomial, ...]:
        return _basis_order(self.n, self.d, self.homogeneous, self.support)

    def __len__(self) -> int:
        return len(self.order)

    def __iter__(self) -> Iterator[Monomial]:
        return iter(self.order)

    def __getitem__(self, i: int) -> Monomial:
        return self.order[i]


_BASIS_CACHE: dict = {}


def _basis_order(n, d, homogeneous, support) -> tuple[Monomial, ...]:
    key = (n, d, homogeneous, support)
    if key not in _BASIS_CACHE:
        if d < 0:
            _BASIS_CACHE[key] = ()
        else:
            vars_ = tuple(range(n)) if support is None else tuple(sorted(support))
            degrees = [d] if homogeneous else range(d + 1)
            out = []
            for t in degrees:
                for sub in monomials_of_degree(len(vars_), t):
                    e = [0] * n
                    for v, k in zip(vars_, sub):
                        e[v] = k
                    out.append(tuple(e))
            _BASIS_CACHE[key] = tuple(out)
    return _BASIS_CACHE[key]


def add_monomials(a: Monomial, b: Monomial) -> Monomial:
    return tuple(i + j for i, j in zip(a, b))


class Poly:
    """Immutable sparse polynomial in ``n`` x-variables and ``m`` y-variables."""

    __slots__ = ("n", "m", "exact", "_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, object] | None = None, n: int = 0,
                 m: int = 0, exact: bool = True):
        self.n = n
        self.m = m
        self.exact = exact
        conv = to_fraction if exact else float
        clean: dict[Monomial, Coef] = {}
        for mono, c in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != n + m or any(e < 0 for e in mono):
                raise ValueError(f"bad monomial {mono} for n={n}, m={m}")
            c = conv(c)
            if c != 0:
                clean[mono] = clean.get(mono, 0) + c
                if clean[mono] == 0:
                    del clean[mono]
        self._terms = clean
        self._hash = None

    # -- constructors -----------------------------------------------------
    @classmethod
    def _raw(cls, terms: dict, n: int, m: int, exact: bool) -> "Poly":
        p = cls.__new__(cls)
        p.n, p.m, p.exact, p._terms, p._hash = n, m, exact, terms, None
        return p

    @classmethod
    def const(cls, c, n: int, m: int = 0, exact: bool = True) -> "Poly":
        return cls({(0,) * (n + m): c}, n, m, exact)

    @classmethod
    def zero(cls, n: int, m: int = 0, exact: bool = True) -> "Poly":
        return cls._raw({}, n, m, exact)

    @classmethod
    def monomial(cls, mono: Monomial, n: int, m: int = 0, c=1, exact: bool = True) -> "Poly":
        return cls({tuple(mono): c}, n, m, exact)

    @classmethod
    def x(cls, i: int, n: int, m: int = 0, exact: bool = True) -> "Poly":
        """The variable ``x_{i+1}`` (0-based ``i``)."""
        e = [0] * (n + m)
        e[i] = 1
        return cls({tuple(e): 1}, n, m, exact)

    @classmethod
    def y(cls, i: int, n: int, m: int, exact: bool = True) -> "Poly":
        e = [0] * (n + m)
        e[n + i] = 1
        return cls({tuple(e): 1}, n, m, exact)

    # -- basic protocol ---------------------------------------------------
    @property
    def terms(self) -> Mapping[Monomial, Coef]:
        return self._terms

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coeff(self, mono: Monomial) -> Coef:
        return self._terms.get(tuple(mono), Fraction(0) if self.exact else 0.0)

    def __eq__(self, other) -> bool:
        if isinstance(other, Poly):
            return (self.n, self.m) == (other.n, other.m) and self._terms == other._terms
        if isinstance(other, (int, Fraction, float)):
            return self == Poly.const(other, self.n, self.m, self.exact)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.n, self.m, frozenset(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        return f"Poly({self.to_str()})"

    def to_str(self) -> str:
        if not self._terms:
            return "0"
        names = [f"x{i + 1}" for i in range(self.n)] + [f"y{i + 1}" for i in range(self.m)]
        parts = []
        for mono, c in sorted(self._terms.items(), key=lambda t: (sum(t[0]), [-e for e in t[0]])):
            factors = [v if e == 1 else f"{v}^{e}" for v, e in zip(names, mono) if e]
            body = "*".join(factors)
            if not body:
                parts.append(str(c))
            elif c == 1:
                parts.append(body)
            elif c == -1:
                parts.append("-" + body)
            else:
                parts.append(f"{c}*{body}")
        return " + ".join(parts).replace("+ -", "- ")

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "Poly") -> None:
        if (self.n, self.m) != (other.n, other.m):
            raise ValueError(f"variable counts differ: ({self.n},{self.m}) vs ({other.n},{other.m})")
        if self.exact != other.exact:
            raise TypeError("mixed coefficient modes (exact vs float)")

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            self._check(other)
            return other
        if isinstance(other, (int, Fraction, float)):
            return Poly.const(other, self.n, self.m, self.exact)
        return NotImplemented

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for mono, c in other._terms.items():
            v = out.get(mono, 0) + c
            if v == 0:
                out.pop(mono, None)
            else:
                out[mono] = v
        return Poly._raw(out, self.n, self.m, self.exact)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly._raw({k: -c for k, c in self._terms.items()}, self.n, self.m, self.exact)

    def __sub__(self, other) -> "Poly":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> "Poly":
        return (-self) + other

    def scale(self, c) -> "Poly":
        c = to_fraction(c) if self.exact else float(c)
        if c == 0:
            return Poly.zero(self.n, self.m, self.exact)
        return Poly._raw({k: v * c for k, v in self._terms.items()}, self.n, self.m, self.exact)

    def __mul__(self, other) -> "Poly":
        if isinstance(other, (int, Fraction, float)):
            return self.scale(other)
        if not isinstance(other, Poly):
            return NotImplemented
        self._check(other)
        out: dict[Monomial, Coef] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                mono = tuple(a + b for a, b in zip(m1, m2))
                out[mono] = out.get(mono, 0) + c1 * c2
        out = {k: v for k, v in out.items() if v != 0}
        return Poly._raw(out, self.n, self.m, self.exact)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        if k < 0:
            raise ValueError("negative power")
        result = Poly.const(1, self.n, self.m, self.exact)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # -- degrees / supports -----------------------------------------------
    def degree(self) -> int:
        return max((sum(k) for k in self._terms), default=ZERO_DEGREE)

    def degree_x(self) -> int:
        return max((sum(k[: self.n]) for k in self._terms), default=ZERO_DEGREE)

    def degree_y(self) -> int:
        return max((sum(k[self.n:]) for k in self._terms), default=ZERO_DEGREE)

    def support(self) -> set[Monomial]:
        return set(self._terms)

    def support_x(self) -> set[Monomial]:
        return {k[: self.n] for k in self._terms}

    def support_y(self) -> set[Monomial]:
        return {k[self.n:] for k in self._terms}

    def variables_used(self) -> set[int]:
        """0-based indices (x first, then y) of variables that occur."""
        return {i for k in self._terms for i, e in enumerate(k) if e}

    def is_homogeneous_x(self) -> bool:
        return len({sum(k[: self.n]) for k in self._terms}) <= 1

    # -- conversions ------------------------------------------------------
    def to_float(self) -> "Poly":
        if not self.exact:
            return self
        return Poly._raw({k: float(c) for k, c in self._terms.items()}, self.n, self.m, False)

    def to_exact(self) -> "Poly":
        if self.exact:
            return self
        return Poly({k: to_fraction(c) for k, c in self._terms.items()}, self.n, self.m, True)

    def with_vars(self, n: int, m: int, x_map: Sequence[int] | None = None) -> "Poly":
        """Re-embed into ``(n, m)`` variables; ``x_map[i]`` is the new index of x_i."""
        x_map = list(range(self.n)) if x_map is None else list(x_map)
        if self.m > m:
            if any(sum(k[self.n:]) for k in self._terms):
                raise ValueError("cannot drop y variables that are used")
        out = {}
        for k, c in self._terms.items():
            e = [0] * (n + m)
            for i in range(self.n):
                e[x_map[i]] += k[i]
            for j in range(min(self.m, m)):
                e[n + j] = k[self.n + j]
            out[tuple(e)] = c
        return Poly._raw(out, n, m, self.exact)

    def drop_y(self) -> "Poly":
        """View a y-free polynomial as a polynomial in x only (m = 0)."""
        if self.degree_y() > 0:
            raise ValueError("polynomial depends on y")
        return Poly._raw({k[: self.n]: c for k, c in self._terms.items()}, self.n, 0, self.exact)

    def shift(self, mono: Monomial) -> "Poly":
        """Multiply by the monomial ``mono`` (length n + m)."""
        return Poly._raw({add_monomials(k, mono): c for k, c in self._terms.items()},
                         self.n, self.m, self.exact)

    def evaluate(self, point: Sequence) -> Coef:
        """Value at ``point`` (length n + m); exact if both sides are exact."""
        if len(point) != self.n + self.m:
            raise ValueError("point has wrong length")
        if self.exact and all(isinstance(v, (int, Fraction)) for v in point):
            total = Fraction(0)
            pt = [Fraction(v) for v in point]
        else:
            total = 0.0
            pt = [float(v) for v in point]
        for k, c in self._terms.items():
            term = c if not isinstance(total, float) else float(c)
            for v, e in zip(pt, k):
                if e:
                    term *= v ** e
            total += term
        return total

    def partial_eval_y(self, y_point: Sequence) -> "Poly":
        """Substitute the y variables, returning a polynomial in x (m = 0)."""
        exact = self.exact and all(isinstance(v, (int, Fraction)) for v in y_point)
        out: dict[Monomial, Coef] = {}
        for k, c in self._terms.items():
            val = c if exact else float(c)
            for v, e in zip(y_point, k[self.n:]):
                if e:
                    val *= (Fraction(v) if exact else float(v)) ** e
            key = k[: self.n]
            out[key] = out.get(key, 0) + val
        return Poly({k: v for k, v in out.items()}, self.n, 0, exact)


class PolyMatrix:
    """Square matrix of ``Poly`` entries sharing ``(n, m)`` and coefficient mode.

    The ``symmetric`` flag is computed once on construction.
    """

    __slots__ = ("entries", "size", "n", "m", "exact", "symmetric")

    def __init__(self, entries: Sequence[Sequence[Poly]], n: int | None = None,
                 m: int | None = None, exact: bool | None = None):
        rows = [list(r) for r in entries]
        r = len(rows)
        if any(len(row) != r for row in rows):
            raise ValueError("PolyMatrix must be square")
        if r == 0:
            if n is None:
                raise ValueError("empty PolyMatrix needs explicit n")
            self.n, self.m, self.exact = n, m or 0, True if exact is None else exact
        else:
            first = rows[0][0]
            self.n = first.n if n is None else n
            self.m = first.m if m is None else m
            self.exact = first.exact if exact is None else exact
            for row in rows:
                for e in row:
                    if (e.n, e.m) != (self.n, self.m):
                        raise ValueError("entries have inconsistent variable counts")
                    if e.exact != self.exact:
                        raise TypeError("mixed coefficient modes in PolyMatrix")
        self.entries = tuple(tuple(row) for row in rows)
        self.size = r
        self.symmetric = all(self.entries[i][j] == self.entries[j][i]
                             for i in range(r) for j in range(i + 1, r))

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_polys(cls, rows) -> "PolyMatrix":
        return cls(rows)

    @classmethod
    def scalar(cls, p: Poly) -> "PolyMatrix":
        return cls([[p]])

    @classmethod
    def identity(cls, r: int, n: int, m: int = 0, exact: bool = True) -> "PolyMatrix":
        one, zero = Poly.const(1, n, m, exact), Poly.zero(n, m, exact)
        return cls([[one if i == j else zero for j in range(r)] for i in range(r)], n, m, exact)

    @classmethod
    def zeros(cls, r: int, n: int, m: int = 0, exact: bool = True) -> "PolyMatrix":
        zero = Poly.zero(n, m, exact)
        return cls([[zero] * r for _ in range(r)], n, m, exact)

    @classmethod
    def constant(cls, mat, n: int, m: int = 0, exact: bool = True) -> "PolyMatrix":
        mat = [list(row) for row in mat]
        return cls([[Poly.const(c, n, m, exact) for c in row] for row in mat], n, m, exact)

    @classmethod
    def diag(cls, blocks: Sequence["PolyMatrix"]) -> "PolyMatrix":
        if not blocks:
            raise ValueError("need at least one block")
        n, m, exact = blocks[0].n, blocks[0].m, blocks[0].exact
        total = sum(b.size for b in blocks)
        zero = Poly.zero(n, m, exact)
        rows = [[zero] * total for _ in range(total)]
        off = 0
        for b in blocks:
            for i in range(b.size):
                for j in range(b.size):
                    rows[off + i][off + j] = b.entries[i][j]
            off += b.size
        return cls(rows, n, m, exact)

    # -- protocol ---------------------------------------------------------
    def __getitem__(self, ij) -> Poly:
        i, j = ij
        return self.entries[i][j]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return self.size == other.size and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __repr__(self) -> str:
        rows = ["[" + ", ".join(e.to_str() for e in row) + "]" for row in self.entries]
        return "PolyMatrix([" + ", ".join(rows) + "])"

    def _zero(self) -> Poly:
        return Poly.zero(self.n, self.m, self.exact)

    def _check(self, other: "PolyMatrix") -> None:
        if self.size != other.size:
            raise ValueError(f"size mismatch: {self.size} vs {other.size}")
        if (self.n, self.m) != (other.n, other.m):
            raise ValueError("variable counts differ")
        if self.exact != other.exact:
            raise TypeError("mixed coefficient modes (exact vs float)")

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        self._check(other)
        return PolyMatrix([[a + b for a, b in zip(r1, r2)]
                           for r1, r2 in zip(self.entries, other.entries)], self.n, self.m, self.exact)

    def __neg__(self) -> "PolyMatrix":
        return PolyMatrix([[-a for a in row] for row in self.entries], self.n, self.m, self.exact)

    def __sub__(self, other: "PolyMatrix") -> "PolyMatrix":
        return self + (-other)

    def __mul__(self, other) -> "PolyMatrix":
        if isinstance(other, PolyMatrix):
            return self.matmul(other)
        if isinstance(other, Poly):
            return PolyMatrix([[a * other for a in row] for row in self.entries], self.n, self.m, self.exact)
        if isinstance(other, (int, Fraction, float)):
            return PolyMatrix([[a.scale(other) for a in row] for row in self.entries],
                              self.n, self.m, self.exact)
        return NotImplemented

    def __rmul__(self, other) -> "PolyMatrix":
        if isinstance(other, (Poly, int, Fraction, float)):
            return self * other
        return NotImplemented

    def matmul(self, other: "PolyMatrix") -> "PolyMatrix":
        self._check(other)
        r = self.size
        out = []
        for i in range(r):
            row = []
            for j in range(r):
                acc = self._zero()
                for k in range(r):
                    a, b = self.entries[i][k], other.entries[k][j]
                    if a._terms and b._terms:
                        acc = acc + a * b
                row.append(acc)
            out.append(row)
        return PolyMatrix(out, self.n, self.m, self.exact)

    def __pow__(self, k: int) -> "PolyMatrix":
        if k < 0:
            raise ValueError("negative power")
        result = PolyMatrix.identity(self.size, self.n, self.m, self.exact)
        base = self
        while k:
            if k & 1:
                result = result.matmul(base)
            k >>= 1
            if k:
                base = base.matmul(base)
        return result

    def transpose(self) -> "PolyMatrix":
        r = self.size
        return PolyMatrix([[self.entries[j][i] for j in range(r)] for i in range(r)],
                          self.n, self.m, self.exact)

    @property
    def T(self) -> "PolyMatrix":
        return self.transpose()

    def trace(self) -> Poly:
        acc = self._zero()
        for i in range(self.size):
            acc = acc + self.entries[i][i]
        return acc

    def map(self, fn) -> "PolyMatrix":
        return PolyMatrix([[fn(a) for a in row] for row in self.entries])

    def block(self, i: int, j: int, q: int) -> "PolyMatrix":
        """The ``(i, j)`` block of side ``q``."""
        return PolyMatrix([[self.entries[i * q + s][j * q + t] for t in range(q)] for s in range(q)],
                          self.n, self.m, self.exact)

    def submatrix(self, idx: Sequence[int]) -> "PolyMatrix":
        return PolyMatrix([[self.entries[i][j] for j in idx] for i in idx], self.n, self.m, self.exact)

    # -- queries ----------------------------------------------------------
    def is_zero(self) -> bool:
        return all(e.is_zero() for row in self.entries for e in row)

    def support(self) -> set[Monomial]:
        return {k for row in self.entries for e in row for k in e.terms}

    def support_x(self) -> set[Monomial]:
        return {k[: self.n] for k in self.support()}

    def support_y(self) -> set[Monomial]:
        return {k[self.n:] for k in self.support()}

    def variables_used(self) -> set[int]:
        return set().union(*(e.variables_used() for row in self.entries for e in row))

    def coefficients(self) -> dict[Monomial, np.ndarray]:
        """Map monomial -> constant coefficient matrix (object dtype if exact)."""
        r = self.size
        out: dict[Monomial, np.ndarray] = {}
        for i in range(r):
            for j in range(r):
                for k, c in self.entries[i][j].items():
                    if k not in out:
                        out[k] = np.zeros((r, r), dtype=object if self.exact else float)
                        if self.exact:
                            out[k][:] = Fraction(0)
                    out[k][i, j] = c
        return out

    def coefficients_y(self) -> dict[Monomial, "PolyMatrix"]:
        """Split as ``sum_b H_b(x) y^b``; values are matrices in x only (m = 0)."""
        r = self.size
        buckets: dict[Monomial, list[list[dict]]] = {}
        for i in range(r):
            for j in range(r):
                for k, c in self.entries[i][j].items():
                    b = k[self.n:]
                    if b not in buckets:
                        buckets[b] = [[{} for _ in range(r)] for _ in range(r)]
                    buckets[b][i][j][k[: self.n]] = c
        return {b: PolyMatrix([[Poly._raw(t, self.n, 0, self.exact) for t in row] for row in rows],
                              self.n, 0, self.exact)
                for b, rows in buckets.items()}

    def degree(self) -> int:
        return max((e.degree() for row in self.entries for e in row), default=ZERO_DEGREE)

    def degree_x(self) -> int:
        return max((e.degree_x() for row in self.entries for e in row), default=ZERO_DEGREE)

    def degree_y(self) -> int:
        return max((e.degree_y() for row in self.entries for e in row), default=ZERO_DEGREE)

    def is_homogeneous_x(self) -> bool:
        return len({sum(k[: self.n]) for k in self.support()}) <= 1

    # -- conversions ------------------------------------------------------
    def to_float(self) -> "PolyMatrix":
        return self if not self.exact else self.map(Poly.to_float)

    def to_exact(self) -> "PolyMatrix":
        return self if self.exact else self.map(Poly.to_exact)

    def with_vars(self, n: int, m: int, x_map: Sequence[int] | None = None) -> "PolyMatrix":
        return PolyMatrix([[e.with_vars(n, m, x_map) for e in row] for row in self.entries], n, m, self.exact)

    def drop_y(self) -> "PolyMatrix":
        return PolyMatrix([[e.drop_y() for e in row] for row in self.entries], self.n, 0, self.exact)

    def evaluate(self, point: Sequence) -> np.ndarray:
        """Evaluate entry-wise; object array of Fractions when exact inputs."""
        vals = [[e.evaluate(point) for e in row] for row in self.entries]
        if all(isinstance(v, Fraction) for row in vals for v in row):
            return np.array(vals, dtype=object).reshape(self.size, self.size)
        return np.array(vals, dtype=float).reshape(self.size, self.size)

    def partial_eval_y(self, y_point: Sequence) -> "PolyMatrix":
        return PolyMatrix([[e.partial_eval_y(y_point) for e in row] for row in self.entries])

    def numeric(self) -> "NumericPolyMatrix":
        return NumericPolyMatrix(self)


class NumericPolyMatrix:
    """Vectorised float evaluation of a PolyMatrix at many points."""

    def __init__(self, pm: PolyMatrix):
        coeffs = pm.coefficients()
        self.size = pm.size
        self.nvars = pm.n + pm.m
        self.exps = np.array(list(coeffs), dtype=float).reshape(len(coeffs), self.nvars)
        self.mats = np.array([np.asarray(c, dtype=float) for c in coeffs.values()]).reshape(
            len(coeffs), pm.size, pm.size)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.nvars:
            raise ValueError("points have wrong dimension")
        if len(self.exps) == 0:
            return np.zeros((len(pts), self.size, self.size))
        # monomial values, shape (K, T)
        vals = np.prod(pts[:, None, :] ** self.exps[None, :, :], axis=2)
        return np.einsum("kt,tij->kij", vals, self.mats)


# -- module-level operations ---------------------------------------------------

def ring_add(a, b):
    return a + b


def ring_mul(a, b):
    return a * b


def trace_p(C: np.ndarray, p: int, q: int | None = None) -> np.ndarray:
    """Block trace: ``(i, j)`` entry is ``tr`` of the ``q x q`` block ``C_ij``."""
    C = np.asarray(C)
    side = C.shape[0]
    if C.ndim != 2 or C.shape[1] != side:
        raise ValueError("C must be square")
    if p <= 0 or side % p:
        raise ValueError(f"side {side} does not split into {p} blocks")
    q = side // p if q is None else q
    if p * q != side:
        raise ValueError(f"side {side} != p*q = {p}*{q}")
    out = np.empty((p, p), dtype=C.dtype)
    for i in range(p):
        for j in range(p):
            blk = C[i * q:(i + 1) * q, j * q:(j + 1) * q]
            out[i, j] = sum(blk[s, s] for s in range(q)) if C.dtype == object else np.trace(blk)
    return out


def bilinear_p(A: PolyMatrix, B: PolyMatrix, p: int) -> PolyMatrix:
    """``<A, B>_p = Tr_p(A^T (I_p kron B))`` for ``A`` of side ``p q``, ``B`` of side ``q``."""
    q = B.size
    if A.size != p * q:
        raise ValueError(f"A has side {A.size}, expected p*q = {p * q}")
    if (A.n, A.m) != (B.n, B.m):
        raise ValueError("variable counts differ")
    if A.exact != B.exact:
        raise TypeError("mixed coefficient modes (exact vs float)")
    zero = Poly.zero(A.n, A.m, A.exact)
    out = [[zero] * p for _ in range(p)]
    for i in range(p):
        for j in range(p):
            acc = zero
            # tr((A_ji)^T B) = sum_{s,t} A[j q + s, i q + t] B[s, t]
            for s in range(q):
                for t in range(q):
                    a = A.entries[j * q + s][i * q + t]
                    b = B.entries[s][t]
                    if a._terms and b._terms:
                        acc = acc + a * b
            out[i][j] = acc
    return PolyMatrix(out, A.n, A.m, A.exact)


def kron(A: PolyMatrix, B: PolyMatrix) -> PolyMatrix:
    if (A.n, A.m) != (B.n, B.m):
        raise ValueError("variable counts differ")
    ra, rb = A.size, B.size
    rows = [[A.entries[i // rb][j // rb] * B.entries[i % rb][j % rb] for j in range(ra * rb)]
            for i in range(ra * rb)]
    return PolyMatrix(rows, A.n, A.m, A.exact)


@dataclass(frozen=True)
class DegreeInfo:
    deg: int
    deg_x: int
    deg_y: int
    d_H: int       # max_ij floor(deg_x H_ij / 2) + 1
    half_x: int    # ceil(deg_x H / 2)


def degrees(H: PolyMatrix) -> DegreeInfo:
    deg, dx, dy = H.degree(), H.degree_x(), H.degree_y()
    if dx == ZERO_DEGREE:
        return DegreeInfo(deg, dx, dy, 1, 0)
    d_h = max(e.degree_x() // 2 + 1 for row in H.entries for e in row if not e.is_zero())
    return DegreeInfo(deg, dx, max(dy, 0), d_h, (dx + 1) // 2)


def homogenize(H: PolyMatrix, two_d: int) -> PolyMatrix:
    """Entry-wise ``x_{n+1}^{2d} H_ij(x / x_{n+1})``; the new variable is appended to x."""
    if H.degree_x() > two_d:
        raise ValueError(f"degree {two_d} below deg_x H = {H.degree_x()}")
    n, m = H.n, H.m

    def lift(p: Poly) -> Poly:
        out = {}
        for k, c in p.items():
            ax, ay = k[:n], k[n:]
            out[ax + (two_d - sum(ax),) + ay] = c
        return Poly._raw(out, n + 1, m, p.exact)

    return PolyMatrix([[lift(e) for e in row] for row in H.entries], n + 1, m, H.exact)


def dehomogenize(H: PolyMatrix) -> PolyMatrix:
    """Set the last x variable to 1."""
    n, m = H.n, H.m
    if n == 0:
        raise ValueError("no x variable to remove")

    def drop(p: Poly) -> Poly:
        out: dict = {}
        for k, c in p.items():
            key = k[: n - 1] + k[n:]
            out[key] = out.get(key, 0) + c
        return Poly(out, n - 1, m, p.exact)

    return PolyMatrix([[drop(e) for e in row] for row in H.entries], n - 1, m, H.exact)


def theta(n: int, m: int = 0, exact: bool = True) -> Poly:
    """``1 + |x|^2``."""
    acc = Poly.const(1, n, m, exact)
    for i in range(n):
        acc = acc + Poly.x(i, n, m, exact) ** 2
    return acc


def big_theta(n: int, d: int, m: int = 0, exact: bool = True) -> Poly:
    """``1 + sum_i x_i^(2d)``."""
    acc = Poly.const(1, n, m, exact)
    for i in range(n):
        acc = acc + Poly.x(i, n, m, exact) ** (2 * d)
    return acc


def norm_sq(n: int, m: int = 0, exact: bool = True) -> Poly:
    acc = Poly.zero(n, m, exact)
    for i in range(n):
        acc = acc + Poly.x(i, n, m, exact) ** 2
    return acc


def basis_vector(basis: Iterable[Monomial], n: int, m: int = 0, exact: bool = True,
                 offset: int = 0) -> list[Poly]:
    """Monomials of ``basis`` placed at variable positions ``offset..``."""
    out = []
    for mono in basis:
        e = [0] * (n + m)
        e[offset:offset + len(mono)] = mono
        out.append(Poly.monomial(tuple(e), n, m, exact=exact))
    return out
