"""Measures on the quantifier set with closed-form monomial moments.

The quantifier set Y is *defined* by the measure: the atom set, the box, or
all of R^m for the Gaussian.  Moments are exact rationals.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .polyalg import Monomial, Poly, PolyMatrix, to_fraction


@dataclass(frozen=True)
class Atom:
    y: tuple[Fraction, ...]
    w: Fraction


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """A measure on R^m of kind ``discrete``, ``box`` or ``gaussian``."""

    kind: str
    m: int
    atoms: tuple[Atom, ...] = ()
    a: tuple[Fraction, ...] = ()
    b: tuple[Fraction, ...] = ()
    normalize: str = "probability"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("discrete", "box", "gaussian"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        if self.kind == "discrete":
            if not self.atoms:
                raise ValueError("discrete measure needs at least one atom")
            for at in self.atoms:
                if len(at.y) != self.m:
                    raise ValueError(f"atom {at.y} has dimension {len(at.y)}, expected {self.m}")
                if at.w <= 0:
                    raise ValueError("atom weights must be strictly positive")
        if self.kind == "box":
            if len(self.a) != self.m or len(self.b) != self.m:
                raise ValueError("box bounds must have length m")
            if any(lo >= hi for lo, hi in zip(self.a, self.b)):
                raise ValueError("box requires a_i < b_i")
            if self.normalize not in ("probability", "lebesgue"):
                raise ValueError(f"unknown normalization {self.normalize!r}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def discrete(cls, points: Sequence[Sequence], weights: Sequence) -> "MeasureSpec":
        points = [tuple(to_fraction(v) for v in pt) for pt in points]
        m = len(points[0]) if points else 0
        atoms = tuple(Atom(pt, to_fraction(w)) for pt, w in zip(points, weights))
        return cls("discrete", m, atoms=atoms)

    @classmethod
    def trivial(cls) -> "MeasureSpec":
        """Unit point mass on R^0: no quantified variables."""
        return cls.discrete([()], [1])

    @classmethod
    def box(cls, a: Sequence, b: Sequence, normalize: str = "probability") -> "MeasureSpec":
        a = tuple(to_fraction(v) for v in a)
        b = tuple(to_fraction(v) for v in b)
        return cls("box", len(a), a=a, b=b, normalize=normalize)

    @classmethod
    def gaussian(cls, m: int) -> "MeasureSpec":
        return cls("gaussian", m)

    @property
    def is_compact(self) -> bool:
        return self.kind in ("discrete", "box")

    def identifier(self) -> str:
        if self.kind == "discrete":
            return f"discrete[{len(self.atoms)} atoms, m={self.m}]"
        if self.kind == "box":
            bounds = ",".join(f"[{lo},{hi}]" for lo, hi in zip(self.a, self.b))
            return f"box{bounds}:{self.normalize}"
        return f"gaussian[m={self.m}]"

    # -- moments ----------------------------------------------------------
    def moment(self, beta: Sequence[int]) -> Fraction:
        beta = tuple(int(e) for e in beta)
        if len(beta) != self.m:
            raise ValueError(f"exponent length {len(beta)} != m = {self.m}")
        cached = self._cache.get(beta)
        if cached is not None:
            return cached
        value = self._closed_form(beta)
        with self._lock:
            self._cache.setdefault(beta, value)
        return value

    def _closed_form(self, beta: Monomial) -> Fraction:
        if self.kind == "discrete":
            total = Fraction(0)
            for at in self.atoms:
                term = at.w
                for v, e in zip(at.y, beta):
                    term *= v ** e
                total += term
            return total
        if self.kind == "box":
            total = Fraction(1)
            for lo, hi, e in zip(self.a, self.b, beta):
                one_d = (hi ** (e + 1) - lo ** (e + 1)) / (e + 1)
                if self.normalize == "probability":
                    one_d /= hi - lo
                total *= one_d
            return total
        total = Fraction(1)
        for e in beta:
            total *= 0 if e % 2 else double_factorial(e - 1)
        return total

    def mass(self) -> Fraction:
        return self.moment((0,) * self.m)

    def sample_points(self, density: int = 5) -> list[tuple[float, ...]]:
        """Points of Y used by grid oracles: atoms, or a tensor grid on the box.

        The Gaussian has no compact sampler; callers must pass their own.
        """
        if self.kind == "discrete":
            return [tuple(float(v) for v in at.y) for at in self.atoms]
        if self.kind == "box":
            axes = [np.linspace(float(lo), float(hi), density) for lo, hi in zip(self.a, self.b)]
            if not axes:
                return [()]
            mesh = np.meshgrid(*axes, indexing="ij")
            return [tuple(p) for p in np.stack([g.ravel() for g in mesh], axis=1)]
        raise ValueError("gaussian measure has unbounded support; supply a y sampler")


def double_factorial(k: int) -> int:
    """k!! with (-1)!! = 0!! = 1."""
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def moment(nu: MeasureSpec, beta: Sequence[int]) -> Fraction:
    return nu.moment(beta)


def integrate_y(H: PolyMatrix, nu: MeasureSpec) -> PolyMatrix:
    """Replace each ``y^b`` by its moment; result is a matrix in x only (m = 0)."""
    if H.m != nu.m:
        raise ValueError(f"matrix has m={H.m} y-variables but measure has m={nu.m}")
    n = H.n

    def integ(p: Poly) -> Poly:
        out: dict = {}
        for k, c in p.items():
            mom = nu.moment(k[n:])
            if mom == 0:
                continue
            v = c * (mom if p.exact else float(mom))
            out[k[:n]] = out.get(k[:n], 0) + v
        return Poly(out, n, 0, p.exact)

    return PolyMatrix([[integ(e) for e in row] for row in H.entries], n, 0, H.exact)


def carleman_note(nu: MeasureSpec) -> bool:
    """Whether the multivariate Carleman condition holds (it does for every shipped kind)."""
    return nu.is_compact or nu.kind == "gaussian"


def carleman_partial_sums(d_max: int = 50) -> list[float]:
    """Partial sums of ``sum_d ((2d)-th Gaussian moment)^(-1/(2d))`` for d = 1..d_max.

    The 2d-th moment is (2d-1)!!, so the terms decay like 1/sqrt(d) and the
    series diverges.
    """
    sums, acc = [], 0.0
    for d in range(1, d_max + 1):
        log_m = sum(math.log(j) for j in range(1, 2 * d, 2))
        acc += math.exp(-log_m / (2 * d))
        sums.append(acc)
    return sums
