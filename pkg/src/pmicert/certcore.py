"""Gram parametrisation of SOS matrices and quadratic-module certificates.

A Gram object describes

    Sigma(x, y) = x^shift (v(x, y) kron I_b)^T Z (v(x, y) kron I_b),

where ``v`` runs over ``basis_x`` kron ``basis_y`` (x-index major) and ``b`` is
the block side.  Row ``(ia * len(basis_y) + iy) * b + s`` of ``Z`` belongs to
monomial ``x^basis_x[ia] y^basis_y[iy]`` and local row ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import config
from .measures import MeasureSpec, integrate_y
from .polyalg import Monomial, Poly, PolyMatrix, bilinear_p, to_fraction


def as_exact_array(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=object)
    out = np.empty(Z.shape, dtype=object)
    for idx, v in np.ndenumerate(Z):
        out[idx] = to_fraction(v)
    return out


def is_exact_array(Z: np.ndarray) -> bool:
    return Z.dtype == object


@dataclass(frozen=True, eq=False)
class SOSGram:
    """Gram matrix of an SOS polynomial matrix of side ``block``."""

    n: int
    m: int
    basis_x: tuple[Monomial, ...]
    basis_y: tuple[Monomial, ...]
    block: int
    Z: np.ndarray
    shift: Monomial | None = None

    def __post_init__(self):
        object.__setattr__(self, "basis_x", tuple(tuple(b) for b in self.basis_x))
        object.__setattr__(self, "basis_y", tuple(tuple(b) for b in self.basis_y) or ((0,) * self.m,))
        if any(len(b) != self.n for b in self.basis_x):
            raise ValueError("x-basis monomials must have length n")
        if any(len(b) != self.m for b in self.basis_y):
            raise ValueError("y-basis monomials must have length m")
        side = self.side
        Z = self.Z
        if not isinstance(Z, np.ndarray):
            Z = np.asarray(Z, dtype=object if _looks_exact(Z) else float)
        if Z.shape != (side, side):
            raise ValueError(f"Z has shape {Z.shape}, expected ({side}, {side})")
        object.__setattr__(self, "Z", Z)
        if self.shift is not None:
            object.__setattr__(self, "shift", tuple(self.shift))

    @property
    def side(self) -> int:
        return len(self.basis_x) * len(self.basis_y) * self.block

    @property
    def exact(self) -> bool:
        return is_exact_array(self.Z)

    def monomials(self) -> list[Monomial]:
        """Combined (x, y) monomial of each basis slot (shift not applied)."""
        return [tuple(bx) + tuple(by) for bx in self.basis_x for by in self.basis_y]

    def shift_full(self) -> Monomial:
        """Shift as an (x, y) exponent, applied once to the whole form."""
        return tuple(self.shift or (0,) * self.n) + (0,) * self.m

    def with_Z(self, Z) -> "SOSGram":
        return SOSGram(self.n, self.m, self.basis_x, self.basis_y, self.block, Z, self.shift)

    def to_exact(self) -> "SOSGram":
        return self if self.exact else self.with_Z(as_exact_array(self.Z))


def _looks_exact(Z) -> bool:
    flat = np.asarray(Z, dtype=object).ravel()
    return all(isinstance(v, (int, Fraction)) for v in flat)


def expand_gram(g: SOSGram) -> PolyMatrix:
    """Expand the Gram form into an explicit polynomial matrix."""
    b = g.block
    monos = g.monomials()
    sh = g.shift_full()
    exact = g.exact
    Z = g.Z
    # accumulate Z blocks per product monomial
    acc: dict[Monomial, np.ndarray] = {}
    for i, mi in enumerate(monos):
        rows = Z[i * b:(i + 1) * b]
        for j, mj in enumerate(monos):
            blk = rows[:, j * b:(j + 1) * b]
            key = tuple(u + v + w for u, v, w in zip(mi, mj, sh))
            if key in acc:
                acc[key] = acc[key] + blk
            else:
                acc[key] = blk.copy()
    entries = []
    for s in range(b):
        row = []
        for t in range(b):
            row.append(Poly({k: v[s, t] for k, v in acc.items()}, g.n, g.m, exact))
        entries.append(row)
    return PolyMatrix(entries, g.n, g.m, exact)


@dataclass(frozen=True, eq=False)
class CertTerm:
    """One summand of a certificate.

    ``role`` is ``sigma0`` (plain SOS term), ``sigma`` (paired with constraint
    ``index`` and integrated against the measure) or ``extra`` (paired with
    extra constraint ``index``, no integration).
    """

    role: str
    gram: SOSGram
    index: int = 0
    clique: int | None = None


@dataclass(eq=False)
class SOSCertificate:
    terms: list[CertTerm]
    meta: dict = field(default_factory=dict)

    @property
    def sigma0(self) -> list[SOSGram]:
        return [t.gram for t in self.terms if t.role == "sigma0"]

    @property
    def sigma(self) -> list[CertTerm]:
        return [t for t in self.terms if t.role == "sigma"]

    @property
    def extras(self) -> list[CertTerm]:
        return [t for t in self.terms if t.role == "extra"]

    def to_exact(self) -> "SOSCertificate":
        return SOSCertificate([CertTerm(t.role, t.gram.to_exact(), t.index, t.clique) for t in self.terms],
                              dict(self.meta))


def qmodule_element(sigma0: SOSGram | None, sigma: SOSGram | None, G: PolyMatrix,
                    nu: MeasureSpec, p: int | None = None) -> PolyMatrix:
    """``Sigma_0 + int <Sigma, G>_p dnu`` as a polynomial matrix in x."""
    parts = []
    if sigma0 is not None:
        parts.append(expand_gram(sigma0))
    if sigma is not None:
        q = G.size
        if sigma.block % q:
            raise ValueError(f"Sigma side {sigma.block} is not a multiple of q = {q}")
        pp = sigma.block // q
        if p is not None and pp != p:
            raise ValueError(f"Sigma gives p = {pp}, expected {p}")
        S = expand_gram(sigma)
        if not S.exact and G.exact:
            G = G.to_float()
        parts.append(integrate_y(bilinear_p(S, G, pp), nu))
    if not parts:
        raise ValueError("need at least one of sigma0, sigma")
    out = parts[0]
    for extra in parts[1:]:
        if out.exact != extra.exact:
            out, extra = out.to_float(), extra.to_float()
        out = out + extra
    return out


def block_split(sigma: SOSGram, block_sizes: Sequence[int], p: int) -> list[SOSGram]:
    """Split a Gram of side ``p * sum(r)`` into grams of side ``p * r_j``.

    Pairing against ``diag(H_1..H_t)`` equals the sum of the pairings of the
    pieces with the ``H_j``.
    """
    r = sum(block_sizes)
    if sigma.block != p * r:
        raise ValueError(f"block side {sigma.block} != p * sum(r) = {p * r}")
    nb = len(sigma.basis_x) * len(sigma.basis_y)
    out, offset = [], 0
    for rj in block_sizes:
        idx = [slot * sigma.block + i * r + offset + s
               for slot in range(nb) for i in range(p) for s in range(rj)]
        Zj = sigma.Z[np.ix_(idx, idx)]
        out.append(SOSGram(sigma.n, sigma.m, sigma.basis_x, sigma.basis_y, p * rj, Zj, sigma.shift))
        offset += rj
    return out


def multiplier_power(G: PolyMatrix, M, k: int, p: int) -> PolyMatrix:
    """``tr((I - G/M)^(2k) G) * I_p``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    M = to_fraction(M) if G.exact else float(M)
    if M <= 0:
        raise ValueError("M must be positive")
    q = G.size
    eye = PolyMatrix.identity(q, G.n, G.m, G.exact)
    A = (eye - G * (1 / M)) ** (2 * k)
    scalar = A.matmul(G).trace()
    zero = Poly.zero(G.n, G.m, G.exact)
    return PolyMatrix([[scalar if i == j else zero for j in range(p)] for i in range(p)],
                      G.n, G.m, G.exact)


# -- PSD validation ------------------------------------------------------------

@dataclass(frozen=True)
class LDLWitness:
    perm: list[int]
    L: np.ndarray
    D: list[Fraction]


def ldl_exact(Z) -> tuple[bool, LDLWitness | None]:
    """Exact PSD test by symmetric pivoted LDL^T over the rationals.

    Returns ``(True, witness)`` with ``P Z P^T = L diag(D) L^T`` and all
    ``D >= 0``, or ``(False, None)``.
    """
    A = as_exact_array(Z)
    nrow = A.shape[0]
    if A.shape != (nrow, nrow):
        raise ValueError("matrix must be square")
    if any(A[i, j] != A[j, i] for i in range(nrow) for j in range(i + 1, nrow)):
        return False, None
    A = A.copy()
    perm = list(range(nrow))
    L = np.empty((nrow, nrow), dtype=object)
    L[:] = Fraction(0)
    D: list[Fraction] = []
    for c in range(nrow):
        # largest remaining diagonal as pivot
        piv = max(range(c, nrow), key=lambda i: A[i, i])
        if A[piv, piv] < 0:
            return False, None
        if piv != c:
            A[[c, piv], :] = A[[piv, c], :]
            A[:, [c, piv]] = A[:, [piv, c]]
            L[[c, piv], :c] = L[[piv, c], :c]
            perm[c], perm[piv] = perm[piv], perm[c]
        d = A[c, c]
        L[c, c] = Fraction(1)
        if d == 0:
            # PSD forces the whole remaining column to vanish
            if any(A[i, c] != 0 for i in range(c + 1, nrow)):
                return False, None
            D.append(Fraction(0))
            continue
        D.append(d)
        for i in range(c + 1, nrow):
            L[i, c] = A[i, c] / d
        for i in range(c + 1, nrow):
            if A[i, c] == 0:
                continue
            for j in range(c + 1, nrow):
                A[i, j] -= L[i, c] * A[c, j]
    return True, LDLWitness(perm, L, D)


def is_psd_exact(Z) -> bool:
    return ldl_exact(Z)[0]


def is_pd_exact(Z) -> bool:
    ok, w = ldl_exact(Z)
    return ok and all(d > 0 for d in w.D)


def min_eig(Z) -> float:
    Z = np.asarray(Z, dtype=float)
    if Z.size == 0:
        return float("inf")
    return float(np.linalg.eigvalsh((Z + Z.T) / 2)[0])


def gram_is_psd(g: SOSGram, floor: float | None = None) -> bool:
    """Exact LDL^T for rational Grams, symmetrised eigenvalue floor otherwise."""
    if g.exact:
        return is_psd_exact(g.Z)
    floor = config.DEFAULTS.float_gram_floor if floor is None else floor
    return min_eig(g.Z) >= -floor
