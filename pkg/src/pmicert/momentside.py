"""Truncated matrix moment sequences and their moment/localizing matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .certcore import SOSGram, as_exact_array, expand_gram, min_eig
from . import config
from .measures import MeasureSpec, integrate_y
from .polyalg import Monomial, MonomialBasis, PolyMatrix, add_monomials, bilinear_p, degrees, to_fraction


@dataclass(eq=False)
class MomentSeq:
    """Sequence ``S_a`` of symmetric ``p x p`` matrices for ``|a| <= 2 * d_cap``.

    Entries not stored are zero.  Exact sequences hold object arrays of
    Fractions.
    """

    n: int
    p: int
    d_cap: int
    S: dict[Monomial, np.ndarray] = field(default_factory=dict)
    exact: bool = False

    def __post_init__(self):
        clean = {}
        for a, mat in self.S.items():
            a = tuple(int(e) for e in a)
            if len(a) != self.n:
                raise ValueError(f"index {a} has wrong length")
            if sum(a) > 2 * self.d_cap:
                raise ValueError(f"index {a} beyond truncation 2*{self.d_cap}")
            mat = as_exact_array(mat) if self.exact else np.asarray(mat, dtype=float)
            if mat.shape != (self.p, self.p):
                raise ValueError(f"S_{a} has shape {mat.shape}")
            if any(mat[i, j] != mat[j, i] for i in range(self.p) for j in range(i)):
                if self.exact or not np.allclose(mat, mat.T, atol=1e-12):
                    raise ValueError(f"S_{a} is not symmetric")
            clean[a] = mat
        self.S = clean

    def _zero(self) -> np.ndarray:
        if self.exact:
            z = np.empty((self.p, self.p), dtype=object)
            z[:] = Fraction(0)
            return z
        return np.zeros((self.p, self.p))

    def __getitem__(self, a: Monomial) -> np.ndarray:
        a = tuple(a)
        if sum(a) > 2 * self.d_cap:
            raise ValueError(f"index {a} exceeds truncation 2*{self.d_cap}")
        got = self.S.get(a)
        return self._zero() if got is None else got

    def S0(self) -> np.ndarray:
        return self[(0,) * self.n]

    @classmethod
    def from_atoms(cls, points: Sequence[Sequence], weights: Sequence[np.ndarray], d_cap: int,
                   exact: bool = False) -> "MomentSeq":
        """Moments of ``sum_i W_i delta_{u_i}`` with PSD weight matrices ``W_i``."""
        points = [tuple(pt) for pt in points]
        n = len(points[0])
        weights = [as_exact_array(W) if exact else np.asarray(W, dtype=float) for W in weights]
        p = weights[0].shape[0]
        S = {}
        for a in MonomialBasis(n, 2 * d_cap):
            acc = None
            for u, W in zip(points, weights):
                val = Fraction(1) if exact else 1.0
                for ui, e in zip(u, a):
                    val *= (to_fraction(ui) if exact else float(ui)) ** e
                acc = W * val if acc is None else acc + W * val
            S[a] = acc
        return cls(n, p, d_cap, S, exact)

    def to_float(self) -> "MomentSeq":
        if not self.exact:
            return self
        return MomentSeq(self.n, self.p, self.d_cap,
                         {a: np.asarray(v, dtype=float) for a, v in self.S.items()}, False)

    def scaled_entry(self, a: Monomial, factor) -> "MomentSeq":
        """Copy with ``S_a`` multiplied by ``factor``."""
        S = dict(self.S)
        S[tuple(a)] = self[a] * factor
        return MomentSeq(self.n, self.p, self.d_cap, S, self.exact)


def _check_H(S: MomentSeq, H: PolyMatrix) -> None:
    if H.n != S.n:
        raise ValueError(f"H has n={H.n}, sequence has n={S.n}")


def riesz(S: MomentSeq, H: PolyMatrix):
    """``L_S(H) = sum_a tr(H_a S_a)``."""
    _check_H(S, H)
    if H.size != S.p:
        raise ValueError(f"H has side {H.size}, expected p={S.p}")
    if H.m:
        if H.degree_y() > 0:
            raise ValueError("H depends on y; integrate first")
        H = H.drop_y()
    total = Fraction(0) if S.exact and H.exact else 0.0
    for a, Ha in H.coefficients().items():
        if sum(a) > 2 * S.d_cap:
            raise ValueError(f"monomial {a} exceeds truncation 2*{S.d_cap}")
        Sa = S.S.get(a)
        if Sa is None:
            continue
        if isinstance(total, float):
            total += float(np.trace(np.asarray(Ha, dtype=float) @ np.asarray(Sa, dtype=float)))
        else:
            total += sum(Ha[i, j] * Sa[j, i] for i in range(S.p) for j in range(S.p))
    return total


def _alloc(side: int, exact: bool) -> np.ndarray:
    if exact:
        out = np.empty((side, side), dtype=object)
        out[:] = Fraction(0)
        return out
    return np.zeros((side, side))


def moment_matrix(S: MomentSeq, d: int) -> np.ndarray:
    """Block ``(a, b)`` equals ``S_{a+b}`` over ``[x]_d``."""
    if d > S.d_cap:
        raise ValueError(f"order {d} exceeds truncation {S.d_cap}")
    basis = MonomialBasis(S.n, d).order
    p = S.p
    out = _alloc(p * len(basis), S.exact)
    for i, a in enumerate(basis):
        for j, b in enumerate(basis):
            out[i * p:(i + 1) * p, j * p:(j + 1) * p] = S[add_monomials(a, b)]
    return out


def _coef_blocks(H: PolyMatrix, exact: bool) -> dict[Monomial, np.ndarray]:
    coeffs = H.coefficients()
    if not exact:
        return {k: np.asarray(v, dtype=float) for k, v in coeffs.items()}
    if not H.exact:
        return {k: as_exact_array(v) for k, v in coeffs.items()}
    return coeffs


def localizing_matrix(S: MomentSeq, H: PolyMatrix, d: int) -> np.ndarray:
    """Block ``(a, b)`` equals ``sum_g S_{a+b+g} kron H_g`` over ``[x]_d``."""
    _check_H(S, H)
    if H.m and H.degree_y() > 0:
        raise ValueError("H depends on y; use localizing_nu")
    if H.m:
        H = H.drop_y()
    dh = max(H.degree(), 0)
    if 2 * d + dh > 2 * S.d_cap:
        raise ValueError(f"2d + deg H = {2 * d + dh} exceeds 2*{S.d_cap}")
    exact = S.exact and H.exact
    Sx = S if exact else S.to_float()
    basis = MonomialBasis(S.n, d).order
    blocks = _coef_blocks(H, exact)
    w = S.p * H.size
    out = _alloc(w * len(basis), exact)
    for i, a in enumerate(basis):
        for j, b in enumerate(basis):
            ab = add_monomials(a, b)
            acc = _alloc(w, exact)
            for g, Hg in blocks.items():
                acc = acc + np.kron(Sx[add_monomials(ab, g)], Hg)
            out[i * w:(i + 1) * w, j * w:(j + 1) * w] = acc
    return out


@dataclass(frozen=True)
class LocalizingIndex:
    """Row/column labels ``(a, e)`` of a nu-localizing matrix in ``[x]_d kron [y]_k`` order."""

    n: int
    m: int
    d: int
    k: int

    @property
    def labels(self) -> list[tuple[Monomial, Monomial]]:
        return [(a, e) for a in MonomialBasis(self.n, self.d) for e in MonomialBasis(self.m, self.k)]

    def __len__(self) -> int:
        return len(MonomialBasis(self.n, self.d)) * len(MonomialBasis(self.m, self.k))


def localizing_index(n: int, m: int, d: int, k: int) -> LocalizingIndex:
    return LocalizingIndex(n, m, d, k)


def localizing_nu(S: MomentSeq, G: PolyMatrix, nu: MeasureSpec, d: int, k: int) -> np.ndarray:
    """Nu-weighted localizing matrix of side ``p q |[x]_d| |[y]_k|``.

    Block ``((a, e), (b, f))`` is
    ``sum_{g, z} (int y^(g+e+f) dnu) S_{a+b+z} kron G_{g,z}``,
    with ``G = sum G_{g,z} x^z y^g``.
    """
    _check_H(S, G)
    if G.m != nu.m:
        raise ValueError(f"G has m={G.m}, measure has m={nu.m}")
    dgx = max(G.degree_x(), 0)
    if 2 * d + dgx > 2 * S.d_cap:
        raise ValueError(f"2d + deg_x G = {2 * d + dgx} exceeds 2*{S.d_cap}")
    exact = S.exact and G.exact
    Sx = S if exact else S.to_float()
    n, m = G.n, G.m
    # split coefficients by (y-part, x-part)
    split: dict[Monomial, list[tuple[Monomial, np.ndarray]]] = {}
    for mono, mat in _coef_blocks(G, exact).items():
        split.setdefault(mono[n:], []).append((mono[:n], mat))
    bx = MonomialBasis(n, d).order
    by = MonomialBasis(m, k).order
    w = S.p * G.size
    side = w * len(bx) * len(by)
    out = _alloc(side, exact)
    # x-part for each (a, b, g): sum_z S_{a+b+z} kron G_{g,z}
    for ia, a in enumerate(bx):
        for ib, b in enumerate(bx):
            ab = add_monomials(a, b)
            xpart = {}
            for g, items in split.items():
                acc = _alloc(w, exact)
                for z, Gz in items:
                    acc = acc + np.kron(Sx[add_monomials(ab, z)], Gz)
                xpart[g] = acc
            for ie, e in enumerate(by):
                for jf, f in enumerate(by):
                    ef = add_monomials(e, f)
                    blk = _alloc(w, exact)
                    for g, acc in xpart.items():
                        mom = nu.moment(add_monomials(g, ef))
                        if mom:
                            blk = blk + acc * (mom if exact else float(mom))
                    r = (ia * len(by) + ie) * w
                    c = (ib * len(by) + jf) * w
                    out[r:r + w, c:c + w] = blk
    return out


def riesz_gram_pairing(S: MomentSeq, Z: np.ndarray, G: PolyMatrix, nu: MeasureSpec,
                       d: int, k: int) -> tuple[float, float]:
    """Both sides of ``L_S(int <Sigma, G>_p dnu) = <M^nu(GS), Z>``.

    The left side expands the Gram form symbolically and applies the Riesz
    functional; the right side is a Frobenius product with the assembled
    localizing matrix.
    """
    q = G.size
    bx = MonomialBasis(G.n, d).order
    by = MonomialBasis(G.m, k).order
    gram = SOSGram(G.n, G.m, bx, by, S.p * q, Z)
    Mnu = localizing_nu(S, G, nu, d, k)
    if Mnu.shape != gram.Z.shape:
        raise ValueError(f"Z has shape {gram.Z.shape}, localizing matrix {Mnu.shape}")
    Sigma = expand_gram(gram)
    Gm = G if Sigma.exact == G.exact else (G.to_float() if not Sigma.exact else G.to_exact())
    lhs = riesz(S, integrate_y(bilinear_p(Sigma, Gm, S.p), nu))
    if gram.exact and S.exact:
        rhs = sum(Mnu[i, j] * gram.Z[i, j] for i in range(Mnu.shape[0]) for j in range(Mnu.shape[1]))
    else:
        rhs = float(np.sum(np.asarray(Mnu, dtype=float) * np.asarray(gram.Z, dtype=float)))
    return lhs, rhs


@dataclass
class BMPReport:
    min_eig_moment: float
    min_eig_localizing: float | None
    max_bound_violation: float
    worst_index: Monomial | None
    verdict: str
    note: str = "truncated necessary test: passing does not prove a representing measure exists"

    def to_dict(self) -> dict:
        return {
            "min_eig_moment": self.min_eig_moment,
            "min_eig_localizing": self.min_eig_localizing,
            "max_bound_violation": self.max_bound_violation,
            "worst_index": list(self.worst_index) if self.worst_index is not None else None,
            "verdict": self.verdict,
            "note": self.note,
        }


def bmp_check(S: MomentSeq, C: float, d: int, k: int = 0, G: PolyMatrix | None = None,
              nu: MeasureSpec | None = None, tol: float | None = None) -> BMPReport:
    """Finite-order necessary conditions for a representing measure on ``X cap [-C, C]^n``.

    Checks ``M_d(S) >= 0``, the nu-localizing matrix of order ``d - d(G)`` and
    ``||S_a|| <= tr(S_0) C^|a|`` (spectral norm) on every stored index.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    tol = config.DEFAULTS.psd_floor if tol is None else tol
    me = min_eig(moment_matrix(S, d))
    ml = None
    if G is not None:
        if nu is None:
            raise ValueError("a constraint needs a measure")
        dl = d - degrees(G).half_x
        if dl >= 0:
            ml = min_eig(localizing_nu(S, G, nu, dl, k))
    tr0 = float(np.trace(np.asarray(S.S0(), dtype=float)))
    worst, worst_idx = 0.0, None
    for a, Sa in S.S.items():
        norm = float(np.linalg.norm(np.asarray(Sa, dtype=float), 2))
        bound = tr0 * float(C) ** sum(a)
        excess = norm - bound
        if excess > worst + 0.0:
            worst, worst_idx = excess, a
    if me == float("inf"):
        me = 0.0
    scale = max(1.0, tr0)
    ok = me >= -tol * scale and (ml is None or ml >= -tol * scale) and worst <= tol * scale
    return BMPReport(me, ml, worst, worst_idx, "necessary-conditions-pass" if ok else "fail")
