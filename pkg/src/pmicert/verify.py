"""Independent checks: symbolic certificate reconstruction and grid oracles.

Grid-based checks sample finitely many points; they are necessary conditions
only and are labelled as such in their reports.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import config
from .certcore import SOSCertificate, expand_gram, gram_is_psd, multiplier_power
from .measures import MeasureSpec, integrate_y
from .polyalg import Monomial, PolyMatrix, bilinear_p


@dataclass
class VerifyReport:
    residual: float
    passed: bool
    grams_psd: bool
    worst_monomial: Monomial | None = None
    failed_grams: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "result": "PASS" if self.passed else "FAIL",
                "grams_psd": self.grams_psd,
                "worst_monomial": list(self.worst_monomial) if self.worst_monomial else None,
                "failed_grams": self.failed_grams}


def _match(A: PolyMatrix, B: PolyMatrix) -> tuple[PolyMatrix, PolyMatrix]:
    if A.exact and B.exact:
        return A, B
    return A.to_float(), B.to_float()


def reconstruct(cert: SOSCertificate, G: Sequence[PolyMatrix], nu: MeasureSpec,
                extras: Sequence[PolyMatrix] = (), p: int | None = None) -> PolyMatrix:
    """``sum Sigma_0 + sum_j int <Sigma_j, G_j>_p dnu + sum_l <Sigma_l, H_l>_p``."""
    total = None
    for term in cert.terms:
        S = expand_gram(term.gram)
        if term.role == "sigma0":
            part = S
        elif term.role == "sigma":
            Gj = G[term.index]
            pp = S.size // Gj.size
            S, Gj = _match(S, Gj)
            part = integrate_y(bilinear_p(S, Gj, pp), nu)
        elif term.role == "extra":
            H = extras[term.index]
            H = H.drop_y() if H.m else H
            pp = S.size // H.size
            S, H = _match(S, H)
            part = bilinear_p(S, H, pp)
        else:
            raise ValueError(f"unknown certificate role {term.role!r}")
        if part.m:
            part = part.drop_y()
        if total is None:
            total = part
        else:
            total, part = _match(total, part)
            total = total + part
    if total is None:
        if p is None:
            raise ValueError("empty certificate needs the target size")
        return None
    return total


def verify_certificate(F: PolyMatrix, cert: SOSCertificate, G: Sequence[PolyMatrix],
                       nu: MeasureSpec, tol: float | None = None,
                       extras: Sequence[PolyMatrix] = ()) -> VerifyReport:
    """Max over monomials of the spectral norm of ``F_a - R_a``; PASS needs PSD Grams too."""
    tol = config.DEFAULTS.verification if tol is None else tol
    F = F.drop_y() if F.m else F
    R = reconstruct(cert, G, nu, extras, F.size)
    failed = [i for i, t in enumerate(cert.terms) if not gram_is_psd(t.gram)]
    if R is None:
        diff = F
    else:
        if R.size != F.size or R.n != F.n:
            raise ValueError(f"certificate reconstructs a {R.size}x{R.size} matrix in {R.n} variables, "
                             f"target is {F.size}x{F.size} in {F.n}")
        A, B = _match(F, R)
        diff = A - B
    worst, where = 0.0, None
    for mono, mat in diff.coefficients().items():
        v = float(np.linalg.norm(np.asarray(mat, dtype=float), 2))
        if v > worst:
            worst, where = v, mono
    return VerifyReport(worst, worst <= tol and not failed, not failed, where, failed)


# -- grid oracles ----------------------------------------------------------------------

def box_grid(n: int, C: float, density: int) -> np.ndarray:
    if density < 2:
        raise ValueError("grid density must be at least 2 per axis")
    axis = np.linspace(-C, C, density)
    if n == 0:
        return np.zeros((1, 0))
    return np.array(list(itertools.product(axis, repeat=n)))


def _y_points(nu: MeasureSpec | None, y_points, density: int) -> np.ndarray | None:
    if y_points is not None:
        return np.atleast_2d(np.asarray(y_points, dtype=float))
    if nu is None:
        return None
    pts = nu.sample_points(density)
    return np.array(pts, dtype=float).reshape(len(pts), nu.m)


def feasible_mask(xs: np.ndarray, G: Sequence[PolyMatrix], ys: np.ndarray | None,
                  floor: float | None = None) -> np.ndarray:
    """Points where every ``G_j(x, y)`` has min eigenvalue ``>= -floor`` on every sampled y."""
    floor = config.DEFAULTS.psd_floor if floor is None else floor
    mask = np.ones(len(xs), dtype=bool)
    for Gj in G:
        ev = Gj.numeric()
        if Gj.m == 0 or ys is None:
            pts = xs if Gj.m == 0 else np.hstack([xs, np.zeros((len(xs), Gj.m))])
            mask &= np.linalg.eigvalsh(ev(pts))[:, 0] >= -floor
            continue
        for y in ys:
            pts = np.hstack([xs, np.tile(y, (len(xs), 1))])
            mask &= np.linalg.eigvalsh(ev(pts))[:, 0] >= -floor
    return mask


@dataclass
class GridReport:
    min_eig: float | None
    argmin: list[float] | None
    n_feasible: int
    n_points: int
    outcome: str
    note: str = "grid sampling: necessary check only"

    def to_dict(self) -> dict:
        return {"min_eig": self.min_eig, "argmin": self.argmin, "n_feasible": self.n_feasible,
                "n_points": self.n_points, "outcome": self.outcome, "note": self.note}


def grid_pd_check(H: PolyMatrix, C: float, density: int = 21,
                  G: Sequence[PolyMatrix] | None = None, nu: MeasureSpec | None = None,
                  y_points=None) -> GridReport:
    """Minimum of ``lambda_min(H(x))`` over grid points of ``[-C, C]^n`` inside the sampled set."""
    H = H.drop_y() if H.m else H
    xs = box_grid(H.n, C, density)
    if G:
        ys = _y_points(nu, y_points, density)
        xs_f = xs[feasible_mask(xs, G, ys)]
    else:
        xs_f = xs
    if len(xs_f) == 0:
        return GridReport(None, None, 0, len(xs), "no feasible sample")
    eig = np.linalg.eigvalsh(H.numeric()(xs_f))[:, 0]
    i = int(np.argmin(eig))
    outcome = "positive" if eig[i] > 0 else "nonpositive"
    return GridReport(float(eig[i]), xs_f[i].tolist(), len(xs_f), len(xs), outcome)


def estimate_M(G: Sequence[PolyMatrix], C: float, nu: MeasureSpec | None = None,
               y_points=None, density: int = 21, safety: float | None = None) -> float:
    """Grid estimate of ``max |lambda_max(G_j(x, y))|`` times a safety factor."""
    safety = config.DEFAULTS.m_safety if safety is None else safety
    best = 0.0
    for Gj in G:
        xs = box_grid(Gj.n, C, density)
        ys = _y_points(nu, y_points, density) if Gj.m else None
        ev = Gj.numeric()
        pts_list = [xs] if ys is None else [np.hstack([xs, np.tile(y, (len(xs), 1))]) for y in ys]
        for pts in pts_list:
            lam = np.linalg.eigvalsh(ev(pts))[:, -1]
            best = max(best, float(np.max(np.abs(lam))))
    return best * safety


@dataclass
class PropMainReport:
    M: float
    table: dict[int, float | None]
    k_bar: int | None
    monotone_ok: bool
    monotone_violation: float
    note: str = "grid estimate; the multiplier bound M is itself a grid estimate"

    def to_dict(self) -> dict:
        return {"M": self.M, "table": {str(k): v for k, v in self.table.items()}, "k_bar": self.k_bar,
                "monotone_ok": self.monotone_ok, "monotone_violation": self.monotone_violation,
                "note": self.note}


def prop_main_check(F: PolyMatrix, G: Sequence[PolyMatrix], nu: MeasureSpec, C: float,
                    M: float | None = None, k_range: Sequence[int] = range(13), density: int = 41,
                    y_points=None) -> PropMainReport:
    """Sweep ``R_k = F - sum_j int tr((I - G_j/M)^(2k) G_j) dnu * I_p`` over ``k``.

    Records the grid minimum eigenvalue of ``R_k`` on ``[-C, C]^n`` and the
    smallest ``k`` where it is positive.  Also checks, on feasible grid points
    where ``0 <= G <= M I``, that the multiplier scalar does not increase for
    ``k >= 1``.
    """
    F = F.drop_y() if F.m else F
    p, n = F.size, F.n
    if M is None:
        M = estimate_M(G, C, nu, y_points, density)
    if M <= 0:
        raise ValueError("M must be positive")
    xs = box_grid(n, C, density)
    ys = _y_points(nu, y_points, density) if any(g.m for g in G) else None
    table: dict[int, float | None] = {}
    k_bar = None
    mult_vals: dict[int, np.ndarray] = {}
    for k in k_range:
        R = F.to_float()
        total_mult = np.zeros(len(xs))
        for Gj in G:
            mp = multiplier_power(Gj.to_float(), M, k, p)
            term = integrate_y(mp, nu)
            R = R - term
            total_mult += term.numeric()(xs)[:, 0, 0]
        mult_vals[k] = total_mult
        eig = float(np.min(np.linalg.eigvalsh(R.numeric()(xs))[:, 0]))
        table[k] = eig
        if k_bar is None and eig > 0:
            k_bar = k
    # monotonicity of the pointwise multiplier on the part of the grid where 0 <= G <= M
    inside = np.ones(len(xs), dtype=bool)
    for Gj in G:
        ev = Gj.numeric()
        pts_list = [xs] if not Gj.m else [np.hstack([xs, np.tile(y, (len(xs), 1))]) for y in ys]
        for pts in pts_list:
            lam = np.linalg.eigvalsh(ev(pts))
            inside &= (lam[:, 0] >= -config.DEFAULTS.psd_floor) & (lam[:, -1] <= M + config.DEFAULTS.psd_floor)
    ks = sorted(k for k in mult_vals if k >= 1)
    worst = 0.0
    for a, b in zip(ks, ks[1:]):
        worst = max(worst, float(np.max(mult_vals[b][inside] - mult_vals[a][inside], initial=0.0)))
    return PropMainReport(float(M), table, k_bar, worst <= 1e-9, worst)


def multiplier_scalar(lams: np.ndarray, M: float, k: int) -> np.ndarray:
    """Eigenvalue form ``sum_i lam_i (1 - lam_i / M)^(2k)``."""
    lams = np.asarray(lams, dtype=float)
    return np.sum(lams * (1 - lams / M) ** (2 * k), axis=-1)
