"""SDP relaxations for positivity certificates of polynomial matrices.

Every builder fixes a family of Gram blocks, a target polynomial matrix
(possibly affine in a few free scalars) and an objective, then matches
coefficients.  Solving and decoding produce a ``HierarchyResult`` whose
certificate is re-checked by ``verify.verify_certificate``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import config
from .certcore import CertTerm, SOSCertificate, SOSGram, is_pd_exact
from .measures import MeasureSpec, carleman_note, integrate_y
from .momentside import MomentSeq
from .polyalg import (Monomial, MonomialBasis, Poly, PolyMatrix, add_monomials, big_theta,
                      degrees, monomials_of_degree, norm_sq, theta, to_fraction)
from .sdp import ConicProblem, Row, SolveReport, solve
from .verify import verify_certificate

CERTIFIED = "certified"
BOUND_FOUND = "bound-found"
INFEASIBLE = "infeasible-at-order"
SOLVER_FAILURE = "solver-failure"


# -- problem data ------------------------------------------------------------------

@dataclass
class PMIProblem:
    """Target ``F`` (p x p in x), constraints ``G_j`` in (x, y), measure, extra x-constraints."""

    F: PolyMatrix | None
    G: list[PolyMatrix]
    nu: MeasureSpec
    extras: list[PolyMatrix] = field(default_factory=list)
    objective_c: list[Fraction] | None = None
    objective_P: list[PolyMatrix] | None = None
    cliques: "CliqueDecomposition | None" = None

    def __post_init__(self):
        for j, G in enumerate(self.G):
            if not G.symmetric:
                raise ValueError(f"constraint {j + 1} is not symmetric")
            if G.m != self.nu.m:
                raise ValueError(f"constraint {j + 1} has m={G.m}, measure has m={self.nu.m}")
        if self.F is not None and not self.F.symmetric:
            raise ValueError("F is not symmetric")

    @property
    def n(self) -> int:
        if self.F is not None:
            return self.F.n
        return self.objective_P[0].n

    @property
    def p(self) -> int:
        return self.F.size if self.F is not None else self.objective_P[0].size


@dataclass(frozen=True)
class RelaxationOrder:
    d: int = 1
    k: int = 0
    N: int = 0
    eps: float = 0.0

    def __post_init__(self):
        if min(self.d, self.k, self.N) < 0 or self.eps < 0:
            raise ValueError("relaxation orders must be nonnegative")


@dataclass
class CliqueDecomposition:
    """Variable cliques (1-based indices) and constraint assignments (1-based)."""

    cliques: list[tuple[int, ...]]
    assignments: list[list[int]] | None = None

    def validate(self, n: int, G: Sequence[PolyMatrix]) -> list[list[int]]:
        ok, witness = rip_validate(self)
        if not ok:
            raise ValueError(f"running intersection property fails at clique {witness}")
        for c in self.cliques:
            if any(not 1 <= v <= n for v in c):
                raise ValueError(f"clique {c} references variables outside 1..{n}")
        assign = self.assignments
        if assign is None:
            assign = [[] for _ in self.cliques]
            for j, Gj in enumerate(G):
                used = {v + 1 for v in Gj.variables_used() if v < n}
                host = next((l for l, c in enumerate(self.cliques) if used <= set(c)), None)
                if host is None:
                    raise ValueError(f"constraint {j + 1} is not covered by any clique")
                assign[host].append(j + 1)
        else:
            for l, js in enumerate(assign):
                for j in js:
                    used = {v + 1 for v in G[j - 1].variables_used() if v < n}
                    if not used <= set(self.cliques[l]):
                        raise ValueError(f"constraint {j} uses variables outside clique {l + 1}")
        return assign


def rip_validate(cd: CliqueDecomposition | Sequence[Sequence[int]]) -> tuple[bool, int | None]:
    """Running intersection check; returns ``(ok, violating clique index)`` (1-based)."""
    cliques = cd.cliques if isinstance(cd, CliqueDecomposition) else cd
    sets = [set(c) for c in cliques]
    seen: set[int] = set()
    for l, s in enumerate(sets):
        if l > 0:
            inter = s & seen
            if not any(inter <= sets[k] for k in range(l)):
                return False, l + 1
        seen |= s
    return True, None


@dataclass
class HierarchyResult:
    status: str
    value: float | None = None
    certificate: SOSCertificate | None = None
    residual: float | None = None
    target: PolyMatrix | None = None
    report: SolveReport | None = None
    problem: ConicProblem | None = None
    dual_moments: MomentSeq | None = None
    meta: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status in (CERTIFIED, BOUND_FOUND)


# -- generic assembly ----------------------------------------------------------------

@dataclass
class GramSpec:
    """Gram block template together with the matrix it is paired with."""

    role: str
    index: int
    n: int
    m: int
    basis_x: tuple[Monomial, ...]
    basis_y: tuple[Monomial, ...]
    p: int
    pair: PolyMatrix | None = None     # G (in x, y) for sigma, H (in x) for extra
    nu: MeasureSpec | None = None
    shift: Monomial | None = None
    margin: float = 0.0
    clique: int | None = None
    _kern: dict = field(default_factory=dict, repr=False)

    @property
    def q(self) -> int:
        return 1 if self.pair is None else self.pair.size

    @property
    def block(self) -> int:
        return self.p * self.q

    @property
    def side(self) -> int:
        return len(self.basis_x) * len(self.basis_y) * self.block

    def slots(self) -> list[tuple[Monomial, Monomial]]:
        return [(bx, by) for bx in self.basis_x for by in self.basis_y]

    def kernel(self, e: Monomial) -> dict[tuple[int, int], list[tuple[Monomial, float]]]:
        """Coefficients of ``int y^e pair_st dnu`` as polynomials in x."""
        if e in self._kern:
            return self._kern[e]
        if self.role == "sigma0":
            out = {(0, 0): [((0,) * self.n, 1.0)]}
        elif self.role == "extra":
            out = _coef_lists(self.pair)
        else:
            mono = Poly.monomial((0,) * self.n + tuple(e), self.n, self.m, exact=self.pair.exact)
            out = _coef_lists(integrate_y(self.pair * mono, self.nu))
        self._kern[e] = out
        return out

    def decode(self, X: np.ndarray) -> SOSGram:
        Z = np.array(X, dtype=float)
        if self.margin:
            Z = Z + self.margin * np.eye(Z.shape[0])
        m = self.m if self.role == "sigma" else 0
        by = self.basis_y if self.role == "sigma" else ((),)
        return SOSGram(self.n, m, self.basis_x, by, self.block, Z, self.shift)


def _coef_lists(H: PolyMatrix) -> dict[tuple[int, int], list[tuple[Monomial, float]]]:
    out = {}
    for s in range(H.size):
        for t in range(H.size):
            terms = [(k, float(c)) for k, c in H[s, t].items()]
            if terms:
                out[(s, t)] = terms
    return out


def _coef_matrices(H: PolyMatrix) -> dict[Monomial, np.ndarray]:
    return {k: np.asarray(v, dtype=float) for k, v in H.coefficients().items()}


class Assembler:
    """Coefficient matching ``sum_blocks contribution + sum_f coef_f * f = target``."""

    def __init__(self, n: int, p: int):
        self.n, self.p = n, p
        self.prob = ConicProblem()
        self.rows: dict[tuple, Row] = {}
        self.specs: list[GramSpec] = []
        self.shift: dict[tuple, float] = {}

    def _row(self, key) -> Row:
        if key not in self.rows:
            self.rows[key] = Row()
        return self.rows[key]

    def add_gram(self, spec: GramSpec) -> int:
        if spec.side == 0:
            return -1
        name = f"{spec.role}[{spec.index}]" + (f"@{spec.clique}" if spec.clique is not None else "")
        blk = self.prob.add_block(spec.side, name)
        self.specs.append(spec)
        B, q, p = spec.block, spec.q, spec.p
        slots = spec.slots()
        sh = spec.shift or (0,) * spec.n
        for a, (xa, ya) in enumerate(slots):
            for b, (xb, yb) in enumerate(slots):
                kern = spec.kernel(add_monomials(ya, yb))
                if not kern:
                    continue
                xab = add_monomials(add_monomials(xa, xb), sh)
                for (s, t), terms in kern.items():
                    for i in range(p):
                        for j in range(i, p):
                            I, J = a * B + j * q + s, b * B + i * q + t
                            w = 1.0 if I == J else 0.5
                            for z, c in terms:
                                key = (add_monomials(xab, z), i, j)
                                self._row(key).add(blk, I, J, w * c)
                                if spec.margin and I == J:
                                    self.shift[key] = self.shift.get(key, 0.0) + spec.margin * c
        return blk

    def add_target(self, T: PolyMatrix, scale: float = 1.0) -> None:
        for mu, mat in _coef_matrices(T).items():
            for i in range(self.p):
                for j in range(i, self.p):
                    if mat[i, j]:
                        self._row((mu, i, j)).rhs += scale * mat[i, j]

    def add_free_term(self, fidx: int, T: PolyMatrix, scale: float = 1.0) -> None:
        for mu, mat in _coef_matrices(T).items():
            for i in range(self.p):
                for j in range(i, self.p):
                    if mat[i, j]:
                        self._row((mu, i, j)).add_free(fidx, scale * mat[i, j])

    def finish(self) -> ConicProblem:
        keys = sorted(self.rows, key=lambda k: (sum(k[0]), tuple(-e for e in k[0]), k[1], k[2]))
        for key in keys:
            row = self.rows[key]
            row.rhs -= self.shift.get(key, 0.0)
            if not row.entries and not row.free and abs(row.rhs) == 0:
                continue
            self.prob.add_row(row)
        self.prob.meta["row_keys"] = [k for k in keys if self.rows[k] in self.prob.rows]
        return self.prob

    def decode(self, rep: SolveReport, meta: dict) -> SOSCertificate:
        terms = []
        for blk, spec in enumerate(self.specs):
            terms.append(CertTerm(spec.role, spec.decode(rep.X[blk]), spec.index, spec.clique))
        return SOSCertificate(terms, meta)

    def ray_moments(self, rep: SolveReport) -> MomentSeq | None:
        """Farkas ray as a moment sequence with ``L_S(target) = -1`` and ``L_S >= 0`` on the cone."""
        if rep.ray is None:
            return None
        keys = self.prob.meta["row_keys"]
        S: dict[Monomial, np.ndarray] = {}
        for (mu, i, j), yv in zip(keys, rep.ray):
            mat = S.setdefault(mu, np.zeros((self.p, self.p)))
            if i == j:
                mat[i, i] = -yv
            else:
                mat[i, j] = mat[j, i] = -yv / 2
        top = max((sum(mu) for mu in S), default=0)
        return MomentSeq(self.n, self.p, (top + 1) // 2, S)


# -- helpers -----------------------------------------------------------------------

def _half_ceil(G: PolyMatrix) -> int:
    """``ceil(deg_x G / 2)``."""
    return degrees(G).half_x


def _dH(G: PolyMatrix) -> int:
    return degrees(G).d_H


def default_k(G: Sequence[PolyMatrix]) -> int:
    return max([(max(g.degree_y(), 0) + 1) // 2 for g in G], default=0)


def _sigma_specs(prob_n: int, p: int, G: Sequence[PolyMatrix], nu: MeasureSpec, x_degs: Sequence[int],
                 k: int, support: tuple[int, ...] | None = None, clique: int | None = None,
                 indices: Sequence[int] | None = None, homogeneous: bool = False) -> list[GramSpec]:
    specs = []
    indices = list(range(len(G))) if indices is None else list(indices)
    for j, dx in zip(indices, x_degs):
        if dx < 0:
            continue
        bx = MonomialBasis(prob_n, dx, homogeneous, support).order
        by = MonomialBasis(nu.m, k).order
        specs.append(GramSpec("sigma", j, prob_n, nu.m, bx, by, p, G[j], nu, clique=clique))
    return specs


def _sigma0(n: int, p: int, d: int, homogeneous: bool = False,
            support: tuple[int, ...] | None = None, clique: int | None = None) -> GramSpec:
    return GramSpec("sigma0", 0, n, 0, MonomialBasis(n, d, homogeneous, support).order, ((),), p,
                    clique=clique)


def _extra_specs(n: int, p: int, extras: Sequence[PolyMatrix], d_cap: int) -> list[GramSpec]:
    out = []
    for l, H in enumerate(extras):
        if H.m and H.degree_y() > 0:
            raise ValueError("extra constraints must not depend on y")
        H = H.drop_y() if H.m else H
        dx = d_cap - _half_ceil(H)
        if dx >= 0:
            out.append(GramSpec("extra", l, n, 0, MonomialBasis(n, dx).order, ((),), p, H))
    return out


def _run_feasibility(asm: Assembler, target: PolyMatrix, problem: PMIProblem, meta: dict,
                     tol: float | None = None) -> HierarchyResult:
    tol = config.DEFAULTS.verification if tol is None else tol
    prob = asm.finish()
    prob.meta.update(meta)
    rep = solve(prob)
    return _interpret(asm, rep, target, problem, meta, tol, CERTIFIED)


def _interpret(asm: Assembler, rep: SolveReport, target: PolyMatrix, problem: PMIProblem,
               meta: dict, tol: float, ok_status: str, value: float | None = None) -> HierarchyResult:
    if rep.status == "primal-infeasible":
        return HierarchyResult(INFEASIBLE, target=target, report=rep, problem=asm.prob,
                               dual_moments=asm.ray_moments(rep), meta=meta)
    if rep.status != "optimal":
        return HierarchyResult(SOLVER_FAILURE, target=target, report=rep, problem=asm.prob, meta=meta)
    cert = asm.decode(rep, meta)
    vr = verify_certificate(target, cert, problem.G, problem.nu, tol=tol, extras=problem.extras)
    status = ok_status if vr.passed else SOLVER_FAILURE
    return HierarchyResult(status, value, cert, vr.residual, target, rep, asm.prob, meta=meta)


def _carleman_meta(nu: MeasureSpec) -> dict:
    return {"measure": nu.identifier(), "carleman": carleman_note(nu)}


# -- membership ----------------------------------------------------------------------

def build_membership(problem: PMIProblem, d: int, k: int | None = None) -> Assembler:
    F = problem.F
    n, p = F.n, F.size
    k = default_k(problem.G) if k is None else k
    if F.degree_x() > 2 * d:
        raise ValueError(f"deg F = {F.degree_x()} exceeds the cap 2d = {2 * d}")
    asm = Assembler(n, p)
    asm.add_gram(_sigma0(n, p, d))
    for spec in _sigma_specs(n, p, problem.G, problem.nu, [d - _half_ceil(G) for G in problem.G], k):
        asm.add_gram(spec)
    for spec in _extra_specs(n, p, problem.extras, d):
        asm.add_gram(spec)
    asm.add_target(_x_only(F))
    return asm


def _x_only(F: PolyMatrix) -> PolyMatrix:
    if F.m:
        if F.degree_y() > 0:
            raise ValueError("target must not depend on y")
        return F.drop_y()
    return F


def certify_membership(problem: PMIProblem, d: int, k: int | None = None,
                       tol: float | None = None) -> HierarchyResult:
    k = default_k(problem.G) if k is None else k
    asm = build_membership(problem, d, k)
    meta = {"hierarchy": "membership", "d": d, "k": k, **_carleman_meta(problem.nu)}
    return _run_feasibility(asm, _x_only(problem.F), problem, meta, tol)


# -- sparse ----------------------------------------------------------------------------

def build_sparse(problem: PMIProblem, cliques: CliqueDecomposition, d: int,
                 k: int | None = None) -> Assembler:
    F = problem.F
    if F.size != 1:
        raise ValueError("the sparse certificate is only valid for scalar targets (p = 1); "
                         "the matrix-valued sparse analogue fails in general (known counterexample)")
    n = F.n
    k = default_k(problem.G) if k is None else k
    assign = cliques.validate(n, problem.G)
    asm = Assembler(n, 1)
    for l, (clique, js) in enumerate(zip(cliques.cliques, assign)):
        support = tuple(v - 1 for v in clique)
        asm.add_gram(_sigma0(n, 1, d, support=support, clique=l + 1))
        idx = [j - 1 for j in js]
        degs = [d - _half_ceil(problem.G[j]) for j in idx]
        for spec in _sigma_specs(n, 1, problem.G, problem.nu, degs, k, support, l + 1, idx):
            asm.add_gram(spec)
    asm.add_target(_x_only(F))
    return asm


def certify_sparse(problem: PMIProblem, cliques: CliqueDecomposition, d: int,
                   k: int | None = None, tol: float | None = None) -> HierarchyResult:
    k = default_k(problem.G) if k is None else k
    asm = build_sparse(problem, cliques, d, k)
    meta = {"hierarchy": "sparse", "d": d, "k": k, "cliques": [list(c) for c in cliques.cliques],
            **_carleman_meta(problem.nu)}
    return _run_feasibility(asm, _x_only(problem.F), problem, meta, tol)


# -- homogeneous / inhomogeneous -----------------------------------------------------

def _require_even_form(H: PolyMatrix, what: str) -> int:
    if H.is_zero():
        return 0
    if not H.is_homogeneous_x():
        raise ValueError(f"{what} is not homogeneous in x")
    deg = H.degree_x()
    if deg % 2:
        raise ValueError(f"{what} has odd x-degree {deg}")
    return deg


def build_homogeneous(problem: PMIProblem, N: int, k: int | None = None) -> Assembler:
    F = _x_only(problem.F)
    n, p = F.n, F.size
    k = default_k(problem.G) if k is None else k
    degF = _require_even_form(F, "F")
    half = N + degF // 2
    asm = Assembler(n, p)
    asm.add_gram(_sigma0(n, p, half, homogeneous=True))
    degs = []
    for j, G in enumerate(problem.G):
        if G.is_zero():
            degs.append(-1)
            continue
        dg = _require_even_form(G, f"constraint {j + 1}")
        degs.append(half - dg // 2)
    for spec in _sigma_specs(n, p, problem.G, problem.nu, degs, k, homogeneous=True):
        asm.add_gram(spec)
    asm.add_target(F * (norm_sq(n, exact=F.exact) ** N))
    return asm


def certify_homogeneous(problem: PMIProblem, N: int, k: int | None = None,
                        tol: float | None = None) -> HierarchyResult:
    k = default_k(problem.G) if k is None else k
    F = _x_only(problem.F)
    asm = build_homogeneous(problem, N, k)
    target = F * (norm_sq(F.n, exact=F.exact) ** N)
    meta = {"hierarchy": "homogeneous", "N": N, "k": k, **_carleman_meta(problem.nu)}
    return _run_feasibility(asm, target, problem, meta, tol)


def inhomogeneous_target(F: PolyMatrix, eps, N: int) -> PolyMatrix:
    """``theta^N (F + eps theta^(d_F) I_p)`` with ``theta = 1 + |x|^2``."""
    eps = to_fraction(eps) if F.exact else float(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    th = theta(F.n, exact=F.exact)
    dF = degrees(F).d_H
    pert = PolyMatrix.identity(F.size, F.n, exact=F.exact) * (th ** dF * eps)
    return (F + pert) * (th ** N)


def build_inhomogeneous(problem: PMIProblem, eps, N: int, k: int | None = None) -> Assembler:
    F = _x_only(problem.F)
    n, p = F.n, F.size
    k = default_k(problem.G) if k is None else k
    target = inhomogeneous_target(F, eps, N)
    cap = N + degrees(F).d_H
    asm = Assembler(n, p)
    asm.add_gram(_sigma0(n, p, cap))
    degs = [cap - _dH(G) for G in problem.G]
    for spec in _sigma_specs(n, p, problem.G, problem.nu, degs, k):
        asm.add_gram(spec)
    asm.add_target(target)
    return asm


def certify_inhomogeneous(problem: PMIProblem, eps, N: int | None = None, k: int | None = None,
                          n_cap: int | None = None, tol: float | None = None) -> HierarchyResult:
    """Certificate for the perturbed target; ``N=None`` searches ``N = 0..n_cap``."""
    k = default_k(problem.G) if k is None else k
    F = _x_only(problem.F)
    Ns = [N] if N is not None else range((config.DEFAULTS.auto_n_cap if n_cap is None else n_cap) + 1)
    last = None
    for n_try in Ns:
        asm = build_inhomogeneous(problem, eps, n_try, k)
        meta = {"hierarchy": "inhomogeneous", "N": n_try, "k": k, "eps": float(eps),
                **_carleman_meta(problem.nu)}
        last = _run_feasibility(asm, inhomogeneous_target(F, eps, n_try), problem, meta, tol)
        if last.status == CERTIFIED:
            return last
    if N is None:
        last.meta["search"] = f"not found for N <= {Ns[-1]}"
    return last


def search_N(certify, n_cap: int | None = None) -> HierarchyResult:
    """Call ``certify(N)`` for N = 0, 1, ... until certified or the cap is hit."""
    cap = config.DEFAULTS.auto_n_cap if n_cap is None else n_cap
    last = None
    for N in range(cap + 1):
        last = certify(N)
        if last.status == CERTIFIED:
            return last
    last.meta["search"] = f"not found for N <= {cap}"
    return last


# -- Polya -----------------------------------------------------------------------------

def coordinate_sum(n: int, exact: bool = True) -> Poly:
    """``x_1 + ... + x_n``, the Polya multiplier base."""
    s = Poly.zero(n, exact=exact)
    for i in range(n):
        s = s + Poly.x(i, n, exact=exact)
    return s


def polya_L(P: PolyMatrix):
    """``max_a (a! / D!) ||P_a||`` over the coefficients of a form of degree D."""
    D = max(P.degree_x(), 0)
    best = Fraction(0) if P.exact and P.size == 1 else 0.0
    for a, mat in P.coefficients().items():
        w = Fraction(math.prod(math.factorial(e) for e in a[:P.n]), math.factorial(D))
        if P.size == 1 and P.exact:
            val = w * abs(mat[0, 0])
        else:
            val = float(w) * float(np.linalg.norm(np.asarray(mat, dtype=float), 2))
        best = max(best, val)
    return best


def polya_bound(P: PolyMatrix, lam) -> int:
    """Smallest integer N with ``N >= D(D-1) L / (2 lam) - D``, clamped at 0."""
    if not P.is_homogeneous_x():
        raise ValueError("P must be homogeneous")
    lam = to_fraction(lam)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    D = max(P.degree_x(), 0)
    L = polya_L(P)
    if isinstance(L, Fraction):
        bound = Fraction(D * (D - 1)) * L / (2 * lam) - D
        return max(0, math.ceil(bound))
    bound = D * (D - 1) * L / (2 * float(lam)) - D
    return max(0, math.ceil(bound - 1e-12))


@dataclass
class PolyaReport:
    N: int
    min_eig: float
    verdict: str
    non_pd: list[Monomial]
    coefficients: dict[Monomial, np.ndarray]


def polya_expand_check(P: PolyMatrix, N: int) -> PolyaReport:
    """Expand ``(sum x_i)^N P`` exactly and test every coefficient of its degree for PD."""
    if not P.is_homogeneous_x():
        raise ValueError("P must be homogeneous")
    P = _x_only(P)
    n, p = P.n, P.size
    s = coordinate_sum(n, P.exact)
    Q = P * (s ** N)
    D = max(P.degree_x(), 0) + N
    coeffs = Q.coefficients()
    zero = np.zeros((p, p), dtype=object if P.exact else float)
    if P.exact:
        zero[:] = Fraction(0)
    worst = math.inf
    non_pd, table = [], {}
    for a in monomials_of_degree(n, D):
        C = coeffs.get(a, zero)
        table[a] = C
        ev = float(np.linalg.eigvalsh(np.asarray(C, dtype=float))[0])
        worst = min(worst, ev)
        pd = is_pd_exact(C) if P.exact else ev > 0
        if not pd:
            non_pd.append(a)
    return PolyaReport(N, worst, "all-PD" if not non_pd else "not-all-PD", non_pd, table)


def build_polya(problem: PMIProblem, N: int, k: int | None = None,
                delta: float | None = None) -> Assembler:
    F = _x_only(problem.F)
    n, p = F.n, F.size
    nu = problem.nu
    if not nu.is_compact:
        raise ValueError("the Polya certificate needs a compactly supported measure")
    if not F.is_homogeneous_x():
        raise ValueError("F is not homogeneous in x")
    k = default_k(problem.G) if k is None else k
    delta = config.DEFAULTS.polya_delta if delta is None else delta
    T = N + max(F.degree_x(), 0)
    asm = Assembler(n, p)
    origin = ((0,) * n,)
    for a in monomials_of_degree(n, T):
        asm.add_gram(GramSpec("sigma0", 0, n, 0, origin, ((),), p, shift=a, margin=delta))
    by_k = MonomialBasis(nu.m, k).order
    for j, G in enumerate(problem.G):
        if G.is_zero():
            continue
        if not G.is_homogeneous_x():
            raise ValueError(f"constraint {j + 1} is not homogeneous in x")
        t = T - max(G.degree_x(), 0)
        for a in monomials_of_degree(n, t) if t >= 0 else []:
            asm.add_gram(GramSpec("sigma", j, n, nu.m, origin, by_k, p, G, nu, shift=a))
            asm.add_gram(GramSpec("sigma", j, n, nu.m, origin, ((0,) * nu.m,), p, G, nu,
                                  shift=a, margin=delta))
    s = coordinate_sum(n, F.exact)
    asm.add_target(F * (s ** N))
    return asm


def certify_polya(problem: PMIProblem, N: int, k: int | None = None, delta: float | None = None,
                  tol: float | None = None) -> HierarchyResult:
    k = default_k(problem.G) if k is None else k
    F = _x_only(problem.F)
    asm = build_polya(problem, N, k, delta)
    s = coordinate_sum(F.n, F.exact)
    meta = {"hierarchy": "polya", "N": N, "k": k,
            "delta": config.DEFAULTS.polya_delta if delta is None else delta, **_carleman_meta(problem.nu)}
    return _run_feasibility(asm, F * (s ** N), problem, meta, tol)


# -- perturbation ------------------------------------------------------------------------

def build_perturbation(problem: PMIProblem, d: int, k: int | None = None
                       ) -> tuple[Assembler, ConicProblem]:
    """Primal ``min r : F + r (1 + sum x_i^(2d)) I = Sigma_0 + sum int <Sigma_j, G_j> dnu`` and its moment dual."""
    F = _x_only(problem.F)
    n, p = F.n, F.size
    k = default_k(problem.G) if k is None else k
    dG = [_half_ceil(G) for G in problem.G]
    if any(d < g for g in dG):
        raise ValueError(f"order d = {d} is below d(G) = {max(dG)}")
    if F.degree_x() > 2 * d:
        raise ValueError(f"deg F = {F.degree_x()} exceeds 2d = {2 * d}")
    asm = Assembler(n, p)
    asm.add_gram(_sigma0(n, p, d))
    for spec in _sigma_specs(n, p, problem.G, problem.nu, [d - g for g in dG], k):
        asm.add_gram(spec)
    r = asm.prob.add_free("r")
    Th = PolyMatrix.identity(p, n, exact=F.exact) * big_theta(n, d, exact=F.exact)
    asm.add_target(F)
    asm.add_free_term(r, Th, -1.0)
    asm.prob.objective.add_free(r, 1.0)
    asm.prob.sense = "min"
    primal = asm.finish()
    dual = build_perturbation_dual(F, problem.G, problem.nu, d, k)
    return asm, dual


def build_perturbation_dual(F: PolyMatrix, G: Sequence[PolyMatrix], nu: MeasureSpec, d: int,
                            k: int) -> ConicProblem:
    """``max -riesz(S, F)`` s.t. ``riesz(S, (1 + sum x_i^(2d)) I) <= 1``, moment and nu-localizing matrices PSD.

    Unknowns: free entries ``S_a[u, v]`` (u <= v, |a| <= 2d); PSD blocks tied to
    them by linear equalities; a 1 x 1 slack block for the normalisation.
    """
    n, p = F.n, F.size
    prob = ConicProblem(sense="max")
    var: dict[tuple[Monomial, int, int], int] = {}
    for a in MonomialBasis(n, 2 * d):
        for u in range(p):
            for v in range(u, p):
                var[(a, u, v)] = prob.add_free(f"S{a}[{u},{v}]")

    def svar(a: Monomial, u: int, v: int) -> int:
        return var[(a, min(u, v), max(u, v))]

    def riesz_row(H: PolyMatrix, row: Row, scale: float) -> None:
        for a, mat in _coef_matrices(H).items():
            for u in range(p):
                for v in range(p):
                    if mat[u, v]:
                        row.add_free(svar(a, v, u), scale * mat[u, v])

    # moment matrix block: X[I, J] = S_{a+b}[i, j]
    bx = MonomialBasis(n, d).order
    blk = prob.add_block(p * len(bx), "moment")
    for ia, a in enumerate(bx):
        for ib, b in enumerate(bx):
            for i in range(p):
                for j in range(p):
                    I, J = ia * p + i, ib * p + j
                    if I > J:
                        continue
                    row = Row()
                    row.add(blk, I, J, 1.0 if I == J else 0.5)
                    row.add_free(svar(add_monomials(a, b), i, j), -1.0)
                    prob.add_row(row)
    # nu-localizing blocks
    for jg, Gj in enumerate(G):
        dl = d - _half_ceil(Gj)
        q = Gj.size
        lx = MonomialBasis(n, dl).order
        ly = MonomialBasis(nu.m, k).order
        w = p * q
        blk = prob.add_block(w * len(lx) * len(ly), f"localizing[{jg}]")
        split: dict[Monomial, list[tuple[Monomial, np.ndarray]]] = {}
        for mono, mat in _coef_matrices(Gj).items():
            split.setdefault(mono[n:], []).append((mono[:n], mat))
        labels = [(a, e) for a in lx for e in ly]
        for r1, (a, e) in enumerate(labels):
            for r2, (b, f) in enumerate(labels):
                if r1 > r2:
                    continue
                ab, ef = add_monomials(a, b), add_monomials(e, f)
                for i in range(p):
                    for s in range(q):
                        for j in range(p):
                            for t in range(q):
                                I, J = r1 * w + i * q + s, r2 * w + j * q + t
                                if I > J:
                                    continue
                                row = Row()
                                row.add(blk, I, J, 1.0 if I == J else 0.5)
                                for g, items in split.items():
                                    mom = float(nu.moment(add_monomials(g, ef)))
                                    if not mom:
                                        continue
                                    for z, Gz in items:
                                        if Gz[s, t]:
                                            row.add_free(svar(add_monomials(ab, z), i, j),
                                                         -mom * Gz[s, t])
                                prob.add_row(row)
    # normalisation: slack + riesz(S, (1 + sum x_i^(2d)) I) = 1
    sl = prob.add_block(1, "slack")
    row = Row(rhs=1.0)
    row.add(sl, 0, 0, 1.0)
    riesz_row(PolyMatrix.identity(p, n, exact=F.exact) * big_theta(n, d, exact=F.exact), row, 1.0)
    prob.add_row(row)
    riesz_row(F, prob.objective, -1.0)
    prob.meta["moment_vars"] = var
    return prob


def solve_perturbation(problem: PMIProblem, d: int, k: int | None = None,
                       tol: float | None = None, with_dual: bool = True) -> HierarchyResult:
    """Optimal ``r*_{d,k}``; the dual value is recorded in ``meta``."""
    k = default_k(problem.G) if k is None else k
    tol = config.DEFAULTS.verification if tol is None else tol
    F = _x_only(problem.F)
    asm, dual = build_perturbation(problem, d, k)
    meta = {"hierarchy": "perturbation", "d": d, "k": k, **_carleman_meta(problem.nu)}
    asm.prob.meta.update(meta)
    rep = solve(asm.prob)
    if rep.status != "optimal":
        return _interpret(asm, rep, F, problem, meta, tol, BOUND_FOUND)
    r = float(rep.free[0])
    meta["r"] = r
    Th = PolyMatrix.identity(F.size, F.n, exact=False) * big_theta(F.n, d, exact=False)
    target = F.to_float() + Th * r
    res = _interpret(asm, rep, target, problem, meta, tol, BOUND_FOUND, value=r)
    if with_dual:
        drep = solve(dual)
        res.meta["dual_status"] = drep.status
        res.meta["dual_value"] = drep.primal_obj if drep.status == "optimal" else None
    return res


# -- robust optimisation ---------------------------------------------------------------

def _robust_checks(c: Sequence, P: Sequence[PolyMatrix]) -> None:
    if len(P) != len(c) + 1:
        raise ValueError(f"need P_0..P_r with r = len(c) = {len(c)}, got {len(P)} matrices")
    sizes = {M.size for M in P}
    if len(sizes) != 1:
        raise ValueError("P_i sizes differ")


def _robust_problem(problem: PMIProblem, c, P, T0: PolyMatrix, Ti: list[PolyMatrix],
                    sigma0_deg: int, x_degs: list[int], k: int, meta: dict,
                    tol: float | None) -> HierarchyResult:
    tol = config.DEFAULTS.verification if tol is None else tol
    n, p = T0.n, T0.size
    asm = Assembler(n, p)
    asm.add_gram(_sigma0(n, p, sigma0_deg))
    for spec in _sigma_specs(n, p, problem.G, problem.nu, x_degs, k):
        asm.add_gram(spec)
    gam = [asm.prob.add_free(f"gamma{i + 1}") for i in range(len(c))]
    asm.add_target(T0)
    for g, Tg in zip(gam, Ti):
        asm.add_free_term(g, Tg, 1.0)
        asm.prob.objective.add_free(g, float(c[g]))
    asm.prob.sense = "min"
    asm.finish()
    asm.prob.meta.update(meta)
    rep = solve(asm.prob)
    if rep.status != "optimal":
        return _interpret(asm, rep, T0, problem, meta, tol, BOUND_FOUND)
    gv = [float(v) for v in rep.free[:len(c)]]
    meta["gamma"] = gv
    target = T0.to_float()
    for v, Tg in zip(gv, Ti):
        target = target - Tg.to_float() * v
    return _interpret(asm, rep, target, problem, meta, tol, BOUND_FOUND, value=rep.primal_obj)


def build_robust_opt(c: Sequence, P: Sequence[PolyMatrix], problem: PMIProblem, k: int,
                     tol: float | None = None) -> HierarchyResult:
    """Order-k robust bound: minimise ``c . gamma`` with ``P_0 - sum gamma_i P_i`` in the truncated module."""
    _robust_checks(c, P)
    P = [_x_only(M) for M in P]
    x_degs = [(2 * k - max(G.degree_x(), 0)) // 2 if 2 * k >= max(G.degree_x(), 0) else -1
              for G in problem.G]
    meta = {"hierarchy": "robust", "k": k, **_carleman_meta(problem.nu)}
    return _robust_problem(problem, c, P, P[0], P[1:], k, x_degs, k, meta, tol)


def build_robust_opt_noncompact(c: Sequence, P: Sequence[PolyMatrix], problem: PMIProblem, eps,
                                k: int, tol: float | None = None) -> HierarchyResult:
    """Order-k robust bound on all of R^n: the constraint is multiplied by ``(1 + |x|^2)^k``
    and perturbed by ``eps (1 + |x|^2)^deg(P)``."""
    _robust_checks(c, P)
    eps = float(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    P = [_x_only(M).to_float() for M in P]
    n, p = P[0].n, P[0].size
    dP = max(degrees(M).d_H for M in P)
    th = theta(n, exact=False)
    thk = th ** k
    T0 = (P[0] + PolyMatrix.identity(p, n, exact=False) * (th ** dP * eps)) * thk
    Ti = [M * thk for M in P[1:]]
    cap = k + dP
    x_degs = [cap - _dH(G) for G in problem.G]
    meta = {"hierarchy": "robust-noncompact", "k": k, "eps": eps, **_carleman_meta(problem.nu)}
    return _robust_problem(problem, c, P, T0, Ti, cap, x_degs, k, meta, tol)


# -- targets from certificate metadata -------------------------------------------------

def certificate_target(problem: PMIProblem, meta: dict) -> PolyMatrix:
    """The polynomial matrix a certificate with this ``meta`` must reproduce."""
    tag = meta.get("hierarchy", "membership")
    if tag in ("robust", "robust-noncompact"):
        P = [_x_only(M).to_float() for M in problem.objective_P]
        gam = meta.get("gamma", [])
        T = P[0]
        for v, M in zip(gam, P[1:]):
            T = T - M * float(v)
        if tag == "robust":
            return T
        n, p = T.n, T.size
        th = theta(n, exact=False)
        dP = max(degrees(M).d_H for M in P)
        return (T + PolyMatrix.identity(p, n, exact=False) * (th ** dP * float(meta["eps"]))) * (th ** int(meta["k"]))
    F = _x_only(problem.F)
    N = int(meta.get("N", 0))
    if tag in ("membership", "sparse"):
        return F
    if tag == "homogeneous":
        return F * (norm_sq(F.n, exact=F.exact) ** N)
    if tag == "inhomogeneous":
        return inhomogeneous_target(F, to_fraction(meta["eps"]), N)
    if tag == "polya":
        s = coordinate_sum(F.n, F.exact)
        return F * (s ** N)
    if tag == "perturbation":
        d = int(meta["d"])
        Th = PolyMatrix.identity(F.size, F.n, exact=False) * big_theta(F.n, d, exact=False)
        return F.to_float() + Th * float(meta["r"])
    raise ValueError(f"unknown hierarchy tag {tag!r}")
