"""Block-diagonal SDPs with free variables: data model, solve, SDPA I/O.

Primal (sense ``min``):

    minimise   <C, X> + c_f . f
    subject to <A_i, X> + a_i . f = b_i,   X = diag(X_1..X_B) PSD,  f free.

Dual:

    maximise   b . y
    subject to C - sum_i y_i A_i PSD,  sum_i y_i a_i = c_f.

Matrices ``A_i`` and ``C`` are stored by their upper-triangle entries; the
inner product counts each off-diagonal entry twice.  Solving goes through
cvxopt's cone solver, with our primal posed as cvxopt's dual.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from . import config

Entry = tuple[int, int, int, float]  # (block, row, col) with row <= col, value


class DeskCapExceeded(RuntimeError):
    pass


class MalformedSolution(ValueError):
    pass


@dataclass
class Row:
    entries: dict[tuple[int, int, int], float] = field(default_factory=dict)
    free: dict[int, float] = field(default_factory=dict)
    rhs: float = 0.0

    def add(self, blk: int, r: int, c: int, v: float) -> None:
        if r > c:
            r, c = c, r
        key = (blk, r, c)
        self.entries[key] = self.entries.get(key, 0.0) + v

    def add_free(self, j: int, v: float) -> None:
        self.free[j] = self.free.get(j, 0.0) + v


@dataclass
class ConicProblem:
    blocks: list[int] = field(default_factory=list)
    n_free: int = 0
    rows: list[Row] = field(default_factory=list)
    objective: Row = field(default_factory=Row)
    sense: str = "min"
    block_names: list[str] = field(default_factory=list)
    free_names: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add_block(self, side: int, name: str = "") -> int:
        self.blocks.append(int(side))
        self.block_names.append(name)
        return len(self.blocks) - 1

    def add_free(self, name: str = "") -> int:
        self.n_free += 1
        self.free_names.append(name)
        return self.n_free - 1

    def add_row(self, row: Row) -> int:
        self.rows.append(row)
        return len(self.rows) - 1

    @property
    def m(self) -> int:
        return len(self.rows)

    @property
    def total_side(self) -> int:
        return sum(self.blocks)

    def validate(self) -> None:
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be min or max, got {self.sense!r}")
        for row in [*self.rows, self.objective]:
            for (b, r, c) in row.entries:
                if not (0 <= b < len(self.blocks)) or not (0 <= r <= c < self.blocks[b]):
                    raise ValueError(f"entry {(b, r, c)} out of range")
            for j in row.free:
                if not 0 <= j < self.n_free:
                    raise ValueError(f"free variable {j} out of range")

    # -- dense views --------------------------------------------------------
    def offsets(self) -> list[int]:
        out, acc = [], 0
        for s in self.blocks:
            out.append(acc)
            acc += s * s
        return out

    def block_matrices(self, row: Row) -> list[np.ndarray]:
        mats = [np.zeros((s, s)) for s in self.blocks]
        for (b, r, c), v in row.entries.items():
            mats[b][r, c] += v
            if r != c:
                mats[b][c, r] += v
        return mats

    def free_vector(self, row: Row) -> np.ndarray:
        out = np.zeros(self.n_free)
        for j, v in row.free.items():
            out[j] += v
        return out

    def apply(self, X: Sequence[np.ndarray], f: np.ndarray) -> np.ndarray:
        """Left-hand sides ``<A_i, X> + a_i . f``."""
        out = np.zeros(self.m)
        for i, row in enumerate(self.rows):
            acc = 0.0
            for (b, r, c), v in row.entries.items():
                acc += v * X[b][r, c] * (1.0 if r == c else 2.0)
            for j, v in row.free.items():
                acc += v * f[j]
            out[i] = acc
        return out

    def adjoint(self, y: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """``sum_i y_i A_i`` per block and ``sum_i y_i a_i``."""
        mats = [np.zeros((s, s)) for s in self.blocks]
        fv = np.zeros(self.n_free)
        for yi, row in zip(y, self.rows):
            if yi == 0:
                continue
            for (b, r, c), v in row.entries.items():
                mats[b][r, c] += yi * v
                if r != c:
                    mats[b][c, r] += yi * v
            for j, v in row.free.items():
                fv[j] += yi * v
        return mats, fv

    def rhs(self) -> np.ndarray:
        return np.array([row.rhs for row in self.rows], dtype=float)

    def objective_value(self, X: Sequence[np.ndarray], f: np.ndarray) -> float:
        val = self.objective.rhs  # constant term
        for (b, r, c), v in self.objective.entries.items():
            val += v * X[b][r, c] * (1.0 if r == c else 2.0)
        for j, v in self.objective.free.items():
            val += v * f[j]
        return float(val)


@dataclass
class SolveReport:
    status: str  # optimal | primal-infeasible | dual-infeasible | max-iter | numerical-failure
    primal_obj: float | None = None
    dual_obj: float | None = None
    X: list[np.ndarray] | None = None
    free: np.ndarray | None = None
    y: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)
    ray: np.ndarray | None = None
    ray_residuals: dict = field(default_factory=dict)
    iterations: int = 0
    message: str = ""


# -- residuals -------------------------------------------------------------------

def _lam_min(mats: Sequence[np.ndarray]) -> float:
    vals = [np.linalg.eigvalsh((M + M.T) / 2)[0] for M in mats if M.size]
    return float(min(vals)) if vals else 0.0


def _lam_max(mats: Sequence[np.ndarray]) -> float:
    vals = [np.linalg.eigvalsh((M + M.T) / 2)[-1] for M in mats if M.size]
    return float(max(vals)) if vals else 0.0


def compute_residuals(p: ConicProblem, X, f, y) -> dict:
    """Relative primal/dual feasibility and gap, recomputed from iterates."""
    b = p.rhs()
    bscale = 1.0 + (np.max(np.abs(b)) if b.size else 0.0)
    lhs = p.apply(X, f)
    pfeas = float(np.max(np.abs(lhs - b)) / bscale) if b.size else 0.0
    pfeas = max(pfeas, max(0.0, -_lam_min(X)))
    sgn = 1.0 if p.sense == "min" else -1.0
    Cm = [sgn * M for M in p.block_matrices(p.objective)]
    cf = sgn * p.free_vector(p.objective)
    Ay, ay = p.adjoint(y)
    slack = [C - A for C, A in zip(Cm, Ay)]
    cscale = 1.0 + max([np.max(np.abs(M)) for M in Cm if M.size] + [np.max(np.abs(cf)) if cf.size else 0.0])
    dfeas = max(max(0.0, -_lam_min(slack)), float(np.max(np.abs(ay - cf))) if cf.size else 0.0) / cscale
    pobj = p.objective_value(X, f)
    dobj = sgn * float(b @ y) + p.objective.rhs
    gap = abs(pobj - dobj) / (1.0 + abs(pobj))
    return {"primal_feas": pfeas, "dual_feas": dfeas, "gap": gap, "primal_obj": pobj, "dual_obj": dobj}


def farkas_ray_residuals(p: ConicProblem, y: np.ndarray) -> dict:
    """Residuals of a primal-infeasibility ray normalised to ``b . y = 1``.

    A valid ray has ``sum y_i A_i`` negative semidefinite and ``sum y_i a_i = 0``.
    """
    by = float(p.rhs() @ y)
    if by <= 0:
        return {"b_dot_y": by, "psd": float("inf"), "free": float("inf")}
    y = y / by
    Ay, ay = p.adjoint(y)
    return {"b_dot_y": 1.0, "psd": max(0.0, _lam_max(Ay)),
            "free": float(np.max(np.abs(ay))) if ay.size else 0.0}


def _polish_ray(p: ConicProblem, y: np.ndarray) -> np.ndarray:
    """Project a near-ray onto ``sum y_i a_i = 0`` and rescale to ``b . y = 1``."""
    if p.n_free:
        Afree = np.array([p.free_vector(r) for r in p.rows])  # m x f
        if np.any(Afree):
            coef, *_ = np.linalg.lstsq(Afree, y, rcond=None)
            y = y - Afree @ coef
    by = float(p.rhs() @ y)
    return y / by if by > 0 else y


# -- presolve ---------------------------------------------------------------------

def _row_matrix(p: ConicProblem) -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    keys = sorted({k for r in p.rows for k in r.entries})
    col = {k: i for i, k in enumerate(keys)}
    R = np.zeros((p.m, len(keys) + p.n_free))
    for i, row in enumerate(p.rows):
        for k, v in row.entries.items():
            R[i, col[k]] = v * (1.0 if k[1] == k[2] else 2.0)
        for j, v in row.free.items():
            R[i, len(keys) + j] = v
    return R, keys


@dataclass
class Presolved:
    keep: list[int]
    infeasible_ray: np.ndarray | None = None


def presolve(p: ConicProblem, tol: float = 1e-10) -> Presolved:
    """Drop linearly dependent rows; detect inconsistent dependencies."""
    if p.m == 0:
        return Presolved([])
    R, _ = _row_matrix(p)
    b = p.rhs()
    _, Rq, piv = scipy.linalg.qr(R.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rq))
    scale = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > tol * max(scale, 1.0)))
    keep = sorted(int(i) for i in piv[:rank])
    drop = [i for i in range(p.m) if i not in set(keep)]
    if drop:
        Rk = R[keep]
        coef, *_ = np.linalg.lstsq(Rk.T, R[drop].T, rcond=None)  # rows_drop = coef^T Rk
        for t, i in enumerate(drop):
            pred = float(coef[:, t] @ b[keep])
            if abs(pred - b[i]) > 1e-8 * (1.0 + abs(b[i])):
                # y = e_i - sum coef e_keep has y^T R = 0 and y^T b != 0
                y = np.zeros(p.m)
                y[i] = 1.0
                y[keep] -= coef[:, t]
                y /= float(b @ y)
                return Presolved(keep, infeasible_ray=y)
    return Presolved(keep)


# -- solve ------------------------------------------------------------------------

def solve(p: ConicProblem, tol: float | None = None, max_iter: int | None = None,
          seed: int | None = None, desk_cap: int | None = None) -> SolveReport:
    """Interior-point solve; returns an optimal pair, an infeasibility ray or a failure label.

    ``seed`` is accepted for interface symmetry; the solve is deterministic.
    """
    from cvxopt import matrix, solvers, spmatrix

    tol = config.DEFAULTS.solver if tol is None else tol
    max_iter = config.DEFAULTS.max_iter if max_iter is None else max_iter
    desk_cap = config.DEFAULTS.desk_cap if desk_cap is None else desk_cap
    p.validate()
    if p.total_side > desk_cap:
        raise DeskCapExceeded(
            f"total PSD side {p.total_side} exceeds desk cap {desk_cap}; "
            "export with export_sdpa and use an external solver")
    pre = presolve(p)
    if pre.infeasible_ray is not None:
        rep = SolveReport("primal-infeasible", ray=pre.infeasible_ray,
                          message="inconsistent linear equalities")
        rep.ray_residuals = farkas_ray_residuals(p, pre.infeasible_ray)
        return rep
    keep = pre.keep
    sgn = 1.0 if p.sense == "min" else -1.0
    if not p.blocks:
        return _solve_linear(p, keep, sgn)

    offs = p.offsets()
    K = sum(s * s for s in p.blocks)
    vals, ri, ci = [], [], []
    for col, i in enumerate(keep):
        for (blk, r, c), v in p.rows[i].entries.items():
            s, o = p.blocks[blk], offs[blk]
            ri.append(o + c * s + r); ci.append(col); vals.append(v)
            if r != c:
                ri.append(o + r * s + c); ci.append(col); vals.append(v)
    G = spmatrix(vals, ri, ci, (K, max(len(keep), 1))) if keep else spmatrix([], [], [], (K, 1))
    Cm = p.block_matrices(p.objective)
    h = np.concatenate([sgn * M.ravel(order="F") for M in Cm])
    b = p.rhs()[keep] if keep else np.zeros(1)
    c = matrix(-b)
    A = bcv = None
    used_free = [j for j in range(p.n_free) if any(j in p.rows[i].free for i in keep)]
    cf = sgn * p.free_vector(p.objective)
    unused_with_cost = [j for j in range(p.n_free) if j not in used_free and abs(cf[j]) > 0]
    if unused_with_cost:
        return SolveReport("dual-infeasible", message=f"free variables {unused_with_cost} are unconstrained")
    if used_free:
        Af = np.zeros((len(used_free), max(len(keep), 1)))
        for col, i in enumerate(keep):
            for j, v in p.rows[i].free.items():
                Af[used_free.index(j), col] += v
        A = matrix(Af)
        bcv = matrix(cf[used_free])
    opts = {"show_progress": False, "abstol": tol * 1e-1, "reltol": tol, "feastol": tol,
            "maxiters": max_iter}
    try:
        res = solvers.conelp(c, G, matrix(h), dims={"l": 0, "q": [], "s": list(p.blocks)},
                             A=A, b=bcv, options=opts)
    except (ValueError, ArithmeticError) as exc:
        return SolveReport("numerical-failure", message=str(exc))

    st = res["status"]
    iters = int(res.get("iterations", 0) or 0)
    yfull = np.zeros(p.m)
    if st == "dual infeasible":
        # certificate x: -b.x = -1, G x + s = 0, A x = 0 -> Farkas ray for our primal
        yfull[keep] = np.array(res["x"]).ravel()
        ray = _polish_ray(p, yfull)
        rep = SolveReport("primal-infeasible", ray=ray, iterations=iters)
        rep.ray_residuals = farkas_ray_residuals(p, ray)
        return rep
    if st == "primal infeasible":
        X = _unvec(np.array(res["z"]).ravel(), p.blocks, offs)
        return SolveReport("dual-infeasible", X=X, iterations=iters, message="primal objective unbounded")
    if res["x"] is None or res["z"] is None:
        return SolveReport("numerical-failure", iterations=iters, message=str(st))
    yfull[keep] = np.array(res["x"]).ravel()
    X = _unvec(np.array(res["z"]).ravel(), p.blocks, offs)
    f = np.zeros(p.n_free)
    if used_free:
        f[used_free] = np.array(res["y"]).ravel()
    resid = compute_residuals(p, X, f, yfull)
    rep = SolveReport("optimal", resid["primal_obj"], resid["dual_obj"], X, f, yfull,
                      resid, iterations=iters)
    if st != "optimal":
        ok = max(resid["primal_feas"], resid["dual_feas"], resid["gap"]) <= max(tol * 1e2, 1e-7)
        if not ok:
            rep.status = "max-iter" if iters >= max_iter else "numerical-failure"
        rep.message = f"solver status {st}"
    return rep


def _unvec(z: np.ndarray, blocks: Sequence[int], offs: Sequence[int]) -> list[np.ndarray]:
    out = []
    for s, o in zip(blocks, offs):
        M = z[o:o + s * s].reshape((s, s), order="F")
        M = np.tril(M) + np.tril(M, -1).T
        out.append(M)
    return out


def _solve_linear(p: ConicProblem, keep: list[int], sgn: float) -> SolveReport:
    """Problems with free variables only: a linear system plus a dual check."""
    Af = np.array([p.free_vector(p.rows[i]) for i in keep]).reshape(len(keep), p.n_free)
    b = p.rhs()[keep]
    f, *_ = np.linalg.lstsq(Af, b, rcond=None) if keep else (np.zeros(p.n_free),)
    cf = sgn * p.free_vector(p.objective)
    y_k, *_ = np.linalg.lstsq(Af.T, cf, rcond=None) if keep else (np.zeros(0),)
    y = np.zeros(p.m)
    y[keep] = y_k
    if keep and np.max(np.abs(Af @ f - b)) > 1e-9 * (1 + np.max(np.abs(b))):
        return SolveReport("primal-infeasible", message="inconsistent free-variable system")
    if np.max(np.abs(Af.T @ y_k - cf), initial=0.0) > 1e-9 * (1 + np.max(np.abs(cf), initial=0.0)):
        return SolveReport("dual-infeasible", message="objective unbounded along free directions")
    resid = compute_residuals(p, [], f, y)
    return SolveReport("optimal", resid["primal_obj"], resid["dual_obj"], [], f, y, resid)


# -- SDPA sparse format --------------------------------------------------------------

def _num(v: float) -> str:
    return format(float(v), ".17g")


def export_sdpa(p: ConicProblem, path: str | Path | None = None) -> str:
    """Write the problem in SDPA sparse format and return the text.

    SDPA solves ``max <F0, Y>`` s.t. ``<F_i, Y> = c_i``; we set ``Y = X``,
    ``F0 = -C`` (negated again for ``max`` problems), ``F_i = A_i`` and
    ``c_i = b_i``.  Free variables become ``f+ - f-`` in a trailing diagonal
    block of size ``-2 * n_free``.
    """
    p.validate()
    sgn = 1.0 if p.sense == "min" else -1.0
    nb = len(p.blocks) + (1 if p.n_free else 0)
    sizes = [str(s) for s in p.blocks] + ([str(-2 * p.n_free)] if p.n_free else [])
    lines = [str(p.m), str(nb), " ".join(sizes), " ".join(_num(r.rhs) for r in p.rows)]
    lp = len(p.blocks) + 1

    def emit(matno: int, row: Row, scale: float) -> None:
        items = []
        for (b, r, c), v in row.entries.items():
            if v != 0:
                items.append((b + 1, r + 1, c + 1, scale * v))
        for j, v in row.free.items():
            if v != 0:
                items.append((lp, j + 1, j + 1, scale * v))
                items.append((lp, p.n_free + j + 1, p.n_free + j + 1, -scale * v))
        for b, r, c, v in sorted(items):
            lines.append(f"{matno} {b} {r} {c} {_num(v)}")

    emit(0, p.objective, -sgn)
    for i, row in enumerate(p.rows):
        emit(i + 1, row, 1.0)
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _parse_braces(text: str):
    """Parse nested ``{..}`` lists of numbers."""
    tokens = re.findall(r"[{}]|[-+0-9.eEinfINFaN]+", text)
    stack: list[list] = []
    out = None
    for tok in tokens:
        if tok == "{":
            stack.append([])
        elif tok == "}":
            if not stack:
                raise MalformedSolution("unbalanced braces")
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                out = done
                break
        else:
            if not stack:
                continue
            try:
                stack[-1].append(float(tok))
            except ValueError as exc:
                raise MalformedSolution(f"bad number {tok!r}") from exc
    if out is None:
        raise MalformedSolution("unterminated brace block")
    return out


def _section(text: str, name: str):
    m = re.search(rf"^\s*{name}\s*=", text, flags=re.M)
    if m is None:
        raise MalformedSolution(f"missing {name} section")
    return _parse_braces(text[m.end():])


def import_solution(p: ConicProblem, path: str | Path) -> SolveReport:
    """Read an SDPA ``.result`` file (xVec / xMat / yMat) and recompute residuals."""
    text = Path(path).read_text()
    xvec = _section(text, "xVec")
    ymat = _section(text, "yMat")
    if any(isinstance(v, list) for v in xvec):
        raise MalformedSolution("xVec must be a flat vector")
    if len(xvec) != p.m:
        raise ValueError(f"dimension mismatch: xVec has {len(xvec)} entries, problem has {p.m}")
    nb = len(p.blocks) + (1 if p.n_free else 0)
    if len(ymat) != nb:
        raise ValueError(f"dimension mismatch: yMat has {len(ymat)} blocks, expected {nb}")
    X = []
    for s, blk in zip(p.blocks, ymat):
        M = np.array(blk, dtype=float)
        if M.shape != (s, s):
            raise ValueError(f"dimension mismatch: block shape {M.shape}, expected ({s}, {s})")
        X.append(M)
    f = np.zeros(p.n_free)
    if p.n_free:
        lpb = np.array(ymat[-1], dtype=float).ravel()
        if lpb.size == (2 * p.n_free) ** 2:
            lpb = np.diag(lpb.reshape(2 * p.n_free, 2 * p.n_free))
        if lpb.size != 2 * p.n_free:
            raise ValueError("dimension mismatch in free-variable block")
        f = lpb[:p.n_free] - lpb[p.n_free:]
    y = -np.asarray(xvec, dtype=float)
    resid = compute_residuals(p, X, f, y)
    return SolveReport("optimal", resid["primal_obj"], resid["dual_obj"], X, f, y, resid,
                       message=f"imported from {Path(path).name}")
