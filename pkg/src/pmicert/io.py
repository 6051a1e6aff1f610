"""JSON encodings of polynomial matrices, measures, problems, certificates and moments.

Every reader reports problems as ``SchemaError`` carrying a JSON path such as
``$.F.entries[0][1][2].c``, or ``line:col`` for syntax errors.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .certcore import CertTerm, SOSCertificate, SOSGram
from .hierarchy import CliqueDecomposition, PMIProblem
from .measures import Atom, MeasureSpec
from .momentside import MomentSeq
from .polyalg import Poly, PolyMatrix, fraction_str, to_fraction
from .sdp import ConicProblem, Row


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def load_json(path: str | Path) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno}:{exc.colno}", exc.msg) from None


def _need(obj, key: str, path: str):
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing field")
    return obj[key]


def _int(v, path: str, lo: int = 0) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise SchemaError(path, f"expected an integer >= {lo}")
    return v


def _list(v, path: str) -> list:
    if not isinstance(v, list):
        raise SchemaError(path, "expected an array")
    return v


def _rational(v, path: str) -> Fraction:
    if isinstance(v, bool):
        raise SchemaError(path, "expected a rational")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        if "." in v or "e" in v.lower():
            raise SchemaError(path, f"rational strings must be 'num/den', got {v!r}")
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError):
            raise SchemaError(path, f"bad rational {v!r}") from None
    raise SchemaError(path, "expected 'num/den' string or integer")


def _number(v, path: str):
    """Rational string/int, or float (for solver output)."""
    if isinstance(v, float):
        return v
    return _rational(v, path)


def _exponents(v, length: int, path: str) -> tuple[int, ...]:
    v = _list(v, path)
    if len(v) != length:
        raise SchemaError(path, f"expected {length} exponents, got {len(v)}")
    return tuple(_int(e, f"{path}[{i}]") for i, e in enumerate(v))


# -- polynomial matrices ---------------------------------------------------------------

def polymatrix_to_json(H: PolyMatrix) -> dict:
    def terms(p: Poly) -> list:
        out = []
        for k, c in sorted(p.items()):
            c = c if p.exact else to_fraction(c)
            out.append({"ax": list(k[:H.n]), "ay": list(k[H.n:]), "c": fraction_str(c)})
        return out
    return {"n": H.n, "m": H.m, "size": H.size,
            "entries": [[terms(e) for e in row] for row in H.entries]}


def polymatrix_from_json(obj, path: str = "$") -> PolyMatrix:
    n = _int(_need(obj, "n", path), f"{path}.n")
    m = _int(obj.get("m", 0), f"{path}.m")
    size = _int(_need(obj, "size", path), f"{path}.size", 1)
    rows = _list(_need(obj, "entries", path), f"{path}.entries")
    if len(rows) != size:
        raise SchemaError(f"{path}.entries", f"expected {size} rows, got {len(rows)}")
    out = []
    for i, row in enumerate(rows):
        rp = f"{path}.entries[{i}]"
        row = _list(row, rp)
        if len(row) != size:
            raise SchemaError(rp, f"expected {size} columns, got {len(row)}")
        polys = []
        for j, cell in enumerate(row):
            cp = f"{rp}[{j}]"
            terms = {}
            for t, term in enumerate(_list(cell, cp)):
                tp = f"{cp}[{t}]"
                ax = _exponents(_need(term, "ax", tp), n, f"{tp}.ax")
                ay = _exponents(term.get("ay", []), m, f"{tp}.ay")
                c = _rational(_need(term, "c", tp), f"{tp}.c")
                key = ax + ay
                terms[key] = terms.get(key, 0) + c
            polys.append(Poly(terms, n, m))
        out.append(polys)
    H = PolyMatrix(out, n, m, True)
    if not H.symmetric:
        raise SchemaError(path, "matrix is not symmetric")
    return H


# -- measures ------------------------------------------------------------------------

def measure_to_json(nu: MeasureSpec) -> dict:
    out: dict = {"kind": nu.kind, "m": nu.m}
    if nu.kind == "discrete":
        out["atoms"] = [{"y": [fraction_str(v) for v in at.y], "w": fraction_str(at.w)} for at in nu.atoms]
    elif nu.kind == "box":
        out["a"] = [fraction_str(v) for v in nu.a]
        out["b"] = [fraction_str(v) for v in nu.b]
        out["normalize"] = nu.normalize
    return out


def measure_from_json(obj, path: str = "$") -> MeasureSpec:
    kind = _need(obj, "kind", path)
    m = _int(obj.get("m", 0), f"{path}.m")
    try:
        if kind == "discrete":
            atoms = _list(_need(obj, "atoms", path), f"{path}.atoms")
            pts, ws = [], []
            for i, at in enumerate(atoms):
                ap = f"{path}.atoms[{i}]"
                y = _list(_need(at, "y", ap), f"{ap}.y")
                if len(y) != m:
                    raise SchemaError(f"{ap}.y", f"expected {m} coordinates")
                pts.append([_rational(v, f"{ap}.y[{t}]") for t, v in enumerate(y)])
                ws.append(_rational(_need(at, "w", ap), f"{ap}.w"))
            if not pts:
                raise SchemaError(f"{path}.atoms", "need at least one atom")
            return MeasureSpec("discrete", m, atoms=tuple(Atom(tuple(pt), w) for pt, w in zip(pts, ws)))
        if kind == "box":
            a = [_rational(v, f"{path}.a[{i}]") for i, v in enumerate(_list(_need(obj, "a", path), f"{path}.a"))]
            b = [_rational(v, f"{path}.b[{i}]") for i, v in enumerate(_list(_need(obj, "b", path), f"{path}.b"))]
            if len(a) != m or len(b) != m:
                raise SchemaError(path, f"box bounds must have length m = {m}")
            return MeasureSpec.box(a, b, obj.get("normalize", "probability"))
        if kind == "gaussian":
            return MeasureSpec.gaussian(m)
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(path, str(exc)) from None
    raise SchemaError(f"{path}.kind", f"unknown kind {kind!r}")


# -- problems ------------------------------------------------------------------------

def problem_from_json(obj, path: str = "$") -> tuple[PMIProblem, dict]:
    """Problem plus the optional ``order`` block."""
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    nu = measure_from_json(obj["measure"], f"{path}.measure") if "measure" in obj else MeasureSpec.trivial()
    F = polymatrix_from_json(obj["F"], f"{path}.F") if "F" in obj else None
    G = [polymatrix_from_json(g, f"{path}.G[{i}]") for i, g in enumerate(_list(obj.get("G", []), f"{path}.G"))]
    for i, g in enumerate(G):
        if g.m != nu.m:
            raise SchemaError(f"{path}.G[{i}].m", f"m = {g.m} but the measure has m = {nu.m}")
        if F is not None and g.n != F.n:
            raise SchemaError(f"{path}.G[{i}].n", f"n = {g.n} but F has n = {F.n}")
    extras = [polymatrix_from_json(h, f"{path}.extras[{i}]")
              for i, h in enumerate(_list(obj.get("extras", []), f"{path}.extras"))]
    c = P = None
    if "objective" in obj:
        op = f"{path}.objective"
        c = [_rational(v, f"{op}.c[{i}]") for i, v in enumerate(_list(_need(obj["objective"], "c", op), f"{op}.c"))]
        P = [polymatrix_from_json(h, f"{op}.P[{i}]")
             for i, h in enumerate(_list(_need(obj["objective"], "P", op), f"{op}.P"))]
        if len(P) != len(c) + 1:
            raise SchemaError(f"{op}.P", f"need len(c) + 1 = {len(c) + 1} matrices, got {len(P)}")
    if F is None and P is None:
        raise SchemaError(path, "need F or an objective block")
    cliques = None
    if "cliques" in obj:
        cp = f"{path}.cliques"
        raw = obj["cliques"]
        if isinstance(raw, dict):
            cl = _list(_need(raw, "cliques", cp), f"{cp}.cliques")
            assign = raw.get("assignments")
        else:
            cl, assign = _list(raw, cp), None
        if assign is not None:
            ap = f"{cp}.assignments"
            assign = _list(assign, ap)
            if len(assign) != len(cl):
                raise SchemaError(ap, f"need one list per clique ({len(cl)}), got {len(assign)}")
            assign = [[_int(v, f"{ap}[{l}][{t}]", 1) for t, v in enumerate(_list(js, f"{ap}[{l}]"))]
                      for l, js in enumerate(assign)]
            for l, js in enumerate(assign):
                for t, j in enumerate(js):
                    if j > len(G):
                        raise SchemaError(f"{ap}[{l}][{t}]", f"constraint {j} does not exist")
        cliques = CliqueDecomposition([tuple(_int(v, f"{cp}[{i}][{t}]", 1) for t, v in enumerate(_list(c_, f"{cp}[{i}]")))
                                       for i, c_ in enumerate(cl)], assign)
    order = obj.get("order", {})
    if not isinstance(order, dict):
        raise SchemaError(f"{path}.order", "expected an object")
    try:
        prob = PMIProblem(F, G, nu, extras, c, P, cliques)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None
    return prob, order


def problem_to_json(prob: PMIProblem, order: dict | None = None) -> dict:
    out: dict = {"measure": measure_to_json(prob.nu), "G": [polymatrix_to_json(g) for g in prob.G]}
    if prob.F is not None:
        out["F"] = polymatrix_to_json(prob.F)
    if prob.extras:
        out["extras"] = [polymatrix_to_json(h) for h in prob.extras]
    if prob.objective_P is not None:
        out["objective"] = {"c": [fraction_str(to_fraction(v)) for v in prob.objective_c],
                            "P": [polymatrix_to_json(h) for h in prob.objective_P]}
    if prob.cliques is not None:
        out["cliques"] = {"cliques": [list(c) for c in prob.cliques.cliques],
                          "assignments": prob.cliques.assignments}
    if order:
        out["order"] = order
    return out


# -- certificates ------------------------------------------------------------------

def _matrix_to_json(Z: np.ndarray) -> list:
    if Z.dtype == object:
        return [[fraction_str(to_fraction(v)) for v in row] for row in Z]
    return [[float(v) for v in row] for row in Z]


def _matrix_from_json(v, path: str, side: int | None = None) -> np.ndarray:
    rows = _list(v, path)
    vals = [[_number(e, f"{path}[{i}][{j}]") for j, e in enumerate(_list(r, f"{path}[{i}]"))]
            for i, r in enumerate(rows)]
    if side is not None and (len(vals) != side or any(len(r) != side for r in vals)):
        raise SchemaError(path, f"expected a {side}x{side} matrix")
    if all(isinstance(e, Fraction) for r in vals for e in r):
        return np.array(vals, dtype=object).reshape(len(vals), len(vals[0]) if vals else 0)
    return np.array([[float(e) for e in r] for r in vals], dtype=float)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Fraction):
        return fraction_str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def certificate_to_json(cert: SOSCertificate) -> dict:
    terms = []
    for t in cert.terms:
        g = t.gram
        terms.append({"role": t.role, "index": t.index, "clique": t.clique, "n": g.n, "m": g.m,
                      "basis_x": [list(b) for b in g.basis_x], "basis_y": [list(b) for b in g.basis_y],
                      "block": g.block, "shift": list(g.shift) if g.shift else None,
                      "Z": _matrix_to_json(g.Z)})
    return {"meta": _jsonable(cert.meta), "terms": terms}


def certificate_from_json(obj, path: str = "$") -> SOSCertificate:
    terms = []
    for i, t in enumerate(_list(_need(obj, "terms", path), f"{path}.terms")):
        tp = f"{path}.terms[{i}]"
        role = _need(t, "role", tp)
        if role not in ("sigma0", "sigma", "extra"):
            raise SchemaError(f"{tp}.role", f"unknown role {role!r}")
        n = _int(_need(t, "n", tp), f"{tp}.n")
        m = _int(t.get("m", 0), f"{tp}.m")
        bx = [_exponents(b, n, f"{tp}.basis_x[{j}]") for j, b in enumerate(_list(_need(t, "basis_x", tp), f"{tp}.basis_x"))]
        by = [_exponents(b, m, f"{tp}.basis_y[{j}]") for j, b in enumerate(_list(t.get("basis_y", [[0] * m]), f"{tp}.basis_y"))]
        block = _int(_need(t, "block", tp), f"{tp}.block", 1)
        shift = t.get("shift")
        shift = _exponents(shift, n, f"{tp}.shift") if shift is not None else None
        side = len(bx) * max(len(by), 1) * block
        Z = _matrix_from_json(_need(t, "Z", tp), f"{tp}.Z", side)
        try:
            g = SOSGram(n, m, bx, by, block, Z, shift)
        except ValueError as exc:
            raise SchemaError(tp, str(exc)) from None
        terms.append(CertTerm(role, g, _int(t.get("index", 0), f"{tp}.index"), t.get("clique")))
    return SOSCertificate(terms, dict(obj.get("meta", {})))


# -- moment sequences ----------------------------------------------------------------

def moments_to_json(S: MomentSeq) -> dict:
    return {"n": S.n, "p": S.p, "d_cap": S.d_cap,
            "S": [{"a": list(a), "mat": _matrix_to_json(np.asarray(M))} for a, M in sorted(S.S.items())]}


def moments_from_json(obj, path: str = "$") -> MomentSeq:
    n = _int(_need(obj, "n", path), f"{path}.n")
    p = _int(_need(obj, "p", path), f"{path}.p", 1)
    d_cap = _int(_need(obj, "d_cap", path), f"{path}.d_cap")
    S, exact = {}, True
    for i, ent in enumerate(_list(_need(obj, "S", path), f"{path}.S")):
        ep = f"{path}.S[{i}]"
        a = _exponents(_need(ent, "a", ep), n, f"{ep}.a")
        M = _matrix_from_json(_need(ent, "mat", ep), f"{ep}.mat", p)
        exact &= M.dtype == object
        S[a] = M
    try:
        return MomentSeq(n, p, d_cap, S, exact and bool(S))
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


# -- raw conic problems --------------------------------------------------------------

def conic_from_json(obj, path: str = "$") -> ConicProblem:
    """``{"blocks": [...], "n_free": k, "sense": "min", "objective": {...}, "rows": [...]}``.

    Row entries are ``[block, row, col, value]`` (0-based, any triangle), free
    terms ``[index, value]``.
    """
    p = ConicProblem(sense=obj.get("sense", "min"))
    for i, s in enumerate(_list(_need(obj, "blocks", path), f"{path}.blocks")):
        p.add_block(_int(s, f"{path}.blocks[{i}]", 1))
    for _ in range(_int(obj.get("n_free", 0), f"{path}.n_free")):
        p.add_free()

    def row_from(r, rp: str) -> Row:
        row = Row(rhs=float(r.get("rhs", r.get("constant", 0.0))))
        for t, e in enumerate(_list(r.get("entries", []), f"{rp}.entries")):
            e = _list(e, f"{rp}.entries[{t}]")
            if len(e) != 4:
                raise SchemaError(f"{rp}.entries[{t}]", "expected [block, row, col, value]")
            row.add(int(e[0]), int(e[1]), int(e[2]), float(e[3]))
        for t, e in enumerate(_list(r.get("free", []), f"{rp}.free")):
            row.add_free(int(e[0]), float(e[1]))
        return row

    p.objective = row_from(obj.get("objective", {}), f"{path}.objective")
    for i, r in enumerate(_list(obj.get("rows", []), f"{path}.rows")):
        p.add_row(row_from(r, f"{path}.rows[{i}]"))
    try:
        p.validate()
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None
    return p


def dump_json(obj, path: str | Path | None) -> str:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
    json.loads(text)  # self-check before writing
    if path is not None:
        Path(path).write_text(text)
    return text
