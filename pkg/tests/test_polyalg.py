from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmicert.polyalg import (MonomialBasis, Poly, PolyMatrix, bilinear_p, big_theta, degrees,
                             dehomogenize, homogenize, kron, norm_sq, theta, to_fraction,
                             trace_p)

small = st.integers(-4, 4)


def polys(n: int = 2, deg: int = 3):
    monos = [a for t in range(deg + 1) for a in itertools.product(range(t + 1), repeat=n) if sum(a) == t]
    return st.dictionaries(st.sampled_from(monos), small, max_size=5).map(lambda d: Poly(d, n))


def points(n: int = 2):
    return st.lists(st.fractions(min_value=-3, max_value=3, max_denominator=5), min_size=n, max_size=n)


def sym_matrices(size: int, n: int = 1, deg: int = 2):
    def build(cells):
        it = iter(cells)
        rows = [[None] * size for _ in range(size)]
        for i in range(size):
            for j in range(i, size):
                rows[i][j] = rows[j][i] = next(it)
        return PolyMatrix(rows, n, 0, True)
    count = size * (size + 1) // 2
    return st.lists(polys(n, deg), min_size=count, max_size=count).map(build)


def any_matrices(size: int, n: int = 1, deg: int = 2):
    return st.lists(polys(n, deg), min_size=size * size, max_size=size * size).map(
        lambda cells: PolyMatrix([cells[i * size:(i + 1) * size] for i in range(size)], n, 0, True))


# -- basis -----------------------------------------------------------------------------

def test_basis_order_graded_lex():
    assert MonomialBasis(2, 2).order == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


@pytest.mark.parametrize("n,d", [(1, 0), (1, 4), (2, 3), (3, 2), (4, 1)])
def test_basis_size_is_binomial(n, d):
    assert len(MonomialBasis(n, d)) == math.comb(n + d, d)


def test_homogeneous_basis_has_exact_degree():
    b = MonomialBasis(3, 2, homogeneous=True)
    assert len(b) == 6 and all(sum(a) == 2 for a in b)


# -- ring laws and evaluation ---------------------------------------------------------

@given(polys(), polys(), polys())
def test_ring_laws(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a + b) * c == a * c + b * c
    assert (a * b) * c == a * (b * c)
    assert a - a == Poly.zero(2)


@given(polys(), polys(), points())
def test_evaluation_is_a_ring_homomorphism(a, b, pt):
    assert (a * b).evaluate(pt) == a.evaluate(pt) * b.evaluate(pt)
    assert (a + b).evaluate(pt) == a.evaluate(pt) + b.evaluate(pt)


@given(polys(deg=2), st.integers(0, 3))
def test_power_matches_repeated_product(a, k):
    acc = Poly.const(1, 2)
    for _ in range(k):
        acc = acc * a
    assert a ** k == acc


def test_float_coefficients_convert_through_repr():
    assert to_fraction(0.1) == Fraction(1, 10)
    assert to_fraction("3/4") == Fraction(3, 4)


def test_mixed_variable_counts_are_rejected():
    with pytest.raises(ValueError):
        Poly.x(0, 1) + Poly.x(0, 2)


def test_partial_evaluation_in_y():
    p = Poly({(1, 1): 2, (0, 2): 1}, 1, 1)
    assert p.partial_eval_y([3]) == Poly({(1,): 6, (0,): 9}, 1)


# -- matrices ----------------------------------------------------------------------

@given(sym_matrices(2), sym_matrices(2))
def test_matrix_product_transpose(A, B):
    assert A.matmul(B).T == B.T.matmul(A.T)


@given(sym_matrices(3))
def test_numeric_evaluation_agrees_with_exact(A):
    pts = np.array([[0.5], [-1.25], [2.0]])
    vec = A.numeric()(pts)
    for k, pt in enumerate(pts):
        exact = A.to_float().evaluate(pt)
        assert np.allclose(vec[k], exact, atol=1e-12)


def test_nonsymmetric_matrix_is_flagged():
    t = Poly.x(0, 1)
    one = Poly.const(1, 1)
    assert not PolyMatrix([[one, t], [one, one]]).symmetric
    assert PolyMatrix([[one, t], [t, one]]).symmetric


def test_kron_side_and_entries():
    t = Poly.x(0, 1)
    A = PolyMatrix([[t, Poly.const(1, 1)], [Poly.const(1, 1), t]])
    I2 = PolyMatrix.identity(2, 1)
    K = kron(I2, A)
    assert K.size == 4
    assert K[(2, 3)] == Poly.const(1, 1) and K[(0, 2)].is_zero()


# -- block trace pairing -----------------------------------------------------------

def test_trace_p_on_numbers():
    C = np.arange(16.0).reshape(4, 4)
    assert np.array_equal(trace_p(C, 2), np.array([[0 + 5, 2 + 7], [8 + 13, 10 + 15]], dtype=float))


@given(any_matrices(2), sym_matrices(2))
def test_pairing_with_p_one_is_frobenius(A, B):
    got = bilinear_p(A, B, 1)[(0, 0)]
    want = Poly.zero(1)
    for s in range(2):
        for t in range(2):
            want = want + A[(s, t)] * B[(s, t)]
    assert got == want


@given(sym_matrices(2))
def test_pairing_with_identity_gives_trace(B):
    p = 2
    out = bilinear_p(PolyMatrix.identity(p * B.size, 1), B, p)
    tr = B.trace()
    for i in range(p):
        for j in range(p):
            assert out[(i, j)] == (tr if i == j else Poly.zero(1))


# -- degrees, homogenisation -------------------------------------------------------

def test_degree_info():
    t = Poly.x(0, 1)
    H = PolyMatrix([[t ** 3, t], [t, Poly.const(1, 1)]])
    info = degrees(H)
    assert (info.deg_x, info.d_H, info.half_x) == (3, 2, 2)


@given(sym_matrices(2, n=2, deg=3))
def test_homogenise_round_trip(H):
    dx = max(H.degree_x(), 0)
    two_d = dx + dx % 2
    Hh = homogenize(H, two_d)
    assert Hh.is_homogeneous_x() or Hh.is_zero()
    assert dehomogenize(Hh) == H


def test_theta_family():
    assert theta(2) == 1 + norm_sq(2)
    x1, x2 = Poly.x(0, 2), Poly.x(1, 2)
    assert big_theta(2, 3) == 1 + x1 ** 6 + x2 ** 6
