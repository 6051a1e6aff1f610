from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmicert.certcore import CertTerm, SOSCertificate, SOSGram
from pmicert.hierarchy import PMIProblem, certify_membership
from pmicert.measures import MeasureSpec
from pmicert.polyalg import Poly, PolyMatrix
from pmicert.verify import (box_grid, estimate_M, grid_pd_check, multiplier_scalar,
                            prop_main_check, reconstruct, verify_certificate)

from conftest import two_by_two_target, unit_interval_constraint

TRIVIAL = MeasureSpec.trivial()


def test_reconstruct_hand_certificate():
    one = SOSGram(1, 0, [(0,)], [], 1, [[1]])
    cert = SOSCertificate([CertTerm("sigma0", one), CertTerm("sigma", one, 0)])
    R = reconstruct(cert, [unit_interval_constraint()], TRIVIAL)
    assert R == PolyMatrix.scalar(2 - Poly.x(0, 1) ** 2)


def test_corrupted_certificate_fails():
    prob = PMIProblem(two_by_two_target(), [unit_interval_constraint()], TRIVIAL)
    res = certify_membership(prob, 1)
    term = res.certificate.terms[0]
    Z = term.gram.Z.copy()
    Z[0, 0] += 0.5
    bad = SOSCertificate([CertTerm(term.role, term.gram.with_Z(Z), term.index)] + res.certificate.terms[1:])
    rep = verify_certificate(res.target, bad, prob.G, prob.nu)
    assert not rep.passed and rep.residual == pytest.approx(0.5, abs=1e-6)
    assert rep.worst_monomial == (0,)


def test_indefinite_gram_fails_even_with_matching_polynomial():
    # (-1) + 3 * (1 - x^2) = 2 - 3x^2 with a negative "SOS" term
    neg = SOSGram(1, 0, [(0,)], [], 1, [[-1]])
    three = SOSGram(1, 0, [(0,)], [], 1, [[3]])
    cert = SOSCertificate([CertTerm("sigma0", neg), CertTerm("sigma", three, 0)])
    F = PolyMatrix.scalar(2 - 3 * Poly.x(0, 1) ** 2)
    rep = verify_certificate(F, cert, [unit_interval_constraint()], TRIVIAL)
    assert rep.residual == 0.0 and not rep.passed and rep.failed_grams == [0]


def test_size_mismatch_is_an_error():
    one = SOSGram(1, 0, [(0,)], [], 1, [[1]])
    cert = SOSCertificate([CertTerm("sigma0", one)])
    with pytest.raises(ValueError):
        verify_certificate(two_by_two_target(), cert, [], TRIVIAL)


def test_grid_check_finds_the_minimum():
    t = Poly.x(0, 1)
    rep = grid_pd_check(PolyMatrix.scalar(t ** 2 + t - 1), 2.0, 81)
    # x^2 + x - 1 has minimum -1.25 at x = -1/2
    assert rep.min_eig == pytest.approx(-1.25) and rep.outcome == "nonpositive"


def test_grid_check_without_feasible_points():
    t = Poly.x(0, 1)
    empty = PolyMatrix.scalar(Poly.const(-1, 1) - t ** 2)
    rep = grid_pd_check(PolyMatrix.scalar(t), 1.0, 11, [empty])
    assert rep.outcome == "no feasible sample" and rep.min_eig is None


def test_grid_respects_sampled_y():
    x, y = Poly.x(0, 1, 1), Poly.y(0, 1, 1)
    G = PolyMatrix.scalar(y - x)  # feasible x must satisfy x <= y for every sampled y
    nu = MeasureSpec.discrete([[0], [1]], [1, 1])
    rep = grid_pd_check(PolyMatrix.scalar(1 - Poly.x(0, 1)), 1.0, 21, [G], nu)
    assert rep.argmin[0] <= 1e-12 and rep.min_eig == pytest.approx(1.0)


def test_box_grid_shape():
    assert box_grid(2, 1.0, 5).shape == (25, 2)
    assert box_grid(0, 1.0, 5).shape == (1, 0)
    with pytest.raises(ValueError):
        box_grid(1, 1.0, 1)


def test_estimate_m_on_interval():
    assert estimate_M([unit_interval_constraint()], 1.5, density=31) == pytest.approx(1.1 * 1.25)


@given(st.floats(0, 1), st.floats(0.5, 3), st.integers(1, 8))
def test_multiplier_scalar_is_nonincreasing_in_k(frac, M, k):
    lam = np.array([frac * M])
    assert multiplier_scalar(lam, M, k + 1)[()] <= multiplier_scalar(lam, M, k)[()] + 1e-15


def test_constructive_sweep_on_interval():
    rep = prop_main_check(two_by_two_target(), [unit_interval_constraint()], TRIVIAL, 1.5,
                          k_range=range(4), density=31)
    assert rep.k_bar is not None and rep.monotone_ok
    assert rep.M == pytest.approx(1.375)
