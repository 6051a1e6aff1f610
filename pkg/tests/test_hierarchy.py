from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from pmicert import hierarchy as H
from pmicert.certcore import CertTerm, SOSCertificate, SOSGram
from pmicert.measures import MeasureSpec
from pmicert.momentside import riesz
from pmicert.polyalg import Poly, PolyMatrix
from pmicert.sdp import farkas_ray_residuals
from pmicert.verify import grid_pd_check, verify_certificate

from conftest import two_by_two_target, unit_interval_constraint

TRIVIAL = MeasureSpec.trivial()


def interval_problem(F: PolyMatrix) -> H.PMIProblem:
    return H.PMIProblem(F, [unit_interval_constraint()], TRIVIAL)


# -- membership --------------------------------------------------------------------

def test_two_minus_x_squared_certifies():
    t = Poly.x(0, 1)
    res = H.certify_membership(interval_problem(PolyMatrix.scalar(2 - t ** 2)), 1)
    assert res.status == H.CERTIFIED and res.residual <= 1e-6


def test_hand_certificate_is_exact():
    # 2 - x^2 = 1 + 1 * (1 - x^2)
    t = Poly.x(0, 1)
    one = SOSGram(1, 0, [(0,)], [], 1, [[1]])
    cert = SOSCertificate([CertTerm("sigma0", one), CertTerm("sigma", one, 0)])
    rep = verify_certificate(PolyMatrix.scalar(2 - t ** 2), cert, [unit_interval_constraint()], TRIVIAL)
    assert rep.passed and rep.residual == 0.0


def test_matrix_target_with_box_measure(box_probability):
    prob = H.PMIProblem(two_by_two_target(), [unit_interval_constraint(1)], box_probability)
    res = H.certify_membership(prob, 1, 0)
    assert res.status == H.CERTIFIED
    assert verify_certificate(res.target, res.certificate, prob.G, prob.nu).passed


def test_negative_identity_gives_a_ray_and_dual_moments():
    F = PolyMatrix.identity(2, 1) * (-1)
    res = H.certify_membership(interval_problem(F), 1)
    assert res.status == H.INFEASIBLE
    rr = farkas_ray_residuals(res.problem, res.report.ray)
    assert rr["psd"] <= 1e-7 and rr["free"] <= 1e-7
    # the ray, read as moments, separates F from the truncated module
    assert riesz(res.dual_moments, F.to_float()) == pytest.approx(-1.0, abs=1e-6)


def test_default_k_is_half_y_degree():
    y = Poly.y(0, 1, 1)
    G = PolyMatrix.scalar(1 + y ** 3)
    assert H.default_k([G]) == 2
    assert H.default_k([]) == 0


# -- sparse --------------------------------------------------------------------------

def chain_problem():
    x = [Poly.x(i, 3) for i in range(3)]
    G = [PolyMatrix.scalar(1 - x[0] ** 2 - x[1] ** 2), PolyMatrix.scalar(1 - x[1] ** 2 - x[2] ** 2)]
    F = PolyMatrix.scalar(2 - x[0] * x[1] - x[1] * x[2])
    return H.PMIProblem(F, G, TRIVIAL)


def test_sparse_and_dense_agree_on_chain():
    prob = chain_problem()
    cd = H.CliqueDecomposition([(1, 2), (2, 3)])
    sparse = H.certify_sparse(prob, cd, 1)
    dense = H.certify_membership(prob, 1)
    assert sparse.status == dense.status == H.CERTIFIED
    assert sparse.residual <= 1e-6
    assert {t.clique for t in sparse.certificate.terms} == {1, 2}


def test_rip_witness():
    assert H.rip_validate([(1, 2), (3, 4), (2, 3)]) == (False, 3)
    assert H.rip_validate([(1, 2), (2, 3), (3, 4)]) == (True, None)


def test_bad_clique_assignments():
    prob = chain_problem()
    with pytest.raises(ValueError, match="outside clique"):
        H.CliqueDecomposition([(1, 2), (2, 3)], [[2], [1]]).validate(3, prob.G)
    with pytest.raises(ValueError, match="not covered"):
        H.CliqueDecomposition([(1,), (2, 3)]).validate(3, prob.G)


# -- homogeneous, inhomogeneous, Polya ---------------------------------------------------

def test_homogeneous_form_certifies():
    x1, x2 = Poly.x(0, 2), Poly.x(1, 2)
    F = PolyMatrix.identity(2, 2) * (x1 ** 2 + x2 ** 2)
    res = H.certify_homogeneous(H.PMIProblem(F, [], TRIVIAL), 0)
    assert res.status == H.CERTIFIED


@pytest.mark.parametrize("eps", [1, Fraction(1, 10)])
def test_inhomogeneous_square(eps):
    t = Poly.x(0, 1)
    res = H.certify_inhomogeneous(H.PMIProblem(PolyMatrix.scalar(t ** 2), [], TRIVIAL), eps, 0)
    assert res.status == H.CERTIFIED


def test_odd_target_reports_the_cap():
    t = Poly.x(0, 1)
    res = H.certify_inhomogeneous(H.PMIProblem(PolyMatrix.scalar(t ** 3), [], TRIVIAL),
                                  Fraction(1, 100), None, n_cap=2)
    assert res.status == H.INFEASIBLE
    assert res.meta["search"] == "not found for N <= 2"


def polya_form():
    x1, x2 = Poly.x(0, 2), Poly.x(1, 2)
    return PolyMatrix.scalar(x1 ** 2 + x2 ** 2 - x1 * x2)


def brute_force_polya_coefficients(N: int) -> dict:
    """Coefficients of (x1 + x2)^N (x1^2 + x2^2 - x1 x2) by expanding word by word."""
    P = {(2, 0): 1, (0, 2): 1, (1, 1): -1}
    out: dict = {}
    for word in itertools.product((0, 1), repeat=N):
        base = (word.count(0), word.count(1))
        for mono, c in P.items():
            key = (base[0] + mono[0], base[1] + mono[1])
            out[key] = out.get(key, 0) + c
    return out


@pytest.mark.parametrize("N", [0, 1, 2, 3, 4])
def test_polya_expansion_matches_enumeration(N):
    rep = H.polya_expand_check(polya_form(), N)
    want = brute_force_polya_coefficients(N)
    for a, C in rep.coefficients.items():
        assert C[0, 0] == want.get(a, 0)


def test_polya_sdp_follows_the_expansion():
    prob = H.PMIProblem(polya_form(), [], TRIVIAL)
    assert H.certify_polya(prob, 2).status == H.INFEASIBLE
    assert H.certify_polya(prob, 3).status == H.CERTIFIED


def test_polya_with_quantified_constraint():
    x1, x2 = Poly.x(0, 2, 1), Poly.x(1, 2, 1)
    G = PolyMatrix.scalar(x1 + x2)
    prob = H.PMIProblem(polya_form(), [G], MeasureSpec.discrete([[0]], [1]))
    assert H.certify_polya(prob, 3).status == H.CERTIFIED


def test_polya_needs_compact_measure():
    x1 = Poly.x(0, 2, 1)
    prob = H.PMIProblem(polya_form(), [PolyMatrix.scalar(x1)], MeasureSpec.gaussian(1))
    with pytest.raises(ValueError, match="compact"):
        H.build_polya(prob, 1)


# -- perturbation and robust optimisation ---------------------------------------------

def test_perturbation_on_a_square_is_zero():
    t = Poly.x(0, 1)
    res = H.solve_perturbation(H.PMIProblem(PolyMatrix.scalar(t ** 2), [], TRIVIAL), 1, 0)
    assert res.status == H.BOUND_FOUND
    assert -1e-8 <= res.value <= 1e-6
    assert res.meta["dual_value"] == pytest.approx(res.value, abs=1e-6)


def test_robust_toy_value():
    t = Poly.x(0, 1)
    P = [PolyMatrix.scalar(-t), PolyMatrix.scalar(Poly.const(-1, 1))]
    prob = H.PMIProblem(None, [unit_interval_constraint()], TRIVIAL, objective_c=[1], objective_P=P)
    res = H.build_robust_opt([1], P, prob, 2)
    grid = np.linspace(-1, 1, 2001)
    assert res.status == H.BOUND_FOUND
    assert res.value == pytest.approx(grid.max(), abs=1e-6)


def test_robust_contradiction_is_infeasible():
    # -1 + gamma x >= 0 fails at x = 0 for every gamma
    t = Poly.x(0, 1)
    P = [PolyMatrix.scalar(Poly.const(-1, 1)), PolyMatrix.scalar(-t)]
    prob = H.PMIProblem(None, [unit_interval_constraint()], TRIVIAL, objective_c=[1], objective_P=P)
    for k in (1, 2):
        assert H.build_robust_opt([1], P, prob, k).status == H.INFEASIBLE


def test_robust_input_checks():
    t = Poly.x(0, 1)
    P = [PolyMatrix.scalar(-t)]
    prob = H.PMIProblem(None, [], TRIVIAL, objective_c=[1], objective_P=P)
    with pytest.raises(ValueError):
        H.build_robust_opt([1], P, prob, 1)
    with pytest.raises(ValueError):
        H.build_robust_opt_noncompact([1], P + P, prob, 0, 1)


def test_certified_targets_are_pd_on_a_grid():
    res = H.certify_membership(interval_problem(two_by_two_target()), 1)
    rep = grid_pd_check(res.target, 1.0, 41, [unit_interval_constraint()])
    assert res.status == H.CERTIFIED and rep.outcome == "positive"


def test_noncompact_robust_toy_matches_grid():
    # gamma - x^2 + 0.1 (1 + x^2)^2 >= 0 on the real line
    t = Poly.x(0, 1)
    P = [PolyMatrix.scalar(-t ** 2), PolyMatrix.scalar(Poly.const(-1, 1))]
    prob = H.PMIProblem(None, [], TRIVIAL, objective_c=[1], objective_P=P)
    grid = np.linspace(-5, 5, 100001)
    want = -np.min(0.1 * (1 + grid ** 2) ** 2 - grid ** 2)
    for k in (1, 2):
        res = H.build_robust_opt_noncompact([1], P, prob, Fraction(1, 10), k)
        assert res.status == H.BOUND_FOUND
        assert res.value == pytest.approx(want, abs=1e-6)
