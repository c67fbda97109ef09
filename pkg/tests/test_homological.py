import numpy as np
import pytest

from conftest import random_series
from degkam.homological import (ResonanceViolation, build_divisor_matrix, block_table,
                                certify_nonresonance, nonzero_modes, residual_check,
                                solve_homological, split_Q, z_bracket)
from degkam.normal_form import NormalForm, z_polynomial
from degkam.series import (Caps, DomainParams, TFSeries, add_scale, majorant_norm, multiply,
                           partial_derivative, truncate)

GOLDEN = np.array([1.0, (1 + np.sqrt(5)) / 2])
DOM = DomainParams(0.5, 0.3)


def quartic(n=2):
    return z_polynomial(n, 1, {(4, 0): 0.25, (0, 4): 0.25})


def test_divisor_matrix_degenerate_start():
    A = build_divisor_matrix((2, -1), GOLDEN, np.zeros((2, 2)), ((0, 0), 2))
    expected = 1j * (2 - GOLDEN[1]) / 3
    np.testing.assert_allclose(A, expected * np.eye(3), atol=1e-15)


def test_divisor_matrix_scalar_case():
    A = build_divisor_matrix((2,), [1.0], np.zeros((2, 2)), ((0,), 1))
    np.testing.assert_allclose(A, 1j * np.eye(2))


def test_divisor_matrix_rejects_zero_mode():
    with pytest.raises(ValueError):
        build_divisor_matrix((0, 0), GOLDEN, np.zeros((2, 2)), ((0, 0), 1))


def test_divisor_matrix_eigenvalues(rng):
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    for _ in range(20):
        h = rng.normal(size=(2, 2))
        h = h + h.T
        k = rng.integers(-4, 5, size=2)
        if not k.any():
            continue
        A = build_divisor_matrix(k, GOLDEN, h, ((0, 0), 1))
        norm = np.abs(k).sum()
        expected = 1j * np.dot(k, GOLDEN) / norm + np.linalg.eigvals(J @ h) / norm
        got = np.linalg.eigvals(A)
        for e in expected:
            assert np.abs(got - e).min() <= 1e-12


def test_exact_resonance_detected():
    with pytest.raises(ResonanceViolation) as info:
        certify_nonresonance([1.0, 1.0], np.zeros((2, 2)), 1e-9, 2.0, 3, 3)
    assert info.value.k in {(1, -1), (-1, 1)}
    assert info.value.divisor_kind == "scalar"


def test_golden_mean_passes_ball_of_twenty():
    certs = certify_nonresonance(GOLDEN, np.zeros((2, 2)), 1e-3, 2.0, 20, 3)
    modes = {c.k for c in certs}
    # one representative of each pair +-k
    assert len(modes) == len(nonzero_modes(2, 20)) // 2
    assert min(c.margin for c in certs) > 0


def test_margin_sign_matches_pass():
    for gamma in (1e-3, 0.05, 0.2, 0.5):
        try:
            certs = certify_nonresonance(GOLDEN, np.zeros((2, 2)), gamma, 2.0, 12, 3)
            assert min(c.margin for c in certs) > 0
        except ResonanceViolation as exc:
            assert exc.margin <= 0


def test_certify_preconditions():
    with pytest.raises(ValueError):
        certify_nonresonance(GOLDEN, np.zeros((2, 2)), 0.0, 2.0, 4, 3)
    with pytest.raises(ValueError):
        certify_nonresonance(GOLDEN, np.zeros((2, 2)), 1e-3, 1.0, 4, 3)


def test_split_q_trivial_and_degree_counting(rng):
    g = z_polynomial(2, 1, {(3, 0): 1.0, (1, 2): -0.5})
    gbar = TFSeries.zero(2, 1, Caps(0, 0))
    assert split_Q(g, gbar, TFSeries.zero(2, 1, Caps(3, 3)), 3).is_zero()
    F = TFSeries.cos_mode(2, 1, (1, 0), j=(2, 1))
    full = z_bracket(g, F)
    assert add_scale(-1.0, split_Q(g, gbar, F, 3), full).l1() == 0.0


def test_split_q_recombination(rng):
    for _ in range(30):
        g = random_series(rng, kmax=0, wmax=4, nterms=3)
        g = g.mask(np.all(g.iota == 0, axis=1) & (g.j.sum(axis=1) >= 2))
        gbar = TFSeries.from_terms(2, 1, {((0, 0), (1, 0), (1, 0)): rng.normal()})
        F = random_series(rng, kmax=3, wmax=3, nterms=5)
        full = z_bracket(add_scale(1.0, g, gbar), F)
        Q = split_Q(g, gbar, F, 3)
        low = full.mask(full.weighted_degrees() <= 3)
        assert add_scale(1.0, low, Q) == full


def test_no_oscillating_part_gives_zero_generator():
    N = NormalForm.from_parts(GOLDEN, quartic())
    R = TFSeries.monomial(2, 1, iota=(1, 0), c=0.3)
    sol = solve_homological(N, R, None, 3)
    assert sol.F.is_zero() and sol.Q.is_zero()


def test_one_mode_classical_solve():
    N = NormalForm.from_parts(GOLDEN, TFSeries.zero(2, 1, Caps(0, 0)))
    eps, k = 1e-3, (2, -1)
    R = TFSeries.monomial(2, 1, k=k, c=eps)
    sol = solve_homological(N, R, None, 3)
    assert sol.F.to_dict() == pytest.approx(
        {(k, (0, 0), (0, 0)): eps / (1j * np.dot(k, GOLDEN))}, rel=1e-15)
    assert residual_check(N, sol.F, R, sol.Q, DOM) <= 1e-14


def _random_problem(rng, scale=1.0):
    h_tilde = TFSeries.from_terms(2, 1, {((0, 0), (2, 0), (0, 0)): rng.normal(),
                                         ((0, 0), (1, 1), (0, 0)): rng.normal()})
    g_bar = TFSeries.from_terms(2, 1, {((0, 0), (1, 0), (1, 0)): rng.normal(),
                                       ((0, 0), (0, 1), (0, 1)): rng.normal()})
    g = z_polynomial(2, 1, {(4, 0): rng.uniform(0.1, 1), (0, 4): rng.uniform(0.1, 1),
                            (2, 2): rng.normal(), (3, 0): rng.normal()})
    N = NormalForm.from_parts(GOLDEN, g, h_tilde, g_bar)
    P = random_series(rng, kmax=4, wmax=3, nterms=10, scale=scale)
    R, _ = truncate(P, 4, 3)
    return N, R


def test_residual_oracle_random(rng):
    for _ in range(10):
        N, R = _random_problem(rng)
        certs = certify_nonresonance(N.omega, N.hess_g0(), 1e-3, 2.0, 4, 3)
        sol = solve_homological(N, R, certs, 3, K_plus=4)
        assert residual_check(N, sol.F, R, sol.Q, DOM) <= 1e-10 * majorant_norm(R, DOM)
        # generator shape
        assert np.all(sol.F.orders() > 0) and np.all(sol.F.orders() <= 4)
        assert np.all(sol.F.weighted_degrees() <= 3)
        assert np.all(sol.Q.weighted_degrees() > 3)
        assert sol.F.reality_defect() <= 1e-12 * sol.F.l1()


def test_q_decomposition(rng):
    # Q is the z-bracket correction plus the degree-raising y-frequency terms
    N, R = _random_problem(rng)
    sol = solve_homological(N, R, None, 3)
    yfreq = add_scale(1.0, N.h_tilde, N.g_bar)
    extra = None
    for i in range(2):
        term = multiply(partial_derivative(yfreq, ("y", i)), partial_derivative(sol.F, ("x", i)))
        extra = term if extra is None else add_scale(1.0, extra, term)
    extra = extra.mask(extra.weighted_degrees() > 3).scaled(-1.0)
    expected = add_scale(1.0, split_Q(N.g, N.g_bar, sol.F, 3), extra)
    diff = add_scale(-1.0, expected, sol.Q)
    assert diff.l1() <= 1e-13 * sol.Q.l1()


def test_certificate_soundness(rng):
    N, R = _random_problem(rng)
    certs = certify_nonresonance(N.omega, N.hess_g0(), 1e-3, 2.0, 4, 3)
    sol = solve_homological(N, R, certs, 3, K_plus=4)
    assert sol.blocks
    for b in sol.blocks:
        assert b.sigma_min >= b.certified * (1 - 1e-12)
    table = block_table(sol.blocks)
    assert len(table.splitlines()) == len(sol.blocks) + 1


def test_residual_perturbation_and_linearity():
    N = NormalForm.from_parts(GOLDEN, quartic())
    eps, k = 1e-6, (1, 0)
    R = TFSeries.cos_mode(2, 1, k, c=eps) + TFSeries.cos_mode(2, 1, (0, 1), j=(1, 0), c=eps)
    sol = solve_homological(N, R, None, 3)
    bump = TFSeries.monomial(2, 1, k=k, c=1e-3)
    res = residual_check(N, add_scale(1.0, sol.F, bump), R, sol.Q, DOM)
    assert res >= 1e-3 * abs(np.dot(k, GOLDEN)) * (1 - 1e-12)
    sol2 = solve_homological(N, R.scaled(2.0), None, 3)
    assert add_scale(-2.0, sol.F, sol2.F).l1() <= 1e-15 * sol2.F.l1()
    assert add_scale(-2.0, sol.Q, sol2.Q).l1() <= 1e-15 * sol2.Q.l1()
    assert residual_check(N, sol2.F, R.scaled(2.0), sol2.Q, DOM) <= 2e-14 * eps


def test_rejects_nonvanishing_gradient():
    g = z_polynomial(2, 1, {(1, 0): 1e-3, (4, 0): 1.0})
    N = NormalForm.from_parts(GOLDEN, g)
    with pytest.raises(ValueError):
        solve_homological(N, TFSeries.monomial(2, 1, k=(1, 0)), None, 3)
