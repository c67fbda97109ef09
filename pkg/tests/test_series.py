from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import random_points, random_series
from degkam.series import (Caps, DomainParams, LieSeriesDivergence, SeriesError, TFSeries,
                           add_scale, average, dumps, evaluate, evaluate_point, lie_transform,
                           loads, majorant_norm, multiply, partial_derivative, poisson_bracket,
                           shift_z, truncate)

N_RANDOM = 100
BIG = Caps(12, 20)


def _close(A, B, tol):
    diff = add_scale(-1.0, B, A)
    scale = max(1.0, A.l1(), B.l1())
    return diff.l1() <= tol * scale


# -- construction and canonical form --------------------------------------

def test_canonical_merges_and_drops_zero():
    F = TFSeries(1, 0, [[1, 0], [1, 0], [0, 1]], [1.0, -1.0, 2.0], Caps(3, 3))
    assert len(F) == 1
    assert F.coefficient((0,), (1,)) == 2.0


def test_caps_discard_out_of_range_terms():
    F = TFSeries.from_terms(1, 1, {((5,), (0,), (0, 0)): 1.0, ((0,), (1,), (0, 0)): 1.0}, Caps(3, 3))
    assert len(F) == 1


def test_negative_exponent_rejected():
    with pytest.raises(SeriesError):
        TFSeries(1, 0, [[0, -1]], [1.0], Caps(1, 1))


def test_domain_params_validation():
    with pytest.raises(ValueError):
        DomainParams(1.0, 0.5)
    with pytest.raises(ValueError):
        DomainParams(0.5, 0.0)


def test_operations_preserve_reality(rng):
    for _ in range(20):
        F, G = random_series(rng), random_series(rng)
        for S in (add_scale(0.3, F, G), multiply(F, G), poisson_bracket(F, G),
                  shift_z(F, rng.normal(size=2))):
            assert S.reality_defect() <= 1e-12 * max(1.0, S.l1())


# -- add_scale ------------------------------------------------------------

def test_add_scale_inverse_and_zero(rng):
    F, G = random_series(rng), random_series(rng)
    assert add_scale(1.0, F, -F).is_zero()
    assert add_scale(0.0, F, G) == G


def test_add_scale_pointwise(rng):
    for _ in range(N_RANDOM):
        F, G = random_series(rng), random_series(rng)
        a = rng.normal()
        x, y, z = random_points(rng, 10)
        lhs = evaluate(add_scale(a, F, G), x, y, z)
        rhs = a * evaluate(F, x, y, z) + evaluate(G, x, y, z)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_dimension_mismatch():
    with pytest.raises(SeriesError):
        add_scale(1.0, TFSeries.constant(1, 1, 1.0), TFSeries.constant(2, 1, 1.0))


# -- multiply -------------------------------------------------------------

def test_monomial_product():
    P = multiply(TFSeries.monomial(1, 1, iota=(1,)), TFSeries.monomial(1, 1, j=(1, 0)))
    assert P.to_dict() == {((0,), (1,), (1, 0)): 1.0}


def test_multiply_commutes(rng):
    for _ in range(N_RANDOM):
        F, G = random_series(rng), random_series(rng)
        assert multiply(F, G) == multiply(G, F)


def test_multiply_pointwise(rng):
    for _ in range(N_RANDOM):
        F, G = random_series(rng), random_series(rng)
        x, y, z = random_points(rng, 5)
        np.testing.assert_allclose(evaluate(multiply(F, G), x, y, z),
                                   evaluate(F, x, y, z) * evaluate(G, x, y, z),
                                   rtol=1e-10, atol=1e-10)


def test_multiply_truncates_to_caps():
    y = TFSeries.monomial(1, 0, iota=(1,))
    assert multiply(y, y, Caps(0, 3)).is_zero()


# -- derivatives ----------------------------------------------------------

def test_power_rule_and_fourier_mode():
    F = TFSeries.monomial(1, 0, iota=(2,))
    assert partial_derivative(F, "y1").to_dict() == {((0,), (1,), ()): 2.0}
    E = TFSeries.monomial(2, 0, k=(3, -1))
    assert partial_derivative(E, "x1").to_dict() == {((3, -1), (0, 0), ()): 3j}


def test_invalid_variable():
    with pytest.raises(SeriesError):
        partial_derivative(TFSeries.constant(2, 1, 1.0), "z3")
    with pytest.raises(SeriesError):
        partial_derivative(TFSeries.constant(2, 1, 1.0), "w1")


def test_derivative_finite_difference(rng):
    h = 1e-5
    names = ["x1", "x2", "y1", "y2", "z1", "z2"]
    for _ in range(N_RANDOM):
        F = random_series(rng)
        x, y, z = random_points(rng, 1)
        base = np.concatenate([x, y, z], axis=1)[0]
        var = rng.integers(0, 6)
        e = np.zeros(6)
        e[var] = h
        plus, minus = base + e, base - e
        fd = (evaluate_point(F, plus[:2], plus[2:4], plus[4:])
              - evaluate_point(F, minus[:2], minus[2:4], minus[4:])) / (2 * h)
        exact = evaluate_point(partial_derivative(F, names[var]), base[:2], base[2:4], base[4:])
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


# -- Poisson bracket ------------------------------------------------------

def test_bracket_self_vanishes(rng):
    for _ in range(10):
        F = random_series(rng)
        assert poisson_bracket(F, F).is_zero()


def test_bracket_frequency_term():
    omega = (1.0, np.sqrt(2.0))
    lin = TFSeries.from_terms(2, 0, {((0, 0), (1, 0), ()): omega[0], ((0, 0), (0, 1), ()): omega[1]})
    E = TFSeries.monomial(2, 0, k=(2, -1))
    B = poisson_bracket(lin, E)
    assert B.coefficient((2, -1)) == pytest.approx(-1j * (2 * omega[0] - omega[1]), abs=1e-15)


def test_bracket_sign_convention():
    # {x, y} = 1 and {u, v} = 1 with J = [[0, I], [-I, 0]]
    u = TFSeries.monomial(1, 1, j=(1, 0))
    v = TFSeries.monomial(1, 1, j=(0, 1))
    assert poisson_bracket(u, v).to_dict() == {((0,), (0,), (0, 0)): 1.0}
    y = TFSeries.monomial(1, 1, iota=(1,))
    e = TFSeries.monomial(1, 1, k=(1,))
    # {e^{ix}, y} = d_x e^{ix} = i e^{ix}
    assert poisson_bracket(e, y).coefficient((1,)) == 1j


def test_bracket_antisymmetry(rng):
    for _ in range(N_RANDOM):
        F, G = random_series(rng), random_series(rng)
        assert _close(poisson_bracket(F, G), -poisson_bracket(G, F), 1e-14)


def test_jacobi_identity(rng):
    for _ in range(N_RANDOM):
        F, G, H = (random_series(rng, nterms=3) for _ in range(3))
        total = (poisson_bracket(F, poisson_bracket(G, H, BIG), BIG)
                 + poisson_bracket(G, poisson_bracket(H, F, BIG), BIG)
                 + poisson_bracket(H, poisson_bracket(F, G, BIG), BIG))
        assert np.abs(total.coeffs).max(initial=0.0) <= 1e-12 * max(1.0, F.l1() * G.l1() * H.l1())


def test_leibniz_rule(rng):
    for _ in range(N_RANDOM):
        F, G, H = (random_series(rng, nterms=3) for _ in range(3))
        lhs = poisson_bracket(F, multiply(G, H, BIG), BIG)
        rhs = (multiply(poisson_bracket(F, G, BIG), H, BIG)
               + multiply(G, poisson_bracket(F, H, BIG), BIG))
        diff = lhs - rhs
        assert np.abs(diff.coeffs).max(initial=0.0) <= 1e-12 * max(1.0, lhs.l1())


# -- truncation and average -----------------------------------------------

def test_truncate_edge_cases():
    P = TFSeries.monomial(2, 1, k=(5, 0))
    R, tail = truncate(P, 3, 3)
    assert R.is_zero() and tail == P
    Q = TFSeries.cos_mode(2, 1, (1, 1), j=(1, 0))
    R, tail = truncate(Q, 3, 3)
    assert R == Q and tail.is_zero()
    with pytest.raises(ValueError):
        truncate(Q, 0, 3)
    with pytest.raises(ValueError):
        truncate(Q, 3, 1)


def test_truncate_exact_split(rng):
    for _ in range(N_RANDOM):
        P = random_series(rng, kmax=6, wmax=6, nterms=12)
        K, m = int(rng.integers(1, 5)), int(rng.integers(2, 5))
        R, tail = truncate(P, K, m)
        assert add_scale(1.0, R, tail) == P
        assert np.all(R.orders() <= K) and np.all(R.weighted_degrees() <= m)
        assert np.all((tail.orders() > K) | (tail.weighted_degrees() > m))


def test_truncation_tail_decay(rng):
    for _ in range(N_RANDOM):
        P = random_series(rng, kmax=8, wmax=8, nterms=12)
        s, r = rng.uniform(0.05, 0.5), rng.uniform(0.2, 0.9)
        r_plus = r * rng.uniform(0.3, 0.9)
        K, m = int(rng.integers(1, 6)), 2
        _, tail = truncate(P, K, m)
        lhs = majorant_norm(tail, DomainParams(s, r_plus))
        rhs = majorant_norm(P, DomainParams(s, r)) * (np.exp(-K * (r - r_plus)) + s)
        assert lhs <= rhs * (1 + 1e-12)


def test_average():
    E = TFSeries.monomial(2, 1, k=(1, 0))
    assert average(E).is_zero()


def test_average_idempotent_and_quadrature(rng):
    grid = np.arange(8) * 2 * np.pi / 8
    X = np.array(np.meshgrid(grid, grid, indexing="ij")).reshape(2, -1).T
    for _ in range(N_RANDOM):
        R = random_series(rng, kmax=3)
        A = average(R)
        assert average(A) == A
        _, y, z = random_points(rng, 1)
        vals = evaluate(R, X, np.repeat(y, len(X), 0), np.repeat(z, len(X), 0))
        assert abs(vals.mean() - evaluate_point(A, X[0], y[0], z[0])) <= 1e-10 * max(1.0, R.l1())


# -- shift ----------------------------------------------------------------

def test_shift_linear_and_identity(rng):
    z1 = TFSeries.monomial(1, 1, j=(1, 0))
    S = shift_z(z1, [0.25, -1.0])
    assert S.to_dict() == {((0,), (0,), (0, 0)): 0.25, ((0,), (0,), (1, 0)): 1.0}
    F = random_series(rng)
    assert shift_z(F, [0.0, 0.0]) == F


def test_shift_pointwise(rng):
    for _ in range(N_RANDOM):
        F = random_series(rng)
        delta = rng.uniform(-0.5, 0.5, size=2)
        x, y, z = random_points(rng, 5)
        np.testing.assert_allclose(evaluate(shift_z(F, delta), x, y, z),
                                   evaluate(F, x, y, z + delta), rtol=1e-12, atol=1e-12)


def test_shift_group_action(rng):
    for _ in range(N_RANDOM):
        F = random_series(rng)
        a, b = rng.uniform(-1, 1, size=2), rng.uniform(-1, 1, size=2)
        assert _close(shift_z(shift_z(F, a), b), shift_z(F, a + b), 1e-12)


# -- norm -----------------------------------------------------------------

def test_norm_single_terms():
    dom = DomainParams(0.5, 0.1)
    assert majorant_norm(TFSeries.constant(1, 1, -3.0), dom) == 3.0
    F = TFSeries.monomial(1, 1, k=(1,), iota=(1,))
    assert majorant_norm(F, dom) == pytest.approx(0.25 * np.exp(0.1), rel=1e-15)
    assert majorant_norm(TFSeries.zero(1, 1, Caps(1, 1)), dom) == 0.0


def test_norm_axioms(rng):
    for _ in range(N_RANDOM):
        F, G = random_series(rng), random_series(rng)
        dom = DomainParams(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95))
        nF, nG = majorant_norm(F, dom), majorant_norm(G, dom)
        assert majorant_norm(F + G, dom) <= (nF + nG) * (1 + 1e-12)
        assert majorant_norm(F.scaled(-2.5), dom) == pytest.approx(2.5 * nF, rel=1e-12)
        assert majorant_norm(multiply(F, G, BIG), dom) <= nF * nG * (1 + 1e-12)


def test_norm_bounds_sup(rng):
    for _ in range(20):
        F = random_series(rng)
        s, r = 0.6, 0.3
        x, y, z = random_points(rng, 50, radius=1.0)
        vals = evaluate(F, x, y * s * s, z * s)
        assert np.abs(vals).max() <= majorant_norm(F, DomainParams(s, r))


# -- evaluation -----------------------------------------------------------

def test_evaluate_trivial():
    assert evaluate_point(TFSeries.constant(2, 1, 4.5), [1, 2], [0, 0], [0, 0]) == 4.5
    C = TFSeries.cos_mode(2, 1, (1, 2))
    assert evaluate_point(C, [0, 0], [0.3, 0.1], [0.2, 0.2]) == pytest.approx(1.0, abs=1e-15)


def test_evaluate_rational_oracle(rng):
    # at x = 0 every phase is 1 and evaluation is exact rational arithmetic
    for _ in range(N_RANDOM):
        F = random_series(rng)
        y = [Fraction(int(v), 16) for v in rng.integers(-8, 9, size=2)]
        z = [Fraction(int(v), 16) for v in rng.integers(-8, 9, size=2)]
        exact = Fraction(0)
        for term, c in F.terms():
            mono = Fraction(1)
            for b, e in zip(y, term.iota):
                mono *= b ** e
            for b, e in zip(z, term.j):
                mono *= b ** e
            exact += Fraction(c.real) * mono
        val = evaluate_point(F, [0, 0], [float(v) for v in y], [float(v) for v in z])
        assert abs(val - float(exact)) <= 1e-14 * max(1.0, F.l1())


# -- serialization --------------------------------------------------------

def test_serialization_round_trip(rng):
    for _ in range(20):
        F = random_series(rng)
        text = dumps(F)
        G = loads(text)
        assert G == F and G.caps == F.caps
        assert dumps(G) == text


def test_loads_errors():
    with pytest.raises(SeriesError):
        loads("")
    with pytest.raises(SeriesError):
        loads("TFS 1 1 2 2\n0 | 0 | 0 0 | 1.0\n")


# -- Lie transform --------------------------------------------------------

def test_lie_identity_and_nilpotent():
    H = TFSeries.monomial(1, 1, j=(1, 0))
    assert lie_transform(H, TFSeries.zero(1, 1, Caps(1, 1))) == H
    # {u, c v e^{ix}} = c e^{ix}, and the next bracket vanishes
    F = TFSeries.cos_mode(1, 1, (1,), j=(0, 1), c=0.2)
    out = lie_transform(H, F)
    expected = H + poisson_bracket(H, F)
    assert _close(out, expected, 1e-15)


def test_lie_rejects_averaged_generator():
    with pytest.raises(ValueError):
        lie_transform(TFSeries.constant(1, 1, 1.0), TFSeries.monomial(1, 1, iota=(1,)))


def test_lie_divergence_signal():
    # ad_F acts on u as a rotation of size 3 in the (u, v) plane: terms do not
    # shrink below the floor in a handful of orders
    H = TFSeries.monomial(1, 1, j=(1, 0))
    F = TFSeries.cos_mode(1, 1, (1,), j=(2, 0), c=30.0) + TFSeries.cos_mode(1, 1, (1,), j=(0, 2), c=30.0)
    with pytest.raises(LieSeriesDivergence):
        lie_transform(H, F, caps=Caps(8, 6), order_cap=3)


def _vector_field(F):
    n, d = F.n, F.d
    dx = [partial_derivative(F, ("x", i)) for i in range(n)]
    dy = [partial_derivative(F, ("y", i)) for i in range(n)]
    dz = [partial_derivative(F, ("z", l)) for l in range(2 * d)]

    def rhs(_t, s):
        x, y, z = s[:n], s[n:2 * n], s[2 * n:]
        ev = lambda G: evaluate_point(G, x, y, z)
        gz = np.array([ev(G) for G in dz])
        zdot = np.concatenate([gz[d:], -gz[:d]])
        return np.concatenate([[ev(G) for G in dy], [-ev(G) for G in dx], zdot])

    return rhs


def test_lie_transform_matches_flow(rng):
    # H o phi_F^1 evaluated directly through the time-1 flow of F
    for _ in range(5):
        H = random_series(rng, kmax=1, wmax=3, nterms=3)
        F = random_series(rng, kmax=1, wmax=2, nterms=3, scale=1e-2)
        F = F.mask(np.any(F.k != 0, axis=1))
        out = lie_transform(H, F, caps=Caps(10, 12))
        x, y, z = random_points(rng, 1, radius=0.3)
        start = np.concatenate([x[0], y[0], z[0]])
        sol = solve_ivp(_vector_field(F), (0, 1), start, rtol=1e-12, atol=1e-14, method="DOP853")
        end = sol.y[:, -1]
        direct = evaluate_point(H, end[:2], end[2:4], end[4:])
        assert evaluate_point(out, x[0], y[0], z[0]) == pytest.approx(direct, abs=1e-8)
