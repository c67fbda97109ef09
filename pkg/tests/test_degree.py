import numpy as np
import pytest

from degkam.degree import (BoundaryZeroError, BoxRegion, DegenerateFitError, borsuk_odd_check,
                           brouwer_degree_2d, check_A0, estimate_convexity, gradient_evaluator,
                           kronecker_degree, topological_degree, verify_convexity)
from degkam.normal_form import z_polynomial

UNIT = BoxRegion([0.0, 0.0], 1.0, 1024)


def identity(z):
    return z


def squares(z):
    return z ** 2


def cubes(z):
    return z ** 3


def radial(z):
    return 4 * z * (z ** 2).sum(axis=1, keepdims=True)


def complex_square(z):
    return np.column_stack([z[:, 0] ** 2 - z[:, 1] ** 2, 2 * z[:, 0] * z[:, 1]])


def test_region_validation():
    with pytest.raises(ValueError):
        BoxRegion([0, 0], 0.0)
    with pytest.raises(ValueError):
        BoxRegion([0, 0], 1.0, 32)


@pytest.mark.parametrize("f, expected", [(identity, 1), (squares, 0), (cubes, 1), (radial, 1),
                                         (complex_square, 2)])
def test_winding_numbers(f, expected):
    assert brouwer_degree_2d(f, UNIT).degree == expected


def test_orientation_reversal():
    flip = lambda z: np.column_stack([z[:, 0], -z[:, 1]])
    assert brouwer_degree_2d(flip, UNIT).degree == -1


def test_zero_outside_region_and_excision():
    shifted = lambda z: z - np.array([3.0, 0.0])
    assert brouwer_degree_2d(shifted, UNIT).degree == 0
    small = BoxRegion([0.0, 0.0], 0.1, 1024)
    assert brouwer_degree_2d(cubes, small).degree == brouwer_degree_2d(cubes, UNIT).degree


def test_boundary_zero_detected():
    through = lambda z: z - np.array([1.0, 0.0])
    with pytest.raises(BoundaryZeroError):
        brouwer_degree_2d(through, UNIT, max_samples=1 << 12)


def test_refinement_near_boundary_zero():
    near = lambda z: z - np.array([0.999, 0.0])
    res = brouwer_degree_2d(near, UNIT)
    assert res.degree == 1 and res.samples > UNIT.boundary_resolution


def test_homotopy_invariance():
    # t*cubes + (1-t)*identity never vanishes on the circle: both are odd with
    # positive components on the axes
    for t in np.linspace(0, 1, 6):
        h = lambda z, t=t: t * cubes(z) + (1 - t) * identity(z)
        assert brouwer_degree_2d(h, UNIT).degree == 1
    for t in np.linspace(0, 1, 6):
        h = lambda z, t=t: t * squares(z) + (1 - t) * (squares(z) + np.array([1.0, 1.0]))
        assert brouwer_degree_2d(h, UNIT).degree == 0


def test_composition_multiplies_degree():
    comp = lambda z: complex_square(complex_square(z))
    assert brouwer_degree_2d(comp, UNIT).degree == 4
    flip = lambda z: np.column_stack([z[:, 0], -z[:, 1]])
    assert brouwer_degree_2d(lambda z: flip(complex_square(z)), UNIT).degree == -2


def test_kronecker_agrees_in_plane_and_four_dimensions():
    assert kronecker_degree(complex_square, UNIT).degree == 2
    ball4 = BoxRegion(np.zeros(4), 1.0)
    assert kronecker_degree(identity, ball4).degree == 1
    assert kronecker_degree(cubes, ball4).degree == 1
    assert kronecker_degree(squares, ball4).degree == 0
    assert topological_degree(cubes, ball4).method == "kronecker"


@pytest.mark.parametrize("f, expected", [(identity, True), (cubes, True), (squares, False)])
def test_borsuk(f, expected):
    res = borsuk_odd_check(f, UNIT)
    assert res.passed is expected
    if not expected:
        assert res.witness is not None


def test_borsuk_general_exponents():
    f = lambda z: np.column_stack([z[:, 0] * np.abs(z[:, 0]) ** 2, z[:, 1] * np.abs(z[:, 1]) ** 4])
    assert borsuk_odd_check(f, UNIT).passed
    assert brouwer_degree_2d(f, UNIT).degree % 2 == 1


def test_convexity_quartic():
    region = BoxRegion([0.0, 0.0], 0.5)
    cert = estimate_convexity(cubes, region, 10_000)
    assert 2.8 <= cert.L <= 3.2 and cert.passed
    assert verify_convexity(cubes, region, cert, 1000) >= 0


def test_convexity_rejects_nondegenerate():
    cert = estimate_convexity(identity, UNIT, 1000)
    assert cert.L == pytest.approx(1.0, abs=1e-9)
    assert not cert.passed


def test_convexity_errors():
    with pytest.raises(ValueError):
        estimate_convexity(cubes, UNIT, 10)
    with pytest.raises(DegenerateFitError):
        estimate_convexity(lambda z: np.zeros_like(z), UNIT, 1000)


def test_check_A0_examples():
    region = BoxRegion([0.0, 0.0], 0.5)
    quart = z_polynomial(2, 1, {(4, 0): 0.25, (0, 4): 0.25})
    rep = check_A0(quart, region)
    assert rep.passed and rep.degree.degree % 2 == 1 and rep.borsuk.passed
    cubic = z_polynomial(2, 1, {(3, 0): 1 / 3, (0, 3): 1 / 3})
    rep = check_A0(cubic, region)
    assert not rep.passed and rep.degree.degree == 0
    assert "degree 0" in rep.message
    radial = z_polynomial(2, 1, {(4, 0): 1.0, (2, 2): 2.0, (0, 4): 1.0})
    rep = check_A0(radial, region)
    assert rep.passed and rep.degree.degree == 1
    assert "[A0 nondegeneracy]" in rep.text()


def test_check_A0_requires_critical_center():
    g = z_polynomial(2, 1, {(1, 0): 1.0, (4, 0): 1.0})
    with pytest.raises(ValueError):
        check_A0(g, BoxRegion([0.0, 0.0], 0.5))


def test_gradient_evaluator():
    g = z_polynomial(2, 1, {(4, 0): 0.25, (1, 1): 2.0})
    z = np.array([[0.5, -1.0]])
    np.testing.assert_allclose(gradient_evaluator(g)(z), [[0.125 - 2.0, 1.0]])
