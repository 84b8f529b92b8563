"""Hermite polynomials and coefficients, zonal kernels, Bessel J, dimensions."""
import math

import numpy as np
import pytest
from scipy import special as sps

from lrdlimits import specfun
from lrdlimits.errors import CapacityError, ValidationError


def test_sphere_areas():
    assert specfun.sphere_area(1) == pytest.approx(2.0 * math.pi, rel=1e-15)
    assert specfun.sphere_area(2) == pytest.approx(4.0 * math.pi, rel=1e-15)
    assert specfun.sphere_area(3) == pytest.approx(2.0 * math.pi ** 2, rel=1e-15)
    with pytest.raises(ValidationError):
        specfun.sphere_area(0)


def test_eigenspace_dims():
    for n in range(12):
        assert specfun.eigenspace_dim(n, 2) == 2 * n + 1
        assert specfun.eigenspace_dim(n, 3) == (n + 1) ** 2
    assert specfun.eigenspace_dim(0, 1) == 1
    assert all(specfun.eigenspace_dim(n, 1) == 2 for n in range(1, 6))
    with pytest.raises(ValidationError):
        specfun.eigenspace_dim(-1, 2)
    with pytest.raises(CapacityError):
        specfun.eigenspace_dim(40, 30)


def test_hermite_exact_values():
    assert specfun.hermite_poly(2, 2.0) == 3.0
    assert specfun.hermite_poly(4, 1.0) == -2.0
    assert specfun.hermite_poly(3, 2.0) == 2.0
    assert specfun.hermite_poly(0, 5.0) == 1.0
    assert specfun.hermite_poly(1, -1.5) == -1.5


def test_hermite_orthogonality_to_1e10():
    """E[H_q H_r] = q! delta_qr under N(0,1), q, r <= 8, within 1e-10.

    The Gauss rule with 64 nodes is exact for polynomial degree <= 127, so
    deviations measure the recurrence's roundoff only.
    """
    nodes, weights = np.polynomial.hermite_e.hermegauss(64)
    w = weights / math.sqrt(2.0 * math.pi)
    H = np.stack([specfun.hermite_poly(q, nodes) for q in range(9)])
    gram = (H * w) @ H.T
    want = np.diag([math.factorial(q) for q in range(9)])
    assert np.max(np.abs(gram - want)) < 1e-10


def test_hermite_vs_scipy():
    z = np.linspace(-3.0, 3.0, 31)
    for q in range(11):
        np.testing.assert_allclose(specfun.hermite_poly(q, z),
                                   sps.eval_hermitenorm(q, z),
                                   rtol=1e-13, atol=1e-11)


def test_gegenbauer_ratio_matches_classical_families():
    x = np.linspace(-1.0, 1.0, 41)
    for n in range(9):
        np.testing.assert_allclose(specfun.gegenbauer_ratio(n, 2, x),
                                   sps.eval_legendre(n, x),
                                   rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(specfun.gegenbauer_ratio(n, 1, x),
                                   np.cos(n * np.arccos(x)),
                                   rtol=1e-10, atol=1e-10)
        # d = 3: C_n^1 = U_n, normalized by U_n(1) = n + 1
        np.testing.assert_allclose(specfun.gegenbauer_ratio(n, 3, x),
                                   sps.eval_chebyu(n, x) / (n + 1.0),
                                   rtol=1e-12, atol=1e-12)


def test_gegenbauer_kernel_diagonal_value():
    for d in (1, 2, 3):
        for n in (0, 1, 5):
            want = specfun.eigenspace_dim(n, d) / specfun.sphere_area(d)
            got = specfun.gegenbauer_kernel(n, d, np.array([1.0]))[0]
            assert got == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValidationError):
        specfun.gegenbauer_ratio(2, 2, 1.5)


def test_bessel_j_both_regimes():
    z = np.array([0.0, 1e-3, 0.5, 3.0, 9.9, 10.1, 35.0, 120.0])
    for theta in (0.0, 0.5, 1.5, 7.0):
        np.testing.assert_allclose(specfun.bessel_j(theta, z), sps.jv(theta, z),
                                   rtol=1e-10, atol=1e-12)
    assert specfun.bessel_j(0.0, 0.0) == 1.0
    with pytest.raises(ValidationError):
        specfun.bessel_j(-1.5, 1.0)
    with pytest.raises(ValidationError):
        specfun.bessel_j(0.0, -1.0)


def test_hermite_coeffs_square():
    hc = specfun.hermite_coeffs(lambda z: z * z, 6)
    want = np.array([1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(hc.coeffs, want, rtol=0.0, atol=1e-10)
    assert hc.hermite_rank == 2
    assert hc.second_moment == pytest.approx(3.0, abs=1e-10)


def test_hermite_coeffs_cosine():
    """E[H_q(Z) cos Z] = (-1)^{q/2} e^{-1/2} for even q, zero for odd q."""
    hc = specfun.hermite_coeffs(np.cos, 8)
    want = np.array([math.exp(-0.5) * (-1.0) ** (q // 2) if q % 2 == 0 else 0.0
                     for q in range(9)])
    np.testing.assert_allclose(hc.coeffs, want, rtol=0.0, atol=1e-12)
    assert hc.hermite_rank == 2


def test_hermite_coeffs_rank_one_and_rank_none():
    assert specfun.hermite_coeffs(lambda z: z ** 3, 4).hermite_rank == 1
    assert specfun.hermite_coeffs(lambda z: np.ones_like(z), 4).hermite_rank is None


def test_hermite_energy_validation():
    bad = specfun.HermiteCoeffs(q_max=2, coeffs=np.array([0.0, 5.0, 0.0]),
                                hermite_rank=1, second_moment=1.0)
    with pytest.raises(ValidationError):
        bad.validate()
