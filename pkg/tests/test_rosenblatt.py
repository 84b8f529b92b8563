"""Limit-functional layer: cumulants, characteristic functions, sampling.

Synthetic spectra with fit=None have no tail completion, so every quantity
downstream of them has a hand-computable closed form; the production spectrum
fixtures cross those against the Hilbert-Schmidt closed forms instead.
"""
import math
import warnings

import mpmath
import numpy as np
import pytest

from lrdlimits import rosenblatt as rb
from lrdlimits import spectra
from lrdlimits.errors import AccuracyError, ConsistencyError, ValidationError
from lrdlimits.rng import DOM_ETA, normals_batch

C2_GOLDEN = 1122.5787102451388
C3_GOLDEN = 29829.514311608425
PSI_02_GOLDEN = 0.001289454352352915 - 0.006120898883277531j


def synth_spectrum(sp_coeffs, sp_dims, te_coeffs, d=2):
    sp = spectra.RieszPart(alpha=0.3, coeffs=np.asarray(sp_coeffs, float),
                           dims=np.asarray(sp_dims, float), decay=1.7,
                           fit=None, fit_window=None, first_index=0)
    te = spectra.RieszPart(alpha=0.25, coeffs=np.asarray(te_coeffs, float),
                           dims=np.ones(len(te_coeffs)), decay=1.5,
                           fit=None, fit_window=None, first_index=1)
    return spectra.RieszSpectrum(d=d, spatial=sp, temporal=te)


SYNTH = synth_spectrum([2.0, 0.5], [1, 3], [1.0, 0.25])


# ------------------------------------------------------------------ cumulants

def test_c2_equals_product_of_hs_closed_forms(spec_acc):
    """tr K^2 factorizes over the product spectrum, and each factor has a
    closed form: the window double integrals of the squared Riesz kernels."""
    hs_t = 2.0 ** (3.0 - 0.5) / ((1.0 - 0.5) * (2.0 - 0.5))
    hs_s = 2.0 ** (4.0 - 0.6) * math.pi ** 2 / (1.0 - 0.3)
    c = rb.cumulants_spectral(spec_acc, 2)
    assert c.value(2) == pytest.approx(hs_s * hs_t, rel=1e-5)


def test_cumulant_goldens(spec_acc):
    c = rb.cumulants_spectral(spec_acc, 3)
    assert c.value(2) == pytest.approx(C2_GOLDEN, rel=1e-9)
    assert c.value(3) == pytest.approx(C3_GOLDEN, rel=1e-9)
    assert c.method == "spectral"
    assert np.all(c.stderr >= 0.0)


def test_synthetic_cumulants_exact():
    c = rb.cumulants_spectral(SYNTH, 5)
    for m in range(2, 6):
        want = ((1 * 2.0 ** m + 3 * 0.5 ** m) * (1.0 ** m + 0.25 ** m))
        assert c.value(m) == pytest.approx(want, rel=1e-14)
    assert np.all(c.stderr == 0.0)


def test_cumulant_table_validation():
    ms = np.array([2, 3])
    with pytest.raises(ValidationError):
        rb.CumulantTable(m_range=ms, values=np.array([1.0, -2.0]),
                         method="spectral", stderr=np.zeros(2))
    with pytest.warns(UserWarning, match="ratio bound"):
        rb.CumulantTable(m_range=ms, values=np.array([1.0, 10.0]),
                         method="spectral", stderr=np.zeros(2))
    c = rb.cumulants_spectral(SYNTH, 3)
    with pytest.raises(ValidationError):
        c.value(4)
    with pytest.raises(ValidationError):
        c.value(1)
    with pytest.raises(ValidationError):
        rb.cumulants_spectral(SYNTH, 1)


def test_mc_cumulants_deterministic_and_validated(params_acc):
    a = rb.cumulants_montecarlo(params_acc, 2, 4000, 11)
    b = rb.cumulants_montecarlo(params_acc, 2, 4000, 11)
    assert a.values[0] == b.values[0]
    assert a.stderr[0] == b.stderr[0] > 0.0
    assert a.method == "montecarlo"
    c = rb.cumulants_montecarlo(params_acc, 2, 4000, 12)
    assert c.values[0] != a.values[0]
    with pytest.raises(ValidationError):
        rb.cumulants_montecarlo(params_acc, 1, 100, 0)
    with pytest.raises(ValidationError):
        rb.cumulants_montecarlo(params_acc, 2, 1, 0)


@pytest.mark.slow
def test_mc_cumulants_consistent_with_spectral(params_acc, spec_acc):
    mc = rb.cumulants_montecarlo(params_acc, 2, 40000, 3)
    spec_val = rb.cumulants_spectral(spec_acc, 2)
    z = (mc.values[0] - spec_val.value(2)) / mc.stderr[0]
    assert abs(z) < 5.0


# ---------------------------------------------------- characteristic functions

def test_series_radius():
    c = rb.cumulants_spectral(SYNTH, 4)
    sup = max(c.values[1] / c.values[0], c.values[2] / c.values[1])
    curve = rb.limit_cf(c, [0.0])
    assert curve.radius == pytest.approx(1.0 / (2.0 * sup), rel=1e-14)


def test_series_radius_converges_to_weight_bound(spec_acc):
    """The sup cumulant ratio grows to the largest series weight, so the
    radius estimate shrinks monotonically onto 1 / (2 max w)."""
    lim = 1.0 / (2.0 * float(rb.series_weights(spec_acc).max()))
    r3 = rb._series_radius(rb.cumulants_spectral(spec_acc, 3))
    r6 = rb._series_radius(rb.cumulants_spectral(spec_acc, 6))
    r12 = rb._series_radius(rb.cumulants_spectral(spec_acc, 12))
    assert r3 > r6 > r12
    assert r12 == pytest.approx(lim, rel=1e-6)
    assert r12 >= lim * (1.0 - 1e-9)
    assert lim == pytest.approx(0.016216293753032848, rel=1e-12)


def test_limit_cf_routes_agree_on_synthetic_spectrum():
    """Cumulant series resums to the Fredholm product inside the radius."""
    c = rb.cumulants_spectral(SYNTH, 60)
    radius = rb._series_radius(c)
    xi = np.linspace(-0.6 * radius, 0.6 * radius, 9)
    a = rb.limit_cf(c, xi)
    b = rb.limit_cf_product(SYNTH, xi)
    np.testing.assert_allclose(a.values, b.values, rtol=0.0, atol=1e-10)
    assert a.truncation_m is not None and a.truncation_m <= 60


def test_limit_cf_clip_and_reject():
    c = rb.cumulants_spectral(SYNTH, 8)
    radius = rb._series_radius(c)
    grid = np.array([-2.0 * radius, 0.0, 0.5 * radius, 3.0 * radius])
    with pytest.warns(UserWarning, match="clipped 2"):
        curve = rb.limit_cf(c, grid)
    assert curve.xi_grid.size == 2
    with pytest.raises(ValidationError, match="diverges"):
        rb.limit_cf(c, grid, clip=False)
    with pytest.raises(ValidationError):
        rb.limit_cf(c, [5.0 * radius])  # nothing left after clipping


def test_limit_cf_product_properties(spec_acc):
    xi = np.array([-0.2, 0.0, 0.05, 0.2])
    curve = rb.limit_cf_product(spec_acc, xi)
    assert curve.values[1] == 1.0 + 0.0j
    assert np.all(np.abs(curve.values) <= 1.0 + 1e-12)
    assert curve.values[0] == pytest.approx(np.conj(curve.values[3]), rel=1e-12)
    assert curve.values[3] == pytest.approx(PSI_02_GOLDEN, rel=1e-10)
    assert curve.radius == math.inf


def test_product_log_cf_centering_shift():
    w, dims = rb._weights_of(SYNTH)
    xi = np.array([0.03, 0.4])
    cen = rb._product_log_cf(w, dims, xi, True)
    raw = rb._product_log_cf(w, dims, xi, False)
    wsum = float(np.sum(dims * w.sum(axis=1)))
    np.testing.assert_allclose(raw - cen, 1j * xi * wsum, rtol=0.0, atol=1e-12)


def test_characteristic_curve_rejects_bad_origin():
    with pytest.raises(ConsistencyError):
        rb.CharacteristicCurve(xi_grid=np.array([0.0]),
                               values=np.array([0.5 + 0.0j]),
                               truncation_m=None, radius=1.0)


# --------------------------------------------------------------- determinants

def test_fredholm_rank_one_exact():
    for lam, om in [(0.7, 0.9), (2.5, -1.25), (1.0, 1.0), (3.0, 0.25j)]:
        assert rb.fredholm_det([lam], om) == 1.0 - om * lam


def test_fredholm_dual_route_on_random_instances():
    """The exported product is cross-checked internally against the exp-trace
    series whenever it converges; 100 instances must all pass the 1e-10 gate."""
    rng = np.random.default_rng(314159)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        lam = rng.uniform(0.0, 1.0, n) ** 2
        s = float(np.sum(lam))
        om = complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))
        om *= 0.95 / (abs(om) * max(s, 1e-12))
        val = rb.fredholm_det(lam, om)  # raises ConsistencyError on disagreement
        assert np.isfinite(val.real) and np.isfinite(val.imag)


def test_fredholm_matches_high_precision_product():
    rng = np.random.default_rng(2718)
    with mpmath.workdps(60):
        for _ in range(10):
            n = int(rng.integers(2, 25))
            lam = rng.uniform(0.0, 2.0, n)
            om = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
            want = mpmath.fprod(
                [mpmath.mpc(1.0) - mpmath.mpc(om) * mpmath.mpf(float(l))
                 for l in lam])
            got = rb.fredholm_det(lam, om)
            assert abs(got - complex(want)) <= 1e-12 * max(1.0, abs(complex(want)))


def test_fredholm_rejects_negative_eigenvalues():
    with pytest.raises(ValidationError):
        rb.fredholm_det([0.5, -0.1], 0.3)


# ------------------------------------------------------------------- sampling

def test_series_weights_layout(spec_acc):
    flat = rb.series_weights(spec_acc)
    sp, te = spec_acc.spatial.coeffs, spec_acc.temporal.coeffs
    K = te.size
    assert flat.size == int(np.sum(spec_acc.spatial.dims)) * K
    np.testing.assert_array_equal(flat[:K], sp[0] * te)
    np.testing.assert_array_equal(flat[K:2 * K], sp[1] * te)  # n=1, j=0
    np.testing.assert_array_equal(flat[2 * K:3 * K], sp[1] * te)  # n=1, j=1
    total = float(np.sum(spec_acc.spatial.dims * sp)) * float(np.sum(te))
    assert float(flat.sum()) == pytest.approx(total, rel=1e-12)
    sq = rb.series_weights(spec_acc, squared=True)
    np.testing.assert_allclose(sq, flat ** 2, rtol=1e-15)


def test_sample_quadratic_form_matches_direct_stream():
    flat_w = np.array([0.9, 0.4, 0.25, 0.1, 0.05, 0.01, 0.5, 0.3, 0.2,
                       0.15, 0.08, 0.02])
    got = rb.sample_quadratic_form(flat_w, 8, 42)
    reps = np.arange(8, dtype=np.uint64)
    z = normals_batch(42, DOM_ETA, reps, flat_w.size)
    want = (z * z - 1.0) @ flat_w
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_sample_quadratic_form_offset_slices_stream():
    w = np.array([1.0, 0.5, 0.25])
    full = rb.sample_quadratic_form(w, 10, 7)
    tail = rb.sample_quadratic_form(w, 5, 7, first_replicate=5)
    np.testing.assert_allclose(full[5:], tail, rtol=1e-13)


def test_sample_quadratic_form_is_linear_in_weights():
    """Shared stream order makes coupled differences exact: sampling w_a - w_b
    equals the difference of the separate samples replicate by replicate."""
    rng = np.random.default_rng(5)
    wa = rng.uniform(0.1, 1.0, 17)
    wb = rng.uniform(0.1, 1.0, 17)
    sa = rb.sample_quadratic_form(wa, 64, 3)
    sb = rb.sample_quadratic_form(wb, 64, 3)
    sd = rb.sample_quadratic_form(wa - wb, 64, 3)
    np.testing.assert_allclose(sd, sa - sb, rtol=0.0, atol=1e-10)


def test_sample_quadratic_form_domain_separation():
    w = np.ones(4)
    a = rb.sample_quadratic_form(w, 16, 9, domain=DOM_ETA)
    b = rb.sample_quadratic_form(w, 16, 9, domain=DOM_ETA + 1)
    assert np.all(a != b)


def test_sample_quadratic_form_validation():
    with pytest.raises(ValidationError):
        rb.sample_quadratic_form(np.array([]), 4, 0)
    with pytest.raises(ValidationError):
        rb.sample_quadratic_form(np.ones(3), 0, 0)


def test_sampler_moments_match_weight_sums():
    flat = rb.series_weights(SYNTH)
    n = 40000
    s = rb.sample_quadratic_form(flat, n, 1)
    var_w = 2.0 * float(np.sum(flat ** 2))
    k3_w = 8.0 * float(np.sum(flat ** 3))
    assert abs(s.mean()) < 4.0 * math.sqrt(var_w / n)
    m2 = s.var()
    se_var = math.sqrt((np.mean((s - s.mean()) ** 4) - m2 ** 2) / n)
    assert abs(m2 - var_w) < 4.0 * se_var
    k3 = np.mean((s - s.mean()) ** 3)
    assert abs(k3 - k3_w) < 6.0 * abs(k3_w) * n ** -0.25


def test_sample_S_infinity_equals_flat_quadratic_form():
    got = rb.sample_S_infinity(SYNTH, 12, 77)
    want = rb.sample_quadratic_form(rb.series_weights(SYNTH), 12, 77)
    np.testing.assert_array_equal(got, want)
    sq = rb.sample_S_infinity(SYNTH, 6, 77, squared_weights=True)
    wsq = rb.sample_quadratic_form(rb.series_weights(SYNTH, squared=True), 6, 77)
    np.testing.assert_array_equal(sq, wsq)


def test_sample_S_infinity_warns_on_heavy_tail(spec_acc):
    with pytest.warns(UserWarning, match="HS mass"):
        rb.sample_S_infinity(spec_acc, 2, 0)


def test_sample_S_infinity_validation():
    with pytest.raises(ValidationError):
        rb.sample_S_infinity(SYNTH, 0, 0)
