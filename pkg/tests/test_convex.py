"""Compact convex domains: bodies, spectral grids, dual variance routes.

The d+1 = 2 box admits closed forms on both sides of the duality: the
physical double integral factorizes into interval self-convolutions,

    int int_{[-h,h]^2} |x-y|^{-b} = 2 (2h)^{2-b} / ((1-b)(2-b)),

and the spectral-grid variance must land on half that product.
"""
import math

import numpy as np
import pytest
from scipy import integrate, special as sps

from lrdlimits import convex, model
from lrdlimits.errors import (AccuracyError, CapacityError, ConsistencyError,
                              ValidationError)
from lrdlimits.rng import DOM_CONVEX, normals_batch

BODY1 = convex.box_body(0.8)
P1 = model.ModelParams(d=0, gamma=1.0, alpha_s=0.15, alpha_t=0.1)


def closed_double_integral(h, a_s, a_t):
    sp = 2.0 * (2.0 * h) ** (2.0 - 2.0 * a_s) / ((1.0 - 2.0 * a_s) * (2.0 - 2.0 * a_s))
    te = 2.0 ** (3.0 - 2.0 * a_t) / ((1.0 - 2.0 * a_t) * (2.0 - 2.0 * a_t))
    return sp * te


# -------------------------------------------------------------------- bodies

def test_body_volumes():
    assert convex.box_body([1.0, 2.0]).volume == pytest.approx(8.0)
    assert convex.box_body(0.5).volume == pytest.approx(1.0)
    assert convex.ball_body(2.0, 2).volume == pytest.approx(4.0 * math.pi)
    assert convex.ball_body(1.0, 3).volume == pytest.approx(4.0 * math.pi / 3.0)
    assert convex.box_body([0.5, 3.0]).max_halfwidth == 3.0


def test_body_validation():
    with pytest.raises(ValidationError, match="kind"):
        convex.ConvexBody("simplex", (1.0,), 1)
    with pytest.raises(ValidationError):
        convex.ConvexBody("box", (1.0, -1.0), 2)
    with pytest.raises(ValidationError, match="half-width per coordinate"):
        convex.ConvexBody("box", (1.0,), 2)
    with pytest.raises(ValidationError, match="single radius"):
        convex.ConvexBody("ball", (1.0, 1.0), 2)
    with pytest.raises(ValidationError):
        convex.ConvexBody("ball", (1.0,), 0)


def test_box_indicator_ft_closed_form():
    body = convex.box_body([1.0, 0.5])
    lam = np.array([1.3, -0.7])
    want = (math.sin(1.3) / 1.3) * (math.sin(0.35) / 0.35)
    assert body.indicator_ft(lam) == pytest.approx(want, rel=1e-14)
    assert body.indicator_ft(np.zeros(2)) == pytest.approx(1.0, rel=1e-15)
    np.testing.assert_allclose(body.indicator_ft(-lam), body.indicator_ft(lam),
                               rtol=1e-15)


@pytest.mark.parametrize("mk", [
    lambda: convex.box_body([0.7, 1.2]),
    lambda: convex.ball_body(0.9, 2),
])
def test_indicator_ft_against_direct_quadrature(mk):
    """CF values agree with a brute cosine quadrature over the body."""
    body = mk()
    x, w = np.polynomial.legendre.leggauss(80)
    if body.kind == "box":
        a1, a2 = body.geometry
        X = (a1 * x)[:, None] + np.zeros(80)[None, :]
        Y = np.zeros(80)[:, None] + (a2 * x)[None, :]
        W = a1 * a2 * np.outer(w, w)
    else:
        # polar rule: GL radially, uniform (spectral) in the periodic angle
        r = body.geometry[0]
        rad = 0.5 * r * (x + 1.0)
        wr = 0.5 * r * w * rad
        th = 2.0 * math.pi * np.arange(256) / 256
        X = rad[:, None] * np.cos(th)[None, :]
        Y = rad[:, None] * np.sin(th)[None, :]
        W = wr[:, None] * np.full(256, 2.0 * math.pi / 256)[None, :]
    for lam in ([0.9, -1.7], [3.2, 0.4], [0.0, 2.0]):
        direct = float(np.sum(np.cos(lam[0] * X + lam[1] * Y) * W)) / body.volume
        assert body.indicator_ft(np.array(lam)) == pytest.approx(direct, abs=2e-8)


def test_ball_ft_series_matches_bessel_at_switch():
    body = convex.ball_body(1.0, 2)
    for q in (0.9e-4, 1.1e-4):
        lam = np.array([q, 0.0])
        series = 1.0 - q * q / 8.0
        assert body.indicator_ft(lam) == pytest.approx(series, rel=1e-12)


def test_indicator_ft_shape_validation():
    with pytest.raises(ValidationError, match="trailing length"):
        convex.box_body([1.0, 1.0]).indicator_ft(np.zeros(3))
    with pytest.raises(ValidationError):
        convex.box_body(1.0).indicator_ft(np.float64(0.3))


def test_window_ft():
    om = np.array([0.0, math.pi, 1.0])
    want = np.array([1.0, math.sin(math.pi) / math.pi, math.sin(1.0)])
    np.testing.assert_allclose(convex.window_ft(om), want, rtol=0.0, atol=1e-15)


# --------------------------------------------------------------------- grids

def test_make_spectral_grid_structure():
    g = convex.make_spectral_grid(2, [3.0, 2.0], 1.5, [4, 6], 8)
    assert g.dim == 2 and g.n_nodes == 4 * 6 * 8
    assert g.lam_max == (3.0, 2.0) and g.om_max == 1.5
    assert g.box_volume == pytest.approx(6.0 * 4.0 * 3.0)
    assert np.sum(g.cell_volumes()) == pytest.approx(g.box_volume, rel=1e-12)
    nodes = g.nodes()
    mi = g.mirror_index(np.arange(g.n_nodes))
    np.testing.assert_allclose(nodes[mi], -nodes, rtol=0.0, atol=1e-15)
    assert np.all(mi != np.arange(g.n_nodes))  # no fixed point


def test_axis_validation():
    n, e = convex._uniform_axis(2.0, 6)
    convex._check_axis(n, e)
    with pytest.raises(ValidationError, match="even"):
        convex._check_axis(n[:-1], e[:-1])
    with pytest.raises(ValidationError, match="one more entry"):
        convex._check_axis(n, e[:-1])
    bad = e.copy()
    bad[3] = 0.1
    with pytest.raises(ValidationError, match="exactly at zero"):
        convex._check_axis(n, bad)
    skew = e + 0.05
    with pytest.raises(ValidationError):
        convex._check_axis(n, skew)
    outside = n.copy()
    outside[0] = -1.2
    outside[-1] = 1.2
    with pytest.raises(ValidationError, match="strictly inside"):
        convex._check_axis(outside, e)
    with pytest.raises(ValidationError, match="axis node count"):
        convex._uniform_axis(1.0, 5)


def test_graded_axis_properties():
    nodes, edges = convex._graded_axis(10.0, 0.5, ratio=1.4, depth=64.0)
    convex._check_axis(nodes, edges)  # symmetric, zero-centered, nodes inside
    pos = edges[edges >= 0.0]
    widths = np.diff(pos)
    assert widths[0] == pytest.approx(0.5 / 64.0)
    assert np.max(widths) <= 0.5 * (1.0 + 1e-12)
    assert pos[-1] == 10.0
    assert np.all(np.diff(widths) > -1e-12)  # monotone out to the rim
    with pytest.raises(ValidationError):
        convex._graded_axis(-1.0, 0.5)
    with pytest.raises(ValidationError):
        convex._graded_axis(1.0, 0.5, ratio=1.0)


def test_power_cell_1d_matches_antiderivative():
    _, e = convex._uniform_axis(1.5, 6)
    cells = convex._power_cell_1d(e, 0.8)
    for i in range(6):
        val, _ = integrate.quad(lambda x: np.abs(x) ** -0.8, e[i], e[i + 1],
                                points=[0.0] if e[i] < 0 < e[i + 1] else None)
        assert cells[i] == pytest.approx(val, rel=1e-9)
    assert np.all(cells > 0.0)


def test_power_cell_2d_matches_adaptive_quadrature():
    _, e1 = convex._uniform_axis(1.4, 4)
    _, e2 = convex._uniform_axis(0.9, 4)
    cells = convex._power_cell_2d(e1, e2, 1.3)
    f = lambda y, x: (x * x + y * y) ** -0.65
    # a smooth off-origin cell and a corner cell touching the singularity
    want_off, _ = integrate.dblquad(f, e1[3], e1[4], e2[2], e2[3])
    assert cells[3, 2] == pytest.approx(want_off, rel=1e-7)
    want_corner, _ = integrate.dblquad(f, 1e-12, e1[3], 1e-12, e2[3])
    assert cells[2, 2] == pytest.approx(want_corner, rel=1e-5)


# ---------------------------------------------------------- double integral

def test_riesz_double_integral_alpha_zero_exact():
    est = convex.riesz_double_integral(BODY1, 0.0, 0.0, n_samples=1000, seed=0)
    assert est.value == pytest.approx((BODY1.volume * 2.0) ** 2, rel=1e-14)
    assert est.stderr == 0.0


def test_riesz_double_integral_matches_closed_form():
    want = closed_double_integral(0.8, 0.15, 0.1)
    est = convex.riesz_double_integral(BODY1, 0.15, 0.1, n_samples=400_000,
                                       seed=0)
    assert abs(est.value - want) < 4.0 * est.stderr
    assert est.stderr < 0.01 * want
    ball = convex.ball_body(0.8, 1)  # an interval again, same closed form
    est2 = convex.riesz_double_integral(ball, 0.15, 0.1, n_samples=400_000,
                                        seed=1)
    assert abs(est2.value - want) < 4.0 * est2.stderr


def test_riesz_double_integral_deterministic():
    a = convex.riesz_double_integral(BODY1, 0.15, 0.1, n_samples=5000, seed=7)
    b = convex.riesz_double_integral(BODY1, 0.15, 0.1, n_samples=5000, seed=7)
    c = convex.riesz_double_integral(BODY1, 0.15, 0.1, n_samples=5000, seed=8)
    assert a.value == b.value and a.stderr == b.stderr
    assert a.value != c.value
    assert a.method == "mc" and a.n_samples == 5000


def test_riesz_double_integral_validation():
    with pytest.raises(ValidationError):
        convex.riesz_double_integral("box", 0.1, 0.1)
    with pytest.raises(ValidationError, match="integrability"):
        convex.riesz_double_integral(BODY1, 0.5, 0.1)
    with pytest.raises(ValidationError, match="integrability"):
        convex.riesz_double_integral(BODY1, 0.1, 0.5)
    with pytest.raises(ValidationError):
        convex.riesz_double_integral(BODY1, 0.1, 0.1, n_samples=1)
    with pytest.raises(ValidationError, match="method"):
        convex.riesz_double_integral(BODY1, 0.1, 0.1, method="grid")


# ------------------------------------------------------------------ planning

def test_plan_spectral_grid_hits_budget():
    grid, rep = convex.plan_spectral_grid(BODY1, 0.15, 0.1,
                                          points_per_period=6)
    assert rep["n_spatial"] == [270] and rep["n_temporal"] == 80
    assert rep["n_nodes"] == grid.n_nodes == 270 * 80
    assert rep["tail_fraction"] == pytest.approx(0.01, rel=1e-9)
    assert convex.grid_tail_fraction(BODY1, 0.15, 0.1, grid) == pytest.approx(
        0.01, rel=1e-9)
    loose, rep2 = convex.plan_spectral_grid(BODY1, 0.15, 0.1, tail_budget=0.05,
                                            points_per_period=6)
    assert rep2["n_nodes"] < rep["n_nodes"]
    assert loose.om_max < grid.om_max


def test_plan_spectral_grid_validation():
    with pytest.raises(ValidationError):
        convex.plan_spectral_grid(BODY1, 0.15, 0.1, tail_budget=0.0)
    with pytest.raises(ValidationError):
        convex.plan_spectral_grid(BODY1, 0.15, 0.1, points_per_period=1)
    with pytest.raises(ValidationError):
        convex.plan_spectral_grid("box", 0.15, 0.1)


def test_check_sampling_args():
    grid, _ = convex.plan_spectral_grid(BODY1, 0.15, 0.1, points_per_period=4)
    p2 = model.ModelParams(d=1, gamma=1.0, alpha_s=0.15, alpha_t=0.1)
    with pytest.raises(ValidationError, match="lives in"):
        convex.spectral_variance(convex.box_body([1.0, 1.0]), p2, grid)
    with pytest.raises(ValidationError, match="params describe"):
        convex.spectral_variance(BODY1, p2, grid)
    with pytest.raises(ValidationError):
        convex.spectral_variance(BODY1, "params", grid)
    with pytest.raises(ValidationError):
        convex.spectral_variance(BODY1, P1, "grid")


# ------------------------------------------------------------ dual variance

def test_spectral_variance_matches_closed_form():
    """Grid variance lands on half the physical double integral, closing in
    under quadrature refinement."""
    want = 0.5 * closed_double_integral(0.8, 0.15, 0.1)
    grid6, _ = convex.plan_spectral_grid(BODY1, 0.15, 0.1, points_per_period=6)
    v6 = convex.spectral_variance(BODY1, P1, grid6)
    assert v6 == pytest.approx(8.865790534279522, rel=1e-10)  # frozen
    assert v6 == pytest.approx(want, rel=0.04)
    grid10, _ = convex.plan_spectral_grid(BODY1, 0.15, 0.1,
                                          points_per_period=10)
    v10 = convex.spectral_variance(BODY1, P1, grid10)
    assert abs(v10 - want) < abs(v6 - want)
    assert v10 == pytest.approx(want, rel=0.02)


# ------------------------------------------------------------------ sampling

def test_batch_values_zero_noise_is_zero():
    grid = convex.make_spectral_grid(1, 3.0, 2.0, 4, 4)
    z = np.zeros((2, grid.n_nodes), dtype=np.complex128)
    vals = convex._batch_values(BODY1, P1, grid, z)
    np.testing.assert_array_equal(vals, np.zeros(2, dtype=np.complex128))


def test_batch_values_equal_brute_force_pair_sum():
    """The quadrature pipeline reproduces the O(M^2) CF pair sum exactly on a
    tiny grid, mirror-pair subtraction included."""
    grid = convex.make_spectral_grid(1, 3.0, 2.0, 4, 4)
    m = grid.n_nodes
    half = m // 2
    rng = np.random.default_rng(10)
    nm = rng.standard_normal(2 * m).reshape(2, m)
    z = np.empty((2, m), dtype=np.complex128)
    z[:, :half] = (nm[:, :half] + 1j * nm[:, half:]) / math.sqrt(2.0)
    z[:, half:] = np.conj(z[:, half - 1::-1])
    got = convex._batch_values(BODY1, P1, grid, z)

    amp = convex._node_amplitudes(BODY1, P1, grid).ravel()
    nodes = grid.nodes()
    cf = (BODY1.indicator_ft((nodes[:, None, :1] + nodes[None, :, :1]))
          * convex.window_ft(nodes[:, None, 1] + nodes[None, :, 1]))
    for b in range(2):
        coef = z[b] * amp
        full = coef @ cf @ coef
        mirror = 2.0 * float(np.sum((amp ** 2)[:half] * np.abs(z[b, :half]) ** 2))
        want = full - mirror
        assert got[b] == pytest.approx(want, rel=1e-11, abs=1e-11)
        assert abs(got[b].imag) < 1e-12 * max(1.0, abs(got[b].real))


def test_sample_convex_limit_real_reproducible_chunkable():
    grid, _ = convex.plan_spectral_grid(BODY1, 0.15, 0.1, points_per_period=4)
    a = convex.sample_convex_limit(BODY1, P1, grid, 6, 9)
    assert np.isrealobj(a) and a.shape == (6,)
    b = convex.sample_convex_limit(BODY1, P1, grid, 6, 9)
    np.testing.assert_array_equal(a, b)
    # split draws agree with the joint batch to BLAS reassociation noise
    c = np.concatenate([
        convex.sample_convex_limit(BODY1, P1, grid, 3, 9),
        convex.sample_convex_limit(BODY1, P1, grid, 3, 9, first_replicate=3),
    ])
    np.testing.assert_allclose(a, c, rtol=1e-12)
    assert np.any(a != convex.sample_convex_limit(BODY1, P1, grid, 6, 10))


@pytest.mark.slow
def test_sample_convex_limit_moments():
    grid, _ = convex.plan_spectral_grid(BODY1, 0.15, 0.1, points_per_period=6)
    v_grid = convex.spectral_variance(BODY1, P1, grid)
    s = convex.sample_convex_limit(BODY1, P1, grid, 2000, 123)
    se_m = s.std(ddof=1) / math.sqrt(s.size)
    assert abs(s.mean()) < 4.0 * se_m
    v = s.var(ddof=1)
    m4 = float(np.mean((s - s.mean()) ** 4))
    se_v = math.sqrt((m4 - v * v) / s.size)
    assert abs(v - v_grid) < 5.0 * se_v


def test_sample_convex_limit_gates():
    tiny = convex.make_spectral_grid(1, 3.0, 2.0, 4, 4)
    with pytest.raises(ValidationError, match="enlarge the truncation box"):
        convex.sample_convex_limit(BODY1, P1, tiny, 2, 0)
    grid, _ = convex.plan_spectral_grid(BODY1, 0.15, 0.1, points_per_period=4)
    with pytest.raises(ValidationError):
        convex.sample_convex_limit(BODY1, P1, grid, 0, 0)
    with pytest.raises(CapacityError):
        convex.sample_convex_limit(BODY1, P1, grid, 10 ** 10, 0)


def test_riesz_constant_product():
    from lrdlimits.model import riesz_fourier_c
    got = convex.riesz_constant(2, 0.3, 0.2)
    assert got == pytest.approx(riesz_fourier_c(2, 0.3) * riesz_fourier_c(1, 0.2),
                                rel=1e-15)
