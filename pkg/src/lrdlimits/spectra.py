"""Eigen-structure of the covariance operators.

Four families of quantities, all feeding the limit-theorem verification:

* angular coefficients B_n(a): variances of the degree-n spherical harmonic
  projections of the field restricted to a sphere of radius a;
* temporal eigensystems: Nystrom eigenpairs of the normalized temporal
  covariance kernel on [-T, T];
* limiting Riesz spectra: eigenvalues of the Riesz potential |x-y|^{-alpha}
  on the unit sphere (spatial, by Funk-Hecke quadrature) and on [-1, 1]
  (temporal, by product-integration Nystrom);
* power traces of the limiting operator, with power-law tail completion.

Singular kernels never go through plain point-sampled Gauss quadrature:
integral operators are discretized by midpoint cells whose kernel integrals
are exact (product integration), which keeps the diagonal singularity and
the O(1/T)-wide diagonal ridge of the long-memory kernel honest. Eigenvalues
are Richardson-extrapolated from a node-doubling pair, giving doubling
stability far below the contract tolerances.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import special as sps
from scipy.sparse.linalg import LinearOperator, eigsh

from . import model
from .errors import NumericalError, ValidationError
from .specfun import eigenspace_dims, sphere_area

_CLAMP = 1e-10


# ------------------------------------------------------------------- types

@dataclass(frozen=True)
class AngularSpectrum:
    """Angular projection variances B_n on a sphere of radius t_gamma."""

    t_gamma: float
    coeffs: np.ndarray  # B_n, n = 0..N_max
    dims: np.ndarray    # harmonic space dimensions alongside
    n_clamped: int = 0


@dataclass(frozen=True)
class TemporalEigensystem:
    """Nystrom eigenpairs of a stationary kernel on [-T, T].

    eigenvalues are Richardson-extrapolated (quoted values); raw_eigenvalues
    come straight from the fine grid and exactly reproduce the discretized
    kernel together with eigenvectors. Eigenvector columns are scaled so the
    quadrature inner product h * sum phi_j phi_k equals delta_jk.
    """

    T: float
    nodes: np.ndarray
    h: float
    eigenvalues: np.ndarray
    raw_eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    n_nodes: int
    n_clamped: int = 0


@dataclass(frozen=True)
class RieszPart:
    """One factor (spatial or temporal) of the limiting Riesz spectrum."""

    alpha: float
    coeffs: np.ndarray      # retained eigenvalues
    dims: np.ndarray        # multiplicities (all-ones for the temporal factor)
    decay: float            # power-law exponent of coeffs[k] ~ A k^{-decay}
    fit: tuple | None       # (A, b, c) of coeffs_k k^decay = A(1+b/k+c/k^2)
    fit_window: tuple | None
    first_index: int        # 0 for spatial (degree 0), 1 for temporal (k >= 1)
    n_clamped: int = 0


@dataclass(frozen=True)
class RieszSpectrum:
    d: int
    spatial: RieszPart
    temporal: RieszPart


@dataclass(frozen=True)
class TracePower:
    """Completed power trace: head sums plus fitted power-law tails."""

    m: int
    value: float
    head_spatial: float
    tail_spatial: float
    head_temporal: float
    tail_temporal: float
    tail_bound: float

    @property
    def truncated(self):
        return self.head_spatial * self.head_temporal


# -------------------------------------------------------------- quadrature

def _gl_nodes(edges, npts):
    """Composite Gauss-Legendre nodes/weights over consecutive edge pairs."""
    x, w = np.polynomial.legendre.leggauss(npts)
    a = np.asarray(edges[:-1])[:, None]
    b = np.asarray(edges[1:])[:, None]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x[None, :]
    wts = 0.5 * (b - a) * w[None, :] * np.ones_like(x)[None, :]
    return nodes.ravel(), wts.ravel()


def _ratio_stack(n_max, d, u):
    """R_n(u) = C_n^lam(u)/C_n^lam(1) for n = 0..n_max, vectorized over u."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty((n_max + 1, u.size))
    out[0] = 1.0
    if n_max >= 1:
        out[1] = u
    lam = (d - 1) / 2.0
    for m in range(1, n_max):
        out[m + 1] = (2.0 * (m + lam) * u * out[m] - m * out[m - 1]) / (m + 2.0 * lam)
    return out


def _clamp_spectrum(vals, scale, what):
    """Zero out tiny negative eigenvalues; fail loudly on genuine negatives."""
    tol = _CLAMP * max(scale, 1.0)
    bad = vals < -tol
    if np.any(bad):
        raise NumericalError(
            f"{what}: eigenvalue {vals[bad][0]:.3e} below -{tol:.1e}; "
            "kernel discretization is not positive semidefinite")
    neg = (vals < 0.0) & ~bad
    n_clamped = int(np.count_nonzero(neg))
    if n_clamped:
        warnings.warn(f"{what}: clamped {n_clamped} tiny negative eigenvalues to 0")
        vals = np.where(neg, 0.0, vals)
    return vals, n_clamped


# ------------------------------------------------------- angular coefficients

def angular_coeffs(p: model.ModelParams, t_gamma, n_max, cov_fn=None) -> AngularSpectrum:
    """B_n on the sphere of radius a = t_gamma by Funk-Hecke projection.

    B_n(a) = |S_{d-1}| int_0^{2a} r^{d-1} C_S(r) R_n(1 - r^2/(2a^2))
             (1 - r^2/(4a^2))^{(d-2)/2} dr,

    computed as a hybrid: the chord range r <= 2 in r (resolves covariance
    curvature near 0), the rest in colatitude theta with chunks geometric in
    theta (resolves the 1/a-scale features of C_S(2a sin(theta/2)) at any
    radius). cov_fn overrides the model spatial factor (degenerate checks).
    """
    if n_max < 0:
        raise ValidationError(f"n_max must be >= 0, got {n_max}")
    a = float(t_gamma)
    if a <= 0:
        raise ValidationError(f"t_gamma must be > 0, got {t_gamma}")
    d = p.d
    cs = model.cov_spatial(p).value if cov_fn is None else cov_fn
    ring = sphere_area(d - 1) if d > 1 else 2.0  # |S_0| = 2 points

    chunks = []  # (nodes_r, weights, jacobian factors) accumulated as integrand pieces
    total = np.zeros(n_max + 1)

    def accumulate_r(edges, npts=32):
        r, w = _gl_nodes(edges, npts)
        u = 1.0 - r * r / (2.0 * a * a)
        fac = np.asarray(cs(r)) * r ** (d - 1) * (1.0 - r * r / (4.0 * a * a)) ** ((d - 2) / 2.0)
        return (_ratio_stack(n_max, d, u) * (w * fac)[None, :]).sum(axis=1)

    def accumulate_theta(edges, npts=32):
        th, w = _gl_nodes(edges, npts)
        r = 2.0 * a * np.sin(0.5 * th)
        fac = np.asarray(cs(r)) * a ** (d - 1) * np.sin(th) ** (d - 1) * a
        return (_ratio_stack(n_max, d, np.cos(th)) * (w * fac)[None, :]).sum(axis=1)

    r_cut = min(2.0, 2.0 * a)
    r_edges = [x for x in (0.0, 0.125, 0.25, 0.5, 1.0, 2.0) if x < r_cut] + [r_cut]
    total += accumulate_r(r_edges)
    if r_cut < 2.0 * a:
        th_c = 2.0 * math.asin(r_cut / (2.0 * a))
        edges = [th_c]
        while edges[-1] * 2.0 < math.pi / 4.0:
            edges.append(edges[-1] * 2.0)
        edges.extend(np.linspace(edges[-1], math.pi, 7)[1:])
        total += accumulate_theta(edges)
    total *= ring

    b0 = max(total[0], 1e-300)
    bad = total < -1e-8 * b0
    if np.any(bad):
        n_bad = int(np.nonzero(bad)[0][0])
        raise NumericalError(
            f"angular coefficient n={n_bad} came out {total[n_bad]:.3e} < 0; "
            "quadrature failed for this radius/degree")
    neg = total < 0.0
    total = np.where(neg, 0.0, total)
    return AngularSpectrum(t_gamma=a, coeffs=total, dims=eigenspace_dims(n_max, d),
                           n_clamped=int(np.count_nonzero(neg)))


def angular_coeffs_bessel(p: model.ModelParams, t_gamma, n_max) -> np.ndarray:
    """Cross-check route for d = 2: B_n(a) = 8 pi^3 a int lam J_{n+1/2}(lam a)^2 f_S dlam.

    Integrates the squared-Bessel spectral form directly: power-substituted
    head over the spectral singularity, then chunks between Bessel zeros.
    Accurate for moderate radii; the Funk-Hecke route is the primary one.
    """
    if p.d != 2:
        raise ValidationError("squared-Bessel route implemented for d = 2 only")
    a = float(t_gamma)
    scale = model.spatial_scale(p)
    alpha, rho = p.alpha_s, p.rho_s
    fS = lambda l: model._factor_radial(l, 3, alpha, rho, scale)
    from scipy import integrate

    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        nu = n + 0.5
        g = lambda l: l * sps.jv(nu, l * a) ** 2 * fS(l)
        inv = 1.0 / alpha
        head, _ = integrate.quad(lambda t: g(t ** inv) * inv * t ** (inv - 1.0),
                                 0, 1.0, limit=200)
        lam_hi = max(60.0, 60.0 / a)
        zeros = sps.jn_zeros(int(round(nu + 0.5)), 400)  # zeros of J_{n+1} bracket J_{n+1/2}'s
        cuts = [1.0] + [z / a for z in zeros if 1.0 < z / a < lam_hi] + [lam_hi]
        tail = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            seg, _ = integrate.quad(g, lo, hi, limit=100)
            tail += seg
        rest, _ = integrate.quad(g, lam_hi, np.inf, limit=300)
        out[n] = 8.0 * math.pi ** 3 * a * (head + tail + rest)
    return out


# ------------------------------------------------- product-integration Nystrom

def _cell_toeplitz_row(F, h, N):
    """First row of the cell-integrated convolution matrix via antiderivative F."""
    l = np.arange(N, dtype=np.float64)
    return F((l + 0.5) * h) - F((l - 0.5) * h)


def _numeric_antiderivative_row(fn, h, N):
    """Fallback when no antiderivative is available: per-cell GL-8 integrals."""
    x, w = np.polynomial.legendre.leggauss(8)
    l = np.arange(N, dtype=np.float64)
    pts = l[:, None] * h + 0.5 * h * x[None, :]
    return 0.5 * h * (np.asarray(fn(np.abs(pts))) * w[None, :]).sum(axis=1)


def _toeplitz_eigs(c, k, want_vectors):
    """Top-k eigenpairs of the symmetric Toeplitz matrix with first column c."""
    N = c.size
    if N <= 1024 or k >= N // 8:
        A = sla.toeplitz(c)
        if want_vectors:
            w, v = np.linalg.eigh(A)
            order = np.argsort(w)[::-1][:k]
            return w[order], v[:, order]
        w = np.linalg.eigvalsh(A)[::-1][:k]
        return w, None
    emb = np.concatenate([c, [0.0], c[:0:-1]])
    femb = np.fft.rfft(emb)
    M = emb.size

    def mv(x):
        y = np.fft.irfft(np.fft.rfft(x, n=M) * femb, n=M)
        return y[:N]

    op = LinearOperator((N, N), matvec=mv, dtype=np.float64)
    w, v = eigsh(op, k=k, which="LA", tol=0, maxiter=5000)
    order = np.argsort(w)[::-1]
    return w[order], (v[:, order] if want_vectors else None)


def _nystrom_symmetric(row_builder, T, n_nodes, k_max, richardson, want_vectors, what):
    """Shared driver: cell-integrated Toeplitz eigensolve with Richardson pairing."""
    N = int(n_nodes)
    if N < 8:
        raise ValidationError(f"n_nodes too small: {N}")
    k_max = int(min(k_max, N))
    h = 2.0 * T / N
    c = row_builder(h, N)
    raw, vecs = _toeplitz_eigs(c, k_max, want_vectors)
    if richardson and N % 2 == 0 and N >= 16:
        h2 = 2.0 * T / (N // 2)
        c2 = row_builder(h2, N // 2)
        k2 = min(k_max, N // 2)
        coarse, _ = _toeplitz_eigs(c2, k2, False)
        lam = raw.copy()
        lam[:k2] = (4.0 * raw[:k2] - coarse) / 3.0
    else:
        lam = raw.copy()
    lam, n_clamped = _clamp_spectrum(lam, float(lam[0]) if lam.size else 1.0, what)
    nodes = -T + (np.arange(N) + 0.5) * h
    if vecs is not None:
        vecs = vecs / math.sqrt(h)
    return TemporalEigensystem(T=float(T), nodes=nodes, h=h, eigenvalues=lam,
                               raw_eigenvalues=raw, eigenvectors=vecs,
                               n_nodes=N, n_clamped=n_clamped)


def temporal_eigs(p: model.ModelParams, n, T, k_max=50, n_nodes=None, cov=None,
                  richardson=True, want_vectors=True) -> TemporalEigensystem:
    """Eigenpairs of the normalized temporal kernel B_n(t-s)/B_n(0) on [-T, T].

    For the separable model family the normalized kernel is the unit temporal
    covariance factor for every degree n, so one eigensystem serves all
    degrees. cov overrides the kernel: either (value_fn, antiderivative_fn)
    or a bare callable (cells then integrated by local Gauss rules).
    """
    if n < 0:
        raise ValidationError(f"degree n must be >= 0, got {n}")
    if T <= 0:
        raise ValidationError(f"T must be > 0, got {T}")
    if k_max < 1:
        raise ValidationError(f"k_max must be >= 1, got {k_max}")
    if cov is None:
        fac = model.cov_temporal(p)
        builder = lambda h, N: _cell_toeplitz_row(fac.antiderivative, h, N)
    elif isinstance(cov, tuple):
        fn, F = cov
        builder = (lambda h, N: _cell_toeplitz_row(F, h, N)) if F is not None \
            else (lambda h, N: _numeric_antiderivative_row(fn, h, N))
    else:
        builder = lambda h, N: _numeric_antiderivative_row(cov, h, N)
    if n_nodes is None:
        n_nodes = 1600
    return _nystrom_symmetric(builder, T, n_nodes, k_max, richardson, want_vectors,
                              f"temporal eigensystem (T={T})")


# ------------------------------------------------------------- Riesz spectra

def _fit_window(lam, first_index, decay, k0, k1):
    """Fit lam_k k^decay = A (1 + b/k + c/k^2) over indices k in [k0, k1]."""
    k = np.arange(k0, k1 + 1, dtype=np.float64)
    y = lam[k0 - first_index: k1 - first_index + 1] * k ** decay
    X = np.stack([np.ones_like(k), 1.0 / k, 1.0 / k ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    A, ab, ac = coef
    return float(A), float(ab / A), float(ac / A)


def riesz_temporal_eigs(alpha_t, k_max=50, n_nodes=3600, richardson=True) -> RieszPart:
    """Eigenvalues of |t-s|^{-alpha_t} on [-1, 1], largest k_max, plus tail fit.

    Product-integration Nystrom: diagonal cells carry the exact local integral
    of the singular kernel through the closed-form antiderivative
    sign(u)|u|^{1-alpha}/(1-alpha). Eigenvalues decay like k^{-(1-alpha)};
    the fitted three-term power law drives zeta-function tail completion.
    """
    if not 0.0 < alpha_t < 0.5:
        raise ValidationError(f"alpha_t must lie in (0, 1/2), got {alpha_t}")
    if k_max < 1:
        raise ValidationError(f"k_max must be >= 1, got {k_max}")
    e = 1.0 - alpha_t
    F = lambda u: np.sign(u) * np.abs(u) ** e / e
    builder = lambda h, N: _cell_toeplitz_row(F, h, N)
    k_raw = max(80, k_max)
    sys_ = _nystrom_symmetric(builder, 1.0, n_nodes, k_raw, richardson, False,
                              f"Riesz temporal spectrum (alpha={alpha_t})")
    lam = sys_.eigenvalues
    decay = 1.0 - alpha_t
    hi = min(k_raw, lam.size)
    lo = max(hi // 2, 2)
    fit = _fit_window(lam, 1, decay, lo, hi)
    return RieszPart(alpha=alpha_t, coeffs=lam[:k_max], dims=np.ones(k_max),
                     decay=decay, fit=fit, fit_window=(lo, hi), first_index=1,
                     n_clamped=sys_.n_clamped)


def riesz_spatial_eigs(alpha_s, d, n_max=30) -> RieszPart:
    """Eigenvalues of the chordal Riesz kernel |x-y|^{-alpha_s} on S_d(1).

    Funk-Hecke reduces degree n to a 1-d integral of (2-2u)^{-alpha/2}
    against the normalized Gegenbauer polynomial with surface weight
    (1-u^2)^{d/2-1}; Gauss-Jacobi quadrature with weight exponents
    (d/2-1-alpha/2, d/2-1) absorbs both the edge singularity and the
    surface factor, making the rule exact for every retained degree.
    """
    if not 0.0 < alpha_s < d / 2.0:
        raise ValidationError(f"need 0 < alpha_s < d/2 = {d / 2}, got {alpha_s}")
    if n_max < 0:
        raise ValidationError(f"n_max must be >= 0, got {n_max}")
    n_raw = max(80, n_max)
    M = max(256, 2 * n_raw)
    x, w = sps.roots_jacobi(M, d / 2.0 - 1.0 - alpha_s / 2.0, d / 2.0 - 1.0)
    ring = sphere_area(d - 1) if d > 1 else 2.0
    vals = 2.0 ** (-alpha_s / 2.0) * ring * (_ratio_stack(n_raw, d, x) * w[None, :]).sum(axis=1)
    vals, n_clamped = _clamp_spectrum(vals, float(vals[0]), "Riesz spatial spectrum")
    decay = d - alpha_s
    fit = _fit_window(vals, 0, decay, max(n_raw // 2, 2), n_raw) if d == 2 else None
    return RieszPart(alpha=alpha_s, coeffs=vals[:n_max + 1],
                     dims=eigenspace_dims(n_max, d), decay=decay, fit=fit,
                     fit_window=(max(n_raw // 2, 2), n_raw) if d == 2 else None,
                     first_index=0, n_clamped=n_clamped)


def riesz_spectrum(alpha_s, alpha_t, d=2, n_max=30, k_max=50) -> RieszSpectrum:
    return RieszSpectrum(d=d, spatial=riesz_spatial_eigs(alpha_s, d, n_max),
                         temporal=riesz_temporal_eigs(alpha_t, k_max))


# -------------------------------------------------------------- power traces

def _zeta_tail_plain(fit, decay, m, K):
    """sum_{k > K} lam_k^m for lam_k ~ A k^-decay (1 + b/k + c/k^2)."""
    A, b, c = fit
    beta = m * decay
    t1 = sps.zeta(beta, K + 1)
    t2 = m * b * sps.zeta(beta + 1, K + 1)
    t3 = (m * c + 0.5 * m * (m - 1) * b * b) * sps.zeta(beta + 2, K + 1)
    return A ** m * (t1 + t2 + t3), abs(A) ** m * 3.0 * abs(t3)


def _zeta_tail_weighted(fit, decay, m, N):
    """sum_{n > N} (2n+1) lam_n^m for the d = 2 spatial factor."""
    A, b, c = fit
    beta = m * decay
    if beta - 1.0 <= 1.0:
        raise NumericalError("spatial tail sum diverges at this (m, alpha)")
    M2 = m * c + 0.5 * m * (m - 1) * b * b
    t1 = 2.0 * sps.zeta(beta - 1.0, N + 1)
    t2 = (2.0 * m * b + 1.0) * sps.zeta(beta, N + 1)
    t3 = (2.0 * M2 + m * b) * sps.zeta(beta + 1.0, N + 1)
    return A ** m * (t1 + t2 + t3), abs(A) ** m * 3.0 * abs(t3)


def trace_power_detail(spec: RieszSpectrum, m) -> TracePower:
    if m < 2 or int(m) != m:
        raise ValidationError(
            "power traces need integer m >= 2: at m = 1 the operator is "
            "Hilbert-Schmidt but not trace class (the eigenvalue sums diverge)")
    m = int(m)
    sp, te = spec.spatial, spec.temporal
    head_s = float(np.sum(sp.dims * sp.coeffs ** m))
    head_t = float(np.sum(te.coeffs ** m))
    tail_s = tail_t = 0.0
    bound = 0.0
    if sp.fit is not None and spec.d == 2:
        tail_s, bs = _zeta_tail_weighted(sp.fit, sp.decay, m, sp.coeffs.size - 1)
        bound += bs * head_t
    if te.fit is not None:
        tail_t, bt = _zeta_tail_plain(te.fit, te.decay, m, te.coeffs.size)
        bound += bt * (head_s + tail_s)
    value = (head_s + tail_s) * (head_t + tail_t)
    return TracePower(m=m, value=value, head_spatial=head_s, tail_spatial=tail_s,
                      head_temporal=head_t, tail_temporal=tail_t, tail_bound=bound)


def trace_power(spec: RieszSpectrum, m, tail="completed"):
    """tr(K^m) of the limiting operator; tail='completed' adds zeta tails."""
    det = trace_power_detail(spec, m)
    if tail == "completed":
        return det.value
    if tail == "none":
        return det.truncated
    raise ValidationError(f"tail must be 'completed' or 'none', got {tail!r}")
