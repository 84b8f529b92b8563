"""Path-level field simulation on the sphere and its window functionals.

Samples the truncated Karhunen-Loeve representation of the Gaussian field on
a sphere cross a symmetric time window, synthesizes field values on product
grids (2-sphere only), and evaluates the centered quadratic functional
together with its Hermite-subordinated generalization. Replicates index
counter-based noise streams, so ensembles are reproducible, chunkable, and
couplable term-by-term with the limiting chi-squared series sampler.

Coefficient layout. A replicate's coefficients are stored flat in the
canonical order (degree n ascending, within-degree index j, temporal index k
fastest); the flat position of (n, j, k) is (n^2 + j) * k_max + k for the
2-sphere. Within degree n, j = 0 is the zonal harmonic and j = 2m - 1,
j = 2m are the cosine and sine harmonics of azimuthal order m. The chi
squared series sampler consumes the identical flat order, which is what
makes coupled truncation-gap draws meaningful.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import rosenblatt, spectra
from .errors import CapacityError, NumericalError, ValidationError
from .rng import DOM_ETA, normals_batch
from .specfun import HermiteCoeffs


# ------------------------------------------------------------------- types

@dataclass(frozen=True)
class KLSample:
    """Batch of Karhunen-Loeve coefficient replicates.

    eta holds one replicate per row in the canonical flat order described in
    the module docstring. Field values are synthesized on demand, nothing
    besides coefficients is materialized here.
    """

    eta: np.ndarray            # (n_replicates, L) standard normals
    n_max: int
    k_max: int
    T: float
    radius: float              # sphere radius, T^gamma in the scaled regime
    seed: int
    first_replicate: int
    ang: spectra.AngularSpectrum
    temps: object              # shared TemporalEigensystem (or one per degree)
    gamma: float | None = None

    @property
    def n_replicates(self):
        return self.eta.shape[0]

    def block(self, replicate, degree):
        """Coefficients of one degree as a (2 * degree + 1, k_max) view."""
        if not 0 <= degree <= self.n_max:
            raise ValidationError(f"degree {degree} outside [0, {self.n_max}]")
        lo = degree * degree * self.k_max
        hi = (degree + 1) * (degree + 1) * self.k_max
        width = 2 * degree + 1
        return self.eta[replicate, lo:hi].reshape(width, self.k_max)


@dataclass(frozen=True)
class FunctionalResult:
    """Value of a window functional of one sample (or a replicate batch)."""

    value: float | np.ndarray
    route: str                 # "parseval" | "grid"
    T: float
    kind: str                  # "S_T" | "A_T"


@dataclass(frozen=True)
class FieldGrid:
    """Product quadrature grid for field synthesis on the 2-sphere.

    Colatitude nodes are Gauss-Legendre in cos(theta), longitudes uniform,
    time nodes either the temporal eigensystem's own midpoint cells or a
    refined midpoint grid with Nystrom-extended eigenfunction values.
    """

    cos_nodes: np.ndarray
    cos_weights: np.ndarray
    phi_nodes: np.ndarray
    time_nodes: np.ndarray
    time_weight: float
    basis_time: np.ndarray     # (n_time, k_max) eigenfunction values
    n_theta: int
    n_phi: int
    n_time: int
    refined: bool


# -------------------------------------------------------- weight assembly

def _temporal_shared(temps):
    """The single shared eigensystem, or None for genuinely per-degree lists."""
    if isinstance(temps, spectra.TemporalEigensystem):
        return temps
    seq = list(temps)
    if not seq:
        raise ValidationError("no temporal eigensystem supplied")
    first = seq[0]
    for t in seq[1:]:
        if t is not first:
            return None
    return first


def weight_matrix(ang: spectra.AngularSpectrum, temps):
    """Karhunen-Loeve variances B_n(0, radius) * B_{n,k}(T), shape (N+1, K)."""
    b = np.asarray(ang.coeffs, dtype=np.float64)
    shared = _temporal_shared(temps)
    if shared is not None:
        return np.outer(b, np.asarray(shared.eigenvalues, dtype=np.float64))
    seq = list(temps)
    if len(seq) != b.size:
        raise ValidationError(
            f"need one temporal eigensystem per degree: {len(seq)} != {b.size}")
    k = seq[0].eigenvalues.size
    T = seq[0].T
    rows = []
    for n, t in enumerate(seq):
        if t.eigenvalues.size != k or t.T != T:
            raise ValidationError("temporal eigensystems disagree in K or T")
        rows.append(b[n] * np.asarray(t.eigenvalues, dtype=np.float64))
    return np.stack(rows)


def flat_weights(ang, temps):
    """Weight vector over the canonical flat (n, j, k) order."""
    w = weight_matrix(ang, temps)
    reps = ang.dims.astype(np.int64)
    return np.repeat(w, reps, axis=0).reshape(-1)


def coupled_gap_weights(spec: spectra.RieszSpectrum, ang, temps, d_T):
    """Flat weights of the coupled difference S_T - S_infinity.

    Both quadratic forms live on the same canonical (n, j, k) layout, so the
    gap is itself a centered quadratic form with the weight difference, and
    feeding these weights to the series sampler draws the coupled gap with
    noise identical to either side's own draws at equal (seed, replicate).
    """
    w_T = flat_weights(ang, temps) / float(d_T)
    w_inf = rosenblatt.series_weights(spec)
    if w_T.shape != w_inf.shape:
        raise ValidationError(
            f"truncations disagree: finite-T layout {w_T.shape} vs "
            f"limit layout {w_inf.shape}")
    if not np.array_equal(ang.dims, spec.spatial.dims):
        raise ValidationError("finite-T and limit multiplicities disagree")
    return w_T - w_inf


def pointwise_variance(ang, temps):
    """Truncated-model field variance at the temporal eigensystem nodes.

    Space enters only through the constant sum_n B_n Gamma_n / (area r^d),
    so the profile is a function of time alone; it is bounded by one and
    approaches the model variance as the truncations grow.
    """
    shared = _temporal_shared(temps)
    if shared is None:
        raise ValidationError("pointwise variance needs a shared eigensystem")
    if shared.eigenvectors is None:
        raise ValidationError("temporal eigensystem lacks eigenvectors")
    r = float(ang.t_gamma)
    d = _sphere_dim(ang)
    from .specfun import sphere_area
    spatial = float(np.sum(ang.coeffs * ang.dims)) / (sphere_area(d) * r ** d)
    lam = np.asarray(shared.eigenvalues, dtype=np.float64)
    return spatial * (shared.eigenvectors ** 2) @ lam


def _sphere_dim(ang):
    """Infer the sphere dimension from the multiplicity pattern, 2 expected."""
    n = np.arange(ang.dims.size)
    if np.array_equal(ang.dims, 2 * n + 1):
        return 2
    raise ValidationError("grid synthesis is implemented for the 2-sphere only")


# ------------------------------------------------------------- KL sampling

def sample_field(ang: spectra.AngularSpectrum, temps, seed, n_replicates=1,
                 first_replicate=0, gamma=None) -> KLSample:
    """Draw KL coefficient replicates from the counter-based eta stream.

    Replicate r consumes stream (seed, eta-domain, first_replicate + r), in
    the canonical flat order, bit-reproducibly. Large ensembles should be
    drawn in chunks via first_replicate rather than in one allocation.
    """
    w = weight_matrix(ang, temps)
    if np.any(w < -1e-15 * max(1.0, float(np.max(w)))):
        raise ValidationError("negative Karhunen-Loeve weights")
    if n_replicates < 1:
        raise ValidationError("n_replicates must be >= 1")
    k_max = w.shape[1]
    n_max = w.shape[0] - 1
    L = int(ang.dims.astype(np.int64).sum()) * k_max
    if L * int(n_replicates) > 150_000_000:
        raise CapacityError(
            f"{n_replicates} replicates of {L} coefficients exceed the "
            "in-memory budget; draw in chunks via first_replicate")
    shared = _temporal_shared(temps)
    T = shared.T if shared is not None else list(temps)[0].T
    reps = np.arange(first_replicate, first_replicate + int(n_replicates),
                     dtype=np.uint64)
    eta = normals_batch(seed, DOM_ETA, reps, L)
    return KLSample(eta=eta, n_max=n_max, k_max=k_max, T=float(T),
                    radius=float(ang.t_gamma), seed=int(seed),
                    first_replicate=int(first_replicate), ang=ang,
                    temps=temps, gamma=gamma)


# ----------------------------------------------------------------- grids

def make_grid(ang, temps, n_theta=None, n_phi=None, n_time=None,
              temporal_cov=None) -> FieldGrid:
    """Build the synthesis grid for a sample's spectra.

    Defaults integrate squared fields exactly: 2N+1 colatitude nodes and
    4N+1 longitudes for degree cutoff N (2N+1 longitudes already suffice;
    the default keeps margin). Without n_time the temporal eigensystem's own
    midpoint nodes carry the stored eigenvectors; with n_time a fresh
    midpoint grid is used and eigenfunctions are Nystrom-extended through
    the kernel, which requires the temporal covariance callable.
    """
    _sphere_dim(ang)
    shared = _temporal_shared(temps)
    if shared is None:
        raise ValidationError("grid synthesis needs a shared temporal eigensystem")
    if shared.eigenvectors is None:
        raise ValidationError("temporal eigensystem lacks eigenvectors")
    N = ang.coeffs.size - 1
    n_theta = 2 * N + 1 if n_theta is None else int(n_theta)
    n_phi = 4 * N + 1 if n_phi is None else int(n_phi)
    if n_theta < N + 1:
        raise ValidationError(f"n_theta must be >= {N + 1} for degree cutoff {N}")
    if n_phi < 2 * N + 1:
        raise ValidationError(f"n_phi must be >= {2 * N + 1} to avoid aliasing")
    u, wq = np.polynomial.legendre.leggauss(n_theta)
    phis = 2.0 * math.pi * np.arange(n_phi) / n_phi
    if n_time is None:
        nodes = shared.nodes
        h = shared.h
        basis = shared.eigenvectors[:, :]
        refined = False
    else:
        n_time = int(n_time)
        if n_time < 2:
            raise ValidationError("n_time must be >= 2")
        if temporal_cov is None:
            raise ValidationError("refined time grids need temporal_cov")
        T = shared.T
        h = 2.0 * T / n_time
        nodes = -T + (np.arange(n_time) + 0.5) * h
        lam = np.asarray(shared.raw_eigenvalues, dtype=np.float64)
        if np.min(lam) <= 0:
            raise NumericalError("Nystrom extension needs positive eigenvalues")
        gap = np.abs(nodes[:, None] - shared.nodes[None, :])
        kern = np.asarray(temporal_cov(gap.reshape(-1)),
                          dtype=np.float64).reshape(gap.shape)
        basis = (shared.h * (kern @ shared.eigenvectors)) / lam[None, :]
        refined = True
    return FieldGrid(cos_nodes=u, cos_weights=wq, phi_nodes=phis,
                     time_nodes=np.asarray(nodes, dtype=np.float64),
                     time_weight=float(h),
                     basis_time=np.ascontiguousarray(basis),
                     n_theta=n_theta, n_phi=n_phi,
                     n_time=int(len(nodes)), refined=refined)


def _legendre_tables(n_max, u):
    """Orthonormalized associated Legendre values by azimuthal order.

    Entry m is a (len(u), n_max + 1 - m) array whose column i holds degree
    n = m + i, normalized so the real harmonic built from it is orthonormal
    on the unit sphere; sqrt(2) for m >= 1 is folded in. Sum of squares over
    a full degree gives (2n + 1) / (4 pi).
    """
    u = np.asarray(u, dtype=np.float64)
    s = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    tabs = []
    pmm = np.full(u.shape, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(n_max + 1):
        cols = n_max + 1 - m
        tab = np.empty((u.size, cols))
        tab[:, 0] = pmm
        if cols > 1:
            tab[:, 1] = math.sqrt(2.0 * m + 3.0) * u * pmm
        for n in range(m + 2, n_max + 1):
            a = math.sqrt((4.0 * n * n - 1.0) / ((n - m) * (n + m)))
            b = math.sqrt(((n - 1.0 - m) * (n - 1.0 + m) * (2.0 * n + 1.0))
                          / ((n - m) * (n + m) * (2.0 * n - 3.0)))
            tab[:, n - m] = a * u * tab[:, n - m - 1] - b * tab[:, n - m - 2]
        tabs.append(tab * math.sqrt(2.0) if m >= 1 else tab)
        pmm = pmm * s * math.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0))
    return tabs


def _synthesize(s: KLSample, grid: FieldGrid, lo, hi):
    """Field values of replicates lo..hi-1, shape (reps, time, theta, phi)."""
    _sphere_dim(s.ang)
    N, K = s.n_max, s.k_max
    if grid.basis_time.shape[1] != K:
        raise ValidationError("grid temporal basis disagrees with sample K")
    R = hi - lo
    M = (N + 1) * (N + 1)
    scale = np.sqrt(np.repeat(weight_matrix(s.ang, s.temps),
                              s.ang.dims.astype(np.int64), axis=0)).reshape(-1)
    scaled = (s.eta[lo:hi] * scale[None, :]).reshape(R * M, K)
    F = (scaled @ grid.basis_time.T).reshape(R, M, grid.n_time)
    tabs = _legendre_tables(N, grid.cos_nodes)
    degs = np.arange(N + 1)
    half = grid.n_phi // 2 + 1
    H = np.zeros((R, grid.n_time, grid.n_theta, half), dtype=np.complex128)
    zon = np.einsum("qi,rit->rtq", tabs[0], F[:, degs * degs, :], optimize=True)
    H[..., 0] = grid.n_phi * zon
    for m in range(1, N + 1):
        nn = degs[m:]
        idx_c = nn * nn + 2 * m - 1
        idx_s = nn * nn + 2 * m
        tc = np.einsum("qi,rit->rtq", tabs[m], F[:, idx_c, :], optimize=True)
        ts = np.einsum("qi,rit->rtq", tabs[m], F[:, idx_s, :], optimize=True)
        H[..., m] = (0.5 * grid.n_phi) * (tc - 1j * ts)
    return np.fft.irfft(H, n=grid.n_phi, axis=-1) / s.radius


def evaluate_field(s: KLSample, grid: FieldGrid, replicate=0):
    """Materialize one replicate on the grid, shape (time, theta, phi)."""
    if not 0 <= replicate < s.n_replicates:
        raise ValidationError(f"replicate {replicate} outside batch")
    return _synthesize(s, grid, replicate, replicate + 1)[0]


# ------------------------------------------------------------ functionals

def parseval_values(s: KLSample, d_T):
    """Centered quadratic functional of every replicate, Parseval route.

    Exact in the truncated model: the double integral of the squared field
    collapses onto sum w (eta^2 - 1) through the orthonormal bases.
    """
    fw = flat_weights(s.ang, s.temps)
    return ((s.eta * s.eta - 1.0) @ fw) / float(d_T)


def _grid_integral(vals, grid, radius):
    """Quadrature of a scalar grid function over sphere cross window."""
    cell = (2.0 * math.pi / grid.n_phi) * radius * radius * grid.time_weight
    return cell * np.einsum("rtqs,q->r", vals, grid.cos_weights, optimize=True)


def _grid_values(s, d_T, grid, J, center, lo, hi, chunk):
    out = np.empty(hi - lo)
    for c in range(lo, hi, chunk):
        c1 = min(c + chunk, hi)
        z = _synthesize(s, grid, c, c1)
        out[c - lo:c1 - lo] = (_grid_integral(J(z), grid, s.radius)
                               - center) / float(d_T)
    return out


def _mean_center(s: KLSample, grid: FieldGrid, J, n_nodes=96):
    """Exact truncated-model mean of the grid quadrature of J(Z).

    The synthesized field's pointwise variance is constant over the sphere
    by the addition theorem and varies only across time nodes, so the mean
    reduces to a one-dimensional Gauss-Hermite integral per node. Centering
    by this value keeps the subordinated functional exactly mean-zero in
    the simulated (truncated) model, the same convention that makes the
    quadratic functional's centering the truncated weight sum.
    """
    shared = _temporal_shared(s.temps)
    lam = np.asarray(shared.eigenvalues, dtype=np.float64)
    d = _sphere_dim(s.ang)
    from .specfun import sphere_area
    spatial = float(np.sum(s.ang.coeffs * s.ang.dims)) / (
        sphere_area(d) * s.radius ** d)
    sig2 = spatial * (grid.basis_time ** 2) @ lam
    x, wgt = np.polynomial.hermite_e.hermegauss(n_nodes)
    wgt = wgt / math.sqrt(2.0 * math.pi)
    m = np.asarray(J(np.sqrt(np.clip(sig2, 0.0, None))[:, None]
                     * x[None, :])) @ wgt
    area = s.radius * s.radius * 2.0 * math.pi * float(np.sum(grid.cos_weights))
    return area * grid.time_weight * float(m.sum())


def functional_S_T(s: KLSample, d_T, route="parseval", grid=None,
                   replicate=None, grid_tol=1e-3, chunk=8) -> FunctionalResult:
    """The normalized centered quadratic window functional.

    The parseval route is exact for the truncated model. The grid route
    integrates the squared synthesized field; it is checked against the
    parseval value and a discrepancy beyond grid_tol (relative to the
    parseval scale) raises a warning carrying both numbers. With replicate
    None the result holds one value per replicate in the batch.
    """
    lo, hi = _rep_range(s, replicate)
    pv = ((s.eta[lo:hi] * s.eta[lo:hi] - 1.0)
          @ flat_weights(s.ang, s.temps)) / float(d_T)
    if route == "parseval":
        vals = pv
    elif route == "grid":
        if grid is None:
            raise ValidationError("grid route needs a FieldGrid")
        wsum = float(np.sum(flat_weights(s.ang, s.temps)))
        vals = _grid_values(s, d_T, grid, lambda z: z * z, wsum, lo, hi, chunk)
        scale = max(1.0, float(np.max(np.abs(pv))))
        worst = float(np.max(np.abs(vals - pv))) / scale
        if worst > grid_tol:
            warnings.warn(
                f"grid quadrature drifted from the exact route by {worst:.2e} "
                f"relative (grid {vals[np.argmax(np.abs(vals - pv))]:.6g}, "
                f"parseval {pv[np.argmax(np.abs(vals - pv))]:.6g})")
    else:
        raise ValidationError(f"unknown route {route!r}")
    value = vals if replicate is None and s.n_replicates > 1 else float(vals[0])
    return FunctionalResult(value=value, route=route, T=s.T, kind="S_T")


def functional_A_T(s: KLSample, J, hc: HermiteCoeffs, d_T, grid: FieldGrid,
                   replicate=None, chunk=8) -> FunctionalResult:
    """Window functional of a rank-two subordinated field, grid quadrature.

    The constant-chaos term is removed by subtracting the truncated model's
    exact mean of the quadrature, so the result is mean-zero replicate
    ensembles by construction; for J(z) = z^2 that mean equals the truncated
    weight sum and the grid-route quadratic values are reproduced to grid
    tolerance (identically on the eigensystem's own time nodes). The
    returned value is not divided by the rank-two coefficient.
    """
    if hc.hermite_rank != 2:
        raise ValidationError(
            f"subordination requires Hermite rank 2, got {hc.hermite_rank}")
    lo, hi = _rep_range(s, replicate)
    vals = _grid_values(s, d_T, grid, J, _mean_center(s, grid, J), lo, hi, chunk)
    value = vals if replicate is None and s.n_replicates > 1 else float(vals[0])
    return FunctionalResult(value=value, route="grid", T=s.T, kind="A_T")


def _rep_range(s, replicate):
    if replicate is None:
        return 0, s.n_replicates
    if not 0 <= replicate < s.n_replicates:
        raise ValidationError(f"replicate {replicate} outside batch")
    return int(replicate), int(replicate) + 1


def reduction_ensemble(ang, temps, J, hc: HermiteCoeffs, d_T, n_replicates,
                       seed, grid: FieldGrid, chunk=32, first_replicate=0):
    """Paired (S_T, A_T) ensembles over shared noise, drawn chunk by chunk.

    Returns two arrays of length n_replicates: the exact-route quadratic
    values and the grid-route subordinated values of the same replicates.
    Memory stays bounded by the chunk size regardless of ensemble size.
    """
    if hc.hermite_rank != 2:
        raise ValidationError(
            f"subordination requires Hermite rank 2, got {hc.hermite_rank}")
    n_replicates = int(n_replicates)
    s_vals = np.empty(n_replicates)
    a_vals = np.empty(n_replicates)
    center = None
    for c in range(0, n_replicates, chunk):
        cnt = min(chunk, n_replicates - c)
        s = sample_field(ang, temps, seed, n_replicates=cnt,
                         first_replicate=first_replicate + c)
        if center is None:
            center = _mean_center(s, grid, J)
        s_vals[c:c + cnt] = parseval_values(s, d_T)
        a_vals[c:c + cnt] = _grid_values(s, d_T, grid, J, center, 0, cnt, chunk)
    return s_vals, a_vals
