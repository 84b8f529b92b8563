"""The limit law of the normalized quadratic functional.

Cumulants, characteristic functions (series and Fredholm-product routes),
Fredholm determinants, and a chi-squared-series sampler for the limiting
random variable

    S_inf = sum_{n,j,k} w_{nk} (eta_{njk}^2 - 1),   w_{nk} = Bs_n * Bt_k,

where Bs_n are the spatial Riesz eigenvalues (multiplicity Gamma(n,d)), Bt_k
the temporal ones, and eta i.i.d. standard normals. Its cumulants are
kappa_m = 2^{m-1} (m-1)! c_m with c_m the power traces of the limiting
operator, and its characteristic function

    psi(xi) = exp(1/2 sum_{m>=2} (2 i xi)^m c_m / m)
            = prod_{n,k} (1 - 2 i xi w_{nk})^{-Gamma(n,d)/2} e^{-i xi Gamma(n,d) w_{nk}}.

The series form converges only for |2 xi| sup w < 1; the product form is
entire in that sense and is the exported value everywhere.

The sampler draws eta from a counter-based stream indexed by
(replicate, flat position), where flat position enumerates (n, j, k) with n
ascending, then j = 0..Gamma(n,d)-1, then k; the field simulator consumes
the same stream in the same order, which is what makes finite-T and limit
samples couplable replicate by replicate.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import spectra
from ._accel import HAS_NUMBA, njit, prange
from .errors import AccuracyError, ConsistencyError, ValidationError
from .rng import DOM_ETA, DOM_MC_CUM, normals_batch, uniforms_batch
from .specfun import sphere_area


@dataclass(frozen=True)
class CumulantTable:
    """c_m for m = 2..M with per-entry error estimates."""

    m_range: np.ndarray
    values: np.ndarray
    method: str
    stderr: np.ndarray

    def __post_init__(self):
        if np.any(self.values <= 0.0):
            raise ValidationError("cumulant coefficients must be positive")
        if self.values.size >= 2:
            bound = self.values[:-1] * math.sqrt(self.values[0])
            if np.any(self.values[1:] > bound * (1.0 + 1e-9)):
                warnings.warn("cumulant growth exceeds the c_2^(1/2) ratio bound")

    def value(self, m):
        i = int(m) - int(self.m_range[0])
        if i < 0 or i >= self.values.size:
            raise ValidationError(f"m={m} outside table range")
        return float(self.values[i])


@dataclass(frozen=True)
class CharacteristicCurve:
    xi_grid: np.ndarray
    values: np.ndarray
    truncation_m: int | None
    radius: float

    def __post_init__(self):
        i0 = np.nonzero(self.xi_grid == 0.0)[0]
        if i0.size and abs(self.values[i0[0]] - 1.0) > 1e-12:
            raise ConsistencyError("characteristic function must equal 1 at xi = 0")


# ---------------------------------------------------------------- cumulants

def cumulants_spectral(spec: spectra.RieszSpectrum, M) -> CumulantTable:
    """c_m = tr(K^m), m = 2..M, tail-completed; stderr holds the tail bound."""
    if M < 2:
        raise ValidationError(f"M must be >= 2, got {M}")
    ms = np.arange(2, M + 1)
    vals = np.empty(ms.size)
    errs = np.empty(ms.size)
    for i, m in enumerate(ms):
        det = spectra.trace_power_detail(spec, int(m))
        if det.tail_bound > 0.01 * det.value:
            raise AccuracyError(
                f"retained spectrum too short for m={m}: tail bound "
                f"{det.tail_bound:.2e} exceeds 1% of c_m={det.value:.2e}")
        vals[i] = det.value
        errs[i] = det.tail_bound
    return CumulantTable(m_range=ms, values=vals, method="spectral", stderr=errs)


def cumulants_montecarlo(p, m, n_samples, seed) -> CumulantTable:
    """Plain Monte Carlo for the circular-product integral form of c_m.

    Uniform points on (S_d(1) x [-1,1])^m; the estimator is the sample mean
    of prod_i |t_i - t_{i+1}|^{-alpha_t} ||x_i - x_{i+1}||^{-alpha_s} (cyclic)
    times the domain volume (|S_d| * 2)^m. At boundary parameter choices the
    integrand's second moment diverges logarithmically; the reported stderr
    is the sample estimate and stays honest in practice.
    """
    if m < 2:
        raise ValidationError(f"m must be >= 2, got {m}")
    if n_samples < 2:
        raise ValidationError("n_samples must be >= 2")
    d, a_s, a_t = p.d, p.alpha_s, p.alpha_t
    vol = (sphere_area(d) * 2.0) ** m
    total = 0.0
    total2 = 0.0
    done = 0
    chunk = 1 << 18  # fixed: chunk ordinal indexes the replicate lane
    lane = 0
    while done < n_samples:
        b = min(chunk, int(n_samples) - done)
        z = normals_batch(seed, DOM_MC_CUM, np.array([lane]), b * m * (d + 1))[0]
        u = uniforms_batch(seed, DOM_MC_CUM, np.array([(1 << 32) + lane]), b * m)[0]
        lane += 1
        x = z.reshape(b, m, d + 1)
        x = x / np.linalg.norm(x, axis=2, keepdims=True)
        t = 2.0 * u.reshape(b, m) - 1.0
        f = np.ones(b)
        for i in range(m):
            j = (i + 1) % m
            dx = np.linalg.norm(x[:, i, :] - x[:, j, :], axis=1)
            dt = np.abs(t[:, i] - t[:, j])
            f *= dx ** (-a_s) * dt ** (-a_t)
        total += float(np.sum(f))
        total2 += float(np.sum(f * f))
        done += b
    mean = total / n_samples
    var = max(total2 / n_samples - mean * mean, 0.0)
    val = mean * vol
    se = math.sqrt(var / n_samples) * vol
    return CumulantTable(m_range=np.array([m]), values=np.array([val]),
                         method="montecarlo", stderr=np.array([se]))


# ----------------------------------------------------- characteristic curves

def _series_radius(c: CumulantTable):
    if c.values.size >= 2:
        sup = float(np.max(c.values[1:] / c.values[:-1]))
    else:
        sup = math.sqrt(float(c.values[0]))
    return 1.0 / (2.0 * sup)


def limit_cf(c: CumulantTable, xi_grid, clip=True) -> CharacteristicCurve:
    """Cumulant-series characteristic function, valid inside its radius.

    Grid points beyond the estimated convergence radius are dropped with a
    warning (clip=True) or rejected (clip=False). For arbitrary xi use
    limit_cf_product, which resums the series exactly.
    """
    xi = np.asarray(xi_grid, dtype=np.float64)
    radius = _series_radius(c)
    ok = np.abs(xi) < radius
    if not np.all(ok):
        if not clip or not np.any(ok):
            raise ValidationError(
                f"cumulant series diverges at |xi| >= {radius:.6g}; "
                f"admissible range is (-{radius:.6g}, {radius:.6g})")
        warnings.warn(f"clipped {np.count_nonzero(~ok)} grid points outside "
                      f"the series radius {radius:.6g}")
        xi = xi[ok]
    log_psi = np.zeros(xi.size, dtype=np.complex128)
    trunc = int(c.m_range[-1])
    for i, m in enumerate(c.m_range):
        term = 0.5 * (2j * xi) ** m * c.values[i] / m
        log_psi += term
        if np.all(np.abs(term) < 1e-12):
            trunc = int(m)
            break
    return CharacteristicCurve(xi_grid=xi, values=np.exp(log_psi),
                               truncation_m=trunc, radius=radius)


def _weights_of(spec: spectra.RieszSpectrum):
    return np.outer(spec.spatial.coeffs, spec.temporal.coeffs), spec.spatial.dims


def _product_log_cf(w, dims, xi, centered):
    """log psi for sum Gamma-fold chi-square combinations of weights w[n, k]."""
    xi = np.asarray(xi, dtype=np.float64)
    out = np.empty(xi.size, dtype=np.complex128)
    wsum = float(np.sum(dims * w.sum(axis=1)))
    for i, x in enumerate(xi):
        z = np.log1p(-2j * x * w)
        acc = -0.5 * np.sum(dims[:, None] * z)
        if centered:
            acc -= 1j * x * wsum
        out[i] = acc
    return out


def limit_cf_product(spec: spectra.RieszSpectrum, xi_grid) -> CharacteristicCurve:
    """Exact characteristic function of the truncated limit spectrum, all xi."""
    w, dims = _weights_of(spec)
    xi = np.asarray(xi_grid, dtype=np.float64)
    vals = np.exp(_product_log_cf(w, dims, xi, True))
    return CharacteristicCurve(xi_grid=xi, values=vals, truncation_m=None,
                               radius=math.inf)


def finite_T_cf(ang: spectra.AngularSpectrum, temps, d_T, xi_grid, M=40,
                centered=True) -> CharacteristicCurve:
    """Characteristic function of the normalized finite-T quadratic functional.

    Weights w_{nk} = B_n * B_{nk} / d_T. Computes the Fredholm-product route
    (exported) and, inside the cumulant-series radius, the exp-trace series
    with c_m(T) = sum_n Gamma_n B_n^m sum_k B_{nk}^m / d_T^m; the two must
    agree or the call fails with a consistency error.

    temps: one TemporalEigensystem shared by every degree (the separable
    family), or a sequence with one eigensystem per degree n.
    """
    if np.ndim(d_T) != 0 or d_T <= 0:
        raise ValidationError("d_T must be a positive scalar")
    n_deg = ang.coeffs.size
    if isinstance(temps, spectra.TemporalEigensystem):
        temps = [temps] * n_deg
    if len(temps) != n_deg:
        raise ValidationError(f"need {n_deg} temporal eigensystems, got {len(temps)}")
    w = np.stack([ang.coeffs[n] * temps[n].eigenvalues / d_T for n in range(n_deg)])
    dims = ang.dims
    xi = np.asarray(xi_grid, dtype=np.float64)
    log_prod = _product_log_cf(w, dims, xi, centered)

    wmax = float(np.max(w))
    radius = 1.0 / (2.0 * wmax) if wmax > 0 else math.inf
    inside = np.abs(xi) < 0.9 * radius
    if np.any(inside):
        cm = np.array([float(np.sum(dims * np.sum(w ** m, axis=1))) for m in range(2, M + 1)])
        xs = xi[inside]
        log_series = np.zeros(xs.size, dtype=np.complex128)
        for i, m in enumerate(range(2, M + 1)):
            term = 0.5 * (2j * xs) ** m * cm[i] / m
            log_series += term
            if np.all(np.abs(term) < 1e-14):
                break
        if not centered:
            log_series += 1j * xs * float(np.sum(dims * w.sum(axis=1)))
        gap = np.max(np.abs(np.exp(log_series) - np.exp(log_prod[inside])))
        if gap > 1e-6:
            raise ConsistencyError(
                f"series and Fredholm-product routes disagree by {gap:.2e}")
    return CharacteristicCurve(xi_grid=xi, values=np.exp(log_prod),
                               truncation_m=None, radius=radius)


def fredholm_det(eigs, omega):
    """det(I - omega A) for trace-class A given by its eigenvalues.

    Product route Pi(1 - omega lam) is the exported value (entire); the
    exp-trace route exp(-sum_k tr(A^k) omega^k / k) is checked against it
    when |omega| sum lam < 1.
    """
    lam = np.asarray(eigs, dtype=np.float64)
    if np.any(lam < 0.0):
        raise ValidationError("eigenvalues must be nonnegative")
    om = complex(omega)
    prod = complex(np.prod(1.0 - om * lam))
    if abs(om) * float(np.sum(lam)) < 1.0 and lam.size:
        # term magnitudes decay at least geometrically with ratio q, which
        # bounds the unsummed tail; compare only once that bound is negligible.
        # powers carries (om lam_i)^k jointly: each factor is < 1 in modulus
        # even when |om| alone is large, so nothing overflows.
        q = abs(om) * float(np.max(lam))
        olam = om * lam
        acc = 0.0j
        powers = olam.copy()
        k = 1
        tail = math.inf
        while k <= 2000:
            term = np.sum(powers) / k
            acc -= term
            tail = abs(term) * q / (1.0 - q)
            if abs(term) < 1e-16:
                break
            powers = powers * olam
            k += 1
        if tail < 1e-13 and abs(np.exp(acc) - prod) > 1e-10 * max(1.0, abs(prod)):
            raise ConsistencyError("Fredholm determinant routes disagree")
    return prod


# ------------------------------------------------------------------ sampling

def series_weights(spec: spectra.RieszSpectrum, squared=False):
    """Flat weight vector over canonical (n, j, k) order, plus layout sizes."""
    w, dims = _weights_of(spec)
    if squared:
        w = w ** 2
    reps = dims.astype(np.int64)
    flat = np.repeat(w, reps, axis=0).reshape(-1)
    return flat


def _sample_np(flat_w, seed, replicates, domain=DOM_ETA):
    count = flat_w.size
    out = np.empty(replicates.size)
    chunk = max(1, int(2e7) // max(count, 1))
    for i in range(0, replicates.size, chunk):
        reps = replicates[i:i + chunk]
        z = normals_batch(seed, domain, reps, count)
        out[i:i + chunk] = (z * z - 1.0) @ flat_w
    return out


if HAS_NUMBA:
    from .rng import _MASKU, _SH32, _normals4_nb

    @njit(cache=True, parallel=True)
    def _sample_nb(flat_w, reps, dom, k0, k1):  # pragma: no cover
        count = flat_w.shape[0]
        nblk = (count + 3) // 4
        out = np.empty(reps.shape[0])
        for r in prange(reps.shape[0]):
            r0 = reps[r] & _MASKU
            r1 = reps[r] >> _SH32
            acc = 0.0
            for blk in range(nblk):
                z0, z1, z2, z3 = _normals4_nb(np.uint64(blk), r0, r1, dom, k0, k1)
                base = blk * 4
                acc += flat_w[base] * (z0 * z0 - 1.0)
                if base + 1 < count:
                    acc += flat_w[base + 1] * (z1 * z1 - 1.0)
                if base + 2 < count:
                    acc += flat_w[base + 2] * (z2 * z2 - 1.0)
                if base + 3 < count:
                    acc += flat_w[base + 3] * (z3 * z3 - 1.0)
            out[r] = acc
        return out


def sample_S_infinity(spec: spectra.RieszSpectrum, n_samples, seed,
                      squared_weights=False, first_replicate=0):
    """i.i.d. replicates of the truncated chi-squared series for S_inf.

    Termwise centering: each term is w (eta^2 - 1), so the batch has exact
    mean zero in expectation and variance 2 sum w^2 at this truncation.
    Replicate r consumes the counter-based stream (seed, DOM_ETA, r), making
    batches reproducible, order-independent, and couplable with the field
    simulator's spectral coefficients.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    flat_w = series_weights(spec, squared=squared_weights)
    tail = _hs_tail_fraction(spec, squared_weights)
    if tail > 1e-3:
        warnings.warn(
            f"truncation tail holds {tail:.2%} of the HS mass; refine "
            "(n_max, k_max) if sampling accuracy at this level matters")
    return sample_quadratic_form(flat_w, n_samples, seed, first_replicate)


def sample_quadratic_form(flat_w, n_samples, seed, first_replicate=0,
                          domain=DOM_ETA):
    """Replicates of sum_i w_i (eta_i^2 - 1) over the flat stream order.

    Stream position i always feeds weight position i, so two weight vectors
    sharing a layout are driven by the same noise at equal (seed, replicate),
    and a coupled difference of quadratic forms can be sampled directly by
    passing the difference of the weight vectors.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    flat_w = np.ascontiguousarray(np.asarray(flat_w, dtype=np.float64).reshape(-1))
    if flat_w.size == 0:
        raise ValidationError("empty weight vector")
    reps = np.arange(first_replicate, first_replicate + int(n_samples), dtype=np.uint64)
    if HAS_NUMBA:
        from .rng import _key_words
        k0, k1, dom = _key_words(seed, domain)
        return _sample_nb(flat_w, reps, dom, k0, k1)
    return _sample_np(flat_w, seed, reps, domain)


def _hs_tail_fraction(spec, squared):
    m = 4 if squared else 2
    try:
        det = spectra.trace_power_detail(spec, m)
    except (ValidationError, AccuracyError):
        return 0.0
    if det.value <= 0:
        return 0.0
    return max(0.0, 1.0 - det.truncated / det.value)
