"""Special functions for the spectral machinery.

Eigenspace dimensions and zonal (addition-theorem) kernels on spheres,
Bessel J, probabilists' Hermite polynomials, and Hermite coefficients of
subordinating functions under the standard Gaussian weight.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sps

from .errors import CapacityError, NumericalError, ValidationError

_MAX_EXACT_INT = 2 ** 53


def sphere_area(d):
    """Surface measure |S_d| of the unit d-sphere embedded in R^{d+1}."""
    if d < 1:
        raise ValidationError(f"sphere dimension must be >= 1, got {d}")
    return 2.0 * math.pi ** ((d + 1) / 2.0) / math.gamma((d + 1) / 2.0)


def eigenspace_dim(n, d):
    """Dimension of the degree-n eigenspace on S_d: (2n+d-1)(n+d-2)!/(n!(d-1)!)."""
    if n < 0 or d < 1:
        raise ValidationError(f"need n >= 0 and d >= 1, got n={n}, d={d}")
    if n == 0:
        return 1
    value = (2 * n + d - 1) * math.factorial(n + d - 2) // (math.factorial(n) * math.factorial(d - 1))
    if value > _MAX_EXACT_INT:
        raise CapacityError(
            f"eigenspace dimension at n={n}, d={d} exceeds exact float64 range; lower n"
        )
    return value


def eigenspace_dims(n_max, d):
    return np.array([eigenspace_dim(n, d) for n in range(n_max + 1)], dtype=np.float64)


def gegenbauer_ratio(n, d, x):
    """C_n^{(d-1)/2}(x) / C_n^{(d-1)/2}(1), vectorized in x; d=1 means cos(n*arccos x)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValidationError("gegenbauer argument outside [-1, 1]")
    x = np.clip(x, -1.0, 1.0)
    if n == 0:
        return np.ones_like(x)
    if d == 1:
        # Chebyshev T_n by the same three-term recurrence shape
        prev, cur = np.ones_like(x), x.copy()
        for _ in range(1, n):
            prev, cur = cur, 2.0 * x * cur - prev
        return cur
    lam = (d - 1) / 2.0
    prev, cur = np.ones_like(x), x.copy()  # ratio recurrence keeps values in [-1, 1]
    for m in range(1, n):
        prev, cur = cur, (2.0 * (m + lam) * x * cur - m * prev) / (m + 2.0 * lam)
    return cur


def gegenbauer_kernel(n, d, cos_theta):
    """Zonal sum over an orthonormal degree-n eigenspace: value at angle theta.

    Equals eigenspace_dim(n,d)/|S_d| times the normalized Gegenbauer ratio;
    at cos_theta = 1 it returns exactly eigenspace_dim(n,d)/|S_d|.
    """
    return (eigenspace_dim(n, d) / sphere_area(d)) * gegenbauer_ratio(n, d, cos_theta)


def bessel_j(theta, z):
    """J_theta(z) for real order theta > -1 and z >= 0, to ~1e-12 absolute.

    Small arguments by the defining power series, larger ones delegated to
    scipy's jv; the two agree well inside the switchover.
    """
    if theta <= -1:
        raise ValidationError(f"Bessel order must exceed -1, got {theta}")
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any(z_arr < 0) or not np.all(np.isfinite(z_arr)):
        raise ValidationError("bessel_j needs finite z >= 0")
    scalar = z_arr.ndim == 0
    z_arr = np.atleast_1d(z_arr)
    out = np.empty_like(z_arr)
    small = z_arr <= max(10.0, 1.5 * abs(theta))
    if np.any(small):
        out[small] = _bessel_series(theta, z_arr[small])
    if np.any(~small):
        out[~small] = sps.jv(theta, z_arr[~small])
    return out[0] if scalar else out


def _bessel_series(theta, z):
    half = z / 2.0
    term = half ** theta / math.gamma(theta + 1.0)
    acc = term.copy()
    h2 = half * half
    for m in range(1, 200):
        term = term * (-h2) / (m * (m + theta))
        acc += term
        if np.all(np.abs(term) < 1e-15 * (1.0 + np.abs(acc))):
            return acc
    raise NumericalError(f"Bessel series failed to converge at order {theta}")


def hermite_poly(q, z):
    """Probabilists' Hermite H_q(z) via H_{q+1} = z H_q - q H_{q-1}."""
    if q < 0:
        raise ValidationError(f"Hermite order must be >= 0, got {q}")
    z = np.asarray(z, dtype=np.float64)
    prev = np.ones_like(z)
    if q == 0:
        return prev if prev.ndim else float(prev)
    cur = z.copy()
    for m in range(1, q):
        prev, cur = cur, z * cur - m * prev
    return cur if cur.ndim else float(cur)


@dataclass(frozen=True)
class HermiteCoeffs:
    """Hermite coefficients of a subordinating function under the N(0,1) weight."""

    q_max: int
    coeffs: np.ndarray  # J_q = E[H_q(Z) J(Z)], q = 0..q_max
    hermite_rank: int | None  # smallest q >= 1 with |J_q| above threshold
    second_moment: float  # E[J(Z)^2]

    def validate(self):
        partial = np.cumsum(self.coeffs ** 2 / sps.factorial(np.arange(self.q_max + 1)))
        if np.any(np.diff(partial) < -1e-12):
            raise ValidationError("Hermite energy partial sums must be nondecreasing")
        if partial[-1] > self.second_moment * (1.0 + 1e-8) + 1e-12:
            raise ValidationError("Hermite energy exceeds E[J(Z)^2]")
        return self


_RANK_TOL = 1e-9


def hermite_coeffs(J, q_max, max_nodes=2048):
    """Project J onto H_0..H_{q_max} by Gauss-Hermite quadrature.

    Node count starts at 2*q_max + 32 and doubles until no coefficient moves
    by more than 1e-10 (and the numerically computed E[J^2] is finite).
    """
    if q_max < 0:
        raise ValidationError("q_max must be >= 0")
    n = 2 * q_max + 32
    prev = None
    while n <= max_nodes:
        nodes, weights = np.polynomial.hermite_e.hermegauss(n)
        w = weights / math.sqrt(2.0 * math.pi)
        jz = np.asarray(J(nodes), dtype=np.float64)
        if not np.all(np.isfinite(jz)):
            raise ValidationError("J(z) must be finite on the quadrature range")
        second = float(np.sum(jz * jz * w))
        coeffs = np.empty(q_max + 1)
        for q in range(q_max + 1):
            coeffs[q] = np.sum(hermite_poly(q, nodes) * jz * w)
        if prev is not None and np.max(np.abs(coeffs - prev)) <= 1e-10:
            rank = None
            above = np.nonzero(np.abs(coeffs[1:]) > _RANK_TOL)[0]
            if above.size:
                rank = int(above[0]) + 1
            return HermiteCoeffs(q_max, coeffs, rank, second).validate()
        prev = coeffs
        n *= 2
    raise NumericalError("Gauss-Hermite projection did not stabilize; is J square-integrable?")
