"""Counter-based random streams (Philox4x32-10 + Box-Muller).

Every normal/uniform this package draws is a pure function of
(seed, domain, replicate, position): replicates and positions can be
generated in any order, on any thread count, with identical results.
The uint32 stream is bit-identical between the numba and numpy paths;
the float outputs match to libm rounding (<= 1e-12 relative).

Counter layout: c0 = position block (4 outputs per block), c1/c2 = replicate
lo/hi words, c3 = domain tag. Key = seed lo/hi words. Domain tags keep
independent consumers (KL coefficients, Monte Carlo point sets, spectral
noise) on provably disjoint streams under one experiment seed.
"""
import math

import numpy as np

from ._accel import HAS_NUMBA, njit, prange

_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = 0xFFFFFFFF
_TWO32 = 4294967296.0

DOM_ETA = 0  # KL / chi-squared series coefficients eta_{n,j,k}
DOM_MC_CUM = 1  # circular-product cumulant Monte Carlo
DOM_CONVEX = 2  # convex-mode spectral noise
DOM_RDI = 3  # Riesz double-integral Monte Carlo
DOM_TEST = 15


def philox4_ref(ctr, key):
    """Pure-Python reference (exact integer arithmetic), for known-answer tests."""
    c0, c1, c2, c3 = (int(c) & _MASK for c in ctr)
    k0, k1 = (int(k) & _MASK for k in key)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> 32) ^ c1 ^ k0, p1 & _MASK, (p0 >> 32) ^ c3 ^ k1, p0 & _MASK)
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def _split64(v):
    v = int(v) & 0xFFFFFFFFFFFFFFFF
    return v & _MASK, v >> 32


# ---------------------------------------------------------------- numpy path

def _philox4_np(c0, c1, c2, c3, k0, k1):
    """Vectorized rounds; all inputs uint64 arrays/scalars already masked."""
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (p1 >> 32) ^ c1 ^ k0, p1 & _MASK, (p0 >> 32) ^ c3 ^ k1, p0 & _MASK
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def _raw_blocks_np(seed, domain, replicate, block_lo, block_hi):
    """uint32 outputs for blocks [block_lo, block_hi), shape (nblocks, 4)."""
    k0, k1 = _split64(seed)
    r0, r1 = _split64(replicate)
    c0 = np.arange(block_lo, block_hi, dtype=np.uint64)
    x0, x1, x2, x3 = _philox4_np(
        c0,
        np.uint64(r0),
        np.uint64(r1),
        np.uint64(int(domain) & _MASK),
        np.uint64(k0),
        np.uint64(k1),
    )
    return np.stack([x0, x1, x2, x3], axis=1)


def _box_muller_np(raw):
    """(nblocks, 4) uint32 -> (nblocks*4,) standard normals."""
    u1 = (raw[:, 0::2].astype(np.float64) + 1.0) / _TWO32
    u2 = (raw[:, 1::2].astype(np.float64) + 0.5) / _TWO32
    r = np.sqrt(-2.0 * np.log(u1))
    ang = (2.0 * np.pi) * u2
    out = np.empty(raw.shape, dtype=np.float64)
    out[:, 0::2] = r * np.cos(ang)
    out[:, 1::2] = r * np.sin(ang)
    return out.reshape(-1)


def normals_np(seed, domain, replicate, count, offset=0):
    lo, hi = offset >> 2, (offset + count + 3) >> 2
    z = _box_muller_np(_raw_blocks_np(seed, domain, replicate, lo, hi))
    start = offset - (lo << 2)
    return z[start:start + count]


def uniforms_np(seed, domain, replicate, count, offset=0):
    """Uniforms on (0, 1], 4 per counter block."""
    lo, hi = offset >> 2, (offset + count + 3) >> 2
    raw = _raw_blocks_np(seed, domain, replicate, lo, hi)
    u = (raw.astype(np.float64).reshape(-1) + 1.0) / _TWO32
    start = offset - (lo << 2)
    return u[start:start + count]


def normals_batch_np(seed, domain, replicates, count):
    out = np.empty((len(replicates), count), dtype=np.float64)
    for i, rep in enumerate(replicates):
        out[i] = normals_np(seed, domain, rep, count)
    return out


def uniforms_batch_np(seed, domain, replicates, count):
    out = np.empty((len(replicates), count), dtype=np.float64)
    for i, rep in enumerate(replicates):
        out[i] = uniforms_np(seed, domain, rep, count)
    return out


# ---------------------------------------------------------------- numba path
# All constants pre-cast to uint64: numba promotes mixed int64/uint64
# arithmetic to float64, which would corrupt the stream.

_M0U = np.uint64(_M0)
_M1U = np.uint64(_M1)
_W0U = np.uint64(_W0)
_W1U = np.uint64(_W1)
_MASKU = np.uint64(_MASK)
_SH32 = np.uint64(32)


@njit(cache=True, inline="always")
def _philox4_nb(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = _M0U * c0
        p1 = _M1U * c2
        n0 = ((p1 >> _SH32) ^ c1 ^ k0) & _MASKU
        n1 = p1 & _MASKU
        n2 = ((p0 >> _SH32) ^ c3 ^ k1) & _MASKU
        n3 = p0 & _MASKU
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + _W0U) & _MASKU
        k1 = (k1 + _W1U) & _MASKU
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def _normals4_nb(block, r0, r1, dom, k0, k1):
    x0, x1, x2, x3 = _philox4_nb(np.uint64(block), r0, r1, dom, k0, k1)
    u1 = (np.float64(x0) + 1.0) / _TWO32
    u2 = (np.float64(x1) + 0.5) / _TWO32
    ra = math.sqrt(-2.0 * math.log(u1))
    aa = 2.0 * math.pi * u2
    u3 = (np.float64(x2) + 1.0) / _TWO32
    u4 = (np.float64(x3) + 0.5) / _TWO32
    rb = math.sqrt(-2.0 * math.log(u3))
    ab = 2.0 * math.pi * u4
    return ra * math.cos(aa), ra * math.sin(aa), rb * math.cos(ab), rb * math.sin(ab)


@njit(cache=True, parallel=True)
def _normals_batch_nb(reps, count, dom, k0, k1, out):
    nblocks = (count + 3) >> 2
    for i in prange(len(reps)):
        rep = reps[i]
        r0 = rep & _MASKU
        r1 = rep >> _SH32
        for b in range(nblocks):
            z0, z1, z2, z3 = _normals4_nb(b, r0, r1, dom, k0, k1)
            j = b << 2
            out[i, j] = z0
            if j + 1 < count:
                out[i, j + 1] = z1
            if j + 2 < count:
                out[i, j + 2] = z2
            if j + 3 < count:
                out[i, j + 3] = z3


@njit(cache=True, parallel=True)
def _uniforms_batch_nb(reps, count, dom, k0, k1, out):
    nblocks = (count + 3) >> 2
    for i in prange(len(reps)):
        rep = reps[i]
        r0 = rep & _MASKU
        r1 = rep >> _SH32
        for b in range(nblocks):
            x0, x1, x2, x3 = _philox4_nb(np.uint64(b), r0, r1, dom, k0, k1)
            j = b << 2
            out[i, j] = (np.float64(x0) + 1.0) / _TWO32
            if j + 1 < count:
                out[i, j + 1] = (np.float64(x1) + 1.0) / _TWO32
            if j + 2 < count:
                out[i, j + 2] = (np.float64(x2) + 1.0) / _TWO32
            if j + 3 < count:
                out[i, j + 3] = (np.float64(x3) + 1.0) / _TWO32


def _key_words(seed, domain):
    k0, k1 = _split64(seed)
    return np.uint64(k0), np.uint64(k1), np.uint64(int(domain) & _MASK)


def normals_batch(seed, domain, replicates, count):
    """(len(replicates), count) i.i.d. N(0,1), replicate-indexed streams."""
    reps = np.asarray(replicates, dtype=np.uint64)
    if not HAS_NUMBA:
        return normals_batch_np(seed, domain, reps, count)
    k0, k1, dom = _key_words(seed, domain)
    padded = ((count + 3) >> 2) << 2
    out = np.empty((len(reps), padded), dtype=np.float64)
    _normals_batch_nb(reps, padded, dom, k0, k1, out)
    return out[:, :count]


def uniforms_batch(seed, domain, replicates, count):
    reps = np.asarray(replicates, dtype=np.uint64)
    if not HAS_NUMBA:
        return uniforms_batch_np(seed, domain, reps, count)
    k0, k1, dom = _key_words(seed, domain)
    padded = ((count + 3) >> 2) << 2
    out = np.empty((len(reps), padded), dtype=np.float64)
    _uniforms_batch_nb(reps, padded, dom, k0, k1, out)
    return out[:, :count]


def normals(seed, domain, replicate, count, offset=0):
    return normals_np(seed, domain, replicate, count, offset)
