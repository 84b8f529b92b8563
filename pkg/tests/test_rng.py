"""Counter-based stream: known-answer vectors, path equality, stream layout."""
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from lrdlimits import rng

# Published Philox4x32-10 known-answer vectors: counter words, key words, output.
KAT = [
    ((0x00000000, 0x00000000, 0x00000000, 0x00000000),
     (0x00000000, 0x00000000),
     (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF, 0xFFFFFFFF, 0xFFFFFFFF, 0xFFFFFFFF),
     (0xFFFFFFFF, 0xFFFFFFFF),
     (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
     (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,want", KAT)
def test_philox_known_answers(ctr, key, want):
    assert rng.philox4_ref(ctr, key) == want


def test_numpy_blocks_match_reference():
    seed = 0x0123456789ABCDEF
    rep = (37 << 32) | 11
    raw = rng._raw_blocks_np(seed, rng.DOM_TEST, rep, 5, 9)
    assert raw.shape == (4, 4)
    k0, k1 = seed & 0xFFFFFFFF, seed >> 32
    r0, r1 = rep & 0xFFFFFFFF, rep >> 32
    for i, block in enumerate(range(5, 9)):
        want = rng.philox4_ref((block, r0, r1, rng.DOM_TEST), (k0, k1))
        assert tuple(int(x) for x in raw[i]) == want


def test_offset_slicing_is_stream_position():
    z = rng.normals_np(9, rng.DOM_TEST, 3, 64)
    for off in (0, 1, 3, 4, 17):
        part = rng.normals_np(9, rng.DOM_TEST, 3, 10, offset=off)
        assert np.array_equal(part, z[off:off + 10])


def test_batch_rows_are_single_replicate_streams():
    reps = np.array([0, 5, 2 ** 40 + 3], dtype=np.uint64)
    batch = rng.normals_batch(11, rng.DOM_ETA, reps, 23)
    for i, r in enumerate(reps):
        single = rng.normals_np(11, rng.DOM_ETA, int(r), 23)
        np.testing.assert_allclose(batch[i], single, rtol=0.0, atol=1e-12)


def test_domains_and_replicates_decorrelate():
    a = rng.normals_np(1, rng.DOM_ETA, 0, 32)
    b = rng.normals_np(1, rng.DOM_MC_CUM, 0, 32)
    c = rng.normals_np(1, rng.DOM_ETA, 1, 32)
    d = rng.normals_np(2, rng.DOM_ETA, 0, 32)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


def test_uniforms_land_in_half_open_unit_interval():
    u = rng.uniforms_batch(5, rng.DOM_RDI, np.array([0, 1], dtype=np.uint64), 4096)
    assert np.all(u > 0.0)
    assert np.all(u <= 1.0)


def test_moments_match_standard_normal():
    z = rng.normals_batch(42, rng.DOM_TEST, np.arange(64, dtype=np.uint64), 4096)
    flat = z.ravel()
    n = flat.size
    assert abs(flat.mean()) < 4.0 / math.sqrt(n)
    assert abs(flat.var() - 1.0) < 4.0 * math.sqrt(2.0 / n)
    assert abs(np.mean(flat ** 3)) < 4.0 * math.sqrt(15.0 / n)


def test_numba_and_numpy_paths_agree():
    reps = np.array([0, 1, 9], dtype=np.uint64)
    fast_n = rng.normals_batch(123, rng.DOM_CONVEX, reps, 513)
    slow_n = rng.normals_batch_np(123, rng.DOM_CONVEX, reps, 513)
    np.testing.assert_allclose(fast_n, slow_n, rtol=0.0, atol=1e-12)
    fast_u = rng.uniforms_batch(123, rng.DOM_CONVEX, reps, 513)
    slow_u = rng.uniforms_batch_np(123, rng.DOM_CONVEX, reps, 513)
    np.testing.assert_array_equal(fast_u, slow_u)


@pytest.mark.slow
def test_disabled_numba_subprocess_reproduces_stream():
    """The env flag forces the numpy path; the stream must not move."""
    code = (
        "import numpy as np\n"
        "from lrdlimits import rng\n"
        "assert not rng.HAS_NUMBA if __import__('os').environ.get("
        "'LRDLIMITS_DISABLE_NUMBA') else True\n"
        "z = rng.normals_batch(77, rng.DOM_TEST, np.array([4], dtype=np.uint64), 40)\n"
        "print(repr(z[0].tolist()))\n"
    )
    here = rng.normals_batch(77, rng.DOM_TEST, np.array([4], dtype=np.uint64), 40)
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={**os.environ, "LRDLIMITS_DISABLE_NUMBA": "1"},
        capture_output=True, text=True, check=True)
    there = np.array(eval(out.stdout.strip()))  # list literal from our own code
    np.testing.assert_allclose(here[0], there, rtol=0.0, atol=1e-12)
