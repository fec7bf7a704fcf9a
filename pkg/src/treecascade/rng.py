"""Counter-based random number supply for cascade simulations.

Every stochastic draw used by the simulation engine is addressed by a
(seed, flat vertex index, step index) triple and produced by the
Philox-4x64-10 block cipher.  A draw depends only on its address, never on
batching, thread count, or the depth of the tree a particular run uses.
Consequences that the rest of the package relies on:

* identical addresses give identical draws, distinct addresses give
  independent draws,
* a depth n+1 simulation reuses the depth-n draws on shared vertices, so
  refinements of the same seed are coupled realizations,
* replica parallelism cannot change results, whatever the scheduler does.

The cipher is implemented twice, as a numba kernel (fast path, scalar key)
and in vectorized numpy (fallback, also supports per-replica key arrays).
Both are checked against ``numpy.random.Philox`` raw output in the tests.
"""

import os

import numpy as np

try:
    from numba import njit as _njit

    _HAVE_NUMBA = os.environ.get("CASCADE_NO_NUMBA", "") == ""
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

# Philox-4x64 round multipliers and Weyl key increments.
_M0 = 0xD2E7470EE14C6C93
_M1 = 0xCA5A826395121157
_W0 = 0x9E3779B97F4A7C15
_W1 = 0xBB67AE8584CAA73B
_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1
_ROUNDS = 10

# Key-lane tags keeping unrelated draw families in disjoint counter spaces.
PURPOSE_INCREMENT = 0
PURPOSE_DERIVE = 1
PURPOSE_STREAM = 2


def philox4x64(counter, key):
    """Reference Philox-4x64-10 block, plain python integers.

    Parameters
    ----------
    counter : sequence of 4 ints
        128x2-bit counter words, each taken modulo 2**64.
    key : sequence of 2 ints
        Key words, each taken modulo 2**64.

    Returns
    -------
    tuple of 4 ints
        The cipher output block.
    """
    x0, x1, x2, x3 = (int(c) & _MASK64 for c in counter)
    k0, k1 = (int(k) & _MASK64 for k in key)
    for _ in range(_ROUNDS):
        p0 = _M0 * x0
        p1 = _M1 * x2
        x0, x1, x2, x3 = (
            ((p1 >> 64) ^ x1 ^ k0) & _MASK64,
            p1 & _MASK64,
            ((p0 >> 64) ^ x3 ^ k1) & _MASK64,
            p0 & _MASK64,
        )
        k0 = (k0 + _W0) & _MASK64
        k1 = (k1 + _W1) & _MASK64
    return x0, x1, x2, x3


def _mulhi(mh, ml, x):
    # High 64 bits of (mh << 32 | ml) * x via 32-bit partial products.
    xl = x & np.uint64(_MASK32)
    xh = x >> np.uint64(32)
    t = ml * xl
    mid = mh * xl + (t >> np.uint64(32))
    mid2 = ml * xh + (mid & np.uint64(_MASK32))
    return mh * xh + (mid >> np.uint64(32)) + (mid2 >> np.uint64(32))


def philox_blocks_numpy(c0, c1, c2, c3, k0, k1):
    """Vectorized Philox-4x64-10; arguments broadcast, keys may be arrays.

    Returns an array of shape ``broadcast(c0, c1, c2, c3, k0, k1) + (4,)``
    and dtype uint64.
    """
    args = [np.asarray(a, dtype=np.uint64) for a in (c0, c1, c2, c3)]
    keys_are_arrays = any(np.ndim(k) > 0 for k in (k0, k1))
    if keys_are_arrays:
        args += [np.asarray(k, dtype=np.uint64) for k in (k0, k1)]
        x0, x1, x2, x3, kk0, kk1 = np.broadcast_arrays(*args)
        kk0 = kk0.copy()
        kk1 = kk1.copy()
    else:
        x0, x1, x2, x3 = np.broadcast_arrays(*args)
    x0, x1, x2, x3 = (np.array(x, dtype=np.uint64) for x in (x0, x1, x2, x3))

    m0h, m0l = np.uint64(_M0 >> 32), np.uint64(_M0 & _MASK32)
    m1h, m1l = np.uint64(_M1 >> 32), np.uint64(_M1 & _MASK32)
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    for r in range(_ROUNDS):
        if keys_are_arrays:
            rk0, rk1 = kk0, kk1
        else:
            rk0 = np.uint64((int(k0) + r * _W0) & _MASK64)
            rk1 = np.uint64((int(k1) + r * _W1) & _MASK64)
        lo0 = m0 * x0
        hi0 = _mulhi(m0h, m0l, x0)
        lo1 = m1 * x2
        hi1 = _mulhi(m1h, m1l, x2)
        x0 = hi1 ^ x1 ^ rk0
        x1 = lo1
        x2 = hi0 ^ x3 ^ rk1
        x3 = lo0
        if keys_are_arrays:
            kk0 = kk0 + np.uint64(_W0)
            kk1 = kk1 + np.uint64(_W1)
    return np.stack([x0, x1, x2, x3], axis=-1)


if _HAVE_NUMBA:

    @_njit(
        "void(uint64, uint64, uint64, uint64, uint64, uint64, uint64[:, ::1])",
        nogil=True,
        cache=True,
    )
    def _philox_fill(c0_start, c1, c2, c3, k0, k1, out):  # pragma: no cover
        m0 = np.uint64(_M0)
        m1 = np.uint64(_M1)
        m0h = np.uint64(_M0 >> 32)
        m0l = np.uint64(_M0 & _MASK32)
        m1h = np.uint64(_M1 >> 32)
        m1l = np.uint64(_M1 & _MASK32)
        w0 = np.uint64(_W0)
        w1 = np.uint64(_W1)
        mask32 = np.uint64(_MASK32)
        s32 = np.uint64(32)
        n = out.shape[0]
        for i in range(n):
            x0 = c0_start + np.uint64(i)
            x1 = c1
            x2 = c2
            x3 = c3
            kk0 = k0
            kk1 = k1
            for _ in range(_ROUNDS):
                lo0 = m0 * x0
                xl = x0 & mask32
                xh = x0 >> s32
                t = m0l * xl
                mid = m0h * xl + (t >> s32)
                mid2 = m0l * xh + (mid & mask32)
                hi0 = m0h * xh + (mid >> s32) + (mid2 >> s32)
                lo1 = m1 * x2
                xl = x2 & mask32
                xh = x2 >> s32
                t = m1l * xl
                mid = m1h * xl + (t >> s32)
                mid2 = m1l * xh + (mid & mask32)
                hi1 = m1h * xh + (mid >> s32) + (mid2 >> s32)
                x0 = hi1 ^ x1 ^ kk0
                x1 = lo1
                x2 = hi0 ^ x3 ^ kk1
                x3 = lo0
                kk0 = kk0 + w0
                kk1 = kk1 + w1
            out[i, 0] = x0
            out[i, 1] = x1
            out[i, 2] = x2
            out[i, 3] = x3


def _block_range(c0_start, n_blocks, c2, c3, k0, k1):
    # Contiguous counter range with scalar key; numba when available.
    if _HAVE_NUMBA:
        out = np.empty((n_blocks, 4), dtype=np.uint64)
        _philox_fill(
            np.uint64(c0_start),
            np.uint64(0),
            np.uint64(c2),
            np.uint64(c3),
            np.uint64(k0),
            np.uint64(k1),
            out,
        )
        return out
    c0 = c0_start + np.arange(n_blocks, dtype=np.uint64)
    return philox_blocks_numpy(c0, 0, c2, c3, k0, k1)


def words_to_uniforms(words):
    """Map uint64 cipher words to float64 uniforms strictly inside (0, 1)."""
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def vertex_uniforms(seed, step_index, first, count, lanes):
    """Uniform draws addressed by flat vertex index.

    Item ``f`` (``first <= f < first + count``) receives ``lanes``
    consecutive words of the keyed Philox stream, starting at word
    ``f * lanes``.  The mapping is independent of ``first``/``count``
    slicing, so bulk generation and single-vertex lookups agree.

    Parameters
    ----------
    seed : int
        Key word; use a per-path seed.
    step_index : int
        Time-grid step the draw belongs to (counter word).
    first, count : int
        Flat vertex index range to produce.
    lanes : int
        Uniforms per vertex; must divide 4.

    Returns
    -------
    ndarray, shape (count, lanes)
    """
    if lanes not in (1, 2, 4):
        raise ValueError("lanes must be 1, 2, or 4")
    if count == 0:
        return np.empty((0, lanes), dtype=np.float64)
    w_lo = first * lanes
    w_hi = (first + count) * lanes
    b_lo = w_lo // 4
    b_hi = -(-w_hi // 4)
    words = _block_range(b_lo, b_hi - b_lo, step_index, PURPOSE_INCREMENT, seed, 0)
    flat = words.reshape(-1)[w_lo - 4 * b_lo : w_hi - 4 * b_lo]
    return words_to_uniforms(flat).reshape(count, lanes)


def vertex_uniforms_multi(seeds, step_index, first, count, lanes):
    """Like ``vertex_uniforms`` for a batch of seeds; shape (len(seeds), count, lanes)."""
    if lanes not in (1, 2, 4):
        raise ValueError("lanes must be 1, 2, or 4")
    seeds = np.asarray(seeds, dtype=np.uint64)
    if count == 0:
        return np.empty((len(seeds), 0, lanes), dtype=np.float64)
    w_lo = first * lanes
    w_hi = (first + count) * lanes
    b_lo = w_lo // 4
    b_hi = -(-w_hi // 4)
    c0 = b_lo + np.arange(b_hi - b_lo, dtype=np.uint64)
    words = philox_blocks_numpy(
        c0[None, :], 0, step_index, PURPOSE_INCREMENT, seeds[:, None], 0
    )
    flat = words.reshape(len(seeds), -1)[:, w_lo - 4 * b_lo : w_hi - 4 * b_lo]
    return words_to_uniforms(flat).reshape(len(seeds), count, lanes)


def derive_seed(seed, *indices):
    """Deterministic child seed from a parent seed and an index path.

    Consistent with ``derive_seeds``: ``derive_seed(s, i) == derive_seeds(s, n)[i]``.
    """
    s = int(seed) & _MASK64
    for idx in indices:
        idx = int(idx)
        s = philox4x64((idx >> 2, 0, 0, PURPOSE_DERIVE), (s, 0))[idx & 3]
    return s


def derive_seeds(seed, count):
    """Vector of ``count`` independent child seeds of ``seed``."""
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    n_blocks = -(-count // 4)
    words = philox_blocks_numpy(
        np.arange(n_blocks, dtype=np.uint64), 0, 0, PURPOSE_DERIVE, seed, 0
    )
    return words.reshape(-1)[:count].copy()


def spawn_generator(seed, *indices):
    """Seeded ``numpy.random.Generator`` for auxiliary (non-keyed) sampling."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *indices, 3)))
