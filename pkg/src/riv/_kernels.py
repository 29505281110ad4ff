"""Grid-scan kernels.

Two hot loops dominate the run time: counting thresholded deviations over a
``(sample, instrument, grid point)`` cube for the sampling method, and the
max-statistic for the bootstrap threshold. Each has a numba version and a
plain numpy version with identical results.

Set ``RIV_DISABLE_NUMBA=1`` to force the numpy path. ``RIV_THREADS`` caps the
numba thread pool.
"""

import os
import warnings

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # an old system TBB only means numba falls back to another threading layer
    warnings.filterwarnings("ignore", message="The TBB threading layer", category=Warning)
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_CHUNK_ELEMS = 4_000_000


def numba_enabled():
    return HAVE_NUMBA and os.environ.get("RIV_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def set_threads(n=None):
    """Cap numba's thread pool; ``None`` reads ``RIV_THREADS``."""
    if not HAVE_NUMBA:
        return
    if n is None:
        env = os.environ.get("RIV_THREADS")
        if not env:
            return
        n = int(env)
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# numpy ---------------------------------------------------------------------


def _scan_numpy(G, g, grid, thr, lam):
    M, v = G.shape
    lo = np.full(M, -1, dtype=np.int64)
    hi = np.full(M, -1, dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // max(1, v * grid.shape[0]))
    cut = lam * thr
    for start in range(0, M, step):
        stop = min(M, start + step)
        dev = G[start:stop, :, None] - grid[None, None, :] * g[start:stop, :, None]
        ad = np.abs(dev)
        count = ((ad >= cut[None, :, :]) & (ad > 0)).sum(axis=1)
        ok = 2 * count < v
        any_ok = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        last = grid.shape[0] - 1 - np.argmax(ok[:, ::-1], axis=1)
        lo[start:stop] = np.where(any_ok, first, -1)
        hi[start:stop] = np.where(any_ok, last, -1)
    return lo, hi


def _counts_numpy(G, g, grid, thr, lam):
    ad = np.abs(G[:, None] - grid[None, :] * g[:, None])
    return ((ad >= lam * thr) & (ad > 0)).sum(axis=0)


def _bootstrap_max_numpy(ZG, Zg, grid, sd):
    K, v = ZG.shape
    out = np.empty(K)
    step = max(1, _CHUNK_ELEMS // max(1, v * grid.shape[0]))
    for start in range(0, K, step):
        stop = min(K, start + step)
        dev = np.abs(ZG[start:stop, :, None] - grid[None, None, :] * Zg[start:stop, :, None])
        out[start:stop] = (dev / sd[None, :, :]).max(axis=(1, 2))
    return out


# numba ---------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _scan_numba(G, g, grid, thr, lam):
        M, v = G.shape
        B = grid.shape[0]
        lo = np.full(M, -1, dtype=np.int64)
        hi = np.full(M, -1, dtype=np.int64)
        for m in prange(M):
            for b in range(B):
                beta = grid[b]
                count = 0
                for j in range(v):
                    ad = abs(G[m, j] - beta * g[m, j])
                    if ad >= lam * thr[j, b] and ad > 0:
                        count += 1
                if 2 * count < v:
                    if lo[m] < 0:
                        lo[m] = b
                    hi[m] = b
        return lo, hi

    @njit(cache=True)
    def _counts_numba(G, g, grid, thr, lam):
        v = G.shape[0]
        B = grid.shape[0]
        out = np.zeros(B, dtype=np.int64)
        for b in range(B):
            beta = grid[b]
            for j in range(v):
                ad = abs(G[j] - beta * g[j])
                if ad >= lam * thr[j, b] and ad > 0:
                    out[b] += 1
        return out

    @njit(cache=True, parallel=True)
    def _bootstrap_max_numba(ZG, Zg, grid, sd):
        K, v = ZG.shape
        B = grid.shape[0]
        out = np.empty(K)
        for k in prange(K):
            best = -np.inf
            for j in range(v):
                for b in range(B):
                    t = abs(ZG[k, j] - grid[b] * Zg[k, j]) / sd[j, b]
                    if t > best:
                        best = t
            out[k] = best
        return out


def _prep(*arrays):
    return [np.ascontiguousarray(a, dtype=np.float64) for a in arrays]


def scan_intervals(G, g, grid, thr, lam, backend=None):
    """First and last passing grid index for each row of ``(G, g)``.

    A grid point ``b`` passes for row ``m`` when fewer than half of the ``v``
    instruments keep a non-zero deviation ``|G[m, j] - grid[b] g[m, j]| >= lam * thr[j, b]``.
    Rows with no passing point get ``-1`` in both outputs.
    """
    G, g, grid, thr = _prep(G, g, grid, thr)
    if _use_numba(backend):
        return _scan_numba(G, g, grid, thr, float(lam))
    return _scan_numpy(G, g, grid, thr, float(lam))


def sparsity_counts(G, g, grid, thr, lam=1.0, backend=None):
    """Number of instruments whose deviation survives thresholding, per grid point."""
    G, g, grid, thr = _prep(G, g, grid, thr)
    if _use_numba(backend):
        return _counts_numba(G, g, grid, thr, float(lam))
    return _counts_numpy(G, g, grid, thr, float(lam))


def bootstrap_max(ZG, Zg, grid, sd, backend=None):
    """``max_{j, b} |ZG[k, j] - grid[b] Zg[k, j]| / sd[j, b]`` for every draw ``k``."""
    ZG, Zg, grid, sd = _prep(ZG, Zg, grid, sd)
    if _use_numba(backend):
        return _bootstrap_max_numba(ZG, Zg, grid, sd)
    return _bootstrap_max_numpy(ZG, Zg, grid, sd)


def _use_numba(backend):
    if backend is None:
        return numba_enabled()
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")
