"""Hot numeric kernels with a numba path and a pure-numpy path.

Both implementations are always importable as ``*_numpy`` / ``*_numba`` so
tests can compare them; the public names dispatch on :data:`BACKEND`.

Set ``EDGESPLIT_DISABLE_NUMBA=1`` before import to force the numpy path.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None

NUMBA_AVAILABLE = numba is not None
BACKEND = (
    "numba"
    if NUMBA_AVAILABLE and os.environ.get("EDGESPLIT_DISABLE_NUMBA", "") not in ("1", "true", "yes")
    else "numpy"
)

# Row order of the array returned by cost_table.
T_EDGE, T_TRANS, T_SERVER, T_TOTAL, E_EDGE, E_TRANS, E_SERVER, CARBON, Q = range(9)
N_COMPONENTS = 9

# Layout of the packed parameter vector (see cost_model.pack_params).
(K_GPU, K_CPU, K_SERVER, P_CPU_BASE, P_GPU_BASE, P_OTHERS, CPU_UTIL_SLOPE,
 GPU_UTIL_SLOPE, GPU_FREQ_SLOPE, CPU_FREQ_SLOPE, P_NET, P_SERVER_BASE,
 SERVER_UTIL_SLOPE, FREQ_REF_GPU, FREQ_REF_CPU, JOULES_PER_KWH) = range(16)
N_PARAMS = 16

# Column order of a context matrix.
BW, SRV_UTIL, GPU_UTIL, GPU_FREQ, CPU_UTIL, CPU_FREQ, CI = range(7)

# Absolute slack applied to quantile levels so that k/(n+1) == 1 - alpha
# is not lost to rounding.
LEVEL_TOL = 1e-9


def cost_table_numpy(ctx, edge_base, server_base, sizes, params, lam):
    """Evaluate every cost component for each (context, partition) pair.

    ``ctx`` is (M, 7); returns an array of shape (9, M, N + 1) indexed by the
    module-level component constants.
    """
    ctx = np.asarray(ctx, dtype=np.float64)
    m = ctx.shape[0]
    n = edge_base.shape[0]
    p = params
    out = np.empty((N_COMPONENTS, m, n + 1))

    edge_scale = (p[FREQ_REF_GPU] / ctx[:, GPU_FREQ]) * (
        1.0 + p[K_GPU] * ctx[:, GPU_UTIL] + p[K_CPU] * ctx[:, CPU_UTIL]
    )
    server_scale = 1.0 + p[K_SERVER] * ctx[:, SRV_UTIL]

    t_e = out[T_EDGE]
    t_e[:, 0] = 0.0
    t_e[:, 1:] = np.cumsum(edge_base[None, :] * edge_scale[:, None], axis=1)

    t_s = out[T_SERVER]
    t_s[:, n] = 0.0
    scaled_s = server_base[None, :] * server_scale[:, None]
    t_s[:, :n] = np.cumsum(scaled_s[:, ::-1], axis=1)[:, ::-1]

    out[T_TRANS] = sizes[None, :] / ctx[:, BW][:, None]
    out[T_TOTAL] = t_e + out[T_TRANS] + t_s

    p_cpu = np.maximum(
        p[P_CPU_BASE] + p[CPU_UTIL_SLOPE] * ctx[:, CPU_UTIL]
        + p[CPU_FREQ_SLOPE] * (ctx[:, CPU_FREQ] - p[FREQ_REF_CPU]), 0.0)
    p_gpu = np.maximum(
        p[P_GPU_BASE] + p[GPU_UTIL_SLOPE] * ctx[:, GPU_UTIL]
        + p[GPU_FREQ_SLOPE] * (ctx[:, GPU_FREQ] - p[FREQ_REF_GPU]), 0.0)
    p_edge = p_cpu + p_gpu + p[P_OTHERS]
    p_server = p[P_SERVER_BASE] + p[SERVER_UTIL_SLOPE] * ctx[:, SRV_UTIL]

    out[E_EDGE] = p_edge[:, None] * t_e
    out[E_TRANS] = p[P_NET] * out[T_TRANS]
    out[E_SERVER] = p_server[:, None] * t_s
    energy = out[E_EDGE] + out[E_TRANS] + out[E_SERVER]
    out[CARBON] = energy / p[JOULES_PER_KWH] * ctx[:, CI][:, None]
    out[Q] = lam[0] * out[T_TOTAL] + lam[1] * out[E_EDGE] + lam[2] * out[CARBON]
    return out


def weighted_quantile_batch_numpy(cum_weights, sorted_scores, test_weights, level):
    """Weighted conformal thresholds for many test points at once.

    ``cum_weights`` is the running sum of raw calibration weights in score
    order; the sentinel mass of test point j is ``test_weights[j]``. Returns
    the smallest score whose normalized cumulative mass reaches ``level``, or
    +inf when only the sentinel gets there.
    """
    total = cum_weights[-1] if cum_weights.shape[0] else 0.0
    need = (level - LEVEL_TOL) * (total + test_weights)
    idx = np.searchsorted(cum_weights, need, side="left")
    padded = np.append(sorted_scores, np.inf)
    return padded[idx]


if NUMBA_AVAILABLE:

    @numba.njit(cache=True)
    def cost_table_numba(ctx, edge_base, server_base, sizes, params, lam):
        m = ctx.shape[0]
        n = edge_base.shape[0]
        p = params
        out = np.empty((N_COMPONENTS, m, n + 1))
        for r in range(m):
            bw = ctx[r, BW]
            edge_scale = (p[FREQ_REF_GPU] / ctx[r, GPU_FREQ]) * (
                1.0 + p[K_GPU] * ctx[r, GPU_UTIL] + p[K_CPU] * ctx[r, CPU_UTIL]
            )
            server_scale = 1.0 + p[K_SERVER] * ctx[r, SRV_UTIL]
            p_cpu = max(p[P_CPU_BASE] + p[CPU_UTIL_SLOPE] * ctx[r, CPU_UTIL]
                        + p[CPU_FREQ_SLOPE] * (ctx[r, CPU_FREQ] - p[FREQ_REF_CPU]), 0.0)
            p_gpu = max(p[P_GPU_BASE] + p[GPU_UTIL_SLOPE] * ctx[r, GPU_UTIL]
                        + p[GPU_FREQ_SLOPE] * (ctx[r, GPU_FREQ] - p[FREQ_REF_GPU]), 0.0)
            p_edge = p_cpu + p_gpu + p[P_OTHERS]
            p_server = p[P_SERVER_BASE] + p[SERVER_UTIL_SLOPE] * ctx[r, SRV_UTIL]
            ci = ctx[r, CI]

            acc = 0.0
            out[T_EDGE, r, 0] = 0.0
            for i in range(n):
                acc += edge_base[i] * edge_scale
                out[T_EDGE, r, i + 1] = acc
            acc = 0.0
            out[T_SERVER, r, n] = 0.0
            for i in range(n - 1, -1, -1):
                acc += server_base[i] * server_scale
                out[T_SERVER, r, i] = acc

            for y in range(n + 1):
                t_e = out[T_EDGE, r, y]
                t_s = out[T_SERVER, r, y]
                t_t = sizes[y] / bw
                t_total = t_e + t_t + t_s
                e_e = p_edge * t_e
                e_t = p[P_NET] * t_t
                e_s = p_server * t_s
                carbon = (e_e + e_t + e_s) / p[JOULES_PER_KWH] * ci
                out[T_TRANS, r, y] = t_t
                out[T_TOTAL, r, y] = t_total
                out[E_EDGE, r, y] = e_e
                out[E_TRANS, r, y] = e_t
                out[E_SERVER, r, y] = e_s
                out[CARBON, r, y] = carbon
                out[Q, r, y] = lam[0] * t_total + lam[1] * e_e + lam[2] * carbon
        return out

    @numba.njit(cache=True)
    def weighted_quantile_batch_numba(cum_weights, sorted_scores, test_weights, level):
        n = cum_weights.shape[0]
        total = cum_weights[n - 1] if n > 0 else 0.0
        out = np.empty(test_weights.shape[0])
        for j in range(test_weights.shape[0]):
            need = (level - LEVEL_TOL) * (total + test_weights[j])
            lo, hi = 0, n
            while lo < hi:
                mid = (lo + hi) // 2
                if cum_weights[mid] < need:
                    lo = mid + 1
                else:
                    hi = mid
            out[j] = sorted_scores[lo] if lo < n else np.inf
        return out

else:  # pragma: no cover
    cost_table_numba = None
    weighted_quantile_batch_numba = None


def cost_table(ctx, edge_base, server_base, sizes, params, lam):
    ctx = np.ascontiguousarray(ctx, dtype=np.float64)
    if BACKEND == "numba":
        return cost_table_numba(ctx, edge_base, server_base, sizes, params, lam)
    return cost_table_numpy(ctx, edge_base, server_base, sizes, params, lam)


def weighted_quantile_batch(cum_weights, sorted_scores, test_weights, level):
    cum_weights = np.ascontiguousarray(cum_weights, dtype=np.float64)
    sorted_scores = np.ascontiguousarray(sorted_scores, dtype=np.float64)
    test_weights = np.ascontiguousarray(test_weights, dtype=np.float64)
    if BACKEND == "numba":
        return weighted_quantile_batch_numba(cum_weights, sorted_scores, test_weights, float(level))
    return weighted_quantile_batch_numpy(cum_weights, sorted_scores, test_weights, float(level))
