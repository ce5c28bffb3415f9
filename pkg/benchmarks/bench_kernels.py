"""Time the numba and numpy kernel backends on identical inputs.

    python3 benchmarks/bench_kernels.py [--contexts 20000] [--repeat 5]

Checks that both backends agree before reporting timings.
"""

import argparse
import time

import numpy as np

from edgesplit import _kernels
from edgesplit.cost_model import CostModel, pack_params
from edgesplit.profiles import resnet18_blocks
from edgesplit.simulator import DEFAULT_BOX, sample_contexts_uniform


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--contexts", type=int, default=20000)
    parser.add_argument("--calibration", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(args.seed)
    cm = CostModel(resnet18_blocks())
    edge, server, sizes = cm.dnn.arrays()
    params = pack_params(cm.power, cm.contention)
    lam = cm.weights.as_array()
    ctx = sample_contexts_uniform(DEFAULT_BOX, args.contexts, rng)

    scores = np.sort(rng.exponential(size=args.calibration))
    w = rng.uniform(0.1, 2.0, size=args.calibration)
    cum = np.cumsum(w)
    w_test = rng.uniform(0.1, 2.0, size=args.contexts)

    cases = {
        "cost_table": (
            lambda: _kernels.cost_table_numpy(ctx, edge, server, sizes, params, lam),
            lambda: _kernels.cost_table_numba(ctx, edge, server, sizes, params, lam),
        ),
        "weighted_quantile_batch": (
            lambda: _kernels.weighted_quantile_batch_numpy(cum, scores, w_test, 0.9),
            lambda: _kernels.weighted_quantile_batch_numba(cum, scores, w_test, 0.9),
        ),
    }
    print(f"{'kernel':<26}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, (np_fn, nb_fn) in cases.items():
        a, b = np_fn(), nb_fn()  # also triggers JIT compilation
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=0.0)
        t_np, t_nb = best_of(np_fn, args.repeat), best_of(nb_fn, args.repeat)
        print(f"{name:<26}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.2f}x")


if __name__ == "__main__":
    main()
