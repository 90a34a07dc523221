"""Compare the numba and numpy dynamic-programming kernels.

    python benchmarks/bench_kernels.py [--sizes 50 200 800] [--actions 4] [--repeat 3]

For each size a random dense MDP is solved by value iteration and a random
policy chain by iterative evaluation with both backends; the script prints
best-of-``repeat`` wall times, the speedup and the largest value difference.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bampf_lab import _kernels


def random_mdp(n_states: int, n_actions: int, rng: np.random.Generator):
    T = rng.random((n_states, n_actions, n_states)) ** 8
    T /= T.sum(axis=2, keepdims=True)
    R = rng.uniform(-1.0, 1.0, (n_states, n_actions))
    mask = np.ones((n_states, n_actions), dtype=bool)
    return T, R, mask


def best_time(fn, repeat: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 200, 800])
    ap.add_argument("--actions", type=int, default=4)
    ap.add_argument("--gamma", type=float, default=0.95)
    ap.add_argument("--tol", type=float, default=1e-9)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba unavailable (or BAMPF_LAB_NO_JIT set); only the numpy kernels can run")
        return
    rng = np.random.default_rng(args.seed)
    max_iter = 100_000
    # compile outside the timed region
    T, R, mask = random_mdp(4, 2, rng)
    _kernels.value_iteration_numba(T, R, mask, args.gamma, args.tol, max_iter)
    _kernels.policy_evaluation_numba(T[:, 0], R[:, 0].copy(), args.gamma, args.tol, max_iter)

    print(f"{'kernel':<18}{'S':>6}{'numpy s':>12}{'numba s':>12}{'speedup':>10}{'max |dV|':>12}{'sweeps':>8}")
    for n in args.sizes:
        T, R, mask = random_mdp(n, args.actions, rng)
        P = np.ascontiguousarray(T[:, 0])
        r = np.ascontiguousarray(R[:, 0])
        cases = [
            (
                "value_iteration",
                lambda: _kernels.value_iteration_numpy(T, R, mask, args.gamma, args.tol, max_iter),
                lambda: _kernels.value_iteration_numba(T, R, mask, args.gamma, args.tol, max_iter),
            ),
            (
                "policy_evaluation",
                lambda: _kernels.policy_evaluation_numpy(P, r, args.gamma, args.tol, max_iter),
                lambda: _kernels.policy_evaluation_numba(P, r, args.gamma, args.tol, max_iter),
            ),
        ]
        for name, np_fn, nb_fn in cases:
            t_np, (v_np, it_np) = best_time(np_fn, args.repeat)
            t_nb, (v_nb, it_nb) = best_time(nb_fn, args.repeat)
            diff = float(np.max(np.abs(v_np - v_nb)))
            print(f"{name:<18}{n:>6}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.2f}{diff:>12.2e}{it_nb:>8}")


if __name__ == "__main__":
    main()
