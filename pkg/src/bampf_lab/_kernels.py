"""Dynamic-programming inner loops.

Each kernel has a numba ``@njit`` version and a pure-numpy version with the
same signature. The numba path is used unless ``BAMPF_LAB_NO_JIT`` is set to a
truthy value or numba cannot be imported; ``BACKEND`` records the choice.
The dispatchers fall back to numpy above ``NUMBA_MAX_STATES`` states, where
dense matrix products win.
Both paths implement the same stopping rule, so results agree to within the
requested tolerance (see ``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("BAMPF_LAB_NO_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:  # pragma: no cover - exercised implicitly by the import
    if _DISABLE:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

# Above this many states the BLAS-backed numpy sweeps beat the scalar loops.
NUMBA_MAX_STATES = 128


def stopping_threshold(gamma: float, tol: float) -> float:
    """Sup-norm change between sweeps that guarantees ``tol`` accuracy."""
    if gamma <= 0.0:
        return np.inf
    return tol * (1.0 - gamma) / gamma


# --- numpy ------------------------------------------------------------------


def value_iteration_numpy(T, R, mask, gamma, tol, max_iter):
    """Bellman optimality sweeps on dense ``T[s, a, s']`` and ``R[s, a]``.

    Inapplicable actions (``mask[s, a] == False``) are excluded from the max.
    Returns ``(V, iterations)``.
    """
    threshold = stopping_threshold(gamma, tol)
    V = np.zeros(T.shape[0])
    for it in range(max_iter):
        Q = R + gamma * (T @ V)
        Q = np.where(mask, Q, -np.inf)
        V_new = Q.max(axis=1)
        delta = np.max(np.abs(V_new - V)) if V.size else 0.0
        V = V_new
        if delta <= threshold:
            return V, it + 1
    return V, max_iter


def policy_evaluation_numpy(P, r, gamma, tol, max_iter):
    """Iterative evaluation of a fixed policy's chain ``P[s, s']`` with rewards ``r[s]``."""
    threshold = stopping_threshold(gamma, tol)
    V = np.zeros(P.shape[0])
    for it in range(max_iter):
        V_new = r + gamma * (P @ V)
        delta = np.max(np.abs(V_new - V)) if V.size else 0.0
        V = V_new
        if delta <= threshold:
            return V, it + 1
    return V, max_iter


# --- numba ------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def value_iteration_numba(T, R, mask, gamma, tol, max_iter):  # pragma: no cover - jitted
        n_s, n_a, _ = T.shape
        threshold = np.inf
        if gamma > 0.0:
            threshold = tol * (1.0 - gamma) / gamma
        V = np.zeros(n_s)
        V_new = np.zeros(n_s)
        for it in range(max_iter):
            delta = 0.0
            for s in range(n_s):
                best = -np.inf
                for a in range(n_a):
                    if not mask[s, a]:
                        continue
                    q = R[s, a]
                    for sp in range(n_s):
                        p = T[s, a, sp]
                        if p != 0.0:
                            q += gamma * p * V[sp]
                    if q > best:
                        best = q
                V_new[s] = best
                d = abs(best - V[s])
                if d > delta:
                    delta = d
            V, V_new = V_new, V
            if delta <= threshold:
                return V, it + 1
        return V, max_iter

    @njit(cache=True)
    def policy_evaluation_numba(P, r, gamma, tol, max_iter):  # pragma: no cover - jitted
        n_s = P.shape[0]
        threshold = np.inf
        if gamma > 0.0:
            threshold = tol * (1.0 - gamma) / gamma
        V = np.zeros(n_s)
        V_new = np.zeros(n_s)
        for it in range(max_iter):
            delta = 0.0
            for s in range(n_s):
                v = r[s]
                for sp in range(n_s):
                    p = P[s, sp]
                    if p != 0.0:
                        v += gamma * p * V[sp]
                V_new[s] = v
                d = abs(v - V[s])
                if d > delta:
                    delta = d
            V, V_new = V_new, V
            if delta <= threshold:
                return V, it + 1
        return V, max_iter

    value_iteration_kernel = value_iteration_numba
    policy_evaluation_kernel = policy_evaluation_numba
else:
    value_iteration_numba = None
    policy_evaluation_numba = None
    value_iteration_kernel = value_iteration_numpy
    policy_evaluation_kernel = policy_evaluation_numpy


def _pick(n_states: int, jitted, fallback):
    return jitted if HAVE_NUMBA and n_states <= NUMBA_MAX_STATES else fallback


def run_value_iteration(T, R, mask, gamma, tol, max_iter):
    kernel = _pick(T.shape[0], value_iteration_kernel, value_iteration_numpy)
    return kernel(
        np.ascontiguousarray(T, dtype=np.float64),
        np.ascontiguousarray(R, dtype=np.float64),
        np.ascontiguousarray(mask, dtype=np.bool_),
        float(gamma),
        float(tol),
        int(max_iter),
    )


def run_policy_evaluation(P, r, gamma, tol, max_iter):
    kernel = _pick(P.shape[0], policy_evaluation_kernel, policy_evaluation_numpy)
    return kernel(
        np.ascontiguousarray(P, dtype=np.float64),
        np.ascontiguousarray(r, dtype=np.float64),
        float(gamma),
        float(tol),
        int(max_iter),
    )
