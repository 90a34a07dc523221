"""Finite MDPs and exact dynamic programming.

Rewards are finite discrete distributions, not just means, because posterior
updates need the likelihood of the observed reward value. A model stores one
sorted array of distinct reward values and a probability table over it,
either per ``(s, a, s')`` or, when rewards do not depend on the next state,
per ``(s, a)`` with a singleton next-state axis that broadcasts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from bampf_lab import _kernels
from bampf_lab.errors import ArgumentError, CapacityError, ValidationError

STOCHASTIC_TOL = 1e-12
DEFAULT_TOL = 1e-9
DIRECT_SOLVE_MAX_STATES = 1000


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Tabular MDP ``(S, A, R, T, T0, gamma)``.

    ``transition[s, a, s']`` is ``T(s'|s, a)``; ``reward_probs[s, a, s' or 0, k]``
    is the probability of reward ``reward_values[k]``; ``applicable[s, a]``
    marks the actions available in each state. Rows of inapplicable actions are
    ignored (and zeroed).
    """

    transition: np.ndarray
    reward_values: np.ndarray
    reward_probs: np.ndarray
    initial_dist: np.ndarray
    discount: float
    applicable: np.ndarray | None = None
    state_names: tuple[str, ...] | None = None
    action_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        T = np.asarray(self.transition, dtype=np.float64)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise ValidationError(f"transition must have shape (S, A, S), got {T.shape}")
        n_s, n_a, _ = T.shape
        if n_s == 0 or n_a == 0:
            raise ValidationError("MDP needs at least one state and one action")

        mask = np.ones((n_s, n_a), dtype=bool) if self.applicable is None else np.asarray(self.applicable, dtype=bool)
        if mask.shape != (n_s, n_a):
            raise ValidationError(f"applicable must have shape {(n_s, n_a)}, got {mask.shape}")
        for s in range(n_s):
            if not mask[s].any():
                raise ValidationError(f"state {s} has no applicable action")

        values = np.asarray(self.reward_values, dtype=np.float64).reshape(-1)
        probs = np.asarray(self.reward_probs, dtype=np.float64)
        if probs.ndim != 4 or probs.shape[:2] != (n_s, n_a) or probs.shape[2] not in (1, n_s):
            raise ValidationError(
                f"reward_probs must have shape (S, A, S or 1, K) with S={n_s}, A={n_a}; got {probs.shape}"
            )
        if probs.shape[3] != values.size:
            raise ValidationError(f"reward_probs has {probs.shape[3]} columns for {values.size} reward values")
        if not np.all(np.isfinite(values)):
            raise ValidationError("reward values must be finite")
        values, probs = _dedupe_rewards(values, probs)

        if np.any(T < 0) or not np.all(np.isfinite(T)):
            raise ValidationError("transition probabilities must be finite and nonnegative")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValidationError("reward probabilities must be finite and nonnegative")
        T = np.where(mask[:, :, None], T, 0.0)
        row = T.sum(axis=2)
        bad = np.argwhere(mask & (np.abs(row - 1.0) > STOCHASTIC_TOL))
        if bad.size:
            s, a = (int(x) for x in bad[0])
            raise ValidationError(f"transition row (s={s}, a={a}) sums to {row[s, a]!r}, expected 1")
        rsum = probs.sum(axis=3)
        # only distributions that can actually occur are checked
        relevant = mask[:, :, None] & ((T > 0) if probs.shape[2] == n_s else np.ones((n_s, n_a, 1), dtype=bool))
        bad = np.argwhere(relevant & (np.abs(rsum - 1.0) > STOCHASTIC_TOL))
        if bad.size:
            s, a, sp = (int(x) for x in bad[0])
            where = f"(s={s}, a={a})" if probs.shape[2] == 1 else f"(s={s}, a={a}, s'={sp})"
            raise ValidationError(f"reward distribution {where} sums to {rsum[s, a, sp]!r}, expected 1")

        init = np.asarray(self.initial_dist, dtype=np.float64).reshape(-1)
        if init.shape != (n_s,):
            raise ValidationError(f"initial_dist must have length {n_s}, got {init.size}")
        if np.any(init < 0) or abs(init.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValidationError(f"initial_dist must be a probability vector (sum={init.sum()!r})")

        gamma = float(self.discount)
        if not 0.0 <= gamma < 1.0:
            raise ValidationError(f"discount must lie in [0, 1), got {gamma}")

        for attr, n in (("state_names", n_s), ("action_names", n_a)):
            names = getattr(self, attr)
            if names is not None:
                names = tuple(str(x) for x in names)
                if len(names) != n:
                    raise ValidationError(f"{attr} has {len(names)} entries, expected {n}")
                object.__setattr__(self, attr, names)

        object.__setattr__(self, "transition", _frozen(T))
        object.__setattr__(self, "reward_values", _frozen(values))
        object.__setattr__(self, "reward_probs", _frozen(probs))
        object.__setattr__(self, "initial_dist", _frozen(init))
        object.__setattr__(self, "applicable", _frozen(mask))
        object.__setattr__(self, "discount", gamma)

    # --- construction helpers ------------------------------------------------

    @classmethod
    def from_deterministic_rewards(
        cls,
        transition,
        rewards,
        initial_dist,
        discount: float,
        applicable=None,
        state_names: Sequence[str] | None = None,
        action_names: Sequence[str] | None = None,
    ) -> "FiniteMdp":
        """Build an MDP whose reward is a point mass given ``(s, a)`` or ``(s, a, s')``.

        ``rewards`` has shape ``(S, A)`` or ``(S, A, S)``.
        """
        R = np.asarray(rewards, dtype=np.float64)
        if R.ndim == 2:
            R = R[:, :, None]
        if R.ndim != 3:
            raise ValidationError(f"rewards must have shape (S, A) or (S, A, S), got {np.shape(rewards)}")
        values, inverse = np.unique(R.reshape(-1), return_inverse=True)
        probs = np.zeros(R.shape + (values.size,))
        flat = probs.reshape(-1, values.size)
        flat[np.arange(inverse.size), inverse] = 1.0
        return cls(
            transition=transition,
            reward_values=values,
            reward_probs=probs,
            initial_dist=initial_dist,
            discount=discount,
            applicable=applicable,
            state_names=None if state_names is None else tuple(state_names),
            action_names=None if action_names is None else tuple(action_names),
        )

    # --- accessors ------------------------------------------------------------

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def reward_depends_on_next_state(self) -> bool:
        return self.reward_probs.shape[2] != 1

    def applicable_actions(self, s: int) -> tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self.applicable[s]))

    @cached_property
    def expected_reward_sas(self) -> np.ndarray:
        """``R(s, a, s')`` as an ``(S, A, S)`` array (broadcast when s'-independent)."""
        r = self.reward_probs @ self.reward_values
        return np.broadcast_to(r, self.transition.shape)

    @cached_property
    def expected_reward_sa(self) -> np.ndarray:
        """``R(s, a) = sum_s' T(s'|s,a) R(s,a,s')``; zero for inapplicable pairs."""
        if self.reward_depends_on_next_state:
            return np.einsum("ijk,ijk->ij", self.transition, self.expected_reward_sas)
        return (self.reward_probs[:, :, 0, :] @ self.reward_values) * self.applicable

    @cached_property
    def r_max(self) -> float:
        """Largest reward magnitude with positive probability at an applicable pair."""
        support = self.reward_probs.max(axis=(0, 1, 2)) > 0
        return float(np.max(np.abs(self.reward_values[support]), initial=0.0))

    def reward_distribution(self, s: int, a: int, s_next: int) -> np.ndarray:
        j = s_next if self.reward_depends_on_next_state else 0
        return self.reward_probs[s, a, j]

    def check_state(self, s: int) -> None:
        if not 0 <= s < self.n_states:
            raise ArgumentError(f"state index {s} out of range [0, {self.n_states})")

    def check_applicable(self, s: int, a: int) -> None:
        self.check_state(s)
        if not 0 <= a < self.n_actions or not self.applicable[s, a]:
            raise ArgumentError(f"action {a} is not applicable in state {s}")

    def same_as(self, other: "FiniteMdp") -> bool:
        """Exact structural equality (bitwise on every table)."""
        return (
            self.discount == other.discount
            and self.state_names == other.state_names
            and self.action_names == other.action_names
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("transition", "reward_values", "reward_probs", "initial_dist", "applicable")
            )
        )

    def with_rewards_shifted(self, delta: float) -> "FiniteMdp":
        return FiniteMdp(
            self.transition,
            self.reward_values + delta,
            self.reward_probs,
            self.initial_dist,
            self.discount,
            self.applicable,
            self.state_names,
            self.action_names,
        )


def _dedupe_rewards(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inverse = np.unique(values, return_inverse=True)
    if uniq.size == values.size and np.all(inverse == np.arange(values.size)):
        return values, probs
    merged = np.zeros(probs.shape[:3] + (uniq.size,))
    for k, j in enumerate(inverse):
        merged[..., j] += probs[..., k]
    return uniq, merged


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Map from states to action distributions, stored as an ``(S, A)`` table."""

    probs: np.ndarray
    actions: tuple[int, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        P = np.asarray(self.probs, dtype=np.float64)
        if P.ndim != 2:
            raise ValidationError("policy table must be 2-D (S, A)")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
            raise ValidationError("policy rows must be probability vectors")
        object.__setattr__(self, "probs", _frozen(P))

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "StationaryPolicy":
        acts = tuple(int(a) for a in actions)
        P = np.zeros((len(acts), n_actions))
        P[np.arange(len(acts)), acts] = 1.0
        return cls(P, acts)

    @property
    def is_deterministic(self) -> bool:
        return self.actions is not None

    def action(self, s: int) -> int:
        if self.actions is None:
            raise ArgumentError("stochastic policy has no single action")
        return self.actions[s]

    def check_against(self, mdp: FiniteMdp) -> None:
        if self.probs.shape != (mdp.n_states, mdp.n_actions):
            raise ValidationError(
                f"policy shape {self.probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})"
            )
        bad = np.argwhere((self.probs > 0) & ~mdp.applicable)
        if bad.size:
            s, a = (int(x) for x in bad[0])
            raise ValidationError(f"policy chooses inapplicable action {a} in state {s}")

    def __repr__(self) -> str:
        if self.actions is not None:
            return f"StationaryPolicy(actions={self.actions})"
        return f"StationaryPolicy(probs={self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """State values and action values; inapplicable entries of ``q`` are ``-inf``."""

    values: np.ndarray
    q: np.ndarray
    iterations: int = 0

    def __getitem__(self, s: int) -> float:
        return float(self.values[s])


def _check_tol(tol: float) -> None:
    if not tol > 0:
        raise ArgumentError(f"tol must be positive, got {tol}")


def _q_from_v(mdp: FiniteMdp, V: np.ndarray) -> np.ndarray:
    Q = mdp.expected_reward_sa + mdp.discount * (mdp.transition @ V)
    return np.where(mdp.applicable, Q, -np.inf)


def _max_iter(mdp: FiniteMdp, tol: float) -> int:
    gamma = mdp.discount
    if gamma == 0.0:
        return 2
    scale = max(mdp.r_max / (1.0 - gamma), 1.0)
    need = math.log(_kernels.stopping_threshold(gamma, tol) / scale) / math.log(gamma)
    return int(max(need, 0)) + 100


def policy_evaluation(mdp: FiniteMdp, policy: StationaryPolicy, tol: float = DEFAULT_TOL) -> ValueFunction:
    """Exact ``V^pi`` and ``Q^pi``.

    Uses a direct linear solve for up to 1000 states and contraction sweeps
    (stopping once ``residual * gamma / (1 - gamma) <= tol``) above that.
    """
    _check_tol(tol)
    policy.check_against(mdp)
    P = np.einsum("sa,sat->st", policy.probs, mdp.transition)
    r = np.einsum("sa,sa->s", policy.probs, mdp.expected_reward_sa)
    if mdp.n_states <= DIRECT_SOLVE_MAX_STATES:
        V = np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * P, r)
        iterations = 0
    else:
        V, iterations = _kernels.run_policy_evaluation(P, r, mdp.discount, tol, _max_iter(mdp, tol))
    return ValueFunction(V, _q_from_v(mdp, V), iterations)


def greedy_actions(mdp: FiniteMdp, Q: np.ndarray) -> tuple[int, ...]:
    """Lowest-index maximiser per state, tolerant of float noise at ~1e-12 relative."""
    out = []
    for s in range(mdp.n_states):
        best = np.max(Q[s])
        slack = 1e-12 * (1.0 + abs(best))
        out.append(int(np.flatnonzero(Q[s] >= best - slack)[0]))
    return tuple(out)


def value_iteration(mdp: FiniteMdp, tol: float = DEFAULT_TOL) -> tuple[ValueFunction, StationaryPolicy]:
    """``V*``, ``Q*`` and the greedy deterministic policy (ties to the lowest action index).

    Sweeps stop once the sup-norm change is at most ``tol (1 - gamma) / gamma``,
    which bounds the distance to ``V*`` by ``tol``.
    """
    _check_tol(tol)
    V, iterations = _kernels.run_value_iteration(
        mdp.transition, mdp.expected_reward_sa, mdp.applicable, mdp.discount, tol, _max_iter(mdp, tol)
    )
    Q = _q_from_v(mdp, V)
    policy = StationaryPolicy.deterministic(greedy_actions(mdp, Q), mdp.n_actions)
    return ValueFunction(np.asarray(V), Q, iterations), policy


def count_deterministic_policies(mdp: FiniteMdp) -> int:
    return math.prod(int(mdp.applicable[s].sum()) for s in range(mdp.n_states))


def enumerate_deterministic_policies(mdp: FiniteMdp, limit: int = 4096) -> list[StationaryPolicy]:
    """Every deterministic stationary policy once, in lexicographic order (state 0 most significant)."""
    count = count_deterministic_policies(mdp)
    if count > limit:
        raise CapacityError(f"{count} deterministic policies exceed the limit of {limit}")
    choices = [mdp.applicable_actions(s) for s in range(mdp.n_states)]
    return [StationaryPolicy.deterministic(acts, mdp.n_actions) for acts in itertools.product(*choices)]


def episodic_wrapper(mdp: FiniteMdp, episode_length: int) -> FiniteMdp:
    """Infinite-horizon MDP over ``(s, step mod L)``; product index is ``s * L + step``.

    From step ``L - 1`` every action resets to ``initial_dist`` at step 0. Reset
    transitions keep the reward distribution the action would have produced.
    """
    L = int(episode_length)
    if L < 1:
        raise ArgumentError(f"episode_length must be >= 1, got {episode_length}")
    n_s, n_a = mdp.n_states, mdp.n_actions
    N = n_s * L
    T = np.zeros((N, n_a, N))
    init = mdp.initial_dist
    for s in range(n_s):
        for k in range(L):
            i = s * L + k
            if k < L - 1:
                T[i, :, (k + 1) :: L] = mdp.transition[s]
            else:
                T[i, :, 0::L] = np.where(mdp.applicable[s][:, None], init[None, :], 0.0)

    K = mdp.reward_values.size
    if not mdp.reward_depends_on_next_state:
        R = np.repeat(mdp.reward_probs, L, axis=0)
    else:
        R = np.zeros((N, n_a, N, K))
        marginal = np.einsum("sat,satk->sak", mdp.transition, mdp.reward_probs)
        for s in range(n_s):
            for k in range(L):
                i = s * L + k
                if k < L - 1:
                    R[i, :, (k + 1) :: L, :] = mdp.reward_probs[s]
                else:
                    R[i, :, 0::L, :] = marginal[s][:, None, :]

    init_w = np.zeros(N)
    init_w[0::L] = init
    names = None
    if mdp.state_names is not None:
        names = tuple(f"{name}@{k}" for name in mdp.state_names for k in range(L))
    return FiniteMdp(
        transition=T,
        reward_values=mdp.reward_values,
        reward_probs=R,
        initial_dist=init_w,
        discount=mdp.discount,
        applicable=np.repeat(mdp.applicable, L, axis=0),
        state_names=names,
        action_names=mdp.action_names,
    )
