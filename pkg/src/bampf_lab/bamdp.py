"""Bayes-adaptive MDPs over a finite prior of candidate MDPs.

The augmented state ``<s, h>`` is carried as the physical state, the
canonical posterior over candidates and the value of an optional shaping
statistic. Transitions and expected rewards depend on the history only
through the posterior, so that summary is exact for planning; the shaping
statistic supplies whatever else a pseudo-reward needs from the history.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any, Hashable, Iterator, Sequence

import numpy as np

from bampf_lab.errors import ArgumentError, CapacityError, ImpossibleEvidenceError, ValidationError
from bampf_lab.mdp import DEFAULT_TOL, STOCHASTIC_TOL, FiniteMdp, value_iteration

if TYPE_CHECKING:
    from bampf_lab.shaping import PseudoReward

CLAMP = 1e-15
ROUND_DECIMALS = 14


def _canonical(w: np.ndarray) -> tuple[float, ...]:
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    w = w / total
    w[w < CLAMP] = 0.0
    w = np.round(w / w.sum(), ROUND_DECIMALS)
    return tuple(float(x) for x in w)


@dataclass(frozen=True)
class Belief:
    """Canonical posterior weights over the candidates of a prior.

    Canonical form: renormalised, entries below 1e-15 set to zero, rounded to
    14 decimals so that equal posteriors reached along different orderings of
    the same evidence hash identically.
    """

    weights: tuple[float, ...]

    @classmethod
    def from_weights(cls, w: Sequence[float] | np.ndarray) -> "Belief":
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
            raise ValidationError(f"belief weights must be a nonnegative nonzero vector, got {w!r}")
        return cls(_canonical(w))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.weights)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, x in enumerate(self.weights) if x > 0)

    @property
    def is_degenerate(self) -> bool:
        return len(self.support) == 1

    def entropy(self) -> float:
        w = self.array
        w = w[w > 0]
        return float(-(w * np.log(w)).sum())

    def __repr__(self) -> str:
        return "Belief(" + ", ".join(f"{x:.6g}" for x in self.weights) + ")"


@dataclass(frozen=True)
class History:
    """``s0 a0 r1 s1 ... a_{t-1} r_t s_t`` stored as parallel tuples."""

    states: tuple[int, ...]
    actions: tuple[int, ...] = ()
    rewards: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if len(self.states) != len(self.actions) + 1 or len(self.actions) != len(self.rewards):
            raise ValidationError("history must start and end with a state and alternate state/action/reward")

    @classmethod
    def initial(cls, s0: int) -> "History":
        return cls((int(s0),))

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def last_state(self) -> int:
        return self.states[-1]

    def extend(self, a: int, r: float, s_next: int) -> "History":
        return History(self.states + (int(s_next),), self.actions + (int(a),), self.rewards + (float(r),))

    @property
    def parent(self) -> "History":
        if not self.actions:
            raise ArgumentError("the initial history has no parent")
        return History(self.states[:-1], self.actions[:-1], self.rewards[:-1])

    def transitions(self) -> Iterator[tuple[int, int, float, int]]:
        for t, a in enumerate(self.actions):
            yield self.states[t], a, self.rewards[t], self.states[t + 1]


@dataclass(frozen=True, eq=False)
class PriorMixture:
    """Finite prior over candidate MDPs sharing states, actions, applicability and discount."""

    candidates: tuple[FiniteMdp, ...]
    weights: np.ndarray
    name: str = "custom"
    annotations: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cands = tuple(self.candidates)
        if not cands:
            raise ValidationError("prior needs at least one candidate MDP")
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.size != len(cands):
            raise ValidationError(f"{w.size} weights for {len(cands)} candidates")
        if np.any(w < 0) or abs(w.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValidationError(f"prior weights must be a probability vector (sum={w.sum()!r})")
        first = cands[0]
        for i, m in enumerate(cands[1:], start=1):
            if m.transition.shape != first.transition.shape:
                raise ValidationError(f"candidate {i} has a different state/action space")
            if m.discount != first.discount:
                raise ValidationError(f"candidate {i} has discount {m.discount}, expected {first.discount}")
            if not np.array_equal(m.applicable, first.applicable):
                raise ValidationError(f"candidate {i} has a different applicability table")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "candidates", cands)
        object.__setattr__(self, "weights", w)

    # --- shared structure -----------------------------------------------------

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    @property
    def n_states(self) -> int:
        return self.candidates[0].n_states

    @property
    def n_actions(self) -> int:
        return self.candidates[0].n_actions

    @property
    def discount(self) -> float:
        return self.candidates[0].discount

    @property
    def applicable(self) -> np.ndarray:
        return self.candidates[0].applicable

    def applicable_actions(self, s: int) -> tuple[int, ...]:
        return self.candidates[0].applicable_actions(s)

    @property
    def state_names(self):
        return self.candidates[0].state_names

    @property
    def action_names(self):
        return self.candidates[0].action_names

    @cached_property
    def r_max(self) -> float:
        return max(m.r_max for m in self.candidates)

    @cached_property
    def reward_support(self) -> np.ndarray:
        return np.unique(np.concatenate([m.reward_values for m in self.candidates]))

    @cached_property
    def _reward_index(self) -> dict[float, int]:
        return {float(v): k for k, v in enumerate(self.reward_support)}

    def reward_index(self, r: float) -> int | None:
        return self._reward_index.get(float(r))

    @cached_property
    def stacked_transition(self) -> np.ndarray:
        """``T_i(s'|s,a)`` as ``(N, S, A, S)``."""
        return np.stack([m.transition for m in self.candidates])

    @cached_property
    def stacked_reward_probs(self) -> np.ndarray:
        """Reward probabilities over ``reward_support`` as ``(N, S, A, S or 1, K)``."""
        dep = any(m.reward_depends_on_next_state for m in self.candidates)
        K = self.reward_support.size
        out = []
        for m in self.candidates:
            probs = m.reward_probs
            if dep and probs.shape[2] == 1:
                probs = np.broadcast_to(probs, (m.n_states, m.n_actions, m.n_states, probs.shape[3]))
            cols = np.searchsorted(self.reward_support, m.reward_values)
            full = np.zeros(probs.shape[:3] + (K,))
            full[..., cols] = probs
            out.append(full)
        return np.stack(out)

    @cached_property
    def stacked_expected_reward(self) -> np.ndarray:
        """``R_i(s, a)`` as ``(N, S, A)``."""
        return np.stack([m.expected_reward_sa for m in self.candidates])

    @cached_property
    def optimal_values(self) -> tuple[np.ndarray, ...]:
        """``V*`` of each candidate, computed once at the default tolerance."""
        return tuple(value_iteration(m, DEFAULT_TOL)[0].values for m in self.candidates)

    @property
    def prior_belief(self) -> Belief:
        return Belief.from_weights(self.weights)

    def mean_initial_dist(self) -> np.ndarray:
        return np.einsum("i,is->s", self.weights, np.stack([m.initial_dist for m in self.candidates]))

    def likelihoods(self, s: int, a: int, r: float, s_next: int) -> np.ndarray:
        """``T_i(s'|s,a) R_i(r|s,a,s')`` for every candidate.

        Index ``n_states`` / ``n_actions`` denote the synthesized absorbing state and
        action used by BAMPF certification: that action leads to the absorbing
        state with reward 0 in every candidate.
        """
        n_s, n_a = self.n_states, self.n_actions
        if a == n_a or s == n_s:
            ok = a == n_a and s_next == n_s and float(r) == 0.0
            return np.full(self.n_candidates, 1.0 if ok else 0.0)
        if not (0 <= s < n_s and 0 <= a < n_a and 0 <= s_next < n_s) or not self.applicable[s, a]:
            return np.zeros(self.n_candidates)
        k = self.reward_index(r)
        if k is None:
            return np.zeros(self.n_candidates)
        Rp = self.stacked_reward_probs
        j = s_next if Rp.shape[3] != 1 else 0
        return self.stacked_transition[:, s, a, s_next] * Rp[:, s, a, j, k]

    def transition_likelihoods(self, s: int, a: int, s_next: int) -> np.ndarray:
        """``T_i(s'|s,a)`` with the same absorbing-extension convention as ``likelihoods``."""
        n_s, n_a = self.n_states, self.n_actions
        if a == n_a or s == n_s:
            return np.full(self.n_candidates, 1.0 if (a == n_a and s_next == n_s) else 0.0)
        if not (0 <= s < n_s and 0 <= a < n_a and 0 <= s_next < n_s) or not self.applicable[s, a]:
            return np.zeros(self.n_candidates)
        return self.stacked_transition[:, s, a, s_next]

    def same_as(self, other: "PriorMixture") -> bool:
        if self is other:
            return True
        return (
            self.n_candidates == other.n_candidates
            and np.array_equal(self.weights, other.weights)
            and all(a.same_as(b) for a, b in zip(self.candidates, other.candidates))
        )

    def mean_model(self, belief: Belief) -> FiniteMdp:
        """Single MDP whose transitions and reward distributions are the belief-weighted averages."""
        w = belief.array
        T = np.einsum("i,isat->sat", w, self.stacked_transition)
        joint = np.einsum("i,isat,isatk->satk", w, self.stacked_transition, self._rp_full)
        with np.errstate(invalid="ignore", divide="ignore"):
            Rp = np.where(T[..., None] > 0, joint / T[..., None], 0.0)
        # pairs never reached keep a valid point mass at reward 0
        fill = np.zeros(self.reward_support.size)
        fill[np.argmin(np.abs(self.reward_support))] = 1.0
        Rp = np.where(T[..., None] > 0, Rp, fill)
        init = np.einsum("i,is->s", w, np.stack([m.initial_dist for m in self.candidates]))
        m0 = self.candidates[0]
        return FiniteMdp(T, self.reward_support, Rp, init, m0.discount, m0.applicable, m0.state_names, m0.action_names)

    @cached_property
    def _rp_full(self) -> np.ndarray:
        Rp = self.stacked_reward_probs
        if Rp.shape[3] == 1:
            Rp = np.broadcast_to(Rp, Rp.shape[:3] + (self.n_states, Rp.shape[4]))
        return Rp


@dataclass(frozen=True)
class AugmentedState:
    """BAMDP state: physical state, canonical posterior, shaping statistic value, step count."""

    physical_state: int
    belief: Belief
    stats: Hashable = None
    depth: int = 0

    @property
    def key(self) -> tuple:
        return (self.physical_state, self.belief.weights, self.stats)


@dataclass(frozen=True)
class PlannerConfig:
    """Expectimax settings.

    ``horizon`` counts decision steps before the zero-valued leaf. ``r_max`` and
    ``phi_max`` default to the prior's reward bound and the shaping potential's
    declared bound.
    """

    horizon: int = 200
    tie_tol: float = 1e-6
    use_collapse_shortcut: bool = True
    r_max: float | None = None
    phi_max: float | None = None
    tol: float = DEFAULT_TOL
    max_nodes: int = 5_000_000

    def __post_init__(self) -> None:
        if self.horizon < 0:
            raise ArgumentError(f"horizon must be >= 0, got {self.horizon}")
        if not self.tie_tol >= 0:
            raise ArgumentError("tie_tol must be nonnegative")
        if not self.tol > 0:
            raise ArgumentError("tol must be positive")

    @staticmethod
    def horizon_for(gamma: float, leaf_bound: float, target: float) -> int:
        """Smallest horizon whose geometric tail ``gamma^H * leaf_bound`` is at most ``target``."""
        if leaf_bound <= target or gamma == 0.0:
            return 0 if leaf_bound <= target else 1
        return int(math.ceil(math.log(target / leaf_bound) / math.log(gamma)))


@dataclass(frozen=True)
class PlanResult:
    value: float
    action_values: dict[int, float]
    optimal_action_set: frozenset[int]
    error_bound: float
    nodes: int = 0

    @property
    def best_action(self) -> int:
        return min(self.optimal_action_set)


# --- single-step operations ---------------------------------------------------


def initial_state(prior: PriorMixture, s0: int, shaping: "PseudoReward | None" = None) -> AugmentedState:
    """``<s0, h0>``: posterior on the initial observation, fresh shaping statistic."""
    prior.candidates[0].check_state(s0)
    w = prior.weights * np.array([m.initial_dist[s0] for m in prior.candidates])
    belief = Belief.from_weights(w) if w.sum() > 0 else prior.prior_belief
    stats = None if shaping is None else shaping.initial(s0)
    return AugmentedState(int(s0), belief, stats, 0)


def posterior_update(prior: PriorMixture, belief: Belief, s: int, a: int, r: float, s_next: int) -> Belief:
    """Bayes rule: ``w'_i ∝ w_i T_i(s'|s,a) R_i(r|s,a,s')``."""
    prior.candidates[0].check_applicable(s, a)
    prior.candidates[0].check_state(s_next)
    w = belief.array * prior.likelihoods(s, a, r, s_next)
    if not w.sum() > 0:
        raise ImpossibleEvidenceError(
            f"observation (s={s}, a={a}, r={r}, s'={s_next}) has zero likelihood under the belief support"
        )
    return Belief.from_weights(w)


def expected_reward(prior: PriorMixture, belief: Belief, s: int, a: int) -> float:
    """``R̄(s̄, a) = sum_i w_i E[R_i(s, a)]``."""
    prior.candidates[0].check_applicable(s, a)
    return float(belief.array @ prior.stacked_expected_reward[:, s, a])


def _outcomes(prior: PriorMixture, belief: Belief, s: int, a: int) -> list[tuple[int, float, float, Belief]]:
    """``(s', r, p, posterior)`` for every outcome with positive mixture probability."""
    w = belief.array
    T = prior.stacked_transition[:, s, a, :]
    Rp = prior.stacked_reward_probs[:, s, a]
    if Rp.shape[1] == 1:
        joint = w[:, None, None] * T[:, :, None] * Rp[:, 0, None, :]
    else:
        joint = w[:, None, None] * T[:, :, None] * Rp
    p = joint.sum(axis=0)
    out = []
    values = prior.reward_support
    for sp, k in zip(*np.nonzero(p > 0)):
        pk = p[sp, k]
        out.append((int(sp), float(values[k]), float(pk), Belief(_canonical(joint[:, sp, k] / pk))))
    return out


def successor_distribution(
    prior: PriorMixture, aug: AugmentedState, a: int, shaping: "PseudoReward | None" = None
) -> list[tuple[AugmentedState, float, float]]:
    """All ``(successor, probability, reward)`` triples of taking ``a`` at ``aug``."""
    s = aug.physical_state
    prior.candidates[0].check_applicable(s, a)
    out = []
    for sp, r, p, b in _outcomes(prior, aug.belief, s, a):
        stats = aug.stats
        if shaping is not None:
            stats, _ = shaping.step(aug.stats, s, a, r, sp)
        out.append((AugmentedState(sp, b, stats, aug.depth + 1), p, r))
    return out


# --- planning -------------------------------------------------------------------


class BayesPlanner:
    """Depth-limited expectimax over augmented states with memoisation.

    The memo is keyed on ``(s, canonical belief, statistic, remaining depth)``
    and lives as long as the planner object. Truncated subtrees contribute a
    value of zero; the reported ``error_bound`` is the exact propagation of
    the leaf bounds through the tree (discounted and probability-weighted), so
    it is a rigorous bound on ``|estimate - exact|``.

    With ``finite_horizon=True`` the planner computes the k-step objective
    itself: leaves are exact (bound 0) and no collapse shortcut is taken.
    """

    def __init__(
        self,
        prior: PriorMixture,
        shaping: "PseudoReward | None" = None,
        cfg: PlannerConfig | None = None,
        *,
        finite_horizon: bool = False,
    ) -> None:
        self.prior = prior
        self.shaping = shaping
        self.cfg = cfg or PlannerConfig()
        self.finite_horizon = finite_horizon
        self.gamma = prior.discount
        r_max = prior.r_max if self.cfg.r_max is None else float(self.cfg.r_max)
        if r_max < prior.r_max - 1e-12:
            raise ArgumentError(f"cfg.r_max={r_max} is below the prior's reward bound {prior.r_max}")
        self.r_max = r_max
        self.leaf_bound = self._leaf_bound()
        self.collapse_ok = self.cfg.use_collapse_shortcut and not finite_horizon and self._shortcut_allowed()
        self._memo: dict[tuple, tuple[float, float]] = {}
        self._succ: dict[tuple, list] = {}
        self._step: dict[tuple, tuple[Hashable, float]] = {}
        self.nodes = 0

    def _leaf_bound(self) -> float:
        if self.finite_horizon:
            return 0.0
        g = self.gamma
        bound = self.r_max / (1.0 - g)
        f = self.shaping
        if f is None:
            return bound
        if f.claimed_potential is not None:
            phi_max = f.claimed_potential.phi_max if self.cfg.phi_max is None else float(self.cfg.phi_max)
            return bound + phi_max
        if not math.isfinite(f.f_max):
            raise ArgumentError("shaped planning needs a finite f_max")
        return bound + f.f_max / (1.0 - g)

    def _shortcut_allowed(self) -> bool:
        f = self.shaping
        if f is None:
            return True
        if f.claimed_potential is None or not f.statistic.stationary_after_collapse:
            return False
        model = f.statistic.model
        return model is None or model.same_as(self.prior)

    # --- recursion ---

    def _successors(self, s: int, belief: Belief, a: int):
        key = (s, belief.weights, a)
        out = self._succ.get(key)
        if out is None:
            out = _outcomes(self.prior, belief, s, a)
            self._succ[key] = out
        return out

    def _advance(self, stat: Hashable, s: int, a: int, r: float, sp: int) -> tuple[Hashable, float]:
        key = (stat, s, a, r, sp)
        out = self._step.get(key)
        if out is None:
            out = self.shaping.step(stat, s, a, r, sp)
            self._step[key] = out
        return out

    def _collapsed_value(self, s: int, belief: Belief, stat: Hashable) -> float:
        i = belief.support[0]
        v = float(self.prior.optimal_values[i][s])
        if self.shaping is not None:
            v -= self.shaping.claimed_potential.phi(stat)
        return v

    def _q(self, s: int, belief: Belief, stat: Hashable, a: int, depth: int) -> tuple[float, float]:
        q = 0.0
        qb = 0.0
        g = self.gamma
        for sp, r, p, b in self._successors(s, belief, a):
            f = 0.0
            st = stat
            if self.shaping is not None:
                st, f = self._advance(stat, s, a, r, sp)
            v, vb = self._v(sp, b, st, depth - 1)
            q += p * (r + f + g * v)
            qb += p * vb
        return q, g * qb

    def _v(self, s: int, belief: Belief, stat: Hashable, depth: int) -> tuple[float, float]:
        if self.collapse_ok and belief.is_degenerate:
            return self._collapsed_value(s, belief, stat), self.cfg.tol
        if depth <= 0:
            return 0.0, self.leaf_bound
        key = (s, belief.weights, stat, depth)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        self.nodes += 1
        if self.nodes > self.cfg.max_nodes:
            raise CapacityError(f"planner exceeded max_nodes={self.cfg.max_nodes}")
        best = -math.inf
        bound = 0.0
        for a in self.prior.applicable_actions(s):
            q, qb = self._q(s, belief, stat, a, depth)
            best = max(best, q)
            bound = max(bound, qb)
        self._memo[key] = (best, bound)
        return best, bound

    # --- public ---

    def plan(self, aug: AugmentedState, horizon: int | None = None) -> PlanResult:
        H = self.cfg.horizon if horizon is None else int(horizon)
        if H < 0:
            raise ArgumentError(f"horizon must be >= 0, got {H}")
        if self.shaping is not None and aug.stats is None:
            raise ArgumentError("shaped planning needs an augmented state carrying the shaping statistic")
        s, belief, stat = aug.physical_state, aug.belief, aug.stats
        limit = sys.getrecursionlimit()
        if limit < 4 * H + 1000:
            sys.setrecursionlimit(4 * H + 1000)
        actions = self.prior.applicable_actions(s)
        if H == 0:
            qs = {a: 0.0 for a in actions}
            return PlanResult(0.0, qs, frozenset(actions), self.leaf_bound, self.nodes)
        qs, bounds = {}, {}
        for a in actions:
            qs[a], bounds[a] = self._q(s, belief, stat, a, H)
        best = max(qs.values())
        opt = frozenset(a for a in actions if qs[a] >= best - self.cfg.tie_tol)
        return PlanResult(best, qs, opt, max(bounds.values()), self.nodes)


def plan_bayes_optimal(
    prior: PriorMixture,
    aug: AugmentedState,
    shaping: "PseudoReward | None" = None,
    cfg: PlannerConfig | None = None,
) -> PlanResult:
    """``V̄*`` and ``Q̄*`` at ``aug`` (of the shaped BAMDP when ``shaping`` is given)."""
    return BayesPlanner(prior, shaping, cfg).plan(aug)


@dataclass(frozen=True)
class ValueDecomposition:
    """Value of information plus value of opportunity; iterates as ``(voi, voo, total)``."""

    voi: float
    voo: float
    total: float
    error_bound: float

    @property
    def negative_voi(self) -> bool:
        return self.voi < -self.error_bound

    def __iter__(self):
        return iter((self.voi, self.voo, self.total))


def decompose_value(
    prior: PriorMixture, aug: AugmentedState, cfg: PlannerConfig | None = None, planner: BayesPlanner | None = None
) -> ValueDecomposition:
    """Split ``V̄*(<s_t, h_t>)`` into VOI and VOO.

    VOO is the value of the same physical state under the initial belief; VOI is
    the remainder, so the two sum to the total exactly. Negative VOI (bad
    news) is reported as-is.
    """
    planner = planner or BayesPlanner(prior, None, cfg)
    total = planner.plan(aug)
    fresh = initial_state(prior, aug.physical_state)
    opportunity = planner.plan(fresh)
    voi = total.value - opportunity.value
    return ValueDecomposition(voi, opportunity.value, total.value, total.error_bound + opportunity.error_bound)
