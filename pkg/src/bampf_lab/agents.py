"""RL algorithms viewed as policies over augmented states.

Every agent exposes ``action_distribution(aug)`` (a dict from action to
probability) and ``act(aug, rng=None)``. Deterministic agents ignore ``rng``;
stochastic ones sample from their distribution with the generator they are
handed, so a rollout that owns the generator stays reproducible.

An agent with a ``shaping`` attribute expects ``aug.stats`` to hold the value
of that pseudo-reward's statistic; the evaluation code maintains it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from bampf_lab.bamdp import AugmentedState, BayesPlanner, Belief, PlannerConfig, PlanResult, PriorMixture
from bampf_lab.errors import ArgumentError, CapacityError
from bampf_lab.mdp import (
    FiniteMdp,
    StationaryPolicy,
    count_deterministic_policies,
    enumerate_deterministic_policies,
    policy_evaluation,
    value_iteration,
)
from bampf_lab.shaping import PseudoReward

INTERPRETER_MODES = ("exact", "mean", "map")
CE_OBJECTIVES = ("shaped", "extrinsic")
DEFAULT_POLICY_LIMIT = 4096
VALUE_TIE_TOL = 1e-9


@dataclass(frozen=True)
class BeliefInterpreter:
    """How a certainty-equivalent learner reads its posterior.

    ``exact`` keeps the posterior mixture, ``mean`` collapses it to the
    weight-averaged MDP, ``map`` keeps only the heaviest candidate (ties go to
    the lowest index).
    """

    mode: str = "exact"

    def __post_init__(self) -> None:
        if self.mode not in INTERPRETER_MODES:
            raise ArgumentError(f"interpreter mode must be one of {INTERPRETER_MODES}, got {self.mode!r}")

    def models(self, prior: PriorMixture, belief: Belief) -> tuple[tuple[FiniteMdp, ...], np.ndarray]:
        """Candidate models and weights the learner evaluates policies against."""
        if self.mode == "exact":
            return prior.candidates, belief.array
        if self.mode == "mean":
            return (prior.mean_model(belief),), np.ones(1)
        i = int(np.argmax(belief.array))
        return (prior.candidates[i],), np.ones(1)


def _models_key(interp: BeliefInterpreter, belief: Belief) -> Hashable:
    if interp.mode == "exact":
        return "exact"
    if interp.mode == "mean":
        return ("mean", belief.weights)
    return ("map", int(np.argmax(belief.array)))


def ce_policy_value(
    prior: PriorMixture, interp: BeliefInterpreter, belief: Belief, policy: StationaryPolicy, s: int
) -> float:
    """``E_b[V^pi(s)]`` under the interpreted belief."""
    models, w = interp.models(prior, belief)
    return float(sum(wi * policy_evaluation(m, policy).values[s] for m, wi in zip(models, w) if wi > 0))


def _first_max(values: np.ndarray) -> int:
    best = float(np.max(values))
    slack = VALUE_TIE_TOL * (1.0 + abs(best))
    return int(np.flatnonzero(values >= best - slack)[0])


@dataclass(frozen=True)
class CeDecision:
    """Outcome of the certainty-equivalent policy search; unpacks as ``(action, policy)``."""

    action: int
    policy: StationaryPolicy
    value: float
    certified: bool

    def __iter__(self):
        return iter((self.action, self.policy))


class PolicySearch:
    """``argmax_pi E_b[V^pi(s)]`` over deterministic stationary policies.

    Exhaustive enumeration (lexicographic order, first maximiser wins) when
    the policy count is within ``limit``; otherwise coordinate-ascent over
    states started from each candidate's optimal policy, reported as not
    certified. ``heuristic=False`` turns the fallback into a capacity error.

    Values of every enumerated policy in every model are cached, so repeated
    queries under changing beliefs cost one matrix product.
    """

    def __init__(
        self, prior: PriorMixture, interp: BeliefInterpreter | None = None, limit: int = DEFAULT_POLICY_LIMIT, heuristic: bool = True
    ) -> None:
        self.prior = prior
        self.interp = interp or BeliefInterpreter()
        self.limit = int(limit)
        self.heuristic = heuristic
        self.exhaustive = count_deterministic_policies(prior.candidates[0]) <= self.limit
        if not self.exhaustive and not heuristic:
            raise CapacityError(
                f"{count_deterministic_policies(prior.candidates[0])} policies exceed the limit of {self.limit}"
            )
        self.policies = enumerate_deterministic_policies(prior.candidates[0], self.limit) if self.exhaustive else None
        self._tables: dict[Hashable, tuple[np.ndarray, np.ndarray]] = {}

    def _table(self, models: Sequence[FiniteMdp], key: Hashable) -> tuple[np.ndarray, np.ndarray]:
        """``(V[pi, i, s], Q[pi, i, s, a])`` for every enumerated policy."""
        hit = self._tables.get(key)
        if hit is None:
            V = np.empty((len(self.policies), len(models), self.prior.n_states))
            Q = np.empty((len(self.policies), len(models), self.prior.n_states, self.prior.n_actions))
            for j, pi in enumerate(self.policies):
                for i, m in enumerate(models):
                    vf = policy_evaluation(m, pi)
                    V[j, i] = vf.values
                    Q[j, i] = vf.q
            hit = (V, Q)
            self._tables[key] = hit
        return hit

    def best(
        self, belief: Belief, s: int, models: Sequence[FiniteMdp] | None = None, key: Hashable | None = None
    ) -> CeDecision:
        if models is None:
            models, w = self.interp.models(self.prior, belief)
            key = _models_key(self.interp, belief)
        else:
            w = belief.array if len(models) == belief.array.size else np.ones(1)
        if self.exhaustive:
            V, _ = self._table(models, key)
            values = V[:, :, s] @ w
            j = _first_max(values)
            pi = self.policies[j]
            return CeDecision(pi.action(s), pi, float(values[j]), True)
        return self._local_search(models, w, s)

    def q_values(self, belief: Belief, s: int) -> dict[int, float]:
        """``max_pi E_b[R(s,a) + gamma sum_s' T(s'|s,a) V^pi(s')]`` per applicable action."""
        models, w = self.interp.models(self.prior, belief)
        actions = self.prior.applicable_actions(s)
        if self.exhaustive:
            _, Q = self._table(models, _models_key(self.interp, belief))
            return {a: float(np.max(Q[:, :, s, a] @ w)) for a in actions}
        out = {}
        for a in actions:
            best = -math.inf
            for start in self._starts(models):
                pi = self._ascend(models, w, s, start, fixed=(s, a))
                best = max(best, self._mixture(models, w, pi, s, a))
            out[a] = best
        return out

    # --- heuristic fallback ---

    def _starts(self, models: Sequence[FiniteMdp]) -> list[tuple[int, ...]]:
        starts = []
        for m in models:
            acts = value_iteration(m)[1].actions
            if acts not in starts:
                starts.append(acts)
        return starts

    def _mixture(self, models, w, acts: tuple[int, ...], s: int, a: int | None = None) -> float:
        pi = StationaryPolicy.deterministic(acts, self.prior.n_actions)
        total = 0.0
        for m, wi in zip(models, w):
            if wi > 0:
                vf = policy_evaluation(m, pi)
                total += wi * (vf.values[s] if a is None else vf.q[s, a])
        return total

    def _ascend(self, models, w, s: int, start: tuple[int, ...], fixed: tuple[int, int] | None = None) -> tuple[int, ...]:
        acts = list(start)
        if fixed is not None:
            acts[fixed[0]] = fixed[1]
        current = self._mixture(models, w, tuple(acts), s, None if fixed is None else fixed[1])
        improved = True
        while improved:
            improved = False
            for x in range(self.prior.n_states):
                if fixed is not None and x == fixed[0]:
                    continue
                for b in self.prior.applicable_actions(x):
                    if b == acts[x]:
                        continue
                    trial = acts.copy()
                    trial[x] = b
                    v = self._mixture(models, w, tuple(trial), s, None if fixed is None else fixed[1])
                    if v > current + VALUE_TIE_TOL * (1.0 + abs(current)):
                        acts, current, improved = trial, v, True
        return tuple(acts)

    def _local_search(self, models, w, s: int) -> CeDecision:
        best_acts, best_v = None, -math.inf
        for start in self._starts(models):
            acts = self._ascend(models, w, s, start)
            v = self._mixture(models, w, acts, s)
            if v > best_v + VALUE_TIE_TOL * (1.0 + abs(best_v)) or best_acts is None:
                best_acts, best_v = acts, v
        pi = StationaryPolicy.deterministic(best_acts, self.prior.n_actions)
        return CeDecision(pi.action(s), pi, best_v, False)


def ce_act(
    prior: PriorMixture,
    interp: BeliefInterpreter,
    aug: AugmentedState,
    policy_search: str = "exhaustive",
    limit: int = DEFAULT_POLICY_LIMIT,
) -> CeDecision:
    """Certainty-equivalent choice at ``aug``.

    ``policy_search`` is ``"exhaustive"`` (capacity error above ``limit``) or
    ``"heuristic"`` (exhaustive when it fits, local search otherwise).
    """
    if policy_search not in ("exhaustive", "heuristic"):
        raise ArgumentError(f"policy_search must be 'exhaustive' or 'heuristic', got {policy_search!r}")
    search = PolicySearch(prior, interp, limit, heuristic=policy_search == "heuristic")
    return search.best(aug.belief, aug.physical_state)


def ce_q_estimate(prior: PriorMixture, interp: BeliefInterpreter, aug: AugmentedState, a: int) -> float:
    prior.candidates[0].check_applicable(aug.physical_state, a)
    return PolicySearch(prior, interp).q_values(aug.belief, aug.physical_state)[a]


def kstep_plan(
    prior: PriorMixture, aug: AugmentedState, shaping: PseudoReward | None = None, k: int = 1, planner: BayesPlanner | None = None
) -> PlanResult:
    """Exact expectimax over the next ``k`` rewards with a zero leaf (the k-step objective itself)."""
    if k < 0:
        raise ArgumentError(f"k must be >= 0, got {k}")
    planner = planner or BayesPlanner(prior, shaping, PlannerConfig(horizon=k), finite_horizon=True)
    return planner.plan(aug, k)


# --- agents ------------------------------------------------------------------------


class Agent:
    name = "agent"
    shaping: PseudoReward | None = None
    stochastic = False

    def action_distribution(self, aug: AugmentedState) -> dict[int, float]:
        raise NotImplementedError

    def act(self, aug: AugmentedState, rng: np.random.Generator | None = None) -> int:
        dist = self.action_distribution(aug)
        if len(dist) == 1:
            return next(iter(dist))
        if rng is None:
            raise ArgumentError(f"{self.name} is stochastic and needs an rng")
        actions = sorted(dist)
        p = np.array([dist[a] for a in actions])
        return int(actions[rng.choice(len(actions), p=p / p.sum())])

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class BayesOptimalAgent(Agent):
    """Receding-horizon expectimax in the (optionally shaped) BAMDP; ties go to the lowest action."""

    def __init__(self, prior: PriorMixture, shaping: PseudoReward | None = None, cfg: PlannerConfig | None = None):
        self.prior = prior
        self.shaping = shaping
        self.planner = BayesPlanner(prior, shaping, cfg)
        self.name = "bayes" if shaping is None else f"bayes+{shaping.name}"

    def plan(self, aug: AugmentedState) -> PlanResult:
        return self.planner.plan(aug)

    def action_distribution(self, aug: AugmentedState) -> dict[int, float]:
        return {self.plan(aug).best_action: 1.0}


class KStepAgent(Agent):
    """k-step learning-aware algorithm, optionally for a shaped BAMDP.

    Maximises the expected return of steps ``0..k`` (``k + 1`` rewards):
    while ``aug.depth <= k`` it plays the finite-horizon optimal action for
    the remaining ``k + 1 - depth`` steps, afterwards it replans ``k + 1``
    steps ahead.
    """

    def __init__(self, prior: PriorMixture, k: int, shaping: PseudoReward | None = None, cfg: PlannerConfig | None = None):
        if k < 0:
            raise ArgumentError(f"k must be >= 0, got {k}")
        self.prior = prior
        self.k = int(k)
        self.shaping = shaping
        base = cfg or PlannerConfig()
        self.planner = BayesPlanner(
            prior, shaping, PlannerConfig(horizon=self.k + 1, tie_tol=base.tie_tol, max_nodes=base.max_nodes), finite_horizon=True
        )
        self.name = f"kstep{k}" if shaping is None else f"kstep{k}+{shaping.name}"

    def remaining(self, aug: AugmentedState) -> int:
        return self.k + 1 - aug.depth if aug.depth <= self.k else self.k + 1

    def action_distribution(self, aug: AugmentedState) -> dict[int, float]:
        return {self.planner.plan(aug, self.remaining(aug)).best_action: 1.0}


class CertaintyEquivalentAgent(Agent):
    """Follows the stationary policy that is best under the current belief, held fixed.

    With a pseudo-reward and ``objective="shaped"`` the learner adds to each
    model's reward the expected one-step bonus ``F`` evaluated from the
    current statistic, held fixed like the belief. ``objective="extrinsic"``
    ignores the bonus. Beliefs only ever see extrinsic rewards.
    """

    def __init__(
        self,
        prior: PriorMixture,
        interp: BeliefInterpreter | None = None,
        shaping: PseudoReward | None = None,
        objective: str = "shaped",
        policy_search: str = "heuristic",
        limit: int = DEFAULT_POLICY_LIMIT,
    ):
        if objective not in CE_OBJECTIVES:
            raise ArgumentError(f"objective must be one of {CE_OBJECTIVES}, got {objective!r}")
        self.prior = prior
        self.interp = interp or BeliefInterpreter()
        self.shaping = shaping
        self.objective = objective
        self.search = PolicySearch(prior, self.interp, limit, heuristic=policy_search == "heuristic")
        self.name = "ce" if shaping is None else f"ce+{shaping.name}"
        self._bonus_models: dict[Hashable, tuple[FiniteMdp, ...]] = {}

    def _uses_bonus(self) -> bool:
        return self.shaping is not None and self.objective == "shaped"

    def bonus_models(self, belief: Belief, stat: Hashable) -> tuple[FiniteMdp, ...]:
        """Interpreted models with rewards ``R(s,a) + E[F(stat, s, a, r, s')]``."""
        key = (_models_key(self.interp, belief), stat)
        hit = self._bonus_models.get(key)
        if hit is not None:
            return hit
        models, _ = self.interp.models(self.prior, belief)
        out = []
        for m in models:
            R = m.expected_reward_sa.copy()
            for s in range(m.n_states):
                for a in m.applicable_actions(s):
                    bonus = 0.0
                    for sp in np.flatnonzero(m.transition[s, a] > 0):
                        rp = m.reward_distribution(s, a, int(sp))
                        for k in np.flatnonzero(rp > 0):
                            _, f = self.shaping.step(stat, s, a, float(m.reward_values[k]), int(sp))
                            bonus += m.transition[s, a, sp] * rp[k] * f
                    R[s, a] += bonus
            out.append(
                FiniteMdp.from_deterministic_rewards(
                    m.transition, R, m.initial_dist, m.discount, m.applicable, m.state_names, m.action_names
                )
            )
        hit = tuple(out)
        self._bonus_models[key] = hit
        return hit

    def decide(self, aug: AugmentedState) -> CeDecision:
        if self._uses_bonus():
            if aug.stats is None:
                raise ArgumentError("shaped certainty-equivalent agent needs the shaping statistic in aug.stats")
            models = self.bonus_models(aug.belief, aug.stats)
            key = ("bonus", _models_key(self.interp, aug.belief), aug.stats)
            return self.search.best(aug.belief, aug.physical_state, models, key)
        return self.search.best(aug.belief, aug.physical_state)

    def action_distribution(self, aug: AugmentedState) -> dict[int, float]:
        return {self.decide(aug).action: 1.0}


class FixedPolicyAgent(Agent):
    """Stationary MDP policy that ignores the history."""

    def __init__(self, policy: StationaryPolicy, name: str = "fixed"):
        self.policy = policy
        self.name = name
        self.stochastic = not policy.is_deterministic

    def action_distribution(self, aug: AugmentedState) -> dict[int, float]:
        row = self.policy.probs[aug.physical_state]
        return {int(a): float(row[a]) for a in np.flatnonzero(row > 0)}


class RandomAgent(Agent):
    name = "random"
    stochastic = True

    def __init__(self, prior: PriorMixture):
        self.prior = prior

    def action_distribution(self, aug: AugmentedState) -> dict[int, float]:
        acts = self.prior.applicable_actions(aug.physical_state)
        return {a: 1.0 / len(acts) for a in acts}


class EpsilonGreedyAgent(Agent):
    """Base agent's action with probability ``1 - eps``, uniform over applicable actions otherwise."""

    stochastic = True

    def __init__(self, base: Agent, prior: PriorMixture, epsilon: float):
        if not 0.0 <= epsilon <= 1.0:
            raise ArgumentError(f"epsilon must lie in [0, 1], got {epsilon}")
        self.base = base
        self.prior = prior
        self.epsilon = float(epsilon)
        self.shaping = base.shaping
        self.name = f"eps{epsilon:g}-{base.name}"

    def action_distribution(self, aug: AugmentedState) -> dict[int, float]:
        acts = self.prior.applicable_actions(aug.physical_state)
        out = {a: self.epsilon / len(acts) for a in acts}
        for a, p in self.base.action_distribution(aug).items():
            out[a] += (1.0 - self.epsilon) * p
        return out


class BoltzmannAgent(Agent):
    """Softmax over the certainty-equivalent Q estimates at temperature ``tau``."""

    stochastic = True

    def __init__(self, prior: PriorMixture, temperature: float, interp: BeliefInterpreter | None = None):
        if not temperature > 0:
            raise ArgumentError(f"temperature must be positive, got {temperature}")
        self.prior = prior
        self.temperature = float(temperature)
        self.search = PolicySearch(prior, interp or BeliefInterpreter())
        self.name = f"boltzmann{temperature:g}"

    def action_distribution(self, aug: AugmentedState) -> dict[int, float]:
        q = self.search.q_values(aug.belief, aug.physical_state)
        acts = sorted(q)
        z = np.array([q[a] for a in acts]) / self.temperature
        p = np.exp(z - z.max())
        p /= p.sum()
        return {a: float(pa) for a, pa in zip(acts, p)}


AGENTS = ("bayes", "ce", "kstep", "fixed", "eps-greedy", "boltzmann", "random")


def make_agent(
    name: str,
    prior: PriorMixture,
    shaping: PseudoReward | None = None,
    cfg: PlannerConfig | None = None,
    **params,
) -> Agent:
    """Agent from a config-style name and parameters."""
    if name == "bayes":
        return BayesOptimalAgent(prior, shaping, cfg)
    if name == "ce":
        return CertaintyEquivalentAgent(
            prior,
            BeliefInterpreter(params.get("interpreter", "exact")),
            shaping,
            params.get("objective", "shaped"),
            params.get("policy_search", "heuristic"),
            int(params.get("limit", DEFAULT_POLICY_LIMIT)),
        )
    if name == "kstep":
        return KStepAgent(prior, int(params.get("k", 5)), shaping, cfg)
    if name == "fixed":
        acts = params.get("actions")
        if acts is None:
            raise ArgumentError("fixed agent needs 'actions' (one action per state)")
        return FixedPolicyAgent(StationaryPolicy.deterministic(acts, prior.n_actions))
    if name == "eps-greedy":
        base = make_agent(params.get("base", "ce"), prior, shaping, cfg)
        return EpsilonGreedyAgent(base, prior, float(params.get("epsilon", 0.1)))
    if name == "boltzmann":
        return BoltzmannAgent(prior, float(params.get("temperature", 1.0)))
    if name == "random":
        return RandomAgent(prior)
    raise ArgumentError(f"unknown agent {name!r}; choose from {', '.join(AGENTS)}")
