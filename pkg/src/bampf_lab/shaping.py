"""History-dependent pseudo-rewards and potential-based shaping over BAMDP states.

A pseudo-reward reads the history through a ``ShapingStatistic``: a hashable
value folded over the transitions of the history by a deterministic update
rule. Potentials are bounded functions of such a statistic, and
``make_bampf`` turns a potential into ``F(h_t) = gamma * phi(h_t) - phi(h_{t-1})``.

Statistics that need a model of the environment (posterior entropy,
predictive probabilities) carry their own reference prior, because a
pseudo-reward is part of the learner and is fixed before the environment is
drawn. Observations outside the reference model's support leave its internal
posterior unchanged.

Transitions through the synthesized absorbing extension (state index
``n_states``, action index ``n_actions``, reward 0) are accepted by every
built-in statistic; certification relies on them.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Sequence

import numpy as np

from bampf_lab.bamdp import BayesPlanner, History, PlannerConfig, PriorMixture, _outcomes, initial_state, AugmentedState
from bampf_lab.errors import ArgumentError
from bampf_lab.mdp import FiniteMdp

BUILTINS = (
    "state_potential_pbsf",
    "unique_state_count",
    "information_gain",
    "entropy_bonus",
    "subgoal_count",
    "negative_surprise",
    "prediction_error",
)

DEFAULT_CLIP = 10.0


@dataclass(frozen=True, eq=False)
class ShapingStatistic:
    """Sufficient summary of a history for one pseudo-reward.

    ``update(value, s, a, r, s_next)`` must be deterministic and return a
    hashable value. ``stationary_after_collapse`` promises that once the
    posterior of ``model`` is degenerate the potential is constant along every
    continuation.
    """

    name: str
    initial: Callable[[int], Hashable]
    update: Callable[[Hashable, int, int, float, int], Hashable]
    stationary_after_collapse: bool = False
    model: PriorMixture | None = None

    def replay(self, history: History) -> Hashable:
        value = self.initial(history.states[0])
        for s, a, r, sp in history.transitions():
            value = self.update(value, s, a, r, sp)
        return value


@dataclass(frozen=True, eq=False)
class Potential:
    statistic: ShapingStatistic
    phi: Callable[[Hashable], float]
    phi_max: float

    def __post_init__(self) -> None:
        if not (self.phi_max >= 0 and math.isfinite(self.phi_max)):
            raise ArgumentError(f"phi_max must be finite and nonnegative, got {self.phi_max}")


@dataclass(frozen=True, eq=False)
class PseudoReward:
    """``F(h_{t+1})`` computed from the statistic before and after the last transition."""

    statistic: ShapingStatistic
    f: Callable[[Hashable, int, int, float, int, Hashable], float]
    f_max: float
    claimed_potential: Potential | None = None
    name: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)

    def initial(self, s0: int) -> Hashable:
        return self.statistic.initial(s0)

    def step(self, value: Hashable, s: int, a: int, r: float, s_next: int) -> tuple[Hashable, float]:
        new = self.statistic.update(value, s, a, r, s_next)
        return new, float(self.f(value, s, a, r, s_next, new))

    def along(self, history: History) -> list[float]:
        """``F`` at every step of ``history``."""
        value = self.initial(history.states[0])
        out = []
        for s, a, r, sp in history.transitions():
            value, f = self.step(value, s, a, r, sp)
            out.append(f)
        return out


def make_bampf(potential: Potential, discount: float, name: str = "bampf") -> PseudoReward:
    """``F = gamma * phi(new statistic) - phi(old statistic)``."""
    phi = potential.phi
    g = float(discount)

    def f(old, s, a, r, sp, new):
        return g * phi(new) - phi(old)

    return PseudoReward(potential.statistic, f, (1.0 + g) * potential.phi_max, potential, name)


def zero_shaping() -> PseudoReward:
    stat = ShapingStatistic("none", lambda s0: 0, lambda v, s, a, r, sp: 0, stationary_after_collapse=True)
    return make_bampf(Potential(stat, lambda v: 0.0, 0.0), 0.0, name="zero")


def constant_shaping(c: float) -> PseudoReward:
    """``F ≡ c`` (not declared as a potential; certification must discover one)."""
    stat = ShapingStatistic("none", lambda s0: 0, lambda v, s, a, r, sp: 0)
    return PseudoReward(stat, lambda *args: c, abs(c), None, "constant", {"c": c})


# --- statistics -------------------------------------------------------------------


def current_state_statistic() -> ShapingStatistic:
    return ShapingStatistic("current_state", lambda s0: int(s0), lambda v, s, a, r, sp: int(sp))


def visited_statistic(state_key: Sequence[Hashable] | None = None) -> ShapingStatistic:
    """Set of visited (keyed) states, including the initial one."""

    def key(s: int) -> Hashable:
        if state_key is None:
            return int(s)
        return state_key[s] if s < len(state_key) else ("extra", int(s))

    return ShapingStatistic(
        "visited", lambda s0: frozenset((key(s0),)), lambda v, s, a, r, sp: v | {key(sp)}
    )


def subgoal_statistic(subgoals: Sequence[int]) -> ShapingStatistic:
    goals = frozenset(int(g) for g in subgoals)

    def initial(s0):
        return frozenset({s0} & goals)

    def update(v, s, a, r, sp):
        return v | {sp} if sp in goals else v

    return ShapingStatistic("subgoals", initial, update)


def _posterior_step(model: PriorMixture, w: tuple[float, ...], s, a, r, sp) -> tuple[float, ...]:
    new = np.asarray(w) * model.likelihoods(s, a, r, sp)
    total = new.sum()
    if not total > 0:
        return w
    new = new / total
    new[new < 1e-15] = 0.0
    return tuple(float(x) for x in np.round(new / new.sum(), 14))


def posterior_statistic(model: PriorMixture) -> ShapingStatistic:
    """Internal posterior of ``model`` as a weight tuple."""
    w0 = tuple(float(x) for x in model.prior_belief.weights)

    def initial(s0):
        w = np.asarray(w0) * np.array([m.initial_dist[s0] for m in model.candidates])
        if w.sum() <= 0:
            return w0
        return tuple(float(x) for x in np.round(w / w.sum(), 14))

    def update(v, s, a, r, sp):
        return _posterior_step(model, v, s, a, r, sp)

    return ShapingStatistic("posterior", initial, update, stationary_after_collapse=True, model=model)


def predictive_statistic(model: PriorMixture) -> ShapingStatistic:
    """``(posterior, log p(s_t | h_{t-1}))`` with the predictive probability of the last state."""
    post = posterior_statistic(model)

    def initial(s0):
        return (post.initial(s0), 0.0)

    def update(v, s, a, r, sp):
        w, _ = v
        p = float(np.asarray(w) @ model.transition_likelihoods(s, a, sp))
        logp = math.log(p) if p > 0 else -math.inf
        return (_posterior_step(model, w, s, a, r, sp), logp)

    return ShapingStatistic("predictive", initial, update, model=model)


def action_count_statistic(n_states: int, n_actions: int) -> ShapingStatistic:
    """Flattened ``(S, A)`` visit counts of the original state/action space."""

    def update(v, s, a, r, sp):
        if s >= n_states or a >= n_actions:
            return v
        i = s * n_actions + a
        return v[:i] + (v[i] + 1,) + v[i + 1 :]

    return ShapingStatistic("action_counts", lambda s0: (0,) * (n_states * n_actions), update)


def _entropy(w) -> float:
    w = np.asarray(w, dtype=np.float64)
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())


def conditional_action_entropy(counts: Sequence[int], n_actions: int) -> float:
    """``H(a|s)`` from visit counts, weighting states by their visit frequency."""
    c = np.asarray(counts, dtype=np.float64).reshape(-1, n_actions)
    total = c.sum()
    if total == 0:
        return 0.0
    h = 0.0
    for row in c:
        n = row.sum()
        if n > 0:
            h += (n / total) * _entropy(row / n)
    return h


# --- built-ins --------------------------------------------------------------------


def manhattan_potential(width: int, height: int, goal: Sequence[int]) -> np.ndarray:
    """``phi(s) = -(|x - g_x| + |y - g_y|)`` over grid cells indexed ``y * width + x``."""
    gx, gy = goal
    return np.array([-(abs(x - gx) + abs(y - gy)) for y in range(height) for x in range(width)], dtype=np.float64)


def _need(params: dict, key: str, name: str):
    if params.get(key) is None:
        raise ArgumentError(f"built-in {name!r} needs parameter {key!r}")
    return params[key]


def make_builtin(
    name: str, prior: PriorMixture | None = None, *, scale: float = 1.0, discount: float | None = None, **params: Any
) -> PseudoReward:
    """Construct a catalogued pseudo-reward, multiplied by ``scale``.

    ``prior`` supplies the discount, the state/action sizes and the reference
    model of model-based statistics; each can be overridden by parameters
    (``discount``, ``model``).
    """
    if name not in BUILTINS:
        raise ArgumentError(f"unknown shaping {name!r}; choose from {', '.join(BUILTINS)}")
    beta = float(scale)
    if discount is None:
        if prior is None:
            raise ArgumentError(f"built-in {name!r} needs a prior or an explicit discount")
        discount = prior.discount
    model = params.pop("model", None) or prior
    record = {"scale": beta, **params}
    ann = prior.annotations if prior is not None else {}
    if params.get("state_key") is None and "episode_length" in ann and prior is not None:
        # episodic grids: shaping reads the grid cell, not the step counter
        params["state_key"] = [s // int(ann["episode_length"]) for s in range(prior.n_states)]
    for k in ("width", "height", "goal"):
        if params.get(k) is None and k in ann:
            params[k] = ann[k]

    def potential_backed(stat: ShapingStatistic, phi: Callable[[Hashable], float], phi_max: float) -> PseudoReward:
        pot = Potential(stat, lambda v: beta * phi(v), abs(beta) * phi_max)
        out = make_bampf(pot, discount, name)
        out.params.update(record)
        return out

    if name == "state_potential_pbsf":
        if params.get("potential") is not None:
            table = np.asarray(params["potential"], dtype=np.float64)
        else:
            table = manhattan_potential(
                _need(params, "width", name), _need(params, "height", name), _need(params, "goal", name)
            )
        cell_of = params.get("state_key")

        def phi(v):
            if v >= len(cell_of if cell_of is not None else table):
                return 0.0
            return float(table[cell_of[v]] if cell_of is not None else table[v])

        return potential_backed(current_state_statistic(), phi, float(np.max(np.abs(table), initial=0.0)))

    if name == "unique_state_count":
        key = params.get("state_key")
        n = len(set(key)) if key is not None else (model.n_states if model is not None else None)
        if n is None:
            raise ArgumentError("unique_state_count needs a prior or a 'state_key' to bound phi")
        return potential_backed(visited_statistic(key), lambda v: float(len(v)), float(n))

    if name == "subgoal_count":
        goals = _need(params, "subgoals", name)
        return potential_backed(subgoal_statistic(goals), lambda v: float(len(v)), float(len(set(goals))))

    if name == "entropy_bonus":
        n_s = params.get("n_states") or (model.n_states if model is not None else None)
        n_a = params.get("n_actions") or (model.n_actions if model is not None else None)
        if n_s is None or n_a is None:
            raise ArgumentError("entropy_bonus needs a prior or n_states/n_actions")
        stat = action_count_statistic(int(n_s), int(n_a))
        return potential_backed(stat, lambda v: conditional_action_entropy(v, int(n_a)), math.log(n_a) if n_a > 1 else 0.0)

    if model is None:
        raise ArgumentError(f"built-in {name!r} needs a reference model (prior)")

    if name == "information_gain":
        stat = posterior_statistic(model)
        return potential_backed(stat, lambda v: -_entropy(v), math.log(model.n_candidates))

    clip = float(params.get("clip", DEFAULT_CLIP))
    record["clip"] = clip
    if name == "negative_surprise":
        # log-probability of the last state, i.e. minus its surprise
        stat = predictive_statistic(model)
        return potential_backed(stat, lambda v: max(v[1], -clip), clip)

    # prediction_error: surprise of the observed next state, no potential
    stat = predictive_statistic(model)

    def f(old, s, a, r, sp, new):
        return beta * min(-new[1], clip)

    return PseudoReward(stat, f, abs(beta) * clip, None, name, record)


# --- shaped BAMDP --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShapedBamdp:
    """BAMDP whose step reward is ``R̄(s̄, a) + F(h_{t+1})``.

    Beliefs and histories only ever see extrinsic rewards.
    """

    prior: PriorMixture
    shaping: PseudoReward

    def initial_state(self, s0: int) -> AugmentedState:
        return initial_state(self.prior, s0, self.shaping)

    def successors(self, aug: AugmentedState, a: int) -> list[tuple[AugmentedState, float, float, float]]:
        """``(successor, probability, extrinsic reward, pseudo-reward)``."""
        s = aug.physical_state
        self.prior.candidates[0].check_applicable(s, a)
        out = []
        for sp, r, p, b in _outcomes(self.prior, aug.belief, s, a):
            stats, f = self.shaping.step(aug.stats, s, a, r, sp)
            out.append((AugmentedState(sp, b, stats, aug.depth + 1), p, r, f))
        return out

    def planner(self, cfg: PlannerConfig | None = None, *, finite_horizon: bool = False) -> BayesPlanner:
        return BayesPlanner(self.prior, self.shaping, cfg, finite_horizon=finite_horizon)

    def plan(self, aug: AugmentedState, cfg: PlannerConfig | None = None):
        return self.planner(cfg).plan(aug)


def shape_bamdp(prior: PriorMixture, f: PseudoReward) -> ShapedBamdp:
    return ShapedBamdp(prior, f)


# --- certification ------------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    history: History
    action: int
    reward: float
    next_state: int
    delta: float
    f_value: float


@dataclass(frozen=True)
class BampfCertificate:
    verdict: str  # "certified-bampf" | "witness-found" | "inconclusive"
    witness: Witness | None
    max_residual: float
    truncation_bound: float
    histories_checked: int = 0
    rollout_steps: int = 0
    phi_hat_initial: float | None = None

    def to_dict(self) -> dict:
        w = self.witness
        return {
            "verdict": self.verdict,
            "max_residual": self.max_residual,
            "truncation_bound": self.truncation_bound,
            "histories_checked": self.histories_checked,
            "rollout_steps": self.rollout_steps,
            "phi_hat_initial": self.phi_hat_initial,
            "witness": None
            if w is None
            else {
                "history": {"states": list(w.history.states), "actions": list(w.history.actions), "rewards": list(w.history.rewards)},
                "action": w.action,
                "reward": w.reward,
                "next_state": w.next_state,
                "delta": w.delta,
                "f_value": w.f_value,
            },
        }


def rollout_steps_for(gamma: float, f_max: float, tol: float) -> int:
    """Smallest ``T`` with ``gamma^(T+1) f_max / (1 - gamma) <= tol / 4``."""
    if f_max == 0.0 or gamma == 0.0:
        return 0
    need = math.log(tol * (1.0 - gamma) / (4.0 * f_max)) / math.log(gamma) - 1.0
    return max(0, int(math.ceil(need)))


def check_bampf(
    f: PseudoReward, domain: PriorMixture, depth: int, tol: float = 1e-9, max_histories: int = 200_000
) -> BampfCertificate:
    """Search the realizable histories of ``domain`` up to ``depth`` for a non-potential step.

    With a claimed potential each transition is checked against
    ``gamma * phi(h') - phi(h)``. Otherwise the potential is reconstructed as
    ``phi(h) = -sum_t gamma^t F(h (a_abs 0 s_abs)^(t+1))`` along the absorbing
    extension, truncated after ``T`` terms so that the tail is at most
    ``tol / 4``, and a step whose residual exceeds ``2 * truncation + tol`` is a
    witness. The shallowest witness is returned, preferring ones whose next
    state differs from the current state.
    """
    if not (f.f_max is not None and math.isfinite(f.f_max)):
        raise ArgumentError("check_bampf needs a finite f_max")
    if depth < 1:
        raise ArgumentError(f"depth must be >= 1, got {depth}")
    g = domain.discount
    n_s, n_a = domain.n_states, domain.n_actions
    pot = f.claimed_potential
    if pot is not None:
        T_roll, trunc = 0, 0.0
        threshold = tol
    else:
        T_roll = rollout_steps_for(g, f.f_max, tol)
        trunc = g ** (T_roll + 1) * f.f_max / (1.0 - g) if f.f_max > 0 else 0.0
        threshold = 2.0 * trunc + tol

    phi_cache: dict[tuple, float] = {}

    def phi_hat(stat: Hashable, s: int) -> float:
        key = (stat, s)
        hit = phi_cache.get(key)
        if hit is not None:
            return hit
        total = 0.0
        cur_stat, cur_s = stat, s
        for t in range(T_roll + 1):
            cur_stat, val = f.step(cur_stat, cur_s, n_a, 0.0, n_s)
            cur_s = n_s
            total += g**t * val
        phi_cache[key] = -total
        return -total

    def potential(stat: Hashable, s: int) -> float:
        return pot.phi(stat) if pot is not None else phi_hat(stat, s)

    init = domain.mean_initial_dist()
    queue: deque = deque()
    for s0 in np.flatnonzero(init > 0):
        aug = initial_state(domain, int(s0))
        queue.append((History.initial(int(s0)), aug.belief, f.initial(int(s0))))

    max_res = 0.0
    checked = 0
    truncated = False
    found: list[tuple[tuple, Witness]] = []
    found_depth = None
    while queue:
        hist, belief, stat = queue.popleft()
        if found_depth is not None and hist.length > found_depth:
            break
        if checked >= max_histories:
            truncated = True
            break
        checked += 1
        s = hist.last_state
        base = potential(stat, s)
        for a in domain.applicable_actions(s):
            for sp, r, p, b in _outcomes(domain, belief, s, a):
                new_stat, fv = f.step(stat, s, a, r, sp)
                delta = fv - (g * potential(new_stat, sp) - base)
                max_res = max(max_res, abs(delta))
                if abs(delta) > threshold:
                    found_depth = hist.length
                    w = Witness(hist, a, r, sp, delta, fv)
                    found.append(((sp == s, len(found)), w))
                if hist.length + 1 < depth and found_depth is None:
                    queue.append((hist.extend(a, r, sp), b, new_stat))
    phi0 = None
    if init.size and pot is None:
        s0 = int(np.flatnonzero(init > 0)[0])
        phi0 = phi_hat(f.initial(s0), s0)
    if found:
        witness = min(found, key=lambda item: item[0])[1]
        return BampfCertificate("witness-found", witness, max_res, trunc, checked, T_roll, phi0)
    verdict = "inconclusive" if truncated else "certified-bampf"
    return BampfCertificate(verdict, None, max_res, trunc, checked, T_roll, phi0)


@dataclass(frozen=True)
class DisagreementRecord:
    """Predicted optimal initial actions of the constructed instance.

    ``absorb_action`` is ``a`` and ``witness_action`` is ``a'`` in the
    construction; ``q_gap`` is the predicted unshaped ``Q(a) - Q(a')``.
    """

    start_state: int
    absorb_action: int
    witness_action: int
    delta: float
    q_gap: float
    unshaped_optimal: int
    shaped_optimal: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def build_necessity_counterexample(
    f: PseudoReward, certificate: BampfCertificate, domain: PriorMixture, tol: float = 1e-9
) -> tuple[PriorMixture, DisagreementRecord]:
    """Deterministic single-model instance on which ``f`` changes the Bayes-optimal first action.

    The instance lives in the absorbing extension of ``domain`` (one extra
    state and action) so ``f`` reads its histories unchanged. From the
    witness state ``s1``, the absorbing action pays ``r' + delta/2`` and the
    witness action reaches ``s2`` paying ``r'``; everything else leads to the
    absorbing state with reward 0.
    """
    w = certificate.witness
    if certificate.verdict != "witness-found" or w is None:
        raise ArgumentError("certificate carries no witness")
    if abs(w.delta) <= 2.0 * certificate.truncation_bound + tol:
        raise ArgumentError(f"witness residual {w.delta} is within the certification error; refusing to build")
    if w.history.length != 0:
        raise ArgumentError("the construction needs a witness at an initial history (length 0)")
    s1, s2, a_prime = w.history.last_state, w.next_state, w.action
    if s1 == s2:
        raise ArgumentError("the construction needs a witness transition to a different state")
    n_s, n_a = domain.n_states, domain.n_actions
    absorb_s, absorb_a = n_s, n_a
    N, A = n_s + 1, n_a + 1
    T = np.zeros((N, A, N))
    R = np.zeros((N, A))
    mask = np.zeros((N, A), dtype=bool)
    T[:, absorb_a, absorb_s] = 1.0
    mask[:, absorb_a] = True
    mask[s1, a_prime] = True
    T[s1, a_prime, :] = 0.0
    T[s1, a_prime, s2] = 1.0
    r_prime = w.reward
    R[s1, absorb_a] = r_prime + w.delta / 2.0
    R[s1, a_prime] = r_prime
    init = np.zeros(N)
    init[s1] = 1.0
    sn = list(domain.state_names or [f"s{i}" for i in range(n_s)]) + ["s_abs"]
    an = list(domain.action_names or [f"a{j}" for j in range(n_a)]) + ["a_abs"]
    mdp = FiniteMdp.from_deterministic_rewards(T, R, init, domain.discount, mask, sn, an)
    prior = PriorMixture(
        (mdp,),
        [1.0],
        name="necessity-counterexample",
        annotations={"s1": s1, "s2": s2, "absorb_state": absorb_s, "absorb_action": absorb_a, "witness_action": a_prime},
    )
    positive = w.delta / 2.0 > 0
    record = DisagreementRecord(
        start_state=s1,
        absorb_action=absorb_a,
        witness_action=a_prime,
        delta=w.delta,
        q_gap=w.delta / 2.0,
        unshaped_optimal=absorb_a if positive else a_prime,
        shaped_optimal=a_prime if positive else absorb_a,
    )
    return prior, record


# --- random potentials (property campaigns) ------------------------------------------------

POTENTIAL_FAMILIES = ("state", "visited", "entropy-state")


def random_potential(prior: PriorMixture, rng: np.random.Generator, family: str | None = None, bound: float = 2.0) -> Potential:
    """Bounded random potential over one of three statistic families.

    ``state``: a table over the current state. ``visited``: a table over the
    set of visited states. ``entropy-state``: a scaled negative posterior
    entropy plus a state table.
    """
    if family is None:
        family = POTENTIAL_FAMILIES[int(rng.integers(len(POTENTIAL_FAMILIES)))]
    n_s = prior.n_states
    table = rng.uniform(-bound, bound, size=n_s + 1)
    table[n_s] = 0.0
    if family == "state":
        return Potential(current_state_statistic(), lambda v: float(table[v]), bound)
    if family == "visited":
        masks = rng.uniform(-bound, bound, size=2 ** (n_s + 1))
        stat = visited_statistic()
        return Potential(stat, lambda v: float(masks[sum(1 << s for s in v)]), bound)
    if family == "entropy-state":
        post = posterior_statistic(prior)
        c = float(rng.uniform(0.0, bound))
        stat = ShapingStatistic(
            "posterior+state",
            lambda s0: (post.initial(s0), int(s0)),
            lambda v, s, a, r, sp: (post.update(v[0], s, a, r, sp), int(sp)),
            model=prior,
        )
        return Potential(stat, lambda v: -c * _entropy(v[0]) + float(table[v[1]]), c * math.log(prior.n_candidates) + bound)
    raise ArgumentError(f"unknown potential family {family!r}; choose from {', '.join(POTENTIAL_FAMILIES)}")
