"""Rollouts, expected returns, Bayesian regret and checks of the shaping guarantees.

Expected returns are computed over the BAMDP itself: sampling a candidate
from the prior and then acting in it has the same outcome law as stepping
the posterior-predictive dynamics, so the exact mode pushes probability mass
forward through merged augmented states one step at a time. Every
infinite-horizon quantity is reported as a finite-horizon value together with
a geometric tail bound.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

from bampf_lab.agents import Agent, BayesOptimalAgent, KStepAgent, kstep_plan
from bampf_lab.bamdp import (
    AugmentedState,
    BayesPlanner,
    Belief,
    PlannerConfig,
    PriorMixture,
    _outcomes,
    initial_state,
    posterior_update,
)
from bampf_lab.errors import ArgumentError, CapacityError
from bampf_lab.shaping import Potential, PseudoReward, make_bampf

Z99 = 2.5758293035489004  # two-sided 99% normal quantile
MAX_EXACT_NODES = 1_000_000


# --- rollouts ------------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    t: int
    s: int
    a: int
    r: float
    f: float
    belief_id: int


@dataclass(frozen=True)
class Trace:
    """One simulated episode; ``beliefs[belief_id]`` is the posterior before step ``t``."""

    seed: int
    model_index: int
    steps: tuple[StepRecord, ...]
    beliefs: tuple[tuple[float, ...], ...]
    extrinsic_return: float
    shaped_return: float
    horizon: int
    tail_bound: float
    final_state: int

    def discounted(self, gamma: float, key: str = "r") -> float:
        return float(sum(gamma**st.t * getattr(st, key) for st in self.steps))

    @property
    def actions(self) -> list[int]:
        return [st.a for st in self.steps]

    @property
    def states(self) -> list[int]:
        return [st.s for st in self.steps] + [self.final_state]


def _agent_view(s: int, belief: Belief, stat: Hashable, depth: int) -> AugmentedState:
    return AugmentedState(s, belief, stat, depth)


def _rollout_one(prior: PriorMixture, agent: Agent, shaping: PseudoReward | None, horizon: int, seed: int) -> Trace:
    env_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
    env_rng, agent_rng = np.random.default_rng(env_ss), np.random.default_rng(agent_ss)
    g = prior.discount
    i = int(env_rng.choice(prior.n_candidates, p=prior.weights))
    m = prior.candidates[i]
    s = int(env_rng.choice(m.n_states, p=m.initial_dist))
    belief = initial_state(prior, s).belief
    agent_f = agent.shaping
    stat = shaping.initial(s) if shaping is not None else None
    astat = agent_f.initial(s) if agent_f is not None else None
    beliefs: list[tuple[float, ...]] = []
    ids: dict[tuple[float, ...], int] = {}
    steps = []
    G = Gs = 0.0
    for t in range(horizon):
        bid = ids.setdefault(belief.weights, len(beliefs))
        if bid == len(beliefs):
            beliefs.append(belief.weights)
        a = agent.act(_agent_view(s, belief, astat, t), agent_rng)
        sp = int(env_rng.choice(m.n_states, p=m.transition[s, a]))
        rp = m.reward_distribution(s, a, sp)
        r = float(m.reward_values[int(env_rng.choice(rp.size, p=rp))])
        f = 0.0
        if shaping is not None:
            stat, f = shaping.step(stat, s, a, r, sp)
        if agent_f is not None:
            astat = stat if agent_f is shaping else agent_f.step(astat, s, a, r, sp)[0]
        steps.append(StepRecord(t, s, a, r, f, bid))
        G += g**t * r
        Gs += g**t * (r + f)
        belief = posterior_update(prior, belief, s, a, r, sp)
        s = sp
    tail = g**horizon * prior.r_max / (1.0 - g)
    return Trace(seed, i, tuple(steps), tuple(beliefs), G, Gs, horizon, tail, s)


def rollout(
    prior: PriorMixture,
    agent: Agent,
    shaping: PseudoReward | None = None,
    horizon: int = 100,
    seeds: Iterable[int] = (0,),
    jobs: int = 1,
) -> list[Trace]:
    """Simulate ``agent`` once per seed; traces come back in seed order whatever ``jobs`` is.

    Each seed drives two independent generators (environment and agent), so
    a trace depends only on its own seed.
    """
    if horizon < 1:
        raise ArgumentError(f"horizon must be >= 1, got {horizon}")
    seeds = [int(x) for x in seeds]
    if jobs <= 1 or len(seeds) <= 1:
        return [_rollout_one(prior, agent, shaping, horizon, sd) for sd in seeds]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda sd: _rollout_one(prior, agent, shaping, horizon, sd), seeds))


# --- expected returns -------------------------------------------------------------------


@dataclass(frozen=True)
class ReturnEstimate:
    """Finite-horizon expected returns; ``error`` bounds the gap to the infinite-horizon value."""

    value: float
    error: float
    shaped_value: float | None
    shaped_error: float | None
    horizon: int
    mode: str
    nodes: int = 0
    samples: int = 0

    def __iter__(self):
        return iter((self.value, self.error))


def _tail(prior: PriorMixture, shaping: PseudoReward | None, horizon: int) -> tuple[float, float | None]:
    g = prior.discount
    ext = g**horizon * prior.r_max / (1.0 - g)
    if shaping is None:
        return ext, None
    if shaping.claimed_potential is not None:
        return ext, ext + g**horizon * shaping.claimed_potential.phi_max
    return ext, ext + g**horizon * shaping.f_max / (1.0 - g)


def _initial_layer(prior: PriorMixture, shaping, agent_f) -> dict:
    layer: dict[tuple, list] = {}
    init = prior.mean_initial_dist()
    for s0 in np.flatnonzero(init > 0):
        s0 = int(s0)
        b = initial_state(prior, s0).belief
        stat = shaping.initial(s0) if shaping is not None else None
        astat = agent_f.initial(s0) if agent_f is not None else None
        key = (s0, b.weights, stat, astat)
        layer[key] = [float(init[s0]), b]
    return layer


def forward_layers(
    prior: PriorMixture,
    agent: Agent,
    shaping: PseudoReward | None,
    horizon: int,
    max_nodes: int = MAX_EXACT_NODES,
    visit=None,
):
    """Push the state distribution forward ``horizon`` steps under ``agent``.

    Yields nothing; returns ``(E sum gamma^t r, E sum gamma^t (r + F), nodes)``.
    ``visit(t, aug, prob, dist)`` is called at every merged node, where
    ``aug`` is the agent's view and ``dist`` its action distribution.
    """
    g = prior.discount
    agent_f = agent.shaping
    layer = _initial_layer(prior, shaping, agent_f)
    G = Gs = 0.0
    nodes = 0
    for t in range(horizon):
        nxt: dict[tuple, list] = {}
        for (s, _, stat, astat), (prob, b) in layer.items():
            nodes += 1
            if nodes > max_nodes:
                raise CapacityError(f"exact evaluation exceeded {max_nodes} augmented-state nodes")
            view = AugmentedState(s, b, astat, t)
            dist = agent.action_distribution(view)
            if visit is not None:
                visit(t, view, prob, dist)
            for a, pa in dist.items():
                if pa <= 0:
                    continue
                for sp, r, p, b2 in _outcomes(prior, b, s, a):
                    w = prob * pa * p
                    f = 0.0
                    stat2 = stat
                    if shaping is not None:
                        stat2, f = shaping.step(stat, s, a, r, sp)
                    astat2 = astat
                    if agent_f is not None:
                        astat2 = stat2 if agent_f is shaping else agent_f.step(astat, s, a, r, sp)[0]
                    G += g**t * w * r
                    Gs += g**t * w * (r + f)
                    key = (sp, b2.weights, stat2, astat2)
                    hit = nxt.get(key)
                    if hit is None:
                        nxt[key] = [w, b2]
                    else:
                        hit[0] += w
        layer = nxt
    return G, Gs, nodes


def expected_return(
    prior: PriorMixture,
    agent: Agent,
    shaping: PseudoReward | None = None,
    horizon: int = 200,
    mode: str = "exact",
    samples: int = 1000,
    seed: int = 0,
    max_nodes: int = MAX_EXACT_NODES,
) -> ReturnEstimate:
    """``E[sum_{t<H} gamma^t r_t]`` (and the shaped analogue) for ``agent`` over the prior.

    ``mode="exact"`` sums over every outcome branch (capacity error above
    ``max_nodes`` merged nodes); ``mode="mc"`` averages ``samples`` rollouts
    with seeds ``seed, seed + 1, ...`` and adds a 99% normal half-width to the
    tail bound.
    """
    if horizon < 0:
        raise ArgumentError(f"horizon must be >= 0, got {horizon}")
    tail, stail = _tail(prior, shaping, horizon)
    if mode == "exact":
        G, Gs, nodes = forward_layers(prior, agent, shaping, horizon, max_nodes)
        return ReturnEstimate(G, tail, Gs if shaping is not None else None, stail, horizon, mode, nodes)
    if mode != "mc":
        raise ArgumentError(f"mode must be 'exact' or 'mc', got {mode!r}")
    if samples < 2:
        raise ArgumentError("monte-carlo mode needs at least 2 samples")
    traces = rollout(prior, agent, shaping, max(horizon, 1), range(seed, seed + samples))
    G = np.array([tr.extrinsic_return for tr in traces])
    hw = Z99 * G.std(ddof=1) / math.sqrt(samples)
    sv = se = None
    if shaping is not None:
        Gs = np.array([tr.shaped_return for tr in traces])
        sv = float(Gs.mean())
        se = stail + Z99 * Gs.std(ddof=1) / math.sqrt(samples)
    return ReturnEstimate(float(G.mean()), tail + hw, sv, se, horizon, mode, 0, samples)


def optimal_value(prior: PriorMixture, planner: BayesPlanner) -> tuple[float, float]:
    """``E_{s0}[V̄*(<s0, h0>)]`` and its error bound."""
    init = prior.mean_initial_dist()
    v = e = 0.0
    for s0 in np.flatnonzero(init > 0):
        res = planner.plan(initial_state(prior, int(s0), planner.shaping))
        v += init[s0] * res.value
        e += init[s0] * res.error_bound
    return float(v), float(e)


# --- regret ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class RegretEstimate:
    value: float
    half_width: float


@dataclass(frozen=True)
class RegretReport:
    """Bayesian regret of an agent by two routes.

    ``direct`` is ``V̄* - E[Ḡ]``; ``pdl`` is the expected discounted sum of
    per-step gaps ``V̄*(s̄_t) - Q̄*(s̄_t, a_t)`` along the agent's own
    trajectories. Half-widths combine planner error bounds, horizon tails and
    (in Monte-Carlo mode) 99% sampling half-widths.
    """

    direct: RegretEstimate | None
    pdl: RegretEstimate | None
    samples: int
    horizon: int
    planner_horizon: int
    mode: str

    @property
    def agree(self) -> bool:
        if self.direct is None or self.pdl is None:
            return True
        return abs(self.direct.value - self.pdl.value) <= self.direct.half_width + self.pdl.half_width

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"samples": self.samples, "horizon": self.horizon, "planner_horizon": self.planner_horizon, "mode": self.mode}
        for name in ("direct", "pdl"):
            est = getattr(self, name)
            out[name] = None if est is None else {"value": est.value, "half_width": est.half_width}
        out["agree"] = self.agree
        return out


def bayesian_regret(
    prior: PriorMixture,
    agent: Agent,
    horizon: int = 200,
    method: str = "both",
    samples: int | None = None,
    cfg: PlannerConfig | None = None,
    planner: BayesPlanner | None = None,
    seed: int = 0,
) -> RegretReport:
    """Regret of ``agent`` against the Bayes-optimal value (``method``: direct, pdl or both).

    ``samples=None`` evaluates exactly over all outcome branches, otherwise by
    Monte Carlo over that many seeded rollouts.
    """
    if method not in ("direct", "pdl", "both"):
        raise ArgumentError(f"method must be 'direct', 'pdl' or 'both', got {method!r}")
    planner = planner or BayesPlanner(prior, None, cfg)
    g = prior.discount
    v_star, v_err = optimal_value(prior, planner)
    tail = g**horizon * prior.r_max / (1.0 - g)
    mode = "exact" if samples is None else "mc"
    direct = pdl = None

    if samples is None:
        acc = {"gap": 0.0, "err": 0.0}

        def visit(t, view, prob, dist):
            res = planner.plan(AugmentedState(view.physical_state, view.belief, None, t))
            for a, pa in dist.items():
                acc["gap"] += g**t * prob * pa * (res.value - res.action_values[a])
            acc["err"] += g**t * prob * 2.0 * res.error_bound

        need_pdl = method in ("pdl", "both")
        G, _, _ = forward_layers(prior, agent, None, horizon, visit=visit if need_pdl else None)
        if method in ("direct", "both"):
            direct = RegretEstimate(v_star - G, v_err + tail)
        if need_pdl:
            # the remainder after the horizon is gamma^H times a value gap in [-2R/(1-g), 2R/(1-g)]
            pdl = RegretEstimate(acc["gap"], acc["err"] + 2.0 * tail)
        return RegretReport(direct, pdl, 0, horizon, planner.cfg.horizon, mode)

    traces = rollout(prior, agent, None, horizon, range(seed, seed + samples))
    if method in ("direct", "both"):
        G = np.array([tr.extrinsic_return for tr in traces])
        hw = Z99 * G.std(ddof=1) / math.sqrt(samples)
        direct = RegretEstimate(v_star - float(G.mean()), v_err + tail + hw)
    if method in ("pdl", "both"):
        sums, errs = [], []
        for tr in traces:
            total = err = 0.0
            for st in tr.steps:
                b = Belief(tr.beliefs[st.belief_id])
                res = planner.plan(AugmentedState(st.s, b, None, st.t))
                total += g**st.t * (res.value - res.action_values[st.a])
                err += g**st.t * 2.0 * res.error_bound
            sums.append(total)
            errs.append(err)
        sums = np.array(sums)
        hw = Z99 * sums.std(ddof=1) / math.sqrt(samples)
        pdl = RegretEstimate(float(sums.mean()), float(np.max(errs)) + 2.0 * tail + hw)
    return RegretReport(direct, pdl, samples, horizon, planner.cfg.horizon, mode)


# --- theorem 1 -------------------------------------------------------------------------------


@dataclass(frozen=True)
class Theorem1Finding:
    state: AugmentedState
    kind: str  # "action-set" | "value-shift"
    detail: str


@dataclass(frozen=True)
class Theorem1Report:
    passed: bool
    states_checked: int
    root_shift: float
    root_phi: float
    max_shift_error: float
    findings: tuple[Theorem1Finding, ...] = ()


def reachable_states(prior: PriorMixture, shaping: PseudoReward | None, depth: int) -> list[AugmentedState]:
    """Distinct augmented states reachable within ``depth`` steps under any actions (breadth first)."""
    out: list[AugmentedState] = []
    seen: set = set()
    frontier = []
    for s0 in np.flatnonzero(prior.mean_initial_dist() > 0):
        aug = initial_state(prior, int(s0), shaping)
        if aug.key not in seen:
            seen.add(aug.key)
            out.append(aug)
            frontier.append(aug)
    for _ in range(depth):
        nxt = []
        for aug in frontier:
            s = aug.physical_state
            for a in prior.applicable_actions(s):
                for sp, r, p, b in _outcomes(prior, aug.belief, s, a):
                    stat = aug.stats
                    if shaping is not None:
                        stat, _ = shaping.step(aug.stats, s, a, r, sp)
                    child = AugmentedState(sp, b, stat, aug.depth + 1)
                    if child.key not in seen:
                        seen.add(child.key)
                        out.append(child)
                        nxt.append(child)
        frontier = nxt
    return out


def verify_theorem1(
    prior: PriorMixture,
    potential: Potential,
    cfg: PlannerConfig | None = None,
    depth: int = 2,
    tol: float = 1e-9,
) -> Theorem1Report:
    """Compare shaped and unshaped Bayes-optimal planning at every state reachable within ``depth``.

    At each state the shaped action values must equal the unshaped ones minus
    ``phi(h)`` within the two planners' error bounds, and the optimal action
    sets must agree up to ``tie_tol`` plus those bounds.
    """
    cfg = cfg or PlannerConfig()
    shaping = make_bampf(potential, prior.discount)
    plain = BayesPlanner(prior, None, cfg)
    shaped = BayesPlanner(prior, shaping, cfg)
    findings = []
    max_err = 0.0
    root_shift = root_phi = None
    states = reachable_states(prior, shaping, depth)
    for aug in states:
        u = plain.plan(AugmentedState(aug.physical_state, aug.belief, None, aug.depth))
        v = shaped.plan(aug)
        phi = potential.phi(aug.stats)
        slack = u.error_bound + v.error_bound + tol
        shift = v.value - (u.value - phi)
        if root_shift is None:
            root_shift, root_phi = v.value - u.value, phi
        max_err = max(max_err, abs(shift))
        if abs(shift) > slack:
            findings.append(Theorem1Finding(aug, "value-shift", f"V' - (V - phi) = {shift:.3e} > {slack:.3e}"))
        margin = cfg.tie_tol + 2.0 * slack
        for a in u.action_values:
            dq = v.action_values[a] - (u.action_values[a] - phi)
            if abs(dq) > slack:
                findings.append(Theorem1Finding(aug, "value-shift", f"Q'(a={a}) off by {dq:.3e}"))
        bad_u = [a for a in v.optimal_action_set if u.action_values[a] < u.value - margin]
        bad_v = [a for a in u.optimal_action_set if v.action_values[a] < v.value - margin]
        if bad_u or bad_v:
            findings.append(
                Theorem1Finding(aug, "action-set", f"unshaped {sorted(u.optimal_action_set)} vs shaped {sorted(v.optimal_action_set)}")
            )
    return Theorem1Report(not findings, len(states), float(root_shift), float(root_phi), max_err, tuple(findings))


# --- bounds ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    name: str
    measured: float
    bound: float
    satisfied: bool
    tolerance: float
    instance: str
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "bound": self.bound,
            "satisfied": self.satisfied,
            "tolerance": self.tolerance,
            "instance": self.instance,
            "details": self.details,
        }


BOUND_KINDS = ("cor2", "cor3", "kstep-lemma", "d-horizon")


def d_horizon(phi_max: float, d: float, gamma: float) -> int:
    """Smallest ``k`` with ``2 gamma^k phi_max < d``."""
    if not (0 < gamma < 1) or d <= 0 or phi_max < 0:
        raise ArgumentError("d-horizon needs 0 < gamma < 1, d > 0 and phi_max >= 0")
    if 2.0 * phi_max < d:
        return 0
    k = max(0, int(math.floor(math.log(d / (2.0 * phi_max)) / math.log(gamma))))
    while 2.0 * gamma**k * phi_max >= d:
        k += 1
    while k > 0 and 2.0 * gamma ** (k - 1) * phi_max < d:
        k -= 1
    return k


def cor3_bound(gamma: float, k: int, phi_max: float, r_max: float) -> float:
    return 2.0 * gamma**k * (phi_max + r_max * gamma / (1.0 - gamma))


def kstep_lemma_bound(gamma: float, k: int, phi_max: float) -> float:
    return 2.0 * gamma**k * phi_max


def eval_horizon(prior: PriorMixture, target: float) -> int:
    """Horizon whose extrinsic tail ``gamma^H R_max / (1 - gamma)`` is at most ``target``."""
    g = prior.discount
    lead = prior.r_max / (1.0 - g)
    if lead <= target:
        return 1
    return int(math.ceil(math.log(target / lead) / math.log(g)))


def _kstep_extrinsic(prior: PriorMixture, agent: KStepAgent, steps: int) -> float:
    G, _, _ = forward_layers(prior, agent, agent.shaping, steps)
    return G


def verify_bounds(kind: str, **params: Any) -> BoundReport:
    """Measure one of the shaping guarantees on an instance.

    ``d-horizon``: ``phi_max``, ``d``, ``gamma``. ``cor3`` and
    ``kstep-lemma``: ``prior``, ``potential`` and ``k``, optionally ``cfg`` and
    ``tail`` (target error of the evaluation horizon). ``cor2``: ``prior``,
    ``potential``, ``agents`` (sequence of agents) and optionally ``cfg``.
    The k-step agent sums the ``k + 1`` rewards of steps ``0..k``.
    """
    if kind not in BOUND_KINDS:
        raise ArgumentError(f"unknown bound {kind!r}; choose from {', '.join(BOUND_KINDS)}")
    if kind == "d-horizon":
        phi_max, d, gamma = float(params["phi_max"]), float(params["d"]), float(params["gamma"])
        k = d_horizon(phi_max, d, gamma)
        val = 2.0 * gamma**k * phi_max
        return BoundReport(
            "d-horizon", float(k), val, val < d, 0.0, f"phi_max={phi_max:g}, d={d:g}, gamma={gamma:g}", {"k": k, "2 gamma^k phi_max": val}
        )

    prior: PriorMixture = params["prior"]
    potential: Potential = params["potential"]
    g = prior.discount
    # without a config, plan just deep enough for a 1e-9 tail
    cfg: PlannerConfig = params.get("cfg") or PlannerConfig(
        horizon=PlannerConfig.horizon_for(g, prior.r_max / (1.0 - g), 1e-9)
    )
    shaping = make_bampf(potential, g, params.get("shaping_name", "bampf"))
    instance = params.get("instance", prior.name)
    tol = float(params.get("tol", 1e-6))

    if kind == "kstep-lemma":
        k = int(params["k"])
        steps = k + 1
        best = 0.0
        init = prior.mean_initial_dist()
        finite = BayesPlanner(prior, None, PlannerConfig(horizon=steps), finite_horizon=True)
        for s0 in np.flatnonzero(init > 0):
            best += init[s0] * kstep_plan(prior, initial_state(prior, int(s0)), None, steps, finite).value
        agent = KStepAgent(prior, k, shaping)
        got = _kstep_extrinsic(prior, agent, steps)
        bound = kstep_lemma_bound(g, k, potential.phi_max)
        measured = float(best - got)
        return BoundReport(
            "kstep-lemma", measured, bound, measured <= bound + tol, tol, instance,
            {"k": k, "optimal_k_step": float(best), "shaped_agent_k_step": float(got), "phi_max": potential.phi_max},
        )

    planner = params.get("planner") or BayesPlanner(prior, None, cfg)
    v_star, v_err = optimal_value(prior, planner)
    H = int(params.get("horizon") or eval_horizon(prior, float(params.get("tail", 1e-4))))

    if kind == "cor3":
        k = int(params["k"])
        agent = KStepAgent(prior, k, shaping)
        est = expected_return(prior, agent, None, H)
        measured = v_star - est.value
        slack = v_err + est.error + tol
        bound = cor3_bound(g, k, potential.phi_max, prior.r_max)
        return BoundReport(
            "cor3", float(measured), bound, measured <= bound + slack, slack, instance,
            {"k": k, "v_star": v_star, "agent_return": est.value, "phi_max": potential.phi_max, "r_max": prior.r_max, "horizon": H},
        )

    agents: Sequence[Agent] = params["agents"]
    shaped_planner = BayesPlanner(prior, shaping, cfg)
    v_star_s, v_err_s = optimal_value(prior, shaped_planner)
    worst = 0.0
    slack_total = 0.0
    rows = []
    ok = True
    for agent in agents:
        est = expected_return(prior, agent, shaping, H)
        reg = v_star - est.value
        reg_s = v_star_s - est.shaped_value
        slack = v_err + v_err_s + est.error + est.shaped_error + tol
        diff = abs(reg - reg_s)
        ok &= diff <= slack
        worst = max(worst, diff)
        slack_total = max(slack_total, slack)
        rows.append({"agent": agent.name, "regret": reg, "shaped_regret": reg_s, "difference": diff, "slack": slack})
    return BoundReport("cor2", worst, 0.0, ok, slack_total, instance, {"agents": rows, "horizon": H})


@dataclass(frozen=True)
class CampaignResult:
    seed: int
    family: str
    n_states: int
    n_actions: int
    n_candidates: int
    report: Theorem1Report


def random_instance(seed: int) -> PriorMixture:
    """Small random prior (``|S| <= 4``, ``|A| <= 2``, ``<= 3`` candidates) drawn from ``seed``."""
    from bampf_lab.envs import gen_random_bamdp

    rng = np.random.default_rng([seed, 1])
    return gen_random_bamdp(
        seed,
        n_states=int(rng.integers(2, 5)),
        n_actions=int(rng.integers(1, 3)),
        n_candidates=int(rng.integers(1, 4)),
        gamma=0.7,
    )


def theorem1_campaign(
    n: int = 100, seed: int = 0, depth: int = 2, target: float = 1e-3, families: Sequence[str] | None = None
) -> list[CampaignResult]:
    """``verify_theorem1`` on ``n`` seeded random priors, each with a random bounded potential.

    The planner horizon is the smallest whose tail bound is at most ``target``.
    """
    from bampf_lab.shaping import POTENTIAL_FAMILIES, random_potential

    fams = tuple(families or POTENTIAL_FAMILIES)
    out = []
    for j in range(n):
        sd = seed + j
        prior = random_instance(sd)
        fam = fams[j % len(fams)]
        pot = random_potential(prior, np.random.default_rng([sd, 2]), fam)
        g = prior.discount
        leaf = prior.r_max / (1.0 - g) + pot.phi_max
        cfg = PlannerConfig(horizon=PlannerConfig.horizon_for(g, leaf, target))
        rep = verify_theorem1(prior, pot, cfg, depth)
        out.append(CampaignResult(sd, fam, prior.n_states, prior.n_actions, prior.n_candidates, rep))
    return out
