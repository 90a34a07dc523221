import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bampf_lab.agents import (
    BayesOptimalAgent,
    BeliefInterpreter,
    BoltzmannAgent,
    CertaintyEquivalentAgent,
    EpsilonGreedyAgent,
    FixedPolicyAgent,
    KStepAgent,
    PolicySearch,
    RandomAgent,
    ce_act,
    ce_policy_value,
    ce_q_estimate,
    kstep_plan,
    make_agent,
)
from bampf_lab.bamdp import AugmentedState, Belief, BayesPlanner, PlannerConfig, initial_state
from bampf_lab.envs import caterpillar, gen_random_bamdp
from bampf_lab.errors import ArgumentError, CapacityError
from bampf_lab.mdp import StationaryPolicy, value_iteration
from bampf_lab.shaping import make_builtin, zero_shaping

from .test_bamdp import brute_force_value, fold, random_history

seeds = st.integers(0, 100_000)
G = 0.95
EXACT = BeliefInterpreter("exact")


def pol(*acts):
    return StationaryPolicy.deterministic(acts, 2)


def random_aug(prior, seed, length=2):
    h = random_history(prior, np.random.default_rng(seed), length)
    return AugmentedState(h.last_state, fold(prior, h), None, length)


# --- caterpillar closed forms ---------------------------------------------------------------


def test_caterpillar_policy_values_match_geometric_sums():
    prior = caterpillar()
    b = prior.prior_belief
    expected = {
        # stay at the weed forever
        ((0, 0), 0): 21 / (1 - G),
        # go once, then stay at the bush: 10% chance of 150 per step
        ((1, 0), 0): -5 + G * 0.1 * 150 / (1 - G),
        # shuttle forever
        ((1, 1), 0): -5 / (1 - G),
        # from the bush: go back to the weed and stay
        ((0, 1), 1): -5 + G * 21 / (1 - G),
        # from the bush: stay there
        ((0, 0), 1): 0.1 * 150 / (1 - G),
    }
    assert sorted(round(v, 9) for v in expected.values()) == [-100, 280, 300, 394, 420]
    for (acts, s), v in expected.items():
        assert ce_policy_value(prior, EXACT, b, pol(*acts), s) == pytest.approx(v, abs=1e-9)


def test_caterpillar_ce_stays_and_underestimates():
    prior = caterpillar()
    aug = initial_state(prior, 0)
    dec = ce_act(prior, EXACT, aug)
    assert dec.action == 0 and dec.certified
    assert dec.value == pytest.approx(420, abs=1e-9)
    at_bush = AugmentedState(1, prior.prior_belief)
    est = ce_q_estimate(prior, EXACT, at_bush, 0)
    assert est == pytest.approx(0.1 * 150 + G * 394, abs=1e-6)
    assert est == pytest.approx(389.3, abs=1e-6)
    true = BayesPlanner(prior, cfg=PlannerConfig(horizon=250)).plan(at_bush)
    assert true.value == pytest.approx(636.87, abs=0.05)


@pytest.mark.parametrize("beta,action", [(7.0, 0), (8.0, 1)])
def test_frozen_count_bonus_flips_ce(beta, action):
    # stay forever: 20 (21 - 0.05 beta); go then stay: 280 + 18 beta; crossover at beta = 140/19
    prior = caterpillar()
    f = make_builtin("unique_state_count", prior, scale=beta)
    agent = CertaintyEquivalentAgent(prior, shaping=f)
    dec = agent.decide(initial_state(prior, 0, f))
    assert dec.action == action
    assert dec.value == pytest.approx(max(20 * (21 - 0.05 * beta), 280 + 18 * beta), abs=1e-9)
    # the extrinsic objective ignores the bonus
    plain = CertaintyEquivalentAgent(prior, shaping=f, objective="extrinsic")
    assert plain.decide(initial_state(prior, 0, f)).action == 0


# --- certainty equivalence properties -------------------------------------------------------


@given(seeds)
def test_ce_never_exceeds_bayes(seed):
    prior = gen_random_bamdp(seed, n_candidates=3)
    aug = random_aug(prior, seed)
    res = BayesPlanner(prior, cfg=PlannerConfig(horizon=60)).plan(aug)
    for a in prior.applicable_actions(aug.physical_state):
        assert ce_q_estimate(prior, EXACT, aug, a) <= res.action_values[a] + res.error_bound + 1e-9


@given(seeds)
def test_degenerate_belief_ce_matches_value_iteration(seed):
    prior = gen_random_bamdp(seed, n_candidates=2)
    vi, pi = value_iteration(prior.candidates[1], tol=1e-11)
    b = Belief.from_weights([0.0, 1.0])
    for s in range(prior.n_states):
        dec = ce_act(prior, EXACT, AugmentedState(s, b))
        assert dec.value == pytest.approx(vi.values[s], abs=1e-8)


@given(seeds)
def test_zero_shaping_ce_is_unshaped_ce(seed):
    prior = gen_random_bamdp(seed, n_candidates=3)
    z = zero_shaping()
    shaped = CertaintyEquivalentAgent(prior, shaping=z)
    plain = CertaintyEquivalentAgent(prior)
    aug = random_aug(prior, seed)
    with_stat = AugmentedState(aug.physical_state, aug.belief, 0, aug.depth)
    a, b = shaped.decide(with_stat), plain.decide(aug)
    assert a.action == b.action and a.policy.actions == b.policy.actions
    assert a.value == pytest.approx(b.value, abs=1e-12)


@given(seeds)
def test_heuristic_search_is_sound(seed):
    prior = gen_random_bamdp(seed, n_states=4, n_candidates=3)
    aug = random_aug(prior, seed)
    exact = PolicySearch(prior, EXACT).best(aug.belief, aug.physical_state)
    local = PolicySearch(prior, EXACT, limit=1).best(aug.belief, aug.physical_state)
    assert not local.certified
    assert local.value <= exact.value + 1e-9
    # the value reported is the true mixture value of the returned policy
    assert local.value == pytest.approx(ce_policy_value(prior, EXACT, aug.belief, local.policy, aug.physical_state), abs=1e-9)
    # a single model makes coordinate ascent policy iteration, which is exact
    one = Belief.from_weights([1.0, 0.0, 0.0])
    ex1 = PolicySearch(prior, EXACT).best(one, 0)
    lo1 = PolicySearch(prior, EXACT, limit=1).best(one, 0)
    assert lo1.value == pytest.approx(ex1.value, abs=1e-8)


def test_exhaustive_search_respects_limit():
    prior = gen_random_bamdp(0, n_states=4, n_actions=3)
    with pytest.raises(CapacityError):
        ce_act(prior, EXACT, initial_state(prior, 0), limit=10)
    assert not ce_act(prior, EXACT, initial_state(prior, 0), "heuristic", limit=10).certified
    with pytest.raises(ArgumentError):
        ce_act(prior, EXACT, initial_state(prior, 0), "greedy")


def test_interpreters():
    prior = caterpillar()
    b = Belief.from_weights([0.5, 0.5])
    models, w = BeliefInterpreter("exact").models(prior, b)
    assert models == prior.candidates and np.array_equal(w, b.array)
    (mean,), _ = BeliefInterpreter("mean").models(prior, b)
    assert mean.expected_reward_sa[1, 0] == pytest.approx(75.0)
    (top,), _ = BeliefInterpreter("map").models(prior, b)
    assert top is prior.candidates[0]
    (top,), _ = BeliefInterpreter("map").models(prior, Belief.from_weights([0.2, 0.8]))
    assert top is prior.candidates[1]
    with pytest.raises(ArgumentError):
        BeliefInterpreter("median")


def test_mean_model_ce_explores_caterpillar():
    # with a 50/50 prior the averaged bush is worth 75 per step, so even the mean model goes
    prior = caterpillar(p_food=0.5)
    assert ce_act(prior, BeliefInterpreter("mean"), initial_state(prior, 0)).action == 1


# --- k-step ------------------------------------------------------------------------------------


@given(seeds, st.integers(1, 3), st.integers(0, 4))
def test_kstep_plan_is_finite_horizon_expectimax(seed, n_cand, k):
    prior = gen_random_bamdp(seed, n_candidates=n_cand)
    res = kstep_plan(prior, initial_state(prior, 0), k=k)
    assert res.value == pytest.approx(brute_force_value(prior, 0, prior.weights.copy(), k), abs=1e-12)
    assert res.error_bound == 0.0


@given(seeds)
def test_kstep_value_monotone_with_nonnegative_rewards(seed):
    prior = gen_random_bamdp(seed, n_candidates=2)
    aug = initial_state(prior, 0)
    values = [kstep_plan(prior, aug, k=k).value for k in range(7)]
    assert values[0] == 0.0
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_long_kstep_matches_bayes_on_caterpillar():
    prior = caterpillar()
    aug = initial_state(prior, 0)
    bayes = BayesPlanner(prior, cfg=PlannerConfig(horizon=250)).plan(aug)
    long = kstep_plan(prior, aug, k=250)
    assert abs(long.value - bayes.value) <= bayes.error_bound
    assert long.optimal_action_set == bayes.optimal_action_set


def test_kstep_agent_horizon_schedule():
    prior = caterpillar()
    agent = KStepAgent(prior, k=3)
    assert [agent.remaining(AugmentedState(0, prior.prior_belief, None, d)) for d in range(6)] == [4, 3, 2, 1, 4, 4]
    # four rewards are too few to pay for the trip; eleven are enough
    assert agent.act(initial_state(prior, 0)) == 0
    assert KStepAgent(prior, k=10).act(initial_state(prior, 0)) == 1
    with pytest.raises(ArgumentError):
        KStepAgent(prior, k=-1)


# --- baselines -----------------------------------------------------------------------------------


def test_bayes_agent_goes_on_caterpillar():
    prior = caterpillar()
    agent = BayesOptimalAgent(prior, cfg=PlannerConfig(horizon=250))
    assert agent.act(initial_state(prior, 0)) == 1


def test_stochastic_baselines():
    prior = caterpillar()
    aug = initial_state(prior, 0)
    eps = EpsilonGreedyAgent(CertaintyEquivalentAgent(prior), prior, 0.2)
    assert eps.action_distribution(aug) == pytest.approx({0: 0.9, 1: 0.1})
    with pytest.raises(ArgumentError):
        eps.act(aug)
    rng = np.random.default_rng(0)
    draws = [eps.act(aug, rng) for _ in range(2000)]
    assert abs(np.mean(draws) - 0.1) < 0.03
    assert RandomAgent(prior).action_distribution(aug) == {0: 0.5, 1: 0.5}
    boltz = BoltzmannAgent(prior, 10.0).action_distribution(aug)
    assert boltz[0] > boltz[1] and sum(boltz.values()) == pytest.approx(1.0)
    fixed = FixedPolicyAgent(StationaryPolicy.deterministic((1, 0), 2))
    assert fixed.act(aug) == 1
    with pytest.raises(ArgumentError):
        EpsilonGreedyAgent(RandomAgent(prior), prior, 1.5)
    with pytest.raises(ArgumentError):
        BoltzmannAgent(prior, 0.0)


def test_make_agent():
    prior = caterpillar()
    assert isinstance(make_agent("kstep", prior, k=2), KStepAgent)
    assert make_agent("fixed", prior, actions=[1, 0]).act(initial_state(prior, 0)) == 1
    assert make_agent("eps-greedy", prior, epsilon=0.0).action_distribution(initial_state(prior, 0)) == {0: 1.0, 1: 0.0}
    with pytest.raises(ArgumentError, match="unknown agent"):
        make_agent("ppo", prior)
    with pytest.raises(ArgumentError):
        make_agent("fixed", prior)
