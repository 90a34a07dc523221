import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from bampf_lab.bamdp import Belief, BayesPlanner, History, PlannerConfig, initial_state, posterior_update
from bampf_lab.envs import caterpillar, coin, gen_random_bamdp, goal_grid, grid_index, noisy_tv, unique_grid
from bampf_lab.errors import ArgumentError
from bampf_lab.shaping import (
    BUILTINS,
    PseudoReward,
    Potential,
    build_necessity_counterexample,
    check_bampf,
    constant_shaping,
    current_state_statistic,
    make_bampf,
    make_builtin,
    random_potential,
    rollout_steps_for,
    shape_bamdp,
    zero_shaping,
)

from .test_bamdp import random_history

seeds = st.integers(0, 100_000)


def strip_potential(f):
    """Same F without the declared potential, so certification must rebuild one."""
    return PseudoReward(f.statistic, f.f, f.f_max, None, f.name, dict(f.params))


def opt_sets(prior, shaping, s0):
    cfg = PlannerConfig(horizon=PlannerConfig.horizon_for(prior.discount, 20.0, 1e-4))
    shaped = BayesPlanner(prior, shaping, cfg).plan(initial_state(prior, s0, shaping))
    plain = BayesPlanner(prior, None, cfg).plan(initial_state(prior, s0))
    return plain, shaped


# --- identities ------------------------------------------------------------------------------


@given(seeds, st.sampled_from(["state", "visited", "entropy-state"]), st.integers(0, 8))
def test_telescoping_identity(seed, family, length):
    prior = gen_random_bamdp(seed, n_candidates=2)
    rng = np.random.default_rng(seed)
    pot = random_potential(prior, rng, family)
    f = make_bampf(pot, prior.discount)
    h = random_history(prior, rng, length)
    g = prior.discount
    total = sum(g**t * x for t, x in enumerate(f.along(h)))
    phi_0 = pot.phi(pot.statistic.replay(History(h.states[:1])))
    phi_k = pot.phi(pot.statistic.replay(h))
    assert abs(total - (g**length * phi_k - phi_0)) <= 1e-12
    # every F respects the declared bound
    assert all(abs(x) <= f.f_max + 1e-12 for x in f.along(h))


def test_pbsf_embedding_matches_classical_formula():
    prior = goal_grid(4, 3, goal=(3, 2), gamma=0.9)
    f = make_builtin("state_potential_pbsf", prior)
    m = prior.candidates[0]
    phi = {grid_index(x, y, 4): -(abs(x - 3) + abs(y - 2)) for x in range(4) for y in range(3)}
    for s in range(m.n_states):
        for a in range(m.n_actions):
            sp = int(np.argmax(m.transition[s, a]))
            _, val = f.step(s, s, a, 0.0, sp)
            assert val == pytest.approx(0.9 * phi[sp] - phi[s], abs=1e-12)


def test_fig1a_goal_shaping_formula():
    prior = goal_grid(5, 5)
    f = make_builtin("state_potential_pbsf", prior)
    # right from (1, 0): distance 7 drops to 6
    s, sp = grid_index(1, 0, 5), grid_index(2, 0, 5)
    assert f.step(s, s, 3, 0.0, sp)[1] == pytest.approx(0.99 + 0.01 * 7, abs=1e-12)
    # stepping back away from the goal: gamma * -(d + 1) + d with d = 6
    assert f.step(sp, sp, 2, 0.0, s)[1] == pytest.approx(0.99 * -7 + 6, abs=1e-12)


def test_fig1b_unique_count_formula():
    prior = unique_grid(3, 3, episode_length=10)
    f = make_builtin("unique_state_count", prior)
    L = 10
    stat = f.initial(0)
    # walk right twice then back left; the states carry the step counter
    path = [(3, grid_index(1, 0, 3) * L + 1), (3, grid_index(2, 0, 3) * L + 2), (2, grid_index(1, 0, 3) * L + 3)]
    s = 0
    got = []
    for a, sp in path:
        stat, val = f.step(stat, s, a, 0.0, sp)
        got.append(val)
        s = sp
    assert got[0] == pytest.approx(0.99 - 0.01 * 1, abs=1e-12)
    assert got[1] == pytest.approx(0.99 - 0.01 * 2, abs=1e-12)
    assert got[2] == pytest.approx(-0.01 * 3, abs=1e-12)
    assert f.claimed_potential.phi_max == 9


def test_information_gain_on_coin():
    prior = coin()
    f = make_builtin("information_gain", prior)
    stat = f.initial(0)
    new, val = f.step(stat, 0, 0, 1.0, 1)
    post = posterior_update(prior, prior.prior_belief, 0, 0, 1.0, 1)
    assert new == pytest.approx(post.weights)
    assert val == pytest.approx(-0.9 * post.entropy() + math.log(2), abs=1e-12)


def test_noisy_tv_signals():
    prior = noisy_tv(corridor_len=4, channels=8)
    pe = make_builtin("prediction_error", prior)
    ig = make_builtin("information_gain", prior)
    tv = prior.annotations["tv_states"]
    for s in tv:
        for sp in tv:
            assert pe.step(pe.initial(s), s, 2, 0.0, sp)[1] == pytest.approx(math.log(8), abs=1e-12)
            assert ig.step(ig.initial(s), s, 2, 0.0, sp)[1] == 0.0
    c1 = prior.annotations["goal"] - 2
    assert pe.step(pe.initial(c1), c1, 1, 0.0, c1 + 1)[1] == 0.0


def test_scale_and_clip_parameters():
    prior = coin(p_heads=(1.0, 0.0))
    f = make_builtin("prediction_error", prior, scale=3.0, clip=2.0)
    assert f.f_max == 6.0
    # the second toss under a collapsed belief is impossible for the other face: surprise clips
    stat, _ = f.step(f.initial(0), 0, 0, 1.0, 1)
    assert f.step(stat, 1, 0, 0.0, 2)[1] == 6.0
    neg = make_builtin("negative_surprise", prior, scale=-1.0)
    assert neg.claimed_potential.phi_max == 10.0


def test_builtin_errors():
    with pytest.raises(ArgumentError, match="unknown shaping"):
        make_builtin("curiosity", coin())
    with pytest.raises(ArgumentError):
        make_builtin("subgoal_count", coin())
    with pytest.raises(ArgumentError):
        Potential(current_state_statistic(), lambda v: 0.0, math.inf)
    assert len(BUILTINS) == 7


# --- certification ---------------------------------------------------------------------------


@given(seeds, st.sampled_from(["state", "visited", "entropy-state"]), st.booleans())
def test_potential_backed_shaping_is_certified(seed, family, declared):
    prior = gen_random_bamdp(seed, n_candidates=2)
    pot = random_potential(prior, np.random.default_rng(seed), family)
    f = make_bampf(pot, prior.discount)
    if not declared:
        f = strip_potential(f)
    cert = check_bampf(f, prior, depth=3)
    assert cert.verdict == "certified-bampf"
    assert cert.witness is None
    if declared:
        assert cert.max_residual <= 1e-9
    else:
        assert cert.max_residual <= 2 * cert.truncation_bound + 1e-9


def test_constant_shaping_recovers_its_potential():
    cert = check_bampf(constant_shaping(0.5), coin(), depth=3)
    assert cert.verdict == "certified-bampf"
    assert cert.phi_hat_initial == pytest.approx(-0.5 / (1 - 0.9), abs=1e-9)


def test_rollout_length_meets_tolerance():
    T = rollout_steps_for(0.9, 10.0, 1e-9)
    assert 0.9 ** (T + 1) * 10.0 / 0.1 <= 1e-9 / 4 < 0.9**T * 10.0 / 0.1


@pytest.mark.parametrize("name", ["unique_state_count", "information_gain", "negative_surprise", "entropy_bonus"])
def test_potential_builtins_certify_on_coin(name):
    assert check_bampf(make_builtin(name, coin()), coin(), depth=3).verdict == "certified-bampf"


@pytest.mark.parametrize("scale", [1.0, -1.0])
def test_prediction_error_counterexample(scale):
    prior = coin()
    f = make_builtin("prediction_error", prior, scale=scale)
    cert = check_bampf(f, prior, depth=3)
    assert cert.verdict == "witness-found"
    w = cert.witness
    assert w.history.length == 0 and w.next_state != 0
    assert abs(w.delta) == pytest.approx(math.log(2), abs=1e-6)
    assert abs(w.delta) > 2 * cert.truncation_bound + 1e-9
    inst, rec = build_necessity_counterexample(f, cert, prior)
    plain, shaped = opt_sets(inst, f, rec.start_state)
    assert plain.optimal_action_set == {rec.unshaped_optimal}
    assert shaped.optimal_action_set == {rec.shaped_optimal}
    gap = plain.action_values[rec.absorb_action] - plain.action_values[rec.witness_action]
    assert gap == pytest.approx(rec.delta / 2, abs=1e-6)


@given(seeds)
def test_witnesses_are_sound(seed):
    prior = gen_random_bamdp(seed, n_candidates=2, sparsity=0.3)
    f = make_builtin("prediction_error", prior, clip=3.0)
    cert = check_bampf(f, prior, depth=2)
    assume(cert.verdict == "witness-found")
    w = cert.witness
    assume(w.history.length == 0 and w.next_state != w.history.last_state)
    inst, rec = build_necessity_counterexample(f, cert, prior)
    plain, shaped = opt_sets(inst, f, rec.start_state)
    assert plain.optimal_action_set.isdisjoint(shaped.optimal_action_set)


def test_counterexample_refuses_bad_witnesses():
    cert = check_bampf(constant_shaping(0.5), coin(), depth=2)
    with pytest.raises(ArgumentError, match="no witness"):
        build_necessity_counterexample(constant_shaping(0.5), cert, coin())


def test_caterpillar_prediction_error_is_silent():
    # deterministic transitions carry no surprise, so even a large scale leaves F at zero
    prior = caterpillar()
    f = make_builtin("prediction_error", prior, scale=200.0)
    plain, shaped = opt_sets(prior, f, 0)
    assert plain.optimal_action_set == shaped.optimal_action_set == {1}


# --- shaped BAMDP ----------------------------------------------------------------------------


@given(seeds)
def test_shaped_successors_keep_extrinsic_beliefs(seed):
    prior = gen_random_bamdp(seed, n_candidates=3)
    f = make_builtin("prediction_error", prior)
    sb = shape_bamdp(prior, f)
    aug = sb.initial_state(0)
    for a in prior.applicable_actions(0):
        for nxt, p, r, fv in sb.successors(aug, a):
            assert nxt.belief == posterior_update(prior, aug.belief, 0, a, r, nxt.physical_state)
            assert nxt.stats == f.step(aug.stats, 0, a, r, nxt.physical_state)[0]


@given(seeds)
def test_zero_shaping_leaves_values_unchanged(seed):
    prior = gen_random_bamdp(seed)
    cfg = PlannerConfig(horizon=6, use_collapse_shortcut=False)
    z = zero_shaping()
    a = BayesPlanner(prior, z, cfg).plan(initial_state(prior, 0, z))
    b = BayesPlanner(prior, None, cfg).plan(initial_state(prior, 0))
    assert a.action_values == b.action_values


@given(seeds, st.sampled_from(["state", "visited", "entropy-state"]))
def test_shaped_value_shift(seed, family):
    prior = gen_random_bamdp(seed, n_candidates=2)
    pot = random_potential(prior, np.random.default_rng(seed), family)
    f = make_bampf(pot, prior.discount)
    plain, shaped = opt_sets(prior, f, 0)
    shift = pot.phi(f.initial(0))
    assert abs(shaped.value - (plain.value - shift)) <= shaped.error_bound + plain.error_bound + 1e-9
    assert plain.optimal_action_set == shaped.optimal_action_set
