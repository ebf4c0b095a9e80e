import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from morl_rpb.core import Preference, scalarize
from morl_rpb.envs import load_layout, make_env
from morl_rpb.errors import ContractError
from morl_rpb.learner import (LearnerParams, TabularPolicy, init_policy, q_update, run_episode,
                              run_episodes, select_action)
from tabular_mdp import make_mdp, value_iteration

W = Preference.of(0.5, 0.5)


def test_params_validation():
    LearnerParams(alpha=1.0, gamma=0.0, epsilon=0.0)
    for bad in (dict(alpha=0.0), dict(gamma=1.0), dict(epsilon=1.5), dict(episodes=-1)):
        with pytest.raises(ContractError):
            LearnerParams(**bad)


def test_init_policy():
    p = init_policy(5, 4)
    assert p.q.shape == (5, 4) and not p.q.any()
    src = TabularPolicy(np.arange(20.0).reshape(5, 4))
    copy = init_policy(5, 4, src)
    assert np.array_equal(copy.q, src.q) and copy.q is not src.q
    with pytest.raises(ContractError):
        init_policy(5, 3, src)


def test_select_action_greedy_and_ties():
    p = TabularPolicy(np.array([[1.0, 5.0, 2.0, 2.0], [0.0, 0.0, 0.0, 0.0]]))
    rng = np.random.default_rng(0)
    assert select_action(p, 0, 0.0, rng) == 1
    assert select_action(p, 1, 0.0, rng) == 0


def test_select_action_uniform_when_fully_exploring():
    p = init_policy(1, 4)
    rng = np.random.default_rng(42)
    counts = np.bincount([select_action(p, 0, 1.0, rng) for _ in range(10_000)], minlength=4)
    assert stats.chisquare(counts).pvalue > 0.01


def test_q_update_examples():
    p = init_policy(2, 4)
    q_update(p, 0, 1, -3.0, 1, False, 0.1, 0.9)
    assert p.q[0, 1] == pytest.approx(-0.3)
    before = p.q.copy()
    q_update(p, 0, 2, 7.0, 1, False, 0.0, 0.9)
    assert np.allclose(p.q, before)
    p.q[1] = 100.0
    q_update(p, 0, 3, 1.0, 1, True, 1.0, 0.9)
    assert p.q[0, 3] == 1.0


def test_q_update_touches_one_entry():
    p = TabularPolicy(np.random.default_rng(1).normal(size=(4, 4)))
    before = p.q.copy()
    q_update(p, 2, 3, 1.5, 0, False, 0.5, 0.9)
    assert (p.q != before).sum() == 1


def test_zero_episodes():
    env = make_env(load_layout("dst"))
    p = init_policy(env.num_states, env.num_actions)
    p2, returns = run_episodes(env, p, W, LearnerParams(episodes=0), np.random.default_rng(0))
    assert returns == [] and not p2.q.any()


def test_preference_dimension_checked():
    env = make_env(load_layout("dst"))
    with pytest.raises(ContractError):
        run_episodes(env, init_policy(110, 4), Preference.of(0.2, 0.3, 0.5), LearnerParams(episodes=1),
                     np.random.default_rng(0))


def test_chain_converges_to_fixed_point():
    w = Preference.of(0.3, 0.7)
    mdp = make_mdp(("chain", 3), 5, w=w)  # two live states and the goal
    p = init_policy(mdp.num_states, mdp.num_actions)
    run_episodes(mdp, p, w, LearnerParams(epsilon=1.0, episodes=1000), np.random.default_rng(0))
    assert np.abs(p.q - value_iteration(mdp, w)).max() < 1e-3


@pytest.mark.parametrize("shape,seed", [(("grid", 4, 5), 1), (("chain", 10), 2), (("random", 12), 3)])
def test_greedy_matches_value_iteration(shape, seed):
    mdp = make_mdp(shape, seed, w=W)
    p = init_policy(mdp.num_states, mdp.num_actions)
    run_episodes(mdp, p, W, LearnerParams(episodes=2000), np.random.default_rng(seed))
    optimal = value_iteration(mdp, W).argmax(axis=1)
    assert mdp.num_states <= 20
    assert np.array_equal(p.greedy()[:-1], optimal[:-1])


def test_same_seeds_same_tables():
    env = make_env(load_layout("sar", seed=3))
    tables = []
    for _ in range(2):
        p = init_policy(env.num_states, env.num_actions)
        run_episodes(env, p, W, LearnerParams(episodes=20), np.random.default_rng(9))
        tables.append(p.q)
    assert np.array_equal(tables[0], tables[1])


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["sar", "dst", "rg"]), st.floats(0, 1), st.integers(0, 2 ** 32))
def test_logged_return_is_scalarized_reward_sum(kind, w0, seed):
    env = make_env(load_layout(kind, seed=seed))
    w = Preference.two(w0)
    p = init_policy(env.num_states, env.num_actions)
    rng = np.random.default_rng(seed)
    bound = 5.0 if kind == "sar" else 124.0
    for _ in range(3):
        res = run_episode(env, p, w, LearnerParams(), rng)
        assert res.scalarized_return == pytest.approx(scalarize(res.reward_sum, w), abs=1e-6)
        # every scalarized step reward is bounded by the largest component magnitude
        assert np.abs(p.q).max() <= bound / (1 - 0.9) + 1e-9
