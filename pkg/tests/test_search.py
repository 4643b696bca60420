"""Property tests for the RL search primitives: simplex preservation,
clipped updates, the replay buffer, epsilon schedules and noise scale."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlprune.config import SearchConfig
from rlprune.errors import StateError
from rlprune.search import (PruningPolicy, ReplayBuffer, epsilon_at,
                            sample_action, select_action, update_policy,
                            update_replay)

simplex_dims = st.integers(min_value=2, max_value=12)


def random_policy(dim, seed, floor=1e-4):
    rng = np.random.default_rng(seed)
    return PruningPolicy.from_group_channels(rng.integers(1, 100, dim), floor)


@settings(max_examples=100, deadline=None)
@given(dim=simplex_dims, seed=st.integers(0, 10 ** 6),
       variance=st.floats(1e-4, 0.5))
def test_sampled_actions_stay_on_the_simplex(dim, seed, variance):
    policy = random_policy(dim, seed)
    a = sample_action(policy, variance, np.random.default_rng(seed))
    assert a.shape == (dim,)
    assert (a >= 0).all()
    assert math.isclose(a.sum(), 1.0, rel_tol=1e-9)


@settings(max_examples=100, deadline=None)
@given(dim=simplex_dims, seed=st.integers(0, 10 ** 6),
       step_size=st.floats(0.0, 1.0), clip=st.floats(0.01, 0.99))
def test_updated_policy_stays_on_the_simplex(dim, seed, step_size, clip):
    policy = random_policy(dim, seed)
    a = sample_action(policy, 0.04, np.random.default_rng(seed + 1))
    new = update_policy(policy, a, step_size, clip)
    assert math.isclose(new.pd.sum(), 1.0, rel_tol=1e-9)
    assert (new.pd >= policy.floor * (1 - 1e-12)).all()


@settings(max_examples=100, deadline=None)
@given(dim=simplex_dims, seed=st.integers(0, 10 ** 6),
       step_size=st.floats(0.0, 2.0), clip=st.floats(0.01, 0.5))
def test_update_ratio_is_clipped(dim, seed, step_size, clip):
    # the pre-normalization per-coordinate ratio lies in [1-clip, 1+clip],
    # so after the common renormalization the ratio spread is bounded
    policy = random_policy(dim, seed, floor=1e-12)
    a = sample_action(policy, 0.04, np.random.default_rng(seed + 2))
    new = update_policy(policy, a, step_size, clip)
    ratios = new.pd / policy.pd
    assert ratios.max() / ratios.min() <= (1 + clip) / (1 - clip) + 1e-9


def test_update_with_zero_step_is_identity():
    policy = random_policy(5, 0)
    new = update_policy(policy, np.full(5, 0.2), 0.0, 0.2)
    np.testing.assert_allclose(new.pd, policy.pd, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 200),
       capacity=st.integers(1, 32))
def test_replay_buffer_keeps_top_k(seed, n, capacity):
    rng = np.random.default_rng(seed)
    qs = rng.standard_normal(n)
    buf = ReplayBuffer(capacity)
    for i, q in enumerate(qs):
        update_replay(buf, np.array([float(i)]), float(q))
    kept = sorted(e.q for e in buf.entries)
    want = sorted(qs)[-min(capacity, n):]
    np.testing.assert_allclose(kept, want)
    assert buf.best().q == max(qs)


def test_replay_buffer_rejects_non_finite():
    buf = ReplayBuffer(4)
    assert not buf.insert(np.array([1.0]), float("nan"), None)
    assert not buf.insert(np.array([1.0]), float("-inf"), None)
    assert not buf.entries
    with pytest.raises(StateError):
        buf.best()


def test_replay_best_tiebreak_is_first_inserted():
    buf = ReplayBuffer(4)
    buf.insert(np.array([1.0]), 0.5, "first")
    buf.insert(np.array([2.0]), 0.5, "second")
    assert buf.best().candidate == "first"


def test_epsilon_greedy_frequencies():
    buf = ReplayBuffer(8)
    for i in range(8):
        buf.insert(np.array([float(i)]), float(i), None)
    best = buf.best().action
    eps = 0.4
    rng = np.random.default_rng(0)
    trials = 20000
    picked_best = sum(
        np.array_equal(select_action(buf, eps, rng), best)
        for _ in range(trials))
    expected = (1 - eps) + eps / 8  # random pick can also land on the best
    assert abs(picked_best / trials - expected) < 0.01


def test_epsilon_zero_is_pure_greedy():
    buf = ReplayBuffer(4)
    for i in range(4):
        buf.insert(np.array([float(i)]), float(i), None)
    rng = np.random.default_rng(1)
    for _ in range(50):
        assert select_action(buf, 0.0, rng)[0] == 3.0


class _SpyRng:
    """Wraps a real generator and records normal() draws."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)
        self.scales = []
        self.draws = []

    def normal(self, loc, scale, size=None):
        out = self.rng.normal(loc, scale, size)
        self.scales.append(scale)
        self.draws.append(np.atleast_1d(out))
        return out


def test_noise_std_matches_configured_variance():
    variance = 0.04
    policy = PruningPolicy(np.full(8, 0.125), 1e-4)
    spy = _SpyRng(7)
    for _ in range(15000):
        sample_action(policy, variance, spy)
    assert all(math.isclose(s, math.sqrt(variance)) for s in spy.scales)
    draws = np.concatenate(spy.draws)
    assert abs(draws.std() / math.sqrt(variance) - 1.0) < 0.02


def test_epsilon_schedules():
    cfg = SearchConfig(steps=100, epsilon0=0.4, decay="cosine", decay_window=0.1)
    assert epsilon_at(0, cfg) == pytest.approx(0.4)
    assert epsilon_at(5, cfg) == pytest.approx(0.2)  # cosine midpoint
    assert epsilon_at(10, cfg) == 0.0
    assert epsilon_at(99, cfg) == 0.0

    lin = SearchConfig(steps=100, epsilon0=0.4, decay="linear", decay_window=0.1)
    assert epsilon_at(0, lin) == pytest.approx(0.4)
    assert epsilon_at(5, lin) == pytest.approx(0.2)
    assert epsilon_at(10, lin) == 0.0

    const = SearchConfig(steps=100, epsilon0=0.4, decay="constant")
    assert epsilon_at(0, const) == epsilon_at(99, const) == 0.4

    # cosine stays above linear in the first half of the window
    for s in range(5):
        assert epsilon_at(s, cfg) >= epsilon_at(s, lin) - 1e-12


def test_policy_floor_is_enforced():
    policy = PruningPolicy.from_group_channels([1, 10000], floor=1e-3)
    assert policy.pd.min() >= 1e-3
    assert math.isclose(policy.pd.sum(), 1.0)
