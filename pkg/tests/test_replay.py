import numpy as np
import pytest

from dualsafe.replay import ReplayBuffer, Transition


def _t(i, indicator=1, terminal=False):
    return Transition(
        state=np.array([float(i), 0.0]),
        action=np.array([0.1 * i]),
        reward=float(i),
        indicator=indicator,
        next_state=np.array([float(i) + 1, 0.0]),
        terminal=terminal,
    )


def test_push_then_sample_single():
    buf = ReplayBuffer(8, state_dim=2, action_dim=1)
    buf.push(_t(3))
    assert len(buf) == 1
    batch = buf.sample(4, np.random.default_rng(0))
    assert len(batch) == 4
    assert np.all(batch.states == np.array([3.0, 0.0]))
    assert np.all(batch.rewards == 3.0)


def test_fifo_eviction():
    buf = ReplayBuffer(2, state_dim=2, action_dim=1)
    for i in range(3):
        buf.push(_t(i))
    assert len(buf) == 2
    stored = {buf.get(0).reward, buf.get(1).reward}
    assert stored == {1.0, 2.0}


def test_count_equals_pushes_below_capacity():
    buf = ReplayBuffer(100, state_dim=2, action_dim=1)
    for i in range(37):
        buf.push(_t(i))
        assert len(buf) == i + 1


def test_rejects_fractional_indicator():
    buf = ReplayBuffer(4, state_dim=2, action_dim=1)
    with pytest.raises(ValueError):
        buf.push(
            Transition(np.zeros(2), np.zeros(1), 0.0, 0.5, np.zeros(2), False)
        )


def test_rejects_non_finite_entries():
    buf = ReplayBuffer(4, state_dim=2, action_dim=1)
    with pytest.raises(ValueError):
        buf.push(Transition(np.array([np.nan, 0.0]), np.zeros(1), 0.0, 1, np.zeros(2), False))
    with pytest.raises(ValueError):
        buf.push(Transition(np.zeros(2), np.zeros(1), np.inf, 1, np.zeros(2), False))


def test_sample_from_empty_buffer_fails():
    buf = ReplayBuffer(4, state_dim=2, action_dim=1)
    with pytest.raises(ValueError):
        buf.sample(1, np.random.default_rng(0))


def test_sample_determinism():
    buf = ReplayBuffer(64, state_dim=2, action_dim=1)
    for i in range(50):
        buf.push(_t(i))
    a = buf.sample(16, np.random.default_rng(7))
    b = buf.sample(16, np.random.default_rng(7))
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.rewards, b.rewards)


def test_sampled_items_are_stored_items():
    buf = ReplayBuffer(32, state_dim=2, action_dim=1)
    for i in range(20):
        buf.push(_t(i, indicator=i % 2, terminal=(i % 5 == 0)))
    batch = buf.sample(64, np.random.default_rng(1))
    for k in range(64):
        i = int(batch.states[k, 0])
        ref = _t(i, indicator=i % 2, terminal=(i % 5 == 0))
        assert np.array_equal(batch.states[k], ref.state)
        assert np.array_equal(batch.actions[k], ref.action)
        assert batch.rewards[k] == ref.reward
        assert batch.indicators[k] == ref.indicator
        assert np.array_equal(batch.next_states[k], ref.next_state)
        assert batch.terminals[k] == ref.terminal


def test_sampling_is_uniform():
    n_items, draws = 1000, 100_000
    buf = ReplayBuffer(n_items, state_dim=2, action_dim=1)
    for i in range(n_items):
        buf.push(_t(i))
    batch = buf.sample(draws, np.random.default_rng(123))
    counts = np.bincount(batch.states[:, 0].astype(int), minlength=n_items)
    expected = draws / n_items
    sigma = np.sqrt(draws * (1 / n_items) * (1 - 1 / n_items))
    # per-entry frequency within 5 sigma (3 sigma per entry would give ~3
    # expected outliers over 1000 entries); also check aggregate spread
    assert np.all(np.abs(counts - expected) < 5 * sigma)
    assert np.mean(np.abs(counts - expected) < 3 * sigma) > 0.99
