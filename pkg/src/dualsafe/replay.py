"""Fixed-capacity FIFO experience buffer shared by both policies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    """One interaction record (s, a, r, I, s', terminal)."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    indicator: int
    next_state: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    indicators: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


class ReplayBuffer:
    """Ring buffer of transitions; insertion beyond capacity evicts the oldest."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.count = 0
        self._pos = 0
        self._states = np.empty((capacity, state_dim))
        self._actions = np.empty((capacity, action_dim))
        self._rewards = np.empty(capacity)
        self._indicators = np.empty(capacity)
        self._next_states = np.empty((capacity, state_dim))
        self._terminals = np.empty(capacity, dtype=bool)

    def __len__(self) -> int:
        return self.count

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=np.float64)
        action = np.asarray(t.action, dtype=np.float64)
        next_state = np.asarray(t.next_state, dtype=np.float64)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ValueError("state width does not match buffer")
        if action.shape != (self.action_dim,):
            raise ValueError("action width does not match buffer")
        if t.indicator not in (0, 1):
            raise ValueError(f"indicator must be 0 or 1, got {t.indicator!r}")
        if not (
            np.all(np.isfinite(state))
            and np.all(np.isfinite(action))
            and np.all(np.isfinite(next_state))
            and np.isfinite(t.reward)
        ):
            raise ValueError("non-finite transition entry")
        i = self._pos
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = float(t.reward)
        self._indicators[i] = float(t.indicator)
        self._next_states[i] = next_state
        self._terminals[i] = bool(t.terminal)
        self._pos = (self._pos + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> TransitionBatch:
        """n uniform draws with replacement; deterministic given rng state."""
        if self.count == 0:
            raise ValueError("cannot sample from an empty buffer")
        if n < 1:
            raise ValueError("sample size must be at least 1")
        idx = rng.integers(0, self.count, size=n)
        return TransitionBatch(
            states=self._states[idx].copy(),
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            indicators=self._indicators[idx].copy(),
            next_states=self._next_states[idx].copy(),
            terminals=self._terminals[idx].copy(),
        )

    def get(self, i: int) -> Transition:
        """The i-th stored transition, oldest first (test/debug helper)."""
        if not 0 <= i < self.count:
            raise IndexError(i)
        if self.count == self.capacity:
            j = (self._pos + i) % self.capacity
        else:
            j = i
        return Transition(
            state=self._states[j].copy(),
            action=self._actions[j].copy(),
            reward=float(self._rewards[j]),
            indicator=int(self._indicators[j]),
            next_state=self._next_states[j].copy(),
            terminal=bool(self._terminals[j]),
        )
