"""Desk-scale environments emitting reward, cost, and the safety indicator.

Every step yields a nonnegative cost and the binary indicator derived from
it: indicator = 1 exactly when the step incurred zero cost. CorridorEnv is a
point-mass speed/boundary task (horizon 500), PusherEnv a planar
object-pushing task with an obstacle (horizon 50), TabularCmdp an explicit
finite constrained MDP for the oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def indicator(cost: float) -> int:
    """1 if the step was safe (zero cost), 0 otherwise."""
    if cost < 0:
        raise ValueError(f"cost must be nonnegative, got {cost}")
    return 1 if cost == 0 else 0


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    cost: float
    indicator: int
    terminal: bool


class EpisodeOver(RuntimeError):
    """step() called after the episode terminated."""


@dataclass
class CorridorEnv:
    """Double-integrator point mass running along x.

    Reward is the post-update x-velocity. Cost is the boundary excess
    max(0, |y| - y_bound) plus the speed excess max(0, speed - speed_limit).
    Speed is clamped to max_speed, actions clipped to ±accel_limit.
    """

    dt: float = 0.25
    y_bound: float = 1.0
    accel_limit: float = 2.0
    speed_limit: float = 1.5
    max_speed: float = 2.0
    horizon: int = 500
    y_start_range: float = 0.2

    obs_dim: int = field(default=4, init=False)
    action_dim: int = field(default=2, init=False)
    reports_success: bool = field(default=False, init=False)

    def __post_init__(self):
        for name in ("dt", "y_bound", "accel_limit", "speed_limit", "max_speed"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        self._pos = np.zeros(2)
        self._vel = np.zeros(2)
        self._steps = 0
        self._done = True

    @property
    def action_scale(self) -> np.ndarray:
        return np.full(2, self.accel_limit)

    def _observe(self) -> np.ndarray:
        x_scale = self.max_speed * self.dt * self.horizon
        return np.array(
            [self._pos[0] / x_scale, self._pos[1], self._vel[0], self._vel[1]]
        )

    def reset(self, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        y0 = rng.uniform(-self.y_start_range, self.y_start_range)
        self._pos = np.array([0.0, y0])
        self._vel = np.zeros(2)
        self._steps = 0
        self._done = False
        return self._observe()

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeOver("corridor episode already terminated")
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (2,) or not np.all(np.isfinite(a)):
            raise ValueError(f"expected finite 2-vector action, got {action!r}")
        a = np.clip(a, -self.accel_limit, self.accel_limit)
        self._vel = self._vel + a * self.dt
        speed = float(np.linalg.norm(self._vel))
        if speed > self.max_speed:
            self._vel *= self.max_speed / speed
            speed = self.max_speed
        self._pos = self._pos + self._vel * self.dt
        reward = float(self._vel[0])
        cost = max(0.0, abs(self._pos[1]) - self.y_bound) + max(
            0.0, speed - self.speed_limit
        )
        self._steps += 1
        self._done = self._steps >= self.horizon
        return StepResult(self._observe(), reward, cost, indicator(cost), self._done)


@dataclass
class PusherEnv:
    """Planar pusher on the unit square.

    The agent is a point moved by bounded per-step increments; overlapping
    the object disk pushes the object out along the contact normal. Cost is
    1 whenever the agent or the object overlaps the obstacle disk. Reward is
    0 while the object sits within success_tol of the goal and -1 otherwise;
    episodes always run the full horizon (rounds have fixed length, reaching
    the goal latches the success flag). The obstacle is always placed on the
    segment between the object's start and the goal, close to the goal, so
    an uncorrected straight push both transits it and parks the object
    against it.
    """

    object_radius: float = 0.05
    obstacle_radius: float = 0.05
    goal_radius: float = 0.05
    success_tol: float = 0.05
    step_limit: float = 0.05
    horizon: int = 50

    obs_dim: int = field(default=10, init=False)
    action_dim: int = field(default=2, init=False)
    reports_success: bool = field(default=True, init=False)

    def __post_init__(self):
        for name in (
            "object_radius",
            "obstacle_radius",
            "goal_radius",
            "success_tol",
            "step_limit",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.agent = np.zeros(2)
        self.object = np.zeros(2)
        self.obstacle = np.zeros(2)
        self.goal = np.zeros(2)
        self.object_vel = np.zeros(2)
        self._steps = 0
        self._done = True
        self.succeeded = False

    @property
    def action_scale(self) -> np.ndarray:
        return np.full(2, self.step_limit)

    def _observe(self) -> np.ndarray:
        return np.concatenate(
            [self.agent, self.object, self.obstacle, self.goal, self.object_vel]
        )

    def reset(self, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        while True:
            obj = rng.uniform(0.2, 0.8, size=2)
            goal = rng.uniform(0.2, 0.8, size=2)
            if 0.3 <= np.linalg.norm(goal - obj) <= 0.6:
                break
        to_goal = (goal - obj) / np.linalg.norm(goal - obj)
        perp = np.array([-to_goal[1], to_goal[0]])
        self.object = obj
        self.goal = goal
        # on the object->goal segment, a short way before the goal: the
        # straight push has to cross it and then rests the object against it
        self.obstacle = goal - rng.uniform(0.09, 0.14) * to_goal
        # start behind the object with a small lateral offset so approach
        # angles vary across episodes
        side = rng.uniform(-0.04, 0.04)
        self.agent = np.clip(obj - 0.08 * to_goal + side * perp, 0.0, 1.0)
        self.object_vel = np.zeros(2)
        self._steps = 0
        self._done = False
        self.succeeded = False
        return self._observe()

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeOver("pusher episode already terminated")
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (2,) or not np.all(np.isfinite(a)):
            raise ValueError(f"expected finite 2-vector action, got {action!r}")
        a = np.clip(a, -self.step_limit, self.step_limit)
        old_object = self.object.copy()
        # move in substeps so a full step cannot tunnel through the object
        n_sub = max(1, int(np.ceil(np.linalg.norm(a) / (0.2 * self.object_radius))))
        contact = self.object_radius + self.obstacle_radius
        overlapped = False
        for _ in range(n_sub):
            self.agent = np.clip(self.agent + a / n_sub, 0.0, 1.0)
            gap = self.object - self.agent
            dist = float(np.linalg.norm(gap))
            if dist < self.object_radius:
                if dist < 1e-9:
                    a_norm = np.linalg.norm(a)
                    norm = a / a_norm if a_norm > 0 else np.array([1.0, 0.0])
                else:
                    norm = gap / dist
                self.object = np.clip(
                    self.object + (self.object_radius - dist) * norm, 0.0, 1.0
                )
            overlapped = overlapped or (
                np.linalg.norm(self.object - self.obstacle) < contact
                or np.linalg.norm(self.agent - self.obstacle) < self.obstacle_radius
            )
        self.object_vel = self.object - old_object
        cost = 1.0 if overlapped else 0.0
        at_goal = bool(np.linalg.norm(self.object - self.goal) <= self.success_tol)
        self.succeeded = self.succeeded or at_goal
        reward = 0.0 if at_goal else -1.0
        self._steps += 1
        self._done = self._steps >= self.horizon
        return StepResult(self._observe(), reward, cost, indicator(cost), self._done)


@dataclass
class TabularCmdp:
    """Explicit finite CMDP: transition kernel, reward, cost, start distribution.

    horizon is a positive integer or math.inf.
    """

    transitions: np.ndarray  # (S, A, S), each row a distribution
    rewards: np.ndarray  # (S, A)
    costs: np.ndarray  # (S, A), nonnegative
    start: np.ndarray  # (S,)
    horizon: float = math.inf

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.costs = np.asarray(self.costs, dtype=np.float64)
        self.start = np.asarray(self.start, dtype=np.float64)
        s, a, s2 = self.transitions.shape
        if s != s2:
            raise ValueError("transition kernel must be (S, A, S)")
        if self.rewards.shape != (s, a) or self.costs.shape != (s, a):
            raise ValueError("reward/cost tables must be (S, A)")
        if self.start.shape != (s,):
            raise ValueError("start distribution must have one entry per state")
        row_sums = self.transitions.sum(axis=2)
        if np.any(np.abs(row_sums - 1.0) > 1e-12) or np.any(self.transitions < 0):
            raise ValueError("each transition row must be a probability distribution")
        if np.any(self.costs < 0):
            raise ValueError("costs must be nonnegative")
        if abs(self.start.sum() - 1.0) > 1e-12 or np.any(self.start < 0):
            raise ValueError("start must be a probability distribution")
        if self.horizon != math.inf and (
            self.horizon < 1 or self.horizon != int(self.horizon)
        ):
            raise ValueError("horizon must be a positive integer or inf")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def indicator_table(self) -> np.ndarray:
        """Per-(state, action) safety indicator: 1 where cost is zero."""
        return (self.costs == 0).astype(np.float64)


def tabular_step(cmdp: TabularCmdp, s: int, a: int, rng: np.random.Generator) -> StepResult:
    """Sample one transition; terminal flag is always False (horizon is the
    caller's bookkeeping)."""
    if not 0 <= s < cmdp.n_states:
        raise IndexError(f"state {s} out of range")
    if not 0 <= a < cmdp.n_actions:
        raise IndexError(f"action {a} out of range")
    nxt = int(rng.choice(cmdp.n_states, p=cmdp.transitions[s, a]))
    cost = float(cmdp.costs[s, a])
    return StepResult(
        next_state=np.array([nxt], dtype=np.float64),
        reward=float(cmdp.rewards[s, a]),
        cost=cost,
        indicator=indicator(cost),
        terminal=False,
    )
