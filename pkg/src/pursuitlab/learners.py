"""Sparse tabular Q-learning primitives: per-agent (independent) and
per-team joint-action (centralized) variants.

Q-tables are dictionaries keyed by state, holding one row of action
values each; absent rows read as all zeros. Joint actions are indexed
mixed-radix over the canonical action ordering, first team member in
the lowest digit.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .env import N_ACTIONS, Action

STAY = int(Action.STAY)


@dataclass(frozen=True)
class LearnerParams:
    alpha: float = 0.25
    gamma: float = 0.90

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.1
    decay_horizon: int = 23000

    def __post_init__(self):
        if not (self.start >= self.end > 0.0):
            raise ValueError("need start >= end > 0")
        if self.decay_horizon < 1:
            raise ValueError("decay_horizon must be >= 1")


def epsilon_at(schedule: EpsilonSchedule, episode: int) -> float:
    """Geometric decay from start to end, held at end after the horizon."""
    if episode >= schedule.decay_horizon or schedule.start == schedule.end:
        return schedule.end
    ratio = (schedule.end / schedule.start) ** (1.0 / schedule.decay_horizon)
    return max(schedule.end, schedule.start * ratio ** episode)


class QTable:
    """Sparse state -> action-value-row map. Missing entries are 0.0."""

    __slots__ = ("n_actions", "rows")

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.rows: dict = {}

    def get(self, state_key, action: int) -> float:
        row = self.rows.get(state_key)
        return row[action] if row is not None else 0.0

    def set(self, state_key, action: int, value: float) -> None:
        if not math.isfinite(value):
            raise ValueError("Q values must be finite")
        row = self.rows.get(state_key)
        if row is None:
            row = [0.0] * self.n_actions
            self.rows[state_key] = row
        row[action] = value

    def max(self, state_key) -> float:
        row = self.rows.get(state_key)
        return max(row) if row is not None else 0.0

    def __len__(self) -> int:
        return len(self.rows)


def _select(q: QTable, state_key, epsilon: float, rng: random.Random) -> int:
    n = q.n_actions
    # int(random() * n) is an exact uniform draw over range(n) and is
    # measurably cheaper than randrange on this hot path.
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.random() * n)
    row = q.rows.get(state_key)
    if row is None:
        return int(rng.random() * n)
    best = max(row)
    if row.count(best) == 1:
        return row.index(best)
    ties = [a for a in range(n) if row[a] == best]
    return ties[rng.randrange(len(ties))]


def iql_select(q: QTable, state_key, epsilon: float, rng: random.Random) -> int:
    """Epsilon-greedy over the 5 per-agent actions; ties broken uniformly."""
    return _select(q, state_key, epsilon, rng)


def _update(q: QTable, state_key, action: int, reward: float,
            next_state_key, terminal: bool, params: LearnerParams) -> None:
    row = q.rows.get(state_key)
    if row is None:
        row = [0.0] * q.n_actions
        q.rows[state_key] = row
    if terminal:
        target = reward
    else:
        nrow = q.rows.get(next_state_key)
        target = reward + params.gamma * (max(nrow) if nrow is not None else 0.0)
    row[action] += params.alpha * (target - row[action])


def iql_update(q: QTable, state_key, action: int, shaped_reward: float,
               next_state_key, terminal: bool, params: LearnerParams) -> None:
    """One tabular Q-learning step; the bootstrap is zero on terminal."""
    if not math.isfinite(shaped_reward):
        raise ValueError("reward must be finite")
    _update(q, state_key, action, shaped_reward, next_state_key, terminal, params)


def encode_joint(actions) -> int:
    """Mixed-radix index of a team action tuple (member 0 = lowest digit)."""
    key = 0
    for a in reversed(actions):
        key = key * N_ACTIONS + int(a)
    return key


def decode_joint(key: int, k: int) -> tuple:
    actions = []
    for _ in range(k):
        key, a = divmod(key, N_ACTIONS)
        actions.append(a)
    return tuple(actions)


def cql_select_joint(q: QTable, state_key, alive, epsilon: float,
                     rng: random.Random) -> tuple:
    """Epsilon-greedy over the 5^k joint actions of a team.

    `alive` flags one entry per team member; dead members' components
    are forced to STAY after selection.
    """
    k = len(alive)
    joint = decode_joint(_select(q, state_key, epsilon, rng), k)
    if all(alive):
        return joint
    return tuple(a if alive[i] else STAY for i, a in enumerate(joint))


def cql_update(q: QTable, state_key, joint_key: int, team_reward: float,
               next_state_key, terminal: bool, params: LearnerParams) -> None:
    """Joint-action Q-learning step on the summed team reward."""
    if not math.isfinite(team_reward):
        raise ValueError("reward must be finite")
    _update(q, state_key, joint_key, team_reward, next_state_key, terminal, params)


def marginalize(q: QTable, state_key, k: int, member: int) -> list:
    """Per-action values for one member, averaging the joint row uniformly
    over all other members' action choices."""
    if not (0 <= member < k):
        raise ValueError("member index outside team")
    row = q.rows.get(state_key)
    totals = [0.0] * N_ACTIONS
    if row is None:
        return totals
    stride = N_ACTIONS ** member
    for joint_key, value in enumerate(row):
        component = (joint_key // stride) % N_ACTIONS
        totals[component] += value
    completions = N_ACTIONS ** (k - 1)
    return [t / completions for t in totals]
