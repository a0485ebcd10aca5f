"""Experiment harness: composes the gridworld and the tabular learners
into the 4-pairing x 3-regime condition matrix, with paired seeding and
per-episode metric collection.

Each (condition, seed) run is an isolated unit: it owns its learners and
rng streams, so runs can execute in any order or in parallel without
affecting results. Initial-placement randomness depends only on the seed,
never on the condition, which keeps seeds paired across conditions.
"""

from __future__ import annotations

import hashlib
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .env import (
    Action,
    GridConfig,
    Team,
    TeamRewardMode,
    _step_in_place,
    encode_state,
    reset,
    set_speeds,
)
from .learners import (
    EpsilonSchedule,
    LearnerParams,
    QTable,
    _select,
    _update,
    cql_select_joint,
    encode_joint,
    epsilon_at,
)

STAY = int(Action.STAY)


class Paradigm(Enum):
    IQL = "iql"
    CQL = "cql"


class SpeedRegime(Enum):
    EQUAL_BASE = "base"
    PREDATOR_FAST = "pred-fast"
    PREY_FAST = "prey-fast"


REGIME_SPEEDS = {
    SpeedRegime.EQUAL_BASE: (1, 1),
    SpeedRegime.PREDATOR_FAST: (2, 1),
    SpeedRegime.PREY_FAST: (1, 2),
}

# Canonical pairing order (predator paradigm, prey paradigm), matching the
# row order used in every report.
PAIRINGS = (
    (Paradigm.IQL, Paradigm.IQL),
    (Paradigm.IQL, Paradigm.CQL),
    (Paradigm.CQL, Paradigm.IQL),
    (Paradigm.CQL, Paradigm.CQL),
)

METRICS = ("episode_length", "predator_reward", "prey_reward")


def pairing_key(predator: Paradigm, prey: Paradigm) -> str:
    return f"{predator.value}-{prey.value}"


@dataclass(frozen=True)
class Condition:
    predator_paradigm: Paradigm
    prey_paradigm: Paradigm
    speed_regime: SpeedRegime
    seed: int

    @property
    def pairing(self) -> str:
        return pairing_key(self.predator_paradigm, self.prey_paradigm)


@dataclass(frozen=True)
class EpisodeMetrics:
    length: int
    predator_reward: float
    prey_reward: float


@dataclass(frozen=True)
class RunPlan:
    episodes: int = 40000
    seeds: tuple = tuple(range(10))
    window_size: int = 10000
    grid: GridConfig = field(default_factory=GridConfig)
    learner: LearnerParams = field(default_factory=LearnerParams)
    schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.window_size < 1 or self.window_size > self.episodes:
            raise ValueError("window_size must lie in [1, episodes]")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be pairwise distinct")


@dataclass
class SeedResult:
    condition: Condition
    lengths: np.ndarray
    predator_rewards: np.ndarray
    prey_rewards: np.ndarray
    window: int = 10000

    def series(self, metric: str) -> np.ndarray:
        if metric == "episode_length":
            return self.lengths
        if metric == "predator_reward":
            return self.predator_rewards
        if metric == "prey_reward":
            return self.prey_rewards
        raise KeyError(metric)

    @property
    def per_episode(self) -> list:
        return [
            EpisodeMetrics(int(l), float(p), float(q))
            for l, p, q in zip(self.lengths, self.predator_rewards, self.prey_rewards)
        ]

    @property
    def final_window(self) -> tuple:
        return tuple(
            final_window_mean(self.series(m), self.window) for m in METRICS
        )


def final_window_mean(series, window: int) -> float:
    """Mean of the trailing `window` entries (the whole series if shorter)."""
    n = len(series)
    if n == 0:
        raise ValueError("series must be nonempty")
    w = min(window, n)
    return float(np.mean(np.asarray(series, dtype=float)[n - w:]))


def derive_stream_seed(*parts) -> int:
    """Deterministic, process-independent integer seed from labeled parts."""
    text = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


class IndependentTeam:
    """One Q-table per member over the member's own 5 actions."""

    def __init__(self, member_ids, params: LearnerParams):
        self.member_ids = list(member_ids)
        self.params = params
        self.tables = [QTable(5) for _ in self.member_ids]

    def select(self, state_key, alive, epsilon, rng):
        return [
            _select(self.tables[i], state_key, epsilon, rng)
            if alive[i] else STAY
            for i in range(len(self.member_ids))
        ]

    def observe(self, state_key, member_actions, member_rewards,
                next_state_key, terminal, alive_before, alive_after):
        for i, table in enumerate(self.tables):
            if not alive_before[i]:
                continue
            member_terminal = terminal or not alive_after[i]
            _update(table, state_key, member_actions[i], member_rewards[i],
                    next_state_key, member_terminal, self.params)


class CentralizedTeam:
    """One joint-action Q-table for the whole team, summed team reward."""

    def __init__(self, member_ids, params: LearnerParams):
        self.member_ids = list(member_ids)
        self.params = params
        self.tables = [QTable(5 ** len(self.member_ids))]

    def select(self, state_key, alive, epsilon, rng):
        return list(cql_select_joint(self.tables[0], state_key, alive,
                                     epsilon, rng))

    def observe(self, state_key, member_actions, member_rewards,
                next_state_key, terminal, alive_before, alive_after):
        joint_key = encode_joint(member_actions)
        team_reward = sum(
            r for i, r in enumerate(member_rewards) if alive_before[i]
        )
        _update(self.tables[0], state_key, joint_key, team_reward,
                next_state_key, terminal, self.params)


def make_team(paradigm: Paradigm, member_ids, params: LearnerParams):
    cls = IndependentTeam if paradigm is Paradigm.IQL else CentralizedTeam
    return cls(member_ids, params)


def run_episode(config: GridConfig, predator_team, prey_team,
                initial_state, epsilon: float,
                explore_rng: random.Random) -> EpisodeMetrics:
    """One full training episode from a copy of `initial_state`."""
    state = initial_state.copy()
    n_pred = config.n_predators
    n = config.n_agents
    state_key = encode_state(state, config)
    totals = [0.0] * n
    phi = None
    agents = state.agents
    alive = [a.alive for a in agents]
    alive_pred, alive_prey = alive[:n_pred], alive[n_pred:]

    while True:
        pred_actions = predator_team.select(state_key, alive_pred,
                                            epsilon, explore_rng)
        prey_actions = prey_team.select(state_key, alive_prey,
                                        epsilon, explore_rng)
        actions = pred_actions + prey_actions
        base, shaping, captures, terminal, _, phi = _step_in_place(
            state, actions, config, phi)
        next_key = encode_state(state, config)
        shaped = [b + s for b, s in zip(base, shaping)]
        for i in range(n):
            totals[i] += shaped[i]
        if captures:
            alive_after = [a.alive for a in agents]
            after_pred, after_prey = alive_after[:n_pred], alive_after[n_pred:]
        else:
            after_pred, after_prey = alive_pred, alive_prey
        predator_team.observe(state_key, pred_actions, shaped[:n_pred],
                              next_key, terminal, alive_pred, after_pred)
        prey_team.observe(state_key, prey_actions, shaped[n_pred:],
                          next_key, terminal, alive_prey, after_prey)
        alive_pred, alive_prey = after_pred, after_prey
        state_key = next_key
        if terminal:
            break

    if config.team_reward_mode is TeamRewardMode.TEAM_MEAN:
        pred_total = sum(totals[:n_pred]) / n_pred
        prey_total = sum(totals[n_pred:]) / config.n_prey
    else:
        pred_total = sum(totals[:n_pred])
        prey_total = sum(totals[n_pred:])
    return EpisodeMetrics(state.timestep, pred_total, prey_total)


def initial_placement(config: GridConfig, seed: int,
                      regime: SpeedRegime):
    """Per-seed starting configuration, shared across conditions.

    The placement is drawn once per seed and reused for every episode of
    that seed. Seeds therefore index distinct starting geometries, which
    is what makes them pairable across conditions: two conditions with
    the same seed solve the identical pursuit problem.
    """
    rng = random.Random(derive_stream_seed("placement", seed))
    state = reset(config, rng)
    set_speeds(state, *REGIME_SPEEDS[regime])
    return state


def run_training(condition: Condition, plan: RunPlan) -> SeedResult:
    """Train one (condition, seed) cell for plan.episodes episodes."""
    config = plan.grid
    explore_rng = random.Random(
        derive_stream_seed("explore", condition.seed, condition.pairing,
                           condition.speed_regime.value))
    n_pred = config.n_predators
    predator_team = make_team(condition.predator_paradigm,
                              range(n_pred), plan.learner)
    prey_team = make_team(condition.prey_paradigm,
                          range(n_pred, config.n_agents), plan.learner)
    initial = initial_placement(config, condition.seed,
                                condition.speed_regime)

    lengths = np.zeros(plan.episodes, dtype=np.int32)
    pred_rewards = np.zeros(plan.episodes, dtype=np.float64)
    prey_rewards = np.zeros(plan.episodes, dtype=np.float64)
    for episode in range(plan.episodes):
        eps = epsilon_at(plan.schedule, episode)
        m = run_episode(config, predator_team, prey_team, initial, eps,
                        explore_rng)
        lengths[episode] = m.length
        pred_rewards[episode] = m.predator_reward
        prey_rewards[episode] = m.prey_reward

    return SeedResult(condition, lengths, pred_rewards, prey_rewards,
                      window=plan.window_size)


@dataclass
class MatrixResult:
    """Results keyed by (pairing key, regime, seed)."""

    plan: RunPlan
    results: dict

    def seed_results(self, pairing: str, regime: SpeedRegime) -> dict:
        return {
            seed: res for (p, r, seed), res in self.results.items()
            if p == pairing and r == regime
        }

    def final_window_by_seed(self, pairing: str, regime: SpeedRegime,
                             metric: str) -> dict:
        out = {}
        for seed, res in self.seed_results(pairing, regime).items():
            out[seed] = final_window_mean(res.series(metric),
                                          self.plan.window_size)
        return out

    def pairings(self):
        return sorted({p for (p, _, _) in self.results})

    def regimes(self):
        return sorted({r for (_, r, _) in self.results}, key=lambda r: r.value)


def _run_one(args):
    condition, plan = args
    return condition, run_training(condition, plan)


def run_matrix(plan: RunPlan, pairings=PAIRINGS, regimes=tuple(SpeedRegime),
               workers: int | None = None, progress=None) -> MatrixResult:
    """Execute every (pairing, regime, seed) run of the plan.

    Runs are independent; with workers > 1 they execute in a process
    pool. Results are identical regardless of worker count or order.
    """
    conditions = [
        Condition(pred, prey, regime, seed)
        for (pred, prey) in pairings
        for regime in regimes
        for seed in plan.seeds
    ]
    if workers is None:
        workers = min(len(conditions), os.cpu_count() or 1)
    results = {}

    def record(condition, result):
        key = (condition.pairing, condition.speed_regime, condition.seed)
        results[key] = result
        if progress is not None:
            fw = result.final_window
            print(f"{condition.pairing} {condition.speed_regime.value} "
                  f"seed={condition.seed} length={fw[0]:.1f} "
                  f"pred={fw[1]:.1f} prey={fw[2]:.1f}",
                  file=progress, flush=True)

    if workers <= 1 or len(conditions) == 1:
        for condition in conditions:
            record(condition, run_training(condition, plan))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for condition, result in pool.map(
                    _run_one, [(c, plan) for c in conditions]):
                record(condition, result)
    return MatrixResult(plan=plan, results=results)
