"""Predator-prey gridworld with micro-stepping movement and stamina.

Agents move on a discrete grid, one cell per micro-step, up to `speed`
micro-steps per timestep. Movement costs stamina; STAY regenerates it.
Predators capture prey by stepping onto their cell. Rewards combine
sparse base events (capture, step cost) with distance-based
potential shaping.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Optional


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4


# (dx, dy) per action, indexed by Action value.
ACTION_DELTAS = ((0, -1), (0, 1), (-1, 0), (1, 0), (0, 0))

N_ACTIONS = 5


class Team(Enum):
    PREDATOR = "predator"
    PREY = "prey"


class TeamRewardMode(Enum):
    TEAM_SUM = "sum"
    TEAM_MEAN = "mean"


class PotentialMode(Enum):
    NEAREST = "nearest"
    SUM = "sum"


class TerminalReason(Enum):
    NONE = "none"
    ALL_PREY_CAPTURED = "all_prey_captured"
    TIMEOUT = "timeout"


class ConfigError(ValueError):
    """Raised when a grid/experiment configuration violates an invariant."""


@dataclass(frozen=True)
class GridConfig:
    width: int = 8
    height: int = 8
    obstacles: frozenset = frozenset()
    n_predators: int = 2
    n_prey: int = 2
    max_timesteps: int = 200
    stamina_max: int = 5
    regen_on_stay: int = 1
    capture_reward: float = 100.0
    prey_capture_penalty: float = -100.0
    predator_step_cost: float = -5.0
    shaping_factor: float = 1.0
    gamma: float = 0.90
    team_reward_mode: TeamRewardMode = TeamRewardMode.TEAM_MEAN
    potential_mode: PotentialMode = PotentialMode.NEAREST
    prey_shaping: bool = True
    stamina_enabled: bool = True

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ConfigError("grid must be at least 2x2")
        if len(self.obstacles) >= self.width * self.height:
            raise ConfigError("obstacles cover the entire grid")
        for (x, y) in self.obstacles:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ConfigError(f"obstacle {(x, y)} outside grid")
        if self.n_predators < 1 or self.n_prey < 1:
            raise ConfigError("need at least one predator and one prey")
        if self.max_timesteps < 1:
            raise ConfigError("max_timesteps must be >= 1")
        if self.stamina_max < 1:
            raise ConfigError("stamina_max must be >= 1")
        if self.regen_on_stay < 0:
            raise ConfigError("regen_on_stay must be >= 0")
        if self.shaping_factor < 0:
            raise ConfigError("shaping_factor must be >= 0")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must lie in (0, 1)")

    @property
    def n_agents(self) -> int:
        return self.n_predators + self.n_prey

    def team_of(self, agent_id: int) -> Team:
        return Team.PREDATOR if agent_id < self.n_predators else Team.PREY

    def free_cells(self) -> list:
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in self.obstacles
        ]


@dataclass(slots=True)
class AgentState:
    id: int
    team: Team
    position: tuple
    stamina: int
    speed: int = 1
    alive: bool = True

    def copy(self) -> "AgentState":
        return AgentState(self.id, self.team, self.position,
                          self.stamina, self.speed, self.alive)


@dataclass(slots=True)
class WorldState:
    agents: list
    timestep: int = 0

    def copy(self) -> "WorldState":
        return WorldState([a.copy() for a in self.agents], self.timestep)


@dataclass(slots=True)
class StepOutcome:
    next_state: WorldState
    per_agent_base_reward: list
    per_agent_shaping: list
    captures_this_step: list
    terminal: bool
    terminal_reason: TerminalReason
    # Potentials of next_state, cached so a caller stepping repeatedly can
    # feed them back as phi_prev instead of recomputing.
    potentials_next: Optional[list] = None


def manhattan_distance(p: tuple, q: tuple) -> int:
    return abs(p[0] - q[0]) + abs(p[1] - q[1])


def potential(state: WorldState, agent_id: int, config: GridConfig) -> float:
    """Distance-based potential: negative for predators (pull toward prey),
    positive for prey (push away from predators). Zero once the agent or
    all of its opponents are dead."""
    agent = state.agents[agent_id]
    if not agent.alive:
        return 0.0
    if agent.team is Team.PREDATOR:
        opponents = [a for a in state.agents if a.team is Team.PREY and a.alive]
        sign = -1.0
    else:
        if not config.prey_shaping:
            return 0.0
        opponents = [a for a in state.agents if a.team is Team.PREDATOR and a.alive]
        sign = 1.0
    if not opponents:
        return 0.0
    dists = [manhattan_distance(agent.position, o.position) for o in opponents]
    if config.potential_mode is PotentialMode.NEAREST:
        d = min(dists)
    else:
        d = sum(dists)
    return sign * config.shaping_factor * d


def all_potentials(state: WorldState, config: GridConfig) -> list:
    """Potentials of every agent in one pass (see `potential`)."""
    factor = config.shaping_factor
    agents = state.agents
    # Fast path for the reference 2-versus-2 layout with everyone alive.
    if (len(agents) == 4 and config.prey_shaping
            and config.potential_mode is PotentialMode.NEAREST):
        a0, a1, a2, a3 = agents
        if (a0.alive and a1.alive and a2.alive and a3.alive
                and a0.team is Team.PREDATOR and a1.team is Team.PREDATOR
                and a2.team is Team.PREY and a3.team is Team.PREY):
            x0, y0 = a0.position
            x1, y1 = a1.position
            x2, y2 = a2.position
            x3, y3 = a3.position
            d02 = abs(x0 - x2) + abs(y0 - y2)
            d03 = abs(x0 - x3) + abs(y0 - y3)
            d12 = abs(x1 - x2) + abs(y1 - y2)
            d13 = abs(x1 - x3) + abs(y1 - y3)
            return [
                -factor * (d02 if d02 < d03 else d03),
                -factor * (d12 if d12 < d13 else d13),
                factor * (d02 if d02 < d12 else d12),
                factor * (d03 if d03 < d13 else d13),
            ]
    pred_pos = [a.position for a in agents
                if a.alive and a.team is Team.PREDATOR]
    prey_pos = [a.position for a in agents
                if a.alive and a.team is Team.PREY]
    nearest = config.potential_mode is PotentialMode.NEAREST
    prey_shaping = config.prey_shaping
    out = []
    for a in agents:
        if not a.alive:
            out.append(0.0)
            continue
        if a.team is Team.PREDATOR:
            opponents = prey_pos
            sign = -factor
        else:
            if not prey_shaping:
                out.append(0.0)
                continue
            opponents = pred_pos
            sign = factor
        if not opponents:
            out.append(0.0)
            continue
        x, y = a.position
        dists = [abs(x - px) + abs(y - py) for (px, py) in opponents]
        out.append(sign * (min(dists) if nearest else sum(dists)))
    return out


def shaping_reward(phi_prev: float, phi_next: float, gamma: float) -> float:
    return gamma * phi_next - phi_prev


def is_terminal(state: WorldState, config: GridConfig):
    if not any(a.alive for a in state.agents if a.team is Team.PREY):
        return True, TerminalReason.ALL_PREY_CAPTURED
    if state.timestep >= config.max_timesteps:
        return True, TerminalReason.TIMEOUT
    return False, TerminalReason.NONE


def base_rewards(captures: list, alive_at_start: list, config: GridConfig) -> list:
    """Base (unshaped) rewards for one transition.

    `captures` holds (predator_id, prey_id) pairs recorded this step;
    `alive_at_start` is the alive flag of each agent before the step.
    """
    n_pred = config.n_predators
    step_cost = config.predator_step_cost
    rewards = [
        step_cost if i < n_pred and alive_at_start[i] else 0.0
        for i in range(config.n_agents)
    ]
    for (pred, prey) in captures:
        rewards[pred] += config.capture_reward
        rewards[prey] = config.prey_capture_penalty
    return rewards


def reset(config: GridConfig, rng: random.Random) -> WorldState:
    """Place all agents uniformly at random on distinct free cells."""
    cells = config.free_cells()
    if len(cells) < config.n_agents:
        raise ConfigError(
            f"{config.n_agents} agents do not fit on {len(cells)} free cells")
    placement = rng.sample(cells, config.n_agents)
    agents = [
        AgentState(id=i, team=config.team_of(i), position=placement[i],
                   stamina=config.stamina_max, speed=1, alive=True)
        for i in range(config.n_agents)
    ]
    return WorldState(agents=agents, timestep=0)


def set_speeds(state: WorldState, predator_speed: int, prey_speed: int) -> None:
    for a in state.agents:
        a.speed = predator_speed if a.team is Team.PREDATOR else prey_speed


def _step_in_place(state: WorldState, actions: list, config: GridConfig,
                   phi_prev: Optional[list]):
    """Advance `state` one timestep in place (see apply_joint_action).

    Assumes the caller has validated the action count and that the state
    is non-terminal. Returns (base rewards, shaping, captures, terminal,
    reason, potentials of the new state or None).
    """
    n = len(state.agents)
    alive_at_start = [a.alive for a in state.agents]
    gamma = config.gamma
    shaping_on = config.shaping_factor > 0.0
    if shaping_on and phi_prev is None:
        phi_prev = all_potentials(state, config)

    next_state = state
    nxt = next_state.agents
    width, height = config.width, config.height
    obstacles = config.obstacles
    stamina_on = config.stamina_enabled
    captures = []

    max_rounds = 1
    for a in nxt:
        if a.alive and a.speed > max_rounds:
            max_rounds = a.speed
    for rnd in range(max_rounds):
        for agent in nxt:
            if not agent.alive:
                continue
            action = actions[agent.id]
            if action == Action.STAY:
                if rnd == 0 and stamina_on:
                    agent.stamina = min(config.stamina_max,
                                        agent.stamina + config.regen_on_stay)
                continue
            if rnd >= agent.speed:
                continue
            if stamina_on and agent.stamina <= 0:
                continue
            dx, dy = ACTION_DELTAS[action]
            x, y = agent.position
            tx, ty = x + dx, y + dy
            if not (0 <= tx < width and 0 <= ty < height):
                continue
            if (tx, ty) in obstacles:
                continue
            occupant = None
            for other in nxt:
                if other.alive and other is not agent:
                    ox, oy = other.position
                    if ox == tx and oy == ty:
                        occupant = other
                        break
            if occupant is not None:
                if agent.team is Team.PREDATOR and occupant.team is Team.PREY:
                    occupant.alive = False
                    captures.append((agent.id, occupant.id))
                else:
                    continue  # blocked by teammate, or prey blocked by predator
            agent.position = (tx, ty)
            if stamina_on:
                agent.stamina -= 1

    next_state.timestep += 1
    rewards = base_rewards(captures, alive_at_start, config)

    if shaping_on:
        phi_next = all_potentials(next_state, config)
        shaping = [
            gamma * phi_next[i] - phi_prev[i] if alive_at_start[i] else 0.0
            for i in range(n)
        ]
    else:
        phi_next = None
        shaping = [0.0] * n

    prey_alive = False
    for a in nxt:
        if a.alive and a.team is Team.PREY:
            prey_alive = True
            break
    if not prey_alive:
        terminal, reason = True, TerminalReason.ALL_PREY_CAPTURED
    elif next_state.timestep >= config.max_timesteps:
        terminal, reason = True, TerminalReason.TIMEOUT
    else:
        terminal, reason = False, TerminalReason.NONE
    return rewards, shaping, captures, terminal, reason, phi_next


def apply_joint_action(state: WorldState, actions: list,
                       config: GridConfig,
                       phi_prev: Optional[list] = None) -> StepOutcome:
    """Advance the world one timestep under a joint action.

    `actions` has one entry per agent (dead agents' entries are ignored).
    Movement resolves in micro-step rounds: every agent takes its first
    micro-step in id order, then every agent its second, and so on. Each
    successful micro-step costs 1 stamina; blocked micro-steps (wall,
    obstacle, occupied cell, empty stamina) are cancelled without cost.
    A predator stepping onto an alive prey captures it.
    """
    if len(actions) != len(state.agents):
        raise ValueError("need exactly one action per agent")
    terminal, _ = is_terminal(state, config)
    if terminal:
        raise ValueError("cannot act on a terminal state")

    next_state = state.copy()
    rewards, shaping, captures, terminal, reason, phi_next = _step_in_place(
        next_state, actions, config, phi_prev)
    return StepOutcome(
        next_state=next_state,
        per_agent_base_reward=rewards,
        per_agent_shaping=shaping,
        captures_this_step=captures,
        terminal=terminal,
        terminal_reason=reason,
        potentials_next=phi_next,
    )


def encode_state(state: WorldState, config: GridConfig) -> int:
    """Pack every agent's (position, stamina, alive) into one integer key.

    Timestep, speed, and team are deliberately excluded: speed and team are
    condition constants, and value estimates are time-homogeneous.
    """
    width = config.width
    stamina_levels = config.stamina_max + 1
    cell_count = width * config.height
    radix = cell_count * stamina_levels * 2
    key = 0
    for a in state.agents:
        x, y = a.position
        sub = ((x + y * width) * stamina_levels + a.stamina) * 2 + (1 if a.alive else 0)
        key = key * radix + sub
    return key


def decode_state_key(key: int, config: GridConfig) -> list:
    """Inverse of encode_state: list of (position, stamina, alive) per agent."""
    width = config.width
    stamina_levels = config.stamina_max + 1
    cell_count = width * config.height
    radix = cell_count * stamina_levels * 2
    fields = []
    for _ in range(config.n_agents):
        key, sub = divmod(key, radix)
        sub, alive = divmod(sub, 2)
        cell, stamina = divmod(sub, stamina_levels)
        x, y = cell % width, cell // width
        fields.append(((x, y), stamina, bool(alive)))
    fields.reverse()
    return fields
