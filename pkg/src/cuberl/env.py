"""Episodic cube environment with a log-rescaled learned-cost reward.

Each non-goal step pays ``-log_b C(s_next, solved)`` where ``C`` is the
ChaseNet estimate; reaching the solved state pays a fixed bonus instead and
ends the episode.  Episodes are also cut after ``max_steps`` moves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cube
from .chasenet import CostModel, PairSample


@dataclass
class EnvConfig:
    log_base: float = 1.2
    goal_reward: float = 100.0
    max_steps: int = 30
    depth_range: tuple[int, int] = (1, 30)

    def __post_init__(self):
        if not self.log_base > 1:
            raise ValueError("log_base must exceed 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        lo, hi = self.depth_range
        if not 0 <= lo <= hi:
            raise ValueError(f"bad scramble depth range {self.depth_range}")
        self.depth_range = (int(lo), int(hi))


@dataclass(frozen=True)
class Transition:
    state: cube.CubeState
    action: cube.Action
    reward: float
    next_state: cube.CubeState
    done: bool
    log_prob: float = 0.0


def reset(rng: np.random.Generator, cfg: EnvConfig) -> cube.CubeState:
    """A constrained random scramble of uniformly drawn depth."""
    lo, hi = cfg.depth_range
    depth = int(rng.integers(lo, hi + 1))
    return cube.random_scramble(rng, depth).resulting_state


def shaped_reward(c, cfg: EnvConfig | None = None):
    """``-log_b(c)``; works elementwise on arrays."""
    base = cfg.log_base if cfg is not None else EnvConfig.log_base
    c = np.asarray(c, dtype=np.float64)
    if (c <= 0).any():
        raise ValueError("predicted cost must be positive")
    r = -np.log(c) / math.log(base)
    return float(r) if r.ndim == 0 else r


def step(s: cube.CubeState, a: cube.Action, m: CostModel, cfg: EnvConfig, step_index: int,
         log_prob: float = 0.0) -> Transition:
    nxt = cube.apply_action(s, a)
    # goal test first: the bonus replaces the shaped reward
    if cube.is_solved(nxt):
        return Transition(s, cube.Action(a), cfg.goal_reward, nxt, True, log_prob)
    c = float(m.predict(nxt.array[None], cube.SOLVED[None])[0])
    done = step_index + 1 >= cfg.max_steps
    return Transition(s, cube.Action(a), shaped_reward(c, cfg), nxt, done, log_prob)


def batch_rewards(next_states: np.ndarray, m: CostModel, cfg: EnvConfig) -> tuple[np.ndarray, np.ndarray]:
    """Rewards and goal flags for a batch of successor states."""
    solved = (next_states == cube.SOLVED).all(axis=1)
    rewards = np.full(len(next_states), cfg.goal_reward, dtype=np.float64)
    pending = ~solved
    if pending.any():
        c = m.predict(next_states[pending], cube.SOLVED[None])
        rewards[pending] = shaped_reward(c, cfg)
    return rewards, solved


@dataclass
class EpisodeBatch:
    """Complete episodes collected in lockstep, stored time-major ``(T, n)``.

    ``mask[t, i]`` marks steps that belong to episode ``i``; every episode
    ends with ``done`` set at its last valid step.
    """

    states: np.ndarray  # (T, n, 24) state before the move
    actions: np.ndarray  # (T, n)
    rewards: np.ndarray  # (T, n)
    log_probs: np.ndarray  # (T, n)
    next_states: np.ndarray  # (T, n, 24)
    solved: np.ndarray  # (T, n) goal reached at this step
    mask: np.ndarray  # (T, n)
    starts: np.ndarray  # (n, 24)
    lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        self.lengths = self.mask.sum(axis=0)

    @property
    def n_transitions(self) -> int:
        return int(self.mask.sum())

    @property
    def successes(self) -> np.ndarray:
        return self.solved.any(axis=0)

    def episode_returns(self) -> np.ndarray:
        return (self.rewards * self.mask).sum(axis=0)

    def pair_samples(self) -> PairSample:
        """``(start, state after i moves, i)`` for every step of every episode."""
        t_idx, e_idx = np.nonzero(self.mask)
        return PairSample(self.starts[e_idx], self.next_states[t_idx, e_idx], t_idx + 1)
