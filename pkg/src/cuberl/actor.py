"""PPO actor-critic on the cube environment, with interleaved cost-model fine-tuning.

Episodes are collected in lockstep across ``n_envs`` independent environments.
One training *iteration* is one such round of complete episodes.  Every
transition goes to the rollout buffer; once the buffer holds more than
``buffer_size`` transitions the policy and critic are updated and the buffer
is cleared.  After each round the cost model is fine-tuned on the
``(start, state after i moves, i)`` pairs the round produced.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import cube
from .chasenet import CostModel, FineTuner, one_hot
from .env import EnvConfig, EpisodeBatch, batch_rewards
from .nn import tensor as T
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import MLP, Module
from .nn.optim import Adam
from .nn.tensor import Tape, Tensor

log = logging.getLogger(__name__)


@dataclass
class ActorConfig:
    hidden: tuple[int, ...] = (512, 256)
    gamma: float = 0.99
    lam: float = 0.95
    eps: float = 0.2
    buffer_size: int = 2048
    epochs: int = 4
    minibatch: int = 256
    lr: float = 3e-4
    critic_lr: float = 1e-3
    final_lr_scale: float = 1.0  # both rates decay linearly to this fraction by the last iteration
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    n_envs: int = 128
    finetune: bool = True
    finetune_lr: float = 1e-4
    success_window: int = 50

    def lr_scale(self, j: int, iterations: int) -> float:
        if iterations <= 1:
            return 1.0
        return 1.0 - (1.0 - self.final_lr_scale) * j / (iterations - 1)

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lam must lie in [0, 1]")
        if not 0 < self.final_lr_scale <= 1:
            raise ValueError("final_lr_scale must lie in (0, 1]")
        self.hidden = tuple(self.hidden)


# ------------------------------------------------------------------- models
class _StateMLP(Module):
    n_out: int

    def __init__(self, hidden, rng: np.random.Generator, dtype=np.float32, zero_last: bool = True):
        self.hidden = tuple(hidden)
        self.net = MLP([cube.N_STICKERS * cube.N_COLORS, *self.hidden, self.n_out], rng, dtype)
        if zero_last:
            last = self.net.layers[-1]
            last.W.data[...] = 0
            last.b.data[...] = 0

    def __call__(self, states: np.ndarray) -> Tensor:
        dt = self.net.layers[0].W.dtype
        return self.net(Tensor(one_hot(np.atleast_2d(states), dt)))


class PolicyModel(_StateMLP):
    """Linear layers with ReLU, ending in six action logits."""

    n_out = cube.N_ACTIONS

    def probs(self, states: np.ndarray) -> np.ndarray:
        with T.no_grad():
            return T.softmax(self(states), axis=-1).data.astype(np.float64)


class CriticModel(_StateMLP):
    n_out = 1

    def values(self, states: np.ndarray) -> np.ndarray:
        with T.no_grad():
            return self(states).data.reshape(-1).astype(np.float64)


def policy_forward(theta: PolicyModel, s) -> np.ndarray:
    """Action distribution for one state (length 6) or a batch ``(n, 6)``."""
    if isinstance(s, cube.CubeState):
        return theta.probs(s.array[None])[0]
    return theta.probs(np.asarray(s))


# ------------------------------------------------------------------- buffer
@dataclass
class RolloutBuffer:
    """Flat store of complete episodes, in episode order.

    ``done`` marks the last step of each episode.  ``bootstrap`` flags a
    last step that ended on the step cap rather than at the goal; those get
    the critic's value of the final state instead of zero.
    """

    states: list[np.ndarray] = field(default_factory=list)
    actions: list[np.ndarray] = field(default_factory=list)
    rewards: list[np.ndarray] = field(default_factory=list)
    log_probs: list[np.ndarray] = field(default_factory=list)
    dones: list[np.ndarray] = field(default_factory=list)
    bootstrap: list[np.ndarray] = field(default_factory=list)
    next_states: list[np.ndarray] = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return sum(len(a) for a in self.actions)

    def add_episode(self, states, actions, rewards, log_probs, next_states, solved: bool,
                    complete: bool = True) -> None:
        n = len(actions)
        if n == 0:
            raise ValueError("empty episode")
        dones = np.zeros(n, dtype=bool)
        dones[-1] = complete
        boot = np.zeros(n, dtype=bool)
        boot[-1] = complete and not solved
        self.states.append(np.asarray(states, dtype=np.uint8))
        self.actions.append(np.asarray(actions, dtype=np.int64))
        self.rewards.append(np.asarray(rewards, dtype=np.float64))
        self.log_probs.append(np.asarray(log_probs, dtype=np.float64))
        self.next_states.append(np.asarray(next_states, dtype=np.uint8))
        self.dones.append(dones)
        self.bootstrap.append(boot)
        self.advantages = self.returns = None

    def add_batch(self, batch: EpisodeBatch) -> None:
        """Append every episode of a lockstep batch, in environment order."""
        for i in range(batch.mask.shape[1]):
            n = int(batch.lengths[i])
            self.add_episode(batch.states[:n, i], batch.actions[:n, i], batch.rewards[:n, i],
                             batch.log_probs[:n, i], batch.next_states[:n, i], bool(batch.solved[:n, i].any()))

    def arrays(self) -> dict[str, np.ndarray]:
        names = ("states", "actions", "rewards", "log_probs", "dones", "bootstrap", "next_states")
        return {k: np.concatenate(getattr(self, k)) for k in names}

    def clear(self) -> None:
        for k in ("states", "actions", "rewards", "log_probs", "dones", "bootstrap", "next_states"):
            getattr(self, k).clear()
        self.advantages = self.returns = None


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, last_values: np.ndarray,
        gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates over a flat sequence of complete episodes.

    ``last_values[t]`` is the value used after step ``t`` when ``dones[t]``
    (zero at the goal).  Returns ``(advantages, returns)``.
    """
    n = len(rewards)
    if n == 0 or not dones[-1]:
        raise ValueError("incomplete episode at the end of the buffer")
    adv = np.zeros(n, dtype=np.float64)
    running = 0.0
    for t in range(n - 1, -1, -1):
        if dones[t]:
            next_v, running = last_values[t], 0.0
        else:
            next_v = values[t + 1]
        delta = rewards[t] + gamma * next_v - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv, adv + values


def gae_advantages(buf: RolloutBuffer, phi: CriticModel, gamma: float = 0.99,
                   lam: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    if not len(buf):
        raise ValueError("incomplete episode: buffer is empty")
    a = buf.arrays()
    values = phi.values(a["states"])
    last = np.zeros(len(values))
    if a["bootstrap"].any():
        last[a["bootstrap"]] = phi.values(a["next_states"][a["bootstrap"]])
    adv, ret = gae(a["rewards"], values, a["dones"], last, gamma, lam)
    buf.advantages, buf.returns = adv, ret
    return adv, ret


# --------------------------------------------------------------- objective
def clip_target(eps: float, A):
    """``(1 + eps) A`` for non-negative advantages, ``(1 - eps) A`` otherwise."""
    A = np.asarray(A, dtype=np.float64)
    return np.where(A >= 0, (1 + eps) * A, (1 - eps) * A)


def ppo_objective(ratio, A, eps: float):
    """``min(ratio * A, g(eps, A))``; elementwise on arrays."""
    ratio = np.asarray(ratio, dtype=np.float64)
    if (ratio <= 0).any():
        raise ValueError("probability ratio must be positive")
    out = np.minimum(ratio * np.asarray(A, dtype=np.float64), clip_target(eps, A))
    return float(out) if out.ndim == 0 else out


def surrogate(ratio: Tensor, A: np.ndarray, eps: float) -> Tensor:
    """Differentiable version of :func:`ppo_objective` (gradient flows through ``ratio``)."""
    A = np.asarray(A, dtype=ratio.dtype)
    return T.minimum(ratio * A, Tensor(clip_target(eps, A).astype(ratio.dtype)))


def _sample(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    u = rng.random(len(probs))
    a = (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1)
    return np.minimum(a, probs.shape[1] - 1)


# ---------------------------------------------------------------- rollouts
def collect_episodes(rng: np.random.Generator, theta: PolicyModel, m: CostModel, env_cfg: EnvConfig,
                     n_envs: int) -> EpisodeBatch:
    """Run ``n_envs`` episodes in lockstep until each reaches the goal or the cap.

    Starts are constrained scrambles of uniform depth; a start that happens to
    be the solved state is redrawn so every episode has at least one move.
    """
    lo, hi = env_cfg.depth_range
    if hi == 0:
        raise ValueError("depth range [0, 0] yields only solved starts")
    starts = np.empty((n_envs, cube.N_STICKERS), dtype=np.uint8)
    pending = np.arange(n_envs)
    while len(pending):
        depth = rng.integers(max(lo, 1), hi + 1, size=len(pending))
        for j, i in enumerate(pending):
            starts[i] = cube.random_scramble(rng, int(depth[j])).resulting_state.array
        pending = pending[(starts[pending] == cube.SOLVED).all(axis=1)]

    t_max = env_cfg.max_steps
    shape = (t_max, n_envs)
    states = np.zeros(shape + (cube.N_STICKERS,), dtype=np.uint8)
    next_states = np.zeros_like(states)
    actions = np.zeros(shape, dtype=np.int64)
    rewards = np.zeros(shape)
    log_probs = np.zeros(shape)
    solved = np.zeros(shape, dtype=bool)
    mask = np.zeros(shape, dtype=bool)

    cur = starts.copy()
    active = np.ones(n_envs, dtype=bool)
    for t in range(t_max):
        idx = np.nonzero(active)[0]
        if not len(idx):
            break
        probs = theta.probs(cur[idx])
        a = _sample(rng, probs)
        nxt = cube.step_batch(cur[idx], a)
        r, goal = batch_rewards(nxt, m, env_cfg)
        states[t, idx] = cur[idx]
        next_states[t, idx] = nxt
        actions[t, idx] = a
        rewards[t, idx] = r
        log_probs[t, idx] = np.log(probs[np.arange(len(idx)), a])
        solved[t, idx] = goal
        mask[t, idx] = True
        cur[idx] = nxt
        active[idx[goal]] = False
    return EpisodeBatch(states, actions, rewards, log_probs, next_states, solved, mask, starts)


# ------------------------------------------------------------------ update
@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    n_transitions: int


def ppo_update(theta: PolicyModel, phi: CriticModel, pi_opt: Adam, v_opt: Adam, buf: RolloutBuffer,
               cfg: ActorConfig, rng: np.random.Generator) -> UpdateStats:
    """Clipped-surrogate epochs for the policy and MSE epochs for the critic; clears the buffer."""
    adv, ret = gae_advantages(buf, phi, cfg.gamma, cfg.lam)
    a = buf.arrays()
    n = len(adv)
    adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)
    pls, vls, ents = [], [], []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for i in range(0, n, cfg.minibatch):
            idx = order[i:i + cfg.minibatch]
            s, act = a["states"][idx], a["actions"][idx]
            pi_opt.zero_grad()
            with Tape() as tape:
                logp = T.log_softmax(theta(s), axis=-1)
                dt = logp.dtype
                ratio = T.exp(T.pick(logp, act) - a["log_probs"][idx].astype(dt))
                surr = T.mean(surrogate(ratio, adv_n[idx], cfg.eps))
                entropy = -T.mean(T.sum_(T.exp(logp) * logp, axis=-1))
                loss = -surr - entropy * cfg.entropy_coef
            tape.backward(loss)
            pi_opt.step()

            v_opt.zero_grad()
            with Tape() as tape:
                v = phi(s).reshape(-1)
                vloss = T.mean(T.square(v - ret[idx].astype(v.dtype))) * cfg.value_coef
            tape.backward(vloss)
            v_opt.step()
            pls.append(float(surr.data))
            vls.append(float(vloss.data))
            ents.append(float(entropy.data))
    buf.clear()
    return UpdateStats(-float(np.mean(pls)), float(np.mean(vls)), float(np.mean(ents)), n)


# ---------------------------------------------------------------- training
@dataclass
class IterationRecord:
    iteration: int
    mean_reward: float
    success_rate: float
    episodes: int
    transitions: int
    updated: bool


@dataclass
class TrainResult:
    policy: PolicyModel
    critic: CriticModel
    cost_model: CostModel
    history: list[IterationRecord] = field(default_factory=list)


def make_actor(cfg: ActorConfig, seed: int, dtype=np.float32) -> tuple[PolicyModel, CriticModel]:
    pi_seed, v_seed = np.random.SeedSequence(seed).spawn(2)
    return (PolicyModel(cfg.hidden, np.random.default_rng(pi_seed), dtype),
            CriticModel(cfg.hidden, np.random.default_rng(v_seed), dtype))


def train(
    cost_model: CostModel,
    iterations: int,
    buffer_size: int | None = None,
    eps: float | None = None,
    cfg: ActorConfig | None = None,
    env_cfg: EnvConfig | None = None,
    seed: int = 0,
    callback: Callable[[IterationRecord, "TrainResult"], None] | None = None,
    init: tuple[PolicyModel, CriticModel] | None = None,
) -> TrainResult:
    cfg = cfg or ActorConfig()
    if buffer_size is not None:
        cfg.buffer_size = buffer_size
    if eps is not None:
        cfg = ActorConfig(**{**asdict(cfg), "eps": eps})
    env_cfg = env_cfg or EnvConfig()
    s_model, s_roll, s_update, s_tune = np.random.SeedSequence(seed).spawn(4)
    theta, phi = init if init is not None else make_actor(cfg, int(s_model.generate_state(1)[0]))
    roll_rng = np.random.default_rng(s_roll)
    upd_rng = np.random.default_rng(s_update)
    pi_opt = Adam(theta.parameters(), lr=cfg.lr)
    v_opt = Adam(phi.parameters(), lr=cfg.critic_lr)
    tuner = FineTuner(cost_model, cfg.finetune_lr, seed=int(s_tune.generate_state(1)[0])) if cfg.finetune else None

    buf = RolloutBuffer()
    recent: deque[bool] = deque(maxlen=cfg.success_window)
    result = TrainResult(theta, phi, cost_model)
    for j in range(iterations):
        scale = cfg.lr_scale(j, iterations)
        pi_opt.state.lr, v_opt.state.lr = cfg.lr * scale, cfg.critic_lr * scale
        batch = collect_episodes(roll_rng, theta, cost_model, env_cfg, cfg.n_envs)
        buf.add_batch(batch)
        recent.extend(batch.successes.tolist())
        updated = False
        if len(buf) > cfg.buffer_size:
            ppo_update(theta, phi, pi_opt, v_opt, buf, cfg, upd_rng)
            updated = True
        if tuner is not None:
            tuner(batch.pair_samples())
        rec = IterationRecord(
            iteration=j,
            mean_reward=float(batch.rewards[batch.mask].mean()),
            success_rate=float(np.mean(recent)),
            episodes=int(batch.mask.shape[1]),
            transitions=batch.n_transitions,
            updated=updated,
        )
        result.history.append(rec)
        if callback is not None:
            callback(rec, result)
    return result


# --------------------------------------------------------------- inference
def greedy_rollout(theta: PolicyModel, s0: cube.CubeState, cap: int = 30) -> tuple[bool, list[cube.Action]]:
    """Follow the most probable action (lowest index on ties) until solved or ``cap`` moves."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    s, moves = s0, []
    while not cube.is_solved(s) and len(moves) < cap:
        a = cube.Action(int(np.argmax(policy_forward(theta, s))))
        moves.append(a)
        s = cube.apply_action(s, a)
    return cube.is_solved(s), moves


def greedy_rollout_batch(theta: PolicyModel, starts: np.ndarray, cap: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`greedy_rollout`; returns ``(solved, n_moves)`` per start."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    cur = np.array(starts, dtype=np.uint8, copy=True)
    done = (cur == cube.SOLVED).all(axis=1)
    n_moves = np.zeros(len(cur), dtype=np.int64)
    for _ in range(cap):
        idx = np.nonzero(~done)[0]
        if not len(idx):
            break
        a = np.argmax(theta.probs(cur[idx]), axis=1)
        cur[idx] = cube.step_batch(cur[idx], a)
        n_moves[idx] += 1
        done[idx] = (cur[idx] == cube.SOLVED).all(axis=1)
    return done, n_moves


# -------------------------------------------------------------- checkpoint
def save_actor(path, theta: PolicyModel, phi: CriticModel, cfg: ActorConfig, extra: dict | None = None) -> None:
    params = {f"policy.{k}": v for k, v in theta.state_dict().items()}
    params.update({f"critic.{k}": v for k, v in phi.state_dict().items()})
    conf = {"kind": "actor", **asdict(cfg)}
    conf["hidden"] = list(cfg.hidden)
    save_checkpoint(path, params, conf, extra)


def load_actor(path) -> tuple[PolicyModel, CriticModel, ActorConfig]:
    header, params = load_checkpoint(path)
    conf = dict(header["config"])
    if conf.pop("kind", None) != "actor":
        raise ValueError(f"{path} is not an actor checkpoint")
    cfg = ActorConfig(**conf)
    dtype = np.dtype(header["precision"])
    theta, phi = make_actor(cfg, 0, dtype)
    theta.load_state_dict({k[7:]: v for k, v in params.items() if k.startswith("policy.")})
    phi.load_state_dict({k[7:]: v for k, v in params.items() if k.startswith("critic.")})
    return theta, phi, cfg
