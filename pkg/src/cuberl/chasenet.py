"""Learned pair-cost estimator ("ChaseNet") and its warmup / fine-tuning.

Two variants share one interface:

* ``fc``: each state's one-hot stickers go through its own linear head, the
  two feature vectors are concatenated and passed through a ReLU trunk.
  The heads are purely linear so that the first trunk layer mixes start and
  target features before any nonlinearity.
* ``attention``: the 48 stickers of both states become tokens (colour plus
  start/target segment) with a learned embedding per slot, run through a
  small transformer encoder, mean-pooled and projected to a scalar.  Each
  token also adds an embedding of the colour found at the same sticker
  position in the other state.  Without that counterpart term the encoder
  sits on the constant-prediction plateau for hundreds of iterations; with
  it, the start/target comparison is available from the first layer.

Both end in ``softplus(z) + 0.01`` so predictions are always positive.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import cube
from .nn import tensor as T
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import Embedding, EncoderLayer, LayerNorm, Linear, MLP, Module
from .nn.optim import Adam
from .nn.tensor import Tape, Tensor

log = logging.getLogger(__name__)

COST_FLOOR = 1e-2
N_TOKENS = 2 * cube.N_COLORS  # colour x {start, target}
N_SLOTS = 2 * cube.N_STICKERS  # 48


@dataclass
class ChaseNetConfig:
    variant: str = "fc"
    # fc
    head_width: int = 256
    trunk: tuple[int, ...] = (512, 256, 128)
    # attention
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128

    def __post_init__(self):
        if self.variant not in ("fc", "attention"):
            raise ValueError(f"unknown ChaseNet variant {self.variant!r}")
        self.trunk = tuple(self.trunk)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trunk"] = list(self.trunk)
        return d


@dataclass
class WarmupConfig:
    iterations: int = 1000  # J
    dataset_size: int = 4096  # B
    max_twists: int = 20  # K
    batch_size: int = 256
    passes: int = 1
    lr: float = 1e-3
    lr_final: float | None = None  # cosine decay from lr to this value over J; None keeps lr constant
    finetune_lr: float = 1e-4

    def lr_at(self, j: int) -> float:
        if self.lr_final is None or self.iterations == 1:
            return self.lr
        frac = j / (self.iterations - 1)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (1 + math.cos(math.pi * frac))


@dataclass
class PairSample:
    start: np.ndarray  # (n, 24)
    target: np.ndarray  # (n, 24)
    cost: np.ndarray  # (n,) twists applied

    def __len__(self) -> int:
        return len(self.cost)

    @classmethod
    def empty(cls) -> "PairSample":
        return cls(np.empty((0, 24), np.uint8), np.empty((0, 24), np.uint8), np.empty(0, np.int64))

    @classmethod
    def concat(cls, parts: list["PairSample"]) -> "PairSample":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.start for p in parts]),
            np.concatenate([p.target for p in parts]),
            np.concatenate([p.cost for p in parts]),
        )


# ---------------------------------------------------------------- encodings
_EYE = np.eye(cube.N_COLORS, dtype=np.float32)


def one_hot(states: np.ndarray, dtype=np.float32) -> np.ndarray:
    """``(n, 24)`` colours to ``(n, 144)`` one-hot rows."""
    return _EYE.astype(dtype, copy=False)[states].reshape(len(states), -1)


def pair_tokens(starts: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """``(n, 48)`` token ids: start colours 0..5, target colours 6..11."""
    return np.concatenate([starts, targets + cube.N_COLORS], axis=1).astype(np.int64)


def partner_tokens(starts: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """For every slot, the token id of the same sticker position in the other state."""
    return np.concatenate([targets + cube.N_COLORS, starts], axis=1).astype(np.int64)


def encode_pair(s_s: cube.CubeState, s_t: cube.CubeState, variant: str = "fc") -> np.ndarray:
    a, b = s_s.array[None], s_t.array[None]
    if variant == "fc":
        return np.concatenate([one_hot(a), one_hot(b)], axis=1)[0]
    return pair_tokens(a, b)[0]


# ------------------------------------------------------------------- models
class CostModel(Module):
    config: ChaseNetConfig

    def raw(self, starts: np.ndarray, targets: np.ndarray) -> Tensor:
        raise NotImplementedError

    def forward(self, starts: np.ndarray, targets: np.ndarray) -> Tensor:
        """Positive cost estimates, one per pair (differentiable)."""
        return T.softplus(self.raw(starts, targets)) + COST_FLOOR

    __call__ = forward

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def dtype(self):
        return next(iter(self.parameters().values())).dtype

    def predict(self, starts: np.ndarray, targets: np.ndarray, batch: int = 4096) -> np.ndarray:
        starts = np.atleast_2d(starts)
        targets = np.broadcast_to(np.atleast_2d(targets), starts.shape)
        out = np.empty(len(starts), dtype=np.float64)
        with T.no_grad():
            for i in range(0, len(starts), batch):
                out[i:i + batch] = self.forward(starts[i:i + batch], targets[i:i + batch]).data
        return out

    def save(self, path, extra: dict | None = None) -> None:
        save_checkpoint(path, self.state_dict(), {"kind": "chasenet", **self.config.to_dict()}, extra)


class FCCostNet(CostModel):
    def __init__(self, config: ChaseNetConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        w = config.head_width
        n_in = cube.N_STICKERS * cube.N_COLORS
        # linear heads: the nonlinearity only starts after the trunk mixes them
        self.head_start = Linear(n_in, w, rng, dtype, gain=1.0)
        self.head_target = Linear(n_in, w, rng, dtype, gain=1.0)
        self.trunk = MLP([2 * w, *config.trunk, 1], rng, dtype)

    def raw(self, starts, targets) -> Tensor:
        dt = self.head_start.W.dtype
        a = self.head_start(Tensor(one_hot(starts, dt)))
        b = self.head_target(Tensor(one_hot(targets, dt)))
        return self.trunk(T.concat([a, b], axis=1)).reshape(-1)


class AttentionCostNet(CostModel):
    def __init__(self, config: ChaseNetConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        d = config.d_model
        self.token = Embedding(N_TOKENS, d, rng, dtype)
        self.partner = Embedding(N_TOKENS, d, rng, dtype)
        self.position = Embedding(N_SLOTS, d, rng, dtype)
        self.encoder = [EncoderLayer(d, config.n_heads, config.d_ff, rng, dtype) for _ in range(config.n_layers)]
        self.head = Linear(d, 1, rng, dtype, gain=1.0)

    def raw(self, starts, targets) -> Tensor:
        x = (self.token(pair_tokens(starts, targets)) + self.partner(partner_tokens(starts, targets))
             + self.position(np.arange(N_SLOTS)))
        for layer in self.encoder:
            x = layer(x)
        return self.head(x.mean(axis=1)).reshape(-1)


def make_cost_model(config: ChaseNetConfig, seed: int = 0, dtype=np.float32) -> CostModel:
    rng = np.random.default_rng(seed)
    cls = FCCostNet if config.variant == "fc" else AttentionCostNet
    return cls(config, rng, dtype)


def load_cost_model(path) -> CostModel:
    header, params = load_checkpoint(path)
    cfg = dict(header["config"])
    if cfg.pop("kind", None) != "chasenet":
        raise ValueError(f"{path} is not a ChaseNet checkpoint")
    model = make_cost_model(ChaseNetConfig(**cfg), dtype=np.dtype(header["precision"]))
    model.load_state_dict(params)
    return model


def predict_cost(m: CostModel, s_s: cube.CubeState, s_t: cube.CubeState) -> float:
    return float(m.predict(s_s.array[None], s_t.array[None])[0])


# --------------------------------------------------------------------- loss
def regression_loss(pred, y) -> Tensor:
    """Mean squared error; accepts tensors or plain sequences."""
    pred = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, dtype=np.float64))
    y = np.asarray(y, dtype=pred.dtype)
    if pred.shape != y.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {y.shape}")
    return T.mean(T.square(pred - y))


# -------------------------------------------------------------------- data
def trajectory_pairs(rng: np.random.Generator, n_traj: int, k: int) -> PairSample:
    """``n_traj`` random starts, each walked ``k`` constrained twists.

    Every prefix gives a pair ``(start, state after i twists)`` labelled ``i``.
    """
    starts = cube.random_states(rng, n_traj)
    walks, _ = cube.random_walks(rng, starts, k)
    return PairSample(
        np.repeat(starts, k, axis=0),
        walks.reshape(-1, cube.N_STICKERS),
        np.tile(np.arange(1, k + 1), n_traj),
    )


def warmup_dataset(rng: np.random.Generator, size: int, k: int) -> PairSample:
    """Whole trajectories until at least ``size`` pairs are collected."""
    return trajectory_pairs(rng, math.ceil(size / k), k)


def held_out_pairs(rng: np.random.Generator, n: int, k: int) -> PairSample:
    """One pair per trajectory, at a uniformly drawn twist count in ``1..k``."""
    starts = cube.random_states(rng, n)
    walks, _ = cube.random_walks(rng, starts, k)
    depth = rng.integers(1, k + 1, size=n)
    return PairSample(starts, walks[np.arange(n), depth - 1], depth)


# ---------------------------------------------------------------- training
def train_pass(model: CostModel, opt: Adam, data: PairSample, rng: np.random.Generator,
               batch_size: int) -> float:
    """One shuffled pass of minibatch MSE steps; returns the mean batch loss."""
    if not len(data):
        return float("nan")
    order = rng.permutation(len(data))
    losses = []
    for i in range(0, len(order), batch_size):
        idx = order[i:i + batch_size]
        opt.zero_grad()
        with Tape() as tape:
            loss = regression_loss(model(data.start[idx], data.target[idx]), data.cost[idx])
        tape.backward(loss)
        opt.step()
        losses.append(float(loss.data))
    return float(np.mean(losses))


@dataclass
class WarmupResult:
    model: CostModel
    losses: list[float] = field(default_factory=list)


def warmup(
    model_config: ChaseNetConfig,
    cfg: WarmupConfig,
    seed: int,
    dtype=np.float32,
    callback: Callable[[int, float], None] | None = None,
) -> WarmupResult:
    """Fresh dataset of scrambled trajectories each iteration, then train on it."""
    for name in ("iterations", "dataset_size", "max_twists"):
        if getattr(cfg, name) < 1:
            raise ValueError(f"{name} must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(2)
    model = make_cost_model(model_config, seed=int(seeds[0].generate_state(1)[0]), dtype=dtype)
    rng = np.random.default_rng(seeds[1])
    opt = Adam(model.parameters(), lr=cfg.lr)
    result = WarmupResult(model)
    for j in range(cfg.iterations):
        opt.state.lr = cfg.lr_at(j)
        data = warmup_dataset(rng, cfg.dataset_size, cfg.max_twists)
        loss = float(np.mean([train_pass(model, opt, data, rng, cfg.batch_size) for _ in range(cfg.passes)]))
        result.losses.append(loss)
        if callback is not None:
            callback(j, loss)
    return result


class FineTuner:
    """Reduced-rate training on policy-generated pairs, with its own Adam state."""

    def __init__(self, model: CostModel, lr: float = 1e-4, batch_size: int = 256, seed: int = 0):
        self.model = model
        self.opt = Adam(model.parameters(), lr=lr)
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)

    def __call__(self, data: PairSample) -> float:
        if not len(data):
            return float("nan")
        return train_pass(self.model, self.opt, data, self.rng, self.batch_size)


def finetune(m: CostModel, data: PairSample, lr: float = 1e-4, batch_size: int = 256, seed: int = 0) -> CostModel:
    FineTuner(m, lr, batch_size, seed)(data)
    return m
