"""Run configuration, metrics logging, evaluation and the end-to-end pipeline."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import subprocess
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__, cube
from .actor import ActorConfig, greedy_rollout_batch, load_actor, save_actor, train
from .chasenet import (ChaseNetConfig, CostModel, WarmupConfig, held_out_pairs, load_cost_model,
                       warmup)
from .env import EnvConfig
from .oracle import OracleTable, load_or_build, spearman

log = logging.getLogger(__name__)

FLOAT_FMT = "{:.6f}"


# ------------------------------------------------------------------ config
@dataclass
class EvalConfig:
    n_tests: int = 1000
    cap: int = 30
    depth_range: tuple[int, int] = (1, 30)
    spearman_pairs: int = 10_000
    spearman_twists: int = 20

    def __post_init__(self):
        self.depth_range = tuple(int(x) for x in self.depth_range)


@dataclass
class TrainConfig:
    iterations: int = 1500
    checkpoint_every: int = 100


@dataclass
class RunConfig:
    seed: int = 0
    oracle_path: str = "artifacts/oracle.bin"
    chasenet: ChaseNetConfig = field(default_factory=ChaseNetConfig)
    warmup: WarmupConfig = field(default_factory=WarmupConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    actor: ActorConfig = field(default_factory=ActorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    _SECTIONS = {
        "chasenet": ChaseNetConfig, "warmup": WarmupConfig, "env": EnvConfig,
        "actor": ActorConfig, "train": TrainConfig, "eval": EvalConfig,
    }

    def __post_init__(self):
        parent = Path(self.oracle_path).expanduser().resolve().parent
        if not parent.is_dir() and not parent.parent.is_dir():
            raise ValueError(f"oracle path {self.oracle_path} is not resolvable")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for key, val in d.items():
            sec = cls._SECTIONS.get(key)
            if sec is None:
                kw[key] = val
                continue
            bad = set(val or {}) - {f.name for f in fields(sec)}
            if bad:
                raise ValueError(f"unknown keys in [{key}]: {sorted(bad)}")
            kw[key] = sec(**(val or {}))
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_dict(self) -> dict:
        def plain(x):
            if isinstance(x, tuple):
                return [plain(v) for v in x]
            if isinstance(x, dict):
                return {k: plain(v) for k, v in x.items()}
            return x
        return plain(asdict(self))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


def derive_seed(master: int, *names: str) -> int:
    """Deterministic per-phase seed; different name paths give unrelated streams."""
    key = [int.from_bytes(hashlib.sha256(n.encode()).digest()[:4], "little") for n in names]
    return int(np.random.SeedSequence(master, spawn_key=tuple(key)).generate_state(1)[0])


def code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0:
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ----------------------------------------------------------------- metrics
class MetricsLog:
    """Append-only CSV of ``(phase, iteration, name, value, unix_ms)`` rows.

    Rows must arrive ordered by phase (in first-seen order) and, within a
    phase, by non-decreasing iteration.
    """

    HEADER = ("phase", "iteration", "name", "value", "unix_ms")

    def __init__(self, path, clock=time.time):
        self.path = Path(path)
        self.clock = clock
        self._phases: list[str] = []
        self._last: tuple[str, int] | None = None
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh).writerow(self.HEADER)

    def log(self, phase: str, iteration: int, name: str, value: float) -> None:
        if self._last is not None:
            last_phase, last_it = self._last
            if phase == last_phase and iteration < last_it:
                raise ValueError(f"iteration went backwards in phase {phase!r}")
            if phase != last_phase and phase in self._phases:
                raise ValueError(f"phase {phase!r} resumed after another phase")
        if phase not in self._phases:
            self._phases.append(phase)
        self._last = (phase, iteration)
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([phase, iteration, name, FLOAT_FMT.format(value), int(self.clock() * 1000)])

    def rows(self) -> list[dict]:
        with open(self.path, newline="") as fh:
            return list(csv.DictReader(fh))


def write_series(path, header: tuple[str, ...], rows) -> None:
    """Plain CSV with floats at fixed precision (no timestamps, so reruns match byte for byte)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([FLOAT_FMT.format(v) if isinstance(v, float) else v for v in row])


# -------------------------------------------------------------- evaluation
@dataclass
class SuccessReport:
    rate: float
    n_tests: int
    per_depth: dict[int, float]
    depths: np.ndarray
    solved: np.ndarray
    n_moves: np.ndarray

    def save_cases(self, path) -> None:
        write_series(path, ("case", "depth", "solved", "moves"),
                     zip(range(self.n_tests), self.depths.tolist(), self.solved.astype(int).tolist(),
                         self.n_moves.tolist()))


def eval_scrambles(n_tests: int, depth_range: tuple[int, int], seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Case ``i`` draws its depth and moves from its own child stream of ``seed``."""
    lo, hi = depth_range
    starts = np.empty((n_tests, cube.N_STICKERS), dtype=np.uint8)
    depths = np.empty(n_tests, dtype=np.int64)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n_tests)):
        rng = np.random.default_rng(child)
        depths[i] = rng.integers(lo, hi + 1)
        starts[i] = cube.random_scramble(rng, int(depths[i])).resulting_state.array
    return starts, depths


def evaluate_success_rate(theta, n_tests: int, depth_range=(1, 30), cap: int = 30, seed: int = 0,
                          out_path=None) -> SuccessReport:
    starts, depths = eval_scrambles(n_tests, tuple(depth_range), derive_seed(seed, "eval", "success"))
    solved, n_moves = greedy_rollout_batch(theta, starts, cap)
    per_depth = {int(d): float(solved[depths == d].mean()) for d in np.unique(depths)}
    report = SuccessReport(float(solved.mean()), n_tests, per_depth, depths, solved, n_moves)
    if out_path is not None:
        report.save_cases(out_path)
    return report


def evaluate_spearman(m, oracle: OracleTable, n_pairs: int = 10_000, seed: int = 0, twists: int = 20) -> float:
    """Rank correlation between predicted and exact pair costs on held-out pairs.

    ``m`` is a :class:`CostModel` or any callable ``(starts, targets) -> costs``.
    """
    rng = np.random.default_rng(derive_seed(seed, "eval", "spearman"))
    pairs = held_out_pairs(rng, n_pairs, twists)
    predict = m.predict if isinstance(m, CostModel) else m
    pred = np.asarray(predict(pairs.start, pairs.target), dtype=np.float64)
    return spearman(pred, oracle.pair_costs(pairs.start, pairs.target))


# ---------------------------------------------------------------- pipeline
class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def run_pipeline(cfg: RunConfig, out_root="runs", run_dir=None, eval_only: bool = False) -> Path:
    """oracle -> warmup -> train -> eval, everything persisted under one run directory.

    With ``eval_only`` an existing ``run_dir`` holding ``chasenet.ckpt`` and
    ``actor.ckpt`` is evaluated without retraining.
    """
    if run_dir is None:
        run_dir = Path(out_root) / time.strftime("run-%Y%m%d-%H%M%S")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.dump(run_dir / "config.yaml")
    (run_dir / "meta.json").write_text(json.dumps({"seed": cfg.seed, "version": code_version()}, indent=2))
    metrics = MetricsLog(run_dir / "metrics_log.csv")
    cost_path, actor_path = run_dir / "chasenet.ckpt", run_dir / "actor.ckpt"

    stage = "oracle"
    try:
        oracle = load_or_build(cfg.oracle_path)
        log.info("oracle: %d states, diameter %d", int(oracle.histogram.sum()), oracle.diameter)
        for d, n in enumerate(oracle.histogram):
            metrics.log("oracle", d, "states_at_depth", float(n))

        if eval_only:
            stage = "eval"
            if not (cost_path.exists() and actor_path.exists()):
                raise FileNotFoundError(f"eval-only needs {cost_path.name} and {actor_path.name} in {run_dir}")
            cost_model = load_cost_model(cost_path)
            theta, _, _ = load_actor(actor_path)
        else:
            stage = "warmup"
            losses: list[tuple[int, float]] = []

            def on_warmup(j, loss):
                losses.append((j, loss))
                metrics.log("warmup", j, "loss", loss)

            wres = warmup(cfg.chasenet, cfg.warmup, derive_seed(cfg.seed, "warmup"), callback=on_warmup)
            write_series(run_dir / "warmup_loss.csv", ("iteration", "mean_loss"), losses)
            cost_model = wres.model
            cost_model.save(cost_path)
            rho = evaluate_spearman(cost_model, oracle, cfg.eval.spearman_pairs, cfg.seed, cfg.eval.spearman_twists)
            metrics.log("warmup", cfg.warmup.iterations, "spearman", rho)

            stage = "train"
            rows = []

            def on_iter(rec, res):
                rows.append((rec.iteration, rec.mean_reward, rec.success_rate))
                metrics.log("train", rec.iteration, "mean_reward", rec.mean_reward)
                metrics.log("train", rec.iteration, "success_rate", rec.success_rate)
                every = cfg.train.checkpoint_every
                if every and (rec.iteration + 1) % every == 0:
                    save_actor(run_dir / f"actor-{rec.iteration + 1:06d}.ckpt", res.policy, res.critic, cfg.actor)

            tres = train(cost_model, cfg.train.iterations, cfg=cfg.actor, env_cfg=cfg.env,
                         seed=derive_seed(cfg.seed, "train"), callback=on_iter)
            write_series(run_dir / "metrics.csv", ("iteration", "mean_reward", "success_rate"), rows)
            theta = tres.policy
            save_actor(actor_path, tres.policy, tres.critic, cfg.actor)
            cost_model.save(run_dir / "chasenet-finetuned.ckpt")

        stage = "eval"
        rep = evaluate_success_rate(theta, cfg.eval.n_tests, cfg.eval.depth_range, cfg.eval.cap, cfg.seed,
                                    out_path=run_dir / "eval_cases.csv")
        metrics.log("eval", 0, "success_rate", rep.rate)
        write_series(run_dir / "eval_by_depth.csv", ("depth", "success_rate"), sorted(rep.per_depth.items()))
        rho = evaluate_spearman(cost_model, oracle, cfg.eval.spearman_pairs, cfg.seed, cfg.eval.spearman_twists)
        metrics.log("eval", 0, "spearman", rho)
    except Exception as exc:
        (run_dir / "FAILED").write_text(f"{stage}: {exc}\n")
        raise StageError(stage, exc) from exc
    return run_dir
