"""Command-line entry point: ``cuberl <command> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import harness
from .actor import ActorConfig, load_actor, save_actor, train
from .chasenet import ChaseNetConfig, load_cost_model, warmup
from .harness import RunConfig, derive_seed, write_series
from .oracle import build_oracle, load_or_build

log = logging.getLogger("cuberl")

# acceptance thresholds applied by ``eval --strict``
STRICT_SUCCESS = 0.95
STRICT_SPEARMAN = {"fc": 0.80, "attention": 0.85}


def _config(args) -> RunConfig:
    path = getattr(args, "config", None)
    cfg = RunConfig.load(path) if path else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_oracle(args) -> int:
    cfg = _config(args)
    if args.action == "build":
        out = Path(args.out or cfg.oracle_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        table = build_oracle()
        table.save(out)
        print(f"wrote {out}")
    else:
        table = load_or_build(args.out or cfg.oracle_path)
    print(f"states   {int(table.histogram.sum())}")
    print(f"diameter {table.diameter}")
    for d, n in enumerate(table.histogram):
        print(f"  depth {d:2d}: {int(n)}")
    return 0


def cmd_warmup(args) -> int:
    cfg = _config(args)
    model_cfg = ChaseNetConfig(**{**cfg.chasenet.to_dict(), "variant": args.variant or cfg.chasenet.variant})
    w = cfg.warmup
    wcfg = dataclasses.replace(
        w,
        iterations=args.iters or w.iterations,
        dataset_size=args.dataset_size or w.dataset_size,
        max_twists=args.twists or w.max_twists,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    losses = []

    def progress(j, loss):
        losses.append((j, loss))
        if j % 50 == 0 or j == wcfg.iterations - 1:
            log.info("warmup %d/%d loss %.4f", j + 1, wcfg.iterations, loss)

    res = warmup(model_cfg, wcfg, derive_seed(cfg.seed, "warmup"), callback=progress)
    res.model.save(out, extra={"iterations": wcfg.iterations, "seed": cfg.seed})
    loss_csv = Path(args.loss_csv) if args.loss_csv else out.with_suffix(".loss.csv")
    write_series(loss_csv, ("iteration", "mean_loss"), losses)
    print(f"wrote {out} and {loss_csv}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    acfg = ActorConfig(**{**cfg.actor.__dict__, "eps": args.eps if args.eps is not None else cfg.actor.eps})
    if args.buffer:
        acfg.buffer_size = args.buffer
    iters = args.iters or cfg.train.iterations
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cost_model = load_cost_model(args.cost_ckpt)
    rows = []
    every = args.checkpoint_every if args.checkpoint_every is not None else cfg.train.checkpoint_every

    def progress(rec, res):
        rows.append((rec.iteration, rec.mean_reward, rec.success_rate))
        if rec.iteration % 10 == 0:
            log.info("iter %d reward %.3f success %.2f", rec.iteration, rec.mean_reward, rec.success_rate)
        if every and (rec.iteration + 1) % every == 0:
            save_actor(out_dir / f"actor-{rec.iteration + 1:06d}.ckpt", res.policy, res.critic, acfg)
            write_series(out_dir / "metrics.csv", ("iteration", "mean_reward", "success_rate"), rows)

    init = None
    if args.resume:
        theta, phi, _ = load_actor(args.resume)
        init = (theta, phi)
    res = train(cost_model, iters, cfg=acfg, env_cfg=cfg.env, seed=derive_seed(cfg.seed, "train"),
                callback=progress, init=init)
    write_series(out_dir / "metrics.csv", ("iteration", "mean_reward", "success_rate"), rows)
    save_actor(out_dir / "actor.ckpt", res.policy, res.critic, acfg)
    res.cost_model.save(out_dir / "chasenet-finetuned.ckpt")
    print(f"wrote {out_dir / 'actor.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    ok = True
    if args.what == "success":
        theta, _, _ = load_actor(args.actor_ckpt)
        n = args.n_tests or cfg.eval.n_tests
        out = Path(args.out_dir) / "eval_cases.csv" if args.out_dir else None
        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
        rep = harness.evaluate_success_rate(theta, n, cfg.eval.depth_range, cfg.eval.cap, cfg.seed, out)
        print(f"success rate {rep.rate:.4f} over {n} scrambles")
        for d, r in sorted(rep.per_depth.items()):
            print(f"  depth {d:2d}: {r:.3f}")
        ok = rep.rate >= STRICT_SUCCESS
    else:
        model = load_cost_model(args.cost_ckpt)
        oracle = load_or_build(cfg.oracle_path)
        rho = harness.evaluate_spearman(model, oracle, args.n_pairs or cfg.eval.spearman_pairs, cfg.seed,
                                        cfg.eval.spearman_twists)
        print(f"spearman {rho:.4f} ({model.variant})")
        ok = rho >= STRICT_SPEARMAN[model.variant]
    if args.strict and not ok:
        print("below acceptance threshold", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    run_dir = harness.run_pipeline(cfg, out_root=args.out_dir or "runs", run_dir=args.run_dir,
                                   eval_only=args.eval_only)
    print(f"run directory: {run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the flags go before or after the subcommand without the
    # subparser's default clobbering a value given at the top level
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="cuberl", description=__doc__, parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("oracle", parents=[common], help="build or inspect the exact distance table")
    o.add_argument("action", choices=["build", "stats"])
    o.add_argument("--out", help="table path (defaults to the config's oracle_path)")
    o.set_defaults(func=cmd_oracle)

    w = sub.add_parser("warmup", parents=[common], help="pretrain a cost model on scrambled trajectories")
    w.add_argument("--variant", choices=["fc", "attention"])
    w.add_argument("--iters", type=int)
    w.add_argument("--twists", type=int)
    w.add_argument("--dataset-size", type=int)
    w.add_argument("--out", required=True, help="checkpoint path")
    w.add_argument("--loss-csv", help="loss series path (default: next to the checkpoint)")
    w.set_defaults(func=cmd_warmup)

    t = sub.add_parser("train", parents=[common], help="PPO training with cost-model fine-tuning")
    t.add_argument("--cost-ckpt", required=True)
    t.add_argument("--iters", type=int)
    t.add_argument("--buffer", type=int)
    t.add_argument("--eps", type=float)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--resume", help="actor checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="success-rate or Spearman benchmark")
    e.add_argument("what", choices=["success", "spearman"])
    e.add_argument("--actor-ckpt")
    e.add_argument("--cost-ckpt")
    e.add_argument("--n-tests", type=int)
    e.add_argument("--n-pairs", type=int)
    e.add_argument("--out-dir")
    e.add_argument("--strict", action="store_true", help="exit 1 when below the acceptance threshold")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", parents=[common], help="full pipeline into a timestamped run directory")
    r.add_argument("--out-dir", help="parent of the run directory (default runs/)")
    r.add_argument("--run-dir", help="explicit run directory")
    r.add_argument("--eval-only", action="store_true")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    if args.command == "eval":
        need = "actor_ckpt" if args.what == "success" else "cost_ckpt"
        if getattr(args, need) is None:
            print(f"eval {args.what} needs --{need.replace('_', '-')}", file=sys.stderr)
            return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
