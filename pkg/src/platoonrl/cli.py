"""Command-line entry points: train, eval, trace.

Every command writes a resolved-config snapshot next to its outputs so any
run can be reproduced exactly from the snapshot alone.  Output directory:
``--out`` flag, else the PLATOONRL_OUT_DIR environment variable, else
``./runs``.

Exit codes: 0 success, 2 configuration error, 3 checkpoint mismatch,
4 invalid input, 5 contract violation, 1 unexpected failure.
"""

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config, save_resolved
from .errors import CheckpointError, ConfigError, ContractError, ValidationError
from .evaluation import emit_trajectory, evaluate, write_eval_csv
from .trainer import PlatoonTrainer, write_training_log


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("PLATOONRL_OUT_DIR") or "runs"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_train(args) -> None:
    cfg = load_config(args.config)
    out = _out_dir(args)
    save_resolved(cfg, out / "train_resolved_config.yaml")
    for seed in cfg.training.seeds:
        trainer = PlatoonTrainer(cfg.scenario, cfg.training, int(seed),
                                 dyn=cfg.dynamics, weights=cfg.reward)
        result = trainer.train()
        trainer.save(out / f"checkpoint_seed{seed}.npz")
        write_training_log(result, out / f"training_log_seed{seed}.csv")
        returns = [float(ep.returns.mean()) for ep in result.episodes]
        last = returns[-1] if returns else float("nan")
        print(f"seed {seed}: {result.total_steps} steps, "
              f"{len(result.episodes)} episodes, last mean return {last:.3f}")


def cmd_eval(args) -> None:
    cfg = load_config(args.config)
    if args.trials is not None:
        cfg.eval = replace(cfg.eval, trials=args.trials)
    if args.seed is not None:
        cfg.eval = replace(cfg.eval, seed=args.seed)
    out = _out_dir(args)
    save_resolved(cfg, out / "eval_resolved_config.yaml")
    report = evaluate(args.checkpoint, cfg.scenario, cfg.eval.trials, cfg.eval.seed,
                      dyn=cfg.dynamics, weights=cfg.reward)
    write_eval_csv(report, out / "eval_report.csv", out / "eval_trials.csv")
    print(f"trials:          {report.trials}")
    print(f"avg headway:     {report.avg_headway:.3f} m")
    print(f"avg velocity:    {report.avg_velocity:.3f} m/s")
    print(f"collision count: {report.collision_count}")
    print(f"avg return:      {report.avg_return:.3f}")


def cmd_trace(args) -> None:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.eval = replace(cfg.eval, seed=args.seed)
    out = _out_dir(args)
    save_resolved(cfg, out / "trace_resolved_config.yaml")
    path = out / f"trace_seed{cfg.eval.seed}.csv"
    rec = emit_trajectory(args.checkpoint, cfg.scenario, cfg.eval.seed, path,
                          dyn=cfg.dynamics, weights=cfg.reward)
    print(f"wrote {path} ({rec.steps} steps, collision={rec.collision})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platoonrl",
                                     description="Delay-aware platoon control: "
                                                 "training and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one checkpoint per configured seed")
    p_train.add_argument("config", help="YAML configuration file")
    p_train.add_argument("--out", default=None, help="output directory")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over seeded trials")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("config")
    p_eval.add_argument("--trials", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(fn=cmd_eval)

    p_trace = sub.add_parser("trace", help="write a single-episode trajectory CSV")
    p_trace.add_argument("checkpoint")
    p_trace.add_argument("config")
    p_trace.add_argument("--seed", type=int, default=None)
    p_trace.add_argument("--out", default=None)
    p_trace.set_defaults(fn=cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 4
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 5
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
