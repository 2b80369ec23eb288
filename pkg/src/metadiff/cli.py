"""Command-line entry points: train, eval, trace, inspect-schedule.

Exit codes: 0 success, 1 usage/config error, 2 runtime numeric abort.
Outputs land in --out when given, else in a timestamped directory under
$METADIFF_RUNS (default ./runs). Results CSVs are append-only with the
header written once, so repeated eval runs against one directory build up
a comparison table.
"""

import argparse
import os
import sys
import time
from pathlib import Path

from . import checkpoint as ckpt_mod
from . import meta
from .config import RunConfig, apply_overrides, dump, load_config
from .errors import CheckpointError, ConfigError, EvalError, NonFiniteError
from .evaluation import (
    convergence_report,
    evaluate,
    gda_adaptor,
    metadiff_adaptor,
    momentum_gda_adaptor,
)
from .schedule import build_schedule
from .world import make_world


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_dir(args, command: str) -> Path:
    if args.out:
        path = Path(args.out)
    else:
        root = Path(os.environ.get("METADIFF_RUNS", "runs"))
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = root / f"{command}-{stamp}"
        n = 1
        while path.exists():
            path = root / f"{command}-{stamp}-{n}"
            n += 1
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config)
    return apply_overrides(cfg, args.overrides)


def _world(cfg: RunConfig):
    return make_world(
        cfg.world_classes, cfg.world_dim, cfg.world_noise, cfg.world_base_fraction, cfg.seed
    )


def _check_ckpt_compat(cfg: RunConfig, ckpt_cfg: RunConfig) -> None:
    """The checkpointed model must have been trained in the same world,
    schedule and architecture; protocol keys may differ."""
    keys = (
        "world_classes",
        "world_dim",
        "world_noise",
        "world_base_fraction",
        "schedule_steps",
        "schedule_beta_start",
        "schedule_beta_end",
        "classifier",
        "temperature",
        "unet_skips",
        "unet_grad_normalize",
    )
    for key in keys:
        have, want = getattr(ckpt_cfg, key), getattr(cfg, key)
        if have != want:
            raise ConfigError(
                f"checkpoint has {key} = {have}, config asks for {want}"
            )


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    resume = ckpt_mod.load(args.resume) if args.resume else None
    world = _world(cfg)
    out = _out_dir(args, "train")
    (out / "config.cfg").write_text(dump(cfg), encoding="utf-8")
    records_path = out / "train_records.csv"
    with open(records_path, "w", encoding="utf-8") as records:
        records.write("step,t,mse_loss,grad_norm\n")

        def record_sink(rec):
            records.write(
                f"{rec.step},{rec.t_sampled},{_fmt(rec.mse_loss)},{_fmt(rec.grad_norm)}\n"
            )

        def checkpoint_sink(ck):
            ckpt_mod.save(ck, out / f"checkpoint-{ck.step:07d}.ckpt")

        final = meta.train(
            cfg, world, resume=resume, record_sink=record_sink, checkpoint_sink=checkpoint_sink
        )
    final_path = out / "checkpoint-final.ckpt"
    ckpt_mod.save(final, final_path)
    print(f"trained to step {final.step}; outputs in {out}")
    return 0


def _build_adaptor(cfg: RunConfig, name: str, args):
    if name == "metadiff":
        if not args.checkpoint:
            raise ConfigError("the metadiff adaptor needs --checkpoint")
        ck = ckpt_mod.load(args.checkpoint)
        _check_ckpt_compat(cfg, ck.config)
        sched = build_schedule(
            cfg.schedule_steps, cfg.schedule_beta_start, cfg.schedule_beta_end
        )
        return metadiff_adaptor(
            ck.params, sched, cfg.classifier, cfg.temperature, draws=cfg.eval_weight_draws
        )
    if name == "gda":
        return gda_adaptor(cfg.classifier, cfg.gda_steps, cfg.gda_lr, cfg.gda_init, cfg.temperature)
    if name == "momentum-gda":
        return momentum_gda_adaptor(
            cfg.classifier, cfg.gda_steps, cfg.gda_lr, cfg.gda_momentum, cfg.gda_init, cfg.temperature
        )
    raise ConfigError(f"unknown adaptor {name!r}")


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    name = args.adaptor or cfg.adaptor
    adaptor = _build_adaptor(cfg, name, args)
    world = _world(cfg)
    report = evaluate(
        adaptor,
        world,
        cfg.eval_tasks,
        cfg.way,
        cfg.shot,
        cfg.queries_per_class,
        cfg.seed,
        workers=cfg.eval_workers,
    )
    out = _out_dir(args, "eval")
    results = out / "results.csv"
    if not results.exists():
        results.write_text("adaptor,N,K,num_tasks,mean_acc,ci95\n", encoding="utf-8")
    with open(results, "a", encoding="utf-8") as fh:
        fh.write(
            f"{name},{cfg.way},{cfg.shot},{report.num_tasks},"
            f"{_fmt(report.mean_acc)},{_fmt(report.ci95_half_width)}\n"
        )
    note = f", {report.excluded} excluded" if report.excluded else ""
    print(
        f"{name} {cfg.way}-way {cfg.shot}-shot: "
        f"{report.mean_acc:.4f} ± {report.ci95_half_width:.4f} "
        f"({report.num_tasks} tasks{note})"
    )
    return 0


def cmd_trace(args) -> int:
    cfg = _load_cfg(args)
    ck = ckpt_mod.load(args.checkpoint)
    _check_ckpt_compat(cfg, ck.config)
    world = _world(cfg)
    sched = build_schedule(cfg.schedule_steps, cfg.schedule_beta_start, cfg.schedule_beta_end)
    report = convergence_report(
        ck.params,
        world,
        args.num_tasks,
        sched,
        cfg.seed,
        cfg.way,
        cfg.shot,
        cfg.queries_per_class,
        kind=cfg.classifier,
        temperature=cfg.temperature,
    )
    out = _out_dir(args, "trace")
    path = out / "trace.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,acc,loss\n")
        for i in range(report.steps_completed.size):
            fh.write(
                f"{report.steps_completed[i]},{_fmt(report.acc[i])},{_fmt(report.loss[i])}\n"
            )
    print(f"wrote {path} ({report.num_tasks} tasks, {report.steps_completed.size} rows)")
    return 0


def cmd_inspect_schedule(args) -> int:
    try:
        sched = build_schedule(args.steps, args.beta_start, args.beta_end)
    except ValueError as exc:
        raise ConfigError(str(exc))
    lines = ["t,beta,alpha_bar,gamma,eta,xi"]
    for i in range(sched.T):
        lines.append(
            f"{i + 1},{_fmt(sched.beta[i])},{_fmt(sched.alpha_bar[i])},"
            f"{_fmt(sched.gamma[i])},{_fmt(sched.eta[i])},{_fmt(sched.xi[i])}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metadiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="run config file (key = value lines)")
        p.add_argument("--out", help="output directory (default: timestamped under $METADIFF_RUNS)")
        p.add_argument(
            "--set",
            action="append",
            dest="overrides",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key",
        )

    p_train = sub.add_parser("train", help="meta-train the noise predictor")
    add_common(p_train)
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="episodic evaluation of an adaptor")
    add_common(p_eval)
    p_eval.add_argument("--checkpoint", help="trained checkpoint (metadiff adaptor)")
    p_eval.add_argument(
        "--adaptor",
        choices=("metadiff", "gda", "momentum-gda"),
        help="override the config's adaptor",
    )
    p_eval.set_defaults(func=cmd_eval)

    p_trace = sub.add_parser("trace", help="denoising convergence trace")
    add_common(p_trace)
    p_trace.add_argument("--checkpoint", required=True)
    p_trace.add_argument("--num-tasks", type=int, default=100)
    p_trace.set_defaults(func=cmd_trace)

    p_sched = sub.add_parser("inspect-schedule", help="dump schedule coefficients as CSV")
    p_sched.add_argument("--steps", type=int, default=1000)
    p_sched.add_argument("--beta-start", type=float, default=1e-4)
    p_sched.add_argument("--beta-end", type=float, default=0.02)
    p_sched.add_argument("--out", help="write CSV here instead of stdout")
    p_sched.set_defaults(func=cmd_inspect_schedule)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NonFiniteError, EvalError) as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
