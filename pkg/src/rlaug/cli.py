"""Command-line entry point.

Exit status: 0 on success, 1 when a contract is violated (bad inputs to an
operation, a phase run out of order on inconsistent artifacts), 2 on I/O,
parse or configuration errors.
"""
import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .config import RunConfig, load_config, parse_config
from .errors import ConfigError, ContractViolation, ParseError

EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 1, 2


def resolve_config(args):
    """Defaults, then --config, then --seed. An existing out/config.txt must agree."""
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    saved_path = Path(args.out) / "config.txt"
    if saved_path.exists():
        saved = parse_config(saved_path.read_text())
        if not args.config and args.seed is None:
            return saved
        if saved != cfg:
            raise ContractViolation(
                f"{args.out} was created with a different configuration; use a new --out")
    return cfg


def _methods(run, method):
    return run.cfg.method_list() if method == "all" else [method]


def _print_agg(label, agg):
    vals = " ".join(f"{k}={agg[k]:.4f}" for k in ("iou", "dsc", "ppv", "sen", "cd", "hd", "asd"))
    print(f"{label}: {vals}")


def cmd_gen_data(run, args):
    print(pipeline.gen_data(run))


def cmd_pretrain(run, args):
    print(pipeline.pretrain(run))


def cmd_learn_policy(run, args):
    traces = pipeline.learn_policy(run)
    print(f"{len(traces)} episodes; mean return of last 20: "
          f"{sum(t.total_return for t in traces[-20:]) / max(1, len(traces[-20:])):.4f}")


def cmd_augment(run, args):
    for m in _methods(run, args.method):
        print(pipeline.augment(run, m))


def cmd_train_final(run, args):
    for m in _methods(run, args.method):
        _print_agg(m, pipeline.train_final(run, m))


def cmd_eval(run, args):
    dest = Path(args.dest) if args.dest else run.path("eval", "metrics.csv")
    _print_agg(str(args.checkpoint), pipeline.evaluate_checkpoint(run, args.checkpoint, dest))


def cmd_report(run, args):
    pipeline.report(run, args.runs)
    print((run.out / "report" / "report.txt").read_text(), end="")


def cmd_run(run, args):
    for m, agg in pipeline.run_all(run).items():
        _print_agg(m, agg)
    cmd_report(run, argparse.Namespace(runs=[]))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="artifact directory")

    parser = argparse.ArgumentParser(prog="rlaug", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out", default="runs/default", help="artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    add("gen-data", cmd_gen_data, "generate and split the synthetic dataset")
    add("pretrain", cmd_pretrain, "train the substitute segmentation model")
    add("learn-policy", cmd_learn_policy, "train the augmentation agent")
    methods = list(pipeline.METHODS) + ["all"]
    add("augment", cmd_augment, "build an augmented training set").add_argument(
        "--method", choices=methods, default="all")
    add("train-final", cmd_train_final, "train from scratch and score on test").add_argument(
        "--method", choices=methods, default="all")
    p = add("eval", cmd_eval, "score a segmentation checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dest", default=None, help="metrics CSV path (default out/eval/metrics.csv)")
    add("report", cmd_report, "comparison table and sign tests").add_argument(
        "--runs", nargs="*", default=[], help="further run directories to pool")
    add("run", cmd_run, "every phase in order, then report")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = pipeline.Run(args.out, resolve_config(args))
        if args.command in ("gen-data", "run"):
            run.out.mkdir(parents=True, exist_ok=True)
        elif not (run.out / "config.txt").exists():
            raise ConfigError(f"{args.out} has no config.txt; run gen-data first")
        args.func(run, args)
    except ContractViolation as exc:
        print(f"rlaug: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (ParseError, ConfigError, OSError) as exc:
        print(f"rlaug: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
