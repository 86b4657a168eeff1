"""``sharpsearch`` command line.

Exit codes: 0 success, 2 usage or parse error, 3 infeasible (space too
large or exhausted), 4 objective failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import reports
from .objectives import (
    DatasetError,
    TabularBenchmark,
    TrainerObjective,
    build_network_from_config,
    default_dataset_path,
    load_dataset,
    make_synthetic,
    materialize,
)
from .optimizer import Acquisition, ExhaustedSpaceError, LoopConfig, RunLog, atomic_write_text, run_bayesian, run_grid
from .space import CardinalityError, SpaceError, load_space

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_OBJECTIVE = 0, 2, 3, 4

log = logging.getLogger("sharpsearch")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


# --- helpers -------------------------------------------------------------------


def _space(path):
    try:
        return load_space(path)
    except FileNotFoundError:
        raise CliError(f"space file not found: {path}") from None


def _objective(args, space):
    kind = args.objective
    if kind == "tabular":
        if not args.table:
            raise CliError("--table is required for the tabular objective")
        try:
            return TabularBenchmark.read(space, args.table)
        except FileNotFoundError:
            raise CliError(f"table file not found: {args.table}") from None
    if kind == "synthetic":
        return make_synthetic(space, args.landscape_seed, args.noise)
    dataset = load_dataset(args.dataset or default_dataset_path(), seed=args.seed)
    return TrainerObjective(dataset, epochs=args.epochs, seed=args.seed, width_divisor=args.width_divisor)


def _summary(runlog: RunLog) -> str:
    best = runlog.best()
    failed = sum(r.failed for r in runlog)
    return "\n".join([
        f"evaluations: {len(runlog)}",
        f"failed: {failed}",
        f"best iteration: {best.iteration}",
        f"best value: {best.value!r}",
        f"best config: {best.config.to_pairs()}",
    ]) + "\n"


def _finish_run(args, runlog: RunLog) -> int:
    out = Path(args.out)
    runlog.write(out / "runlog.tsv")
    summary = _summary(runlog)
    atomic_write_text(out / "summary.txt", summary)
    sys.stdout.write(summary)
    if len(runlog) and all(r.failed for r in runlog):
        return EXIT_OBJECTIVE
    return EXIT_OK


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        atomic_write_text(args.out, text)
    sys.stdout.write(text)


# --- commands ------------------------------------------------------------------


def cmd_space_info(args) -> int:
    space = _space(args.space)
    lines = [f"{'name':<20} {'kind':<12} {'count':>5}  options"]
    for s in space:
        lines.append(f"{s.name:<20} {s.kind:<12} {s.size:>5}  {', '.join(s.labels)}")
    lines.append(f"cardinality: {space.cardinality()}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_grid(args) -> int:
    space = _space(args.space)
    objective = _objective(args, space)
    runlog = run_grid(space, objective, limit=args.limit, seed=args.seed)
    return _finish_run(args, runlog)


def cmd_bo(args) -> int:
    space = _space(args.space)
    objective = _objective(args, space)
    try:
        loop = LoopConfig(
            n_iter=args.n_iter,
            n_init=args.n_init,
            acquisition=Acquisition.parse(args.acq, args.acq_param),
            candidate_limit=args.candidate_limit,
            seed=args.seed,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    runlog = run_bayesian(space, objective, loop)
    return _finish_run(args, runlog)


def cmd_train_one(args) -> int:
    from .whetstone.network import save_checkpoint, train
    from .whetstone.schedule import validate_schedule

    space = _space(args.space)
    assignments = {}
    items = (args.config or "").split() + list(args.set or [])
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"expected name=value, got {item!r}")
        assignments[name] = value
    config = space.config(assignments)
    dataset = load_dataset(args.dataset or default_dataset_path(), seed=args.seed)
    built = build_network_from_config(config, args.seed, dataset.image_shape, dataset.num_classes, args.width_divisor)
    net = built.network
    verdict = validate_schedule(built.schedule, net.group_count, args.epochs)
    if not verdict.complete:
        print(f"warning: {verdict}", file=sys.stderr)
    val = (dataset.images(dataset.validation), dataset.validation[1])
    _, history = train(net, (dataset.images(dataset.train), dataset.train[1]), built.optimizer, built.schedule,
                       args.epochs, args.batch_size, np.random.default_rng([args.seed, 1]), validation=val)
    out = Path(args.out)
    atomic_write_text(out / "history.csv", history.to_csv())
    save_checkpoint(net, out / "checkpoint.npz")
    test = (dataset.images(dataset.test), dataset.test[1])
    lines = [
        f"config: {config.to_pairs()}",
        f"{verdict}",
        f"epochs: {len(history)}",
    ]
    if history.failed:
        lines.append(f"failed: {history.failure}")
    else:
        lines += [
            f"validation accuracy: {net.accuracy(*val)!r}",
            f"binarized validation accuracy: {net.binarized_accuracy(*val)!r}",
            f"test accuracy: {net.accuracy(*test)!r}",
        ]
    text = "\n".join(lines) + "\n"
    atomic_write_text(out / "summary.txt", text)
    sys.stdout.write(text)
    return EXIT_OBJECTIVE if history.failed else EXIT_OK


def _read_log(args) -> RunLog:
    space = _space(args.space) if args.space else None
    try:
        runlog = RunLog.read(args.log, space)
    except FileNotFoundError:
        raise CliError(f"log file not found: {args.log}") from None
    if not len(runlog):
        raise CliError("empty run log")
    return runlog


def cmd_report_trace(args) -> int:
    rows = reports.trace(_read_log(args))
    _emit(args, reports.to_csv(["iteration", "value", "best_so_far"],
                               [(i, repr(v), repr(b)) for i, v, b in rows]))
    return EXIT_OK


def cmd_report_hist(args) -> int:
    runlog = _read_log(args)
    space = _space(args.space) if args.space else None
    rows = reports.histogram(runlog, space)
    _emit(args, reports.to_csv(["hyperparameter", "option", "count", "best"],
                               [(n, o, c, int(b)) for n, o, c, b in rows]))
    return EXIT_OK


def cmd_report_sensitivity(args) -> int:
    runlog = _read_log(args)
    try:
        experiments = [int(t) for t in args.experiments.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"--experiments expects comma-separated integers, got {args.experiments!r}") from None
    try:
        header, rows = reports.sensitivity(runlog, experiments)
    except IndexError as exc:
        raise CliError(str(exc)) from None
    _emit(args, reports.to_csv(header, rows))
    return EXIT_OK


def cmd_bench_make_tabular(args) -> int:
    space = _space(args.space)
    bench = materialize(make_synthetic(space, args.landscape_seed, args.noise), limit=args.limit)
    bench.write(args.out)
    cfg, best = bench.max()
    sys.stdout.write(f"wrote {len(bench)} rows to {args.out}\nmax value: {best!r}\nmax config: {cfg.to_pairs()}\n")
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _add_objective_flags(p):
    p.add_argument("--space", required=True, help="search-space definition file")
    p.add_argument("--objective", choices=("tabular", "synthetic", "trainer"), default="synthetic")
    p.add_argument("--table", help="tabular benchmark file (tabular objective)")
    p.add_argument("--landscape-seed", type=int, default=0, help="synthetic landscape seed")
    p.add_argument("--noise", type=float, default=0.0, help="synthetic landscape noise std")
    p.add_argument("--dataset", help="dataset CSV (trainer objective); defaults to the bundled 8x8 digits")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--width-divisor", type=int, default=1, help="divide conv/dense widths (trainer objective)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sharpsearch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    space = sub.add_parser("space", help="inspect a search space").add_subparsers(dest="action", required=True)
    p = space.add_parser("info", help="list hyperparameters and cardinality")
    p.add_argument("--space", required=True)
    p.set_defaults(func=cmd_space_info)

    p = sub.add_parser("grid", help="exhaustive grid search")
    _add_objective_flags(p)
    p.add_argument("--limit", type=int, default=10**6, help="refuse spaces larger than this")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bo", help="Bayesian optimisation")
    _add_objective_flags(p)
    p.add_argument("--n-iter", type=int, default=15)
    p.add_argument("--n-init", type=int, default=2)
    p.add_argument("--acq", choices=("ei", "ucb", "poi"), default="ei")
    p.add_argument("--acq-param", type=float, default=None, help="xi for ei/poi, kappa for ucb")
    p.add_argument("--candidate-limit", type=int, default=4096)
    p.set_defaults(func=cmd_bo)

    p = sub.add_parser("train-one", help="train one configuration")
    p.add_argument("--space", required=True)
    p.add_argument("--config", help="space-separated name=value pairs")
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="assign one hyperparameter (repeatable)")
    p.add_argument("--dataset")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--width-divisor", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/train-one")
    p.set_defaults(func=cmd_train_one)

    rep = sub.add_parser("report", help="tables from a run log").add_subparsers(dest="action", required=True)
    for name, func, helptext in (
        ("trace", cmd_report_trace, "iteration, value, best so far"),
        ("hist", cmd_report_hist, "per-hyperparameter option counts"),
        ("sensitivity", cmd_report_sensitivity, "side-by-side experiments with changed cells marked"),
    ):
        p = rep.add_parser(name, help=helptext)
        p.add_argument("--log", required=True)
        p.add_argument("--space", help="space file; enables typed parsing and zero-count options")
        p.add_argument("--out", help="also write the CSV here")
        if name == "sensitivity":
            p.add_argument("--experiments", required=True, help="comma-separated 1-based iterations")
        p.set_defaults(func=func)

    bench = sub.add_parser("bench", help="benchmark utilities").add_subparsers(dest="action", required=True)
    p = bench.add_parser("make-tabular", help="materialise a synthetic landscape as a table")
    p.add_argument("--space", required=True)
    p.add_argument("--landscape-seed", "--seed", dest="landscape_seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--limit", type=int, default=10**6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_make_tabular)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (CardinalityError, ExhaustedSpaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SpaceError, DatasetError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
