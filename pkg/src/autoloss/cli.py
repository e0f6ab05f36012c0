"""Command-line entry point.

Exit codes: 0 success, 1 a loss failed a semantic check, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from autoloss import search, simtask, zoo
from autoloss._io import atomic_write_text
from autoloss.expr import DslSyntaxError, ExprError, canonical_key, canonical_string, parse
from autoloss.tensor import backward, forward, kink_distance, numerical_gradient
from autoloss.verify import verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# config-file keys and how to read their values
_CONFIG_TYPES = {
    "branch": str, "E": int, "N": int, "P": int, "K": int, "p1": float, "p2": float,
    "initial_loss": str, "seed": int, "data_seed": int, "max_nodes": int, "max_depth": int,
    "sim_steps": int, "proxy_steps": int, "proxy_batch": int, "workers": int,
}
_REQUIRED = ("branch",)


class UsageError(Exception):
    pass


# -- config files -------------------------------------------------------------

def read_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONFIG_TYPES[key](value)
        except ValueError:
            raise UsageError(f"config line {lineno}: bad value {value!r} for {key}") from None
    return values


def build_config(values: dict, seed: int | None = None, workers: int | None = None
                 ) -> search.SearchConfig:
    for key in _REQUIRED:
        if key not in values:
            raise UsageError(f"config is missing required key {key!r}")
    values = dict(values)
    if seed is not None:
        values["seed"] = seed
    if workers is not None:
        values["workers"] = workers
    elif "workers" not in values and os.environ.get("AUTOLOSS_WORKERS"):
        try:
            values["workers"] = int(os.environ["AUTOLOSS_WORKERS"])
        except ValueError:
            raise UsageError("AUTOLOSS_WORKERS must be an integer") from None
    try:
        return search.SearchConfig(**values)
    except (ValueError, zoo.UnknownLoss) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def format_config(config: search.SearchConfig) -> str:
    return "".join(f"{f.name} = {getattr(config, f.name)}\n" for f in dataclasses.fields(config))


def _load_config(args) -> search.SearchConfig:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    return build_config(read_config(text), args.seed, args.workers)


# -- helpers ------------------------------------------------------------------

def _expr_from_args(args):
    if getattr(args, "loss", None):
        try:
            entry = zoo.get(args.loss)
        except zoo.UnknownLoss:
            raise UsageError(f"unknown loss {args.loss!r}") from None
        return entry.expr
    if not args.expr:
        raise UsageError("give --expr or --loss")
    if not args.branch:
        raise UsageError("--branch is required with --expr")
    return parse(args.expr, args.branch)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- commands -----------------------------------------------------------------

def cmd_parse(args) -> int:
    e = _expr_from_args(args)
    print(canonical_string(e))
    print(f"nodes={e.size} depth={e.depth}")
    print(f"key={canonical_key(e)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    e = _expr_from_args(args)
    rng = np.random.default_rng(args.seed)
    ctx = zoo.random_context(e.branch, rng, batch=args.batch)
    ev = forward(e, ctx)
    _print_json({"expr": str(e), "branch": e.branch, "value": ev.value,
                 "per_sample": ev.per_sample.tolist()})
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    e = _expr_from_args(args)
    rng = np.random.default_rng(args.seed)
    worst, checked, skipped = 0.0, 0, 0
    for _ in range(args.trials):
        ctx = zoo.random_context(e.branch, rng, batch=args.batch)
        ev = forward(e, ctx)
        if not ev.finite or kink_distance(ev.tape) < 1e-3:
            skipped += 1
            continue
        grads = backward(ev.tape)
        for sym, g in grads.items():
            fd = numerical_gradient(e, ctx, sym)
            err = np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(fd)))
            worst = max(worst, float(err))
        checked += 1
    ok = worst <= args.tol
    _print_json({"expr": str(e), "checked": checked, "skipped": skipped,
                 "max_rel_error": worst, "pass": ok})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    report = verify(_expr_from_args(args))
    _print_json(report.to_record())
    return EXIT_OK if report.overall else EXIT_FAIL


def cmd_simulate(args) -> int:
    e = _expr_from_args(args)
    if args.proxy:
        res = simtask.proxy_result(e, seed=args.seed, steps=args.steps or simtask.PROXY_STEPS,
                                   data_seed=args.data_seed)
    else:
        res = simtask.simulate(e, seed=args.seed, budget=args.steps or simtask.SIM_STEPS,
                               data_seed=args.data_seed)
    _print_json({"expr": str(e), "stage": "proxy" if args.proxy else "simulate",
                 **res.to_record()})
    return EXIT_FAIL if res.diverged else EXIT_OK


def cmd_search(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    atomic_write_text(out / "config.effective", format_config(config))
    runner = {"cse": search.run_search, "vanilla": search.run_vanilla_ea,
              "random": search.run_random_search}[args.algo]
    best, log = runner(config, out_dir=out)
    if best is None:
        print("no candidate evaluated")
        return EXIT_FAIL
    print(f"best: {best.dsl}")
    print(f"fitness: {best.fitness!r}")
    print(f"proxy evaluations: {log.proxy_calls}")
    return EXIT_OK


def cmd_bench(args) -> int:
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    if not algos:
        raise UsageError("--algos is empty")
    unknown = sorted(set(algos) - {"cse", "vanilla", "random"})
    if unknown:
        raise UsageError(f"unknown algorithm(s): {', '.join(unknown)}")
    config = _load_config(args)
    rows = search.run_bench(config, algos)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(search.BenchRow.FIELDS)
    for r in rows:
        writer.writerow([r.algo, r.evaluated_loss_count, f"{r.wall_seconds:.3f}", r.best_fitness])
    out = Path(args.out)
    atomic_write_text(out / "config.effective", format_config(config))
    atomic_write_text(out / "bench.csv", buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_zoo_list(args) -> int:
    for name in zoo.names(args.branch):
        entry = zoo.LOSSES[name]
        print(f"{entry.name}\t{entry.branch}\t{entry.role}\t{entry.dsl}")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def _expr_args(p: argparse.ArgumentParser, allow_loss: bool = True) -> None:
    p.add_argument("--expr", help="loss in prefix-call notation, e.g. Add(1,Neg(Div(I,U)))")
    p.add_argument("--branch", choices=["cls", "reg", "classification", "regression"])
    if allow_loss:
        p.add_argument("--loss", help="named loss from the zoo instead of --expr")


def _run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="key = value run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--workers", type=int, help="parallel workers (default $AUTOLOSS_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autoloss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="print the canonical form and size of a loss")
    _expr_args(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="evaluate a loss on a random context")
    _expr_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare reverse-mode and finite-difference gradients")
    _expr_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=3)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("verify", help="run the property checks")
    _expr_args(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="train the small model with a loss")
    _expr_args(p)
    p.add_argument("--proxy", action="store_true", help="proxy training instead of the short simulation")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("search", help="run a loss search")
    _run_args(p)
    p.add_argument("--algo", choices=["cse", "vanilla", "random"], default="cse")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bench", help="paired comparison of search algorithms")
    _run_args(p)
    p.add_argument("--algos", default="random,vanilla,cse")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("zoo-list", help="list named losses")
    p.add_argument("--branch", choices=["cls", "reg"])
    p.set_defaults(func=cmd_zoo_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except search.EmptyFunnel as exc:
        print(f"EmptyFunnel: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except DslSyntaxError as exc:
        print(f"{type(exc).__name__}: {exc.pretty()}", file=sys.stderr)
    except (ExprError, UsageError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
