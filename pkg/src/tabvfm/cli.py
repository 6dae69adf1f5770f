"""Command-line interface.

    tabvfm train CONFIG.json [overrides]
    tabvfm sample CHECKPOINT --rows N [--steps 25] [--seed 0] [--decode argmax] [--out FILE]
    tabvfm eval --real FILE --syn FILE [--holdout FILE] [--task ... --target COL] [--json FILE]
    tabvfm selftest [--inject-fault EPS]
    tabvfm --make-toy FILE

Training settings are resolved as: built-in defaults, then the JSON config
file, then command-line flags. Relative paths inside a config file are taken
relative to the file's directory.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__, checkpoint, data, metrics, net, sampler, selftest, trainer
from .data import SchemaError
from .toy import make_toy

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2

CONFIG_PATH_KEYS = ("data", "schema", "out", "history")
TRAIN_FIELDS = {f.name for f in fields(trainer.TrainConfig)}


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _non_negative_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _hidden(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated sizes, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError(f"hidden sizes must be positive, got {text!r}")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tabvfm", description="Exponential-family flow matching for mixed tables.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--make-toy", metavar="PATH", help="write the bundled two-column toy dataset and exit")
    p.add_argument("--toy-rows", type=_positive_int, default=10_000, help="rows for --make-toy (default 10000)")
    p.add_argument("--toy-seed", type=int, default=0, help="seed for --make-toy (default 0)")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress lines on stderr")
    sub = p.add_subparsers(dest="command")

    t = sub.add_parser("train", help="fit a model from a JSON config")
    t.add_argument("config", help="JSON config file")
    t.add_argument("--data", help="training CSV")
    t.add_argument("--schema", help="schema JSON (default: infer from the CSV)")
    t.add_argument("--out", help="checkpoint path (default model.tbfw)")
    t.add_argument("--history", help="loss-history CSV (default: checkpoint path + .loss.csv)")
    t.add_argument("--iterations", type=_positive_int)
    t.add_argument("--batch-size", type=_positive_int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--eval-every", type=_non_negative_int)
    t.add_argument("--t-epsilon", type=float)
    t.add_argument("--hidden", type=_hidden, help="comma-separated hidden sizes, e.g. 256,256")
    t.add_argument("--time-dim", type=_positive_int)
    anneal = t.add_mutually_exclusive_group()
    anneal.add_argument("--anneal", dest="anneal_numerical", action="store_true", default=None)
    anneal.add_argument("--no-anneal", dest="anneal_numerical", action="store_false")

    s = sub.add_parser("sample", help="generate synthetic rows from a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--rows", type=_non_negative_int, required=True)
    s.add_argument("--steps", type=_positive_int, default=25, help="Euler steps (default 25)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--decode", choices=("argmax", "stochastic"), default="argmax")
    s.add_argument("--out", default="-", help="output CSV (default stdout)")

    e = sub.add_parser("eval", help="score a synthetic table against real data")
    e.add_argument("--real", required=True)
    e.add_argument("--syn", required=True)
    e.add_argument("--holdout")
    e.add_argument("--schema", help="schema JSON for the real table (default: infer)")
    e.add_argument("--task", choices=("classification", "regression"))
    e.add_argument("--target")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--json", metavar="PATH", help="also write the report as JSON ('-' for stdout)")

    st = sub.add_parser("selftest", help="run the built-in numerical checks")
    st.add_argument("--inject-fault", type=float, default=0.0, metavar="EPS",
                    help="scale the first-layer gradient by (1 + EPS) to prove the check can fail")
    return p


# -- train ------------------------------------------------------------------------

def resolve_train_config(args) -> dict:
    try:
        with open(args.config, encoding="utf-8") as f:
            cfg = json.load(f)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON in {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{args.config}: config must be a JSON object")
    unknown = set(cfg) - TRAIN_FIELDS - set(CONFIG_PATH_KEYS)
    if unknown:
        raise UsageError(f"{args.config}: unknown config keys {sorted(unknown)}")
    base = Path(args.config).parent
    for key in CONFIG_PATH_KEYS:
        if isinstance(cfg.get(key), str):
            cfg[key] = str(base / cfg[key])
    for key in (*CONFIG_PATH_KEYS, *TRAIN_FIELDS):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if not cfg.get("data"):
        raise UsageError("no training data: set 'data' in the config or pass --data")
    cfg.setdefault("out", "model.tbfw")
    cfg.setdefault("history", cfg["out"] + ".loss.csv")
    return cfg


def cmd_train(args) -> int:
    cfg = resolve_train_config(args)
    try:
        tcfg = trainer.TrainConfig(**{k: v for k, v in cfg.items() if k in TRAIN_FIELDS})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training setting: {exc}") from None
    schema = data.load_schema(cfg["schema"]) if cfg.get("schema") else "infer"
    table = data.impute(data.load_csv(cfg["data"], schema))
    maps = data.fit_maps(table)
    encoded = data.encode(table, maps)
    logging.getLogger(__name__).info(
        "training on %d rows x %d encoded dims for %d iterations", len(table), encoded.shape[1], tcfg.iterations)
    result = trainer.train(encoded, schema=table.schema, config=tcfg)
    checkpoint.save(checkpoint.Checkpoint(result.params, table.schema, maps, tcfg.to_dict()), cfg["out"])
    result.write_history(cfg["history"])
    print(f"final smoothed loss {result.final_smoothed_loss:.6f} "
          f"(best {result.best_loss:.6f} at iteration {result.best_iteration})")
    print(f"checkpoint {cfg['out']}")
    print(f"loss history {cfg['history']}")
    return EXIT_OK


# -- sample -----------------------------------------------------------------------

def cmd_sample(args) -> int:
    ckpt = checkpoint.load(args.checkpoint)
    generated = sampler.euler_sample(ckpt.params, args.rows, steps=args.steps, seed=args.seed)
    table = sampler.decode(generated, ckpt.schema, ckpt.maps, mode=args.decode, seed=args.seed)
    if args.out == "-":
        data.write_csv(table, sys.stdout)
    else:
        data.write_csv(table, args.out)
        logging.getLogger(__name__).info("wrote %d rows to %s", args.rows, args.out)
    return EXIT_OK


# -- eval -------------------------------------------------------------------------

def _load_like(path: str, schema: data.TableSchema) -> data.RawTable:
    """Load ``path`` with the column kinds of ``schema``, in the file's own column order."""
    header, _ = data._read_cells(path)
    if sorted(header) != sorted(schema.names):
        raise SchemaError(f"{path}: columns {header} do not match the real table's {list(schema.names)}")
    reordered = data.TableSchema(tuple(schema.column(n) for n in header))
    return data.impute(data.load_csv(path, reordered))


def cmd_eval(args) -> int:
    if args.task and not args.target:
        raise UsageError("--task needs --target")
    schema = data.load_schema(args.schema) if args.schema else "infer"
    real = data.impute(data.load_csv(args.real, schema))
    syn = _load_like(args.syn, real.schema)
    holdout = _load_like(args.holdout, real.schema) if args.holdout else None
    report = metrics.evaluate(real, syn, holdout, task=args.task, target=args.target, seed=args.seed)
    print(report.to_text())
    if args.json == "-":
        print(report.to_json())
    elif args.json:
        Path(args.json).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


# -- selftest ---------------------------------------------------------------------

def cmd_selftest(args) -> int:
    previous = net.GRADIENT_FAULT
    if args.inject_fault:
        net.GRADIENT_FAULT = args.inject_fault
    try:
        results = selftest.run_all()
    finally:
        net.GRADIENT_FAULT = previous
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.seconds:6.2f}s  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_NUMERICAL


COMMANDS = {"train": cmd_train, "sample": cmd_sample, "eval": cmd_eval, "selftest": cmd_selftest}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.make_toy:
        if args.command:
            parser.error("--make-toy cannot be combined with a command")
        data.write_csv(make_toy(args.toy_rows, seed=args.toy_seed), args.make_toy)
        print(f"wrote {args.toy_rows} rows to {args.make_toy}")
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        print("tabvfm: error: a command is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, SchemaError, checkpoint.CheckpointError) as exc:
        print(f"tabvfm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"tabvfm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (trainer.TrainingError, sampler.SamplingError, FloatingPointError) as exc:
        print(f"tabvfm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"tabvfm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
