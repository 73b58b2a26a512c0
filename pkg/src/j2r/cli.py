"""``j2r`` command line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Sequence

from . import race, runner
from .errors import J2RError, StoreError
from .expand import expand, format_cll, format_csv
from .runner import RunOptions, default_parallelism
from .store import FileStore, open_store

log = logging.getLogger("j2r")

ACTIONS = (
    "print-cll",
    "print-csv",
    "run-batch",
    "run-race",
    "list-batches",
    "delete-batch",
    "batch-info",
    "rename-batch",
    "show-winning",
    "set-repetitions",
    "dump-experiments",
    "mark-unfinished",
)
NEEDS_INPUT = {"print-cll", "print-csv"}
NEEDS_NAME = set(ACTIONS) - {"print-cll", "print-csv", "list-batches"}
LOG_LEVELS = {"warning": logging.WARNING, "error": logging.ERROR, "info": logging.INFO}
STORE_ENV = "J2R_STORE_DIR"


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _level(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="j2r",
        usage="%(prog)s [-i INPUT] [-a ACTION] [-n BATCH_NAME] [options]",
        description="Expand JSON experiment trees, run batches and races of an executable.",
        allow_abbrev=False,
    )
    p.add_argument("-i", "--input", help="experiment file (JSON parameter tree)")
    p.add_argument("-a", "--action", choices=ACTIONS, default="print-cll", help="what to do (default: print-cll)")
    p.add_argument("-n", "--batch-name", help="name of the batch or race (the key in the database)")
    p.add_argument("--new-name", help="new name for rename-batch")

    run = p.add_argument_group("running options")
    run.add_argument("-e", "--executable", help="executable to run")
    run.add_argument("-p", "--parallel-threads", type=_positive,
                     help=f"maximum number of parallel processes (default: number of cores, {default_parallelism()})")
    run.add_argument("-r", "--repetitions", type=_positive, help="repetitions of each experiment (default: 1)")
    run.add_argument("-g", "--greedy", type=_bool, help="reuse matching experiments already in the database "
                     "(true|false, default: false)")
    run.add_argument("--scm", choices=sorted(runner.SCM_COMMANDS), help="record the code revision (git or mercurial)")

    rc = p.add_argument_group("race options")
    rc.add_argument("-ip", "--instance-param", help="parameter that designates the instance")
    rc.add_argument("-pp", "--performance-param", help="statistic to minimize")
    rc.add_argument("-s", "--seed", type=int, help="seed for shuffling instances (default: 0)")
    rc.add_argument("--confidence", type=_level, help="significance level compared with p-values (default: 0.05)")

    db = p.add_argument_group("database options")
    db.add_argument("-dh", "--db-host", default="localhost", help="database host (default: localhost)")
    db.add_argument("-dd", "--db-database", default="j2r",
                    help=f"database name; with a local host it names the store directory (default: j2r, "
                         f"overridden by ${STORE_ENV})")
    db.add_argument("-du", "--db-user", default="j2r", help="database user (default: j2r)")
    db.add_argument("-dx", "--db-pass", default="j2r", help="database password (default: j2r)")
    db.add_argument("-dp", "--db-port", type=int, help="database port")

    lg = p.add_argument_group("logging")
    lg.add_argument("--log-file", help="write the log to this file instead of standard error")
    lg.add_argument("--log-level", choices=sorted(LOG_LEVELS), default="info", help="log level (default: info)")
    return p


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.action in NEEDS_INPUT and not args.input:
        parser.error(f"action {args.action} needs --input/-i")
    if args.action in NEEDS_NAME and not args.batch_name:
        parser.error(f"action {args.action} needs --batch-name/-n")
    if args.action == "rename-batch" and not args.new_name:
        parser.error("action rename-batch needs --new-name")
    if args.action == "set-repetitions" and args.repetitions is None:
        parser.error("action set-repetitions needs --repetitions/-r")
    if args.input and args.action in ("run-batch", "run-race") and not args.executable:
        parser.error(f"starting {args.action} from an input file needs --executable/-e")
    return args


def configure_logging(log_file: str | None, level: str) -> None:
    handler: logging.Handler = logging.FileHandler(log_file) if log_file else logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    root = logging.getLogger("j2r")
    for h in list(root.handlers):
        root.removeHandler(h)
        h.close()
    root.addHandler(handler)
    root.setLevel(LOG_LEVELS[level])
    root.propagate = False


def store_locator(args: argparse.Namespace) -> str:
    env = os.environ.get(STORE_ENV)
    if env:
        return env
    if args.db_host in ("localhost", "127.0.0.1") and args.db_port is None:
        return args.db_database
    raise StoreError(
        f"no server backend is available for {args.db_host}:{args.db_port}; "
        f"use a local store (set ${STORE_ENV} or omit --db-host/--db-port)")


def _read_input(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise J2RError(f"cannot read input file: {exc}") from None


def _out(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


def batch_info(store: FileStore, name: str) -> dict:
    batch = store.get_batch(name)
    records = store.experiments(name)
    revisions = {r.scm_revision for r in records if r.ok}
    info = {
        "name": batch.name,
        "kind": batch.kind,
        "executable": batch.executable,
        "repetitions": batch.repetitions,
        "greedy": batch.greedy,
        "completed": store.completed_count(name),
        "total": batch.total,
        "finished": batch.finished,
        "host": batch.host,
        "created_at": batch.created_at,
        "updated_at": batch.updated_at,
        "scm_revision": batch.scm_revision,
        "revision_mismatch": len(revisions | {batch.scm_revision}) > 1,
        "race": None,
        "experiment_file": json.loads(batch.tree_text),
    }
    if batch.kind == "race" and batch.race_state is not None:
        state = batch.race_state
        info["race"] = {
            "instance_param": batch.race_options.instance_param,
            "performance_param": batch.race_options.performance_param,
            "seed": batch.race_options.seed,
            "confidence": batch.race_options.confidence,
            "block_cursor": state.block_cursor,
            "total_blocks": len(state.instance_order) * batch.repetitions,
            "configurations": len(state.configs),
            "surviving": [format_cll(state.configs[i]) for i in state.surviving],
        }
    return info


def dispatch(args: argparse.Namespace) -> int:
    action = args.action
    if action in NEEDS_INPUT:
        from .runner import load_tree

        configs = expand(load_tree(_read_input(args.input)))
        if action == "print-cll":
            for c in configs:
                _out(format_cll(c) + "\n")
        else:
            _out(format_csv(configs))
        return 0

    store = open_store(store_locator(args))
    name = args.batch_name
    options = RunOptions(args.parallel_threads, args.repetitions, args.greedy, args.scm)
    tree_text = _read_input(args.input) if args.input else None

    if action == "run-batch":
        s = runner.run_batch(store, name, tree_text, args.executable, options)
        log.info("run-batch %s: executed=%d reused=%d skipped=%d failed=%d finished=%s",
                 name, s.executed, s.reused, s.skipped, s.failed, s.finished)
    elif action == "run-race":
        s = race.run_race(store, name, tree_text, args.executable, options,
                          instance_param=args.instance_param, performance_param=args.performance_param,
                          seed=args.seed, confidence=args.confidence)
        log.info("run-race %s: executed=%d reused=%d blocks=%d survivors=%d",
                 name, s.executed, s.reused, s.blocks, len(s.survivors))
    elif action == "list-batches":
        for summary in store.list_batches():
            _out(summary.line() + "\n")
    elif action == "delete-batch":
        store.delete_batch(name)
    elif action == "batch-info":
        _out(json.dumps(batch_info(store, name), indent=2) + "\n")
    elif action == "rename-batch":
        store.rename_batch(name, args.new_name)
    elif action == "show-winning":
        for c in race.show_winning(store, name):
            _out(format_cll(c) + "\n")
    elif action == "set-repetitions":
        store.set_repetitions(name, args.repetitions)
    elif action == "dump-experiments":
        _out(store.dump_csv(name))
    elif action == "mark-unfinished":
        store.mark_unfinished(name)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.log_file, args.log_level)
    try:
        return dispatch(args)
    except J2RError as exc:
        log.error("%s", exc)
        return 1
    except KeyboardInterrupt:
        log.error("interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
