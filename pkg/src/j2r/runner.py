"""Run batches of an external executable over expanded configurations.

Each job is one (configuration, repetition) pair. The executable receives the
configuration as separate ``--name value`` arguments and must print a single
JSON object of statistics on standard output; exit status 0 means success.
Only the scheduling thread writes to the store.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import subprocess
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Sequence

from .config import Configuration
from .errors import ConflictError, NotFoundError, RunnerError, ValidationError
from .expand import command_args, expand
from .store import BatchRecord, ExperimentRecord, FileStore, RaceOptions, hostname, utc_now
from .tree import ParamTree, parse_experiment, validate

log = logging.getLogger(__name__)

SCM_COMMANDS = {
    "git": ["git", "rev-parse", "HEAD"],
    "mercurial": ["hg", "id", "-i"],
}


def default_parallelism() -> int:
    return os.cpu_count() or 1


@dataclass
class RunOptions:
    """Options for run-batch and run-race; ``None`` means "keep the stored value"
    when resuming and "use the default" when starting."""

    parallelism: int | None = None
    repetitions: int | None = None
    greedy: bool | None = None
    scm: str | None = None

    def __post_init__(self) -> None:
        if self.parallelism is not None and self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        if self.repetitions is not None and self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.scm is not None and self.scm not in SCM_COMMANDS:
            raise ValueError(f"unsupported scm {self.scm!r}; choose from {sorted(SCM_COMMANDS)}")


@dataclass
class RunSummary:
    executed: int = 0
    reused: int = 0
    skipped: int = 0
    failed: int = 0
    finished: bool = False


def resolve_executable(executable: str) -> str:
    if os.sep in executable or os.path.exists(executable):
        path = os.path.abspath(executable)
    else:
        path = shutil.which(executable) or executable
    if not (os.path.isfile(path) and os.access(path, os.X_OK)):
        raise RunnerError(f"executable '{executable}' not found or not executable")
    return path


def load_tree(text: str) -> ParamTree:
    tree = parse_experiment(text)
    report = validate(tree)
    if not report.ok:
        raise ValidationError(report)
    return tree


def scm_revision(kind: str, directory: str) -> str | None:
    try:
        cmd = SCM_COMMANDS[kind]
    except KeyError:
        raise ValueError(f"unsupported scm {kind!r}") from None
    try:
        proc = subprocess.run(cmd, cwd=directory, capture_output=True, text=True, check=False)
    except OSError as exc:
        log.warning("cannot query %s revision: %s", kind, exc)
        return None
    revision = proc.stdout.strip()
    if proc.returncode != 0 or not revision:
        log.warning("%s is not a %s working copy; revision not recorded", directory, kind)
        return None
    return revision


def execute_one(config: Configuration, executable: str, repetition: int = 0,
                batch_names: Sequence[str] = (), scm_revision: str | None = None) -> ExperimentRecord:
    argv = [executable, *command_args(config)]
    started = utc_now()
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, check=False)
    except OSError as exc:
        raise RunnerError(f"cannot launch '{executable}': {exc}") from None
    finished = utc_now()
    stats = None
    error = None
    if proc.returncode != 0:
        error = f"exit status {proc.returncode}; stderr: {proc.stderr.strip()[-500:]}"
    else:
        try:
            parsed = json.loads(proc.stdout)
        except json.JSONDecodeError as exc:
            parsed = None
            error = f"stdout is not valid JSON ({exc.msg}): {proc.stdout[:500]!r}"
        if parsed is not None and not isinstance(parsed, dict):
            error = f"stdout is not a JSON object: {proc.stdout[:500]!r}"
        elif parsed is not None:
            stats = parsed
    return ExperimentRecord(
        batch_names=list(batch_names),
        executable=executable,
        config=config,
        repetition=repetition,
        stats=stats,
        exit_status=proc.returncode,
        started_at=started,
        finished_at=finished,
        host=hostname(),
        scm_revision=scm_revision,
        error=error,
    )


def run_jobs(store: FileStore, batch: BatchRecord, jobs: Sequence[tuple[Configuration, int]],
             parallelism: int) -> list[ExperimentRecord]:
    """Execute jobs on at most ``parallelism`` concurrent processes, recording each result."""
    if not jobs:
        return []
    resolve_executable(batch.executable)
    records: list[ExperimentRecord] = []
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        pending: set[Future] = {
            pool.submit(execute_one, config, batch.executable, rep, [batch.name], batch.scm_revision)
            for config, rep in jobs
        }
        try:
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    rec = fut.result()
                    store.record_experiment(rec)
                    records.append(rec)
                    if rec.ok:
                        log.info("done rep %d: %s", rec.repetition, " ".join(command_args(rec.config)))
                    else:
                        log.warning("failed rep %d: %s (%s)", rec.repetition,
                                    " ".join(command_args(rec.config)), rec.error)
        except BaseException:
            for fut in pending:
                fut.cancel()
            raise
    return records


def prepare_batch(store: FileStore, name: str, kind: str, tree_text: str | None, executable: str | None,
                  options: RunOptions, race_options: RaceOptions | None = None,
                  ) -> tuple[BatchRecord, ParamTree, bool]:
    """Load a batch to resume, or build (without saving) a new one.

    Returns ``(batch, tree, is_new)``. Giving a tree or executable that differs
    from a stored batch's is refused rather than silently redefining it.
    """
    if store.has_batch(name):
        batch = store.get_batch(name)
        if batch.kind != kind:
            raise ConflictError(f"'{name}' is a {batch.kind}, not a {kind}")
        if tree_text is not None and parse_experiment(tree_text) != parse_experiment(batch.tree_text):
            raise ConflictError(f"experiment file differs from the one stored for '{name}'")
        if executable is not None and resolve_executable(executable) != batch.executable:
            raise ConflictError(f"executable differs from '{batch.executable}' stored for '{name}'")
        if options.repetitions is not None and options.repetitions != batch.repetitions:
            if kind == "race":
                raise ConflictError("the repetitions of a started race cannot change")
            log.info("setting repetitions of '%s' to %d", name, options.repetitions)
            store.set_repetitions(name, options.repetitions)
            batch = store.get_batch(name)
        if options.greedy is not None and options.greedy != batch.greedy:
            batch.greedy = options.greedy
            store.update_batch(batch)
        return batch, load_tree(batch.tree_text), False

    if tree_text is None or executable is None:
        raise NotFoundError(f"no batch named '{name}'; give an input file and an executable to start one")
    tree = load_tree(tree_text)
    exe = resolve_executable(executable)
    revision = scm_revision(options.scm, os.path.dirname(exe)) if options.scm else None
    batch = BatchRecord(
        name=name,
        kind=kind,
        tree_text=tree_text,
        executable=exe,
        repetitions=options.repetitions or 1,
        greedy=bool(options.greedy),
        scm_revision=revision,
        race_options=race_options,
    )
    return batch, tree, True


def run_batch(store: FileStore, name: str, tree_text: str | None = None, executable: str | None = None,
              options: RunOptions | None = None, base_dir: str | None = None) -> RunSummary:
    """Start or resume a batch; returns counts of executed, reused, skipped and failed jobs."""
    options = options or RunOptions()
    batch, tree, is_new = prepare_batch(store, name, "batch", tree_text, executable, options)
    configs = list(expand(tree, base_dir))
    for c in configs:
        command_args(c)
    total = len(configs) * batch.repetitions
    if is_new:
        batch.total = total
        store.create_batch(batch)
        log.info("started batch '%s': %d configurations x %d repetitions", name, len(configs), batch.repetitions)
    elif batch.total != total:
        batch.total = total
        store.update_batch(batch)

    summary = RunSummary()
    jobs = []
    for config in configs:
        for rep in range(batch.repetitions):
            if store.find_in_batch(name, config, rep) is not None:
                summary.skipped += 1
                continue
            if batch.greedy:
                rec = store.find_reusable(config, batch.executable, rep)
                if rec is not None:
                    store.adopt(rec.id, name)
                    summary.reused += 1
                    continue
            jobs.append((config, rep))

    records = run_jobs(store, batch, jobs, options.parallelism or default_parallelism())
    summary.executed = len(records)
    summary.failed = sum(not r.ok for r in records)

    batch = store.get_batch(name)
    batch.finished = not store.pending_experiments(name, configs)
    store.update_batch(batch)
    summary.finished = batch.finished
    log.info("batch '%s': %d executed (%d failed), %d reused, %d already done", name,
             summary.executed, summary.failed, summary.reused, summary.skipped)
    return summary
