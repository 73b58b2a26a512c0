"""Racing configurations over instances (F-Race style).

Configurations are evaluated block by block, a block being one (instance,
repetition) pair with instances visited in a seeded shuffled order. From the
fifth block on, after every block, a Friedman test over the surviving
configurations decides whether a rank-based comparison against the best one
may eliminate the others (a sign test is used when two remain). The race stops
when a single configuration survives or the blocks run out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TypeVar

import numpy as np

from .config import Configuration, Scalar
from .errors import ConflictError, RaceError
from .expand import command_args, expand
from .runner import RunOptions, default_parallelism, prepare_batch, run_jobs
from .stats import race_survivors
from .store import FileStore, RaceOptions, RaceState

log = logging.getLogger(__name__)

MIN_BLOCKS = 5

T = TypeVar("T")


@dataclass
class Split:
    instances: list[Scalar]
    configs: list[Configuration]
    # (configuration index, instance index) -> full configuration including the instance
    grid: dict[tuple[int, int], Configuration]


def split_configs(stream: Iterable[Configuration], instance_param: str) -> Split:
    instances: list[Scalar] = []
    inst_index: dict[str, int] = {}
    configs: list[Configuration] = []
    conf_index: dict[str, int] = {}
    grid: dict[tuple[int, int], Configuration] = {}
    for full in stream:
        inst = full.get(instance_param)
        if not isinstance(inst, Scalar):
            raise RaceError(f"configuration '{' '.join(command_args(full))}' has no value "
                            f"for instance parameter '{instance_param}'")
        if inst.text not in inst_index:
            inst_index[inst.text] = len(instances)
            instances.append(inst)
        rest = full.without(instance_param)
        key = rest.key()
        if key not in conf_index:
            conf_index[key] = len(configs)
            configs.append(rest)
        cell = (conf_index[key], inst_index[inst.text])
        if cell in grid:
            raise RaceError(f"configuration {' '.join(command_args(rest))} appears twice on instance {inst.text}")
        grid[cell] = full
    if len(grid) != len(instances) * len(configs):
        raise RaceError(
            f"a race needs every configuration paired with every instance; got {len(grid)} pairs "
            f"for {len(configs)} configurations and {len(instances)} instances")
    return Split(instances, configs, grid)


def _below(bitgen: np.random.PCG64, bound: int) -> int:
    # unbiased draw in [0, bound) from raw 64-bit outputs
    limit = (1 << 64) - (1 << 64) % bound
    while True:
        raw = int(bitgen.random_raw())
        if raw < limit:
            return raw % bound


def shuffle_instances(instances: Sequence[T], seed: int) -> list[T]:
    """Fisher-Yates shuffle driven by PCG64 seeded with ``seed`` (mod 2**64)."""
    bitgen = np.random.PCG64(seed % (1 << 64))
    items = list(instances)
    for i in range(len(items) - 1, 0, -1):
        j = _below(bitgen, i + 1)
        items[i], items[j] = items[j], items[i]
    return items


@dataclass
class RaceSummary:
    executed: int = 0
    reused: int = 0
    skipped: int = 0
    failed: int = 0
    blocks: int = 0
    survivors: list[int] = field(default_factory=list)
    finished: bool = False


def _performance(rec, param: str) -> float:
    value = (rec.stats or {}).get(param)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RaceError(f"experiment {rec.id} ({' '.join(command_args(rec.config))}) has no numeric "
                        f"statistic '{param}' (got {value!r})")
    return float(value)


def _race_options(existing: RaceOptions | None, instance_param, performance_param, seed, confidence) -> RaceOptions:
    if existing is None:
        if instance_param is None or performance_param is None:
            raise RaceError("a new race needs an instance parameter and a performance parameter")
        opts = RaceOptions(instance_param, performance_param,
                           0 if seed is None else seed, 0.05 if confidence is None else confidence)
    else:
        opts = existing
        given = {"instance_param": instance_param, "performance_param": performance_param,
                 "seed": seed, "confidence": confidence}
        for attr, value in given.items():
            if value is not None and value != getattr(existing, attr):
                raise ConflictError(f"{attr} of a started race cannot change ({getattr(existing, attr)!r})")
    if not 0.0 < opts.confidence < 1.0:
        raise RaceError("confidence must lie strictly between 0 and 1")
    return opts


def run_race(store: FileStore, name: str, tree_text: str | None = None, executable: str | None = None,
             options: RunOptions | None = None, *, instance_param: str | None = None,
             performance_param: str | None = None, seed: int | None = None, confidence: float | None = None,
             base_dir: str | None = None) -> RaceSummary:
    """Start or resume the race ``name``."""
    options = options or RunOptions()
    existing = store.get_batch(name).race_options if store.has_batch(name) else None
    if store.has_batch(name) and existing is None:
        raise ConflictError(f"'{name}' is a batch, not a race")
    race_opts = _race_options(existing, instance_param, performance_param, seed, confidence)
    batch, tree, is_new = prepare_batch(store, name, "race", tree_text, executable, options, race_opts)
    split = split_configs(expand(tree, base_dir), race_opts.instance_param)
    for full in split.grid.values():
        command_args(full)
    k = len(split.configs)

    if is_new:
        order = shuffle_instances(split.instances, race_opts.seed)
        batch.race_state = RaceState(
            surviving=list(range(k)),
            instance_order=[s.text for s in order],
            configs=split.configs,
        )
        batch.total = k * len(split.instances) * batch.repetitions
        store.create_batch(batch)
        log.info("started race '%s': %d configurations, %d instances, %d repetitions",
                 name, k, len(split.instances), batch.repetitions)
    state = batch.race_state
    if [c.key() for c in state.configs] != [c.key() for c in split.configs]:
        raise ConflictError(f"the configurations of race '{name}' no longer match its experiment file")
    inst_index = {s.text: i for i, s in enumerate(split.instances)}
    try:
        blocks = [(inst_index[t], rep) for t in state.instance_order for rep in range(batch.repetitions)]
    except KeyError as exc:
        raise ConflictError(f"instance {exc.args[0]} of race '{name}' is no longer generated") from None

    alpha = race_opts.confidence
    parallelism = options.parallelism or default_parallelism()
    summary = RaceSummary()
    while state.block_cursor < len(blocks) and len(state.surviving) > 1:
        inst, rep = blocks[state.block_cursor]
        found = {}
        jobs = []
        for c in state.surviving:
            full = split.grid[(c, inst)]
            rec = store.find_in_batch(name, full, rep)
            if rec is not None:
                summary.skipped += 1
            elif batch.greedy and (rec := store.find_reusable(full, batch.executable, rep)) is not None:
                rec = store.adopt(rec.id, name)
                summary.reused += 1
            else:
                jobs.append((full, rep))
                continue
            found[c] = rec
        records = run_jobs(store, batch, jobs, parallelism)
        summary.executed += len(records)
        summary.failed += sum(not r.ok for r in records)
        if summary.failed:
            raise RaceError(f"{summary.failed} experiment(s) of block {state.block_cursor} failed; "
                            "fix the executable and resume the race")
        by_key = {r.config.key(): r for r in records}
        for c in state.surviving:
            if c not in found:
                found[c] = by_key[split.grid[(c, inst)].key()]

        row: list[float | None] = [None] * k
        for c in state.surviving:
            row[c] = _performance(found[c], race_opts.performance_param)
        state.performance.append(row)
        state.block_cursor += 1
        summary.blocks += 1

        if state.block_cursor >= MIN_BLOCKS:
            sub = [[r[c] for c in state.surviving] for r in state.performance]
            keep = race_survivors(sub, alpha)
            if len(keep) < len(state.surviving):
                dropped = [state.surviving[i] for i in range(len(state.surviving)) if i not in keep]
                log.info("block %d: eliminated configurations %s", state.block_cursor, dropped)
                state.surviving = [state.surviving[i] for i in keep]
        batch.race_state = state
        store.update_batch(batch)

    batch.finished = True
    batch.race_state = state
    store.update_batch(batch)
    summary.survivors = list(state.surviving)
    summary.finished = True
    log.info("race '%s' finished after %d blocks with %d survivor(s)",
             name, state.block_cursor, len(state.surviving))
    return summary


def show_winning(store: FileStore, name: str) -> list[Configuration]:
    """Surviving configurations of a race (current ones if it is still running)."""
    batch = store.get_batch(name)
    if batch.kind != "race" or batch.race_state is None:
        raise RaceError(f"'{name}' is not a race")
    state = batch.race_state
    return [state.configs[i] for i in state.surviving]
