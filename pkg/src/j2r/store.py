"""Embedded file store for batches and experiments.

A store is a directory holding ``batches.jsonl`` and ``experiments.jsonl``.
Every mutation appends one complete JSON document per line (the latest line
for a key wins); renames and deletions compact the files by rewriting them to
a temporary file and renaming it into place. A torn last line, left by a
crash mid-append, is ignored on load.
"""

from __future__ import annotations

import copy
import json
import logging
import os
import socket
import threading
import uuid
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

from .config import Configuration, config_from_doc, config_to_doc, plain_params
from .errors import ConflictError, NotFoundError, StoreError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BATCHES_FILE = "batches.jsonl"
EXPERIMENTS_FILE = "experiments.jsonl"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def hostname() -> str:
    return socket.gethostname()


@dataclass
class RaceOptions:
    instance_param: str
    performance_param: str
    seed: int = 0
    confidence: float = 0.05


@dataclass
class RaceState:
    surviving: list[int]
    instance_order: list[str]
    configs: list[Configuration]
    block_cursor: int = 0
    # one row per completed block, one column per configuration; None once eliminated
    performance: list[list[float | None]] = field(default_factory=list)

    def to_doc(self) -> dict[str, Any]:
        return {
            "surviving": list(self.surviving),
            "instance_order": list(self.instance_order),
            "configs": [config_to_doc(c) for c in self.configs],
            "block_cursor": self.block_cursor,
            "performance": [list(r) for r in self.performance],
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> RaceState:
        return cls(
            surviving=list(doc["surviving"]),
            instance_order=list(doc["instance_order"]),
            configs=[config_from_doc(c) for c in doc["configs"]],
            block_cursor=doc["block_cursor"],
            performance=[list(r) for r in doc["performance"]],
        )


@dataclass
class BatchRecord:
    name: str
    kind: str
    tree_text: str
    executable: str
    repetitions: int = 1
    greedy: bool = False
    scm_revision: str | None = None
    host: str = field(default_factory=hostname)
    created_at: str = field(default_factory=utc_now)
    updated_at: str = field(default_factory=utc_now)
    finished: bool = False
    # number of (configuration, repetition) jobs; for races, the full grid
    total: int = 0
    race_options: RaceOptions | None = None
    race_state: RaceState | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("batch", "race"):
            raise StoreError(f"unknown batch kind {self.kind!r}")
        if (self.kind == "race") != (self.race_options is not None):
            raise StoreError("race options must be present exactly for races")

    def to_doc(self) -> dict[str, Any]:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc["race_options"] = asdict(self.race_options) if self.race_options else None
        doc["race_state"] = self.race_state.to_doc() if self.race_state else None
        doc["schema_version"] = SCHEMA_VERSION
        return doc

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> BatchRecord:
        doc = dict(doc)
        doc.pop("schema_version", None)
        ro = doc.pop("race_options", None)
        rs = doc.pop("race_state", None)
        return cls(**doc, race_options=RaceOptions(**ro) if ro else None,
                   race_state=RaceState.from_doc(rs) if rs else None)


@dataclass
class ExperimentRecord:
    batch_names: list[str]
    executable: str
    config: Configuration
    repetition: int
    stats: dict[str, Any] | None
    exit_status: int
    started_at: str
    finished_at: str
    host: str = field(default_factory=hostname)
    scm_revision: str | None = None
    error: str | None = None
    id: str = field(default_factory=lambda: uuid.uuid4().hex)

    @property
    def ok(self) -> bool:
        return self.exit_status == 0 and self.stats is not None

    def to_doc(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "batch_names": list(self.batch_names),
            "executable": self.executable,
            "config": config_to_doc(self.config),
            "params": plain_params(self.config),
            "repetition": self.repetition,
            "stats": self.stats,
            "exit_status": self.exit_status,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "host": self.host,
            "scm_revision": self.scm_revision,
            "error": self.error,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> ExperimentRecord:
        return cls(
            id=doc["id"],
            batch_names=list(doc["batch_names"]),
            executable=doc["executable"],
            config=config_from_doc(doc["config"]),
            repetition=doc["repetition"],
            stats=doc["stats"],
            exit_status=doc["exit_status"],
            started_at=doc["started_at"],
            finished_at=doc["finished_at"],
            host=doc.get("host", ""),
            scm_revision=doc.get("scm_revision"),
            error=doc.get("error"),
        )


@dataclass(frozen=True)
class BatchSummary:
    name: str
    kind: str
    host: str
    finished: bool
    completed: int
    total: int

    def line(self) -> str:
        state = "finished" if self.finished else "unfinished"
        return f"{self.name}\t{self.kind}\t{self.host}\t{state}\t{self.completed}/{self.total}"


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    if not path.exists():
        return []
    raw = path.read_text(encoding="utf-8")
    if raw and not raw.endswith("\n"):
        # torn append from a crash: drop the partial line so later appends stay aligned
        log.warning("discarding torn trailing record in %s", path)
        raw = raw[: raw.rfind("\n") + 1]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(raw)
    docs = []
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line.strip():
            continue
        try:
            docs.append(json.loads(line))
        except json.JSONDecodeError:
            raise StoreError(f"{path}:{lineno}: corrupt record") from None
    return docs


class FileStore:
    """Batches and experiments persisted as JSON lines in one directory.

    Safe to share between threads of one process; every mutation goes through
    a single lock. Multi-process access is not coordinated.
    """

    def __init__(self, directory: str | os.PathLike[str]):
        self.directory = Path(directory)
        if self.directory.exists() and not self.directory.is_dir():
            raise StoreError(f"store location {self.directory} is not a directory")
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreError(f"cannot create store at {self.directory}: {exc}") from None
        if not os.access(self.directory, os.W_OK | os.X_OK):
            raise StoreError(f"store location {self.directory} is not writable")
        self._lock = threading.RLock()
        self._batches: dict[str, BatchRecord] = {}
        self._experiments: dict[str, ExperimentRecord] = {}
        # (config key, executable, repetition) -> experiment ids
        self._by_job: dict[tuple[str, str, int], list[str]] = {}
        self._load()

    # -- persistence --------------------------------------------------------

    @property
    def _batches_path(self) -> Path:
        return self.directory / BATCHES_FILE

    @property
    def _experiments_path(self) -> Path:
        return self.directory / EXPERIMENTS_FILE

    def _load(self) -> None:
        for doc in _read_jsonl(self._batches_path):
            self._batches[doc["name"]] = BatchRecord.from_doc(doc)
        for doc in _read_jsonl(self._experiments_path):
            self._index(ExperimentRecord.from_doc(doc))

    def _index(self, rec: ExperimentRecord) -> None:
        old = self._experiments.get(rec.id)
        self._experiments[rec.id] = rec
        if old is None:
            self._by_job.setdefault((rec.config.key(), rec.executable, rec.repetition), []).append(rec.id)

    def _append(self, path: Path, doc: dict[str, Any]) -> None:
        line = json.dumps(doc, separators=(",", ":")) + "\n"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def _rewrite(self, path: Path, docs: Iterable[dict[str, Any]]) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for doc in docs:
                fh.write(json.dumps(doc, separators=(",", ":")) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def _compact(self) -> None:
        self._rewrite(self._experiments_path, (r.to_doc() for r in self._experiments.values()))
        self._rewrite(self._batches_path, (b.to_doc() for b in self._batches.values()))

    def _save_batch(self, batch: BatchRecord) -> None:
        batch.updated_at = utc_now()
        self._batches[batch.name] = copy.deepcopy(batch)
        self._append(self._batches_path, batch.to_doc())

    # -- batches ------------------------------------------------------------

    def _require(self, name: str) -> BatchRecord:
        try:
            return self._batches[name]
        except KeyError:
            raise NotFoundError(f"no batch named '{name}'") from None

    def has_batch(self, name: str) -> bool:
        return name in self._batches

    def create_batch(self, batch: BatchRecord) -> None:
        with self._lock:
            if batch.name in self._batches:
                raise ConflictError(f"a batch named '{batch.name}' already exists")
            self._save_batch(batch)

    def get_batch(self, name: str) -> BatchRecord:
        with self._lock:
            return copy.deepcopy(self._require(name))

    def update_batch(self, batch: BatchRecord) -> None:
        with self._lock:
            self._require(batch.name)
            self._save_batch(batch)

    def rename_batch(self, old: str, new: str) -> None:
        with self._lock:
            batch = self._require(old)
            if new in self._batches:
                raise ConflictError(f"a batch named '{new}' already exists")
            del self._batches[old]
            batch.name = new
            batch.updated_at = utc_now()
            self._batches[new] = batch
            for rec in self._experiments.values():
                rec.batch_names = [new if n == old else n for n in rec.batch_names]
            self._compact()

    def delete_batch(self, name: str) -> None:
        with self._lock:
            self._require(name)
            del self._batches[name]
            for rec_id in list(self._experiments):
                rec = self._experiments[rec_id]
                if name in rec.batch_names:
                    rec.batch_names = [n for n in rec.batch_names if n != name]
                    if not rec.batch_names:
                        del self._experiments[rec_id]
            self._by_job = {}
            for rec_id, rec in self._experiments.items():
                self._by_job.setdefault((rec.config.key(), rec.executable, rec.repetition), []).append(rec_id)
            self._compact()

    def list_batches(self) -> list[BatchSummary]:
        with self._lock:
            return [
                BatchSummary(b.name, b.kind, b.host, b.finished, self.completed_count(b.name), b.total)
                for b in self._batches.values()
            ]

    def set_repetitions(self, name: str, repetitions: int) -> None:
        if repetitions < 1:
            raise StoreError("repetitions must be a positive integer")
        with self._lock:
            batch = copy.deepcopy(self._require(name))
            started = batch.race_state is not None and batch.race_state.block_cursor > 0
            if started and repetitions != batch.repetitions:
                raise ConflictError("the repetitions of a race cannot change once its first block has run")
            batch.total = batch.total // batch.repetitions * repetitions
            if repetitions > batch.repetitions:
                batch.finished = False
            batch.repetitions = repetitions
            self._save_batch(batch)

    def mark_unfinished(self, name: str) -> None:
        with self._lock:
            batch = copy.deepcopy(self._require(name))
            batch.finished = False
            self._save_batch(batch)

    # -- experiments --------------------------------------------------------

    def record_experiment(self, rec: ExperimentRecord) -> None:
        with self._lock:
            for n in rec.batch_names:
                self._require(n)
            self._append(self._experiments_path, rec.to_doc())
            self._index(copy.deepcopy(rec))

    def adopt(self, rec_id: str, batch_name: str) -> ExperimentRecord:
        """Add ``batch_name`` to an existing record's owners (greedy reuse)."""
        with self._lock:
            self._require(batch_name)
            rec = copy.deepcopy(self._experiments[rec_id])
            if batch_name not in rec.batch_names:
                rec.batch_names.append(batch_name)
                self._append(self._experiments_path, rec.to_doc())
                self._index(copy.deepcopy(rec))
            return rec

    def find_reusable(self, config: Configuration, executable: str, repetition: int) -> ExperimentRecord | None:
        with self._lock:
            for rec_id in self._by_job.get((config.key(), executable, repetition), []):
                rec = self._experiments.get(rec_id)
                if rec is not None and rec.ok:
                    return copy.deepcopy(rec)
            return None

    def find_in_batch(self, name: str, config: Configuration, repetition: int) -> ExperimentRecord | None:
        """A successful record of this batch for the given job, if any."""
        with self._lock:
            batch = self._require(name)
            for rec_id in self._by_job.get((config.key(), batch.executable, repetition), []):
                rec = self._experiments.get(rec_id)
                if rec is not None and rec.ok and name in rec.batch_names:
                    return copy.deepcopy(rec)
            return None

    def experiments(self, name: str) -> list[ExperimentRecord]:
        with self._lock:
            self._require(name)
            return [copy.deepcopy(r) for r in self._experiments.values() if name in r.batch_names]

    def completed_count(self, name: str) -> int:
        with self._lock:
            done = {(r.config.key(), r.repetition) for r in self._experiments.values()
                    if r.ok and name in r.batch_names}
            return len(done)

    def pending_experiments(self, name: str, configs: Iterable[Configuration]) -> list[tuple[Configuration, int]]:
        """Jobs of the batch (its configurations times its repetitions) with no successful record."""
        with self._lock:
            batch = self._require(name)
            done = {(r.config.key(), r.repetition) for r in self._experiments.values()
                    if r.ok and name in r.batch_names}
            return [(c, rep) for c in configs for rep in range(batch.repetitions)
                    if (c.key(), rep) not in done]

    # -- reporting ----------------------------------------------------------

    def dump_csv(self, name: str) -> str:
        from .expand import render_value, write_csv

        with self._lock:
            batch = copy.deepcopy(self._require(name))
            records = self.experiments(name)
        params = list(dict.fromkeys(n for r in records for n in r.config.names()))
        stat_names = list(dict.fromkeys(s for r in records for s in (r.stats or {})))
        header = params + stat_names + ["repetition", "host", "started_at", "exit_status"]
        winners: set[str] | None = None
        if batch.kind == "race":
            header.append("winning")
            state = batch.race_state
            winners = set() if state is None else {state.configs[i].key() for i in state.surviving}
        rows = []
        for r in records:
            cells = {}
            for n, v in r.config:
                text = render_value(n, v)
                cells[n] = "true" if text is None else text
            row = [cells.get(p, "") for p in params]
            row += [_stat_cell((r.stats or {}).get(s)) for s in stat_names]
            row += [str(r.repetition), r.host, r.started_at, str(r.exit_status)]
            if winners is not None:
                key = r.config.without(batch.race_options.instance_param).key()
                row.append("true" if key in winners else "false")
            rows.append(row)
        return write_csv(header, rows)


def _stat_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (dict, list)):
        return json.dumps(v)
    return str(v)


def open_store(locator: str | os.PathLike[str]) -> FileStore:
    return FileStore(locator)
