from __future__ import annotations

import json
import logging
import stat
import sys
import textwrap
from pathlib import Path

import pytest

from j2r.store import open_store

# Experiment files quoted from the documentation of the tool.
INTRO_TREE = """
{
    "type": "and",
    "descendants": [
        {
            "type": "discrete",
            "name": "a",
            "values": [ "foo", "bar", "baz" ]
        },
        {
            "type": "or",
            "descendants": [
                {
                    "type": "discrete",
                    "name": "b1",
                    "values": { "min": 0.0, "max": 1.0, "step": 0.25 }
                },
                {
                    "type": "discrete",
                    "name": "b2",
                    "values": { "min": 2.0, "max": 10.0, "step": 2.0 }
                }
            ]
        }
    ]
}
"""

SA_TREE = """
{
    "type": "and",
    "descendants": [
        {
            "type": "discrete",
            "name": "initial_temperature",
            "values": { "min": 10, "max": 30, "step": 10 }
        },
        {
            "type": "discrete",
            "name": "cooling_schedule",
            "values": [ 0.999, 0.99, 0.9 ]
        }
    ]
}
"""

SA_TS_TREE = """
{
    "type": "or",
    "descendants": [
        {
            "type": "and",
            "descendants": [
                { "type": "discrete", "name": "algorithm", "values": [ "sa" ] },
                { "type": "discrete", "name": "initial_temperature", "values": { "min": 10, "max": 20, "step": 10 } },
                { "type": "discrete", "name": "cooling_schedule", "values": [ 0.999, 0.99 ] }
            ]
        },
        {
            "type": "and",
            "descendants": [
                { "type": "discrete", "name": "algorithm", "values": [ "ts" ] },
                { "type": "discrete", "name": "tabu_list_length", "values": [ 10, 15, 20 ] }
            ]
        }
    ]
}
"""

# Parses "--name value" / bare "--flag" arguments; shared by the fake solvers.
_ARGS = """
import json, os, sys, time
def _args():
    out, argv, i = {}, sys.argv[1:], 0
    while i < len(argv):
        name = argv[i][2:]
        if i + 1 < len(argv) and not argv[i + 1].startswith("--"):
            out[name] = argv[i + 1]; i += 2
        else:
            out[name] = True; i += 1
    return out
args = _args()
"""


@pytest.fixture
def make_exe(tmp_path: Path):
    """Write an executable Python script whose body sees the parsed ``args`` dict."""
    counter = iter(range(1000))

    def make(body: str, name: str | None = None) -> str:
        path = tmp_path / (name or f"solver{next(counter)}")
        path.write_text(f"#!{sys.executable}\n" + _ARGS + textwrap.dedent(body))
        path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
        return str(path)

    return make


@pytest.fixture
def store(tmp_path: Path):
    return open_store(tmp_path / "store")


@pytest.fixture
def write(tmp_path: Path):
    def write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


@pytest.fixture
def store_env(tmp_path: Path, monkeypatch):
    location = tmp_path / "cli-store"
    monkeypatch.setenv("J2R_STORE_DIR", str(location))
    return location


# Synthetic race solver: cost = bias + effect(instance); lower is better.
RACE_SOLVER = """
instance = os.path.basename(args["instance"])
effect = (int(instance[1:]) * 37) % 23
print(json.dumps({"cost": float(args["bias"]) + effect, "effect": effect}))
"""


def race_tree(biases=(0, 10, 20)) -> str:
    return json.dumps({"type": "and", "descendants": [
        {"type": "directory", "name": "instance", "path": "instances", "match": r"i\d+"},
        {"type": "discrete", "name": "bias", "values": list(biases)},
    ]})


@pytest.fixture
def instances(tmp_path: Path):
    """Create ``count`` empty instance files under ``instances/`` in the working directory."""
    def make(count: int = 20) -> Path:
        d = tmp_path / "instances"
        d.mkdir(exist_ok=True)
        for i in range(count):
            (d / f"i{i:02d}").write_text("")
        return d

    return make


# -- acceptance report ------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _isolate_cwd(tmp_path: Path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("J2R_STORE_DIR", raising=False)


@pytest.fixture(autouse=True)
def _restore_logging():
    # cli.main() installs its own handler on the package logger
    logger = logging.getLogger("j2r")
    saved = (list(logger.handlers), logger.propagate, logger.level)
    yield
    for h in logger.handlers:
        if h not in saved[0]:
            h.close()
    logger.handlers[:], logger.propagate, logger.level = saved
