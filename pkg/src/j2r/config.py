"""Parameter values and configurations produced by tree expansion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Union


@dataclass(frozen=True)
class Scalar:
    """A realized value; ``text`` is how it is written on a command line."""

    value: int | float | str | bool
    text: str

    @classmethod
    def from_float(cls, x: float) -> Scalar:
        x = float(x)
        return cls(x, repr(x))

    @property
    def is_number(self) -> bool:
        return isinstance(self.value, (int, float)) and not isinstance(self.value, bool)


@dataclass(frozen=True)
class Flag:
    pass


@dataclass(frozen=True)
class Interval:
    """A continuous range not yet sampled."""

    min: float
    max: float


FLAG = Flag()
ParamValue = Union[Scalar, Flag, Interval]


@dataclass(frozen=True)
class Configuration:
    params: tuple[tuple[str, ParamValue], ...] = ()

    @classmethod
    def of(cls, pairs: Iterable[tuple[str, ParamValue]]) -> Configuration:
        return cls(tuple(pairs))

    def __iter__(self) -> Iterator[tuple[str, ParamValue]]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def names(self) -> list[str]:
        return [n for n, _ in self.params]

    def get(self, name: str) -> ParamValue | None:
        for n, v in self.params:
            if n == name:
                return v
        return None

    def __contains__(self, name: object) -> bool:
        return any(n == name for n, _ in self.params)

    def without(self, name: str) -> Configuration:
        return Configuration(tuple((n, v) for n, v in self.params if n != name))

    def key(self) -> str:
        """Order-insensitive identity; numbers compare by value (10 == 10.0)."""
        items = sorted([n, *_normal(v)] for n, v in self.params)
        return json.dumps(items, separators=(",", ":"))


def _normal(v: ParamValue) -> list:
    if isinstance(v, Flag):
        return ["flag", None]
    if isinstance(v, Interval):
        return ["interval", [float(v.min), float(v.max)]]
    if isinstance(v.value, bool):
        return ["bool", v.value]
    if isinstance(v.value, str):
        return ["str", v.value]
    return ["num", float(v.value)]


def value_to_doc(v: ParamValue) -> dict[str, Any]:
    if isinstance(v, Flag):
        return {"flag": True}
    if isinstance(v, Interval):
        return {"min": v.min, "max": v.max}
    return {"value": v.value, "text": v.text}


def value_from_doc(doc: dict[str, Any]) -> ParamValue:
    if doc.get("flag"):
        return FLAG
    if "text" in doc:
        return Scalar(doc["value"], doc["text"])
    return Interval(doc["min"], doc["max"])


def config_to_doc(config: Configuration) -> list:
    return [[n, value_to_doc(v)] for n, v in config]


def config_from_doc(doc: list) -> Configuration:
    return Configuration(tuple((n, value_from_doc(v)) for n, v in doc))


def plain_params(config: Configuration) -> dict[str, Any]:
    """name -> plain JSON value, as stored alongside each experiment for querying."""
    out: dict[str, Any] = {}
    for n, v in config:
        if isinstance(v, Flag):
            out[n] = True
        elif isinstance(v, Interval):
            out[n] = [v.min, v.max]
        else:
            out[n] = v.value
    return out
