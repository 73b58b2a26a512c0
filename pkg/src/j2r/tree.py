"""Typed parameter trees parsed from JSON experiment files.

An experiment file is a tree of JSON objects, each carrying at least a
``type`` field. Inner nodes (``and``/``or``) combine their descendants and may
carry an ordered list of post-processors; leaves generate the values of a
single parameter. Fields that are not part of a node's schema (``comment``
and the like) are ignored.
"""

from __future__ import annotations

import functools
import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Union

from .errors import ExperimentSyntaxError, StructureError


@dataclass(frozen=True)
class Number:
    """A JSON number together with the text it was written as."""

    value: int | float
    text: str

    def __float__(self) -> float:
        return float(self.value)


Literal = Union[str, bool, Number]


# -- leaves -----------------------------------------------------------------

@dataclass(frozen=True)
class ExplicitValues:
    values: tuple[Literal, ...]


@dataclass(frozen=True)
class ImplicitRange:
    min: Number
    max: Number
    step: Number


@dataclass(frozen=True)
class DiscreteLeaf:
    name: str
    values: ExplicitValues | ImplicitRange


@dataclass(frozen=True)
class ContinuousLeaf:
    name: str
    min: Number
    max: Number


@dataclass(frozen=True)
class FileLeaf:
    name: str
    path: str
    match: str


@dataclass(frozen=True)
class DirectoryLeaf:
    name: str
    path: str
    match: str


@dataclass(frozen=True)
class FlagLeaf:
    name: str


# -- post-processors --------------------------------------------------------

@dataclass(frozen=True)
class ExpressionPP:
    match: str
    result: str
    expression: str | None = None
    min: str | None = None
    max: str | None = None

    @property
    def continuous(self) -> bool:
        return self.expression is None


@dataclass(frozen=True)
class IgnorePP:
    match: str


@dataclass(frozen=True)
class SortingPP:
    order: tuple[str, ...]


@dataclass(frozen=True)
class HammersleyPP:
    points: int


@dataclass(frozen=True)
class RoundingPP:
    # (pattern, decimal digits) pairs, applied in order
    rules: tuple[tuple[str, int], ...]
    force_precision: bool = False
    compact: bool = False


@dataclass(frozen=True)
class RenamingPP:
    rename: tuple[tuple[str, str], ...]


PostProcessorSpec = Union[ExpressionPP, IgnorePP, SortingPP, HammersleyPP, RoundingPP, RenamingPP]


@dataclass(frozen=True)
class InnerNode:
    kind: str
    descendants: tuple[Node, ...]
    postprocessors: tuple[PostProcessorSpec, ...] = ()


Leaf = Union[DiscreteLeaf, ContinuousLeaf, FileLeaf, DirectoryLeaf, FlagLeaf]
Node = Union[InnerNode, Leaf]


@dataclass(frozen=True)
class ParamTree:
    root: Node

    def walk(self) -> Iterator[tuple[str, Node]]:
        yield from _walk(self.root, "root")


def _walk(node: Node, path: str) -> Iterator[tuple[str, Node]]:
    yield path, node
    if isinstance(node, InnerNode):
        for i, child in enumerate(node.descendants):
            yield from _walk(child, f"{path}.descendants[{i}]")


# -- regular expressions ----------------------------------------------------

@functools.lru_cache(maxsize=512)
def compile_pattern(pattern: str) -> re.Pattern[str]:
    return re.compile(pattern)


def name_matches(pattern: str, name: str) -> bool:
    """Patterns always match the whole parameter name."""
    return compile_pattern(pattern).fullmatch(name) is not None


# -- parsing ----------------------------------------------------------------

def _reject_constant(text: str) -> Any:
    raise ValueError(f"{text} is not allowed in experiment files")


def load_json(text: str) -> Any:
    """Decode JSON keeping the source text of every number."""
    try:
        return json.loads(
            text,
            parse_int=lambda s: Number(int(s), s),
            parse_float=lambda s: Number(float(s), s),
            parse_constant=_reject_constant,
        )
    except json.JSONDecodeError as exc:
        raise ExperimentSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    except ValueError as exc:
        raise ExperimentSyntaxError(str(exc), 1, 1) from None


def parse_experiment(text: str) -> ParamTree:
    data = load_json(text)
    if not isinstance(data, dict):
        raise StructureError("root", "the experiment file must contain a JSON object")
    return ParamTree(_parse_node(data, "root"))


def read_experiment(path: str) -> tuple[str, ParamTree]:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return text, parse_experiment(text)


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise StructureError(path, f"missing mandatory field '{key}'")
    return obj[key]


def _string(obj: dict, key: str, path: str) -> str:
    value = _require(obj, key, path)
    if not isinstance(value, str):
        raise StructureError(path, f"field '{key}' must be a string")
    return value


def _identifier(obj: dict, key: str, path: str) -> str:
    value = _string(obj, key, path)
    if not value or any(c.isspace() for c in value):
        raise StructureError(path, f"field '{key}' must be a non-empty name without whitespace")
    return value


def _number(value: Any, path: str, what: str) -> Number:
    if not isinstance(value, Number):
        raise StructureError(path, f"{what} must be a number")
    return value


def _parse_node(obj: Any, path: str) -> Node:
    if not isinstance(obj, dict):
        raise StructureError(path, "every node must be a JSON object")
    kind = _require(obj, "type", path)
    if kind in ("and", "or"):
        children = _require(obj, "descendants", path)
        if not isinstance(children, list) or not children:
            raise StructureError(path, "field 'descendants' must be a non-empty array")
        descendants = tuple(_parse_node(c, f"{path}.descendants[{i}]") for i, c in enumerate(children))
        raw_pps = obj.get("postprocessors", [])
        if not isinstance(raw_pps, list):
            raise StructureError(path, "field 'postprocessors' must be an array")
        pps = tuple(_parse_pp(p, f"{path}.postprocessors[{i}]") for i, p in enumerate(raw_pps))
        return InnerNode(kind, descendants, pps)
    if kind == "discrete":
        name = _identifier(obj, "name", path)
        values = _require(obj, "values", path)
        if isinstance(values, list):
            if not values:
                raise StructureError(path, "field 'values' must not be empty")
            for v in values:
                if not isinstance(v, (str, bool, Number)):
                    raise StructureError(path, "explicit values must be numbers, strings or booleans")
            return DiscreteLeaf(name, ExplicitValues(tuple(values)))
        if isinstance(values, dict):
            lo = _number(_require(values, "min", path), path, "'min'")
            hi = _number(_require(values, "max", path), path, "'max'")
            step = _number(_require(values, "step", path), path, "'step'")
            if step.value <= 0:
                raise StructureError(path, "'step' must be positive")
            if lo.value > hi.value:
                raise StructureError(path, "'min' must not exceed 'max'")
            return DiscreteLeaf(name, ImplicitRange(lo, hi, step))
        raise StructureError(path, "field 'values' must be an array or an object")
    if kind == "continuous":
        name = _identifier(obj, "name", path)
        values = _require(obj, "values", path)
        if not isinstance(values, dict):
            raise StructureError(path, "field 'values' must be an object with 'min' and 'max'")
        lo = _number(_require(values, "min", path), path, "'min'")
        hi = _number(_require(values, "max", path), path, "'max'")
        if not lo.value < hi.value:
            raise StructureError(path, "'min' must be strictly lower than 'max'")
        return ContinuousLeaf(name, lo, hi)
    if kind in ("file", "directory"):
        name = _identifier(obj, "name", path)
        leaf_cls = FileLeaf if kind == "file" else DirectoryLeaf
        return leaf_cls(name, _string(obj, "path", path), _string(obj, "match", path))
    if kind == "flag":
        return FlagLeaf(_identifier(obj, "name", path))
    raise StructureError(path, f"unknown node type {kind!r}")


def _formula(obj: dict, key: str, path: str) -> str:
    value = obj[key]
    if isinstance(value, Number):
        return value.text
    if not isinstance(value, str):
        raise StructureError(path, f"field '{key}' must be an expression string")
    return value


def _digits(value: Any, path: str) -> int:
    if not isinstance(value, Number) or not isinstance(value.value, int) or value.value < 0:
        raise StructureError(path, "decimal digits must be a non-negative integer")
    return value.value


def _parse_pp(obj: Any, path: str) -> PostProcessorSpec:
    if not isinstance(obj, dict):
        raise StructureError(path, "every post-processor must be a JSON object")
    kind = _require(obj, "type", path)
    if kind == "expression":
        match = _string(obj, "match", path)
        result = _identifier(obj, "result", path)
        has_expr = "expression" in obj
        has_bounds = "min" in obj or "max" in obj
        if has_expr == has_bounds:
            raise StructureError(path, "an expression needs either 'expression' or both 'min' and 'max'")
        if has_expr:
            return ExpressionPP(match, result, expression=_formula(obj, "expression", path))
        if "min" not in obj or "max" not in obj:
            raise StructureError(path, "a continuous expression needs both 'min' and 'max'")
        return ExpressionPP(match, result, min=_formula(obj, "min", path), max=_formula(obj, "max", path))
    if kind == "ignore":
        return IgnorePP(_string(obj, "match", path))
    if kind == "sorting":
        order = _require(obj, "order", path)
        if not isinstance(order, list) or not all(isinstance(o, str) for o in order):
            raise StructureError(path, "field 'order' must be an array of names")
        return SortingPP(tuple(order))
    if kind == "hammersley":
        points = _require(obj, "points", path)
        if not isinstance(points, Number) or not isinstance(points.value, int) or points.value < 1:
            raise StructureError(path, "field 'points' must be a positive integer")
        return HammersleyPP(points.value)
    if kind in ("rounding", "round"):
        force = obj.get("force_precision", False)
        if not isinstance(force, bool):
            raise StructureError(path, "field 'force_precision' must be true or false")
        if "round" in obj:
            return RoundingPP(_compact_rules(obj["round"], path), force, compact=True)
        match = _string(obj, "match", path)
        digits = _digits(_require(obj, "decimal_digits", path), path)
        return RoundingPP(((match, digits),), force)
    if kind == "renaming":
        mapping = _require(obj, "rename", path)
        if not isinstance(mapping, dict) or not all(isinstance(v, str) for v in mapping.values()):
            raise StructureError(path, "field 'rename' must be an object mapping names to names")
        return RenamingPP(tuple(mapping.items()))
    raise StructureError(path, f"unknown post-processor type {kind!r}")


def _compact_rules(raw: Any, path: str) -> tuple[tuple[str, int], ...]:
    # accepted shapes: {"re": n, ...}, [{"re": n}, ...], [["re", n], ...]
    pairs: list[tuple[Any, Any]] = []
    if isinstance(raw, dict):
        pairs = list(raw.items())
    elif isinstance(raw, list):
        for item in raw:
            if isinstance(item, dict):
                pairs.extend(item.items())
            elif isinstance(item, list) and len(item) == 2:
                pairs.append((item[0], item[1]))
            else:
                raise StructureError(path, "entries of 'round' must be {pattern: digits} objects")
    else:
        raise StructureError(path, "field 'round' must map patterns to decimal digits")
    rules = []
    for pattern, digits in pairs:
        if not isinstance(pattern, str):
            raise StructureError(path, "rounding patterns must be strings")
        rules.append((pattern, _digits(digits, path)))
    return tuple(rules)


# -- serialization ----------------------------------------------------------

def _node_data(node: Node) -> dict:
    if isinstance(node, InnerNode):
        data: dict[str, Any] = {"type": node.kind, "descendants": [_node_data(d) for d in node.descendants]}
        if node.postprocessors:
            data["postprocessors"] = [_pp_data(p) for p in node.postprocessors]
        return data
    if isinstance(node, DiscreteLeaf):
        if isinstance(node.values, ExplicitValues):
            values: Any = list(node.values.values)
        else:
            values = {"min": node.values.min, "max": node.values.max, "step": node.values.step}
        return {"type": "discrete", "name": node.name, "values": values}
    if isinstance(node, ContinuousLeaf):
        return {"type": "continuous", "name": node.name, "values": {"min": node.min, "max": node.max}}
    if isinstance(node, FileLeaf):
        return {"type": "file", "name": node.name, "path": node.path, "match": node.match}
    if isinstance(node, DirectoryLeaf):
        return {"type": "directory", "name": node.name, "path": node.path, "match": node.match}
    return {"type": "flag", "name": node.name}


def _pp_data(pp: PostProcessorSpec) -> dict:
    if isinstance(pp, ExpressionPP):
        data = {"type": "expression", "match": pp.match, "result": pp.result}
        if pp.expression is not None:
            data["expression"] = pp.expression
        else:
            data["min"], data["max"] = pp.min, pp.max
        return data
    if isinstance(pp, IgnorePP):
        return {"type": "ignore", "match": pp.match}
    if isinstance(pp, SortingPP):
        return {"type": "sorting", "order": list(pp.order)}
    if isinstance(pp, HammersleyPP):
        return {"type": "hammersley", "points": pp.points}
    if isinstance(pp, RoundingPP):
        data = {"type": "rounding"}
        if pp.compact:
            data["round"] = [{p: d} for p, d in pp.rules]
        else:
            data["match"], data["decimal_digits"] = pp.rules[0]
        if pp.force_precision:
            data["force_precision"] = True
        return data
    return {"type": "renaming", "rename": dict(pp.rename)}


def _emit(obj: Any, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, Number):
        return obj.text
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_emit(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_emit(v, indent) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _emit(v, indent + 1) for v in obj) + "\n" + pad + "]"
    return json.dumps(obj)


def dump_experiment(tree: ParamTree) -> str:
    """Serialize a tree back to experiment-file JSON, numbers written as in the source."""
    return _emit(_node_data(tree.root), 0) + "\n"


# -- validation -------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]


# abstract parameter states tracked by validate()
_REALIZED = "realized"
_CONT_LEAF = "continuous-leaf"
_CONT_EXPR = "continuous-expression"


def _check_pattern(pattern: str, path: str, report: ValidationReport) -> bool:
    try:
        compile_pattern(pattern)
    except re.error as exc:
        report.violations.append(Violation("invalid-regex", path, f"invalid regular expression {pattern!r}: {exc}"))
        return False
    return True


def validate(tree: ParamTree) -> ValidationReport:
    """Static checks that would otherwise only surface mid-expansion (or never).

    The tree is interpreted abstractly: every node yields the set of parameter
    names it can produce, each tagged as realized or still an unsampled
    continuous interval.
    """
    report = ValidationReport()
    leftover = _signature(tree.root, "root", report)
    for name, (state, origin) in leftover.items():
        if state == _CONT_LEAF:
            report.violations.append(Violation(
                "continuous-without-hammersley", origin,
                f"continuous parameter '{name}' is never sampled by a hammersley post-processor"))
        elif state == _CONT_EXPR:
            report.violations.append(Violation(
                "unconsumed-continuous-expression", origin,
                f"continuous result '{name}' is never sampled by a later hammersley post-processor"))
    return report


def _signature(node: Node, path: str, report: ValidationReport) -> dict[str, tuple[str, str]]:
    if isinstance(node, ContinuousLeaf):
        return {node.name: (_CONT_LEAF, path)}
    if isinstance(node, (FileLeaf, DirectoryLeaf)):
        _check_pattern(node.match, path, report)
        return {node.name: (_REALIZED, path)}
    if not isinstance(node, InnerNode):
        return {node.name: (_REALIZED, path)}

    sig: dict[str, tuple[str, str]] = {}
    seen_in: dict[str, int] = {}
    for i, child in enumerate(node.descendants):
        child_sig = _signature(child, f"{path}.descendants[{i}]", report)
        for name, entry in child_sig.items():
            if node.kind == "and" and name in seen_in:
                report.violations.append(Violation(
                    "duplicate-name", path,
                    f"parameter '{name}' is produced by descendants {seen_in[name]} and {i} of the same 'and'"))
            seen_in.setdefault(name, i)
            # an unsampled continuous state dominates a realized one
            if name not in sig or sig[name][0] == _REALIZED:
                sig[name] = entry

    for i, pp in enumerate(node.postprocessors):
        pp_path = f"{path}.postprocessors[{i}]"
        if isinstance(pp, ExpressionPP):
            if _check_pattern(pp.match, pp_path, report):
                sig[pp.result] = (_CONT_EXPR if pp.continuous else _REALIZED, pp_path)
        elif isinstance(pp, IgnorePP):
            if _check_pattern(pp.match, pp_path, report):
                sig = {n: e for n, e in sig.items() if not name_matches(pp.match, n)}
        elif isinstance(pp, HammersleyPP):
            sig = {n: (_REALIZED, o) for n, (s, o) in sig.items()}
        elif isinstance(pp, RoundingPP):
            for pattern, _ in pp.rules:
                if not _check_pattern(pattern, pp_path, report):
                    continue
                hit = [sig[n][0] for n in sig if name_matches(pattern, n)]
                if hit and all(s != _REALIZED for s in hit):
                    report.violations.append(Violation(
                        "rounding-before-sampling", pp_path,
                        f"pattern {pattern!r} only matches unsampled continuous parameters; "
                        "place rounding after hammersley"))
        elif isinstance(pp, RenamingPP):
            mapping = dict(pp.rename)
            sig = {mapping.get(n, n): e for n, e in sig.items()}
    return sig
