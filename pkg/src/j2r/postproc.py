"""Post-processors: whole-list transformations attached to inner nodes.

Each processor receives every configuration generated by its node and returns
the replacement list. They run in declaration order, so an ``ignore`` that
drops the operands of an ``expression`` must come after it.
"""

from __future__ import annotations

import functools
from typing import Sequence

from . import lowdisc
from .config import Configuration, Flag, Interval, ParamValue, Scalar
from .errors import ExpressionError, J2RError, PostProcessorError, UnboundOperandError
from .expr import eval_expr, parse_expression, quantize
from .tree import (
    ExpressionPP,
    HammersleyPP,
    IgnorePP,
    PostProcessorSpec,
    RenamingPP,
    RoundingPP,
    SortingPP,
    name_matches,
)


def apply_postprocessors(specs: Sequence[PostProcessorSpec], configs: list[Configuration],
                         where: str = "node") -> list[Configuration]:
    for i, spec in enumerate(specs):
        handler = _HANDLERS[type(spec)]
        try:
            configs = handler(spec, configs)
        except J2RError as exc:
            label = type(spec).__name__.removesuffix("PP").lower()
            raise PostProcessorError(f"{where}.postprocessors[{i}] ({label}): {exc}") from exc
    return configs


def _replace_or_append(config: Configuration, name: str, value: ParamValue) -> Configuration:
    if name in config:
        return Configuration(tuple((n, value if n == name else v) for n, v in config))
    return Configuration(config.params + ((name, value),))


@functools.lru_cache(maxsize=256)
def _parsed(text: str):
    return parse_expression(text)


def pp_expression(spec: ExpressionPP, configs: list[Configuration]) -> list[Configuration]:
    out = []
    for config in configs:
        bindings = {}
        for n, v in config:
            if name_matches(spec.match, n):
                bindings[n] = v.value if isinstance(v, Scalar) else v
        try:
            if spec.expression is not None:
                value: ParamValue = Scalar.from_float(eval_expr(_parsed(spec.expression), bindings))
            else:
                lo = eval_expr(_parsed(spec.min), bindings)
                hi = eval_expr(_parsed(spec.max), bindings)
        except UnboundOperandError as exc:
            raise UnboundOperandError(
                f"{exc}; an ignore that discards expression operands must come after the expression") from None
        if spec.expression is None:
            if not lo < hi:
                raise ExpressionError(f"interval for '{spec.result}' is empty: min {lo!r} >= max {hi!r}")
            value = Interval(lo, hi)
        out.append(_replace_or_append(config, spec.result, value))
    return out


def pp_ignore(spec: IgnorePP, configs: list[Configuration]) -> list[Configuration]:
    return [Configuration(tuple((n, v) for n, v in c if not name_matches(spec.match, n))) for c in configs]


def pp_sorting(spec: SortingPP, configs: list[Configuration]) -> list[Configuration]:
    out = []
    for config in configs:
        values = dict(config.params)
        head = [(n, values[n]) for n in dict.fromkeys(spec.order) if n in values]
        picked = {n for n, _ in head}
        out.append(Configuration(tuple(head) + tuple((n, v) for n, v in config if n not in picked)))
    return out


def pp_hammersley(spec: HammersleyPP, configs: list[Configuration]) -> list[Configuration]:
    out = []
    expected: set[str] | None = None
    for config in configs:
        continuous = [(n, v) for n, v in config if isinstance(v, Interval)]
        if not continuous:
            raise PostProcessorError(f"configuration {config.names()} has no continuous parameter to sample")
        names = {n for n, _ in continuous}
        if expected is None:
            expected = names
        elif names != expected:
            raise PostProcessorError(
                f"inconsistent continuous parameters: {sorted(names)} vs {sorted(expected)}")
        box = [(v.min, v.max) for _, v in continuous]
        for point in lowdisc.hammersley_set(spec.points, len(box)):
            sampled = iter(lowdisc.scale_point(point, box))
            out.append(Configuration(tuple(
                (n, Scalar.from_float(next(sampled)) if isinstance(v, Interval) else v) for n, v in config)))
    return out


def _round_value(name: str, v: ParamValue, digits: int, force: bool) -> ParamValue:
    if isinstance(v, Interval):
        raise PostProcessorError(
            f"parameter '{name}' is an unsampled continuous interval; place rounding after hammersley")
    if isinstance(v, Flag) or not v.is_number:
        raise PostProcessorError(f"parameter '{name}' is not numeric and cannot be rounded")
    if isinstance(v.value, int) and not force:
        return v
    q = quantize(v.value, digits)
    # force_precision pins the printed decimals, e.g. 0.5 -> "0.500"
    text = f"{q:f}" if force else repr(float(q))
    return Scalar(float(q), text)


def pp_rounding(spec: RoundingPP, configs: list[Configuration]) -> list[Configuration]:
    for pattern, digits in spec.rules:
        configs = [
            Configuration(tuple(
                (n, _round_value(n, v, digits, spec.force_precision) if name_matches(pattern, n) else v)
                for n, v in config))
            for config in configs
        ]
    return configs


def pp_renaming(spec: RenamingPP, configs: list[Configuration]) -> list[Configuration]:
    mapping = dict(spec.rename)
    out = []
    for config in configs:
        renamed = [(mapping.get(n, n), v) for n, v in config]
        names = [n for n, _ in renamed]
        if len(set(names)) != len(names):
            clash = sorted({n for n in names if names.count(n) > 1})
            raise PostProcessorError(f"renaming collides with existing parameter(s) {clash}")
        out.append(Configuration(tuple(renamed)))
    return out


_HANDLERS = {
    ExpressionPP: pp_expression,
    IgnorePP: pp_ignore,
    SortingPP: pp_sorting,
    HammersleyPP: pp_hammersley,
    RoundingPP: pp_rounding,
    RenamingPP: pp_renaming,
}
