"""Turn a parameter tree into its ordered stream of configurations.

``and`` nodes take the Cartesian product of their descendants (leftmost
descendant varying slowest), ``or`` nodes concatenate them. The product itself
is streamed; only the factor lists, and the lists of nodes that carry
post-processors, are materialized.
"""

from __future__ import annotations

import csv
import io
import itertools
import os
from decimal import Decimal
from typing import Iterable, Iterator

from .config import FLAG, Configuration, Flag, Interval, ParamValue, Scalar
from .errors import ExpansionError, RenderError
from .postproc import apply_postprocessors
from .tree import (
    ContinuousLeaf,
    DiscreteLeaf,
    ExplicitValues,
    FileLeaf,
    FlagLeaf,
    InnerNode,
    Leaf,
    Literal,
    Node,
    Number,
    ParamTree,
    name_matches,
)


def _literal_value(lit: Literal) -> Scalar:
    if isinstance(lit, Number):
        return Scalar(lit.value, lit.text)
    if isinstance(lit, bool):
        return Scalar(lit, "true" if lit else "false")
    return Scalar(lit, lit)


def _resolve(path: str, base_dir: str | None) -> str:
    return path if base_dir is None else os.path.join(base_dir, path)


def leaf_values(leaf: Leaf, base_dir: str | None = None) -> list[ParamValue]:
    """Values of a single leaf, in generation order.

    Relative file and directory paths are read relative to ``base_dir``
    (the working directory when omitted).
    """
    if isinstance(leaf, FlagLeaf):
        return [FLAG]
    if isinstance(leaf, ContinuousLeaf):
        return [Interval(float(leaf.min), float(leaf.max))]
    if isinstance(leaf, DiscreteLeaf):
        if isinstance(leaf.values, ExplicitValues):
            return [_literal_value(v) for v in leaf.values.values]
        # exact decimal stepping keeps 0.1 + 2*0.1 printing as 0.3
        lo, hi, step = (Decimal(n.text) for n in (leaf.values.min, leaf.values.max, leaf.values.step))
        limit = hi + step * Decimal("1e-9")
        values: list[ParamValue] = []
        i = 0
        while lo + i * step <= limit:
            values.append(Scalar.from_float(float(lo + i * step)))
            i += 1
        return values
    if isinstance(leaf, FileLeaf):
        try:
            with open(_resolve(leaf.path, base_dir), encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise ExpansionError(f"cannot read file '{leaf.path}' for parameter '{leaf.name}': {exc}") from None
        found = [Scalar(line, line) for line in lines if name_matches(leaf.match, line)]
    else:
        try:
            entries = sorted(os.listdir(_resolve(leaf.path, base_dir)))
        except OSError as exc:
            raise ExpansionError(
                f"cannot list directory '{leaf.path}' for parameter '{leaf.name}': {exc}") from None
        found = [Scalar(p, p) for p in (os.path.join(leaf.path, e) for e in entries if name_matches(leaf.match, e))]
    if not found:
        raise ExpansionError(f"parameter '{leaf.name}': nothing in '{leaf.path}' matches {leaf.match!r}")
    return list(found)


def _merge(parts: tuple[Configuration, ...], where: str) -> Configuration:
    params = tuple(itertools.chain.from_iterable(p.params for p in parts))
    names = [n for n, _ in params]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise ExpansionError(f"{where}: parameter(s) {dup} produced twice in one configuration")
    return Configuration(params)


def _expand(node: Node, where: str, base_dir: str | None) -> Iterator[Configuration]:
    if not isinstance(node, InnerNode):
        for v in leaf_values(node, base_dir):
            yield Configuration(((node.name, v),))
        return
    children = [_expand(c, f"{where}.descendants[{i}]", base_dir) for i, c in enumerate(node.descendants)]
    if node.kind == "and":
        stream: Iterable[Configuration] = (
            _merge(parts, where) for parts in itertools.product(*(list(c) for c in children)))
    else:
        stream = itertools.chain.from_iterable(children)
    if node.postprocessors:
        stream = apply_postprocessors(node.postprocessors, list(stream), where)
    yield from stream


def expand(tree: ParamTree | Node, base_dir: str | None = None) -> Iterator[Configuration]:
    root = tree.root if isinstance(tree, ParamTree) else tree
    return _expand(root, "root", base_dir)


def render_value(name: str, v: ParamValue) -> str | None:
    if isinstance(v, Interval):
        raise RenderError(f"parameter '{name}' is an unsampled continuous interval [{v.min}, {v.max}]")
    if isinstance(v, Flag):
        return None
    return v.text


def command_args(config: Configuration) -> list[str]:
    """The configuration as separate process arguments."""
    args: list[str] = []
    for name, v in config:
        args.append(f"--{name}")
        text = render_value(name, v)
        if text is not None:
            args.append(text)
    return args


def format_cll(config: Configuration) -> str:
    return " ".join(command_args(config))


def csv_table(configs: Iterable[Configuration]) -> tuple[list[str], list[list[str]]]:
    configs = list(configs)
    header = list(dict.fromkeys(n for c in configs for n in c.names()))
    rows = []
    for c in configs:
        cells = {}
        for name, v in c:
            text = render_value(name, v)
            cells[name] = "true" if text is None else text
        rows.append([cells.get(h, "") for h in header])
    return header, rows


def write_csv(header: list[str], rows: Iterable[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def format_csv(configs: Iterable[Configuration]) -> str:
    return write_csv(*csv_table(configs))
