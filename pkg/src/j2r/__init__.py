"""j2r: describe experiments as JSON parameter trees, run them, race them."""

from .config import FLAG, Configuration, Flag, Interval, Scalar
from .expand import expand, format_cll, format_csv, leaf_values
from .store import open_store
from .tree import ParamTree, dump_experiment, parse_experiment, validate

__all__ = [
    "FLAG",
    "Configuration",
    "Flag",
    "Interval",
    "ParamTree",
    "Scalar",
    "dump_experiment",
    "expand",
    "format_cll",
    "format_csv",
    "leaf_values",
    "open_store",
    "parse_experiment",
    "validate",
]
