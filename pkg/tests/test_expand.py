import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import INTRO_TREE, SA_TREE, SA_TS_TREE
from j2r.config import FLAG, Configuration, Interval, Scalar
from j2r.errors import ExpansionError, PostProcessorError, RenderError
from j2r.expand import expand, format_cll, format_csv, leaf_values
from j2r.tree import parse_experiment


def leaf(doc: dict):
    return parse_experiment(json.dumps(doc)).root


def texts(values):
    return [v.text for v in values]


def cll(text: str, base_dir=None) -> list[str]:
    return [format_cll(c) for c in expand(parse_experiment(text), base_dir)]


def test_implicit_range_renders_as_float():
    values = leaf_values(leaf({"type": "discrete", "name": "t", "values": {"min": 10, "max": 30, "step": 10}}))
    assert texts(values) == ["10.0", "20.0", "30.0"]


def test_implicit_range_stops_below_unreached_max():
    values = leaf_values(leaf({"type": "discrete", "name": "x", "values": {"min": 0, "max": 1, "step": 0.4}}))
    assert [v.value for v in values] == [0.0, 0.4, 0.8]


def test_implicit_range_includes_max_despite_float_steps():
    values = leaf_values(leaf({"type": "discrete", "name": "x", "values": {"min": 0, "max": 1, "step": 0.1}}))
    assert len(values) == 11 and values[3].text == "0.3" and values[-1].text == "1.0"


def test_explicit_values_keep_source_text():
    values = leaf_values(leaf({"type": "discrete", "name": "c", "values": [0.999, 0.99, 0.9]}))
    assert texts(values) == ["0.999", "0.99", "0.9"]


def test_flag_and_continuous_leaves():
    assert leaf_values(leaf({"type": "flag", "name": "v"})) == [FLAG]
    assert leaf_values(leaf({"type": "continuous", "name": "x", "values": {"min": 0, "max": 2}})) == [Interval(0.0, 2.0)]


def test_file_leaf_filters_lines_in_order(tmp_path):
    (tmp_path / "list.txt").write_text("b.dat\nskip.txt\na.dat\n")
    values = leaf_values(leaf({"type": "file", "name": "f", "path": "list.txt", "match": r".*\.dat"}), str(tmp_path))
    assert texts(values) == ["b.dat", "a.dat"]


def test_directory_leaf_sorted_full_paths(tmp_path):
    inst = tmp_path / "inst"
    inst.mkdir()
    for n in ("c.tsp", "a.tsp", "b.txt"):
        (inst / n).write_text("")
    values = leaf_values(leaf({"type": "directory", "name": "i", "path": "inst", "match": r".*\.tsp"}), str(tmp_path))
    assert texts(values) == ["inst/a.tsp", "inst/c.tsp"]


def test_empty_match_is_an_error(tmp_path):
    (tmp_path / "list.txt").write_text("x\n")
    with pytest.raises(ExpansionError, match="'f'"):
        leaf_values(leaf({"type": "file", "name": "f", "path": "list.txt", "match": "y"}), str(tmp_path))


def test_missing_path_names_it(tmp_path):
    with pytest.raises(ExpansionError, match="nowhere"):
        leaf_values(leaf({"type": "directory", "name": "d", "path": "nowhere", "match": ".*"}), str(tmp_path))


def test_intro_listing():
    lines = cll(INTRO_TREE)
    assert len(lines) == 30
    assert lines[0] == "--a foo --b1 0.0"
    assert lines[1] == "--a foo --b1 0.25"
    assert lines[5] == "--a foo --b2 2.0"
    assert lines[-1] == "--a baz --b2 10.0"


def test_sa_listing():
    assert cll(SA_TREE) == [
        f"--initial_temperature {t} --cooling_schedule {c}"
        for t in ("10.0", "20.0", "30.0") for c in ("0.999", "0.99", "0.9")
    ]


def test_sa_ts_listing():
    assert cll(SA_TS_TREE) == [
        "--algorithm sa --initial_temperature 10.0 --cooling_schedule 0.999",
        "--algorithm sa --initial_temperature 10.0 --cooling_schedule 0.99",
        "--algorithm sa --initial_temperature 20.0 --cooling_schedule 0.999",
        "--algorithm sa --initial_temperature 20.0 --cooling_schedule 0.99",
        "--algorithm ts --tabu_list_length 10",
        "--algorithm ts --tabu_list_length 15",
        "--algorithm ts --tabu_list_length 20",
    ]


def test_single_flag():
    assert cll('{"type":"flag","name":"verbose"}') == ["--verbose"]


def test_unsampled_interval_cannot_render():
    with pytest.raises(RenderError, match="x"):
        format_cll(Configuration.of([("x", Interval(0, 1))]))


def test_csv_or_example():
    text = format_csv(expand(parse_experiment(SA_TS_TREE)))
    lines = text.splitlines()
    assert lines[0] == "algorithm,initial_temperature,cooling_schedule,tabu_list_length"
    assert lines[1] == "sa,10.0,0.999,"
    assert lines[-1] == "ts,,,20"


def test_csv_empty_and_flag():
    assert format_csv([]) == "\n"
    assert format_csv([Configuration.of([("verbose", FLAG)])]) == "verbose\ntrue\n"


def test_csv_quoting():
    out = format_csv([Configuration.of([("a", Scalar("x,y", "x,y")), ("b", Scalar('q"', 'q"'))])])
    assert out == 'a,b\n"x,y","q"""\n'


def test_postprocessor_error_carries_node_path():
    text = json.dumps({"type": "or", "descendants": [
        {"type": "and", "descendants": [{"type": "discrete", "name": "p", "values": ["s"]}],
         "postprocessors": [{"type": "expression", "match": "p", "result": "q", "expression": "p.value"}]}]})
    with pytest.raises(PostProcessorError) as exc:
        list(expand(parse_experiment(text)))
    assert "root.descendants[0].postprocessors[0]" in str(exc.value)


def test_expansion_is_lazy():
    text = json.dumps({"type": "and", "descendants": [
        {"type": "discrete", "name": f"p{i}", "values": {"min": 1, "max": 10, "step": 1}} for i in range(9)]})
    stream = expand(parse_experiment(text))
    assert format_cll(next(stream)) == " ".join(f"--p{i} 1.0" for i in range(9))


# -- properties --------------------------------------------------------------

small_leaves = st.builds(
    lambda name, n: {"type": "discrete", "name": name, "values": list(range(n))},
    st.text(alphabet="abcdefgh", min_size=1, max_size=3), st.integers(1, 4))


def _count(doc) -> int:
    return len(list(expand(parse_experiment(json.dumps(doc)))))


@settings(max_examples=60, deadline=None)
@given(small_leaves, small_leaves)
def test_and_multiplies_or_adds(a, b):
    a = dict(a, name="a_" + a["name"])
    b = dict(b, name="b_" + b["name"])
    assert _count({"type": "and", "descendants": [a, b]}) == _count(a) * _count(b)
    assert _count({"type": "or", "descendants": [a, b]}) == _count(a) + _count(b)


def test_expansion_is_deterministic():
    tree = parse_experiment(INTRO_TREE)
    assert list(expand(tree)) == list(expand(tree))
