import json
import textwrap

import pytest

from conftest import RACE_SOLVER, race_tree
from j2r.config import Configuration, Scalar
from j2r.errors import ConflictError, RaceError
from j2r.expand import format_cll
from j2r.race import run_race, show_winning, shuffle_instances, split_configs
from j2r.runner import RunOptions, run_batch
from j2r.store import open_store

P1 = RunOptions(parallelism=1)


def c(**params):
    return Configuration.of((n, Scalar(v, str(v))) for n, v in params.items())


def race(store, exe, name="r", tree=None, options=P1, **kw):
    kw.setdefault("instance_param", "instance")
    kw.setdefault("performance_param", "cost")
    return run_race(store, name, tree or race_tree(), exe, options, **kw)


def test_split_product():
    stream = [c(i=f"f{n}", a=a) for a in (1, 2, 3, 4) for n in range(10)]
    split = split_configs(stream, "i")
    assert [s.text for s in split.instances] == [f"f{n}" for n in range(10)]
    assert split.configs == [c(a=a) for a in (1, 2, 3, 4)]
    assert split.grid[(2, 5)] == c(i="f5", a=3)


def test_split_missing_instance():
    with pytest.raises(RaceError, match="no value for instance"):
        split_configs([c(i="x", a=1), c(a=2)], "i")


def test_split_needs_full_product():
    with pytest.raises(RaceError, match="every configuration"):
        split_configs([c(i="x", a=1), c(i="y", a=1), c(i="x", a=2)], "i")


def test_shuffle_regression_values():
    assert shuffle_instances(list(range(10)), 0) == [7, 2, 8, 6, 4, 3, 5, 0, 9, 1]
    assert shuffle_instances(list(range(10)), 1) == [2, 3, 1, 8, 4, 6, 9, 5, 0, 7]
    assert shuffle_instances(list(range(10)), 0) == shuffle_instances(list(range(10)), 0)
    assert shuffle_instances(["only"], 5) == ["only"]
    assert sorted(shuffle_instances(list(range(50)), 2 ** 70)) == list(range(50))


def test_race_finds_best(store, make_exe, instances):
    instances(20)
    s = race(store, make_exe(RACE_SOLVER))
    assert s.finished and s.survivors == [0]
    assert s.executed < 60 and s.blocks >= 5
    assert [format_cll(x) for x in show_winning(store, "r")] == ["--bias 0"]
    state = store.get_batch("r").race_state
    assert len(state.performance) == state.block_cursor == s.blocks
    assert store.get_batch("r").finished


def twins_tree(labels=("a", "b", "c")) -> str:
    # configurations that differ only in a label the solver ignores perform identically
    tree = json.loads(race_tree((5,)))
    tree["descendants"].append({"type": "discrete", "name": "label", "values": list(labels)})
    return json.dumps(tree)


def test_identical_configs_all_survive(store, make_exe, instances):
    instances(6)
    s = race(store, make_exe(RACE_SOLVER), tree=twins_tree())
    assert s.survivors == [0, 1, 2] and s.blocks == 6 and s.executed == 18


def test_equal_values_are_one_configuration(store, make_exe, instances):
    instances(3)
    with pytest.raises(RaceError, match="appears twice"):
        race(store, make_exe(RACE_SOLVER), tree=race_tree((5, 5.0)))


def test_single_configuration_wins_immediately(store, make_exe, instances):
    instances(3)
    s = race(store, make_exe(RACE_SOLVER), tree=race_tree((7,)))
    assert s.executed == 0 and s.survivors == [0] and s.finished


def test_repetitions_multiply_blocks(store, make_exe, instances):
    instances(3)
    s = race(store, make_exe(RACE_SOLVER), tree=twins_tree(("a", "b")),
             options=RunOptions(parallelism=2, repetitions=2))
    assert s.blocks == 6 and s.executed == 12
    order = store.get_batch("r").race_state.instance_order
    reps = [(r.config.get("instance").text, r.repetition) for r in store.experiments("r")]
    assert reps[::2] == [(i, rep) for i in order for rep in (0, 1)]


def test_resume_mid_race_matches_uninterrupted(tmp_path, make_exe, instances):
    instances(20)
    counter, allow = tmp_path / "count", tmp_path / "allow"
    flaky = make_exe(textwrap.dedent(f"""
    n = int(open({str(counter)!r}).read()) + 1 if os.path.exists({str(counter)!r}) else 1
    open({str(counter)!r}, "w").write(str(n))
    if n >= 10 and not os.path.exists({str(allow)!r}):
        sys.exit(1)
    """) + RACE_SOLVER)
    store = open_store(tmp_path / "s1")
    with pytest.raises(RaceError, match="failed"):
        race(store, flaky)
    state = store.get_batch("r").race_state
    assert state.block_cursor == 3 and state.surviving == [0, 1, 2]

    allow.write_text("")
    resumed = run_race(store, "r", options=P1)
    reference = open_store(tmp_path / "s2")
    race(reference, make_exe(RACE_SOLVER))
    a, b = store.get_batch("r").race_state, reference.get_batch("r").race_state
    assert (a.surviving, a.block_cursor, a.performance) == (b.surviving, b.block_cursor, b.performance)
    assert resumed.survivors == [0]


def test_survivors_only_shrink(store, make_exe, instances, tmp_path):
    instances(20)
    exe = make_exe(RACE_SOLVER.replace('float(args["bias"])', '0.3 * float(args["bias"]) * (effect % 3)'))
    race(store, exe, tree=race_tree((0, 1, 2, 3, 4)))
    state = store.get_batch("r").race_state
    alive = [[j for j, v in enumerate(row) if v is not None] for row in state.performance]
    assert all(set(later) <= set(earlier) for earlier, later in zip(alive, alive[1:]))


def test_missing_performance_stat(store, make_exe, instances):
    instances(5)
    with pytest.raises(RaceError, match="numeric statistic 'quality'"):
        race(store, make_exe(RACE_SOLVER), performance_param="quality")


def test_new_race_needs_params(store, make_exe, instances):
    instances(5)
    with pytest.raises(RaceError, match="instance parameter"):
        run_race(store, "r", race_tree(), make_exe(RACE_SOLVER), P1)


def test_race_options_are_frozen(store, make_exe, instances):
    instances(5)
    race(store, make_exe(RACE_SOLVER))
    with pytest.raises(ConflictError, match="seed"):
        run_race(store, "r", options=P1, seed=9)
    with pytest.raises(ConflictError):
        run_race(store, "r", options=RunOptions(parallelism=1, repetitions=3))


def test_show_winning_on_batch_fails(store, make_exe):
    run_batch(store, "b", '{"type":"flag","name":"v"}', make_exe('print("{}")'), P1)
    with pytest.raises(RaceError, match="not a race"):
        show_winning(store, "b")
    with pytest.raises(ConflictError):
        run_race(store, "b", options=P1)


def test_greedy_race_reuses_batch_records(store, make_exe, instances):
    instances(6)
    exe = make_exe(RACE_SOLVER)
    run_batch(store, "all", race_tree(), exe, RunOptions(parallelism=2))
    s = race(store, exe, options=RunOptions(parallelism=2, greedy=True))
    assert s.executed == 0 and s.reused > 0


def test_seed_is_stored(store, make_exe, instances):
    instances(6)
    race(store, make_exe(RACE_SOLVER), seed=3, confidence=0.1)
    b = store.get_batch("r")
    assert (b.race_options.seed, b.race_options.confidence) == (3, 0.1)
    expected = shuffle_instances([f"instances/i{n:02d}" for n in range(6)], 3)
    assert b.race_state.instance_order == expected
