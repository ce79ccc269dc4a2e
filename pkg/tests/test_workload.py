import math

import pytest

from idxlab.catalog import CatalogSpec, generate_catalog
from idxlab.errors import ConfigurationError
from idxlab.workload import (
    DriftSchedule,
    MiniWorkload,
    build_schedule,
    generate_templates,
    load_schedule,
    save_schedule,
    unseen_fraction,
)


@pytest.fixture(scope="module")
def catalog():
    return generate_catalog(CatalogSpec(n_tables=3), seed=42)


@pytest.fixture(scope="module")
def templates(catalog):
    return generate_templates(catalog, 25, seed=1)


def template_sets(workloads):
    return [set(w.template_ids()) for w in workloads]


def test_template_generation_deterministic(catalog):
    a = generate_templates(catalog, 10, seed=1)
    b = generate_templates(catalog, 10, seed=1)
    assert a == b
    assert len({t.id for t in a}) == 10


def test_template_count_validation(catalog):
    with pytest.raises(ConfigurationError):
        generate_templates(catalog, 0, seed=1)


def test_template_capacity_error():
    # one table, one column: the distinct-template space tops out at a few
    # hundred signatures, so asking for 700 must fail
    tiny = generate_catalog(
        CatalogSpec(n_tables=1, rows_range=(100, 100), cols_per_table_range=(1, 1)),
        seed=0,
    )
    with pytest.raises(ConfigurationError):
        generate_templates(tiny, 700, seed=1)


def test_joins_connect_adjacent_tables(catalog):
    for seed in range(100):
        for t in generate_templates(catalog, 5, seed=seed):
            t.validate(catalog)
            for i, j in enumerate(t.join_predicates):
                assert j.left.table == t.tables[i]
                assert j.right.table == t.tables[i + 1]


def test_static_schedule_is_constant(templates):
    sched = DriftSchedule("static", total_rounds=20, templates_per_round=6)
    ws = build_schedule(templates, sched, seed=3)
    sets = template_sets(ws)
    assert len(ws) == 20
    assert all(s == sets[0] for s in sets)


def test_periodic_schedule_swaps_on_period(templates):
    sched = DriftSchedule(
        "periodic", total_rounds=12, templates_per_round=5, change_fraction=0.2, period=4
    )
    ws = build_schedule(templates, sched, seed=3)
    sets = template_sets(ws)
    k = math.ceil(0.2 * 5)
    assert sets[0] == sets[1] == sets[2] == sets[3]
    assert len(sets[3] - sets[4]) == k
    assert len(sets[4] - sets[3]) == k
    assert sets[4] == sets[5] == sets[6] == sets[7]


def test_continuous_drift_conservation(templates):
    sched = DriftSchedule(
        "continuous", total_rounds=10, templates_per_round=6, change_fraction=0.34
    )
    ws = build_schedule(templates, sched, seed=5)
    k = math.ceil(0.34 * 6)
    sets = template_sets(ws)
    for a, b in zip(sets, sets[1:]):
        assert len(a & b) == 6 - k


def test_cyclic_schedule_repeats(templates):
    sched = DriftSchedule(
        "cyclic",
        total_rounds=32,
        templates_per_round=5,
        change_fraction=0.2,
        cycle_length=15,
    )
    ws = build_schedule(templates, sched, seed=7)
    sets = template_sets(ws)
    for r in range(32):
        assert sets[r] == sets[r % 15]
    assert sets[0] == sets[15] == sets[30]


def test_schedule_is_pure(templates):
    sched = DriftSchedule("continuous", total_rounds=6, templates_per_round=4)
    assert build_schedule(templates, sched, seed=11) == build_schedule(
        templates, sched, seed=11
    )


def test_insufficient_templates_rejected(templates):
    sched = DriftSchedule(
        "continuous", total_rounds=4, templates_per_round=24, change_fraction=0.5
    )
    with pytest.raises(ConfigurationError):
        build_schedule(templates, sched, seed=1)
    with pytest.raises(ConfigurationError):
        build_schedule(
            templates,
            DriftSchedule("static", total_rounds=2, templates_per_round=26),
            seed=1,
        )


def test_literals_fresh_per_round_and_query(templates):
    sched = DriftSchedule(
        "static", total_rounds=2, templates_per_round=3, queries_per_template=2
    )
    ws = build_schedule(templates, sched, seed=13)
    first = [q.bound_literals for q in ws[0].queries]
    second = [q.bound_literals for q in ws[1].queries]
    assert first != second
    assert ws[0].queries[0].bound_literals != ws[0].queries[1].bound_literals


def test_unseen_fraction(templates):
    sched = DriftSchedule("static", total_rounds=1, templates_per_round=10)
    w = build_schedule(templates, sched, seed=3)[0]
    ids = list(w.template_ids())
    assert unseen_fraction(w, set(ids)) == 0.0
    assert unseen_fraction(w, set()) == 1.0
    assert unseen_fraction(w, set(ids[2:])) == pytest.approx(0.2)


def test_empty_workload_rejected():
    with pytest.raises(ConfigurationError):
        MiniWorkload(round=0, queries=())


def test_schedule_json_roundtrip(templates, tmp_path):
    sched = DriftSchedule("periodic", total_rounds=6, templates_per_round=4, period=2)
    ws = build_schedule(templates, sched, seed=17)
    path = tmp_path / "schedule.json"
    save_schedule(ws, path)
    assert load_schedule(path) == ws
