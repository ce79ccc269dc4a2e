"""Query templates over a catalog and drifting mini-workload schedules.

Templates fix a left-deep join order, so the simulated planner only ever
chooses access paths. A schedule materializes one MiniWorkload per round under
one of four drift patterns (static, continuous, periodic, cyclic); template
replacement prefers never-used templates while any remain, then recycles.
Literals are freshly sampled for every materialized query.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .catalog import (
    NUMERIC,
    STRING,
    Catalog,
    ColumnRef,
    ConfigurationError,
)
from .seeding import rng_for

DRIFT_KINDS = ("static", "continuous", "periodic", "cyclic")

_NUMERIC_OPS = ("=", ">", "<", ">=", "<=", "!=")
_STRING_OPS = ("=", "!=")


@dataclass(frozen=True)
class LiteralSampler:
    """Domain-uniform literal sampler baked into a filter spec."""

    kind: str
    low: float = 0.0
    high: float = 1.0
    distinct: int = 1

    def sample(self, rng):
        if self.kind == NUMERIC:
            return float(rng.uniform(self.low, self.high))
        return f"v{int(rng.integers(0, self.distinct))}"


@dataclass(frozen=True)
class FilterSpec:
    column: ColumnRef
    op: str
    sampler: LiteralSampler


@dataclass(frozen=True)
class JoinSpec:
    left: ColumnRef
    right: ColumnRef


@dataclass(frozen=True)
class QueryTemplate:
    id: str
    tables: tuple
    join_predicates: tuple
    filter_specs: tuple
    order_by: tuple = ()
    group_by: tuple = ()
    payload_columns: tuple = ()

    def validate(self, catalog: Catalog) -> None:
        if len(self.tables) < 1:
            raise ConfigurationError("template must reference at least one table")
        if len(self.join_predicates) != len(self.tables) - 1:
            raise ConfigurationError("left-deep template needs |tables|-1 joins")
        for i, j in enumerate(self.join_predicates):
            if j.left.table != self.tables[i] or j.right.table != self.tables[i + 1]:
                raise ConfigurationError(
                    f"join {i} of {self.id} does not connect adjacent tables"
                )
        refs = [j.left for j in self.join_predicates]
        refs += [j.right for j in self.join_predicates]
        refs += [f.column for f in self.filter_specs]
        refs += list(self.order_by) + list(self.group_by) + list(self.payload_columns)
        for ref in refs:
            catalog.column(ref.table, ref.column)
            if ref.table not in self.tables:
                raise ConfigurationError(f"{self.id}: column {ref} off-template")


@dataclass(frozen=True)
class Query:
    template: QueryTemplate
    bound_literals: tuple
    frequency_weight: int = 1

    def __post_init__(self):
        if len(self.bound_literals) != len(self.template.filter_specs):
            raise ConfigurationError("literal count must match filter spec count")
        if self.frequency_weight < 1:
            raise ConfigurationError("frequency_weight must be positive")

    @property
    def template_id(self) -> str:
        return self.template.id

    def key(self) -> tuple:
        """Stable identity for caching: (template id, bound literals)."""
        return (self.template.id, self.bound_literals)


@dataclass(frozen=True)
class MiniWorkload:
    round: int
    queries: tuple

    def __post_init__(self):
        if len(self.queries) == 0:
            raise ConfigurationError("mini-workload must be nonempty")

    def template_ids(self) -> tuple:
        seen, out = set(), []
        for q in self.queries:
            if q.template_id not in seen:
                seen.add(q.template_id)
                out.append(q.template_id)
        return tuple(out)


@dataclass(frozen=True)
class DriftSchedule:
    kind: str
    total_rounds: int
    templates_per_round: int
    change_fraction: float = 0.2
    period: int = 4
    cycle_length: int = 15
    queries_per_template: int = 3

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ConfigurationError(f"unknown drift kind {self.kind!r}")
        if self.total_rounds < 1 or self.templates_per_round < 1:
            raise ConfigurationError("rounds and templates_per_round must be >= 1")
        if not 0.0 <= self.change_fraction <= 1.0:
            raise ConfigurationError("change_fraction must be in [0, 1]")
        if self.period < 1 or self.cycle_length < 1:
            raise ConfigurationError("period and cycle_length must be >= 1")
        if self.queries_per_template < 1:
            raise ConfigurationError("queries_per_template must be >= 1")


def generate_templates(catalog: Catalog, n: int, seed: int) -> list:
    """Deterministically generate n distinct query templates over a catalog."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    rng = rng_for(seed, "templates")
    table_names = [t.name for t in catalog.tables]
    templates, signatures = [], set()
    attempts, max_attempts = 0, 1000 + 50 * n
    while len(templates) < n:
        attempts += 1
        if attempts > max_attempts:
            raise ConfigurationError(
                f"could not generate {n} distinct templates "
                f"(catalog too small, produced {len(templates)})"
            )
        max_tables = min(3, len(table_names))
        weights = np.array([0.5, 0.3, 0.2][:max_tables])
        n_tables = 1 + int(rng.choice(max_tables, p=weights / weights.sum()))
        tables = tuple(
            table_names[i]
            for i in rng.choice(len(table_names), size=n_tables, replace=False)
        )
        joins = []
        join_ok = True
        for left_t, right_t in zip(tables, tables[1:]):
            lcols = _numeric_columns(catalog, left_t)
            rcols = _numeric_columns(catalog, right_t)
            if not lcols or not rcols:
                join_ok = False
                break
            joins.append(
                JoinSpec(
                    ColumnRef(left_t, lcols[int(rng.integers(0, len(lcols)))]),
                    ColumnRef(right_t, rcols[int(rng.integers(0, len(rcols)))]),
                )
            )
        if not join_ok:
            continue
        n_filters = int(rng.integers(1, 4))
        filters, used = [], set()
        for _ in range(n_filters):
            t = tables[int(rng.integers(0, len(tables)))]
            cols = catalog.table(t).columns
            col = cols[int(rng.integers(0, len(cols)))]
            ops = _NUMERIC_OPS if col.kind == NUMERIC else _STRING_OPS
            op = ops[int(rng.integers(0, len(ops)))]
            if (t, col.name, op) in used:
                continue
            used.add((t, col.name, op))
            filters.append(
                FilterSpec(ColumnRef(t, col.name), op, _sampler_for(col))
            )
        if not filters:
            continue
        order_by = ()
        if rng.random() < 0.3:
            order_by = (_random_column(catalog, tables, rng),)
        group_by = ()
        if rng.random() < 0.2:
            group_by = (_random_column(catalog, tables, rng),)
        n_payload = int(rng.integers(1, 3))
        payload = tuple(_random_column(catalog, tables, rng) for _ in range(n_payload))
        sig = (
            tables,
            tuple((j.left, j.right) for j in joins),
            tuple((f.column, f.op) for f in filters),
            order_by,
            group_by,
        )
        if sig in signatures:
            continue
        signatures.add(sig)
        tpl = QueryTemplate(
            id=f"T{len(templates):03d}",
            tables=tables,
            join_predicates=tuple(joins),
            filter_specs=tuple(filters),
            order_by=order_by,
            group_by=group_by,
            payload_columns=payload,
        )
        tpl.validate(catalog)
        templates.append(tpl)
    return templates


def _numeric_columns(catalog, table_name):
    return [c.name for c in catalog.table(table_name).columns if c.kind == NUMERIC]


def _random_column(catalog, tables, rng) -> ColumnRef:
    t = tables[int(rng.integers(0, len(tables)))]
    cols = catalog.table(t).columns
    return ColumnRef(t, cols[int(rng.integers(0, len(cols)))].name)


def _sampler_for(col) -> LiteralSampler:
    if col.kind == NUMERIC:
        return LiteralSampler(NUMERIC, col.min_value, col.max_value)
    return LiteralSampler(STRING, distinct=col.distinct_count)


def bind_query(template: QueryTemplate, rng, frequency_weight: int = 1) -> Query:
    literals = tuple(f.sampler.sample(rng) for f in template.filter_specs)
    return Query(template, literals, frequency_weight)


def build_schedule(templates, sched: DriftSchedule, seed: int) -> list:
    """Materialize one MiniWorkload per round under the requested drift pattern."""
    pool = list(templates)
    tpr = sched.templates_per_round
    if tpr > len(pool):
        raise ConfigurationError("templates_per_round exceeds template pool")
    swap = math.ceil(sched.change_fraction * tpr)
    drifting = sched.kind in ("continuous", "periodic", "cyclic")
    if drifting and swap > 0 and len(pool) - tpr < swap:
        raise ConfigurationError(
            "not enough distinct templates to honor change_fraction"
        )

    pick_rng = rng_for(seed, "schedule")
    order = list(pick_rng.permutation(len(pool)))
    current = order[:tpr]
    used = set(current)

    def drift(cur):
        if swap == 0:
            return list(cur)
        out_pos = sorted(
            pick_rng.choice(len(cur), size=swap, replace=False).tolist()
        )
        keep = [x for i, x in enumerate(cur) if i not in set(out_pos)]
        fresh = [i for i in range(len(pool)) if i not in used]
        chosen = []
        if fresh:
            take = min(swap, len(fresh))
            idx = pick_rng.choice(len(fresh), size=take, replace=False)
            chosen += [fresh[i] for i in sorted(idx.tolist())]
        if len(chosen) < swap:
            spare = [
                i
                for i in range(len(pool))
                if i not in set(cur) and i not in set(chosen)
            ]
            idx = pick_rng.choice(
                len(spare), size=swap - len(chosen), replace=False
            )
            chosen += [spare[i] for i in sorted(idx.tolist())]
        used.update(chosen)
        return keep + chosen

    sets = []
    if sched.kind == "static":
        sets = [list(current) for _ in range(sched.total_rounds)]
    elif sched.kind == "continuous":
        cur = list(current)
        for _ in range(sched.total_rounds):
            sets.append(list(cur))
            cur = drift(cur)
    elif sched.kind == "periodic":
        cur = list(current)
        for r in range(sched.total_rounds):
            if r > 0 and r % sched.period == 0:
                cur = drift(cur)
            sets.append(list(cur))
    else:  # cyclic: a drifting prefix of cycle_length rounds, then replay
        cur = list(current)
        base = []
        for _ in range(min(sched.total_rounds, sched.cycle_length)):
            base.append(list(cur))
            cur = drift(cur)
        sets = [base[r % sched.cycle_length] for r in range(sched.total_rounds)]

    workloads = []
    for r, members in enumerate(sets):
        literal_rng = rng_for(seed, "literals", r)
        queries = []
        for idx in members:
            tpl = pool[idx]
            for _ in range(sched.queries_per_template):
                queries.append(bind_query(tpl, literal_rng))
        workloads.append(MiniWorkload(round=r, queries=tuple(queries)))
    return workloads


def unseen_fraction(workload: MiniWorkload, seen_template_ids) -> float:
    """Fraction of distinct templates in the round not seen before."""
    ids = workload.template_ids()
    unseen = sum(1 for t in ids if t not in seen_template_ids)
    return unseen / len(ids)


def schedule_to_dict(workloads) -> dict:
    templates = {}
    for w in workloads:
        for q in w.queries:
            templates.setdefault(q.template.id, q.template)
    return {
        "templates": [_template_to_dict(t) for _, t in sorted(templates.items())],
        "rounds": [
            {
                "round": w.round,
                "queries": [
                    {
                        "template": q.template.id,
                        "literals": list(q.bound_literals),
                        "frequency_weight": q.frequency_weight,
                    }
                    for q in w.queries
                ],
            }
            for w in workloads
        ],
    }


def schedule_from_dict(data: dict) -> list:
    templates = {
        t["id"]: _template_from_dict(t) for t in data["templates"]
    }
    out = []
    for r in data["rounds"]:
        queries = tuple(
            Query(
                templates[q["template"]],
                tuple(
                    v if isinstance(v, str) else float(v) for v in q["literals"]
                ),
                q.get("frequency_weight", 1),
            )
            for q in r["queries"]
        )
        out.append(MiniWorkload(round=r["round"], queries=queries))
    return out


def save_schedule(workloads, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(schedule_to_dict(workloads), f, indent=2, sort_keys=True)


def load_schedule(path) -> list:
    with open(path, encoding="utf-8") as f:
        return schedule_from_dict(json.load(f))


def _template_to_dict(t: QueryTemplate) -> dict:
    return {
        "id": t.id,
        "tables": list(t.tables),
        "join_predicates": [
            {"left": list(j.left), "right": list(j.right)}
            for j in t.join_predicates
        ],
        "filter_specs": [
            {
                "column": list(f.column),
                "op": f.op,
                "sampler": {
                    "kind": f.sampler.kind,
                    "low": f.sampler.low,
                    "high": f.sampler.high,
                    "distinct": f.sampler.distinct,
                },
            }
            for f in t.filter_specs
        ],
        "order_by": [list(c) for c in t.order_by],
        "group_by": [list(c) for c in t.group_by],
        "payload_columns": [list(c) for c in t.payload_columns],
    }


def _template_from_dict(d: dict) -> QueryTemplate:
    return QueryTemplate(
        id=d["id"],
        tables=tuple(d["tables"]),
        join_predicates=tuple(
            JoinSpec(ColumnRef(*j["left"]), ColumnRef(*j["right"]))
            for j in d["join_predicates"]
        ),
        filter_specs=tuple(
            FilterSpec(
                ColumnRef(*f["column"]),
                f["op"],
                LiteralSampler(**f["sampler"]),
            )
            for f in d["filter_specs"]
        ),
        order_by=tuple(ColumnRef(*c) for c in d["order_by"]),
        group_by=tuple(ColumnRef(*c) for c in d["group_by"]),
        payload_columns=tuple(ColumnRef(*c) for c in d["payload_columns"]),
    )
