"""What-if planner and ground-truth executor over synthetic catalogs.

The planner prices access paths with PostgreSQL-flavored constants and picks,
per table access, the cheapest of SeqScan and the applicable index scans from
the hypothetical configuration; join order is fixed left-deep by the template.
Parent costs are cumulative (child costs included), which is exactly the shape
the delta-propagation rules in the correction module assume.

The executor turns per-operator execution costs into "true" runtimes through
hidden per-(operator kind, table) multipliers and optional lognormal noise;
those multipliers are the systematic estimation errors the learned models
must recover. One optimizer cost unit is worth 1 ms of simulated time, a
constant that cancels in every benefit ratio.
"""

import math
import zlib
from dataclasses import dataclass

from .catalog import Catalog, selectivity
from .errors import ConfigurationError
from .plan import PLAN_KINDS, PlanNode, Predicate
from .seeding import rng_for
from .workload import Query

SEQ_PAGE_COST = 1.0
RANDOM_PAGE_COST = 4.0
CPU_TUPLE_COST = 0.01
CPU_INDEX_TUPLE_COST = 0.005
CPU_OPERATOR_COST = 0.0025
INDEX_ONLY_PAGE_FACTOR = 0.25
TIME_UNIT_SECONDS = 0.001

MULTIPLIER_LOW = 0.05
MULTIPLIER_HIGH = 20.0


@dataclass(frozen=True)
class GroundTruth:
    """Hidden per-(operator kind, table) cost multipliers plus noise shape."""

    catalog: Catalog
    multipliers: dict
    noise_sigma: float
    seed: int

    def factor(self, kind: str, table: str) -> float:
        return self.multipliers[(kind, table)]


@dataclass(frozen=True)
class ExecutionTelemetry:
    query_key: tuple
    config: tuple
    total_time: float
    per_operator: tuple
    plan: PlanNode


def make_ground_truth(
    catalog: Catalog, seed: int, noise_sigma: float = 0.05, choices=None
) -> GroundTruth:
    """Draw one multiplier per (scan kind, table), log-uniform in [0.05, 20].

    Systematic errors live on the table-access operators; internal kinds get
    multiplier 1.0 (noise still applies to every operator). Compounding
    internal-node errors through the row-count leverage of joins would push
    the correction a leaf can express outside the multiplier grid, breaking
    the guarantee that the right bucket exists.

    ``choices`` restricts draws to an explicit multiplier set, or maps an
    operator kind to such a set (kinds not mapped get multiplier 1.0).
    """
    if noise_sigma < 0:
        raise ConfigurationError("noise_sigma must be >= 0")
    rng = rng_for(seed, "ground-truth")
    multipliers = {}
    for kind in PLAN_KINDS:
        systematic = kind in ("SeqScan", "IndexScan", "IndexOnlyScan")
        for table in catalog.tables:
            if choices is None:
                if systematic:
                    g = math.exp(
                        rng.uniform(
                            math.log(MULTIPLIER_LOW), math.log(MULTIPLIER_HIGH)
                        )
                    )
                else:
                    g = 1.0
            elif isinstance(choices, dict):
                opts = choices.get(kind)
                g = 1.0 if opts is None else float(rng.choice(list(opts)))
            else:
                g = float(rng.choice(list(choices))) if systematic else 1.0
            multipliers[(kind, table.name)] = g
    return GroundTruth(catalog, multipliers, noise_sigma, seed)


def identity_ground_truth(catalog: Catalog, noise_sigma: float = 0.0) -> GroundTruth:
    multipliers = {
        (kind, t.name): 1.0 for kind in PLAN_KINDS for t in catalog.tables
    }
    return GroundTruth(catalog, multipliers, noise_sigma, 0)


def _config_indexes(config):
    if config is None:
        return ()
    if hasattr(config, "indexes"):
        return tuple(config.indexes)
    return tuple(config)


def whatif_plan(query: Query, config, catalog: Catalog):
    """Cost a query under a hypothetical index configuration.

    Returns (plan tree, root total cost). Deterministic; an empty
    configuration always plans via sequential scans.
    """
    indexes = _config_indexes(config)
    t = query.template
    preds = _bound_predicates(query)

    current = _best_scan(t.tables[0], preds, indexes, catalog, t, lookup_col=None)
    for i, join in enumerate(t.join_predicates):
        inner_table = t.tables[i + 1]
        inner_plain = _best_scan(
            inner_table, preds, indexes, catalog, t, lookup_col=None
        )
        rows_out = _join_rows(current.est_rows, inner_plain.est_rows, join, catalog)

        hash_node = PlanNode(
            kind="Hash",
            startup_cost=inner_plain.total_cost
            + CPU_OPERATOR_COST * inner_plain.est_rows,
            exec_cost=0.0,
            est_rows=inner_plain.est_rows,
            children=[inner_plain],
        )
        hash_join = PlanNode(
            kind="HashJoin",
            startup_cost=current.startup_cost + hash_node.startup_cost,
            exec_cost=current.exec_cost
            + CPU_OPERATOR_COST * current.est_rows
            + CPU_TUPLE_COST * rows_out,
            est_rows=rows_out,
            children=[current, hash_node],
        )
        best = hash_join

        inner_lookup = _best_scan(
            inner_table,
            preds,
            indexes,
            catalog,
            t,
            lookup_col=join.right.column,
        )
        if inner_lookup is not None and inner_lookup.index is not None:
            nlj = PlanNode(
                kind="NestedLoopJoin",
                startup_cost=current.startup_cost + inner_lookup.startup_cost,
                exec_cost=current.exec_cost
                + current.est_rows * inner_lookup.exec_cost
                + CPU_TUPLE_COST * rows_out,
                est_rows=rows_out,
                children=[current, inner_lookup],
            )
            if nlj.total_cost < best.total_cost:
                best = nlj
        current = best

    if t.group_by:
        col = catalog.column(t.group_by[0].table, t.group_by[0].column)
        groups = min(float(col.distinct_count), current.est_rows)
        current = PlanNode(
            kind="Aggregate",
            startup_cost=current.total_cost + CPU_OPERATOR_COST * current.est_rows,
            exec_cost=CPU_TUPLE_COST * groups,
            est_rows=groups,
            children=[current],
        )
    if t.order_by:
        rows = current.est_rows
        sort_work = 2.0 * CPU_OPERATOR_COST * rows * math.log2(max(rows, 2.0))
        current = PlanNode(
            kind="Sort",
            startup_cost=current.total_cost + sort_work,
            exec_cost=CPU_OPERATOR_COST * rows,
            est_rows=rows,
            children=[current],
        )
    return current, current.total_cost


def _bound_predicates(query: Query) -> dict:
    """Bound filter predicates grouped by table name."""
    by_table = {}
    for spec, literal in zip(query.template.filter_specs, query.bound_literals):
        p = Predicate(spec.column, spec.op, literal)
        by_table.setdefault(spec.column.table, []).append(p)
    return by_table


def _referenced_columns(template, table: str) -> set:
    cols = set()
    for f in template.filter_specs:
        if f.column.table == table:
            cols.add(f.column.column)
    for j in template.join_predicates:
        if j.left.table == table:
            cols.add(j.left.column)
        if j.right.table == table:
            cols.add(j.right.column)
    for ref in (
        list(template.order_by)
        + list(template.group_by)
        + list(template.payload_columns)
    ):
        if ref.table == table:
            cols.add(ref.column)
    return cols


def _best_scan(table_name, preds_by_table, indexes, catalog, template, lookup_col):
    """Cheapest access path for one table (or the cheapest lookup path)."""
    table = catalog.table(table_name)
    preds = list(preds_by_table.get(table_name, ()))
    filter_sel = selectivity(preds, catalog) if preds else 1.0
    out_rows = table.row_count * filter_sel
    if lookup_col is not None:
        join_col = catalog.column(table_name, lookup_col)
        out_rows = out_rows / join_col.distinct_count

    options = []
    if lookup_col is None:
        seq = PlanNode(
            kind="SeqScan",
            startup_cost=0.0,
            exec_cost=SEQ_PAGE_COST * table.page_count
            + (CPU_TUPLE_COST + CPU_OPERATOR_COST * len(preds)) * table.row_count,
            est_rows=out_rows,
            table=table_name,
            predicates=preds,
        )
        options.append(seq)

    referenced = _referenced_columns(template, table_name)
    for idx in indexes:
        if idx.table != table_name:
            continue
        matched = _matched_selectivity(idx, preds, catalog, lookup_col)
        if matched is None:
            continue
        descent = CPU_OPERATOR_COST * math.log2(max(table.row_count, 2.0))
        heap_pages = matched * table.page_count
        cpu = (CPU_INDEX_TUPLE_COST + CPU_TUPLE_COST) * matched * table.row_count
        post_filter = CPU_OPERATOR_COST * len(preds) * matched * table.row_count
        kind = "IndexScan"
        page_cost = RANDOM_PAGE_COST * heap_pages
        if referenced <= set(idx.key_columns):
            kind = "IndexOnlyScan"
            page_cost = INDEX_ONLY_PAGE_FACTOR * RANDOM_PAGE_COST * heap_pages
        options.append(
            PlanNode(
                kind=kind,
                startup_cost=descent,
                exec_cost=page_cost + cpu + post_filter,
                est_rows=out_rows,
                table=table_name,
                index=idx,
                predicates=preds,
            )
        )

    if not options:
        return None
    best = options[0]
    for node in options[1:]:
        if node.total_cost < best.total_cost:
            best = node
    return best


def _matched_selectivity(idx, preds, catalog, lookup_col):
    """Selectivity served by the index's leading key prefix, or None if unusable."""
    available = {}
    for p in preds:
        available.setdefault(p.column.column, []).append(p)
    matched = []
    sel = 1.0
    for key in idx.key_columns:
        if lookup_col is not None and key == lookup_col and key not in matched:
            col = catalog.column(idx.table, key)
            sel *= 1.0 / col.distinct_count
            matched.append(key)
        elif key in available:
            sel *= selectivity(available[key], catalog)
            matched.append(key)
        else:
            break
    if not matched:
        return None
    if lookup_col is not None and lookup_col not in matched:
        return None
    return sel


def _join_rows(outer_rows, inner_rows, join, catalog) -> float:
    d_left = catalog.column(join.left.table, join.left.column).distinct_count
    d_right = catalog.column(join.right.table, join.right.column).distinct_count
    return outer_rows * inner_rows / max(d_left, d_right)


def subtree_table(node: PlanNode) -> str:
    """Table attributed to a node: its own, else the outermost leaf's."""
    if node.table is not None:
        return node.table
    return subtree_table(node.children[0])


def _query_digest(query: Query, indexes) -> int:
    parts = [query.template.id]
    parts += [repr(v) for v in query.bound_literals]
    parts += sorted(str(ix) for ix in indexes)
    return zlib.crc32("|".join(parts).encode("utf-8"))


def execute(
    query: Query, config, ground_truth: GroundTruth, round_seed: int
) -> ExecutionTelemetry:
    """Simulated execution: per-operator time = exec cost x multiplier x noise."""
    indexes = _config_indexes(config)
    root, _ = whatif_plan(query, indexes, ground_truth.catalog)
    rng = rng_for(ground_truth.seed, round_seed, _query_digest(query, indexes))
    per_operator = []
    total = 0.0
    for node in root.walk():
        g = ground_truth.factor(node.kind, subtree_table(node))
        noise = float(rng.lognormal(0.0, ground_truth.noise_sigma))
        t = node.exec_cost * g * noise * TIME_UNIT_SECONDS
        per_operator.append((node, t))
        total += t
    return ExecutionTelemetry(
        query_key=query.key(),
        config=indexes,
        total_time=total,
        per_operator=tuple(per_operator),
        plan=root,
    )
