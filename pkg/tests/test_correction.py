import math

import numpy as np
import pytest

from idxlab.catalog import CatalogSpec, IndexCandidate, generate_catalog
from idxlab.correction import (
    CorrectionLedger,
    actual_benefit,
    config_related_leaves,
    correct_plan,
    cost_correction,
    estimated_benefit,
    telemetry_to_labels,
    update_cost,
)
from idxlab.costmodel import MULTIPLIER_GRID, CostMultiplierModel, nearest_bucket_index
from idxlab.errors import ContractError
from idxlab.plan import PlanNode, encoding_length, leaves
from idxlab.selection import generate_candidates
from idxlab.simulator import execute, make_ground_truth, whatif_plan
from idxlab.workload import DriftSchedule, build_schedule, generate_templates

from conftest import nlj_example_plan


# --- independent oracle: recompute internal costs from scratch --------------

def _recombine(node, new_children):
    """Absolute reaggregation mirroring the delta table's semantics."""
    kind = node.kind
    olds = node.children
    if kind == "NestedLoopJoin":
        own_s = node.startup_cost - sum(c.startup_cost for c in olds)
        own_e = (
            node.exec_cost
            - olds[0].exec_cost
            - olds[0].est_rows * olds[1].exec_cost
        )
        s = own_s + sum(c.startup_cost for c in new_children)
        e = (
            own_e
            + new_children[0].exec_cost
            + olds[0].est_rows * new_children[1].exec_cost
        )
    elif kind == "Limit":
        ratio = node.est_rows / olds[0].est_rows if olds[0].est_rows > 0 else 0.0
        own_s = node.startup_cost - olds[0].startup_cost
        own_e = node.exec_cost - ratio * olds[0].exec_cost
        s = own_s + new_children[0].startup_cost
        e = own_e + ratio * new_children[0].exec_cost
    elif kind in ("Hash", "Sort", "Aggregate", "Gather"):
        own_s = node.startup_cost - olds[0].startup_cost - olds[0].exec_cost
        s = own_s + new_children[0].startup_cost + new_children[0].exec_cost
        e = node.exec_cost
    elif kind in ("HashJoin", "GatherMerge"):
        own_s = node.startup_cost - sum(c.startup_cost for c in olds)
        own_e = node.exec_cost - olds[0].exec_cost
        s = own_s + sum(c.startup_cost for c in new_children)
        e = own_e + new_children[0].exec_cost
    else:
        raise AssertionError(kind)
    out = PlanNode(kind, s, e, node.est_rows, node.table, node.index,
                   list(node.predicates), new_children)
    return out


def oracle_corrected_cost(plan, leaf_position, multiplier):
    """Root total after scaling one leaf, rebuilt bottom-up from absolutes."""
    counter = [0]

    def rebuild(node):
        if node.is_leaf:
            scaled = node.clone()
            if counter[0] == leaf_position:
                scaled.exec_cost = multiplier * scaled.exec_cost
            counter[0] += 1
            return scaled
        return _recombine(node, [rebuild(c) for c in node.children])

    return rebuild(plan).total_cost


def oracle_labels(plan, config_indexes, grid, observed, baseline):
    all_leaves = leaves(plan)
    related = config_related_leaves(plan, config_indexes)
    out = []
    for pos, leaf in enumerate(all_leaves):
        if not any(leaf is r for r in related):
            continue
        base_b = 1.0 - plan.total_cost / baseline
        best_key, best = (abs(observed - base_b), 0.0), 1.0
        for multiplier in grid:
            b = 1.0 - oracle_corrected_cost(plan, pos, float(multiplier)) / baseline
            key = (abs(observed - b), abs(math.log(multiplier)))
            if key < best_key:
                best_key, best = key, float(multiplier)
        out.append((leaf, best))
    return out


# --- propagation -------------------------------------------------------------

def test_example_propagation_is_exact():
    root, outer, inner = nlj_example_plan()
    ledger = update_cost(root, inner, 2.0)
    assert inner.exec_cost == 2.70
    assert ledger.delta_for(inner) == (0.0, 1.35)
    assert root.exec_cost == 181087.0
    assert ledger.delta_for(root) == (0.0, 67500.0)
    assert ledger.applied == [(inner, 2.0)]


def test_identity_multiplier_changes_nothing():
    root, outer, inner = nlj_example_plan()
    before = root.to_dict()
    ledger = update_cost(root, inner, 1.0)
    assert root.to_dict() == before
    assert all(d == (0.0, 0.0) for d in
               (ledger.delta_for(n) for n in root.walk()))


def test_limit_rule():
    leaf = PlanNode("SeqScan", exec_cost=50.0, est_rows=100.0, table="a")
    limit = PlanNode("Limit", startup_cost=0.0, exec_cost=5.0, est_rows=10.0,
                     children=[leaf])
    ledger = update_cost(limit, leaf, 2.0)
    assert ledger.delta_for(leaf) == (0.0, 50.0)
    assert ledger.delta_for(limit) == (0.0, 5.0)
    assert limit.exec_cost == 10.0


def test_passthrough_moves_exec_delta_to_startup():
    leaf = PlanNode("IndexScan", exec_cost=8.0, est_rows=10.0, table="a",
                    index=IndexCandidate("a", ("k",), 1))
    sort = PlanNode("Sort", startup_cost=8.0, exec_cost=1.0, est_rows=10.0,
                    children=[leaf])
    update_cost(sort, leaf, 3.0)
    assert leaf.exec_cost == 24.0
    assert sort.startup_cost == 24.0
    assert sort.exec_cost == 1.0


def test_gather_merge_uses_probe_delta():
    leaf = PlanNode("SeqScan", exec_cost=6.0, est_rows=10.0, table="a")
    gm = PlanNode("GatherMerge", startup_cost=1.0, exec_cost=6.5, est_rows=10.0,
                  children=[leaf])
    ledger = update_cost(gm, leaf, 2.0)
    assert ledger.delta_for(gm) == (0.0, 6.0)
    assert gm.exec_cost == 12.5


def test_update_cost_preconditions():
    root, outer, inner = nlj_example_plan()
    with pytest.raises(ValueError):
        update_cost(root, inner, 0.0)
    with pytest.raises(ValueError):
        update_cost(root, inner, -2.0)
    with pytest.raises(ValueError):
        update_cost(root, root, 2.0)


def _simulator_plans(n=30, with_config=True, seed=0):
    catalog = generate_catalog(CatalogSpec(n_tables=3), seed=11)
    templates = generate_templates(catalog, 12, seed=11)
    sched = DriftSchedule("static", total_rounds=1, templates_per_round=12)
    workload = build_schedule(templates, sched, seed=11)[0]
    candidates = generate_candidates(workload, catalog)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        q = workload.queries[int(rng.integers(0, len(workload.queries)))]
        k = int(rng.integers(1, min(5, len(candidates)) + 1)) if with_config else 0
        config = tuple(
            candidates[i] for i in rng.choice(len(candidates), k, replace=False)
        )
        plan, cost = whatif_plan(q, config, catalog)
        out.append((catalog, q, config, plan, cost))
    return out


def test_propagation_linearity():
    for catalog, q, config, plan, cost in _simulator_plans(10):
        for pos in range(len(leaves(plan))):
            a, b = 3.0, 0.2
            pa = plan.clone()
            la = update_cost(pa, leaves(pa)[pos], a)
            pb = plan.clone()
            lb = update_cost(pb, leaves(pb)[pos], b)
            da = sum(la.delta_for(pa))
            db = sum(lb.delta_for(pb))
            assert da / (a - 1.0) == pytest.approx(db / (b - 1.0), rel=1e-9)


def test_root_delta_consistency():
    for catalog, q, config, plan, cost in _simulator_plans(10):
        copy = plan.clone()
        ledger = CorrectionLedger()
        for pos, multiplier in enumerate((2.0, 0.5, 7.0)):
            if pos >= len(leaves(copy)):
                break
            update_cost(copy, leaves(copy)[pos], multiplier, ledger)
        dcs, dce = ledger.delta_for(copy)
        assert copy.total_cost == pytest.approx(cost + dcs + dce, rel=1e-9)


def test_corrected_costs_stay_nonnegative():
    for catalog, q, config, plan, cost in _simulator_plans(15):
        for pos in range(len(leaves(plan))):
            for multiplier in MULTIPLIER_GRID:
                copy = plan.clone()
                update_cost(copy, leaves(copy)[pos], float(multiplier))
                for node in copy.walk():
                    assert node.startup_cost >= 0.0
                    assert node.exec_cost >= -1e-9


def test_delta_matches_recompute_oracle():
    for catalog, q, config, plan, cost in _simulator_plans(15):
        for pos in range(len(leaves(plan))):
            for multiplier in (0.01, 0.4, 2.0, 30.0):
                copy = plan.clone()
                update_cost(copy, leaves(copy)[pos], multiplier)
                assert copy.total_cost == pytest.approx(
                    oracle_corrected_cost(plan, pos, multiplier), rel=1e-12
                )


# --- gated correction --------------------------------------------------------

def _trained_models(catalog, confident=True):
    dim = encoding_length(catalog)
    models = {}
    for kind in ("SeqScan", "IndexScan", "IndexOnlyScan"):
        m = CostMultiplierModel(input_dim=dim, seed=hash(kind) % 1000)
        if confident:
            m.params["b3"][:] = 0.0
            m.params["b3"][nearest_bucket_index(2.0)] = 800.0
            m.dropout_rate = 0.0
        models[kind] = m
    return models


def test_gate_blocks_all_when_threshold_zero():
    (catalog, q, config, plan, cost), = _simulator_plans(1)
    models = _trained_models(catalog, confident=False)  # uniform, high entropy
    corrected = cost_correction(plan.clone(), models, catalog, 0.0, 0.5, 10)
    assert corrected == cost


def test_gate_threshold_monotonicity():
    for catalog, q, config, plan, cost in _simulator_plans(8, seed=3):
        models = _trained_models(catalog, confident=False)
        # nudge models with a few labels so uncertainties spread out
        rng = np.random.default_rng(1)
        for kind, m in models.items():
            n = int(rng.integers(4, 40))
            m.update([(rng.random(m.input_dim), 19) for _ in range(n)])
        cache = {}
        counts = []
        for rho in (math.inf, 0.5, 0.1, 0.05, 0.0):
            result = correct_plan(
                plan.clone(), models, catalog, rho, 0.5, 10, cache
            )
            counts.append(result.corrected_leaf_count)
        assert counts == sorted(counts, reverse=True)


def test_unbounded_threshold_corrects_every_leaf():
    (catalog, q, config, plan, cost), = _simulator_plans(1, seed=5)
    models = _trained_models(catalog, confident=True)
    result = correct_plan(plan.clone(), models, catalog, math.inf, 0.5, 10)
    assert result.corrected_leaf_count == len(leaves(plan))
    # equals a sequential composition of update_cost with the same multipliers
    manual = plan.clone()
    for pos, report in enumerate(result.reports):
        update_cost(manual, leaves(manual)[pos], report.multiplier)
    assert result.corrected_cost == pytest.approx(manual.total_cost, rel=1e-12)


def test_example_gate_only_low_uncertainty_leaf_corrected():
    # one leaf's model is uncertain, the other's is confident at 2.0x; with
    # threshold 0.1 only the confident index scan is corrected
    from idxlab.catalog import Catalog, ColumnDef, TableDef

    catalog = Catalog(
        tables=(
            TableDef("a", 50000, 100, (ColumnDef("x", "numeric", 10, 0.0, 1.0, 8),)),
            TableDef("b", 1000, 10, (ColumnDef("k", "numeric", 10, 0.0, 1.0, 8),)),
        ),
        seed=0,
    )
    root, outer, inner = nlj_example_plan()
    dim = encoding_length(catalog)
    seq_model = CostMultiplierModel(input_dim=dim, seed=1)  # uniform: U ~ 1.8
    idx_model = CostMultiplierModel(input_dim=dim, seed=2, dropout_rate=0.0)
    idx_model.params["b3"][:] = 0.0
    idx_model.params["b3"][nearest_bucket_index(2.0)] = 800.0  # one-hot at 2.0
    models = {"SeqScan": seq_model, "IndexScan": idx_model}
    result = correct_plan(root, models, catalog, 0.1, 0.5, 10)
    assert [r.multiplier for r in result.reports] == [None, 2.0]
    assert inner.exec_cost == 2.70
    assert root.exec_cost == 181087.0
    assert result.corrected_cost == root.total_cost


# --- benefits ----------------------------------------------------------------

def test_estimated_benefit_values():
    assert estimated_benefit(100.0, 100.0) == 0.0
    assert estimated_benefit(100.0, 50.0) == 0.5
    assert estimated_benefit(100.0, 200.0) == -1.0
    with pytest.raises(ContractError):
        estimated_benefit(0.0, 10.0)


def test_actual_benefit_values():
    assert actual_benefit(10.0, 5.0) == 0.5
    assert actual_benefit(10.0, 10.0) == 0.0
    assert actual_benefit(10.0, 29.0) == pytest.approx(-1.9)
    with pytest.raises(ContractError):
        actual_benefit(0.0, 1.0)


# --- telemetry labeling ------------------------------------------------------

def test_labels_identity_when_estimate_already_matches():
    root, outer, inner = nlj_example_plan()
    baseline = 130000.0
    observed = 1.0 - root.total_cost / baseline
    labels = telemetry_to_labels(
        root, (inner.index,), MULTIPLIER_GRID, observed, baseline
    )
    # only the index leaf is config-related (the seq scan is on another table)
    assert labels == [(inner, 1.0)]
    # a seq scan on a table that does carry a configured index is related too
    related = config_related_leaves(
        root, (inner.index, IndexCandidate("a", ("x",), 1))
    )
    assert related == [outer, inner]


def test_labels_recover_known_leaf_multiplier():
    root, outer, inner = nlj_example_plan()
    baseline = 130000.0
    doubled = root.clone()
    update_cost(doubled, leaves(doubled)[1], 2.0)
    observed = 1.0 - doubled.total_cost / baseline
    labels = telemetry_to_labels(
        root, (inner.index,), MULTIPLIER_GRID, observed, baseline
    )
    by_leaf = {leaf: multiplier for leaf, multiplier in labels}
    assert by_leaf[inner] == 2.0


def test_labels_empty_without_config_leaves():
    root, outer, inner = nlj_example_plan()
    assert telemetry_to_labels(root, (), MULTIPLIER_GRID, 0.3, 1000.0) == []
    with pytest.raises(ValueError):
        telemetry_to_labels(root, (), MULTIPLIER_GRID, math.nan, 1000.0)


def test_labels_match_exhaustive_oracle_on_simulator_plans():
    catalog0 = None
    cases = _simulator_plans(50, seed=9)
    gt = make_ground_truth(cases[0][0], seed=31, noise_sigma=0.1)
    checked = 0
    for catalog, q, config, plan, cost in cases:
        telem = execute(q, config, gt, round_seed=7)
        _, baseline_cost = whatif_plan(q, (), catalog)
        base = execute(q, (), gt, round_seed=1)
        observed = actual_benefit(base.total_time, telem.total_time)
        got = telemetry_to_labels(
            plan, config, MULTIPLIER_GRID, observed, baseline_cost
        )
        want = oracle_labels(plan, config, MULTIPLIER_GRID, observed, baseline_cost)
        assert [(id(l), w) for l, w in got] == [(id(l), w) for l, w in want]
        checked += len(got)
    assert checked > 0
