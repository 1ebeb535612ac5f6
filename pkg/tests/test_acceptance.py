"""Go/no-go checks for the whole package, one test per criterion.

The suites are pinned (sizes, seeds, tolerances) so a pass or fail is
reproducible. Shared fixtures run the expensive solver sweeps once and the
criteria read different aspects of the same runs.
"""

import json
import math
import os
import random
import time
from pathlib import Path

import pytest

from stspgl.covers import (
    explore,
    is_minimal,
    local_search,
    make_cover,
    minimal_feasibility_cover,
)
from stspgl.evalcli import (
    ExperimentSpec,
    bench,
    make_config,
    sweep,
    vss_experiment,
)
from stspgl.model import load_instance
from stspgl.orchestrate import run_bp, run_hybrid, run_mip_benchmark
from stspgl.scenarios import (
    chance_feasible,
    deterministic_routing_costs,
    generate_instance,
)
from stspgl.tspgl import (
    benders_solve_tspgl,
    cover_bounds,
    make_subinstance,
    solve_tspgl_direct,
)

from oracles import enumerate_minimal_covers


def _cfg(seed=0):
    return make_config(time_limit=300.0, gap=1e-9, seed=seed)


def _rel_close(a, b, tol=1e-6):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _c1_instances():
    """Fifty instances spanning the allowed size box (|N|<=10, |D|<=12, |S|<=5)."""
    shapes = (
        [dict(n=7, n_requests=6, n_scenarios=4, theta=0.7, rho=0.25,
              seed=s) for s in range(30)]
        + [dict(n=6, n_requests=5, n_scenarios=3, theta=0.9, rho=0.0,
                seed=100 + s) for s in range(8)]
        + [dict(n=8, n_requests=8, n_scenarios=5, theta=0.8, rho=0.2,
                seed=200 + s) for s in range(6)]
        + [dict(n=9, n_requests=10, n_scenarios=4, theta=0.8, rho=0.25,
                seed=300 + s) for s in range(3)]
        + [dict(n=10, n_requests=12, n_scenarios=5, theta=0.9, rho=0.2,
                seed=900 + 5 * s) for s in range(3)]
    )
    return [generate_instance(**shape) for shape in shapes]


@pytest.fixture(scope="module")
def c1_runs():
    started = time.monotonic()
    runs = []
    for inst in _c1_instances():
        mip = run_mip_benchmark(inst, _cfg())
        bp = run_bp(inst, _cfg())
        hyb = run_hybrid(inst, _cfg())
        runs.append((inst, mip, bp, hyb))
    return runs, time.monotonic() - started


@pytest.fixture(scope="module")
def c2_pairs():
    """Random subproblems (|N'| <= 8) solved both ways, with their bounds."""
    started = time.monotonic()
    shapes = [
        dict(n=8, n_requests=7, n_scenarios=4, theta=0.75, rho=0.25),
        dict(n=8, n_requests=8, n_scenarios=3, theta=0.65, rho=0.2),
        dict(n=7, n_requests=6, n_scenarios=5, theta=0.85, rho=0.25),
        dict(n=8, n_requests=8, n_scenarios=4, theta=0.55, rho=0.3),
    ]
    rows = []
    for i in range(48):
        if len(rows) >= 60:
            break
        inst = generate_instance(seed=500 + i, **shapes[i % len(shapes)])
        qtilde = deterministic_routing_costs(inst)
        seen = set()
        taken = set()
        sizes = list(range(max(1, len(inst.compulsory)), inst.n + 1))
        for k in range(10):
            cov = explore(inst, n=sizes[k % len(sizes)], seed=1000 * i + k,
                          seen=seen)
            if cov is None or cov.requests in taken:
                continue
            taken.add(cov.requests)
            sub = make_subinstance(inst, cov, qtilde)
            assert len(sub.nodes) <= 8
            bounds = cover_bounds(sub)
            ben = benders_solve_tspgl(sub, warm=bounds)
            direct = solve_tspgl_direct(sub)
            rows.append((bounds, ben, direct))
    return rows, time.monotonic() - started


@pytest.fixture(scope="module")
def c3_rows():
    """Instances with few minimal covers: enumerated optimum vs benchmark."""
    comparisons = []
    audits = []
    for seed in range(40):
        if len(comparisons) >= 10:
            break
        inst = generate_instance(n=6, seed=700 + seed, n_requests=5,
                                 n_scenarios=3, theta=0.8, rho=0.3)
        covers = enumerate_minimal_covers(inst)
        if not (1 <= len(covers) <= 10):
            continue
        qtilde = deterministic_routing_costs(inst)
        best = math.inf
        for requests in covers:
            cov = make_cover(inst, requests)
            sub = make_subinstance(inst, cov, qtilde)
            bounds = cover_bounds(sub)
            out = benders_solve_tspgl(sub, warm=bounds)
            assert out.status == "Optimal"
            audits.append((bounds.lb, out.solution.objective, bounds.ub))
            best = min(best, out.solution.objective)
        mip = run_mip_benchmark(inst, _cfg())
        assert mip.status == "Optimal"
        comparisons.append((best, mip.upper_bound))
    return comparisons, audits


def test_criterion_01_bp_and_hybrid_match_the_exact_benchmark(c1_runs):
    runs, elapsed = c1_runs
    assert len(runs) >= 50
    for inst, mip, bp, hyb in runs:
        assert mip.status == "Optimal"
        for res in (bp, hyb):
            assert res.upper_bound is not None
            assert _rel_close(res.upper_bound, mip.upper_bound)
            assert res.gap is not None and res.gap <= 1e-6
    assert elapsed < 300.0


def test_criterion_02_benders_equals_direct_subproblem_solves(c2_pairs):
    rows, elapsed = c2_pairs
    assert len(rows) >= 50
    for bounds, ben, direct in rows:
        assert ben.status == "Optimal"
        assert direct.status == "Optimal"
        assert _rel_close(ben.solution.objective, direct.solution.objective)
    assert elapsed < 120.0


def test_criterion_03_enumerated_cover_minimum_is_the_optimum(c3_rows):
    comparisons, _ = c3_rows
    assert len(comparisons) >= 8
    for enumerated, benchmark in comparisons:
        assert _rel_close(enumerated, benchmark)


def test_criterion_04_cover_algebra_randomized_suite():
    pool = [generate_instance(n=5 + (i % 3), seed=40 + i,
                              n_requests=4 + (i % 3), n_scenarios=3 + (i % 2),
                              theta=0.6 + 0.1 * (i % 4), rho=0.25)
            for i in range(10)]
    rng = random.Random(0)
    violations = 0
    for trial in range(1000):
        inst = pool[trial % len(pool)]
        reqs = list(inst.requests)

        base = [hk for hk in reqs if rng.random() < 0.7]
        if not chance_feasible(inst, base):
            base = reqs
        mini = minimal_feasibility_cover(inst, base,
                                         rng=random.Random(trial))
        if not chance_feasible(inst, mini.requests) \
                or not is_minimal(inst, mini) \
                or not set(mini.requests) <= set(base):
            violations += 1

        swapped = local_search(inst, mini, seed=trial)
        if swapped is not None and (
                not chance_feasible(inst, swapped.requests)
                or not is_minimal(inst, swapped)):
            violations += 1

        drawn = explore(inst, n=rng.randint(len(inst.compulsory), inst.n),
                        seed=trial, seen=set())
        if drawn is not None and (
                not chance_feasible(inst, drawn.requests)
                or not is_minimal(inst, drawn)):
            violations += 1

        some = [hk for hk in reqs if rng.random() < 0.5]
        extra = some + [hk for hk in reqs if rng.random() < 0.5]
        if chance_feasible(inst, some) and not chance_feasible(inst, extra):
            violations += 1
    assert violations == 0


def test_criterion_05_bound_sandwich_for_every_evaluated_cover(
        c1_runs, c2_pairs, c3_rows):
    runs, _ = c1_runs
    rows = []
    for _, _, bp, hyb in runs:
        for res in (bp, hyb):
            for _, lb, ub, exact in res.evaluated:
                rows.append((lb, exact, ub))
    pairs, _ = c2_pairs
    for bounds, ben, _ in pairs:
        rows.append((bounds.lb, ben.solution.objective, bounds.ub))
    _, audits = c3_rows
    rows.extend(audits)
    assert rows
    for lb, exact, ub in rows:
        tol = 1e-6 * max(1.0, abs(exact))
        assert lb - tol <= exact <= ub + tol


def test_criterion_06_lower_bounds_never_cross_the_optimum(c1_runs):
    runs, _ = c1_runs
    for inst, mip, bp, hyb in runs:
        optimum = mip.upper_bound
        for res in (bp, hyb):
            prev_ub, prev_lb = math.inf, -math.inf
            for ev in res.trace.events:
                if ev.lb is not None:
                    assert ev.lb <= optimum + 1e-6 * max(1.0, optimum)
                    assert ev.lb >= prev_lb - 1e-9
                    prev_lb = ev.lb
                if ev.ub is not None:
                    assert ev.ub <= prev_ub + 1e-9
                    prev_ub = ev.ub
                if ev.ub is not None and ev.lb is not None:
                    assert ev.lb <= ev.ub + 1e-9


def test_criterion_07_deterministic_vs_stochastic_direction():
    rows = []
    for seed in range(20):
        inst = generate_instance(n=7, seed=100 + seed, n_requests=7,
                                 n_scenarios=5, theta=0.8, rho=0.2,
                                 demand_presence=0.6)
        row = vss_experiment(inst, _cfg())
        assert not row.flagged
        assert row.det_status == "Optimal" and row.sto_status == "Optimal"
        rows.append(row)
    assert len(rows) >= 20
    for row in rows:
        assert row.det.design_cost <= row.sto.design_cost + 1e-9
        assert not row.sto.infeasible
    violations = sum(1 for row in rows if row.det.infeasible)
    assert violations > len(rows) / 2


def test_criterion_08_sweep_direction_theta_dominates_rho():
    inst = generate_instance(n=10, seed=3, n_requests=12, n_scenarios=20,
                             theta=0.95, rho=0.05, demand_presence=0.8,
                             demand_max=6)
    thetas = [1.0, 0.95, 0.9, 0.85, 0.8]
    rhos = [0.0, 0.05, 0.1, 0.15, 0.2]
    res = sweep(inst, thetas, rhos, _cfg())
    design = res.design
    assert all(v is not None for row in design for v in row)
    for t in range(len(thetas) - 1):
        for r in range(len(rhos)):
            assert design[t][r] >= design[t + 1][r] - 1e-9
    for t in range(len(thetas)):
        for r in range(len(rhos) - 1):
            assert design[t][r] >= design[t][r + 1] - 1e-9
    theta_steps = [design[t][r] - design[t + 1][r]
                   for t in range(len(thetas) - 1) for r in range(len(rhos))]
    rho_steps = [design[t][r] - design[t][r + 1]
                 for t in range(len(thetas)) for r in range(len(rhos) - 1)]
    theta_effect = sum(theta_steps) / len(theta_steps)
    rho_effect = sum(rho_steps) / len(rho_steps)
    assert theta_effect > 0.0
    assert theta_effect >= rho_effect


def _tspgl2_path():
    root = os.environ.get("STSPGL_TSPGL2_DIR")
    if not root:
        return None
    path = Path(root) / "n17_s20.json"
    return path if path.exists() else None


@pytest.mark.skipif(_tspgl2_path() is None,
                    reason="external 17-node dataset not provided "
                           "(set STSPGL_TSPGL2_DIR)")
def test_criterion_09_external_17_node_benchmark(tmp_path):
    path = _tspgl2_path()
    inst = load_instance(path)
    assert inst.n == 17 and inst.scenarios.size == 20
    assert inst.theta == pytest.approx(0.95) and inst.rho == pytest.approx(0.05)
    spec = ExperimentSpec(instances=[str(path)], methods=["bp"], seeds=[0],
                          time_limit=3600.0, gap_target=1e-9,
                          out_dir=str(tmp_path / "bench17"))
    rows = bench(spec)
    assert len(rows) == 1
    row = rows[0]
    assert row.ub is not None
    assert abs(row.ub - 3230.0) <= 0.005 * 3230.0
    assert row.gap is not None and row.gap <= 1e-6
    assert row.seconds <= 3600.0


def test_criterion_10_identical_runs_yield_identical_json():
    first = generate_instance(n=7, seed=11, n_requests=6, n_scenarios=4)
    second = generate_instance(n=7, seed=11, n_requests=6, n_scenarios=4)
    a = run_bp(first, _cfg(seed=13)).to_json(first)
    b = run_bp(second, _cfg(seed=13)).to_json(second)
    assert a == b
    ha = run_hybrid(first, _cfg(seed=13)).to_json(first)
    hb = run_hybrid(second, _cfg(seed=13)).to_json(second)
    assert ha == hb
    json.loads(a)   # and it is valid JSON
