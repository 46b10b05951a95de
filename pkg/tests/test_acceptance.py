"""One check per acceptance criterion; each prints a single PASS/FAIL line."""

import json
import math
import time
import warnings

import numpy as np
import pytest

from vvsearch.cli import main
from vvsearch.config import make_config, u_example_config
from vvsearch.estimation import (DegenerateUpdateWarning, SensorParams, belief_covariance,
                                 likelihood, rbe_update)
from vvsearch.gridops import convolve, hadamard, max_pool, saturate, vv_union
from vvsearch.montecarlo import run_batch, summarize
from vvsearch.reachability import ReachTable, VehicleLimits, build_reach_one_step
from vvsearch.sim import World, run_trial
from vvsearch.target import (ManeuverTable, all_pairs_graph_distance, build_markov_matrix,
                             build_target_graph, group_sums_exact, load_bundled_table)
from vvsearch.tiles import generate_preset

from test_dubins import angle_diff
from test_estimation import oracle_likelihood, random_scene
from test_gridops import naive_correlate, naive_pool
from test_planner import exhaustive, random_instance
from test_reachability import brute_chain
from test_target import _dijkstra


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
    return _report


def test_c1_rbe(report, u_graph, u_model):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    xy = u_graph.node_xy
    n = u_model.n
    p = SensorParams(0.8, 0.164)
    worst = 0.0
    for _ in range(10_000):
        b = rng.random(n) ** 4
        b /= b.sum()
        for _ in range(3):
            b = u_model.propagate(b, 1)
            f = rng.random(n) < 0.5
            xi = None if rng.random() < 0.5 else xy[rng.integers(n)] + rng.normal(0, 4.5, 2)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateUpdateWarning)
                b = rbe_update(b, likelihood(xi, f, xy, p, 5.0))
            worst = max(worst, abs(b.sum() - 1.0))
    perfect = SensorParams(1.0, 0.0)
    exact = True
    for _ in range(500):
        prior = rng.random(n) + 1e-6
        prior /= prior.sum()
        f = rng.random(n) < rng.random()
        f[0] = False
        post = rbe_update(prior, likelihood(None, f, xy, perfect, 5.0))
        exact &= bool(np.all((post == 0) == f))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and exact and dt < 10
    report(1, ok, f"max |sum-1| = {worst:.2e} over 1e4 update sequences; null zeroing exact={exact}; {dt:.1f}s")
    assert ok


def test_c2_likelihood(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        xi, f, xy, p = random_scene(rng)
        got = likelihood(xi, f.astype(bool), xy, p, 5.0)
        want = np.array(oracle_likelihood(xi, f.tolist(), xy.tolist(), p.p_d, p.mu, p.R, 5.0))
        worst = max(worst, float(np.max(np.abs(got - want))))
    ok = worst <= 1e-12
    report(2, ok, f"max abs deviation from term-by-term oracle {worst:.2e} on 1000 scenes")
    assert ok


def test_c3_markov(report):
    sums_exact = all(s == 1 for v in (15, 20, 25)
                     for col in group_sums_exact(load_bundled_table(v)).values() for s in col)
    worst_row = worst_mass = 0.0
    rng = np.random.default_rng(3)
    for d in ("sparse", "medium", "dense"):
        g = build_target_graph(generate_preset(d, 1).road, 5.0, (5.0, 10.0, 15.0))
        m = build_markov_matrix(g, ManeuverTable.bundled(15))
        worst_row = max(worst_row, float(np.max(np.abs(np.asarray(m.Z.sum(axis=1)).ravel() - 1))))
        p = rng.random(m.n)
        p /= p.sum()
        worst_mass = max(worst_mass, abs(m.propagate(p, 13).sum() - 1))
    ok = sums_exact and worst_row <= 1e-9 and worst_mass <= 1e-9
    report(3, ok, f"group sums exact={sums_exact}; max |row-1| {worst_row:.1e}; mass drift {worst_mass:.1e}")
    assert ok


def test_c4_reachability(report):
    from vvsearch.dubins import dubins_shortest_path
    t0 = time.perf_counter()
    lim = VehicleLimits(18.0, 22.0, math.pi / 4)
    one = build_reach_one_step(lim, 5.0, 16)
    table = ReachTable(one)
    shape_ok = all(one.matrix(h).shape == (11, 11) for h in range(16))
    dpsi = math.pi / 8
    bad_witness = 0
    for h0 in range(16):
        for db, dc, h1, v, _L in one.prims[h0]:
            q1 = (db * 5.0, dc * 5.0, h1 * dpsi)
            path = dubins_shortest_path((0.0, 0.0, h0 * dpsi), q1, v / lim.turn_rate)
            x, y, psi = path.end()
            if not (18 - 1e-9 <= path.length <= 22 + 1e-9 and math.hypot(x - q1[0], y - q1[1]) < 1e-6
                    and angle_diff(psi, q1[2]) < 1e-8):
                bad_witness += 1
    chains_ok = all({tuple(r) for r in table.offsets(h0, k).tolist()} == brute_chain(one, h0, k)
                    for k in (2, 3) for h0 in range(16))
    dt = time.perf_counter() - t0
    ok = shape_ok and bad_witness == 0 and chains_ok and dt < 60
    report(4, ok, f"R_1 11x11={shape_ok}; bad witnesses {bad_witness}; k=2,3 chains equal "
                  f"brute force={chains_ok}; {dt:.1f}s")
    assert ok


def test_c5_planner_optimality(report):
    reach = ReachTable(build_reach_one_step(VehicleLimits(18.0, 22.0, math.pi / 4), 5.0, 16))
    rng = np.random.default_rng(5)
    worst = 0.0
    violations = incomplete = 0
    n_inst = 24
    for i in range(n_inst):
        taus = tuple(range(i % 3 + 2))  # horizons 1, 2 and 3
        planner, slices, npnt, Zd, upv, cell, head, hz = random_instance(rng, reach, taus=taus,
                                                                          strides=(1,) * (len(taus) - 1))
        assert len(Zd) <= 30
        res = planner.astar(cell, head, upv, hz)
        opt = exhaustive(reach, slices, npnt, Zd, planner.params, hz, cell, head, upv)
        incomplete += not res.complete
        worst = max(worst, abs(res.cost - opt))
        if planner.heuristic(cell, head, upv, 0, hz) > opt + 1e-12:
            violations += 1
    ok = worst <= 1e-9 and incomplete == 0
    report(5, ok, f"{n_inst} instances (horizon 1-3, <=30 nodes): max |A* - exhaustive| {worst:.1e}; "
                  f"heuristic admissibility violations {violations}")
    assert ok


def test_c6_matrix_ops(report):
    rng = np.random.default_rng(6)
    bad = {"convolve": 0, "max_pool": 0, "hadamard": 0, "union": 0, "saturate": 0}
    for _ in range(100):
        k = rng.integers(0, 2, (2 * int(rng.integers(0, 4)) + 1, 2 * int(rng.integers(0, 4)) + 1))
        f = rng.integers(0, 2, (int(rng.integers(1, 15)), int(rng.integers(1, 15))))
        bad["convolve"] += not np.array_equal(convolve(k, f), naive_correlate(k, f))
        s = int(rng.integers(1, 6))
        bad["max_pool"] += not np.array_equal(max_pool(f, s), naive_pool(f, s))
        g = rng.integers(0, 2, f.shape)
        h = hadamard(f, g)
        u = vv_union(f, g)
        c = rng.integers(-3, 4, f.shape)
        sc = saturate(c)
        for i in range(f.shape[0]):
            for j in range(f.shape[1]):
                bad["hadamard"] += h[i, j] != f[i, j] * g[i, j]
                bad["union"] += u[i, j] != min(f[i, j] + g[i, j], 1)
                bad["saturate"] += sc[i, j] != min(max(c[i, j], 0), 1)
    bad = {k: int(v) for k, v in bad.items()}
    ok = not any(bad.values())
    report(6, ok, f"mismatches over 100 inputs per op: {bad}")
    assert ok


@pytest.mark.slow
def test_c7_u_example(report):
    t0 = time.perf_counter()
    cfg = u_example_config()
    world = World(cfg)
    terminated = localized = 0
    for seed in range(20):
        r = run_trial(cfg, "idastar", world, seed=seed)
        assert r.error is None, r.error
        z = r.upv_zero_step is not None and r.upv_zero_step <= 20
        loc = r.localized_step is not None and r.localized_step <= 20
        terminated += z or loc
        localized += loc
    dt = time.perf_counter() - t0
    ok = terminated >= 16 and dt < 120
    report(7, ok, f"{terminated}/20 seeds terminate within 20 steps (zero-UPV stop or Tr(P)<=5); "
                  f"{localized}/20 reach Tr(P)<=5; {dt:.1f}s")
    assert ok


@pytest.mark.slow
def test_c8_monte_carlo_trend(report, tmp_path):
    t0 = time.perf_counter()
    cfg = make_config({"cache_dir": str(tmp_path / "cache")})
    rows = run_batch(cfg, ["idastar", "lawnmower"], range(10), tmp_path / "mc", jobs=4)
    dt = time.perf_counter() - t0
    s = {r["method"]: r for r in summarize(rows)}
    a, b = s["idastar"], s["lawnmower"]
    trend = a["median"] <= b["median"]
    report(8, trend and dt < 1800,
           f"median localization step ID-A* {a['median']} ({a['localized']}/10 localized) vs "
           f"lawnmower {b['median']} ({b['localized']}/10); {dt:.0f}s"
           + ("" if trend else " [soft criterion violated]"))
    assert dt < 1800
    if not trend:
        warnings.warn("ID-A* median localization time exceeds the lawnmower median")


def test_c9_variance_and_distances(report, u_graph):
    rng = np.random.default_rng(9)
    D = all_pairs_graph_distance(u_graph)
    npnt, spd = u_graph.node_point, u_graph.node_speed
    worst = 0.0
    for _ in range(3):
        p = rng.random(u_graph.n_nodes) ** 6
        p /= p.sum()
        cov = belief_covariance(p, npnt, spd, D)
        W = np.outer(p, p)
        # explicit O(n^2) pair table, built cell by cell
        sn = sv = 0.0
        for i in range(len(p)):
            sn += float(np.dot(W[i], D[npnt[i], npnt] ** 2))
            sv += float(np.dot(W[i], (spd[i] - spd) ** 2))
        worst = max(worst, abs(cov.sigma_n2 - sn), abs(cov.sigma_v2 - sv))
    fw_bad = 0
    for seed in range(10):
        env = generate_preset(["sparse", "medium", "dense"][seed % 3], 100 + seed, grid_dims=(3, 3))
        g = build_target_graph(env.road, 15.0, (15.0,))
        d = all_pairs_graph_distance(g)
        pts = g.points.tolist()
        for src in range(g.n_points):
            fw_bad += not np.allclose(d[src], _dijkstra(g.point_adj, pts, src), atol=1e-9, rtol=0)
    ok = worst <= 1e-9 and fw_bad == 0
    report(9, ok, f"covariance max deviation {worst:.1e}; FW rows differing from Dijkstra on 10 graphs: {fw_bad}")
    assert ok


def test_c10_determinism(report, tmp_path):
    cfg = tmp_path / "u.json"
    cfg.write_text(json.dumps(u_example_config()))
    same = True
    for planner in ("idastar", "lawnmower"):
        outs = []
        for d in ("a", "b"):
            out = tmp_path / f"{planner}_{d}"
            assert main(["simulate", "--config", str(cfg), "--seed", "11", "--planner", planner,
                         "--out", str(out)]) == 0
            outs.append((out / f"trace_{planner}_11.csv").read_bytes())
        same &= outs[0] == outs[1]
    report(10, same, f"repeated simulate runs byte-identical for idastar and lawnmower: {same}")
    assert same
