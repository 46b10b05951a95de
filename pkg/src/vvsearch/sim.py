"""Closed-loop search simulation: plan, fly, sense, estimate."""

from __future__ import annotations

import io
import math
import time
import traceback
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cache as vcache
from .baselines import WaypointPath, follow_path, lawnmower_plan
from .estimation import (DegenerateUpdateWarning, SensorParams, belief_covariance, likelihood,
                         rbe_update, sense)
from .geometry import Environment, load_environment
from .planner import Horizon, Planner, PlannerParams, fallback_step
from .reachability import ReachTable, VehicleLimits, build_reach_one_step, viability_kernel
from .scenarios import u_environment
from .tables import PlannerTables
from .target import (ManeuverTable, SpeedTransitionFn, all_pairs_graph_distance,
                     build_markov_matrix, build_target_graph)
from .tiles import generate_preset
from .visibility import VisibilityLookup, VoxelGrid, compute_all_slices

TRACE_FIELDS = ("step", "uav_x", "uav_y", "uav_psi", "poi_node", "poi_x", "poi_y",
                "meas_x", "meas_y", "trace", "sigma_n2", "sigma_v2", "plan_depth",
                "expansions", "upv_zero", "degenerate")


def build_environment(cfg: dict) -> Environment:
    e = cfg["environment"]
    if e["file"]:
        return load_environment(e["file"])
    if e["scenario"] == "u":
        return u_environment(e["h_feasible"])
    if e["scenario"]:
        raise ValueError(f"unknown scenario '{e['scenario']}'")
    return generate_preset(e["density"], int(e["seed"]), tuple(e["grid"]), h_feasible=e["h_feasible"])


class World:
    """Everything precomputed for one environment and parameter set."""

    def __init__(self, cfg: dict, env: Environment | None = None, log=None):
        self.cfg = cfg
        self.env = env if env is not None else build_environment(cfg)
        v, p, vox = cfg["vehicle"], cfg["poi"], cfg["voxel"]
        self.limits = VehicleLimits(v["v_min"], v["v_max"], v["turn_rate"], v["dt"])
        self.graph = build_target_graph(self.env.road, p["l_c"], p["speeds"], v["dt"],
                                        allow_stationary=p["stationary"])
        table = ManeuverTable.bundled(int(p["maneuvers"]))
        self.model = build_markov_matrix(self.graph, table, SpeedTransitionFn.from_dict(p["speed_fn"]))
        self.dist = all_pairs_graph_distance(self.graph)
        self.dist_sq = self.dist ** 2
        self.node_point = self.graph.node_point
        self.node_xy = self.graph.node_xy
        self.node_speed = self.graph.node_speed
        self.grid = VoxelGrid.for_environment(self.env, vox["l_v"])
        self.h_uav = v["h_uav"]
        self.sensor = SensorParams(cfg["sensor"]["p_d"], cfg["sensor"]["mu"],
                                   tuple(map(tuple, cfg["sensor"]["R"])), cfg["sensor"]["l_max"])
        self.slices = self._slices(log)
        self.vis = VisibilityLookup(self.slices, self.grid, self.node_point)
        self.reach = ReachTable(self._one_step())
        pc = cfg["planner"]
        self.horizon = Horizon.from_future(pc["horizons"], pc["strides"])
        self.viable = viability_kernel(self.reach, self.grid.shape2)
        self.tables = PlannerTables(self.slices, self.node_point, self.reach, self.horizon.strides,
                                    heading_union=pc["heading_union"])

    def _cache_dir(self):
        d = self.cfg.get("cache_dir")
        return Path(d) if d else None

    def _slices(self, log):
        vox = self.cfg["voxel"]
        l_max = self.cfg["sensor"]["l_max"]
        key = vcache.vv_key(self.env.digest(), self.grid, l_max, self.h_uav, self.graph.points,
                            vox["corners"])
        d = self._cache_dir()
        if d is not None:
            f = d / f"vv_{key}.vvc"
            if f.exists():
                slices, _ = vcache.load_vv(f)
                return slices
        t0 = time.perf_counter()
        slices = compute_all_slices(self.env, self.graph.points, l_max, self.grid, self.h_uav,
                                    vox["corners"])
        if log:
            log(f"computed {len(slices)} visibility planes in {time.perf_counter() - t0:.1f}s")
        if d is not None:
            vcache.save_vv(d / f"vv_{key}.vvc", slices, self.grid,
                           {"env": self.env.digest(), "l_max": l_max, "h_uav": self.h_uav})
        return slices

    def _one_step(self):
        v = self.cfg["vehicle"]
        l_v = self.cfg["voxel"]["l_v"]
        key = vcache.reach_key(self.limits, l_v, v["n_headings"], v["speed_samples"])
        d = self._cache_dir()
        if d is not None and (d / f"reach_{key}.npz").exists():
            return vcache.load_reach(d / f"reach_{key}.npz")
        one = build_reach_one_step(self.limits, l_v, v["n_headings"], v["speed_samples"])
        if d is not None:
            vcache.save_reach(d / f"reach_{key}.npz", one)
        return one

    def planner(self, overrides: dict | None = None) -> Planner:
        pc = dict(self.cfg["planner"])
        pc.update(overrides or {})
        params = PlannerParams(pc["gamma"], pc["beta"], pc["lambda"], pc["max_expansions"],
                               pc["heading_union"])
        return Planner(self.tables, self.model, self.horizon, params, viable=self.viable)

    @property
    def dpsi(self) -> float:
        return 2 * math.pi / self.cfg["vehicle"]["n_headings"]

    def covariance(self, belief):
        return belief_covariance(belief, self.node_point, self.node_speed, self.dist, self.dist_sq)


@dataclass
class TrialResult:
    seed: int
    method: str
    localized_step: int | None
    steps: int
    upv_zero_step: int | None
    rows: list = field(default_factory=list, repr=False)
    timings: list = field(default_factory=list, repr=False)
    error: str | None = None

    def summary(self) -> dict:
        return {"seed": self.seed, "method": self.method, "localized_step": self.localized_step,
                "steps": self.steps, "upv_zero_step": self.upv_zero_step, "error": self.error}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def trace_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRACE_FIELDS) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(r.get(k)) for k in TRACE_FIELDS) + "\n")
    return buf.getvalue()


def _streams(seed: int) -> dict:
    names = ("poi_init", "poi_motion", "detection", "false_alarm", "noise")
    kids = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {n: np.random.default_rng(k) for n, k in zip(names, kids)}


def run_trial(cfg: dict, method: str = "idastar", world: World | None = None,
              seed: int | None = None, stop_on_localize: bool = True,
              belief_log=None) -> TrialResult:
    """Simulate one search until the target is localized or steps run out.

    ``method`` is ``idastar``, ``lawnmower`` or ``replay`` (waypoints from
    ``baseline.replay``).
    """
    seed = int(cfg["seed"] if seed is None else seed)
    result = TrialResult(seed, method, None, 0, None)
    try:
        world = world or World(cfg)
        _run(cfg, method, world, seed, result, stop_on_localize, belief_log)
    except Exception as exc:  # recorded so Monte-Carlo runs continue
        result.error = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"
    return result


def _run(cfg, method, world: World, seed, result: TrialResult, stop_on_localize, belief_log):
    rng = _streams(seed)
    g = world.graph
    init = cfg["initial"]
    dt = cfg["vehicle"]["dt"]
    threshold = cfg["localization_threshold"]
    l_c = cfg["poi"]["l_c"]
    # target start: uniform over states unless pinned
    poi = init["poi_node"]
    if poi is None:
        poi = int(rng["poi_init"].integers(g.n_nodes))
    belief = g.uniform_belief()

    planner = path = None
    if method == "idastar":
        planner = world.planner()
        cell = world.grid.cell_of(init["x"], init["y"])
        if not world.grid.in_grid(*cell):
            raise ValueError("initial UAV position lies outside the grid")
        heading = int(round(init["psi"] / world.dpsi)) % cfg["vehicle"]["n_headings"]
        if not world.viable[cell[0], cell[1], heading]:
            warnings.warn("initial UAV state cannot stay inside the grid; plans may leave it")
        x, y = world.grid.cell_center(*cell)
        psi = heading * world.dpsi
    elif method in ("lawnmower", "replay"):
        q0 = (init["x"], init["y"], init["psi"])
        if method == "lawnmower":
            b = cfg["baseline"]
            path = lawnmower_plan(world.env, b["spacing"], world.limits, q0, b["anchor"])
        else:
            path = WaypointPath.load(cfg["baseline"]["replay"])
        x, y, psi = q0
    else:
        raise ValueError(f"unknown method '{method}'")

    for k in range(int(cfg["max_steps"])):
        t0 = time.perf_counter()
        depth = expansions = 0
        zero = False
        if planner is not None:
            plan = planner.iterative_deepening(cell, heading, belief)
            step = plan.first_step()
            if step is None:
                step = fallback_step(world.reach, cell, heading, world.grid.shape2, world.viable)
            depth, expansions, zero = plan.depth, plan.expansions, plan.zero_stop
            cell, heading = step
            x, y = world.grid.cell_center(*cell)
            psi = heading * world.dpsi
        else:
            x, y, psi = follow_path(path, (k + 1) * dt)
        t_plan = time.perf_counter() - t0
        if zero and result.upv_zero_step is None:
            result.upv_zero_step = k + 1

        poi = world.model.sample_step(poi, rng["poi_motion"])
        vis_nodes = world.vis.nodes_visible_from(x, y)
        xi = sense(poi, vis_nodes, world.node_xy, world.sensor, rng["detection"], rng["false_alarm"],
                   rng["noise"])
        belief = world.model.propagate(belief, 1)
        lik = likelihood(xi, vis_nodes, world.node_xy, world.sensor, l_c)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateUpdateWarning)
            belief, ok = rbe_update(belief, lik, return_flag=True)
        cov = world.covariance(belief)
        if belief_log is not None:
            belief_log(k + 1, belief)
        row = {"step": k + 1, "uav_x": x, "uav_y": y, "uav_psi": psi, "poi_node": poi,
               "poi_x": g.node_xy[poi, 0], "poi_y": g.node_xy[poi, 1],
               "meas_x": None if xi is None else xi[0], "meas_y": None if xi is None else xi[1],
               "trace": cov.trace, "sigma_n2": cov.sigma_n2, "sigma_v2": cov.sigma_v2,
               "plan_depth": depth, "expansions": expansions, "upv_zero": zero,
               "degenerate": not ok}
        result.rows.append(row)
        result.timings.append({"step": k + 1, "plan_seconds": t_plan,
                               "step_seconds": time.perf_counter() - t0})
        result.steps = k + 1
        if cov.trace <= threshold and result.localized_step is None:
            result.localized_step = k + 1
            if stop_on_localize:
                break
    return result


def write_trial(result: TrialResult, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace = out / f"trace_{result.method}_{result.seed}.csv"
    trace.write_text(trace_csv(result.rows))
    tim = out / f"timings_{result.method}_{result.seed}.csv"
    lines = ["step,plan_seconds,step_seconds"] + [
        f"{t['step']},{t['plan_seconds']:.6f},{t['step_seconds']:.6f}" for t in result.timings]
    tim.write_text("\n".join(lines) + "\n")
    return trace, tim


