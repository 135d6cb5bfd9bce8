"""Command-line front end: ``plan``, ``verify``, ``simulate`` and ``demo``.

Exit codes: 0 success, 2 malformed input (mission or trajectory file),
3 a sub-task could not be planned, 4 a formula or multi-agent check failed,
5 the nonlinear replay diverged.  Log verbosity follows ``MTLPLAN_LOG``
(``DEBUG``, ``INFO``, ``WARNING``; default ``WARNING``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, mtl
from .demo import write_demo
from .dynamics import SimulationDivergence, simulate_nonlinear
from .export import TrajectoryFormatError, read_trajectory, write_all
from .missionfile import MissionError, MissionSpec, load_mission
from .pipeline import Check, pair_checks, run
from .planner import InfeasibleError, PlanningError, Report, Trajectory, segment_formulas, verify
from .workspace import trace_of

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFY = 4
EXIT_DIVERGED = 5

DEMO_NAMES = ("demo", "demo_mission")

log = logging.getLogger("mtlplan")


def _setup_logging() -> None:
    level = os.environ.get("MTLPLAN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load(path: str) -> MissionSpec:
    if not os.path.exists(path) and path in DEMO_NAMES:
        from .demo import demo_mission
        from .missionfile import parse_mission
        return parse_mission(demo_mission())
    return load_mission(path)


def failing_conjuncts(f: mtl.Formula, trace, offset: int, end: int) -> List[str]:
    """Texts of the top-level conjuncts of ``f`` that fail (``f`` itself if not a conjunction)."""
    parts = f.args if isinstance(f, mtl.And) else (f,)
    return [mtl.to_text(g) for g in parts if not mtl.evaluate(g, trace, offset, end=end)]


def _print_failures(traj: Trajectory, rep: Report, spec: MissionSpec) -> None:
    trace = trace_of(spec.workspace, traj)
    for v in rep.failures():
        if v.error:
            print(f"FAIL {traj.agent} {v.name}: {v.error}")
            continue
        seg = next(s for s in traj.segments if s.name == v.name)
        bad = ", ".join(failing_conjuncts(seg.formula, trace, v.offset, v.end))
        where = f" (first violation at step {v.first_violation})" if v.first_violation is not None else ""
        print(f"FAIL {traj.agent} {v.name}: {bad} does not hold{where}")


def _print_checks(checks: Sequence[Check]) -> None:
    for c in checks:
        print(f"{'ok  ' if c.ok else 'FAIL'} {c.name} {'/'.join(c.agents)}: {c.detail}")


# ---------------------------------------------------------------------------
# commands

def cmd_plan(mission: str, out: str, node_limit: Optional[int] = None,
             time_limit: Optional[float] = None, export_lp: Optional[str] = None,
             seed: Optional[int] = None) -> int:
    try:
        spec = _load(mission)
    except MissionError as exc:
        _err(str(exc))
        return EXIT_SCHEMA
    overrides = {}
    if node_limit is not None:
        overrides["node_limit"] = node_limit
    if time_limit is not None:
        overrides["time_limit"] = time_limit
    if export_lp is not None:
        overrides["export_lp"] = export_lp
    if seed is not None:
        log.debug("seed %d ignored: the pipeline is deterministic", seed)
    try:
        result = run(spec, **overrides)
    except mtl.HorizonError as exc:
        _err(str(exc))
        return EXIT_SCHEMA
    except PlanningError as exc:
        kind = "infeasible" if isinstance(exc, InfeasibleError) else "planning failed"
        _err(f"{kind}: sub-task {exc.subtask or '?'}: {exc}")
        return EXIT_INFEASIBLE
    paths = write_all(result, out)
    print(f"{'agent':<6} {'sub-task':<12} {'mode':<8} {'steps':>5} {'bins':>5} {'rows':>6} "
          f"{'nodes':>6} {'objective':>10} {'time[s]':>8}")
    for a in sorted(result.trajectories):
        for s in result.trajectories[a].segments:
            print(f"{a:<6} {s.name:<12} {s.mode:<8} {s.length:>5} {s.n_binaries:>5} "
                  f"{s.n_constraints:>6} {s.nodes:>6} {s.objective:>10.4f} {s.wall_time:>8.2f}")
    if result.coordination is not None:
        c = result.coordination
        print(f"{c.low} waits {c.wait_steps} steps at {c.wait_region} "
              f"({c.high} leaves {c.window} at step {c.release_step})")
    for a in sorted(result.trajectories):
        _print_failures(result.trajectories[a], result.reports[a], spec)
    _print_checks(result.checks)
    print(f"wrote {len(paths)} files to {out} in {result.wall_time:.1f} s")
    return EXIT_OK if result.ok else EXIT_VERIFY


def _load_trajectories(spec: MissionSpec, paths: Sequence[str]) -> Dict[str, Trajectory]:
    """Read trajectory tables and attach each segment's formula from the mission."""
    out: Dict[str, Trajectory] = {}
    for p in paths:
        t = read_trajectory(p, dt=spec.config.dt)
        try:
            m = spec.mission(t.agent)
        except KeyError:
            raise TrajectoryFormatError(f"{p}: agent {t.agent!r} is not in the mission") from None
        if t.agent in out:
            raise TrajectoryFormatError(f"{p}: agent {t.agent!r} given twice")
        tasks = {st.name: st for st in m.subtasks}
        for s in t.segments:
            st = tasks.get(s.name)
            if st is None:
                raise TrajectoryFormatError(f"{p}: segment {s.name!r} is not a sub-task of {t.agent}")
            if not st.wait and s.length != st.steps():
                raise TrajectoryFormatError(
                    f"{p}: segment {s.name!r} has {s.length} steps, the mission gives {st.steps()}")
            s.formula = st.formula
        out[t.agent] = t
    return out


def cmd_verify(mission: str, trajectories: Sequence[str]) -> int:
    try:
        spec = _load(mission)
        trajs = _load_trajectories(spec, trajectories)
    except (MissionError, TrajectoryFormatError) as exc:
        _err(str(exc))
        return EXIT_SCHEMA
    ok = True
    for a in sorted(trajs):
        t = trajs[a]
        rep = verify(t, segment_formulas(t), spec.workspace)
        for v in rep.verdicts:
            if v.ok:
                print(f"ok   {a} {v.name}: {v.formula}")
        _print_failures(t, rep, spec)
        ok &= rep.ok
    checks = pair_checks(trajs, spec)
    _print_checks(checks)
    ok &= all(c.ok for c in checks)
    return EXIT_OK if ok else EXIT_VERIFY


def drift_report(spec: MissionSpec, trajs: Dict[str, Trajectory]) -> List[dict]:
    """Replay each segment's inputs from its planned start state on the nonlinear model."""
    rows = []
    for a in sorted(trajs):
        t = trajs[a]
        for s in t.segments:
            o, n = s.offset, s.length
            sim = simulate_nonlinear(spec.config.params, t.states[o], t.inputs[o:o + n], t.dt)
            d = np.linalg.norm(sim[:, :3] - t.states[o:o + n + 1, :3], axis=1)
            rows.append({"agent": a, "segment": s.name, "steps": n,
                         "terminal_drift": float(d[-1]), "max_drift": float(d.max())})
    return rows


def cmd_simulate(mission: str, trajectories: Sequence[str], max_drift: Optional[float] = None,
                 report: Optional[str] = None) -> int:
    try:
        spec = _load(mission)
        trajs = _load_trajectories(spec, trajectories)
    except (MissionError, TrajectoryFormatError) as exc:
        _err(str(exc))
        return EXIT_SCHEMA
    try:
        rows = drift_report(spec, trajs)
    except SimulationDivergence as exc:
        _err(f"nonlinear replay diverged: {exc}")
        return EXIT_DIVERGED
    print(f"{'agent':<6} {'segment':<12} {'steps':>5} {'terminal[m]':>12} {'max[m]':>8}")
    for r in rows:
        print(f"{r['agent']:<6} {r['segment']:<12} {r['steps']:>5} {r['terminal_drift']:>12.4f} "
              f"{r['max_drift']:>8.4f}")
    if report:
        with open(report, "w") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
    if max_drift is not None:
        bad = [r for r in rows if r["terminal_drift"] > max_drift]
        for r in bad:
            print(f"FAIL {r['agent']} {r['segment']}: terminal drift {r['terminal_drift']:.4f} m "
                  f"exceeds {max_drift} m")
        if bad:
            return EXIT_VERIFY
    return EXIT_OK


def cmd_demo(out: str, **kw) -> int:
    os.makedirs(out, exist_ok=True)
    path = write_demo(os.path.join(out, "demo_mission.json"))
    return cmd_plan(path, out, **kw)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mtlplan",
        description="Plan quadrotor missions from temporal-logic sub-tasks and check the result.",
        epilog="exit codes: 0 ok, 2 bad input, 3 infeasible, 4 check failed, 5 diverged")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="reserved; planning is deterministic")
        p.add_argument("--node-limit", type=int, help="branch-and-bound node limit per sub-task")
        p.add_argument("--time-limit", type=float, help="solver time limit per sub-task in seconds")
        p.add_argument("--export-lp", metavar="DIR", help="write each sub-task model as an LP file")

    p = sub.add_parser("plan", help="plan a mission file and export the trajectories")
    p.add_argument("mission", help="mission JSON file (or 'demo' for the built-in scenario)")
    solver_flags(p)
    p = sub.add_parser("verify", help="re-check exported trajectories against a mission")
    p.add_argument("mission")
    p.add_argument("trajectories", nargs="+", help="trajectory CSV files")
    p = sub.add_parser("simulate", help="replay exported inputs on the nonlinear model")
    p.add_argument("mission")
    p.add_argument("trajectories", nargs="+")
    p.add_argument("--max-drift", type=float, help="fail (exit 4) above this terminal drift in metres")
    p.add_argument("--report", help="write the drift report as JSON")
    p = sub.add_parser("demo", help="write the two-quadrotor scenario and plan it")
    solver_flags(p)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    solver = {k: getattr(args, k, None) for k in ("node_limit", "time_limit", "export_lp", "seed")}
    if args.command == "plan":
        return cmd_plan(args.mission, args.out, **solver)
    if args.command == "verify":
        return cmd_verify(args.mission, args.trajectories)
    if args.command == "simulate":
        return cmd_simulate(args.mission, args.trajectories, args.max_drift, args.report)
    return cmd_demo(args.out, **solver)


if __name__ == "__main__":
    sys.exit(main())
