"""Trajectory tables, run summaries and plot data.

One CSV per agent holds a row per step: the full 12-state, the absolute input
applied from that step to the next (empty on the final row), the mode label,
the payload flag and the name of the sub-task the step belongs to.  Floats are
written with ``repr`` so a table read back reproduces the planned numbers
exactly.  ``summary.json`` and ``plot_data.json`` depend only on the plan;
wall-clock times go to ``timings.json`` so repeated runs export identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import mtl
from .dynamics import INPUT_NAMES, STATE_NAMES
from .planner import Report, Segment, Trajectory
from .workspace import Workspace

COLUMNS = ("step", "t", "agent", "segment", "mode", "payload") + STATE_NAMES + INPUT_NAMES


class TrajectoryFormatError(ValueError):
    """A trajectory table that cannot be read back."""


def _f(v: float) -> str:
    return repr(float(v))


def trajectory_csv(traj: Trajectory) -> str:
    seg_of = _segment_names(traj)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(COLUMNS)
    for k in range(len(traj.states)):
        u = [_f(v) for v in traj.inputs[k]] if k < len(traj.inputs) else [""] * len(INPUT_NAMES)
        wr.writerow([k, _f(round(k * traj.dt, 9)), traj.agent, seg_of[k], traj.modes[k],
                     int(bool(traj.payload[k]))] + [_f(v) for v in traj.states[k]] + u)
    return buf.getvalue()


def _segment_names(traj: Trajectory) -> List[str]:
    names = [""] * len(traj.states)
    for s in traj.segments:
        for k in range(s.offset, min(s.offset + s.length, len(names))):
            names[k] = s.name
    if traj.segments and names:
        names[-1] = traj.segments[-1].name
    return names


def read_trajectory(path_or_text: str, dt: Optional[float] = None, text: bool = False) -> Trajectory:
    """Parse a table written by :func:`trajectory_csv`.

    Segment objects carry names, offsets and lengths only; their formulas are
    placeholders (``true``) until matched against a mission.
    """
    if text:
        raw = path_or_text
    else:
        try:
            with open(path_or_text, newline="") as fh:
                raw = fh.read()
        except OSError as exc:
            raise TrajectoryFormatError(f"cannot read {path_or_text}: {exc.strerror}") from exc
    rows = list(csv.reader(io.StringIO(raw)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise TrajectoryFormatError("missing or unexpected header row")
    rows = rows[1:]
    if not rows:
        raise TrajectoryFormatError("no data rows")
    states, inputs, modes, payload, segs, agents, times = [], [], [], [], [], set(), []
    ns, ni = len(STATE_NAMES), len(INPUT_NAMES)
    for i, r in enumerate(rows):
        line = i + 2
        if len(r) != len(COLUMNS):
            raise TrajectoryFormatError(f"line {line}: {len(r)} fields, expected {len(COLUMNS)}")
        try:
            step = int(r[0])
            times.append(float(r[1]))
            x = [float(v) for v in r[6:6 + ns]]
        except ValueError:
            raise TrajectoryFormatError(f"line {line}: non-numeric field") from None
        if step != i:
            raise TrajectoryFormatError(f"line {line}: step {step}, expected {i}")
        if r[5] not in ("0", "1"):
            raise TrajectoryFormatError(f"line {line}: payload must be 0 or 1")
        u = r[6 + ns:]
        last = i == len(rows) - 1
        if last:
            if any(u):
                raise TrajectoryFormatError(f"line {line}: final row carries an input (file truncated?)")
        else:
            try:
                inputs.append([float(v) for v in u])
            except ValueError:
                raise TrajectoryFormatError(f"line {line}: missing or non-numeric input") from None
        if not np.all(np.isfinite(x)):
            raise TrajectoryFormatError(f"line {line}: non-finite state")
        states.append(x)
        agents.add(r[2])
        segs.append(r[3])
        modes.append(r[4])
        payload.append(r[5] == "1")
    if len(agents) != 1:
        raise TrajectoryFormatError(f"expected one agent per file, found {sorted(agents)}")
    if dt is None:
        dt = times[1] - times[0] if len(times) > 1 else 0.2
    segments = []
    start = 0
    n = len(segs)
    for k in range(1, n + 1):
        if k == n or segs[k] != segs[start]:
            end = k if k < n else n - 1
            if segs[start] and end > start:
                segments.append(Segment(segs[start], modes[start].split(":")[0], start, end - start,
                                        mtl.TRUE))
            start = k
    names = [s.name for s in segments]
    if len(set(names)) != len(names):
        raise TrajectoryFormatError("a segment name appears in two separate runs")
    return Trajectory(agents.pop(), float(dt), np.array(states), np.array(inputs).reshape(-1, ni),
                      modes, payload, segments)


# ---------------------------------------------------------------------------
# JSON documents

def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _region_json(w: Workspace) -> list:
    out = []
    for r in w.regions:
        parts = []
        for p in r.parts:
            b = p.as_box()
            if b is not None:
                parts.append({"min": [_num(v) for v in b[0]], "max": [_num(v) for v in b[1]]})
            else:
                parts.append({"halfspaces": [{"normal": [_num(v) for v in h.normal],
                                              "offset": _num(h.offset)} for h in p.halfspaces]})
        out.append({"label": r.label, "parts": parts})
    return out


def _verdicts(rep: Report) -> list:
    return [{"subtask": v.name, "formula": v.formula, "offset": v.offset, "end": v.end, "ok": v.ok,
             "first_violation": v.first_violation, "error": v.error} for v in rep.verdicts]


def summary(result) -> dict:
    """Deterministic run summary of a :class:`~mtlplan.pipeline.PlanResult`."""
    agents = {}
    for a in sorted(result.trajectories):
        t = result.trajectories[a]
        agents[a] = {
            "steps": t.steps,
            "rows": len(t.states),
            "segments": [{"name": s.name, "mode": s.mode, "offset": s.offset, "length": s.length,
                          "formula": s.text, "objective": _num(s.objective), "nodes": s.nodes,
                          "binaries": s.n_binaries, "constraints": s.n_constraints,
                          "status": s.status} for s in t.segments],
            "bridges": [{"step": k, "path": list(p)} for k, p in t.bridges],
            "total_objective": _num(sum(s.objective for s in t.segments)),
            "verdicts": _verdicts(result.reports[a]),
        }
    c = result.coordination
    coord = None
    if c is not None:
        coord = {"high": c.high, "low": c.low, "window": c.window, "wait_region": c.wait_region,
                 "release_step": c.release_step, "wait_start": c.wait_start,
                 "wait_steps": c.wait_steps, "min_separation": _num(c.min_separation),
                 "separation_step": c.separation_step}
    return {
        "mission": result.spec.name,
        "dt": result.spec.config.dt,
        "ok": result.ok,
        "agents": agents,
        "coordination": coord,
        "checks": [{"name": k.name, "agents": list(k.agents), "ok": k.ok, "detail": k.detail,
                    "step": k.step} for k in result.checks],
    }


def timings(result) -> dict:
    return {
        "total_wall_time": result.wall_time,
        "subtasks": [{"agent": a, "name": s.name, "wall_time": s.wall_time, "nodes": s.nodes}
                     for a in sorted(result.trajectories) for s in result.trajectories[a].segments],
    }


def plot_data(result) -> dict:
    w = result.spec.workspace
    agents = {}
    for a in sorted(result.trajectories):
        t = result.trajectories[a]
        agents[a] = {"t": [_num(round(k * t.dt, 9)) for k in range(len(t.states))],
                     "position": [[_num(v) for v in p] for p in t.positions],
                     "mode": list(t.modes), "payload": [bool(p) for p in t.payload]}
    c = result.coordination
    return {
        "bounds": {"min": [_num(v) for v in w.lo], "max": [_num(v) for v in w.hi]},
        "regions": _region_json(w),
        "agents": agents,
        # one ring per step spent waiting
        "wait_rings": None if c is None or c.wait_region is None else
        {"agent": c.low, "region": c.wait_region, "count": c.wait_steps},
    }


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_all(result, out_dir: str) -> Dict[str, str]:
    """Write every export into ``out_dir``; returns ``{kind: path}``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def put(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        paths[name] = path

    for a in sorted(result.trajectories):
        put(f"{a}.csv", trajectory_csv(result.trajectories[a]))
    put("summary.json", _dump(summary(result)))
    put("plot_data.json", _dump(plot_data(result)))
    put("timings.json", _dump(timings(result)))
    return paths


DETERMINISTIC_SUFFIXES: Sequence[str] = (".csv", "summary.json", "plot_data.json")
