"""Sub-task planning, trajectory composition and two-agent coordination.

Each sub-task is one MILP over its own horizon.  Segments chain through their
boundary states; when two consecutive modes are not directly connected the
automaton's Hover bridge is taken at the boundary step, and the guards along
that bridge (plus whatever the next sub-task needs at its first step) are
imposed on the final state of the earlier segment.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import mtl
from .dynamics import (GRASP, HOVER, Guard, HybridAutomaton, QuadrotorParams, default_automaton,
                       grasp_phases, guard_satisfied)
from .encoder import EncodingConfig, EncodingError, build
from .milp import NODE_LIMIT, OPTIMAL, solve_milp
from .mtl import Always, And, Atom, Eventually, Formula
from .workspace import Workspace, contains, trace_of

log = logging.getLogger(__name__)

CONTINUITY_TOL = 1e-6
MAX_HORIZON = 30


class PlanningError(RuntimeError):
    """A sub-task could not be planned; ``subtask`` names it."""

    def __init__(self, msg: str, subtask: str = ""):
        super().__init__(f"{subtask}: {msg}" if subtask else msg)
        self.subtask = subtask


class InfeasibleError(PlanningError):
    pass


class ContinuityError(PlanningError):
    pass


class CoordinationError(PlanningError):
    def __init__(self, msg: str, step: Optional[int] = None):
        super().__init__(msg)
        self.step = step


@dataclass(frozen=True)
class SubTask:
    name: str
    formula: Formula
    mode: str
    horizon: Optional[int] = None
    entry_guard: Optional[Guard] = None
    # region whose touchdown attaches the payload (grasp sub-tasks only)
    grasp: Optional[str] = None
    # length set by coordination instead of the formula
    wait: bool = False

    def steps(self) -> int:
        if self.horizon is not None:
            return self.horizon
        return max(1, mtl.bounded_horizon(mtl.to_nnf(self.formula)))

    @property
    def text(self) -> str:
        return mtl.to_text(self.formula)


@dataclass(frozen=True)
class Mission:
    agent: str
    x0: np.ndarray
    subtasks: tuple
    priority: int = 0

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (12,):
            raise ValueError(f"{self.agent}: initial state must have 12 entries")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "subtasks", tuple(self.subtasks))


@dataclass
class PlannerConfig:
    params: QuadrotorParams = field(default_factory=QuadrotorParams)
    dt: float = 0.2
    max_horizon: int = MAX_HORIZON
    eps: float = 1e-4
    M: Optional[float] = None
    node_limit: int = 20000
    time_limit: Optional[float] = None
    automaton: Optional[HybridAutomaton] = None
    export_lp: Optional[str] = None
    separation: float = 0.5

    def __post_init__(self):
        if self.automaton is None:
            self.automaton = default_automaton(self.params, self.dt)


@dataclass
class Segment:
    name: str
    mode: str
    offset: int
    length: int
    formula: Formula
    objective: float = 0.0
    nodes: int = 0
    wall_time: float = 0.0
    n_binaries: int = 0
    n_constraints: int = 0
    status: str = OPTIMAL

    @property
    def text(self) -> str:
        return mtl.to_text(self.formula)


@dataclass
class Trajectory:
    """Planned states (12-dim) and absolute inputs on a uniform time grid."""

    agent: str
    dt: float
    states: np.ndarray
    inputs: np.ndarray
    modes: List[str]
    payload: List[bool]
    segments: List[Segment] = field(default_factory=list)
    bridges: List[Tuple[int, Tuple[str, ...]]] = field(default_factory=list)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 12)
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, 4)
        k = len(self.states)
        if k and len(self.inputs) != k - 1:
            raise ValueError(f"{len(self.inputs)} inputs for {k} states")
        if len(self.modes) != k or len(self.payload) != k:
            raise ValueError("mode/payload labels must match the state count")

    @property
    def steps(self) -> int:
        return max(len(self.states) - 1, 0)

    @property
    def timestamps(self) -> np.ndarray:
        return self.dt * np.arange(len(self.states))

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :3]

    def position(self, k: int) -> np.ndarray:
        """Position at step ``k``; holds the last state after the end."""
        return self.states[min(k, len(self.states) - 1), :3]


# ---------------------------------------------------------------------------
# single sub-task

def required_regions(f: Formula) -> List[str]:
    """Positive atoms ``f`` needs at its first step (top-level ``p`` or ``G[0,b] p``)."""
    out = []
    parts = f.args if isinstance(f, And) else (f,)
    for g in parts:
        if isinstance(g, Atom):
            out.append(g.label)
        elif isinstance(g, Always) and g.interval.lo == 0 and isinstance(g.arg, Atom):
            out.append(g.arg.label)
    return out


def _grasp_label(st: SubTask) -> Optional[str]:
    if st.grasp is not None:
        return st.grasp
    f = mtl.to_nnf(st.formula)
    for g in (f.args if isinstance(f, And) else (f,)):
        if isinstance(g, Eventually) and isinstance(g.arg, Atom):
            return g.arg.label
    return None


def plan_subtask(st: SubTask, x0, w: Workspace, cfg: PlannerConfig,
                 terminal: Optional[Guard] = None, payload: bool = False) -> Trajectory:
    """Encode, solve and monitor-check one sub-task starting from ``x0`` (12-state)."""
    x0 = np.asarray(x0, dtype=float)
    aut = cfg.automaton
    if st.mode not in aut.modes:
        raise PlanningError(f"unknown mode {st.mode!r}", st.name)
    mode = aut.modes[st.mode]
    N = st.steps()
    if N > cfg.max_horizon:
        raise mtl.HorizonError(f"{st.name}: horizon {N} exceeds the limit {cfg.max_horizon}")
    if st.entry_guard is not None and not guard_satisfied(st.entry_guard, x0, w, tol=1e-6):
        raise PlanningError(f"initial state violates the entry guard {st.entry_guard.name!r}", st.name)
    try:
        enc = build(mode, mode.reduce_state(x0), st.formula, w,
                    EncodingConfig(N=N, M=cfg.M, eps=cfg.eps), terminal)
    except (EncodingError, mtl.HorizonError) as exc:
        raise PlanningError(str(exc), st.name) from exc
    if cfg.export_lp:
        from .milp.lpformat import write_lp
        os.makedirs(cfg.export_lp, exist_ok=True)
        safe = "".join(c if c.isalnum() else "_" for c in st.name)
        with open(os.path.join(cfg.export_lp, f"{safe}.lp"), "w") as fh:
            write_lp(enc.model, fh)
    res = solve_milp(enc.model, node_limit=cfg.node_limit, time_limit=cfg.time_limit)
    log.info("%s: %s obj=%.4g nodes=%d bins=%d %.2fs", st.name, res.status, res.objective,
             res.nodes_explored, len(enc.model.binary_ids), res.wall_time)
    if res.x is None:
        why = "node limit reached without a feasible plan" if res.status == NODE_LIMIT else "infeasible"
        raise InfeasibleError(why, st.name)
    X, U = enc.decode(res.x)
    states = np.array([mode.expand_state(x) for x in X])
    # the boundary state is inherited exactly so stitching is lossless
    states[0] = x0
    inputs = np.array([mode.full_input(u) for u in U])
    if not mtl.evaluate(st.formula, trace_of(w, states[:, :3]), 0, end=N):
        raise PlanningError("solver output fails the monitor check", st.name)
    seg = Segment(st.name, st.mode, 0, N, st.formula, res.objective, res.nodes_explored,
                  res.wall_time, len(enc.model.binary_ids), len(enc.model.constraints), res.status)
    if st.mode == GRASP:
        label = _grasp_label(st)
        touched = [label is not None and w.region(label).contains(p) for p in states[:, :3]]
        phases, flags = grasp_phases(states[:, 2], touched)
        modes = [f"{GRASP}:{ph}" for ph in phases]
        flags = [payload or f for f in flags]
    else:
        modes = [st.mode] * (N + 1)
        flags = [payload] * (N + 1)
    return Trajectory("", cfg.dt, states, inputs, modes, flags, [seg])


# ---------------------------------------------------------------------------
# composition

def compose(segments: Sequence[Trajectory], automaton: Optional[HybridAutomaton] = None,
            tol: float = CONTINUITY_TOL) -> Trajectory:
    """Concatenate segments, dropping each duplicated boundary state."""
    segments = [s for s in segments if s is not None]
    if not segments:
        raise ValueError("nothing to compose")
    dt = segments[0].dt
    states = [segments[0].states]
    inputs = [segments[0].inputs]
    modes = list(segments[0].modes)
    payload = list(segments[0].payload)
    segs = [replace(s) for s in segments[0].segments]
    bridges = list(segments[0].bridges)
    offset = segments[0].steps
    for prev, nxt in zip(segments, segments[1:]):
        if abs(nxt.dt - dt) > 1e-12:
            raise ContinuityError(f"segment step {nxt.dt} differs from {dt}")
        gap = float(np.max(np.abs(nxt.states[0] - prev.states[-1])))
        if gap > tol:
            raise ContinuityError(f"boundary jump of {gap:.3g} before {_first_name(nxt)}",
                                  _first_name(nxt))
        src = _base(prev.modes[-1])
        dst = _base(nxt.modes[0])
        if automaton is not None:
            path = automaton.bridge(src, dst)
            if len(path) > 2:
                bridges.append((offset, tuple(path)))
        states.append(nxt.states[1:])
        inputs.append(nxt.inputs)
        modes[-1] = nxt.modes[0]
        modes.extend(nxt.modes[1:])
        payload[-1] = payload[-1] or nxt.payload[0]
        payload.extend(nxt.payload[1:])
        for s in nxt.segments:
            segs.append(replace(s, offset=s.offset + offset))
        bridges.extend((k + offset, p) for k, p in nxt.bridges)
        offset += nxt.steps
    return Trajectory(segments[0].agent, dt, np.vstack(states), np.vstack(inputs), modes, payload,
                      segs, bridges)


def _base(mode_label: str) -> str:
    return mode_label.split(":", 1)[0]


def _first_name(t: Trajectory) -> str:
    return t.segments[0].name if t.segments else "?"


def _exit_guard(st: SubTask, nxt: Optional[SubTask], aut: HybridAutomaton) -> Optional[Guard]:
    if nxt is None:
        return None
    g = aut.path_guard(st.mode, nxt.mode)
    if nxt.entry_guard is not None:
        g = g & nxt.entry_guard
    need = tuple(r for r in required_regions(mtl.to_nnf(nxt.formula)) if r not in g.regions)
    if need:
        g = g & Guard(regions=need)
    return g if (g.halfspaces or g.regions) else None


def plan_chain(agent: str, x0, subtasks: Sequence[SubTask], w: Workspace, cfg: PlannerConfig,
               next_task: Optional[SubTask] = None, payload: bool = False) -> List[Trajectory]:
    """Plan ``subtasks`` in order; ``next_task`` only shapes the last exit guard."""
    out = []
    x = np.asarray(x0, dtype=float)
    for i, st in enumerate(subtasks):
        nxt = subtasks[i + 1] if i + 1 < len(subtasks) else next_task
        guard = _exit_guard(st, nxt, cfg.automaton)
        if out:
            prev_mode = subtasks[i - 1].mode
            cfg.automaton.bridge(prev_mode, st.mode)
        seg = plan_subtask(st, x, w, cfg, terminal=guard, payload=payload)
        seg.agent = agent
        out.append(seg)
        x = seg.states[-1]
        payload = seg.payload[-1]
    return out


def plan_mission(m: Mission, w: Workspace, cfg: PlannerConfig) -> Trajectory:
    """Plan every sub-task of ``m`` in order and stitch the segments.

    Wait sub-tasks are skipped here (their length comes from coordination).
    """
    tasks = [st for st in m.subtasks if not st.wait]
    if not tasks:
        return _stationary(m.agent, m.x0, cfg.dt, HOVER)
    segs = plan_chain(m.agent, m.x0, tasks, w, cfg)
    traj = compose(segs, cfg.automaton)
    traj.agent = m.agent
    return traj


def _stationary(agent: str, x0, dt: float, mode: str, payload: bool = False) -> Trajectory:
    return Trajectory(agent, dt, np.asarray(x0, dtype=float)[None, :], np.zeros((0, 4)), [mode],
                      [payload])


# ---------------------------------------------------------------------------
# coordination

@dataclass
class CoordinationPlan:
    high: str
    low: str
    window: str
    wait_region: Optional[str]
    release_step: int
    wait_start: int
    wait_steps: int
    min_separation: float = np.inf
    separation_step: int = -1


def steps_inside(traj: Trajectory, w: Workspace, label: str) -> List[int]:
    region = w.region(label)
    return [k for k, p in enumerate(traj.positions) if region.active(k) and region.contains(p)]


def release_step(traj: Trajectory, w: Workspace, window: str) -> int:
    """First step after the last one the trajectory spends inside ``window`` (0 if never)."""
    inside = steps_inside(traj, w, window)
    return inside[-1] + 1 if inside else 0


def coordinate(high: Mission, low: Mission, w: Workspace, cfg: PlannerConfig, window: str,
               wait_region: Optional[str] = None,
               separation: Optional[float] = None,
               check: bool = True) -> Tuple[Trajectory, Trajectory, CoordinationPlan]:
    """Plan ``high`` first, hold ``low`` at its wait sub-task until the window clears.

    The wait sub-task of ``low`` (flagged ``wait``) is planned as a hold of
    ``r = max(0, R - arrival)`` steps where ``R`` is the high-priority agent's
    release step; with ``r = 0`` it is dropped.  With ``check=False`` the
    mutual-exclusion and separation checks are left to the caller.
    """
    sep = cfg.separation if separation is None else separation
    if high.subtasks:
        t_high = plan_mission(high, w, cfg)
    else:
        t_high = _stationary(high.agent, high.x0, cfg.dt, HOVER)
    R = release_step(t_high, w, window) if high.subtasks else 0

    tasks = list(low.subtasks)
    k = next((i for i, st in enumerate(tasks) if st.wait), None)
    if k is None:
        before, wait_task, after = tasks, None, []
    else:
        before, wait_task, after = tasks[:k], tasks[k], tasks[k + 1:]
    segs: List[Trajectory] = []
    x, payload = low.x0, False
    if before:
        lookahead = wait_task if wait_task is not None else (after[0] if after else None)
        segs += plan_chain(low.agent, x, before, w, cfg, next_task=lookahead)
        x, payload = segs[-1].states[-1], segs[-1].payload[-1]
    arrival = sum(s.steps for s in segs)
    r = max(0, R - arrival) if wait_task is not None else 0
    if wait_task is not None and r > 0:
        hold = replace(wait_task, horizon=r)
        segs += plan_chain(low.agent, x, [hold], w, cfg, next_task=after[0] if after else None,
                           payload=payload)
        x, payload = segs[-1].states[-1], segs[-1].payload[-1]
    if after:
        if wait_task is not None and r == 0 and segs:
            # the hold vanished, so the previous segment never saw this exit guard
            log.info("%s: no wait needed at %s", low.agent, wait_region)
        segs += plan_chain(low.agent, x, after, w, cfg, payload=payload)
    t_low = compose(segs, cfg.automaton) if segs else _stationary(low.agent, low.x0, cfg.dt, HOVER)
    t_low.agent = low.agent

    plan = CoordinationPlan(high.agent, low.agent, window, wait_region, R, arrival, r)
    plan.min_separation, plan.separation_step = min_separation(t_high, t_low)
    if not check:
        return t_high, t_low, plan
    check_mutual_exclusion(t_high, t_low, w, window)
    if plan.min_separation < sep - 1e-9:
        raise CoordinationError(
            f"agents {high.agent} and {low.agent} come within {plan.min_separation:.3f} m "
            f"(< {sep} m) at step {plan.separation_step}", plan.separation_step)
    return t_high, t_low, plan


def check_mutual_exclusion(a: Trajectory, b: Trajectory, w: Workspace, window: str):
    both = sorted(set(steps_inside(a, w, window)) & set(steps_inside(b, w, window)))
    if both:
        raise CoordinationError(f"both {a.agent} and {b.agent} are inside {window} at step {both[0]}",
                                both[0])


def min_separation(a: Trajectory, b: Trajectory) -> Tuple[float, int]:
    """Smallest distance over the common timeline (shorter plan holds its last state)."""
    K = max(len(a.states), len(b.states))
    d = [float(np.linalg.norm(a.position(k) - b.position(k))) for k in range(K)]
    k = int(np.argmin(d))
    return d[k], k


# ---------------------------------------------------------------------------
# verification

@dataclass
class Verdict:
    name: str
    formula: str
    offset: int
    end: int
    ok: bool
    first_violation: Optional[int] = None
    error: Optional[str] = None


@dataclass
class Report:
    verdicts: List[Verdict]

    @property
    def ok(self) -> bool:
        return all(v.ok for v in self.verdicts)

    def failures(self) -> List[Verdict]:
        return [v for v in self.verdicts if not v.ok]


def verify(traj: Trajectory, formulas: Sequence[tuple], w: Workspace) -> Report:
    """Monitor each ``(name, formula, offset, end)`` on the trajectory's trace.

    ``end`` bounds unbounded intervals (the segment's last step).  A window
    running past the trajectory is reported as a failure with the error text.
    """
    trace = trace_of(w, traj)
    out = []
    for name, f, offset, end in formulas:
        text = mtl.to_text(f)
        try:
            if end >= len(trace):
                raise mtl.HorizonError(f"segment end {end} is beyond the trajectory ({len(trace) - 1} steps)")
            ok = mtl.evaluate(f, trace, offset, end=end)
            bad = None if ok else _first_bad(f, trace, offset, end)
            out.append(Verdict(name, text, offset, end, ok, bad))
        except mtl.HorizonError as exc:
            out.append(Verdict(name, text, offset, end, False, None, str(exc)))
    return Report(out)


def _first_bad(f: Formula, trace, offset: int, end: int) -> Optional[int]:
    try:
        return mtl.first_violation(f, trace, offset, end=end)
    except (TypeError, mtl.HorizonError):
        return None


def segment_formulas(traj: Trajectory) -> List[tuple]:
    return [(s.name, s.formula, s.offset, s.offset + s.length) for s in traj.segments]
