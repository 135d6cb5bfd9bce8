"""JSON mission files: parsing into planner objects and schema checks.

Layout (all lengths in metres, intervals and horizons in steps)::

    {
      "name": str,
      "dt": float,                          # step length in seconds
      "encoding": {"N": int, "eps": float, "M": float | null},
      "solver": {"node_limit": int, "time_limit": float | null},
      "params": {"m": float, "g": float, "J": [[...], [...], [...]]},
      "workspace": {
        "bounds": {"min": [x, y, z], "max": [x, y, z]},
        "regions": [{"label": str, "parts": [part, ...],
                     "complement": [part, ...], "active": [lo, hi | null]}]
      },
      "agents": [{"id": str, "priority": int,
                  "initial": {"pos": [...], "vel": [...], "angles": [...], "rates": [...]},
                  "subtasks": [{"name": str, "formula": str, "mode": str,
                                "horizon": int, "wait": bool, "grasp": str,
                                "entry": {"regions": [str], "bounds": {"z": [lo, hi]}}}]}],
      "coordination": {"window": str, "wait_region": str, "separation": float}
    }

A part is either a box ``{"min": [...], "max": [...]}`` or
``{"halfspaces": [{"normal": [...], "offset": r}, ...]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from . import mtl
from .dynamics import (DEFAULT_LIMITS, MODE_NAMES, Guard, ModeLimits, QuadrotorParams,
                       default_automaton, full_state, state_bound_guard)
from .planner import Mission, PlannerConfig, SubTask
from .workspace import ConvexPolytope, Halfspace, Region, Workspace


class MissionError(ValueError):
    """Malformed or inconsistent mission file."""


@dataclass
class MissionSpec:
    name: str
    workspace: Workspace
    config: PlannerConfig
    missions: List[Mission]
    window: Optional[str] = None
    wait_region: Optional[str] = None
    raw: Optional[dict] = None

    def mission(self, agent: str) -> Mission:
        for m in self.missions:
            if m.agent == agent:
                return m
        raise KeyError(agent)

    @property
    def by_priority(self) -> List[Mission]:
        return sorted(self.missions, key=lambda m: m.priority)


def _req(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise MissionError(f"{where}: expected an object")
    if key not in d:
        raise MissionError(f"{where}: missing '{key}'")
    return d[key]


def _vec(v, n: int, where: str) -> np.ndarray:
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise MissionError(f"{where}: expected {n} numbers") from None
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise MissionError(f"{where}: expected {n} finite numbers")
    return a


def _part(p: dict, dim: int, where: str) -> ConvexPolytope:
    if not isinstance(p, dict):
        raise MissionError(f"{where}: expected an object")
    if "min" in p or "max" in p:
        lo = _vec(_req(p, "min", where), dim, f"{where}.min")
        hi = _vec(_req(p, "max", where), dim, f"{where}.max")
        if np.any(hi < lo):
            raise MissionError(f"{where}: max below min")
        return ConvexPolytope.box(lo, hi)
    hs = _req(p, "halfspaces", where)
    if not isinstance(hs, list) or not hs:
        raise MissionError(f"{where}: halfspaces must be a nonempty list")
    out = []
    for i, h in enumerate(hs):
        n = _vec(_req(h, "normal", f"{where}[{i}]"), dim, f"{where}[{i}].normal")
        if not np.any(n):
            raise MissionError(f"{where}[{i}]: zero normal")
        out.append(Halfspace(tuple(n), float(_req(h, "offset", f"{where}[{i}]"))))
    return ConvexPolytope(tuple(out))


def parse_workspace(d: dict) -> Workspace:
    b = _req(d, "bounds", "workspace")
    lo = _vec(_req(b, "min", "workspace.bounds"), 3, "workspace.bounds.min")
    hi = _vec(_req(b, "max", "workspace.bounds"), 3, "workspace.bounds.max")
    if np.any(hi <= lo):
        raise MissionError("workspace.bounds: max must exceed min")
    regions = []
    for i, r in enumerate(d.get("regions", [])):
        where = f"workspace.regions[{i}]"
        label = _req(r, "label", where)
        if not isinstance(label, str) or not label:
            raise MissionError(f"{where}: label must be a nonempty string")
        parts = [_part(p, 3, f"{where}.parts[{k}]") for k, p in enumerate(_req(r, "parts", where))]
        if not parts:
            raise MissionError(f"{where}: region {label!r} has no parts")
        comp = [_part(p, 3, f"{where}.complement[{k}]") for k, p in enumerate(r.get("complement", []))]
        active = r.get("active")
        if active is not None:
            if not (isinstance(active, list) and len(active) == 2):
                raise MissionError(f"{where}.active: expected [lo, hi]")
            active = (int(active[0]), None if active[1] is None else int(active[1]))
        regions.append(Region(label, tuple(parts), active, tuple(comp)))
    try:
        return Workspace(tuple(lo), tuple(hi), tuple(regions))
    except ValueError as exc:
        raise MissionError(f"workspace: {exc}") from exc


def _guard(d: Optional[dict], where: str, labels: List[str]) -> Optional[Guard]:
    if not d:
        return None
    regions = tuple(d.get("regions", ()))
    for r in regions:
        if r not in labels:
            raise MissionError(f"{where}: unknown region {r!r}")
    bounds = {}
    for k, v in d.get("bounds", {}).items():
        if not (isinstance(v, list) and len(v) == 2):
            raise MissionError(f"{where}.bounds.{k}: expected [lo, hi]")
        bounds[k] = (v[0], v[1])
    try:
        g = state_bound_guard(f"{where}", **bounds)
    except ValueError:
        raise MissionError(f"{where}: unknown state name in bounds") from None
    return Guard(g.halfspaces, regions, "entry")


def parse_subtask(d: dict, where: str, labels: List[str]) -> SubTask:
    name = str(_req(d, "name", where))
    text = _req(d, "formula", where)
    try:
        f = mtl.parse(text)
    except mtl.MtlSyntaxError as exc:
        raise MissionError(f"{where} ({name}): {exc}") from exc
    missing = sorted(mtl.atoms(f) - set(labels))
    if missing:
        raise MissionError(f"{where} ({name}): unknown region label {', '.join(missing)}")
    mode = _req(d, "mode", where)
    if mode not in MODE_NAMES:
        raise MissionError(f"{where} ({name}): unknown mode {mode!r}")
    horizon = d.get("horizon")
    if horizon is not None and (not isinstance(horizon, int) or horizon < 1):
        raise MissionError(f"{where} ({name}): horizon must be a positive integer")
    grasp = d.get("grasp")
    if grasp is not None and grasp not in labels:
        raise MissionError(f"{where} ({name}): unknown grasp region {grasp!r}")
    return SubTask(name, f, mode, horizon, _guard(d.get("entry"), f"{where}.entry", labels), grasp,
                   bool(d.get("wait", False)))


def parse_mission(data: Dict[str, Any]) -> MissionSpec:
    if not isinstance(data, dict):
        raise MissionError("mission file must hold a JSON object")
    dt = float(data.get("dt", 0.2))
    if dt <= 0:
        raise MissionError("dt must be positive")
    enc = data.get("encoding", {})
    solver = data.get("solver", {})
    pd = data.get("params", {})
    try:
        params = QuadrotorParams(m=float(pd.get("m", 1.0)), g=float(pd.get("g", 9.81)),
                                 J=np.asarray(pd.get("J", np.diag([0.01, 0.01, 0.02])), dtype=float))
    except (ValueError, TypeError) as exc:
        raise MissionError(f"params: {exc}") from exc
    limits = {}
    for mode, lim in data.get("limits", {}).items():
        if mode not in MODE_NAMES:
            raise MissionError(f"limits: unknown mode {mode!r}")
        try:
            limits[mode] = ModeLimits(**{**DEFAULT_LIMITS[mode].__dict__, **lim})
        except TypeError as exc:
            raise MissionError(f"limits.{mode}: {exc}") from exc
    ws = parse_workspace(_req(data, "workspace", "mission"))
    labels = ws.labels
    coord = data.get("coordination") or {}
    cfg = PlannerConfig(params=params, dt=dt, max_horizon=int(enc.get("N", 30)),
                        eps=float(enc.get("eps", 1e-4)), M=enc.get("M"),
                        node_limit=int(solver.get("node_limit", 20000)),
                        time_limit=solver.get("time_limit"),
                        automaton=default_automaton(params, dt, limits),
                        separation=float(coord.get("separation", 0.5)))
    missions = []
    agents = _req(data, "agents", "mission")
    if not isinstance(agents, list) or not agents:
        raise MissionError("agents must be a nonempty list")
    for i, a in enumerate(agents):
        where = f"agents[{i}]"
        agent = str(_req(a, "id", where))
        init = _req(a, "initial", where)
        x0 = full_state(_vec(_req(init, "pos", f"{where}.initial"), 3, f"{where}.initial.pos"),
                        _vec(init.get("vel", [0, 0, 0]), 3, f"{where}.initial.vel"),
                        _vec(init.get("angles", [0, 0, 0]), 3, f"{where}.initial.angles"),
                        _vec(init.get("rates", [0, 0, 0]), 3, f"{where}.initial.rates"))
        subs = [parse_subtask(s, f"{where}.subtasks[{k}]", labels)
                for k, s in enumerate(a.get("subtasks", []))]
        missions.append(Mission(agent, x0, tuple(subs), int(a.get("priority", i))))
    ids = [m.agent for m in missions]
    if len(set(ids)) != len(ids):
        raise MissionError("agent ids must be unique")
    window = coord.get("window")
    wait = coord.get("wait_region")
    for key, lbl in (("window", window), ("wait_region", wait)):
        if lbl is not None and lbl not in labels:
            raise MissionError(f"coordination.{key}: unknown region {lbl!r}")
    return MissionSpec(str(data.get("name", "mission")), ws, cfg, missions, window, wait, data)


def load_mission(path: str) -> MissionSpec:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise MissionError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise MissionError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from exc
    return parse_mission(data)


def box(lo, hi) -> dict:
    return {"min": list(lo), "max": list(hi)}
