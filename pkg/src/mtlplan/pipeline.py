"""End-to-end planning of a parsed mission file, without any file I/O.

With a coordination block the two highest-priority agents are planned with
:func:`~mtlplan.planner.coordinate`; every other agent (and every agent when
there is no coordination block) is planned on its own.  Afterwards each
trajectory is monitored against its segment formulas and every pair of agents
is checked for separation and, when a window is declared, mutual exclusion.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

from .missionfile import MissionSpec
from .planner import (CoordinationPlan, Report, Trajectory, coordinate, min_separation, plan_mission,
                      segment_formulas, steps_inside, verify)

log = logging.getLogger(__name__)


@dataclass
class Check:
    """Outcome of a multi-agent check (mutual exclusion or separation)."""

    name: str
    agents: tuple
    ok: bool
    detail: str
    step: Optional[int] = None


@dataclass
class PlanResult:
    spec: MissionSpec
    trajectories: Dict[str, Trajectory]
    reports: Dict[str, Report]
    checks: List[Check] = field(default_factory=list)
    coordination: Optional[CoordinationPlan] = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.reports.values()) and all(c.ok for c in self.checks)


def pair_checks(trajs: Dict[str, Trajectory], spec: MissionSpec) -> List[Check]:
    out = []
    sep = spec.config.separation
    for a, b in itertools.combinations(sorted(trajs), 2):
        ta, tb = trajs[a], trajs[b]
        if spec.window is not None:
            both = sorted(set(steps_inside(ta, spec.workspace, spec.window))
                          & set(steps_inside(tb, spec.workspace, spec.window)))
            if both:
                out.append(Check("mutual exclusion", (a, b), False,
                                 f"both {a} and {b} are inside {spec.window} at step {both[0]}", both[0]))
            else:
                out.append(Check("mutual exclusion", (a, b), True, f"{spec.window} never shared"))
        d, k = min_separation(ta, tb)
        ok = d >= sep - 1e-9
        detail = f"closest approach {d:.3f} m at step {k} (limit {sep} m)"
        out.append(Check("separation", (a, b), ok, detail, None if ok else k))
    return out


def run(spec: MissionSpec, **overrides) -> PlanResult:
    """Plan every agent of ``spec``; ``overrides`` replace planner config fields."""
    cfg = replace(spec.config, **overrides) if overrides else spec.config
    t0 = time.perf_counter()
    trajs: Dict[str, Trajectory] = {}
    coord = None
    missions = spec.by_priority
    if spec.window is not None and len(missions) >= 2:
        high, low = missions[0], missions[1]
        th, tl, coord = coordinate(high, low, spec.workspace, cfg, spec.window, spec.wait_region,
                                   check=False)
        trajs[high.agent], trajs[low.agent] = th, tl
        missions = missions[2:]
    for m in missions:
        trajs[m.agent] = plan_mission(m, spec.workspace, cfg)
    reports = {a: verify(t, segment_formulas(t), spec.workspace) for a, t in trajs.items()}
    checks = pair_checks(trajs, spec)
    for c in checks:
        (log.info if c.ok else log.error)("%s %s: %s", c.name, "/".join(c.agents), c.detail)
    return PlanResult(spec, trajs, reports, checks, coord, time.perf_counter() - t0)
