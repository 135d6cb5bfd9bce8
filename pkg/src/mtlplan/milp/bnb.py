"""Best-first branch and bound over binary variables."""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .model import MilpModel
from .simplex import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, LpSolver

log = logging.getLogger(__name__)

NODE_LIMIT = "node_limit"
INT_TOL = 1e-6
GAP_TOL = 1e-6


class MilpError(RuntimeError):
    pass


@dataclass
class MilpResult:
    status: str
    objective: float = np.nan
    x: Optional[np.ndarray] = None
    nodes_explored: int = 0
    wall_time: float = 0.0
    root_bound: float = np.nan
    incumbents: List[float] = field(default_factory=list)
    lp_iterations: int = 0

    @property
    def assignment(self) -> dict:
        return {} if self.x is None else {i: float(v) for i, v in enumerate(self.x)}


def solve_milp(model: MilpModel, node_limit: int = 20000, time_limit: Optional[float] = None,
               rounding: bool = True) -> MilpResult:
    """Minimize ``model`` exactly over its binary variables.

    Open nodes are kept in a heap keyed by LP bound; among equal bounds the
    most recently created node is expanded first, which turns plateaus of the
    bound into a dive instead of a breadth-first sweep.  The branching
    variable is the most fractional binary (lowest id on ties).  With
    ``rounding`` the LP solution of each node is rounded and the binaries fixed
    to get cheap incumbents.  Child relaxations start from the parent's
    optimal basis (dual simplex), which is what keeps node LPs cheap.
    """
    start = time.perf_counter()
    bin_ids = np.array(model.binary_ids, dtype=int)
    lb0, ub0 = model.bounds()
    res = MilpResult(INFEASIBLE)
    best_x: Optional[np.ndarray] = None
    best_obj = np.inf
    heap: list = []
    seq = 0
    tried_roundings: set = set()

    solver = LpSolver(model)

    def lp(lb, ub, warm=None):
        r = solver.solve(lb, ub, warm=warm)
        res.lp_iterations += r.iterations
        if r.status == ITERATION_LIMIT:
            raise MilpError("simplex iteration cap exceeded")
        return r

    def offer(x, obj):
        nonlocal best_x, best_obj
        if obj < best_obj - GAP_TOL:
            best_x, best_obj = x, obj
            res.incumbents.append(obj)
            log.debug("incumbent %.6g after %d nodes", obj, res.nodes_explored)

    def try_rounding(x, basis):
        key = tuple(np.round(x[bin_ids]).astype(int))
        if key in tried_roundings:
            return
        tried_roundings.add(key)
        lb, ub = lb0.copy(), ub0.copy()
        lb[bin_ids] = ub[bin_ids] = np.round(x[bin_ids])
        r = lp(lb, ub, basis)
        if r.status == OPTIMAL:
            offer(r.x, r.objective)

    root = lp(lb0, ub0)
    res.nodes_explored = 1
    if root.status == UNBOUNDED:
        raise MilpError("LP relaxation is unbounded")
    if root.status != OPTIMAL:
        res.wall_time = time.perf_counter() - start
        return res
    res.root_bound = root.objective
    heapq.heappush(heap, (root.objective, -seq, lb0, ub0, root))
    seq += 1
    status = OPTIMAL

    while heap:
        bound, _, lb, ub, node = heapq.heappop(heap)
        if bound >= best_obj - GAP_TOL:
            continue
        x = node.x
        frac = np.abs(x[bin_ids] - np.round(x[bin_ids])) if bin_ids.size else np.zeros(0)
        if frac.size == 0 or frac.max() <= INT_TOL:
            xi = x.copy()
            xi[bin_ids] = np.round(xi[bin_ids])
            offer(xi, node.objective)
            continue
        if rounding:
            try_rounding(x, node.basis)
            if bound >= best_obj - GAP_TOL:
                continue
        # most fractional: closest to 0.5; argmax picks the lowest id on ties
        k = int(bin_ids[np.argmax(frac)])
        for val in (0.0, 1.0) if x[k] < 0.5 else (1.0, 0.0):
            if res.nodes_explored >= node_limit or (
                    time_limit is not None and time.perf_counter() - start > time_limit):
                status = NODE_LIMIT
                heap.clear()
                break
            clb, cub = lb.copy(), ub.copy()
            clb[k] = cub[k] = val
            child = lp(clb, cub, node.basis)
            res.nodes_explored += 1
            if child.status == OPTIMAL and child.objective < best_obj - GAP_TOL:
                heapq.heappush(heap, (child.objective, -seq, clb, cub, child))
                seq += 1

    res.wall_time = time.perf_counter() - start
    if best_x is None:
        res.status = NODE_LIMIT if status == NODE_LIMIT else INFEASIBLE
        return res
    res.status = status
    res.x = best_x
    res.objective = best_obj
    return res
