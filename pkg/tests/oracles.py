"""Reference implementations the test-suite compares the package against.

Each oracle here is written independently of the code it checks: the MTL
oracle works on satisfaction vectors instead of point evaluation, the LP
oracle enumerates vertices, and the MILP oracle enumerates binaries and hands
each LP to scipy.
"""

from __future__ import annotations

import itertools
from typing import List, Optional

import numpy as np
from scipy.optimize import linprog

from mtlplan import mtl
from mtlplan.dynamics import LinearMode
from mtlplan.milp import BINARY, GE, LE, MilpModel

# ---------------------------------------------------------------------------
# MTL: satisfaction vectors over a whole trace

def sat_vector(f: mtl.Formula, trace, end: Optional[int] = None) -> List[Optional[bool]]:
    """Truth of ``f`` at every step of ``trace``; ``None`` where the trace is too short.

    Unbounded intervals stop at ``end`` (default: last step).
    """
    n = len(trace)
    end = n - 1 if end is None else end

    def window(iv, t):
        hi = end if iv.hi is None else t + iv.hi
        return list(range(t + iv.lo, hi + 1))

    def defined(vec, steps):
        return all(0 <= k < n and vec[k] is not None for k in steps)

    if isinstance(f, mtl.TrueF):
        return [True] * n
    if isinstance(f, mtl.Atom):
        return [f.label in s for s in trace]
    if isinstance(f, mtl.Not):
        return [None if v is None else not v for v in sat_vector(f.arg, trace, end)]
    if isinstance(f, (mtl.And, mtl.Or)):
        vecs = [sat_vector(a, trace, end) for a in f.args]
        out = []
        for t in range(n):
            col = [v[t] for v in vecs]
            if any(c is None for c in col):
                out.append(None)
            else:
                out.append(all(col) if isinstance(f, mtl.And) else any(col))
        return out
    if isinstance(f, mtl.Next):
        v = sat_vector(f.arg, trace, end)
        return [v[t + 1] if t + 1 < n else None for t in range(n)]
    if isinstance(f, (mtl.Eventually, mtl.Always)):
        v = sat_vector(f.arg, trace, end)
        out = []
        for t in range(n):
            w = window(f.interval, t)
            if not defined(v, w):
                out.append(None)
            elif isinstance(f, mtl.Eventually):
                out.append(any(v[k] for k in w))
            else:
                out.append(all(v[k] for k in w))
        return out
    if isinstance(f, mtl.Until):
        lv = sat_vector(f.left, trace, end)
        rv = sat_vector(f.right, trace, end)
        out = []
        for t in range(n):
            w = window(f.interval, t)
            lefts = range(t, w[-1]) if w else range(0)
            if not defined(rv, w) or not defined(lv, lefts):
                out.append(None)
                continue
            out.append(any(rv[j] and all(lv[k] for k in range(t, j)) for j in w))
        return out
    raise TypeError(f)


def all_traces(atoms, max_len: int):
    """Every trace of length 1..max_len over subsets of ``atoms``."""
    letters = [frozenset(c) for r in range(len(atoms) + 1) for c in itertools.combinations(atoms, r)]
    for n in range(1, max_len + 1):
        for tr in itertools.product(letters, repeat=n):
            yield list(tr)


def formula_family() -> List[mtl.Formula]:
    """Fixed set of formulas over ``p`` and ``q`` mixing every operator."""
    texts = [
        "true", "false", "p", "!p", "p & q", "p | !q", "p -> q", "X p", "X !q",
        "F[0,0] p", "F[0,2] p", "F[1,3] q", "G[0,2] p", "G[1,1] !q", "F p", "G q", "F[2,inf] p",
        "p U[0,2] q", "p U[1,3] q", "!p U[0,1] q", "p U q", "true U[0,3] p",
        "F[0,2] G[0,1] p", "G[0,2] F[0,1] q", "G[0,3] (p -> F[0,1] q)", "!(p U[0,2] q)",
        "!(F[0,1] G[0,2] p)", "!G[0,2] (p | q)", "(p U[0,1] q) U[0,2] p", "!X (p & q)",
        "F[0,1] (p & X q)", "G (p | F[0,1] q)", "!(p U[1,2] !q)", "(p | q) U[0,3] (p & q)",
        "!(F[1,2] p & G[0,1] q)", "G[0,1] !(p U[0,1] q)",
    ]
    return [mtl.parse(t) for t in texts]


def oracle_evaluate(f, trace, t: int = 0):
    """Truth value at ``t``, or the string ``"horizon"`` if the trace is too short."""
    v = sat_vector(f, trace)[t]
    return "horizon" if v is None else v


def package_evaluate(f, trace, t: int = 0):
    try:
        return mtl.evaluate(f, trace, t)
    except mtl.HorizonError:
        return "horizon"


# ---------------------------------------------------------------------------
# LP by vertex enumeration (small, bounded instances)

def lp_vertex_oracle(c, A, b, lo, hi):
    """``min c x`` over ``A x <= b``, ``lo <= x <= hi`` by trying every vertex.

    Returns ``None`` when the polytope is empty.
    """
    n = len(c)
    rows = [(np.asarray(a, float), float(v)) for a, v in zip(A, b)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        rows.append((e, float(hi[i])))
        rows.append((-e, -float(lo[i])))
    G = np.array([r[0] for r in rows])
    h = np.array([r[1] for r in rows])
    best = None
    for idx in itertools.combinations(range(len(rows)), n):
        sub = G[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(idx)])
        if np.all(G @ x <= h + 1e-9):
            val = float(np.dot(c, x))
            best = val if best is None else min(best, val)
    return best


# ---------------------------------------------------------------------------
# MILP by binary enumeration

def milp_enumeration_oracle(model: MilpModel) -> Optional[float]:
    """Optimum of ``model`` by fixing every binary pattern and solving the LP with scipy."""
    A, senses, b = model.dense_rows()
    c = model.cost_vector()
    lb, ub = model.bounds()
    bins = model.binary_ids
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, s, r in zip(A, senses, b):
        if s == LE:
            A_ub.append(row), b_ub.append(r)
        elif s == GE:
            A_ub.append(-row), b_ub.append(-r)
        else:
            A_eq.append(row), b_eq.append(r)
    kw = dict(A_ub=np.array(A_ub) if A_ub else None, b_ub=np.array(b_ub) if b_ub else None,
              A_eq=np.array(A_eq) if A_eq else None, b_eq=np.array(b_eq) if b_eq else None,
              method="highs")
    best = None
    for pattern in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = lb.copy(), ub.copy()
        lo[bins] = hi[bins] = pattern
        bounds = [(None if np.isinf(l) else l, None if np.isinf(u) else u) for l, u in zip(lo, hi)]
        r = linprog(c, bounds=bounds, **kw)
        if r.status == 0:
            val = float(r.fun) + model.objective_constant
            best = val if best is None else min(best, val)
    return best


# ---------------------------------------------------------------------------
# models

def single_integrator(umax: float = 1.0, dt: float = 1.0, dim: int = 2) -> LinearMode:
    """``p(t+1) = p(t) + dt u(t)`` with ``|u_i| <= umax``."""
    n = dim
    return LinearMode("integrator", np.zeros((n, n)), np.eye(n), np.zeros(n), np.zeros(n),
                      np.zeros(n), dt, np.full(n, -umax), np.full(n, umax),
                      np.full(n, -np.inf), np.full(n, np.inf),
                      state_idx=tuple(range(n)), input_idx=tuple(range(n)))


def knapsack_model(values, weights, capacity) -> MilpModel:
    m = MilpModel(name="knapsack")
    ids = [m.add_var(f"take{i}", BINARY) for i in range(len(values))]
    m.add_constraint(dict(zip(ids, weights)), LE, capacity, "capacity")
    m.set_objective({i: -v for i, v in zip(ids, values)})
    return m


def knapsack_brute_force(values, weights, capacity) -> float:
    best = 0.0
    for pick in itertools.product((0, 1), repeat=len(values)):
        if np.dot(pick, weights) <= capacity:
            best = max(best, float(np.dot(pick, values)))
    return -best

