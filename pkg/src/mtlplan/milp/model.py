"""In-memory mixed-integer linear model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
EQ = "="
GE = ">="


@dataclass(frozen=True)
class Var:
    id: int
    name: str
    kind: str
    lower: float
    upper: float


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple  # ((var id, coefficient), ...) sorted by var id
    sense: str
    rhs: float
    name: str = ""


@dataclass
class MilpModel:
    """Variables, linear rows and a linear objective (always minimized)."""

    vars: List[Var] = field(default_factory=list)
    constraints: List[Constraint] = field(default_factory=list)
    objective: Dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    name: str = "model"

    def add_var(self, name: str, kind: str = CONTINUOUS,
                lower: float = 0.0, upper: float = np.inf) -> int:
        if kind == BINARY:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        elif kind != CONTINUOUS:
            raise ValueError(f"unknown variable kind {kind!r}")
        vid = len(self.vars)
        self.vars.append(Var(vid, name, kind, float(lower), float(upper)))
        return vid

    def add_constraint(self, coeffs: Mapping[int, float], sense: str, rhs: float,
                       name: str = "") -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"unknown relation {sense!r}")
        n = len(self.vars)
        items = []
        for vid, c in sorted(coeffs.items()):
            if not 0 <= vid < n:
                raise KeyError(f"constraint {name!r} references undeclared variable {vid}")
            if c != 0.0:
                items.append((vid, float(c)))
        self.constraints.append(Constraint(tuple(items), sense, float(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, float], constant: float = 0.0):
        self.objective = {int(k): float(v) for k, v in coeffs.items() if v != 0.0}
        self.objective_constant = float(constant)

    @property
    def n_vars(self) -> int:
        return len(self.vars)

    @property
    def binary_ids(self) -> List[int]:
        return [v.id for v in self.vars if v.kind == BINARY]

    def bounds(self):
        lb = np.array([v.lower for v in self.vars], dtype=float)
        ub = np.array([v.upper for v in self.vars], dtype=float)
        return lb, ub

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for k, v in self.objective.items():
            c[k] = v
        return c

    def dense_rows(self):
        """Rows as ``(A, senses, b)`` with ``A`` dense."""
        m = len(self.constraints)
        A = np.zeros((m, self.n_vars))
        b = np.empty(m)
        senses = []
        for i, con in enumerate(self.constraints):
            for vid, c in con.coeffs:
                A[i, vid] += c
            b[i] = con.rhs
            senses.append(con.sense)
        return A, senses, b

    def objective_value(self, x) -> float:
        return float(sum(c * x[k] for k, c in self.objective.items()) + self.objective_constant)

    def signature(self) -> tuple:
        """Hashable structural summary used by determinism tests."""
        return (
            tuple((v.name, v.kind, v.lower, v.upper) for v in self.vars),
            tuple((c.coeffs, c.sense, c.rhs) for c in self.constraints),
            tuple(sorted(self.objective.items())),
            self.objective_constant,
        )


@dataclass
class Violation:
    kind: str  # "row", "bound" or "integrality"
    index: int
    name: str
    amount: float


def check_solution(model: MilpModel, assignment, tol: float = 1e-6) -> List[Violation]:
    """Every row, bound and integrality violation larger than ``tol``.

    An empty list means the assignment is feasible.
    """
    x = np.asarray(assignment, dtype=float)
    if x.shape != (model.n_vars,):
        raise ValueError(f"assignment has {x.size} entries, model has {model.n_vars} variables")
    out = []
    for i, con in enumerate(model.constraints):
        lhs = sum(c * x[vid] for vid, c in con.coeffs)
        if con.sense == LE:
            amt = lhs - con.rhs
        elif con.sense == GE:
            amt = con.rhs - lhs
        else:
            amt = abs(lhs - con.rhs)
        if amt > tol:
            out.append(Violation("row", i, con.name, amt))
    for v in model.vars:
        amt = max(v.lower - x[v.id], x[v.id] - v.upper, 0.0)
        if amt > tol:
            out.append(Violation("bound", v.id, v.name, amt))
        if v.kind == BINARY:
            frac = abs(x[v.id] - round(x[v.id]))
            if frac > tol:
                out.append(Violation("integrality", v.id, v.name, frac))
    return out
