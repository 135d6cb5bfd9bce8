"""Labeled polytopic workspace and the labeling map from states to atoms."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .milp import LE, MilpModel, OPTIMAL, solve_lp

log = logging.getLogger(__name__)

TOL = 1e-9


@dataclass(frozen=True)
class Halfspace:
    """``{x : normal @ x <= offset}``."""

    normal: tuple
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.ndim != 1 or not np.any(n):
            raise ValueError("halfspace normal must be a nonzero vector")
        object.__setattr__(self, "normal", tuple(float(v) for v in n))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return len(self.normal)

    def value(self, x) -> float:
        """Signed slack ``normal @ x - offset`` (<= 0 inside)."""
        return float(np.dot(self.normal, x) - self.offset)


@dataclass(frozen=True)
class ConvexPolytope:
    halfspaces: tuple

    def __post_init__(self):
        hs = tuple(self.halfspaces)
        if not hs:
            raise ValueError("a polytope needs at least one halfspace")
        if len({h.dim for h in hs}) != 1:
            raise ValueError("halfspace dimensions disagree")
        object.__setattr__(self, "halfspaces", hs)

    @property
    def dim(self) -> int:
        return self.halfspaces[0].dim

    @classmethod
    def box(cls, lo, hi) -> "ConvexPolytope":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError(f"bad box {lo} .. {hi}")
        d = lo.size
        hs = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            hs.append(Halfspace(tuple(e), hi[i]))
            hs.append(Halfspace(tuple(-e), -lo[i]))
        return cls(tuple(hs))

    def matrices(self):
        H = np.array([h.normal for h in self.halfspaces])
        a = np.array([h.offset for h in self.halfspaces])
        return H, a

    def as_box(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """``(lo, hi)`` if the polytope is an axis-aligned box given face by face."""
        d = self.dim
        lo = np.full(d, -np.inf)
        hi = np.full(d, np.inf)
        for h in self.halfspaces:
            n = np.asarray(h.normal)
            nz = np.flatnonzero(n)
            if nz.size != 1:
                return None
            i = nz[0]
            if n[i] > 0:
                hi[i] = min(hi[i], h.offset / n[i])
            else:
                lo[i] = max(lo[i], h.offset / n[i])
        if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
            return lo, hi
        return None

    def is_nonempty(self, bounds: Optional["ConvexPolytope"] = None) -> bool:
        """LP feasibility check (optionally intersected with ``bounds``)."""
        m = MilpModel(name="polytope")
        ids = [m.add_var(f"x{i}", lower=-np.inf) for i in range(self.dim)]
        for h in self.halfspaces + (bounds.halfspaces if bounds else ()):
            m.add_constraint(dict(zip(ids, h.normal)), LE, h.offset)
        return solve_lp(m).status == OPTIMAL


def contains(p: ConvexPolytope, x, tol: float = TOL) -> bool:
    """True iff ``normal @ x <= offset + tol`` for every halfspace of ``p``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,):
        raise ValueError(f"point of dimension {x.size} tested against {p.dim}-d polytope")
    H, a = p.matrices()
    return bool(np.all(H @ x <= a + tol))


@dataclass(frozen=True)
class Region:
    """A labeled union of convex polytopes, optionally active only during a window.

    ``complement`` optionally lists convex parts covering the free space
    around the region; the encoder then writes ``!label`` as membership of that
    union (shrunk by the strict margin) instead of negating the region itself.
    """

    label: str
    parts: tuple
    active_window: Optional[Tuple[int, Optional[int]]] = None
    complement: tuple = ()

    def __post_init__(self):
        if not self.parts:
            raise ValueError(f"region {self.label!r} has no parts")
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "complement", tuple(self.complement))

    def active(self, t: int) -> bool:
        if self.active_window is None:
            return True
        lo, hi = self.active_window
        return t >= lo and (hi is None or t <= hi)

    def contains(self, x, tol: float = TOL) -> bool:
        return any(contains(p, x, tol) for p in self.parts)


@dataclass(frozen=True)
class Workspace:
    lo: tuple
    hi: tuple
    regions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "regions", tuple(self.regions))
        labels = [r.label for r in self.regions]
        dup = {l for l in labels if labels.count(l) > 1}
        if dup:
            raise ValueError(f"duplicate region labels: {sorted(dup)}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def bounds(self) -> ConvexPolytope:
        return ConvexPolytope.box(self.lo, self.hi)

    @property
    def labels(self) -> List[str]:
        return [r.label for r in self.regions]

    def region(self, label: str) -> Region:
        for r in self.regions:
            if r.label == label:
                return r
        raise KeyError(f"unknown region {label!r}")

    def vertices(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lo, self.hi))))

    def in_bounds(self, x, tol: float = TOL) -> bool:
        return contains(self.bounds, x, tol)

    def with_region(self, region: Region) -> "Workspace":
        return Workspace(self.lo, self.hi, self.regions + (region,))

    def validate(self) -> List[str]:
        """Problems with region geometry: parts outside the bounds or empty."""
        problems = []
        verts_lo, verts_hi = np.array(self.lo), np.array(self.hi)
        for r in self.regions:
            for k, p in enumerate(r.parts + r.complement):
                if p.dim != self.dim:
                    problems.append(f"{r.label}[{k}]: dimension {p.dim} != {self.dim}")
                    continue
                box = p.as_box()
                if box is not None:
                    lo, hi = box
                    if np.any(lo < verts_lo - TOL) or np.any(hi > verts_hi + TOL):
                        problems.append(f"{r.label}[{k}]: box leaves the workspace bounds")
                    if np.any(hi < lo):
                        problems.append(f"{r.label}[{k}]: empty box")
                elif not p.is_nonempty(self.bounds):
                    problems.append(f"{r.label}[{k}]: empty inside the workspace")
        for msg in problems:
            log.warning(msg)
        return problems


def label(w: Workspace, x, t: int = 0) -> frozenset:
    """Labels of the regions active at ``t`` with some part containing ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (w.dim,):
        raise ValueError(f"point of dimension {x.size} in a {w.dim}-d workspace")
    if not w.in_bounds(x):
        log.warning("point %s lies outside the workspace bounds", x)
    return frozenset(r.label for r in w.regions if r.active(t) and r.contains(x))


def trace_of(w: Workspace, positions) -> list:
    """Trace of atom sets along a sequence of positions (one per step).

    Accepts a ``(K, d)`` array or any object with a ``positions`` attribute.
    """
    pos = getattr(positions, "positions", positions)
    pos = np.asarray(pos, dtype=float)
    if pos.size == 0:
        return []
    if pos.ndim != 2 or pos.shape[1] != w.dim:
        raise ValueError(f"positions of shape {pos.shape} do not match a {w.dim}-d workspace")
    return [label(w, p, k) for k, p in enumerate(pos)]
