"""Lower MTL formulas plus linear dynamics into a mixed-integer linear program.

Region membership uses one binary per (halfspace, step) tied to the state by a
big-M pair.  Every formula node becomes a continuous variable ``K`` in
``[0, 1]`` whose value is forced to the node's truth value by linear rows; the
root is pinned to 1.  The objective is the L1 norm of the input deviations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from . import mtl
from .dynamics import POS, Guard, LinearMode
from .milp import BINARY, CONTINUOUS, EQ, GE, LE, MilpModel
from .mtl import (Always, And, Atom, Eventually, Formula, HorizonError, Next, Not, Or, TrueF,
                  Until)
from .workspace import ConvexPolytope, Halfspace, Region, Workspace

DEFAULT_EPS = 1e-4
# inside-tests are tightened by this much so LP round-off never lands a
# "member" point outside the closed region
INNER_MARGIN = 1e-6


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class EncodingConfig:
    N: int
    M: Optional[float] = None
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.N < 1:
            raise EncodingError("horizon N must be at least 1")
        if self.M is not None and self.M <= 0:
            raise EncodingError("big-M must be positive")
        if not 0 < self.eps:
            raise EncodingError("eps must be positive")
        if self.M is not None and self.eps >= self.M:
            raise EncodingError("eps must be much smaller than M")


def big_m_for(halfspaces, workspace: Workspace) -> float:
    """Twice the largest ``|h @ x - a|`` over the workspace box vertices, plus one."""
    verts = workspace.vertices()
    worst = 0.0
    for h in halfspaces:
        worst = max(worst, float(np.max(np.abs(verts @ np.asarray(h.normal) - h.offset))))
    return 2.0 * worst + 1.0


class _Lit:
    """A formula truth value: either a model variable or a constant 0/1."""

    __slots__ = ("var", "const")

    def __init__(self, var: Optional[int] = None, const: Optional[float] = None):
        self.var = var
        self.const = const

    @property
    def is_const(self) -> bool:
        return self.var is None

    def __repr__(self):
        return f"K{self.var}" if self.var is not None else f"const({self.const:g})"


ONE = _Lit(const=1.0)
ZERO = _Lit(const=0.0)


@dataclass
class Encoding:
    """Model under construction plus the lookup from roles to variable ids."""

    model: MilpModel
    cfg: EncodingConfig
    varmap: Dict[tuple, int] = field(default_factory=dict)
    M: float = 0.0
    root: Optional[_Lit] = None
    n_state: int = 0
    n_input: int = 0
    # per-step position box every feasible trajectory stays in
    reach_lo: Optional[np.ndarray] = None
    reach_hi: Optional[np.ndarray] = None

    def var(self, role: str, t: int, index, kind=CONTINUOUS, lower=0.0, upper=np.inf) -> int:
        key = (role, t, index)
        if key in self.varmap:
            raise EncodingError(f"variable {key} declared twice")
        vid = self.model.add_var(f"{role}[{t}][{index}]", kind, lower, upper)
        self.varmap[key] = vid
        return vid

    def row(self, terms: List[Tuple[float, _Lit]], sense: str, rhs: float, name: str = ""):
        coeffs: Dict[int, float] = {}
        for c, lit in terms:
            if lit.is_const:
                rhs -= c * lit.const
            else:
                coeffs[lit.var] = coeffs.get(lit.var, 0.0) + c
        self.model.add_constraint(coeffs, sense, rhs, name)

    def states(self) -> np.ndarray:
        N, n = self.cfg.N, self.n_state
        return np.array([[self.varmap[("state", t, i)] for i in range(n)] for t in range(N + 1)])

    def inputs(self) -> np.ndarray:
        N, p = self.cfg.N, self.n_input
        return np.array([[self.varmap[("input", t, j)] for j in range(p)] for t in range(N)])

    def decode(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """``(states, input deviations)`` from a solver assignment."""
        x = np.asarray(x)
        return x[self.states()], x[self.inputs()]


# ---------------------------------------------------------------------------
# dynamics and objective

def encode_dynamics(enc: Encoding, mode: LinearMode, x0, workspace: Optional[Workspace] = None):
    """State and input variables, ``x(t+1) = A_d x(t) + B_d u(t) (+ drift)``, ``x(0) = x0``."""
    x0 = np.asarray(x0, dtype=float)
    n, p, N = mode.n, mode.p, enc.cfg.N
    if x0.shape != (n,):
        raise EncodingError(f"initial state has {x0.size} entries, mode {mode.name} has {n}")
    enc.n_state, enc.n_input = n, p
    lo, hi = mode.state_lo.copy(), mode.state_hi.copy()
    if workspace is not None:
        lo[POS] = np.maximum(lo[POS], workspace.lo)
        hi[POS] = np.minimum(hi[POS], workspace.hi)
    if workspace is not None and not workspace.in_bounds(x0[POS]):
        raise EncodingError(f"initial position {x0[POS]} lies outside the workspace")
    box_lo, box_hi = reachable_boxes(mode, x0, N, lo, hi)
    enc.reach_lo, enc.reach_hi = box_lo[:, POS], box_hi[:, POS]
    for t in range(N + 1):
        for i in range(n):
            if t == 0:
                enc.var("state", t, i, lower=-np.inf)
            else:
                enc.var("state", t, i, lower=box_lo[t, i], upper=box_hi[t, i])
    for t in range(N):
        for j in range(p):
            enc.var("input", t, j, lower=mode.input_lo[j], upper=mode.input_hi[j])
    X, U = enc.states(), enc.inputs()
    m = enc.model
    for i in range(n):
        m.add_constraint({X[0, i]: 1.0}, EQ, x0[i], f"init[{i}]")
    drift = mode.drift if mode.drift is not None else np.zeros(n)
    for t in range(N):
        for i in range(n):
            coeffs = {X[t + 1, i]: 1.0}
            for k in range(n):
                if mode.Ad[i, k] != 0.0:
                    coeffs[X[t, k]] = coeffs.get(X[t, k], 0.0) - mode.Ad[i, k]
            for j in range(p):
                if mode.Bd[i, j] != 0.0:
                    coeffs[U[t, j]] = -mode.Bd[i, j]
            m.add_constraint(coeffs, EQ, float(drift[i]), f"dyn[{t}][{i}]")
    if mode.max_speed is not None:
        # horizontal speed inside the regular octagon inscribed in the circle
        apothem = mode.max_speed * np.cos(np.pi / 8)
        for t in range(1, N + 1):
            for k in range(8):
                a = k * np.pi / 4
                m.add_constraint({X[t, 3]: np.cos(a), X[t, 4]: np.sin(a)}, LE, apothem, f"speed[{t}][{k}]")


def reachable_boxes(mode: LinearMode, x0, N: int, lo, hi) -> Tuple[np.ndarray, np.ndarray]:
    """Interval bounds on ``x(t)``, ``t = 0..N``, implied by the dynamics and the bounds.

    Propagates centre/radius through ``A_d``, ``B_d`` and the input box, then
    intersects with the declared state box ``[lo, hi]`` (applied for ``t >= 1``).
    """
    n = mode.n
    if not (np.all(np.isfinite(mode.input_lo)) and np.all(np.isfinite(mode.input_hi))):
        # unbounded inputs: nothing beyond the declared box can be inferred
        out_lo = np.tile(np.asarray(lo, dtype=float), (N + 1, 1))
        out_hi = np.tile(np.asarray(hi, dtype=float), (N + 1, 1))
        out_lo[0] = out_hi[0] = x0
        return out_lo, out_hi
    drift = mode.drift if mode.drift is not None else np.zeros(n)
    uc = (mode.input_lo + mode.input_hi) / 2
    ur = (mode.input_hi - mode.input_lo) / 2
    out_lo = np.empty((N + 1, n))
    out_hi = np.empty((N + 1, n))
    out_lo[0] = out_hi[0] = x0
    absA, absB = np.abs(mode.Ad), np.abs(mode.Bd)
    for t in range(N):
        c = (out_lo[t] + out_hi[t]) / 2
        r = (out_hi[t] - out_lo[t]) / 2
        nc = mode.Ad @ c + mode.Bd @ uc + drift
        nr = absA @ r + absB @ ur
        out_lo[t + 1] = np.maximum(nc - nr, lo)
        out_hi[t + 1] = np.minimum(nc + nr, hi)
        if np.any(out_lo[t + 1] > out_hi[t + 1]):
            # infeasible bounds; keep them as declared and let the solver say so
            out_lo[t + 1], out_hi[t + 1] = lo, hi
    return out_lo, out_hi


def encode_objective(enc: Encoding):
    """Slacks ``s >= |u|`` per input component and step; minimize their sum."""
    U = enc.inputs()
    m = enc.model
    obj = {}
    for t in range(U.shape[0]):
        for j in range(U.shape[1]):
            v = m.vars[U[t, j]]
            cap = max(abs(v.lower), abs(v.upper))
            s = enc.var("input_abs", t, j, upper=cap)
            m.add_constraint({s: 1.0, U[t, j]: -1.0}, GE, 0.0, f"abs+[{t}][{j}]")
            m.add_constraint({s: 1.0, U[t, j]: 1.0}, GE, 0.0, f"abs-[{t}][{j}]")
            obj[s] = 1.0
    m.set_objective(obj)


def encode_terminal(enc: Encoding, guard: Guard, workspace: Optional[Workspace] = None):
    """Rows forcing ``x(N)`` to satisfy ``guard``."""
    X = enc.states()
    N = enc.cfg.N
    for k, (normal, offset) in enumerate(guard.rows()):
        coeffs = {X[N, i]: float(c) for i, c in enumerate(normal) if c != 0.0}
        enc.model.add_constraint(coeffs, LE, offset, f"terminal[{k}]")
    for lbl in guard.regions:
        if workspace is None:
            raise EncodingError("terminal guard names a region but no workspace was given")
        for k, h in enumerate(workspace.region(lbl).parts[0].halfspaces):
            coeffs = {X[N, i]: c for i, c in enumerate(h.normal) if c != 0.0}
            enc.model.add_constraint(coeffs, LE, h.offset - INNER_MARGIN, f"terminal[{lbl}][{k}]")


# ---------------------------------------------------------------------------
# regions

def _literals_needed(f: Formula, t: int, N: int, out: set):
    """Collect ``(label, positive, t)`` for every atom occurrence the encoding touches."""
    match f:
        case TrueF() | Not(TrueF()):
            return
        case Atom(label):
            out.add((label, True, t))
        case Not(Atom(label)):
            out.add((label, False, t))
        case And(args) | Or(args):
            for a in args:
                _literals_needed(a, t, N, out)
        case Eventually(iv, a) | Always(iv, a):
            for tau in iv.window(t, N):
                _literals_needed(a, tau, N, out)
        case Until(iv, l, r):
            w = iv.window(t, N)
            for j in w:
                _literals_needed(r, j, N, out)
            if len(w):
                for k in range(t, w[-1]):
                    _literals_needed(l, k, N, out)
        case Next():
            raise EncodingError("the next operator is not supported by the encoder")
        case Not(_):
            raise EncodingError(f"formula is not in negation normal form: {mtl.to_text(f)}")
        case _:
            raise TypeError(f"not a formula: {f!r}")


def _geometry(region: Region, positive: bool, eps: float, workspace: Optional[Workspace] = None):
    """Convex parts encoding the literal, each face as ``(index, normal, offset)``.

    Inside-tests get the inner margin; complement parts are shrunk by ``eps`` so
    the free space stays strictly away from the closed region.  Faces already
    implied by the workspace box are dropped (positions never leave it).
    """
    if positive or not region.complement:
        parts, shrink = region.parts, INNER_MARGIN
    else:
        parts, shrink = region.complement, eps
    verts = workspace.vertices() if workspace is not None else None
    out = []
    for p in parts:
        faces = []
        for i, h in enumerate(p.halfspaces):
            normal = np.asarray(h.normal)
            if verts is not None and np.max(verts @ normal) <= h.offset:
                continue
            faces.append((i, normal, h.offset - shrink))
        out.append(faces)
    return out


def encode_halfspace_bits(enc: Encoding, normal, offset: float, t: int, key,
                          fold: bool = True) -> _Lit:
    """Binary ``b`` with ``b = 1`` iff ``normal @ pos(t) <= offset`` (up to ``eps``).

    With ``fold``, a face that every reachable position at ``t`` satisfies (or
    violates by at least ``eps``) becomes a constant instead of a binary.
    """
    cfg = enc.cfg
    normal = np.asarray(normal, dtype=float)
    if fold and enc.reach_lo is not None:
        c = (enc.reach_lo[t] + enc.reach_hi[t]) / 2
        r = (enc.reach_hi[t] - enc.reach_lo[t]) / 2
        centre, spread = float(normal @ c), float(np.abs(normal) @ r)
        if centre + spread <= offset:
            return ONE
        if centre - spread >= offset + cfg.eps:
            return ZERO
    X = enc.states()
    b = enc.var("halfspace_bit", t, key, BINARY, 0.0, 1.0)
    M = enc.M
    coeffs = {X[t, i]: c for i, c in enumerate(normal) if c != 0.0}
    # h x <= a + M (1 - b)
    enc.model.add_constraint({**coeffs, b: M}, LE, offset + M, f"bigM_in[{t}]{key}")
    # h x >= a - M b + eps
    enc.model.add_constraint({**coeffs, b: M}, GE, offset + cfg.eps, f"bigM_out[{t}]{key}")
    return _Lit(b)


def encode_polytope_bits(enc: Encoding, poly: ConvexPolytope, key="poly", times=None) -> Dict[Tuple[int, int], _Lit]:
    """One binary per (halfspace, step) for ``poly``, both big-M rows each, no folding.

    Returns ``{(face index, t): bit}``; ``times`` defaults to ``0..N``.
    """
    times = range(enc.cfg.N + 1) if times is None else times
    out = {}
    for t in times:
        for i, h in enumerate(poly.halfspaces):
            out[(i, t)] = encode_halfspace_bits(enc, h.normal, h.offset, t, (key, i), fold=False)
    return out


def _conj(enc: Encoding, lits: List[_Lit], role: str, t: int, key) -> _Lit:
    if any(l.is_const and l.const == 0.0 for l in lits):
        return ZERO
    lits = [l for l in lits if not l.is_const]
    if not lits:
        return ONE
    if len(lits) == 1:
        return lits[0]
    k = _Lit(enc.var(role, t, key, upper=1.0))
    for l in lits:
        enc.row([(1.0, k), (-1.0, l)], LE, 0.0)
    enc.row([(1.0, k)] + [(-1.0, l) for l in lits], GE, 1.0 - len(lits))
    return k


def _disj(enc: Encoding, lits: List[_Lit], role: str, t: int, key) -> _Lit:
    if any(l.is_const and l.const == 1.0 for l in lits):
        return ONE
    lits = [l for l in lits if not l.is_const]
    if not lits:
        return ZERO
    if len(lits) == 1:
        return lits[0]
    k = _Lit(enc.var(role, t, key, upper=1.0))
    for l in lits:
        enc.row([(1.0, k), (-1.0, l)], GE, 0.0)
    enc.row([(1.0, k)] + [(-1.0, l) for l in lits], LE, 0.0)
    return k


def _region_bits(enc: Encoding, region: Region, positive: bool, t: int,
                 workspace: Optional[Workspace], bits: dict) -> List[List[_Lit]]:
    sel = "comp" if (not positive and region.complement) else "pos"
    out = []
    for pi, faces in enumerate(_geometry(region, positive, enc.cfg.eps, workspace)):
        lits = []
        for fi, normal, offset in faces:
            key = (region.label, sel, pi, fi)
            if (key, t) not in bits:
                bits[(key, t)] = encode_halfspace_bits(enc, normal, offset, t, key)
            lits.append(bits[(key, t)])
        out.append(lits)
    return out


def encode_atom(enc: Encoding, region: Region, t: int, positive: bool = True,
                workspace: Optional[Workspace] = None, bits: Optional[dict] = None) -> _Lit:
    """Truth of ``label`` (or ``!label``) at step ``t`` from the halfspace bits.

    Faces of a convex part are conjoined, parts are disjoined.  A negated
    region without a complement decomposition is ``1 - K`` of the region.
    """
    if not region.active(t):
        return ZERO if positive else ONE
    bits = bits if bits is not None else {}
    use_comp = not positive and bool(region.complement)
    sel = "comp" if use_comp else "pos"
    cache = (("K", region.label, sel), t)
    if cache in bits:
        k = bits[cache]
        return k if positive or use_comp else _negated(enc, region, t, k)
    part_lits = []
    for pi, face_lits in enumerate(_region_bits(enc, region, positive, t, workspace, bits)):
        part_lits.append(_conj(enc, face_lits, "K", t, ("part", region.label, sel, pi)))
    k = _disj(enc, part_lits, "K", t, ("region", region.label, sel))
    bits[cache] = k
    if positive or use_comp:
        return k
    return _negated(enc, region, t, k)


def _negated(enc: Encoding, region: Region, t: int, k: _Lit) -> _Lit:
    if k.is_const:
        return _Lit(const=1.0 - k.const)
    key = ("K", t, ("not", region.label))
    if key in enc.varmap:
        return _Lit(enc.varmap[key])
    neg = _Lit(enc.var("K", t, ("not", region.label), upper=1.0))
    enc.row([(1.0, neg), (1.0, k)], EQ, 1.0)
    return neg


# ---------------------------------------------------------------------------
# formulas

class _FormulaEncoder:
    def __init__(self, enc: Encoding, workspace: Workspace):
        self.enc = enc
        self.ws = workspace
        self.memo: Dict[tuple, _Lit] = {}
        self.atoms: Dict[tuple, _Lit] = {}
        self.bits: dict = {}
        self.counter = 0

    def atom(self, label: str, positive: bool, t: int) -> _Lit:
        key = (label, positive, t)
        if key not in self.atoms:
            self.atoms[key] = encode_atom(self.enc, self.ws.region(label), t, positive, self.ws, self.bits)
        return self.atoms[key]

    def node_key(self):
        self.counter += 1
        return self.counter

    def __call__(self, f: Formula, t: int) -> _Lit:
        key = (f, t)
        if key not in self.memo:
            self.memo[key] = self._encode(f, t)
        return self.memo[key]

    def _encode(self, f: Formula, t: int) -> _Lit:
        enc, N = self.enc, self.enc.cfg.N
        match f:
            case TrueF():
                return ONE
            case Not(TrueF()):
                return ZERO
            case Atom(label):
                return self.atom(label, True, t)
            case Not(Atom(label)):
                return self.atom(label, False, t)
            case And(args):
                return _conj(enc, [self(a, t) for a in args], "K", t, self.node_key())
            case Or(args):
                return _disj(enc, [self(a, t) for a in args], "K", t, self.node_key())
            case Eventually(iv, a):
                lits = [self(a, tau) for tau in iv.window(t, N)]
                return self._temporal(lits, t, any_of=True)
            case Always(iv, a):
                lits = [self(a, tau) for tau in iv.window(t, N)]
                return self._temporal(lits, t, any_of=False)
            case Until(iv, l, r):
                return self._until(iv, l, r, t)
            case Next():
                raise EncodingError("the next operator is not supported by the encoder")
            case Not(_):
                raise EncodingError(f"formula is not in negation normal form: {mtl.to_text(f)}")
        raise TypeError(f"not a formula: {f!r}")

    def _temporal(self, lits: List[_Lit], t: int, any_of: bool) -> _Lit:
        enc = self.enc
        if any_of:
            if not lits or all(l.is_const and l.const == 0.0 for l in lits):
                return ZERO
            if any(l.is_const and l.const == 1.0 for l in lits):
                return ONE
        else:
            if not lits or all(l.is_const and l.const == 1.0 for l in lits):
                return ONE
            if any(l.is_const and l.const == 0.0 for l in lits):
                return ZERO
        k = _Lit(enc.var("K", t, self.node_key(), upper=1.0))
        if any_of:
            for l in lits:
                enc.row([(1.0, k), (-1.0, l)], GE, 0.0)
            enc.row([(1.0, k)] + [(-1.0, l) for l in lits], LE, 0.0)
        else:
            for l in lits:
                enc.row([(1.0, k), (-1.0, l)], LE, 0.0)
            # the window length replaces (t2 - t1) for clipped unbounded windows
            enc.row([(1.0, k)] + [(-1.0, l) for l in lits], GE, -(len(lits) - 1))
        return k

    def _until(self, iv, l: Formula, r: Formula, t: int) -> _Lit:
        enc, N = self.enc, self.enc.cfg.N
        w = iv.window(t, N)
        if not len(w):
            return ZERO
        node = self.node_key()
        cs = []
        for j in w:
            c = _Lit(enc.var("c", t, (node, j), upper=1.0))
            q = self(r, j)
            if j == t:
                enc.row([(1.0, c), (-1.0, q)], EQ, 0.0)
            else:
                ps = [self(l, k) for k in range(t, j)]
                enc.row([(1.0, c), (-1.0, q)], LE, 0.0)
                for p in ps:
                    enc.row([(1.0, c), (-1.0, p)], LE, 0.0)
                enc.row([(1.0, c), (-1.0, q)] + [(-1.0, p) for p in ps], GE, -(j - t))
            cs.append(c)
        k = _Lit(enc.var("K", t, node, upper=1.0))
        enc.row([(1.0, k)] + [(-1.0, c) for c in cs], LE, 0.0)
        for c in cs:
            enc.row([(1.0, k), (-1.0, c)], GE, 0.0)
        return k


def encode_formula(enc: Encoding, f: Formula, workspace: Workspace) -> _Lit:
    """Encode NNF formula ``f`` at step 0 and pin its truth value to 1."""
    if not mtl.is_nnf(f):
        raise EncodingError(f"formula is not in negation normal form: {mtl.to_text(f)}")
    _check_horizon(f, enc.cfg.N)
    needed: set = set()
    _literals_needed(f, 0, enc.cfg.N, needed)
    fe = _FormulaEncoder(enc, workspace)
    order = sorted(needed, key=lambda k: (k[2], workspace.labels.index(k[0]), not k[1]))
    # every bit before any operator variable, each group in time order
    for label, positive, t in order:
        region = workspace.region(label)
        if region.active(t):
            _region_bits(enc, region, positive, t, workspace, fe.bits)
    for label, positive, t in order:
        fe.atom(label, positive, t)
    root = fe(f, 0)
    if root.is_const:
        if root.const == 0.0:
            enc.model.add_constraint({}, EQ, 1.0, "root_unsatisfiable")
    else:
        enc.model.add_constraint({root.var: 1.0}, EQ, 1.0, "root")
    enc.root = root
    return root


def _check_horizon(f: Formula, N: int):
    h = mtl.bounded_horizon(f)
    if h > N:
        raise HorizonError(f"formula needs {h} steps of lookahead, horizon is {N}")


def _check_labels(f: Formula, workspace: Workspace):
    missing = mtl.atoms(f) - set(workspace.labels)
    if missing:
        raise EncodingError(f"unknown region label(s): {', '.join(sorted(missing))}")


def build(mode: LinearMode, x0, formula: Formula, workspace: Workspace, cfg: EncodingConfig,
          terminal: Optional[Guard] = None) -> Encoding:
    """Complete sub-task model: dynamics, regions, formula, objective, root pin."""
    f = mtl.to_nnf(formula)
    _check_labels(f, workspace)
    _check_horizon(f, cfg.N)
    needed: set = set()
    _literals_needed(f, 0, cfg.N, needed)
    halfspaces = []
    for label, positive, _ in needed:
        for faces in _geometry(workspace.region(label), positive, cfg.eps, workspace):
            halfspaces.extend(Halfspace(tuple(n), a) for _, n, a in faces)
    M_auto = big_m_for(halfspaces, workspace) if halfspaces else 1.0
    M = cfg.M if cfg.M is not None else M_auto
    if halfspaces and M < (M_auto - 1.0) / 2.0 + cfg.eps:
        raise EncodingError(f"big-M {M:g} is smaller than the workspace extent {(M_auto - 1.0) / 2.0:g}")
    enc = Encoding(MilpModel(name=f"{mode.name}"), cfg, M=M)
    x0 = np.asarray(x0, dtype=float)
    if x0.size == 12:
        x0 = mode.reduce_state(x0)
    encode_dynamics(enc, mode, x0, workspace)
    encode_objective(enc)
    encode_formula(enc, f, workspace)
    if mode.terminal is not None:
        encode_terminal(enc, mode.terminal, workspace)
    if terminal is not None:
        encode_terminal(enc, terminal, workspace)
    return enc
