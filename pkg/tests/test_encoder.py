import numpy as np
import pytest

import oracles
from mtlplan import mtl
from mtlplan.dynamics import hover_mode, QuadrotorParams
from mtlplan.encoder import (DEFAULT_EPS, Encoding, EncodingConfig, EncodingError, _FormulaEncoder,
                             _Lit, build, encode_atom, encode_dynamics, encode_objective,
                             encode_polytope_bits)
from mtlplan.milp import BINARY, CONTINUOUS, EQ, GE, LE, MilpModel, OPTIMAL, check_solution, solve_milp
from mtlplan.workspace import ConvexPolytope, Halfspace, Region, Workspace, trace_of


def line_ws(*regions):
    return Workspace((-10.0,), (10.0,), regions)


def plane_ws(**boxes):
    regions = [Region(k, (ConvexPolytope.box(lo, hi),)) for k, (lo, hi) in boxes.items()]
    return Workspace((0.0, 0.0), (6.0, 6.0), regions)


def fresh(N, M=20.0):
    return Encoding(MilpModel(), EncodingConfig(N=N), M=M)


def rows_of(model, start=0):
    return model.constraints[start:]


class _FreeAtoms(_FormulaEncoder):
    """Atoms become unconstrained [0, 1] variables so operator rows can be read in isolation."""

    def atom(self, label, positive, t):
        key = (label, positive, t)
        if key not in self.atoms:
            self.atoms[key] = _Lit(self.enc.var("atom", t, (label, positive), upper=1.0))
        return self.atoms[key]


# -- dynamics ------------------------------------------------------------------------------

def test_scalar_dynamics_rows():
    enc = fresh(1)
    encode_dynamics(enc, oracles.single_integrator(dim=1), np.zeros(1))
    X, U = enc.states(), enc.inputs()
    rows = {c.name: c for c in enc.model.constraints}
    assert len(rows) == 2
    assert rows["init[0]"].coeffs == ((X[0, 0], 1.0),) and rows["init[0]"].rhs == 0.0
    dyn = dict(rows["dyn[0][0]"].coeffs)
    assert dyn == {X[1, 0]: 1.0, X[0, 0]: -1.0, U[0, 0]: -1.0}
    assert rows["dyn[0][0]"].sense == EQ and rows["dyn[0][0]"].rhs == 0.0


def test_hover_dynamics_row_count():
    enc = fresh(30)
    encode_dynamics(enc, hover_mode(QuadrotorParams()), np.zeros(10))
    names = [c.name for c in enc.model.constraints]
    assert sum(n.startswith("dyn") for n in names) == 300
    assert sum(n.startswith("init") for n in names) == 10


def test_initial_state_outside_workspace():
    enc = fresh(2)
    with pytest.raises(EncodingError):
        encode_dynamics(enc, oracles.single_integrator(dim=1), np.array([11.0]), line_ws())


# -- halfspace bits --------------------------------------------------------------------------

def test_one_halfspace_two_steps():
    enc = fresh(2)
    encode_dynamics(enc, oracles.single_integrator(dim=1), np.zeros(1))
    before = len(enc.model.constraints)
    bits = encode_polytope_bits(enc, ConvexPolytope((Halfspace((1.0,), 1.0),)))
    assert len(bits) == 3
    assert len(enc.model.binary_ids) == 3
    assert len(enc.model.constraints) - before == 6


def _pinned_bit(x0):
    enc = fresh(1)
    encode_dynamics(enc, oracles.single_integrator(dim=1), np.array([x0]))
    bit = encode_polytope_bits(enc, ConvexPolytope((Halfspace((1.0,), 1.0),)), times=[0])[(0, 0)]
    return enc, bit


@pytest.mark.parametrize("x0,expected", [(0.5, 1.0), (1.0, 1.0), (1.0 + 2 * DEFAULT_EPS, 0.0), (3.0, 0.0)])
def test_bit_follows_halfspace(x0, expected):
    enc, bit = _pinned_bit(x0)
    res = solve_milp(enc.model)
    assert res.status == OPTIMAL
    assert res.x[bit.var] == pytest.approx(expected)


def test_bit_boundary_layer_is_infeasible():
    # points strictly between a and a + eps satisfy neither big-M row
    enc, _ = _pinned_bit(1.0 + DEFAULT_EPS / 2)
    assert solve_milp(enc.model).status != OPTIMAL


def test_folding_replaces_decided_faces_by_constants():
    w = line_ws(Region("far", (ConvexPolytope.box((8.0,), (9.0,)),)))
    enc = build(oracles.single_integrator(dim=1), [0.0], mtl.parse("G[0,2] !far"), w, EncodingConfig(N=3))
    # |u| <= 1 keeps x within [-3, 3]; "far" never comes into reach
    assert enc.model.binary_ids == []


# -- atoms -------------------------------------------------------------------------------------

def test_atom_forced_true_inside_first_part():
    two = Region("R", (ConvexPolytope.box((0.5,), (1.5,)), ConvexPolytope.box((4.0,), (5.0,))))
    w = line_ws(two)
    enc = fresh(1, M=50.0)
    encode_dynamics(enc, oracles.single_integrator(dim=1), np.zeros(1), w)
    k = encode_atom(enc, two, 1, True, w)
    u = enc.inputs()[0, 0]
    enc.model.add_constraint({u: 1.0}, EQ, 1.0)
    res = solve_milp(enc.model)
    assert res.status == OPTIMAL
    assert res.x[k.var] == pytest.approx(1.0)


def test_negated_atom_without_complement():
    r = Region("R", (ConvexPolytope.box((0.5,), (1.5,)),))
    w = line_ws(r)
    enc = fresh(1, M=50.0)
    encode_dynamics(enc, oracles.single_integrator(dim=1), np.zeros(1), w)
    k = encode_atom(enc, r, 1, False, w)
    enc.model.add_constraint({enc.inputs()[0, 0]: 1.0}, EQ, 1.0)
    res = solve_milp(enc.model)
    assert res.x[k.var] == pytest.approx(0.0)


def test_inactive_region_is_constant():
    r = Region("R", (ConvexPolytope.box((0.5,), (1.5,)),), active_window=(5, 6))
    enc = fresh(1)
    encode_dynamics(enc, oracles.single_integrator(dim=1), np.zeros(1), line_ws(r))
    assert encode_atom(enc, r, 1, True, line_ws(r)).const == 0.0
    assert encode_atom(enc, r, 1, False, line_ws(r)).const == 1.0


# -- operators -----------------------------------------------------------------------------------

def _operator_rows(formula, N=2):
    enc = fresh(N)
    fe = _FreeAtoms(enc, line_ws())
    root = fe(mtl.parse(formula), 0)
    return enc, fe, root


def _row_sets(enc):
    return [(dict(c.coeffs), c.sense, c.rhs) for c in enc.model.constraints]


def test_eventually_rows():
    enc, fe, k = _operator_rows("F[0,2] p")
    p = [fe.atoms[("p", True, t)].var for t in range(3)]
    rows = _row_sets(enc)
    assert len(rows) == 4
    for v in p:
        assert ({k.var: 1.0, v: -1.0}, GE, 0.0) in rows
    assert ({k.var: 1.0, **{v: -1.0 for v in p}}, LE, 0.0) in rows


def test_always_rows():
    enc, fe, k = _operator_rows("G[0,2] p")
    p = [fe.atoms[("p", True, t)].var for t in range(3)]
    rows = _row_sets(enc)
    assert len(rows) == 4
    for v in p:
        assert ({k.var: 1.0, v: -1.0}, LE, 0.0) in rows
    assert ({k.var: 1.0, **{v: -1.0 for v in p}}, GE, -2.0) in rows


def test_until_rows():
    enc, fe, k = _operator_rows("p U[0,1] q", N=1)
    p0 = fe.atoms[("p", True, 0)].var
    q0, q1 = fe.atoms[("q", True, 0)].var, fe.atoms[("q", True, 1)].var
    c00 = enc.varmap[("c", 0, (1, 0))]
    c01 = enc.varmap[("c", 0, (1, 1))]
    rows = _row_sets(enc)
    assert ({c00: 1.0, q0: -1.0}, EQ, 0.0) in rows
    assert ({c01: 1.0, q1: -1.0}, LE, 0.0) in rows
    assert ({c01: 1.0, p0: -1.0}, LE, 0.0) in rows
    assert ({c01: 1.0, q1: -1.0, p0: -1.0}, GE, -1.0) in rows
    assert ({k.var: 1.0, c00: -1.0, c01: -1.0}, LE, 0.0) in rows
    assert ({k.var: 1.0, c00: -1.0}, GE, 0.0) in rows
    assert ({k.var: 1.0, c01: -1.0}, GE, 0.0) in rows
    assert len(rows) == 7


def test_and_or_rows():
    enc, fe, k = _operator_rows("p & q")
    p, q = fe.atoms[("p", True, 0)].var, fe.atoms[("q", True, 0)].var
    rows = _row_sets(enc)
    assert rows == [({k.var: 1.0, p: -1.0}, LE, 0.0), ({k.var: 1.0, q: -1.0}, LE, 0.0),
                    ({k.var: 1.0, p: -1.0, q: -1.0}, GE, -1.0)]
    enc, fe, k = _operator_rows("p | q")
    p, q = fe.atoms[("p", True, 0)].var, fe.atoms[("q", True, 0)].var
    rows = _row_sets(enc)
    assert rows == [({k.var: 1.0, p: -1.0}, GE, 0.0), ({k.var: 1.0, q: -1.0}, GE, 0.0),
                    ({k.var: 1.0, p: -1.0, q: -1.0}, LE, 0.0)]


@pytest.mark.parametrize("text", ["F[0,2] p", "G[0,2] p", "p U[0,2] q", "p & q", "p | q",
                                  "F[0,1] (p & G[0,1] q)"])
def test_operator_rows_agree_with_semantics_on_integral_atoms(text):
    """With atoms fixed to 0/1 the only feasible root value is the monitor's verdict."""
    f = mtl.parse(text)
    N = max(1, mtl.horizon(f))
    import itertools
    for bits in itertools.product((0.0, 1.0), repeat=2 * (N + 1)):
        enc, fe, k = _operator_rows(text, N)
        tr = [frozenset(l for l, b in zip("pq", bits[2 * t:2 * t + 2]) if b) for t in range(N + 1)]
        for (label, _, t), lit in fe.atoms.items():
            enc.model.add_constraint({lit.var: 1.0}, EQ, bits[2 * t + "pq".index(label)])
        enc.model.set_objective({k.var: 1.0})
        low = solve_milp(enc.model).objective
        enc.model.set_objective({k.var: -1.0})
        high = -solve_milp(enc.model).objective
        truth = float(mtl.evaluate(f, tr, 0))
        assert low == pytest.approx(truth) and high == pytest.approx(truth), (text, tr)


def test_next_is_rejected():
    w = plane_ws(A=((1, 1), (2, 2)))
    with pytest.raises(EncodingError):
        build(oracles.single_integrator(), [0.5, 0.5], mtl.parse("X A"), w, EncodingConfig(N=3))


# -- objective ----------------------------------------------------------------------------------

def test_objective_slacks_one_input():
    enc = fresh(1)
    encode_dynamics(enc, oracles.single_integrator(dim=1), np.zeros(1))
    before = (enc.model.n_vars, len(enc.model.constraints))
    encode_objective(enc)
    assert enc.model.n_vars - before[0] == 1
    assert len(enc.model.constraints) - before[1] == 2


def test_zero_input_plan_costs_nothing():
    w = plane_ws(A=((0, 0), (2, 2)))
    enc = build(oracles.single_integrator(), [1.0, 1.0], mtl.parse("G[0,3] A"), w, EncodingConfig(N=3))
    res = solve_milp(enc.model)
    assert res.status == OPTIMAL and res.objective == pytest.approx(0.0, abs=1e-9)


# -- build ----------------------------------------------------------------------------------------

def test_build_is_deterministic():
    w = plane_ws(A=((1, 1), (2, 2)), B=((3, 3), (4, 4)))
    f = mtl.parse("F[0,4] A & G !B")
    a = build(oracles.single_integrator(), [0.2, 0.2], f, w, EncodingConfig(N=5))
    b = build(oracles.single_integrator(), [0.2, 0.2], f, w, EncodingConfig(N=5))
    assert a.model.signature() == b.model.signature()


def test_build_horizon_too_long():
    w = plane_ws(A=((1, 1), (2, 2)))
    with pytest.raises(mtl.HorizonError):
        build(oracles.single_integrator(), [0.2, 0.2], mtl.parse("F[0,40] A"), w, EncodingConfig(N=30))


def test_build_unknown_label():
    w = plane_ws(A=((1, 1), (2, 2)))
    with pytest.raises(EncodingError):
        build(oracles.single_integrator(), [0.2, 0.2], mtl.parse("F[0,4] Z"), w, EncodingConfig(N=5))


def test_build_rejects_small_big_m():
    w = plane_ws(A=((1, 1), (2, 2)))
    with pytest.raises(EncodingError):
        build(oracles.single_integrator(), [0.2, 0.2], mtl.parse("F[0,4] A"), w, EncodingConfig(N=5, M=1.0))


def test_only_halfspace_bits_are_binary():
    w = plane_ws(A=((1, 1), (2, 2)), B=((3, 3), (4, 4)))
    enc = build(oracles.single_integrator(), [0.2, 0.2], mtl.parse("!B U[0,5] A & F[0,5] B"), w,
                EncodingConfig(N=6))
    for (role, _, _), vid in enc.varmap.items():
        v = enc.model.vars[vid]
        if role in ("K", "c"):
            assert v.kind == CONTINUOUS and (v.lower, v.upper) == (0.0, 1.0)
        assert (v.kind == BINARY) == (role == "halfspace_bit")
    assert enc.model.binary_ids


def test_root_is_pinned():
    w = plane_ws(A=((1, 1), (2, 2)))
    enc = build(oracles.single_integrator(), [0.2, 0.2], mtl.parse("F[0,4] A"), w, EncodingConfig(N=5))
    root = [c for c in enc.model.constraints if c.name == "root"]
    assert root == [root[0]] and root[0].coeffs == ((enc.root.var, 1.0),) and root[0].rhs == 1.0


def test_optimal_plan_satisfies_formula_and_model():
    w = plane_ws(A=((1.2, 1.2), (2.2, 2.2)), B=((3.2, 3.2), (4.2, 4.2)))
    f = mtl.parse("F[0,5] B & G !A")
    enc = build(oracles.single_integrator(), [0.5, 0.5], f, w, EncodingConfig(N=6))
    res = solve_milp(enc.model)
    assert res.status == OPTIMAL
    assert check_solution(enc.model, res.x) == []
    X, _ = enc.decode(res.x)
    assert mtl.evaluate(f, trace_of(w, X), 0)
