import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mtlplan import mtl
from mtlplan.mtl import (Always, And, Atom, Eventually, Interval, Next, Not, Or, TrueF, Until)

P, Q, C, O = Atom("p"), Atom("q"), Atom("C"), Atom("O")


def trace(*steps):
    return [frozenset(s) for s in steps]


# -- parsing -----------------------------------------------------------------

def test_parse_mission_formula():
    f = mtl.parse("F[0,5] C & G !O")
    assert f == And((Eventually(Interval(0, 5), C), Always(Interval(0, None), Not(O))))


def test_parse_true_and_until():
    assert mtl.parse("true") == TrueF()
    assert mtl.parse("p U[2,4] q") == Until(Interval(2, 4), P, Q)


def test_parse_precedence():
    # unary binds tighter than U, U tighter than &, & tighter than |, | tighter than ->
    f = mtl.parse("!p U[0,1] q & p | q -> p")
    left = Or((And((Until(Interval(0, 1), Not(P), Q), P)), Q))
    assert f == Or((Not(left), P))


def test_parse_next_and_primes():
    assert mtl.parse("X F'") == Next(Atom("F'"))
    assert mtl.parse("G[1,inf] H_1") == Always(Interval(1, None), Atom("H_1"))


@pytest.mark.parametrize("text", ["", "p &", "F[3,1] p", "F[0,2 p", "(p", "p q", "U[0,1] p", "F[-1,2] p"])
def test_parse_rejects(text):
    with pytest.raises(mtl.MtlSyntaxError):
        mtl.parse(text)


# -- negation normal form ------------------------------------------------------

def test_nnf_de_morgan():
    assert mtl.to_nnf(mtl.parse("!(p & q)")) == Or((Not(P), Not(Q)))


def test_nnf_temporal_duality():
    assert mtl.to_nnf(mtl.parse("!F[0,3] p")) == Always(Interval(0, 3), Not(P))
    assert mtl.to_nnf(mtl.parse("!G[1,2] p")) == Eventually(Interval(1, 2), Not(P))


def test_nnf_negated_until_equivalent_on_length_four_traces():
    f = mtl.parse("!(p U[0,2] q)")
    g = mtl.to_nnf(f)
    assert mtl.is_nnf(g) and not mtl.is_nnf(f)
    for tr in oracles.all_traces(["p", "q"], 4):
        assert oracles.package_evaluate(f, tr) == oracles.package_evaluate(g, tr)


def test_nnf_is_idempotent_on_family():
    for f in oracles.formula_family():
        g = mtl.to_nnf(f)
        assert mtl.is_nnf(g)
        assert mtl.to_nnf(g) == g


# -- evaluation -------------------------------------------------------------------

def test_always_over_all_steps():
    assert mtl.evaluate(mtl.parse("G[0,2] p"), trace("p", "p", "p"), 0)


def test_until_hit_at_step_two():
    assert mtl.evaluate(mtl.parse("p U[0,3] q"), trace("p", "p", "pq", ""), 0)


def test_until_fails_when_left_breaks_first():
    assert not mtl.evaluate(mtl.parse("p U[0,3] q"), trace("p", "", "q", ""), 0)


def test_bounded_window_past_trace_raises():
    with pytest.raises(mtl.HorizonError):
        mtl.evaluate(mtl.parse("F[0,5] p"), trace("", "", ""), 0)


def test_unbounded_window_clipped_to_end():
    tr = trace("", "", "p", "")
    assert mtl.evaluate(mtl.parse("F p"), tr, 0)
    assert not mtl.evaluate(mtl.parse("F p"), tr, 0, end=1)
    assert mtl.evaluate(mtl.parse("G !p"), tr, 0, end=1)


def test_evaluate_at_offset():
    tr = trace("", "p", "p", "")
    assert mtl.evaluate(mtl.parse("G[0,1] p"), tr, 1)
    assert not mtl.evaluate(mtl.parse("G[0,1] p"), tr, 0)


def test_first_violation_reports_step():
    tr = trace("", "", "O", "")
    assert mtl.first_violation(mtl.parse("F[0,3] C & G !O"), tr) == 2


# -- horizon --------------------------------------------------------------------------

@pytest.mark.parametrize("text,h", [("F[0,5] p", 5), ("F[0,5] G[0,10] p", 15), ("p", 0),
                                    ("p U[1,3] F[0,2] q", 5), ("X X p", 2), ("G[0,2] p & F[0,7] q", 7)])
def test_horizon(text, h):
    assert mtl.horizon(mtl.parse(text)) == h


def test_horizon_unbounded():
    f = mtl.parse("F[0,5] C & G !O")
    with pytest.raises(mtl.UnboundedHorizonError):
        mtl.horizon(f)
    assert mtl.horizon(f, unbounded=30) == 30
    assert mtl.bounded_horizon(f) == 5


# -- exhaustive agreement with the satisfaction-vector oracle ------------------------

def test_family_agrees_with_oracle_up_to_length_four():
    fam = oracles.formula_family()
    for tr in oracles.all_traces(["p", "q"], 4):
        for f in fam:
            for t in range(len(tr)):
                assert oracles.package_evaluate(f, tr, t) == oracles.oracle_evaluate(f, tr, t), (f, tr, t)


# -- property tests -------------------------------------------------------------------

intervals = st.builds(lambda a, d: Interval(a, a + d), st.integers(0, 2), st.integers(0, 2))
atoms_ = st.sampled_from([P, Q])


def _extend(children):
    return st.one_of(
        st.builds(Not, children),
        st.builds(lambda a, b: And((a, b)), children, children),
        st.builds(lambda a, b: Or((a, b)), children, children),
        st.builds(Eventually, intervals, children),
        st.builds(Always, intervals, children),
        st.builds(Until, intervals, children, children),
    )


formulas = st.recursive(st.one_of(atoms_, st.just(TrueF())), _extend, max_leaves=6)
traces = st.lists(st.sets(st.sampled_from(["p", "q"])).map(frozenset), min_size=1, max_size=7)


@settings(max_examples=300, deadline=None)
@given(formulas)
def test_print_parse_round_trip(f):
    assert mtl.parse(mtl.to_text(f)) == f


@settings(max_examples=300, deadline=None)
@given(formulas, traces)
def test_nnf_preserves_truth(f, tr):
    assert oracles.package_evaluate(mtl.to_nnf(f), tr) == oracles.package_evaluate(f, tr)


@settings(max_examples=300, deadline=None)
@given(formulas, intervals, traces)
def test_eventually_always_duality(f, iv, tr):
    lhs = oracles.package_evaluate(Not(Eventually(iv, f)), tr)
    rhs = oracles.package_evaluate(Always(iv, Not(f)), tr)
    assert lhs == rhs


@settings(max_examples=300, deadline=None)
@given(formulas, intervals, traces)
def test_eventually_is_true_until(f, iv, tr):
    assert oracles.package_evaluate(Eventually(iv, f), tr) == oracles.package_evaluate(Until(iv, TrueF(), f), tr)


@settings(max_examples=300, deadline=None)
@given(formulas, traces)
def test_evaluate_matches_oracle(f, tr):
    assert oracles.package_evaluate(f, tr) == oracles.oracle_evaluate(f, tr)


def test_atoms_collects_labels():
    assert mtl.atoms(mtl.parse("F[0,5] C & G !O | p U[0,1] X q")) == {"C", "O", "p", "q"}
