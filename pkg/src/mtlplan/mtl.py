"""Metric temporal logic over discrete steps.

Formulas are immutable trees.  Time intervals count discrete steps; an
interval whose upper end is ``None`` is unbounded and gets clipped to the end
of the planning window (``end``) when it is monitored or encoded.

Text syntax::

    true  false  p  !p  p & q  p | q  p -> q
    F[a,b] p   G[a,b] p   G p   F p   X p   p U[a,b] q   p U q

Precedence, tightest first: unary, ``U``, ``&``, ``|``, ``->``.  ``U`` and
``->`` associate to the right.  ``F``, ``G`` and ``X`` read as operators only
when followed by ``[`` or by something that starts a formula, so regions named
``F`` or ``G`` still work as atoms (``F[0,10] G & G !O``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

__all__ = [
    "Interval", "Formula", "TrueF", "Atom", "Not", "And", "Or", "Next",
    "Until", "Eventually", "Always", "FALSE", "TRUE",
    "MtlSyntaxError", "HorizonError", "UnboundedHorizonError",
    "parse", "to_text", "to_nnf", "is_nnf", "evaluate", "horizon", "atoms",
    "conj", "disj", "implies",
]


class MtlSyntaxError(ValueError):
    def __init__(self, msg: str, text: str, pos: int):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{msg} at line {line}, column {col}")
        self.line = line
        self.column = col


class HorizonError(ValueError):
    """The trace (or planning horizon) is too short to decide a formula."""


class UnboundedHorizonError(HorizonError):
    """An unbounded interval has no planning window to clip it to."""


@dataclass(frozen=True)
class Interval:
    lo: int = 0
    hi: Optional[int] = None

    def __post_init__(self):
        if self.lo < 0:
            raise ValueError(f"interval lower bound must be >= 0, got {self.lo}")
        if self.hi is not None and self.hi < self.lo:
            raise ValueError(f"empty interval [{self.lo},{self.hi}]")

    @property
    def bounded(self) -> bool:
        return self.hi is not None

    def window(self, t: int, end: Optional[int]) -> range:
        """Absolute steps covered at time ``t``; unbounded ends stop at ``end``."""
        if self.hi is None:
            if end is None:
                raise UnboundedHorizonError("unbounded interval without a planning window")
            return range(t + self.lo, end + 1)
        return range(t + self.lo, t + self.hi + 1)

    def __str__(self) -> str:
        return f"[{self.lo},{'inf' if self.hi is None else self.hi}]"


class Formula:
    __slots__ = ()

    def __and__(self, other: "Formula") -> "Formula":
        return conj([self, other])

    def __or__(self, other: "Formula") -> "Formula":
        return disj([self, other])

    def __invert__(self) -> "Formula":
        return Not(self)

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    label: str


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    args: tuple

    def __post_init__(self):
        if len(self.args) < 2:
            raise ValueError("And needs at least two operands")


@dataclass(frozen=True)
class Or(Formula):
    args: tuple

    def __post_init__(self):
        if len(self.args) < 2:
            raise ValueError("Or needs at least two operands")


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula


@dataclass(frozen=True)
class Until(Formula):
    interval: Interval
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    interval: Interval
    arg: Formula


@dataclass(frozen=True)
class Always(Formula):
    interval: Interval
    arg: Formula


TRUE = TrueF()
FALSE = Not(TRUE)


def conj(args: Iterable[Formula]) -> Formula:
    """Conjunction that flattens nested ``And`` and tolerates one operand."""
    flat = []
    for a in args:
        flat.extend(a.args if isinstance(a, And) else (a,))
    if not flat:
        return TRUE
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def disj(args: Iterable[Formula]) -> Formula:
    flat = []
    for a in args:
        flat.extend(a.args if isinstance(a, Or) else (a,))
    if not flat:
        return FALSE
    return flat[0] if len(flat) == 1 else Or(tuple(flat))


def implies(a: Formula, b: Formula) -> Formula:
    return disj([Not(a), b])


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<arrow>->)|(?P<sym>[!&|()\[\],])|(?P<num>\d+)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9_']*))"
)
_KEYWORDS = {"true", "false", "U", "inf"}
_UNARY = {"F", "G", "X"}


@dataclass
class _Tok:
    kind: str
    value: str
    pos: int


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise MtlSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        value = m.group(kind)
        toks.append(_Tok(kind, value, m.start(kind)))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok: Optional[_Tok] = None):
        tok = tok or self.peek()
        raise MtlSyntaxError(msg, self.text, tok.pos)

    def expect(self, value: str) -> _Tok:
        tok = self.take()
        if tok.value != value or tok.kind == "eof":
            self.error(f"expected {value!r}, found {tok.value or 'end of input'!r}", tok)
        return tok

    def starts_formula(self, tok: _Tok) -> bool:
        if tok.kind == "ident":
            return tok.value not in ("U", "inf")
        return tok.value in ("!", "(")

    def parse(self) -> Formula:
        f = self.implication()
        if self.peek().kind != "eof":
            self.error(f"unexpected {self.peek().value!r}")
        return f

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.peek().kind == "arrow":
            self.take()
            return implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        args = [self.conjunction()]
        while self.peek().value == "|":
            self.take()
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conjunction(self) -> Formula:
        args = [self.until()]
        while self.peek().value == "&":
            self.take()
            args.append(self.until())
        return args[0] if len(args) == 1 else And(tuple(args))

    def until(self) -> Formula:
        left = self.unary()
        tok = self.peek()
        if tok.kind == "ident" and tok.value == "U":
            self.take()
            interval = self.interval_opt()
            return Until(interval, left, self.until())
        return left

    def interval_opt(self) -> Interval:
        if self.peek().value != "[":
            return Interval(0, None)
        start = self.take()
        lo = self.take()
        if lo.kind != "num":
            self.error("expected interval lower bound", lo)
        self.expect(",")
        hi = self.take()
        if hi.kind == "num":
            hi_val: Optional[int] = int(hi.value)
        elif hi.value == "inf":
            hi_val = None
        else:
            self.error("expected interval upper bound", hi)
        self.expect("]")
        try:
            return Interval(int(lo.value), hi_val)
        except ValueError as exc:
            self.error(str(exc), start)

    def unary(self) -> Formula:
        tok = self.peek()
        if tok.value == "!":
            self.take()
            return Not(self.unary())
        if tok.kind == "ident" and tok.value in _UNARY:
            nxt = self.peek(1)
            if tok.value != "X" and nxt.value == "[":
                self.take()
                interval = self.interval_opt()
                arg = self.unary()
                return Eventually(interval, arg) if tok.value == "F" else Always(interval, arg)
            if self.starts_formula(nxt):
                self.take()
                arg = self.unary()
                if tok.value == "X":
                    return Next(arg)
                cls = Eventually if tok.value == "F" else Always
                return cls(Interval(0, None), arg)
        return self.primary()

    def primary(self) -> Formula:
        tok = self.take()
        if tok.value == "(":
            f = self.implication()
            self.expect(")")
            return f
        if tok.kind == "ident":
            if tok.value == "true":
                return TRUE
            if tok.value == "false":
                return FALSE
            if tok.value in _KEYWORDS:
                self.error(f"unknown operator or misplaced keyword {tok.value!r}", tok)
            return Atom(tok.value)
        if tok.kind == "eof":
            self.error("unexpected end of input", tok)
        self.error(f"unexpected {tok.value!r}", tok)


def parse(text: str) -> Formula:
    """Parse a formula string (see module docstring for the grammar)."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"imp": 0, "or": 1, "and": 2, "until": 3, "unary": 4}


def _prec(f: Formula) -> int:
    match f:
        case Or():
            return _PREC["or"]
        case And():
            return _PREC["and"]
        case Until():
            return _PREC["until"]
        case _:
            return _PREC["unary"]


def _wrap(f: Formula, need_above: int) -> str:
    s = to_text(f)
    return s if _prec(f) > need_above else f"({s})"


def _interval_text(iv: Interval, bare_ok: bool) -> str:
    if bare_ok and iv.lo == 0 and iv.hi is None:
        return ""
    return str(iv)


def to_text(f: Formula) -> str:
    """Serialize ``f``; ``parse(to_text(f)) == f`` for every formula."""
    match f:
        case TrueF():
            return "true"
        case Atom(label):
            return label
        case Not(TrueF()):
            return "false"
        case Not(arg):
            return "!" + _wrap(arg, _PREC["until"])
        case Next(arg):
            return "X " + _wrap(arg, _PREC["until"])
        case Eventually(iv, arg):
            ivs = _interval_text(iv, True)
            return f"F{ivs} " + _wrap(arg, _PREC["until"])
        case Always(iv, arg):
            ivs = _interval_text(iv, True)
            return f"G{ivs} " + _wrap(arg, _PREC["until"])
        case Until(iv, left, right):
            # right-associative: the left operand must bind tighter than U
            return f"{_wrap(left, _PREC['until'])} U{_interval_text(iv, True)} {_wrap(right, _PREC['until'] - 1)}"
        case And(args):
            return " & ".join(_wrap(a, _PREC["and"]) for a in args)
        case Or(args):
            return " | ".join(_wrap(a, _PREC["or"]) for a in args)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# structure

def atoms(f: Formula) -> set:
    match f:
        case Atom(label):
            return {label}
        case TrueF():
            return set()
        case Not(a) | Next(a) | Eventually(_, a) | Always(_, a):
            return atoms(a)
        case Until(_, l, r):
            return atoms(l) | atoms(r)
        case And(args) | Or(args):
            return set().union(*(atoms(a) for a in args))
    raise TypeError(f"not a formula: {f!r}")


def horizon(f: Formula, unbounded: Optional[int] = None) -> int:
    """Number of steps of lookahead needed to decide ``f`` at time 0.

    Nested temporal operators add up their upper bounds.  Unbounded intervals
    raise :class:`UnboundedHorizonError` unless ``unbounded`` gives the length
    they are clipped to.
    """
    match f:
        case TrueF() | Atom():
            return 0
        case Not(a):
            return horizon(a, unbounded)
        case Next(a):
            return 1 + horizon(a, unbounded)
        case And(args) | Or(args):
            return max(horizon(a, unbounded) for a in args)
        case Eventually(iv, a) | Always(iv, a):
            return _hi(iv, unbounded) + horizon(a, unbounded)
        case Until(iv, l, r):
            return _hi(iv, unbounded) + max(horizon(l, unbounded), horizon(r, unbounded))
    raise TypeError(f"not a formula: {f!r}")


def _hi(iv: Interval, unbounded: Optional[int]) -> int:
    if iv.hi is not None:
        return iv.hi
    if unbounded is None:
        raise UnboundedHorizonError(f"interval {iv} is unbounded")
    return max(unbounded, iv.lo)


def bounded_horizon(f: Formula) -> int:
    """Lookahead of ``f`` counting unbounded intervals by their lower end only."""
    match f:
        case TrueF() | Atom():
            return 0
        case Not(a):
            return bounded_horizon(a)
        case Next(a):
            return 1 + bounded_horizon(a)
        case And(args) | Or(args):
            return max(bounded_horizon(a) for a in args)
        case Eventually(iv, a) | Always(iv, a):
            return (iv.lo if iv.hi is None else iv.hi) + bounded_horizon(a)
        case Until(iv, l, r):
            return (iv.lo if iv.hi is None else iv.hi) + max(bounded_horizon(l), bounded_horizon(r))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# negation normal form

def is_nnf(f: Formula) -> bool:
    match f:
        case Not(Atom()) | Not(TrueF()):
            return True
        case Not(_):
            return False
        case TrueF() | Atom():
            return True
        case Next(a) | Eventually(_, a) | Always(_, a):
            return is_nnf(a)
        case Until(_, l, r):
            return is_nnf(l) and is_nnf(r)
        case And(args) | Or(args):
            return all(is_nnf(a) for a in args)
    raise TypeError(f"not a formula: {f!r}")


def to_nnf(f: Formula) -> Formula:
    """Push negations down to atoms (``!true`` stays as the constant false)."""
    match f:
        case TrueF() | Atom():
            return f
        case Not(g):
            return _negate(g)
        case And(args):
            return conj(to_nnf(a) for a in args)
        case Or(args):
            return disj(to_nnf(a) for a in args)
        case Next(a):
            return Next(to_nnf(a))
        case Eventually(iv, a):
            return Eventually(iv, to_nnf(a))
        case Always(iv, a):
            return Always(iv, to_nnf(a))
        case Until(iv, l, r):
            return Until(iv, to_nnf(l), to_nnf(r))
    raise TypeError(f"not a formula: {f!r}")


def _negate(g: Formula) -> Formula:
    """NNF of ``!g``."""
    match g:
        case TrueF() | Atom():
            return Not(g)
        case Not(h):
            return to_nnf(h)
        case And(args):
            return disj(_negate(a) for a in args)
        case Or(args):
            return conj(_negate(a) for a in args)
        case Next(a):
            return Next(_negate(a))
        case Eventually(iv, a):
            return Always(iv, _negate(a))
        case Always(iv, a):
            return Eventually(iv, _negate(a))
        case Until(iv, l, r):
            return _negate_until(iv, l, r)
    raise TypeError(f"not a formula: {g!r}")


def _negate_until(iv: Interval, l: Formula, r: Formula) -> Formula:
    # !(l U[a,b] r) holds iff r never holds on [a,b], or l fails somewhere
    # before a, or from a onwards !r persists until a step where both fail.
    nl, nr = _negate(l), _negate(r)
    a = iv.lo
    parts = [Always(iv, nr)]
    if a > 0:
        parts.append(Eventually(Interval(0, a - 1), nl))
    rest_hi = None if iv.hi is None else iv.hi - a
    tail = Until(Interval(0, rest_hi), nr, conj([nl, nr]))
    parts.append(tail if a == 0 else Always(Interval(a, a), tail))
    return disj(parts)


# ---------------------------------------------------------------------------
# monitoring

Trace = Sequence[frozenset]


def evaluate(f: Formula, trace: Trace, t: int = 0, end: Optional[int] = None) -> bool:
    """Decide ``trace, t |= f`` under finite-trace semantics.

    ``trace[k]`` is the set of atoms true at step ``k``.  Unbounded intervals
    are clipped to ``end`` (default: last step of the trace).  Any bounded
    window reaching past the trace raises :class:`HorizonError`; there is no
    optimistic or pessimistic verdict.
    """
    n = len(trace)
    if end is None:
        end = n - 1
    if end >= n:
        raise HorizonError(f"window end {end} lies beyond the trace (length {n})")
    return _eval(f, trace, t, end)


def _window(iv: Interval, t: int, end: int, n: int) -> range:
    w = iv.window(t, end)
    if len(w) and w[-1] >= n:
        raise HorizonError(f"interval {iv} at step {t} needs step {w[-1]}, trace has {n}")
    return w


def _eval(f: Formula, trace: Trace, t: int, end: int) -> bool:
    n = len(trace)
    if t >= n or t < 0:
        raise HorizonError(f"step {t} outside trace of length {n}")
    match f:
        case TrueF():
            return True
        case Atom(label):
            return label in trace[t]
        case Not(a):
            return not _eval(a, trace, t, end)
        case And(args):
            vals = [_eval(a, trace, t, end) for a in args]
            return all(vals)
        case Or(args):
            vals = [_eval(a, trace, t, end) for a in args]
            return any(vals)
        case Next(a):
            return _eval(a, trace, t + 1, end)
        case Eventually(iv, a):
            vals = [_eval(a, trace, k, end) for k in _window(iv, t, end, n)]
            return any(vals)
        case Always(iv, a):
            vals = [_eval(a, trace, k, end) for k in _window(iv, t, end, n)]
            return all(vals)
        case Until(iv, l, r):
            w = _window(iv, t, end, n)
            lefts = [_eval(l, trace, k, end) for k in range(t, w[-1])] if len(w) else []
            rights = [_eval(r, trace, k, end) for k in w]
            for j, rv in zip(w, rights):
                if rv and all(lefts[: j - t]):
                    return True
            return False
    raise TypeError(f"not a formula: {f!r}")


def first_violation(f: Formula, trace: Trace, t: int = 0, end: Optional[int] = None) -> Optional[int]:
    """For ``G[..] g`` (or a conjunction containing one), the first step where ``g`` fails.

    Returns ``None`` if no always-operator fails; useful for error messages.
    """
    if end is None:
        end = len(trace) - 1
    match f:
        case Always(iv, a):
            for k in _window(iv, t, end, len(trace)):
                if not _eval(a, trace, k, end):
                    return k
        case And(args):
            hits = [first_violation(a, trace, t, end) for a in args]
            hits = [h for h in hits if h is not None]
            return min(hits) if hits else None
    return None
