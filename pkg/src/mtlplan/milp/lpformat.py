"""CPLEX-style LP text export and import for cross-checking with external solvers.

Variables are written as ``x<id>`` so any LP reader can round-trip them; the
original names go into ``\\`` comment lines.  Only the subset produced by
:func:`write_lp` is understood by :func:`read_lp`.
"""

from __future__ import annotations

import io
import re
from typing import Dict, List, TextIO, Union

import numpy as np

from .model import BINARY, CONTINUOUS, EQ, GE, LE, MilpModel

_SENSE_TEXT = {LE: "<=", GE: ">=", EQ: "="}
_TEXT_SENSE = {"<=": LE, "=<": LE, ">=": GE, "=>": GE, "=": EQ}


class LpFormatError(ValueError):
    pass


def _num(v: float) -> str:
    return repr(float(v))


def _expr(coeffs, width: int = 8) -> List[str]:
    terms = []
    for vid, c in coeffs:
        sign = "-" if c < 0 else "+"
        terms.append(f"{sign} {_num(abs(c))} x{vid}")
    if not terms:
        return ["0 x0"] if width else []
    terms[0] = terms[0][2:] if terms[0].startswith("+ ") else "-" + terms[0][2:]
    return [" ".join(terms[i:i + width]) for i in range(0, len(terms), width)]


def write_lp(model: MilpModel, out: Union[TextIO, None] = None) -> str:
    """Serialize ``model``; returns the text and also writes it to ``out`` if given."""
    buf = io.StringIO()
    w = buf.write
    w(f"\\ model {model.name}\n")
    for v in model.vars:
        w(f"\\ x{v.id} {v.name}\n")
    w("Minimize\n")
    obj = sorted(model.objective.items())
    lines = _expr(obj) if obj else ["0 x0"]
    if model.objective_constant:
        lines[-1] += f" + {_num(model.objective_constant)} constant"
    w(" obj: " + "\n   ".join(lines) + "\n")
    w("Subject To\n")
    for i, c in enumerate(model.constraints):
        lhs = _expr(c.coeffs) if c.coeffs else ["0 x0"]
        w(f" c{i}: " + "\n   ".join(lhs) + f" {_SENSE_TEXT[c.sense]} {_num(c.rhs)}\n")
    w("Bounds\n")
    if model.objective_constant:
        w(" constant = 1\n")
    for v in model.vars:
        lo, hi = v.lower, v.upper
        if v.kind == BINARY:
            continue
        if lo == hi:
            w(f" x{v.id} = {_num(lo)}\n")
        elif np.isinf(lo) and np.isinf(hi):
            w(f" x{v.id} free\n")
        else:
            lo_t = "-inf" if np.isinf(lo) else _num(lo)
            hi_t = "+inf" if np.isinf(hi) else _num(hi)
            w(f" {lo_t} <= x{v.id} <= {hi_t}\n")
    bins = [v.id for v in model.vars if v.kind == BINARY]
    if bins:
        w("Binaries\n")
        for k in range(0, len(bins), 10):
            w(" " + " ".join(f"x{i}" for i in bins[k:k + 10]) + "\n")
    w("End\n")
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


_TERM = re.compile(r"([+-]?)\s*([0-9.eE+-]+|inf)?\s*(x\d+|constant)")


def _parse_terms(s: str) -> Dict[str, float]:
    out: Dict[str, float] = {}
    s = s.strip()
    pos = 0
    while pos < len(s):
        m = _TERM.match(s, pos)
        if not m:
            raise LpFormatError(f"cannot parse expression near {s[pos:pos + 20]!r}")
        sign, coef, name = m.groups()
        c = float(coef) if coef else 1.0
        if sign == "-":
            c = -c
        out[name] = out.get(name, 0.0) + c
        pos = m.end()
        while pos < len(s) and s[pos] == " ":
            pos += 1
    return out


def read_lp(text: str) -> MilpModel:
    """Parse text written by :func:`write_lp` back into a model."""
    sections: Dict[str, List[str]] = {}
    current = None
    names: Dict[int, str] = {}
    model_name = "model"
    headers = {"minimize": "obj", "subject to": "rows", "bounds": "bounds",
               "binaries": "bins", "end": "end"}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            parts = line[1:].split(None, 1)
            if len(parts) == 2 and parts[0] == "model":
                model_name = parts[1]
            elif len(parts) == 2 and re.fullmatch(r"x\d+", parts[0]):
                names[int(parts[0][1:])] = parts[1]
            continue
        key = headers.get(line.lower())
        if key:
            current = key
            sections.setdefault(key, [])
            continue
        if current is None:
            raise LpFormatError(f"text before the objective section: {line!r}")
        sections[current].append(line)

    # statements may span lines; a statement starts with "<label>:" in obj/rows
    def statements(lines):
        out = []
        for line in lines:
            if re.match(r"^[A-Za-z_]\w*:", line):
                out.append(line)
            elif out:
                out[-1] += " " + line
            else:
                raise LpFormatError(f"continuation without a statement: {line!r}")
        return out

    used = set(names)
    obj_stmts = statements(sections.get("obj", []))
    row_stmts = statements(sections.get("rows", []))
    for st in obj_stmts + row_stmts:
        used.update(int(v) for v in re.findall(r"x(\d+)", st))
    bins = set()
    for line in sections.get("bins", []):
        for tok in line.split():
            bins.add(int(tok[1:]))
    n = max(used | bins) + 1 if (used or bins) else 0
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    const_obj = 0.0
    for line in sections.get("bounds", []):
        toks = line.split()
        if toks == ["constant", "=", "1"]:
            continue
        if len(toks) == 2 and toks[1] == "free":
            i = int(toks[0][1:])
            lower[i], upper[i] = -np.inf, np.inf
        elif len(toks) == 3 and toks[1] == "=":
            i = int(toks[0][1:])
            lower[i] = upper[i] = float(toks[2])
        elif len(toks) == 5 and toks[1] == "<=" and toks[3] == "<=":
            i = int(toks[2][1:])
            lower[i] = float(toks[0])
            upper[i] = float(toks[4])
        else:
            raise LpFormatError(f"unsupported bound line {line!r}")
    m = MilpModel(name=model_name)
    for i in range(n):
        if i in bins:
            m.add_var(names.get(i, f"x{i}"), BINARY, 0.0, 1.0)
        else:
            m.add_var(names.get(i, f"x{i}"), CONTINUOUS, lower[i], upper[i])
    for st in obj_stmts:
        body = st.split(":", 1)[1]
        terms = _parse_terms(body)
        const_obj = terms.pop("constant", 0.0)
        m.set_objective({int(k[1:]): v for k, v in terms.items() if v != 0.0}, const_obj)
    for st in row_stmts:
        label, body = st.split(":", 1)
        mm = re.search(r"(<=|>=|=<|=>|=)\s*(\S+)\s*$", body)
        if not mm:
            raise LpFormatError(f"row {label} has no relation")
        sense = _TEXT_SENSE[mm.group(1)]
        rhs = float(mm.group(2))
        terms = _parse_terms(body[:mm.start()])
        coeffs = {int(k[1:]): v for k, v in terms.items() if k != "constant"}
        # "0 x0" placeholder rows keep their zero coefficient out of the model
        m.add_constraint({k: v for k, v in coeffs.items() if v != 0.0}, sense, rhs, label.strip())
    return m
