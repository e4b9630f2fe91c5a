"""Generic MIQP model container and an LP-format writer/reader.

The writer emits the plain-text LP dialect read by CPLEX and Gurobi
(``Minimize`` / ``Subject To`` / ``Bounds`` / ``Binaries`` / ``End``) with a
bracketed quadratic objective block. Coefficients are printed with
``repr`` so a file parsed back by :func:`parse_lp` is coefficient-identical
to the model it came from.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

__all__ = ["Constraint", "MipModel", "Variable", "export_lp", "parse_lp"]

_TERMS_PER_LINE = 6


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    binary: bool = False


@dataclass
class Constraint:
    name: str
    coeffs: Dict[str, float]
    sense: str  # "<=", ">=" or "="
    rhs: float


@dataclass
class MipModel:
    """Minimize ``c'v + sum Q[i,j] v_i v_j + const`` subject to linear rows.

    ``quadratic`` maps ``(name, name)`` pairs to the coefficient of the
    product as it appears in the objective (not halved).
    """

    name: str
    variables: List[Variable]
    linear: Dict[str, float]
    quadratic: Dict[Tuple[str, str], float]
    constant: float
    constraints: List[Constraint]
    big_m: Optional[float] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def var(self, name: str) -> Variable:
        return self._index()[name]

    def row(self, name: str) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def _index(self):
        return {v.name: v for v in self.variables}

    @property
    def n_continuous(self) -> int:
        return sum(not v.binary for v in self.variables)

    @property
    def n_binary(self) -> int:
        return sum(v.binary for v in self.variables)


def _num(v: float) -> str:
    if math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return repr(float(v))


def _signed(coef: float, body: str, first: bool) -> str:
    neg = coef < 0 or (coef == 0 and math.copysign(1.0, coef) < 0)
    mag = _num(-coef if neg else coef)
    if first:
        return f"{'-' if neg else ''}{mag} {body}"
    return f"{'-' if neg else '+'} {mag} {body}"


def _wrap(head: str, terms: List[str]) -> List[str]:
    lines = []
    for k in range(0, max(len(terms), 1), _TERMS_PER_LINE):
        chunk = " ".join(terms[k:k + _TERMS_PER_LINE])
        lines.append((head if k == 0 else "   ") + chunk)
    return lines


def export_lp(model: MipModel) -> str:
    """Render ``model`` as LP text. Output is byte-stable for a fixed model."""
    out = [f"\\ Problem name: {model.name}"]
    if model.big_m is not None:
        out.append(f"\\ big-M = {_num(model.big_m)}")
    for key in sorted(model.meta):
        out.append(f"\\ {key} = {model.meta[key]}")

    out.append("Minimize")
    terms = []
    for name, coef in model.linear.items():
        terms.append(_signed(coef, name, not terms))
    if model.quadratic:
        quad = []
        for (u, v), coef in model.quadratic.items():
            body = f"{u} ^2" if u == v else f"{u} * {v}"
            quad.append(_signed(2.0 * coef, body, not quad))
        terms.append(("+ " if terms else "") + "[")
        terms.extend(quad)
        terms.append("] / 2")
    if model.constant != 0 or not terms:
        c = model.constant
        if not terms:
            terms.append(_num(c))
        else:
            terms.append(f"{'-' if c < 0 else '+'} {_num(abs(c))}")
    out.extend(_wrap(" obj: ", terms))

    out.append("Subject To")
    for row in model.constraints:
        terms = [_signed(c, name, k == 0) for k, (name, c) in enumerate(row.coeffs.items())]
        terms.append(f"{row.sense} {_num(row.rhs)}")
        out.extend(_wrap(f" {row.name}: ", terms))

    out.append("Bounds")
    for v in model.variables:
        if v.binary:
            out.append(f" 0 <= {v.name} <= 1")
        elif math.isinf(v.ub):
            out.append(f" {v.name} >= {_num(v.lb)}")
        else:
            out.append(f" {_num(v.lb)} <= {v.name} <= {_num(v.ub)}")

    binaries = [v.name for v in model.variables if v.binary]
    if binaries:
        out.append("Binaries")
        for k in range(0, len(binaries), 10):
            out.append(" " + " ".join(binaries[k:k + 10]))
    out.append("End")
    return "\n".join(out) + "\n"


# -- reader ------------------------------------------------------------------

_SECTIONS = {
    "minimize": "obj",
    "subject to": "rows",
    "bounds": "bounds",
    "binaries": "bin",
    "binary": "bin",
    "end": "end",
}
_LABEL = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*:(.*)$")
_TOKEN = re.compile(
    r"<=|>=|=<|=>"
    r"|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
    r"|[\[\]*^/+\-=<>]"
    r"|[^\s\[\]*^/+\-=<>]+"
)


def _to_float(tok: str) -> float:
    t = tok.lower()
    if t in ("inf", "infinity"):
        return math.inf
    return float(tok)


def _is_number(tok: str) -> bool:
    try:
        _to_float(tok)
        return True
    except ValueError:
        return False


def _parse_expr(tokens):
    """Parse ``[sign] [coef] name ...`` with an optional ``[ ... ] / 2`` block."""
    linear: Dict[str, float] = {}
    quad: Dict[Tuple[str, str], float] = {}
    constant = 0.0
    i = 0
    sign = 1.0
    in_quad = False
    while i < len(tokens):
        tok = tokens[i]
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
            i += 1
            continue
        if tok == "[":
            in_quad = True
            i += 1
            continue
        if tok == "]":
            # "] / 2"
            if tokens[i + 1] != "/" or float(tokens[i + 2]) != 2.0:
                raise ValueError("quadratic block must be divided by 2")
            for key in quad:
                quad[key] *= 0.5
            in_quad = False
            i += 3
            continue
        coef = 1.0
        if _is_number(tok):
            coef = _to_float(tok)
            i += 1
            if i >= len(tokens) or tokens[i] in "+-]":
                if in_quad:
                    raise ValueError("constant inside quadratic block")
                constant += sign * coef
                sign = 1.0
                continue
        name = tokens[i]
        i += 1
        if in_quad:
            if tokens[i] == "^":
                key = (name, name)
                i += 2
            elif tokens[i] == "*":
                key = (name, tokens[i + 1])
                i += 2
            else:
                raise ValueError(f"linear term {name!r} inside quadratic block")
            quad[key] = quad.get(key, 0.0) + sign * coef
        else:
            linear[name] = linear.get(name, 0.0) + sign * coef
        sign = 1.0
    return linear, quad, constant


def parse_lp(text: str) -> MipModel:
    """Read LP text produced by :func:`export_lp`."""
    name = ""
    big_m = None
    meta = {}
    section = None
    obj_tokens: List[str] = []
    rows: List[Tuple[str, List[str]]] = []
    bounds: List[str] = []
    binaries: List[str] = []

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            body = line[1:].strip()
            if body.startswith("Problem name:"):
                name = body.split(":", 1)[1].strip()
            elif "=" in body:
                key, val = (s.strip() for s in body.split("=", 1))
                if key == "big-M":
                    big_m = float(val)
                else:
                    meta[key] = val
            continue
        low = line.lower()
        if low in _SECTIONS:
            section = _SECTIONS[low]
            continue
        if section == "obj":
            mt = _LABEL.match(line)
            obj_tokens.extend(_TOKEN.findall(mt.group(2) if mt else line))
        elif section == "rows":
            mt = _LABEL.match(line)
            if mt:
                rows.append((mt.group(1), _TOKEN.findall(mt.group(2))))
            else:
                rows[-1][1].extend(_TOKEN.findall(line))
        elif section == "bounds":
            bounds.append(line)
        elif section == "bin":
            binaries.extend(line.split())
        elif section == "end":
            break
        else:
            raise ValueError(f"unexpected line outside any section: {raw!r}")

    linear, quad, constant = _parse_expr(obj_tokens)

    constraints = []
    for rname, toks in rows:
        k = next(i for i, t in enumerate(toks) if t in ("<=", ">=", "=", "=<", "=>", "<", ">"))
        sense = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(toks[k], toks[k])
        rhs_toks = toks[k + 1:]
        rhs = -_to_float(rhs_toks[1]) if rhs_toks[0] == "-" else _to_float(rhs_toks[-1])
        coeffs, q, c = _parse_expr(toks[:k])
        if q or c:
            raise ValueError(f"row {rname}: only linear terms supported")
        constraints.append(Constraint(rname, coeffs, sense, rhs))

    binset = set(binaries)
    variables = []
    for line in bounds:
        toks = _TOKEN.findall(line)
        j = 0
        parts = []
        while j < len(toks):
            if toks[j] in "+-" and j + 1 < len(toks) and _is_number(toks[j + 1]):
                parts.append(("-" if toks[j] == "-" else "") + toks[j + 1])
                j += 2
            else:
                parts.append(toks[j])
                j += 1
        if len(parts) == 5:  # lb <= v <= ub
            lb, vname, ub = _to_float(parts[0]), parts[2], _to_float(parts[4])
        elif len(parts) == 3 and parts[1] == ">=":
            vname, lb, ub = parts[0], _to_float(parts[2]), math.inf
        elif len(parts) == 3 and parts[1] == "<=":
            vname, lb, ub = parts[0], 0.0, _to_float(parts[2])
        else:
            raise ValueError(f"unsupported bound line: {line!r}")
        variables.append(Variable(vname, lb, ub, vname in binset))
    return MipModel(name, variables, linear, quad, constant, constraints, big_m, meta)
