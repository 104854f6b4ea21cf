"""CPLEX LP text format writer and reader (the subset this package emits)."""

from __future__ import annotations

import math
import re

from .model import MathModel

_SECTIONS = {
    "minimize": "obj", "minimise": "obj", "min": "obj",
    "subject to": "cons", "such that": "cons", "st": "cons", "s.t.": "cons",
    "bounds": "bounds",
    "general": "int", "generals": "int", "gen": "int",
    "binary": "bin", "binaries": "bin",
    "end": "end",
}


def _num(x: float) -> str:
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return repr(float(x))


def _expr(model: MathModel, coeffs: dict[int, float]) -> str:
    if not coeffs:
        return "0 " + model.variables[0].name
    parts = []
    for j in sorted(coeffs):
        a = coeffs[j]
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {model.variables[j].name}")
    return " ".join(parts)


def export_model(model: MathModel) -> str:
    """Render ``model`` as LP text readable by mainstream solvers."""
    out = [f"\\ {model.name}", "Minimize"]
    obj = _expr(model, model.objective)
    if model.objective_constant:
        obj += f" + {_num(model.objective_constant)}" if model.objective_constant > 0 \
            else f" - {_num(-model.objective_constant)}"
    out.append(f" obj: {obj}")
    out.append("Subject To")
    for c in model.constraints:
        out.append(f" {c.name}: {_expr(model, c.coeffs)} {c.sense} {_num(c.rhs)}")
    out.append("Bounds")
    for v in model.variables:
        if v.lb == -math.inf and v.ub == math.inf:
            out.append(f" {v.name} free")
        elif v.lb == v.ub:
            out.append(f" {v.name} = {_num(v.lb)}")
        else:
            out.append(f" {_num(v.lb)} <= {v.name} <= {_num(v.ub)}")
    ints = [v.name for v in model.variables if v.integer]
    if ints:
        out.append("General")
        out.extend(f" {name}" for name in ints)
    out.append("End")
    return "\n".join(out) + "\n"


def _parse_float(tok: str) -> float:
    t = tok.lower()
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(tok)


def _parse_linear(tokens: list[str], model: MathModel, names: dict[str, int]):
    """Parse ``[+-] [coef] name ...`` returning (coeffs, constant)."""
    coeffs: dict[int, float] = {}
    const = 0.0
    sign, coef = 1.0, None
    for tok in tokens:
        if tok in ("+", "-"):
            sign = 1.0 if tok == "+" else -1.0
            continue
        try:
            coef = _parse_float(tok)
            continue
        except ValueError:
            pass
        if tok not in names:
            names[tok] = model.add_var(tok)
        j = names[tok]
        coeffs[j] = coeffs.get(j, 0.0) + sign * (1.0 if coef is None else coef)
        sign, coef = 1.0, None
    if coef is not None:
        const += sign * coef
    return coeffs, const


def parse_model(text: str) -> MathModel:
    """Inverse of :func:`export_model`."""
    model = MathModel()
    names: dict[str, int] = {}
    section = None
    obj_tokens: list[str] = []
    pending: list[str] = []
    cons_lines: list[str] = []
    bound_lines: list[str] = []
    int_names: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            if section is None and line[1:].strip():
                model.name = line[1:].strip()
            continue
        key = line.lower()
        if key in _SECTIONS:
            if pending:
                cons_lines.append(" ".join(pending))
                pending = []
            section = _SECTIONS[key]
            if section == "end":
                break
            continue
        if section == "obj":
            obj_tokens.extend(line.split())
        elif section == "cons":
            pending.append(line)
            if re.search(r"(<=|>=|=<|=>|=|<|>)\s*\S+\s*$", line):
                cons_lines.append(" ".join(pending))
                pending = []
        elif section == "bounds":
            bound_lines.append(line)
        elif section in ("int", "bin"):
            int_names.extend(line.split())
            if section == "bin":
                bound_lines.extend(f"0 <= {n} <= 1" for n in line.split())

    # declare variables in order of first appearance in the bounds section so
    # that a round trip preserves variable ordering
    for line in bound_lines:
        toks = line.replace("<=", " <= ").replace(">=", " >= ").split()
        for tok in toks:
            if tok in ("<=", ">=", "=", "free") or _is_number(tok):
                continue
            if tok not in names:
                names[tok] = model.add_var(tok)

    if obj_tokens and obj_tokens[0].endswith(":"):
        obj_tokens = obj_tokens[1:]
    coeffs, const = _parse_linear(obj_tokens, model, names)
    model.set_objective(coeffs, const)

    for line in cons_lines:
        name = ""
        if ":" in line.split()[0] or re.match(r"^\s*[^\s:]+\s*:", line):
            name, line = line.split(":", 1)
            name = name.strip()
        m = re.search(r"(<=|>=|=<|=>|=|<|>)", line)
        lhs, op, rhs = line[:m.start()], m.group(1), line[m.end():]
        sense = {"<": "<=", "=<": "<=", "<=": "<=", ">": ">=", "=>": ">=", ">=": ">=", "=": "="}[op]
        coeffs, c0 = _parse_linear(lhs.split(), model, names)
        model.add_constr(coeffs, sense, _parse_float(rhs.strip()) - c0, name)

    for line in bound_lines:
        toks = line.replace("<=", " <= ").replace(">=", " >= ").split()
        if len(toks) == 2 and toks[1].lower() == "free":
            v = model.variables[names[toks[0]]]
            v.lb, v.ub = -math.inf, math.inf
        elif len(toks) == 3 and toks[1] == "=":
            v = model.variables[names[toks[0]]]
            v.lb = v.ub = _parse_float(toks[2])
        elif len(toks) == 5:
            v = model.variables[names[toks[2]]]
            v.lb, v.ub = _parse_float(toks[0]), _parse_float(toks[4])
        elif len(toks) == 3:
            if _is_number(toks[0]):
                v = model.variables[names[toks[2]]]
                val = _parse_float(toks[0])
                if toks[1] == "<=":
                    v.lb = val
                else:
                    v.ub = val
            else:
                v = model.variables[names[toks[0]]]
                val = _parse_float(toks[2])
                if toks[1] == "<=":
                    v.ub = val
                else:
                    v.lb = val
        else:
            raise ValueError(f"cannot parse bound line {line!r}")
    for n in int_names:
        model.variables[names[n]].integer = True
    return model


def _is_number(tok: str) -> bool:
    try:
        _parse_float(tok)
        return True
    except ValueError:
        return False
