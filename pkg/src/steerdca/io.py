"""JSON problem and point files.

Problem file layout::

    {
      "format": "steerdca-problem/1",
      "name": "toy_ineq",
      "dimension": 1,
      "objective":   {"g": EXPR, "h": EXPR},
      "inequalities": [{"g": EXPR, "h": EXPR}, ...],
      "equalities":   [{"g": EXPR, "h": EXPR}, ...],
      "feasible_set": {"lower": [...], "upper": [...], "E": [[...]], "e": [...]}
    }

where ``EXPR = {"terms": [{"weight": w, "atom": ATOM}, ...]}`` and ``ATOM``
is one of

    {"kind": "AFFINE", "a": [...], "b": b}
    {"kind": "QUAD", "P": [[...]], "a": [...], "b": b}
    {"kind": "MAXAFF", "A": [[...]], "b": [...]}
    {"kind": "HINGE", "a": [...], "b": b}
    {"kind": "ABS", "a": [...], "b": b}
    {"kind": "SQHINGESUM", "A": [[...]], "b": [...]}
    {"kind": "ZERO"}

Infinite box bounds are written as ``null``.  Floats are written with
``repr`` precision, so parse -> serialize -> parse is lossless.

Point file: ``{"format": "steerdca-point/1", "x": [...]}`` or a bare list.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .atoms import ATOM_KINDS, ConvexExpr, atom_from_dict
from .model import DCFunction, DCProblem, FeasibleSet

PROBLEM_FORMAT = "steerdca-problem/1"
POINT_FORMAT = "steerdca-point/1"


class ProblemFormatError(ValueError):
    """Malformed problem or point file; ``where`` locates the offending field."""

    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}" if where else msg)
        self.where = where


# ---------------------------------------------------------------- serialize

def function_to_dict(f: DCFunction) -> dict:
    return {"g": f.g.to_dict(), "h": f.h.to_dict()}


def problem_to_dict(p: DCProblem) -> dict:
    return {
        "format": PROBLEM_FORMAT,
        "name": p.name,
        "dimension": p.dim,
        "objective": function_to_dict(p.objective),
        "inequalities": [function_to_dict(f) for f in p.inequalities],
        "equalities": [function_to_dict(f) for f in p.equalities],
        "feasible_set": p.feasible_set.to_dict(),
    }


def dumps_problem(p: DCProblem) -> str:
    return json.dumps(problem_to_dict(p), allow_nan=False)


def save_problem(p: DCProblem, path) -> None:
    Path(path).write_text(dumps_problem(p))


# -------------------------------------------------------------------- parse

def _require(obj, key, where, kind=None):
    if not isinstance(obj, dict):
        raise ProblemFormatError(where, "expected an object")
    if key not in obj:
        raise ProblemFormatError(f"{where}.{key}" if where else key, "missing required field")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise ProblemFormatError(f"{where}.{key}" if where else key, f"expected {kind.__name__}")
    return val


def _expr_from(obj, dim: int, where: str) -> ConvexExpr:
    terms = _require(obj, "terms", where, list)
    out = []
    for t, term in enumerate(terms):
        tw = f"{where}.terms[{t}]"
        atom_obj = _require(term, "atom", tw, dict)
        weight = term.get("weight", 1.0)
        if not isinstance(weight, (int, float)) or isinstance(weight, bool) or not weight >= 0:
            raise ProblemFormatError(f"{tw}.weight", "must be a nonnegative number")
        kind = atom_obj.get("kind")
        if kind not in ATOM_KINDS:
            raise ProblemFormatError(f"{tw}.atom.kind", f"unknown atom kind {kind!r}; expected one of {sorted(ATOM_KINDS)}")
        try:
            atom = atom_from_dict(atom_obj, dim)
        except KeyError as exc:
            raise ProblemFormatError(f"{tw}.atom.{exc.args[0]}", "missing required field") from None
        except (ValueError, TypeError) as exc:
            raise ProblemFormatError(f"{tw}.atom", str(exc)) from None
        if atom.dim != dim:
            raise ProblemFormatError(f"{tw}.atom", f"{kind} atom has dimension {atom.dim}, expected {dim}")
        out.append((float(weight), atom))
    return ConvexExpr(dim, tuple(out))


def _function_from(obj, dim: int, where: str) -> DCFunction:
    if not isinstance(obj, dict):
        raise ProblemFormatError(where, "expected an object with fields g and h")
    g = _expr_from(_require(obj, "g", where, dict), dim, f"{where}.g")
    h = _expr_from(_require(obj, "h", where, dict), dim, f"{where}.h")
    return DCFunction(g, h)


def _bounds(vals, dim, where, fill):
    if not isinstance(vals, list) or len(vals) != dim:
        raise ProblemFormatError(where, f"expected a list of {dim} numbers or nulls")
    out = np.empty(dim)
    for i, v in enumerate(vals):
        if v is None:
            out[i] = fill
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out[i] = float(v)
        else:
            raise ProblemFormatError(f"{where}[{i}]", "expected a number or null")
    return out


def _feasible_set_from(obj, dim: int, where: str) -> FeasibleSet:
    if obj is None:
        return FeasibleSet.whole_space(dim)
    if not isinstance(obj, dict):
        raise ProblemFormatError(where, "expected an object")
    lower = _bounds(obj.get("lower", [None] * dim), dim, f"{where}.lower", -np.inf)
    upper = _bounds(obj.get("upper", [None] * dim), dim, f"{where}.upper", np.inf)
    E = obj.get("E", [])
    e = obj.get("e", [])
    try:
        E = np.array(E, dtype=float).reshape(-1, dim) if len(E) else np.zeros((0, dim))
        e = np.array(e, dtype=float).reshape(-1)
    except (ValueError, TypeError) as exc:
        raise ProblemFormatError(f"{where}.E", f"bad affine data: {exc}") from None
    A = FeasibleSet(lower, upper, E, e, check=False)
    bad = A.violations()
    if bad:
        raise ProblemFormatError(where, "; ".join(bad))
    return A


def problem_from_dict(obj) -> DCProblem:
    if not isinstance(obj, dict):
        raise ProblemFormatError("", "top level must be an object")
    fmt = obj.get("format", PROBLEM_FORMAT)
    if fmt != PROBLEM_FORMAT:
        raise ProblemFormatError("format", f"unsupported format {fmt!r}")
    dim = _require(obj, "dimension", "", int)
    if isinstance(dim, bool) or dim < 1:
        raise ProblemFormatError("dimension", "must be a positive integer")
    f0 = _function_from(_require(obj, "objective", ""), dim, "objective")
    ineqs = obj.get("inequalities", [])
    eqs = obj.get("equalities", [])
    for key, lst in (("inequalities", ineqs), ("equalities", eqs)):
        if not isinstance(lst, list):
            raise ProblemFormatError(key, "expected a list")
    I = tuple(_function_from(f, dim, f"inequalities[{i}]") for i, f in enumerate(ineqs))
    E = tuple(_function_from(f, dim, f"equalities[{j}]") for j, f in enumerate(eqs))
    A = _feasible_set_from(obj.get("feasible_set"), dim, "feasible_set")
    return DCProblem(dim, f0, I, E, A, name=str(obj.get("name", "")))


def loads_problem(text: str) -> DCProblem:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    return problem_from_dict(obj)


def load_problem(path) -> DCProblem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemFormatError(str(path), f"cannot read file: {exc.strerror}") from None
    return loads_problem(text)


# ------------------------------------------------------------------- points

def save_point(x, path) -> None:
    Path(path).write_text(json.dumps({"format": POINT_FORMAT, "x": np.asarray(x, dtype=float).tolist()}))


def load_point(path, dim: int | None = None) -> np.ndarray:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ProblemFormatError(str(path), f"cannot read file: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    vals = obj.get("x") if isinstance(obj, dict) else obj
    if not isinstance(vals, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
        raise ProblemFormatError("x", "expected a list of numbers")
    x = np.array(vals, dtype=float)
    if dim is not None and x.size != dim:
        raise ProblemFormatError("x", f"point has {x.size} entries but the problem has dimension {dim}")
    return x
