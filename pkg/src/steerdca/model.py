"""DC functions, feasible sets and constrained DC problems."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .atoms import ConvexExpr, ExprStack, Quad
from .projection import AffineProjector, dykstra


@dataclass(frozen=True, eq=False)
class DCFunction:
    """``f = g - h`` with convex ``g`` and ``h``."""

    g: ConvexExpr
    h: ConvexExpr

    def __post_init__(self):
        if self.g.dim != self.h.dim:
            raise ValueError(f"g has dimension {self.g.dim} but h has {self.h.dim}")

    @property
    def dim(self) -> int:
        return self.g.dim

    def __call__(self, x) -> float:
        return self.g.value(x) - self.h.value(x)

    def values(self, X) -> np.ndarray:
        return self.g.values(X) - self.h.values(X)


def dc_value(f: DCFunction, x) -> tuple[float, float, float]:
    """Return ``(f(x), g(x), h(x))`` with ``f = g - h`` exactly as evaluated."""
    g = f.g.value(x)
    h = f.h.value(x)
    return g - h, g, h


class FeasibleSet:
    """Box ``lower <= x <= upper`` intersected with ``{x : E x = e}``.

    Infinite bounds are allowed.  With ``check=True`` (the default) the set
    is certified nonempty by projecting the origin onto it.
    """

    def __init__(self, lower, upper, E=None, e=None, *, check: bool = True):
        self.lower = np.array(lower, dtype=float).reshape(-1)
        self.upper = np.array(upper, dtype=float).reshape(-1)
        d = self.lower.size
        if E is None or np.size(E) == 0:
            self.E = np.zeros((0, d))
            self.e = np.zeros(0)
        else:
            self.E = np.array(E, dtype=float).reshape(-1, d)
            self.e = np.array(e, dtype=float).reshape(-1)
        for arr in (self.lower, self.upper, self.E, self.e):
            arr.setflags(write=False)
        if check:
            bad = self.violations()
            if bad:
                raise ValueError("invalid feasible set: " + "; ".join(bad))

    @classmethod
    def box(cls, lower, upper) -> "FeasibleSet":
        return cls(lower, upper)

    @classmethod
    def whole_space(cls, dim: int) -> "FeasibleSet":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def n_eq(self) -> int:
        return self.E.shape[0]

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    @cached_property
    def affine(self) -> AffineProjector:
        return AffineProjector(self.E, self.e)

    def violations(self) -> list[str]:
        out = []
        if self.upper.size != self.lower.size:
            out.append(f"bound vectors differ in length ({self.lower.size} vs {self.upper.size})")
            return out
        if np.isnan(self.lower).any() or np.isnan(self.upper).any():
            out.append("bounds contain NaN")
        for i in np.flatnonzero(self.lower > self.upper):
            out.append(f"lower[{i}] = {self.lower[i]} exceeds upper[{i}] = {self.upper[i]}")
        if self.e.size != self.E.shape[0]:
            out.append(f"E has {self.E.shape[0]} rows but e has {self.e.size} entries")
        if out:
            return out
        if self.n_eq:
            if not self.affine.consistent:
                out.append("affine equalities E x = e are inconsistent (set is empty)")
                return out
            if np.linalg.matrix_rank(self.E) < self.n_eq:
                out.append("E does not have full row rank")
        if not out:
            _, _, ok = dykstra(np.zeros(self.dim), self.lower, self.upper, self.affine)
            if not ok:
                out.append("could not certify nonemptiness: projection of 0 did not converge")
        return out

    def contains(self, x, tol: float = 1e-8) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower) or np.any(x > self.upper):
            return False
        if self.n_eq == 0:
            return True
        return float(np.abs(self.E @ x - self.e).max()) <= tol

    def to_dict(self) -> dict:
        fin = lambda v: [None if not np.isfinite(t) else float(t) for t in v]  # noqa: E731
        return {
            "lower": fin(self.lower),
            "upper": fin(self.upper),
            "E": self.E.tolist(),
            "e": self.e.tolist(),
        }


@dataclass(frozen=True, eq=False)
class DCProblem:
    """``min f0 s.t. f_i <= 0 (i in I), f_j = 0 (j in E), x in A``.

    Coercivity of the penalty function on ``A`` is a modeling obligation of
    the caller; it is what guarantees the convex subproblems have solutions.
    """

    dim: int
    objective: DCFunction
    inequalities: tuple = field(default_factory=tuple)
    equalities: tuple = field(default_factory=tuple)
    feasible_set: FeasibleSet | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        if self.feasible_set is None:
            object.__setattr__(self, "feasible_set", FeasibleSet.whole_space(self.dim))

    @property
    def n_ineq(self) -> int:
        return len(self.inequalities)

    @property
    def n_eq(self) -> int:
        return len(self.equalities)

    @cached_property
    def constraint_stacks(self) -> tuple[ExprStack, ExprStack] | None:
        """Vectorized ``(g_k, h_k)`` evaluators over all functional constraints."""
        cons = self.inequalities + self.equalities
        if not cons:
            return None
        return ExprStack([f.g for f in cons]), ExprStack([f.h for f in cons])

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"dimension mismatch: problem has {self.dim} variables, point has {x.size}")
        return x

    def constraint_values(self, x) -> tuple[np.ndarray, np.ndarray]:
        """``(g_k(x), h_k(x))`` for inequalities followed by equalities."""
        x = self.check_point(x)
        if self.constraint_stacks is None:
            return np.zeros(0), np.zeros(0)
        sg, sh = self.constraint_stacks
        return sg.values(x), sh.values(x)


def regularize_objective(p: DCProblem, mu: float) -> DCProblem:
    """Add ``mu |x|^2`` to both ``g0`` and ``h0``; ``f0`` is unchanged.

    For ``mu > 0`` the new ``h0`` is ``2 mu``-strongly convex.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0:
        return p
    d = p.dim
    sq = ConvexExpr(d, ((mu, Quad(2.0 * np.eye(d), np.zeros(d))),))
    f0 = DCFunction(p.objective.g + sq, p.objective.h + sq)
    return DCProblem(d, f0, p.inequalities, p.equalities, p.feasible_set, p.name)


def validate(p: DCProblem) -> list[str]:
    """Structural diagnostics; an empty list means every invariant holds."""
    out = []
    d = p.dim
    funcs = [("objective", p.objective)]
    funcs += [(f"inequalities[{i}]", f) for i, f in enumerate(p.inequalities)]
    funcs += [(f"equalities[{j}]", f) for j, f in enumerate(p.equalities)]
    for name, f in funcs:
        for part in ("g", "h"):
            expr = getattr(f, part)
            if expr.dim != d:
                out.append(f"{name}.{part} has dimension {expr.dim}, expected {d}")
                continue
            for k in expr.psd_violations():
                out.append(f"{name}.{part}.terms[{k}]: QUAD matrix is not positive semidefinite")
    A = p.feasible_set
    if A.dim != d:
        out.append(f"feasible set has dimension {A.dim}, expected {d}")
    else:
        out.extend(f"feasible set: {v}" for v in A.violations())
    return out
