import numpy as np
import pytest

from steerdca.atoms import Abs, Affine, ConvexExpr, Hinge, MaxAff, Quad, SqHingeSum, Zero
from steerdca.model import DCFunction, DCProblem, FeasibleSet
from steerdca.problems import toy_eq, toy_ineq


def random_atom(rng, d, kind=None):
    kind = kind or rng.choice(["AFFINE", "QUAD", "MAXAFF", "HINGE", "ABS", "SQHINGESUM", "ZERO"])
    if kind == "AFFINE":
        return Affine(rng.normal(size=d), rng.normal())
    if kind == "QUAD":
        M = rng.normal(size=(d, d))
        return Quad(M @ M.T / d, rng.normal(size=d), rng.normal())
    if kind == "MAXAFF":
        r = int(rng.integers(1, 4))
        return MaxAff(rng.normal(size=(r, d)), rng.normal(size=r))
    if kind == "HINGE":
        return Hinge(rng.normal(size=d), rng.normal())
    if kind == "ABS":
        return Abs(rng.normal(size=d), rng.normal())
    if kind == "SQHINGESUM":
        r = int(rng.integers(1, 3))
        return SqHingeSum(rng.normal(size=(r, d)) / 2, rng.normal(size=r))
    return Zero(d)


def random_expr(rng, d, n_terms=None, kinds=None):
    n_terms = n_terms or int(rng.integers(1, 4))
    atoms = [random_atom(rng, d, None if kinds is None else rng.choice(kinds)) for _ in range(n_terms)]
    return ConvexExpr.of(*atoms, weights=rng.uniform(0.1, 2.0, size=n_terms))


def random_problem(rng, d, n_ineq=1, n_eq=1, width=3.0):
    """Random DC problem on a box; ``g_0`` is strongly convex so subproblems are well posed."""
    M = rng.normal(size=(d, d))
    g0 = ConvexExpr.of(Quad(M @ M.T / d + np.eye(d), rng.normal(size=d))) + random_expr(rng, d, 1)
    f0 = DCFunction(g0, random_expr(rng, d, 1))
    ineqs = tuple(DCFunction(random_expr(rng, d), random_expr(rng, d)) for _ in range(n_ineq))
    eqs = tuple(DCFunction(random_expr(rng, d), random_expr(rng, d)) for _ in range(n_eq))
    A = FeasibleSet.box(-width * np.ones(d), width * np.ones(d))
    return DCProblem(d, f0, ineqs, eqs, A, name="random")


@pytest.fixture
def p_ineq():
    return toy_ineq()


@pytest.fixture
def p_eq():
    return toy_eq()


def trace_violations(report, cfg, scale=1.0):
    """Trace invariants of a steering run; returns a list of human-readable failures.

    Each record is paired with the state that followed it (the next record,
    or the final point of the report).
    """
    out = []
    slack = cfg.slack * scale
    trace = report.trace
    nxt = [(r.f0, r.phi, r.c_n) for r in trace[1:]]
    if report.status != "InnerLoopCapHit":
        nxt.append((report.f0, report.phi, report.c))
    for rec, (f0_new, phi_new, c_new) in zip(trace, nxt):
        n = rec.n
        if not (rec.c_n <= rec.c_next == c_new):
            out.append(f"n={n}: penalty parameter not monotone ({rec.c_n} -> {rec.c_next} -> {c_new})")
        c = rec.c_next
        Phi_old = rec.f0 + c * rec.phi
        Phi_new = f0_new + c * phi_new
        if Phi_new > Phi_old + slack + 1e-12 * abs(Phi_old):
            out.append(f"n={n}: Phi increased by {Phi_new - Phi_old:.3e} at frozen c = {c:g}")
        if rec.step3_ran and not phi_new < rec.phi:
            out.append(f"n={n}: Step 3 ran but phi went {rec.phi:.6g} -> {phi_new:.6g}")
        if rec.step2_ran and phi_new > rec.phi + rec.eps_n + slack:
            out.append(f"n={n}: Step-2 escape raised phi by {phi_new - rec.phi:.3e} > eps = {rec.eps_n:g}")
        for name in ("step2_increases", "step3_increases", "step4_increases"):
            if getattr(rec, name) > cfg.max_increases:
                out.append(f"n={n}: {name} = {getattr(rec, name)} exceeds cap {cfg.max_increases}")
    return out
