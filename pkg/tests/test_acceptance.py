"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import time

import numpy as np
import pytest

from conftest import random_problem, trace_violations
from steerdca.bundle import grid_minimize
from steerdca.model import FeasibleSet
from steerdca.penalty import collect_bundle, gamma, gamma_oracle, majorant, majorant_oracle, penalty_value
from steerdca.problems import (
    ProductionParams,
    TrainLayout,
    TrainParams,
    build_production_problem,
    build_train_problem,
    dc_pos_product,
    dc_signed_square,
    production_starts,
    tachogram,
    toy_eq,
    toy_ineq,
)
from steerdca.steering import (
    SteeringConfig,
    check_generalized_critical,
    run,
    solve_feasibility_subproblem,
    solve_penalty_subproblem,
)


@pytest.fixture
def verdict(capsys):
    """Print a PASS/FAIL line straight to the terminal, then assert."""

    def _verdict(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail

    return _verdict


@pytest.fixture(scope="module")
def production_runs():
    params = ProductionParams(k=100, seed=42)
    p = build_production_problem(params)
    cfg = SteeringConfig()
    t0 = time.perf_counter()
    reports = [run(p, x0, cfg) for x0 in production_starts(params, 10, 42)]
    return p, cfg, reports, time.perf_counter() - t0


@pytest.fixture(scope="module")
def train_run():
    params = TrainParams(k=60)
    p = build_train_problem(params)
    cfg = SteeringConfig()
    t0 = time.perf_counter()
    report = run(p, np.zeros(p.dim), cfg)
    return params, p, cfg, report, time.perf_counter() - t0


def _sample(p, rng, n):
    """Points spread over (a neighborhood of) the box of ``A``."""
    lo = np.where(np.isfinite(p.feasible_set.lower), p.feasible_set.lower, -5.0)
    hi = np.where(np.isfinite(p.feasible_set.upper), p.feasible_set.upper, 15.0)
    span = hi - lo
    return rng.uniform(lo - 0.2 * span, hi + 0.2 * span, size=(n, p.dim))


def test_majorant_suite(verdict):
    """Majorant and Gamma dominance, base-point equality and oracle subgradients on 10^4 cases."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    problems = [toy_ineq(), toy_eq(), build_production_problem(ProductionParams(k=10, seed=3)),
                build_train_problem(TrainParams(k=10))]
    n_base, n_x = 50, 50
    slack = 1e-9
    worst = {"Q dominance": 0.0, "Gamma dominance": 0.0, "base point": 0.0, "subgradient": 0.0}
    cases = 0
    for p in problems:
        for y in _sample(p, rng, n_base):
            B = collect_bundle(p, y)
            c = float(10 ** rng.uniform(-1, 3))
            pv = penalty_value(p, c, y)
            worst["base point"] = max(worst["base point"],
                                      abs(majorant(p, c, y, B) - B.h0_y - pv.total),
                                      abs(gamma(p, y, B) - pv.infeasibility))
            Qo, Go = majorant_oracle(p, c, B), gamma_oracle(p, B)
            X = _sample(p, rng, n_x)
            Z = _sample(p, rng, n_x)
            Qx, Gx, QZ, GZ = Qo.values(X), Go.values(X), Qo.values(Z), Go.values(Z)
            for x, qx, gx, z, qz, gz in zip(X, Qx, Gx, Z, QZ, GZ):
                pvx = penalty_value(p, c, x)
                worst["Q dominance"] = max(worst["Q dominance"], pvx.total - (qx - B.h0_y))
                worst["Gamma dominance"] = max(worst["Gamma dominance"], pvx.infeasibility - gx)
                _, sq = Qo(x)
                _, sg = Go(x)
                worst["subgradient"] = max(worst["subgradient"], qx + sq @ (z - x) - qz, gx + sg @ (z - x) - gz)
                cases += 1
    elapsed = time.perf_counter() - t0
    ok = cases >= 10_000 and all(v <= slack for v in worst.values()) and elapsed < 30
    detail = f"{cases} cases, worst violations " + ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    verdict("criterion 1 majorant suite", ok, f"{detail}; {elapsed:.1f}s")


def test_c_monotonicity(verdict):
    """Along an increasing c-grid Gamma(x(c)) does not increase and the linearized objective does not decrease."""
    t0 = time.perf_counter()
    cfg = SteeringConfig()
    tol = cfg.slack
    c_grid = [1.0, 10.0, 100.0, 1000.0]
    rng = np.random.default_rng(7)
    worst_gamma = worst_obj = -np.inf
    for _ in range(50):
        d = int(rng.integers(1, 6))
        p = random_problem(rng, d, int(rng.integers(0, 3)), int(rng.integers(0, 3)))
        B = collect_bundle(p, rng.uniform(-3, 3, size=d))
        lin = majorant_oracle(p, 1.0, B).linearized_objective
        xs = [solve_penalty_subproblem(p, c, B, cfg).x for c in c_grid]
        G = np.array([gamma(p, x, B) for x in xs])
        L = np.array([lin(x) for x in xs])
        worst_gamma = max(worst_gamma, np.diff(G).max())
        worst_obj = max(worst_obj, -np.diff(L).min())
    elapsed = time.perf_counter() - t0
    ok = worst_gamma <= tol and worst_obj <= tol and elapsed < 120
    verdict("criterion 2 monotonicity in c", ok,
            f"max Gamma increase {worst_gamma:.2e}, max objective decrease {worst_obj:.2e} "
            f"(tol {tol:g}); {elapsed:.1f}s")


def test_grid_equivalence(verdict):
    """Penalty and feasibility subsolves agree with a refined brute-force grid on 30 problems with d <= 2."""
    t0 = time.perf_counter()
    cfg = SteeringConfig()
    rng = np.random.default_rng(11)
    worst_arg = worst_val = 0.0
    n_sub = 0
    for case in range(30):
        d = 1 + case % 2
        p = random_problem(rng, d, int(rng.integers(0, 3)), int(rng.integers(0, 2)), width=1.0)
        if d == 2 and case % 4 == 3:
            # a line through the square exercises the affine part of A
            a = rng.normal(size=2)
            A = FeasibleSet(-np.ones(2), np.ones(2), a[None], [0.1 * np.abs(a).sum()])
            p = type(p)(p.dim, p.objective, p.inequalities, p.equalities, A)
        B = collect_bundle(p, rng.uniform(-1, 1, size=d) if not p.feasible_set.n_eq
                           else p.feasible_set.affine(rng.uniform(-1, 1, size=d)))
        c = float(10 ** rng.uniform(0, 2))
        # penalty subproblem: g_0 is strongly convex, so the minimizer is unique
        Q = majorant_oracle(p, c, B)
        res = solve_penalty_subproblem(p, c, B, cfg)
        xg = grid_minimize(Q, p.feasible_set, 1e-3, refinements=3)
        worst_arg = max(worst_arg, float(np.abs(res.x - xg).max()))
        worst_val = max(worst_val, abs(Q.value(res.x) - Q.value(xg)))
        n_sub += 1
        # feasibility subproblem: minimizers need not be unique, compare values only
        if p.n_ineq + p.n_eq:
            G = gamma_oracle(p, B)
            x_hat, g_hat, _ = solve_feasibility_subproblem(p, B, cfg)
            xg = grid_minimize(G, p.feasible_set, 1e-3, refinements=3)
            worst_val = max(worst_val, abs(g_hat - G.value(xg)))
            n_sub += 1
    elapsed = time.perf_counter() - t0
    ok = worst_arg <= 1e-3 and worst_val <= 1e-6 and elapsed < 120
    verdict("criterion 3 grid-oracle equivalence", ok,
            f"{n_sub} subsolves, max argument error {worst_arg:.2e}, max value error {worst_val:.2e}; "
            f"{elapsed:.1f}s")


def test_degenerate_point_escape(verdict):
    """From the degenerate origin of TOY-EQ the solver escapes through Step 2 with one increase."""
    t0 = time.perf_counter()
    rep = run(toy_eq(), [0.0, 0.0], SteeringConfig(eps_feas=0.01))
    elapsed = time.perf_counter() - t0
    first = rep.trace[0]
    dist = float(np.linalg.norm(rep.x - 1.0))
    ok = (first.step2_ran and not first.step3_ran and first.step2_increases == 1
          and first.c_n == 10.0 and first.c_next == 100.0 and rep.total_increases == 1
          and not any(r.step3_ran for r in rep.trace)
          and rep.status == "CriticalPoint" and dist < 0.2 and rep.phi < 1e-3 and elapsed < 10)
    verdict("criterion 4 degenerate-point escape", ok,
            f"status {rep.status}, c 10 -> {first.c_next:g} with {rep.total_increases} increase(s), "
            f"|x - (1,1)| = {dist:.3g}, phi = {rep.phi:.2e}, {rep.iterations} iterations; {elapsed:.1f}s")


def test_production_benchmark(verdict, production_runs):
    """k = 100, ten seeded starts: at least nine clean critical-point terminations."""
    _, cfg, reports, elapsed = production_runs
    good = [r.status == "CriticalPoint" and r.phi < 1e-3 and r.critical_residual < 1e-4
            and r.iterations <= 30 and r.total_increases <= 3 for r in reports]
    ok = sum(good) >= 9 and elapsed < 600
    rows = "; ".join(f"{r.status}/{r.iterations}it/{r.total_increases}inc/c={r.c:g}" for r in reports)
    verdict("criterion 5 production benchmark", ok, f"{sum(good)}/10 runs meet every bound [{rows}]; {elapsed:.1f}s")


def test_train_benchmark(verdict, train_run, tmp_path):
    """k = 60 from the zero control: critical point with exact boundary conditions and a tachogram."""
    params, p, cfg, rep, elapsed = train_run
    A = p.feasible_set
    aff = float(np.abs(A.E @ rep.x - A.e).max())
    in_box = bool(np.all(rep.x >= A.lower) and np.all(rep.x <= A.upper))
    tach = tachogram(params, rep.x)
    path = tmp_path / "train_k60_tachogram.csv"
    np.savetxt(path, tach, delimiter=",", header="position,velocity", comments="")
    written = np.loadtxt(path, delimiter=",", skiprows=1)
    _, x, y = TrainLayout(params.k).split(rep.x)
    x_k = x[-1] + params.delta * y[-1]  # position dynamics into the fixed x(k)
    ok = (rep.status == "CriticalPoint" and rep.phi < 1e-3 and rep.iterations <= 40
          and aff <= 1e-8 and in_box and abs(x_k - params.s) <= 1e-8
          and written.shape == (params.k + 1, 2) and elapsed < 600)
    verdict("criterion 6 train benchmark", ok,
            f"status {rep.status}, {rep.iterations} iterations, {rep.total_increases} increases, "
            f"phi = {rep.phi:.2e}, |Ex - e| = {aff:.1e}, |x(k) - s| = {abs(x_k - params.s):.1e}, "
            f"tachogram {written.shape[0]} rows; {elapsed:.1f}s")


def test_trace_invariants(verdict, production_runs, train_run):
    """Monotone penalty, frozen-c descent, Step-3 and Step-2 bounds and inner caps on every benchmark run."""
    _, cfg, reports, _ = production_runs
    _, _, cfg_t, rep_t, _ = train_run
    problems = [v for r in reports for v in trace_violations(r, cfg)] + trace_violations(rep_t, cfg_t)
    n_rec = sum(r.iterations for r in reports) + rep_t.iterations
    verdict("criterion 7 trace invariants", not problems,
            f"{n_rec} iteration records checked, {len(problems)} violations {problems[:3]}")


def test_dc_identities(verdict):
    """Both product identities hold to 1e-12 on 10^4 random points."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    Y = rng.uniform(-10, 10, size=(10_000, 2))
    e1 = float(np.abs(dc_pos_product(0, 1, 2).values(Y) - Y[:, 0] * np.maximum(Y[:, 1], 0.0)).max())
    e2 = float(np.abs(dc_signed_square(0, 2).values(Y) - Y[:, 0] * np.abs(Y[:, 0])).max())
    elapsed = time.perf_counter() - t0
    verdict("criterion 8 DC identities", e1 <= 1e-12 and e2 <= 1e-12 and elapsed < 1,
            f"max errors {e1:.1e} (y[u]+) and {e2:.1e} (y|y|); {elapsed * 1e3:.0f}ms")


def _kkt_verdicts():
    """Hand-derived first-order analysis of the three reference points.

    TOY-INEQ at x = 1: f0' = 1, the active constraint 1 - x has gradient -1, so
    lambda = 1 <= c = 5 and x is critical.  At x = 0 the constraint is violated,
    Q_5 = x + 5 max(1 - x, 0) drops from 5 to 1 between 0 and 1: residual 4.
    TOY-EQ at (1, 1): grad f0 = 0 lies in c co{(2, -2), (-2, 2)}: critical.
    """
    return [("toy_ineq", 5.0, [1.0], True, 0.0),
            ("toy_eq", 10.0, [1.0, 1.0], True, 0.0),
            ("toy_ineq", 5.0, [0.0], False, 4.0)]


def test_criticality_cross_check(verdict):
    """check_generalized_critical matches the hand KKT analysis at the three reference points."""
    t0 = time.perf_counter()
    probs = {"toy_ineq": toy_ineq(), "toy_eq": toy_eq()}
    lines, ok = [], True
    for name, c, x, expect, resid in _kkt_verdicts():
        got, r = check_generalized_critical(probs[name], c, x)
        ok &= got == expect and abs(r - resid) <= 1e-6
        lines.append(f"{name} {x} c={c:g}: {'critical' if got else 'not critical'} (residual {r:.2e})")
    elapsed = time.perf_counter() - t0
    verdict("criterion 9 criticality cross-check", ok and elapsed < 10, "; ".join(lines) + f"; {elapsed:.2f}s")
