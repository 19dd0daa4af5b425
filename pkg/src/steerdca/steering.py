"""Steering exact penalty DCA.

Each outer iteration linearizes the concave parts at ``x_n`` and minimizes
the convex majorant ``Q_c(., x_n, V_n)`` over ``A``.  The penalty parameter
is raised only when needed:

1. if the penalized step is linearized-feasible, go to the balance test (4);
2. otherwise compute the best achievable linearized infeasibility ``G^``;
   when ``x_n`` already attains it (a critical point of the penalty term),
   raise ``c`` until ``Gamma(x_n(c)) <= G^ + eps_feas`` and go to (4);
3. else raise ``c`` until ``Gamma(x_n(c)) - phi(x_n) <= eta1 (G^ - phi(x_n))``;
4. raise ``c`` until
   ``Q_c(x_n(c)) - Q_c(x_n) <= eta2 c (Gamma(x_n(c)) - phi(x_n))`` and accept.

Subproblems are solved inexactly, so every theoretical comparison carries a
slack of ``10 * tol_sub``.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .bundle import SubsolveConfig, SubsolveResult, minimize, project
from .model import DCProblem, regularize_objective
from .penalty import (
    LinearizedOracle,
    SubgradientBundle,
    collect_bundle,
    gamma,
    gamma_oracle,
    infeasibility,
    majorant,
    majorant_oracle,
)

log = logging.getLogger(__name__)

STATUSES = ("CriticalPoint", "InfeasibleStall", "IterLimit", "InnerLoopCapHit")

TRACE_COLUMNS = (
    "n", "c_n", "f0", "phi", "Phi", "step2_ran", "step3_increases", "step4_increases",
    "gap_penalty_subproblem", "gap_feasibility_subproblem", "wall_time_ms",
)


@dataclass(frozen=True)
class SteeringConfig:
    c0: float = 10.0
    rho: float = 10.0
    eta1: float = 0.1
    eta2: float = 0.1
    eps_feas: float = 0.01
    eps_step2: float = 1e-9
    tol_phi: float = 1e-3
    tol_obj: float = 1e-3
    tol_crit: float = 1e-4
    max_iter: int = 200
    max_increases: int = 20
    stall_window: int = 5
    stall_tol: float = 1e-6
    mu: float = 0.0
    schedule: str = "geometric"  # or "additive": c + s*rho
    summable_eps: bool = False
    eps_decay: float = 0.5
    subsolve: SubsolveConfig = field(default_factory=SubsolveConfig)

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if self.schedule not in ("geometric", "additive"):
            raise ValueError("schedule must be 'geometric' or 'additive'")
        if self.schedule == "geometric" and not self.rho > 1:
            raise ValueError("rho must exceed 1 for the geometric schedule")
        if self.schedule == "additive" and not self.rho > 0:
            raise ValueError("rho must be positive for the additive schedule")
        for name in ("eta1", "eta2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.eps_feas > 0 or self.eps_step2 < 0:
            raise ValueError("eps_feas must be positive and eps_step2 nonnegative")
        floor = 10 * self.subsolve.tol_sub
        for name in ("tol_phi", "tol_obj", "tol_crit"):
            if not getattr(self, name) > floor:
                raise ValueError(f"{name} must exceed 10 * tol_sub = {floor:g}")
        if self.max_iter < 1 or self.max_increases < 0 or self.stall_window < 1:
            raise ValueError("iteration limits out of range")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if not 0 < self.eps_decay < 1:
            raise ValueError("eps_decay must lie in (0, 1)")

    @property
    def slack(self) -> float:
        return 10.0 * self.subsolve.tol_sub

    def increase(self, c: float) -> float:
        return c * self.rho if self.schedule == "geometric" else c + self.rho

    def eps_at(self, n: int) -> float:
        return self.eps_feas * self.eps_decay ** n if self.summable_eps else self.eps_feas

    def to_dict(self) -> dict:
        out = asdict(self)
        out["subsolve"] = asdict(self.subsolve)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "SteeringConfig":
        obj = dict(obj)
        sub = SubsolveConfig(**obj.pop("subsolve", {}))
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(subsolve=sub, **obj)


@dataclass
class IterationRecord:
    n: int
    c_n: float
    c_next: float
    x_n: np.ndarray
    f0: float
    phi: float
    Phi: float
    step2_ran: bool = False
    step2_increases: int = 0
    step3_ran: bool = False
    step3_increases: int = 0
    step4_increases: int = 0
    gamma_hat: float = float("nan")
    gamma_next: float = float("nan")
    gap_penalty_subproblem: float = 0.0
    gap_feasibility_subproblem: float = float("nan")
    eps_n: float = float("nan")
    step_norm: float = float("nan")
    wall_time_ms: float = 0.0

    @property
    def increases(self) -> int:
        return self.step2_increases + self.step3_increases + self.step4_increases

    def csv_row(self) -> list:
        return [self.n, self.c_n, self.f0, self.phi, self.Phi, int(self.step2_ran),
                self.step3_increases, self.step4_increases, self.gap_penalty_subproblem,
                self.gap_feasibility_subproblem, self.wall_time_ms]


@dataclass
class SolveReport:
    status: str
    x: np.ndarray
    c: float
    trace: list
    phi: float
    f0: float
    critical_residual: float = float("nan")
    message: str = ""
    diagnostics: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def total_increases(self) -> int:
        return sum(r.increases for r in self.trace)


class InnerLoopCapHit(RuntimeError):
    """An inner penalty-increase loop exceeded its cap (or a subsolve its budget)."""


# -------------------------------------------------------------- subproblems

def solve_penalty_subproblem(p: DCProblem, c: float, B: SubgradientBundle,
                             cfg: SteeringConfig | None = None, x_start=None) -> SubsolveResult:
    """``x_n(c)``: minimize ``Q_c(., y, V)`` over ``A``, started at ``y``."""
    cfg = cfg or SteeringConfig()
    start = B.y if x_start is None else x_start
    return minimize(majorant_oracle(p, c, B), p.feasible_set, cfg.subsolve, x0=start)


def solve_feasibility_subproblem(p: DCProblem, B: SubgradientBundle,
                                 cfg: SteeringConfig | None = None):
    """``(x^_n, G^_n, result)`` for ``min_A Gamma(., y, V)``.

    A base point with ``phi(y) = 0`` (up to ``10 tol_sub``) is returned as is
    and ``result`` is ``None``.
    """
    cfg = cfg or SteeringConfig()
    phi_y = infeasibility(p, B.y)
    if phi_y <= cfg.slack:
        return B.y.copy(), phi_y, None
    res = minimize(gamma_oracle(p, B), p.feasible_set, cfg.subsolve, x0=B.y)
    return res.x, res.value, res


# ------------------------------------------------------------ outer steps

@dataclass
class IterationState:
    """Working state of one outer iteration."""

    p: DCProblem
    cfg: SteeringConfig
    n: int
    x: np.ndarray
    B: SubgradientBundle
    phi: float
    c_plus: float
    sub: SubsolveResult
    gamma_plus: float
    gamma_hat: float = float("nan")
    record: IterationRecord | None = None

    def resolve(self, c: float):
        self.c_plus = c
        self.sub = solve_penalty_subproblem(self.p, c, self.B, self.cfg)
        if not self.sub.converged:
            raise InnerLoopCapHit(f"penalty subproblem hit its oracle budget at c = {c:g}")
        self.gamma_plus = gamma(self.p, self.sub.x, self.B)
        self.record.gap_penalty_subproblem = max(self.record.gap_penalty_subproblem, self.sub.gap)


def step2_escape(st: IterationState) -> IterationState:
    """Raise ``c_+`` until ``Gamma(x_n(c_+)) <= G^ + eps_n``."""
    cfg = st.cfg
    eps = cfg.eps_at(st.n)
    st.record.step2_ran = True
    st.record.eps_n = eps
    while st.gamma_plus > st.gamma_hat + eps + cfg.slack:
        if st.record.step2_increases >= cfg.max_increases:
            raise InnerLoopCapHit("Step-2 escape loop reached the increase cap")
        st.record.step2_increases += 1
        st.resolve(cfg.increase(st.c_plus))
    return st


def step3_steer(st: IterationState) -> IterationState:
    """Raise ``c_+`` until the steering inequality holds."""
    cfg = st.cfg
    st.record.step3_ran = True
    target = cfg.eta1 * (st.gamma_hat - st.phi)
    while st.gamma_plus - st.phi > target + cfg.slack:
        if st.record.step3_increases >= cfg.max_increases:
            raise InnerLoopCapHit("Step-3 steering loop reached the increase cap")
        st.record.step3_increases += 1
        st.resolve(cfg.increase(st.c_plus))
    return st


def step4_balance(st: IterationState) -> IterationState:
    """Raise ``c`` until the penalized decrease matches the infeasibility decrease."""
    cfg = st.cfg
    p, B = st.p, st.B
    while True:
        c = st.c_plus
        lhs = st.sub.value - majorant(p, c, st.x, B)
        rhs = cfg.eta2 * c * (st.gamma_plus - st.phi)
        if lhs <= rhs + cfg.slack:
            return st
        if st.record.step4_increases >= cfg.max_increases:
            raise InnerLoopCapHit("Step-4 balance loop reached the increase cap")
        st.record.step4_increases += 1
        st.resolve(cfg.increase(c))


# ------------------------------------------------------------------ driver

def run(p: DCProblem, x0, cfg: SteeringConfig | None = None) -> SolveReport:
    """Run the steering exact penalty DCA from ``x0``.

    Algorithmic outcomes are reported through ``SolveReport.status``;
    exceptions are reserved for invalid input.
    """
    cfg = cfg or SteeringConfig()
    p = regularize_objective(p, cfg.mu)
    A = p.feasible_set
    diagnostics = []
    x = p.check_point(x0).astype(float)
    if not A.contains(x, tol=1e-10):
        x = project(A, x, cfg.subsolve.max_dykstra_sweeps)
        msg = "initial point not in A; projected onto A"
        log.warning(msg)
        diagnostics.append(msg)

    c = float(cfg.c0)
    trace: list[IterationRecord] = []
    pending_check = False
    stall = 0
    residual = float("nan")
    status, message = "IterLimit", f"reached max_iter = {cfg.max_iter}"
    for n in range(cfg.max_iter + 1):
        t0 = time.perf_counter()
        B = collect_bundle(p, x)
        phi = infeasibility(p, x)
        f0 = p.objective(x)
        rec = IterationRecord(n=n, c_n=c, c_next=c, x_n=x.copy(), f0=f0, phi=phi, Phi=f0 + c * phi)
        st = IterationState(p, cfg, n, x, B, phi, c, None, np.nan, record=rec)
        try:
            # Step 1; on a pending stop this solve is also the criticality check
            st.resolve(c)
            if pending_check:
                residual = majorant(p, c, x, B) - st.sub.value
                if residual <= cfg.tol_crit:
                    status, message = "CriticalPoint", "stopping test and criticality check passed"
                    break
                pending_check = False
            if n == cfg.max_iter:
                break
            if st.gamma_plus > cfg.slack:
                x_hat, st.gamma_hat, fres = solve_feasibility_subproblem(p, B, cfg)
                if fres is not None:
                    rec.gap_feasibility_subproblem = fres.gap
                    if not fres.converged:
                        raise InnerLoopCapHit("feasibility subproblem hit its oracle budget")
                else:
                    rec.gap_feasibility_subproblem = 0.0
                rec.gamma_hat = st.gamma_hat
                if st.gamma_hat < phi - max(cfg.eps_step2, cfg.slack):
                    step3_steer(st)
                else:
                    step2_escape(st)
            step4_balance(st)
        except InnerLoopCapHit as exc:
            rec.c_next = st.c_plus
            rec.wall_time_ms = 1e3 * (time.perf_counter() - t0)
            trace.append(rec)
            status, message = "InnerLoopCapHit", str(exc)
            break

        x_new, c_new = st.sub.x, st.c_plus
        rec.c_next = c_new
        rec.gamma_next = st.gamma_plus
        rec.step_norm = float(np.linalg.norm(x_new - x))
        rec.wall_time_ms = 1e3 * (time.perf_counter() - t0)
        trace.append(rec)

        phi_new = infeasibility(p, x_new)
        f0_new = p.objective(x_new)
        dPhi = (f0_new + c_new * phi_new) - (f0 + c_new * phi)
        if phi_new < cfg.tol_phi and abs(dPhi) < cfg.tol_obj:
            pending_check = True
        if abs(f0_new - f0) <= cfg.stall_tol and abs(phi_new - phi) <= cfg.stall_tol and phi_new >= cfg.tol_phi:
            stall += 1
        else:
            stall = 0
        x, c = x_new, c_new
        if stall >= cfg.stall_window:
            status = "InfeasibleStall"
            message = f"no progress for {stall} iterations while infeasible"
            break

    phi = infeasibility(p, x)
    return SolveReport(status, x, c, trace, phi, p.objective(x), residual, message, diagnostics)


# ------------------------------------------------------------- diagnostics

def check_generalized_critical(p: DCProblem, c: float, x, B: SubgradientBundle | None = None,
                               tol: float = 1e-4, cfg: SteeringConfig | None = None):
    """``(critical, residual)`` with ``residual = Q_c(x) - min_A Q_c(., x, V)``."""
    cfg = cfg or SteeringConfig()
    x = p.check_point(x)
    B = B if B is not None else collect_bundle(p, x)
    res = solve_penalty_subproblem(p, c, B, cfg)
    residual = majorant(p, c, x, B) - res.value
    return residual <= tol, float(residual)


def check_penalty_term_critical(p: DCProblem, x, B: SubgradientBundle | None = None,
                                tol: float = 1e-4, cfg: SteeringConfig | None = None):
    """``(critical, residual)`` with ``residual = Gamma(x) - min_A Gamma(., x, V)``."""
    cfg = cfg or SteeringConfig()
    x = p.check_point(x)
    B = B if B is not None else collect_bundle(p, x)
    _, g_hat, _ = solve_feasibility_subproblem(p, B, cfg)
    residual = gamma(p, x, B) - g_hat
    return residual <= tol, float(residual)


class _SlaterOracle:
    """``max_i (g_i(.) - h_i(x) - <v_i, . - x>)`` over the inequalities."""

    def __init__(self, p: DCProblem, B: SubgradientBundle):
        self.p, self.B = p, B

    def _branches(self, y):
        p, B = self.p, self.B
        ni = p.n_ineq
        sg, _ = p.constraint_stacks
        gx, Jg = sg.evaluate(y)
        a = gx[:ni] - B.h_y[:ni] - B.V[:ni] @ (y - B.y)
        return a, Jg

    def __call__(self, y):
        y = self.p.check_point(y)
        a, Jg = self._branches(y)
        i = int(np.argmax(a))
        grad = (Jg.getrow(i) - self.B.V.getrow(i)).toarray().ravel()
        return float(a[i]), grad

    def values(self, Y):
        Y = np.atleast_2d(Y)
        cols = [f.g.values(Y) - self.B.h_y[i] - (Y - self.B.y) @ self.B.v(i)
                for i, f in enumerate(self.p.inequalities)]
        return np.max(np.column_stack(cols), axis=1)

    def build_model(self, m):
        t = m.new_var(cost=1.0)
        B = self.B
        for i, f in enumerate(self.p.inequalities):
            vi = B.v(i)
            LinearizedOracle._branch_row(m, f.g, vi, B.h_y[i] - float(vi @ B.y), t)


def check_linearized_slater(p: DCProblem, x, B: SubgradientBundle | None = None,
                            cfg: SteeringConfig | None = None) -> float:
    """Margin ``min_A max_i`` of the linearized inequalities; the condition holds iff it is < 0.

    Only defined for problems without equality constraints.
    """
    if p.n_eq:
        raise ValueError("the linearized Slater condition is defined only without equality constraints")
    cfg = cfg or SteeringConfig()
    x = p.check_point(x)
    if p.n_ineq == 0:
        return float("-inf")
    B = B if B is not None else collect_bundle(p, x)
    res = minimize(_SlaterOracle(p, B), p.feasible_set, cfg.subsolve, x0=x)
    return float(res.value)


# -------------------------------------------------------------------- trace

def write_trace_csv(report: SolveReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for rec in report.trace:
            w.writerow([repr(v) if isinstance(v, float) else v for v in rec.csv_row()])
