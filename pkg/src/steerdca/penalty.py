"""The l1 penalty function, its linearized infeasibility measure and convex majorant.

For a base point ``y`` with subgradients ``v_k in dh_k(y)`` and
``w_j in dg_j(y)`` (a :class:`SubgradientBundle`):

    phi(x)   = sum_i max(f_i(x), 0) + sum_j |f_j(x)|
    Gamma(x) = sum_i max(g_i(x) - h_i(y) - <v_i, x-y>, 0)
             + sum_j max(g_j(x) - h_j(y) - <v_j, x-y>,
                         h_j(x) - g_j(y) - <w_j, x-y>)
    Q_c(x)   = g_0(x) - <v_0, x-y> + c Gamma(x)

so that ``Gamma >= phi`` and ``Q_c(x) - h_0(y) >= Phi_c(x) = f_0(x) + c phi(x)``,
with equality at ``x = y``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import DCProblem


@dataclass(frozen=True, eq=False)
class SubgradientBundle:
    """Subgradients of the concave parts at the base point ``y``.

    ``V`` stacks ``v_k`` for inequalities then equalities; ``W`` stacks
    ``w_j`` for the equalities only.
    """

    y: np.ndarray
    v0: np.ndarray
    h0_y: float
    V: sp.csr_matrix
    h_y: np.ndarray
    W: sp.csr_matrix
    g_eq_y: np.ndarray

    def v(self, k: int) -> np.ndarray:
        return self.V.getrow(k).toarray().ravel()

    def w(self, j: int) -> np.ndarray:
        return self.W.getrow(j).toarray().ravel()


@dataclass(frozen=True)
class PenaltyValue:
    objective: float
    infeasibility: float
    total: float
    c: float


def _check_c(c: float):
    if not c > 0:
        raise ValueError(f"penalty parameter must be positive, got {c}")


def constraint_violations(p: DCProblem, x) -> np.ndarray:
    """Per-constraint contributions to ``phi``."""
    g, h = p.constraint_values(x)
    f = g - h
    ni = p.n_ineq
    return np.concatenate([np.maximum(f[:ni], 0.0), np.abs(f[ni:])])


def infeasibility(p: DCProblem, x) -> float:
    return float(constraint_violations(p, x).sum())


def penalty_value(p: DCProblem, c: float, x) -> PenaltyValue:
    _check_c(c)
    x = p.check_point(x)
    f0 = p.objective(x)
    phi = infeasibility(p, x)
    return PenaltyValue(f0, phi, f0 + c * phi, c)


def collect_bundle(p: DCProblem, y) -> SubgradientBundle:
    y = p.check_point(y).copy()
    y.setflags(write=False)
    h0, v0 = p.objective.h.value_and_subgradient(y)
    if p.constraint_stacks is None:
        empty = sp.csr_matrix((0, p.dim))
        return SubgradientBundle(y, v0, h0, empty, np.zeros(0), empty, np.zeros(0))
    sg, sh = p.constraint_stacks
    gy, Jg = sg.evaluate(y)
    hy, Jh = sh.evaluate(y)
    ni = p.n_ineq
    return SubgradientBundle(y, v0, float(h0), Jh, hy, Jg[ni:], gy[ni:])


def _branches(p: DCProblem, x, B: SubgradientBundle, want_jac: bool):
    """Values of the linearized branches and (optionally) constraint Jacobians."""
    sg, sh = p.constraint_stacks
    dx = x - B.y
    if want_jac:
        gx, Jg = sg.evaluate(x)
        hx, Jh = sh.evaluate(x)
    else:
        gx, hx = sg.values(x), sh.values(x)
        Jg = Jh = None
    ni = p.n_ineq
    a = gx - B.h_y - B.V @ dx
    b = hx[ni:] - B.g_eq_y - B.W @ dx
    return a, b, Jg, Jh


def _gamma_eval(p: DCProblem, x, B: SubgradientBundle, want_grad: bool):
    if p.constraint_stacks is None:
        return 0.0, np.zeros(p.dim)
    ni = p.n_ineq
    a, b, Jg, Jh = _branches(p, x, B, want_grad)
    # ties go to the first branch: the g-linearization
    act_i = a[:ni] >= 0.0
    first = a[ni:] >= b
    val = float(np.where(act_i, a[:ni], 0.0).sum() + np.where(first, a[ni:], b).sum())
    if not want_grad:
        return val, None
    wg = np.concatenate([act_i, first]).astype(float)
    wh = np.concatenate([np.zeros(ni), ~first]).astype(float)
    grad = Jg.T @ wg - B.V.T @ wg + Jh.T @ wh - B.W.T @ wh[ni:]
    return val, np.asarray(grad).ravel()


def gamma(p: DCProblem, x, B: SubgradientBundle) -> float:
    x = p.check_point(x)
    return _gamma_eval(p, x, B, False)[0]


def majorant(p: DCProblem, c: float, x, B: SubgradientBundle) -> float:
    """``Q_c(x, y, V)``; note ``Q_c(y, y, V) - h_0(y) = Phi_c(y)``."""
    _check_c(c)
    x = p.check_point(x)
    lin0 = p.objective.g.value(x) - float(B.v0 @ (x - B.y))
    return lin0 + c * _gamma_eval(p, x, B, False)[0]


class LinearizedOracle:
    """Convex oracle for ``w_obj * (g_0 - <v_0, .-y>) + c * Gamma(., y, V)``.

    Evaluates by ``(value, subgradient)`` calls, in batches for grids via
    :meth:`values`, and describes itself to the bundle master model.
    """

    def __init__(self, p: DCProblem, B: SubgradientBundle, c: float, with_objective: bool):
        self.p, self.B, self.c = p, B, float(c)
        self.with_objective = with_objective

    def __call__(self, x):
        x = self.p.check_point(x)
        gam, ggam = _gamma_eval(self.p, x, self.B, True)
        val, grad = self.c * gam, self.c * ggam
        if self.with_objective:
            g0, v = self.p.objective.g.value_and_subgradient(x)
            val += g0 - float(self.B.v0 @ (x - self.B.y))
            grad = grad + v - self.B.v0
        return val, grad

    def value(self, x) -> float:
        x = self.p.check_point(x)
        val = self.c * _gamma_eval(self.p, x, self.B, False)[0]
        if self.with_objective:
            val += self.p.objective.g.value(x) - float(self.B.v0 @ (x - self.B.y))
        return val

    def linearized_objective(self, x) -> float:
        return self.p.objective.g.value(x) - float(self.B.v0 @ (x - self.B.y))

    def values(self, X) -> np.ndarray:
        """Batched values over the rows of ``X`` (used by the grid oracle)."""
        p, B = self.p, self.B
        X = np.atleast_2d(np.asarray(X, dtype=float))
        D = X - B.y
        out = np.zeros(X.shape[0])
        ni = p.n_ineq
        cons = p.inequalities + p.equalities
        for k, f in enumerate(cons):
            a = f.g.values(X) - B.h_y[k] - D @ B.v(k)
            if k < ni:
                out += np.maximum(a, 0.0)
            else:
                j = k - ni
                b = f.h.values(X) - B.g_eq_y[j] - D @ B.w(j)
                out += np.maximum(a, b)
        out *= self.c
        if self.with_objective:
            out += p.objective.g.values(X) - D @ B.v0
        return out

    def build_model(self, m):
        p, B, c = self.p, self.B, self.c
        d = p.dim
        xs = np.arange(d)
        if self.with_objective:
            m.add_expr(p.objective.g)
            m.add_cost(xs, -B.v0)
            m.const += float(B.v0 @ B.y)
        ni = p.n_ineq
        cons = p.inequalities + p.equalities
        for k, f in enumerate(cons):
            r = m.new_var(cost=c)
            vk = B.v(k)
            self._branch_row(m, f.g, vk, B.h_y[k] - float(vk @ B.y), r)
            if k < ni:
                m.add_row([r], [-1.0], 0.0)
            else:
                j = k - ni
                wj = B.w(j)
                self._branch_row(m, f.h, wj, B.g_eq_y[j] - float(wj @ B.y), r)

    @staticmethod
    def _branch_row(m, expr, v, shift, r):
        # expr(x) - <v, x> - r <= shift, where shift = value(y) - <v, y>
        lin, const = m.bound_expr(expr)
        for j in np.flatnonzero(v):
            lin[int(j)] = lin.get(int(j), 0.0) - v[j]
        lin[r] = lin.get(r, 0.0) - 1.0
        cols = np.fromiter(lin.keys(), dtype=int)
        coefs = np.fromiter(lin.values(), dtype=float)
        m.add_row(cols, coefs, shift - const)


def majorant_oracle(p: DCProblem, c: float, B: SubgradientBundle) -> LinearizedOracle:
    _check_c(c)
    return LinearizedOracle(p, B, c, with_objective=True)


def gamma_oracle(p: DCProblem, B: SubgradientBundle) -> LinearizedOracle:
    return LinearizedOracle(p, B, 1.0, with_objective=False)
