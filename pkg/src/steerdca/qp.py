"""Convex quadratic programs for the bundle master problems.

Solves ``min 0.5 z'Pz + q'z  s.t.  Gz <= h,  Az = b`` with the Clarabel
interior-point solver.  Master problems are small, sparse and always
feasible, but carry free epigraph variables with no curvature, which is
what a homogeneous-embedding solver handles robustly.
"""
from __future__ import annotations

from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

_OK = {"Solved": "optimal", "AlmostSolved": "inaccurate"}


@dataclass
class QPResult:
    x: np.ndarray
    lam: np.ndarray  # multipliers of G z <= h
    nu: np.ndarray  # multipliers of A z = b
    obj: float
    iters: int
    status: str  # "optimal" | "inaccurate" | "failed"


def _settings(tol: float, max_iter: int):
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.max_iter = max_iter
    s.tol_gap_abs = tol
    s.tol_gap_rel = tol
    s.tol_feas = tol
    s.tol_ktratio = min(s.tol_ktratio, tol)
    return s


def solve_qp(P, q, G, h, A=None, b=None, tol: float = 1e-10, max_iter: int = 200) -> QPResult:
    """Solve the QP; ``status`` is ``"failed"`` when no usable solution was found."""
    q = np.asarray(q, dtype=float)
    n = q.size
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    m, p = h.size, b.size
    P = sp.csc_matrix(sp.triu(sp.csc_matrix(P) if P is not None else sp.csc_matrix((n, n))))
    blocks, rhs, cones = [], [], []
    if p:
        blocks.append(sp.csc_matrix(A))
        rhs.append(b)
        cones.append(clarabel.ZeroConeT(p))
    if m:
        blocks.append(sp.csc_matrix(G))
        rhs.append(h)
        cones.append(clarabel.NonnegativeConeT(m))
    K = sp.vstack(blocks, format="csc") if blocks else sp.csc_matrix((0, n))
    r = np.concatenate(rhs) if rhs else np.zeros(0)
    sol = clarabel.DefaultSolver(P, q, K, r, cones, _settings(tol, max_iter)).solve()
    status = _OK.get(str(sol.status), "failed")
    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    if status == "failed" or not np.all(np.isfinite(x)):
        return QPResult(np.zeros(n), np.zeros(m), np.zeros(p), np.nan, sol.iterations, "failed")
    return QPResult(x, z[p:], z[:p], float(sol.obj_val), sol.iterations, status)
