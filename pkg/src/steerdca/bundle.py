"""Nonsmooth convex minimization over ``A = box ∩ {Ex = e}``.

The reference algorithm is a proximal bundle method.  Its master problem is
a strongly convex QP over ``A``:

    min_z  model(z) + 1/(2t) |x - center|^2,

solved with :func:`steerdca.qp.solve_qp`.  Oracles may describe their own
structure through ``build_model(master)``: polyhedral atoms and outer
quadratic terms then enter the master exactly, and only curved atoms nested
inside a max are approximated by cutting planes.  An opaque oracle (any
callable returning ``(value, subgradient)``) gets a single aggregated
cutting-plane model, which is the textbook bundle method.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .atoms import Abs, Affine, ConvexExpr, Hinge, MaxAff, Quad, SqHingeSum, Zero
from .model import FeasibleSet
from .projection import ProjectionError, dykstra
from .qp import solve_qp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubsolveConfig:
    tol_sub: float = 1e-8
    max_oracle_calls: int = 5000
    t_init: float = 1.0
    t_grow: float = 10.0
    t_shrink: float = 0.5
    t_max: float = 1e10
    t_min: float = 1e-8
    serious_fraction: float = 0.1
    qp_tol: float = 1e-10
    max_dykstra_sweeps: int = 10000
    max_cuts_per_source: int = 60

    def __post_init__(self):
        for name in ("tol_sub", "t_init", "qp_tol", "t_max", "t_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_oracle_calls < 1 or self.max_dykstra_sweeps < 1:
            raise ValueError("iteration limits must be at least 1")
        if not 0 < self.serious_fraction < 1:
            raise ValueError("serious_fraction must lie in (0, 1)")


@dataclass
class SubsolveResult:
    x: np.ndarray
    value: float
    gap: float
    oracle_calls: int
    status: str  # "Converged" | "IterLimit"
    serious_values: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "Converged"


# ---------------------------------------------------------------- projection

def project(A: FeasibleSet, x, max_sweeps: int = 10000) -> np.ndarray:
    """Euclidean projection onto ``A`` by Dykstra's alternating projections.

    Raises :class:`ProjectionError` when the sweep limit is exhausted.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != A.dim:
        raise ValueError(f"dimension mismatch: expected {A.dim}, got {x.size}")
    y, sweeps, ok = dykstra(x, A.lower, A.upper, A.affine, max_sweeps=max_sweeps)
    if not ok:
        raise ProjectionError(f"Dykstra projection did not converge in {sweeps} sweeps")
    return y


# -------------------------------------------------------------- master model

class _CutSource:
    __slots__ = ("fn", "var", "cuts")

    def __init__(self, fn, var):
        self.fn = fn
        self.var = var
        self.cuts = []  # list of (cols, coefs, rhs, age)


class MasterModel:
    """Builder for the epigraph form of a structured convex function.

    Variables ``z = (x, aux)``; the model is
    ``0.5 z'Pz + cost'z + const`` subject to linear rows and cut rows.
    """

    def __init__(self, dim: int):
        self.d = dim
        self.nvar = dim
        self.cost = [0.0] * dim
        self.const = 0.0
        self._P = ([], [], [])
        self._rows = ([], [], [])  # (row ids, cols, vals)
        self._rhs = []
        self.sources: list[_CutSource] = []

    # -- primitives
    def new_var(self, cost: float = 0.0) -> int:
        self.cost.append(float(cost))
        self.nvar += 1
        return self.nvar - 1

    def add_cost(self, cols, coefs):
        for c, v in zip(np.asarray(cols).tolist(), np.asarray(coefs, dtype=float).tolist()):
            self.cost[c] += v

    def add_quadratic(self, cols, M):
        """Add ``0.5 z[cols]' M z[cols]`` to the objective."""
        cols = np.asarray(cols)
        M = np.asarray(M, dtype=float)
        ii, jj = np.nonzero(M)
        self._P[0].extend(cols[ii].tolist())
        self._P[1].extend(cols[jj].tolist())
        self._P[2].extend(M[ii, jj].tolist())

    def add_row(self, cols, coefs, rhs: float):
        """Add the row ``sum coefs * z[cols] <= rhs``."""
        r = len(self._rhs)
        cols = np.asarray(cols, dtype=int)
        self._rows[0].extend([r] * cols.size)
        self._rows[1].extend(cols.tolist())
        self._rows[2].extend(np.asarray(coefs, dtype=float).tolist())
        self._rhs.append(float(rhs))

    def add_source(self, fn: Callable, var: int):
        """Approximate ``fn(x) <= z[var]`` by cutting planes of ``fn``."""
        self.sources.append(_CutSource(fn, var))

    # -- atom-level helpers
    def add_expr(self, expr: ConvexExpr, scale: float = 1.0):
        """Add ``scale * expr(x)`` to the objective, exactly."""
        d = self.d
        xs = np.arange(d)
        for w, atom in expr.terms:
            c = scale * w
            if c == 0.0 or isinstance(atom, Zero):
                continue
            if isinstance(atom, Affine):
                self.add_cost(xs, c * atom.a)
                self.const += c * atom.b
            elif isinstance(atom, Quad):
                self.add_quadratic(xs, c * atom.P)
                self.add_cost(xs, c * atom.a)
                self.const += c * atom.b
            elif isinstance(atom, SqHingeSum):
                k = atom.b.size
                s = [self.new_var() for _ in range(k)]
                for i in range(k):
                    self._bound_affine_by(atom.A[i], atom.b[i], s[i])
                    self.add_row([s[i]], [-1.0], 0.0)
                self.add_quadratic(s, 2.0 * c * np.ones((k, k)))
            else:
                r = self.new_var(cost=c)
                self._epigraph_polyhedral(atom, r)

    def bound_expr(self, expr: ConvexExpr) -> tuple[dict, float]:
        """Linear form ``L`` with ``expr(x) <= L(z)`` representable in the model.

        Returns ``(coefs by variable, constant)``.
        """
        lin: dict[int, float] = {}
        const = 0.0

        def acc(col, v):
            lin[col] = lin.get(col, 0.0) + v

        for w, atom in expr.terms:
            if w == 0.0 or isinstance(atom, Zero):
                continue
            if isinstance(atom, Affine):
                for j in np.flatnonzero(atom.a):
                    acc(int(j), w * atom.a[j])
                const += w * atom.b
                continue
            r = self.new_var()
            if atom.polyhedral:
                self._epigraph_polyhedral(atom, r)
            else:
                self.add_source(atom.value_and_subgradient, r)
            acc(r, w)
        return lin, const

    def _bound_affine_by(self, a, b, r):
        nz = np.flatnonzero(a)
        self.add_row(np.append(nz, r), np.append(a[nz], -1.0), -b)

    def _epigraph_polyhedral(self, atom, r):
        if isinstance(atom, MaxAff):
            for i in range(atom.b.size):
                self._bound_affine_by(atom.A[i], atom.b[i], r)
        elif isinstance(atom, Hinge):
            self._bound_affine_by(atom.a, atom.b, r)
            self.add_row([r], [-1.0], 0.0)
        elif isinstance(atom, Abs):
            self._bound_affine_by(atom.a, atom.b, r)
            self._bound_affine_by(-atom.a, -atom.b, r)
        else:  # pragma: no cover
            raise TypeError(atom)

    # -- cuts
    def add_cut(self, src: _CutSource, x: np.ndarray, stamp: int):
        f, g = src.fn(x)
        g = np.asarray(g, dtype=float)
        nz = np.flatnonzero(g)
        cols = np.append(nz, src.var)
        coefs = np.append(g[nz], -1.0)
        rhs = float(g[nz] @ x[nz]) - float(f)
        src.cuts.append([cols, coefs, rhs, stamp, 0.0])

    def assemble(self):
        n = self.nvar
        P = sp.csr_matrix((self._P[2], (self._P[0], self._P[1])), shape=(n, n))
        rows = sp.csr_matrix((self._rows[2], (self._rows[0], self._rows[1])),
                             shape=(len(self._rhs), n))
        return P, np.asarray(self.cost), rows, np.asarray(self._rhs)

    def cut_rows(self):
        ri, ci, vi, rhs, owners = [], [], [], [], []
        r = 0
        for s_idx, src in enumerate(self.sources):
            for k, (cols, coefs, b, _, _) in enumerate(src.cuts):
                ri.extend([r] * cols.size)
                ci.extend(cols.tolist())
                vi.extend(coefs.tolist())
                rhs.append(b)
                owners.append((s_idx, k))
                r += 1
        C = sp.csr_matrix((vi, (ri, ci)), shape=(r, self.nvar))
        return C, np.asarray(rhs), owners


def _build_master(oracle, d: int) -> MasterModel:
    m = MasterModel(d)
    builder = getattr(oracle, "build_model", None)
    if builder is not None:
        builder(m)
    else:
        r = m.new_var(cost=1.0)
        m.add_source(oracle, r)
    return m


def _oracle_value(oracle, x) -> float:
    fn = getattr(oracle, "value", None)
    if fn is not None:
        return float(fn(x))
    return float(oracle(x)[0])


# ------------------------------------------------------------------ minimize

def minimize(oracle, A: FeasibleSet, cfg: SubsolveConfig | None = None, x0=None) -> SubsolveResult:
    """Minimize a convex oracle over ``A`` with a proximal bundle method.

    ``oracle(x)`` must return ``(value, subgradient)``; structured oracles
    may additionally provide ``value(x)`` and ``build_model(master)``.  The
    start is the projection of ``x0`` onto ``A`` (origin by default).  The
    reported ``gap`` is the predicted decrease of the last master problem.
    """
    cfg = cfg or SubsolveConfig()
    d = A.dim
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != d:
        raise ValueError(f"dimension mismatch: expected {d}, got {x0.size}")
    if not A.contains(x0, tol=1e-10):
        x0 = project(A, x0, cfg.max_dykstra_sweeps)

    m = _build_master(oracle, d)
    P0, cost0, R0, rhs0 = m.assemble()
    n = m.nvar
    box_lo = np.flatnonzero(np.isfinite(A.lower))
    box_hi = np.flatnonzero(np.isfinite(A.upper))
    nb = box_lo.size + box_hi.size
    Bx = sp.csr_matrix(
        (np.concatenate([-np.ones(box_lo.size), np.ones(box_hi.size)]),
         (np.arange(nb), np.concatenate([box_lo, box_hi]))), shape=(nb, n))
    bh = np.concatenate([-A.lower[box_lo], A.upper[box_hi]])
    Eq = sp.hstack([sp.csr_matrix(A.E), sp.csr_matrix((A.n_eq, n - d))]).tocsr() if A.n_eq else None
    I_x = sp.diags(np.concatenate([np.ones(d), np.zeros(n - d)])).tocsr()

    center = x0.copy()
    f_center = _oracle_value(oracle, center)
    stamp = itertools.count()
    for src in m.sources:
        m.add_cut(src, center, next(stamp))
    calls = 1
    t = cfg.t_init
    serious_values = [f_center]
    best_x, best_f = center, f_center
    gap = np.inf
    null_run = 0
    status = "IterLimit"
    while calls < cfg.max_oracle_calls:
        C, ch, owners = m.cut_rows()
        G = sp.vstack([R0, C, Bx]).tocsr()
        h = np.concatenate([rhs0, ch, bh])
        # solve for the step from the center so the prox term adds no large linear cost
        zc = np.concatenate([center, np.zeros(n - d)])
        qp = solve_qp(P0 + I_x / t, P0 @ zc + cost0, G, h - G @ zc,
                      Eq, A.e - A.E @ center if A.n_eq else None, tol=cfg.qp_tol)
        if qp.status == "failed":
            log.warning("bundle: master QP failed after %d oracle calls", calls)
            break
        z = zc + qp.x
        x_new = np.clip(z[:d], A.lower, A.upper)
        model_val = 0.5 * float(z @ (P0 @ z)) + float(cost0 @ z) + m.const
        # the model minorizes F and is exact at the center, so a clear excess is a
        # solver failure; small excesses are master accuracy relative to the cost scale
        scale = max(1.0, abs(f_center), float(np.abs(cost0).max(initial=0.0)))
        if model_val > f_center + 1e-6 * scale:
            log.warning("bundle: master model value %.6g exceeds center value %.6g", model_val, f_center)
            break
        gap = max(f_center - model_val, 0.0)
        # multipliers of cut rows, used for pruning
        lam_cuts = qp.lam[R0.shape[0]: R0.shape[0] + C.shape[0]]
        for (si, k), lv in zip(owners, lam_cuts):
            m.sources[si].cuts[k][4] = lv
        if gap <= cfg.tol_sub:
            status = "Converged"
            break
        f_new = _oracle_value(oracle, x_new)
        calls += 1
        if f_new < best_f:
            best_x, best_f = x_new, f_new
        decrease = f_center - f_new
        if decrease >= cfg.serious_fraction * gap:
            center, f_center = x_new, f_new
            serious_values.append(f_center)
            if decrease >= 0.5 * gap:
                t = min(t * cfg.t_grow, cfg.t_max)
            null_run = 0
        else:
            null_run += 1
            if null_run >= 3 and decrease < 0:
                t = max(t * cfg.t_shrink, cfg.t_min)
        s = next(stamp)
        for src in m.sources:
            m.add_cut(src, x_new, s)
            if len(src.cuts) > cfg.max_cuts_per_source:
                _prune(src, cfg.max_cuts_per_source)
    log.debug("bundle: %s after %d calls, gap %.3g", status, calls, gap)
    if f_center <= best_f:
        best_x, best_f = center, f_center
    return SubsolveResult(best_x.copy(), float(best_f), float(gap), calls, status, serious_values)


def _prune(src: _CutSource, cap: int):
    lam = np.array([c[4] for c in src.cuts])
    thresh = 1e-9 * max(1.0, lam.max(initial=0.0))
    keep = [i for i, c in enumerate(src.cuts) if c[4] > thresh]
    newest = len(src.cuts) - 1
    if newest not in keep:
        keep.append(newest)
    if len(keep) > cap:
        keep = keep[-cap:]
    src.cuts = [src.cuts[i] for i in sorted(set(keep))]


# ------------------------------------------------------------- grid oracle

def _batch_values(oracle, X: np.ndarray) -> np.ndarray:
    vals = getattr(oracle, "values", None)
    if vals is not None:
        return np.asarray(vals(X), dtype=float)
    return np.array([float(oracle(x)[0]) for x in X])


def grid_minimize(oracle, A: FeasibleSet, step: float, refinements: int = 1,
                  chunk: int = 1_000_000) -> np.ndarray:
    """Brute-force grid minimizer over ``A`` for ``dim <= 3`` (test oracle).

    Each refinement pass re-grids a ``±2 step`` neighborhood of the incumbent
    at ``step/100``; ``refinements`` sets the number of passes.
    """
    d = A.dim
    if d > 3:
        raise ValueError("grid_minimize supports dimension <= 3")
    if not A.bounded:
        raise ValueError("grid_minimize needs a finite box")
    lo, hi = A.lower, A.upper
    if A.n_eq:
        Q, R = np.linalg.qr(A.E.T, mode="complete")
        rank = int(np.sum(np.abs(np.diag(R)) > 1e-12))
        N = Q[:, rank:]
        x_p = np.linalg.lstsq(A.E, A.e, rcond=None)[0]
    else:
        N = np.eye(d)
        x_p = np.zeros(d)
    r = N.shape[1]
    if r == 0:
        return np.clip(x_p, lo, hi)
    center = 0.5 * (lo + hi)
    radius = 0.5 * float(np.linalg.norm(hi - lo))
    t_c = N.T @ (center - x_p)

    def search(t_lo, t_hi, h):
        axes = [np.arange(a, b + 0.5 * h, h) for a, b in zip(t_lo, t_hi)]
        axes = [np.minimum(ax, b) for ax, b in zip(axes, t_hi)]
        sizes = [ax.size for ax in axes]
        total = int(np.prod(sizes))
        best_v, best_pt = np.inf, None
        for start in range(0, total, chunk):
            idx = np.unravel_index(np.arange(start, min(total, start + chunk)), sizes)
            T = np.column_stack([ax[i] for ax, i in zip(axes, idx)])
            X = x_p + T @ N.T
            if A.n_eq:
                ok = np.all((X >= lo - 1e-12) & (X <= hi + 1e-12), axis=1)
                X = np.clip(X[ok], lo, hi)
                T = T[ok]
                if X.shape[0] == 0:
                    continue
            v = _batch_values(oracle, X)
            k = int(np.argmin(v))
            if v[k] < best_v:
                best_v, best_pt = float(v[k]), T[k]
        return best_pt

    if A.n_eq:
        t_lo, t_hi = t_c - radius, t_c + radius
    else:
        t_lo, t_hi = lo.copy(), hi.copy()
    t_best = search(t_lo, t_hi, step)
    if t_best is None:
        raise ValueError("grid does not intersect the feasible set; use a smaller step")
    h = step
    for _ in range(refinements):
        lo_t, hi_t = t_best - 2 * h, t_best + 2 * h
        if not A.n_eq:
            lo_t, hi_t = np.maximum(lo_t, lo), np.minimum(hi_t, hi)
        cand = search(lo_t, hi_t, h / 100.0)
        if cand is not None:
            t_best = cand
        h /= 100.0
    return np.clip(x_p + N @ t_best, lo, hi)
