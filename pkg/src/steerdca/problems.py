"""Benchmark and toy DC problems.

* ``production``: a discrete-time production/stock model with a nonsmooth
  min-dynamics, written as DC equality constraints.
* ``train``: time-discretized minimum-energy train control with quadratic
  drag, whose objective and velocity dynamics use the identities

      y [u]_+ = ((y_+ + u_+)^2 + (y_-)^2)/2 - ((y_- + u_+)^2 + (y_+)^2)/2
      y |y|   = y_+^2 - y_-^2          (t_+ = max(0, t), t_- = max(0, -t))

* ``toy_ineq`` / ``toy_eq``: one- and two-dimensional instances with closed
  form subproblem solutions, used throughout the tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .atoms import Affine, ConvexExpr, Hinge, MaxAff, Quad, SqHingeSum
from .model import DCFunction, DCProblem, FeasibleSet


def _unit(d: int, *pairs) -> np.ndarray:
    a = np.zeros(d)
    for idx, val in pairs:
        a[idx] += val
    return a


# ------------------------------------------------------------- DC identities

def dc_pos_product(y_index: int, u_index: int, dim: int) -> DCFunction:
    """DC pair for ``y * max(0, u)``."""
    for i in (y_index, u_index):
        if not 0 <= i < dim:
            raise IndexError(f"index {i} out of range for dimension {dim}")
    if y_index == u_index:
        raise ValueError("y and u must be distinct variables")
    ey, eu = _unit(dim, (y_index, 1.0)), _unit(dim, (u_index, 1.0))
    g = ConvexExpr.of(SqHingeSum(np.vstack([ey, eu]), [0, 0]), SqHingeSum(-ey[None], [0]),
                      weights=[0.5, 0.5])
    h = ConvexExpr.of(SqHingeSum(np.vstack([-ey, eu]), [0, 0]), SqHingeSum(ey[None], [0]),
                      weights=[0.5, 0.5])
    return DCFunction(g, h)


def dc_signed_square(y_index: int, dim: int) -> DCFunction:
    """DC pair for ``y |y|``."""
    if not 0 <= y_index < dim:
        raise IndexError(f"index {y_index} out of range for dimension {dim}")
    ey = _unit(dim, (y_index, 1.0))
    return DCFunction(ConvexExpr.of(SqHingeSum(ey[None], [0])), ConvexExpr.of(SqHingeSum(-ey[None], [0])))


# --------------------------------------------------------------------- toys

def toy_ineq() -> DCProblem:
    """``min x  s.t.  1 - x <= 0,  x in [-10, 10]``; solution ``x = 1``."""
    one = np.ones(1)
    f0 = DCFunction(ConvexExpr.of(Affine(one, 0.0)), ConvexExpr.zero(1))
    f1 = DCFunction(ConvexExpr.of(Affine(-one, 1.0)), ConvexExpr.zero(1))
    return DCProblem(1, f0, (f1,), (), FeasibleSet.box([-10.0], [10.0]), name="toy_ineq")


def toy_eq() -> DCProblem:
    """``min (x1-1)^2 + (x2-1)^2  s.t.  x1^2 - x2^2 = 0,  x in [-5, 5]^2``.

    The origin is a feasible degenerate point: every linearization of
    the constraint there is identically zero, so it minimizes ``Gamma``.
    """
    f0 = DCFunction(ConvexExpr.of(Quad(2.0 * np.eye(2), [-2.0, -2.0], 2.0)), ConvexExpr.zero(2))
    g = ConvexExpr.of(Quad(np.diag([2.0, 0.0]), np.zeros(2)))
    h = ConvexExpr.of(Quad(np.diag([0.0, 2.0]), np.zeros(2)))
    return DCProblem(2, f0, (), (DCFunction(g, h),), FeasibleSet.box([-5.0, -5.0], [5.0, 5.0]),
                     name="toy_eq")


# --------------------------------------------------------------- production

@dataclass(frozen=True)
class ProductionParams:
    k: int = 1000
    theta: float = 0.01
    beta: float = 5.0
    rho_store: float = 0.5
    z0: float = 0.0
    h_coef: float = 0.5
    seed: int = 0
    price_range: tuple = (10.0, 15.0)
    output_range: tuple = (5.0, 15.0)
    bound_range: tuple = (5.0, 15.0)
    # explicit sequences of length k override the random draws
    prices: tuple | None = None
    outputs: tuple | None = None
    bounds: tuple | None = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError("horizon k must be an integer >= 2")
        for name in ("price_range", "output_range", "bound_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty")
        if self.theta < 0 or self.beta < 0 or self.rho_store < 0 or self.h_coef < 0:
            raise ValueError("theta, beta, rho_store and h_coef must be nonnegative")
        for name in ("prices", "outputs", "bounds"):
            seq = getattr(self, name)
            if seq is not None and len(seq) != self.k:
                raise ValueError(f"{name} must have length k = {self.k}")

    def data(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Prices ``p``, outputs ``v`` and control bounds ``b``, each of length ``k``."""
        rng = np.random.Generator(np.random.PCG64(self.seed))
        p = rng.uniform(*self.price_range, size=self.k)
        v = rng.uniform(*self.output_range, size=self.k)
        b = rng.uniform(*self.bound_range, size=self.k)
        if self.prices is not None:
            p = np.asarray(self.prices, dtype=float)
        if self.outputs is not None:
            v = np.asarray(self.outputs, dtype=float)
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float)
        return p, v, b


class ProductionLayout:
    """Variable layout ``(z(1..k-1), u(0..k-1))``."""

    def __init__(self, k: int):
        self.k = k
        self.dim = 2 * k - 1

    def z(self, i: int) -> int:
        return i - 1

    def u(self, i: int) -> int:
        return self.k - 1 + i

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[: self.k - 1], x[self.k - 1:]

    def join(self, z, u) -> np.ndarray:
        return np.concatenate([np.asarray(z, dtype=float), np.asarray(u, dtype=float)])


def build_production_problem(params: ProductionParams) -> DCProblem:
    k = params.k
    L = ProductionLayout(k)
    d = L.dim
    p, v, b = params.data()

    # objective, i = 1..k-1
    terms = []
    qdiag = np.zeros(d)
    lin = np.zeros(d)
    for i in range(1, k):
        disc = np.exp(-params.theta * i)
        zu = _unit(d, (L.z(i), -1.0), (L.u(i), -1.0))
        # -p min(z+u, v) = p max(-z-u, -v)
        terms.append((disc * p[i], MaxAff(np.vstack([zu, np.zeros(d)]), [0.0, -v[i]])))
        terms.append((disc * params.beta, Hinge(zu, v[i])))
        qdiag[L.u(i)] = 2.0 * params.h_coef * disc
        lin[L.z(i)] = params.rho_store * disc
    terms.append((1.0, Quad(np.diag(qdiag), np.zeros(d))))
    terms.append((1.0, Affine(lin, 0.0)))
    f0 = DCFunction(ConvexExpr(d, tuple(terms)), ConvexExpr.zero(d))

    # dynamics j = 0..k-2:  0 - h_j = 0,
    # h_j = -z(j+1) + z(j) + u(j) + max(-z(j) - u(j), -v(j))
    eqs = []
    for j in range(k - 1):
        zj = [(L.z(j), 1.0)] if j >= 1 else []
        z0 = 0.0 if j >= 1 else params.z0
        a_aff = _unit(d, (L.z(j + 1), -1.0), *zj, (L.u(j), 1.0))
        branch = _unit(d, *[(i, -c) for i, c in zj], (L.u(j), -1.0))
        h = ConvexExpr.of(Affine(a_aff, z0), MaxAff(np.vstack([branch, np.zeros(d)]), [-z0, -v[j]]))
        eqs.append(DCFunction(ConvexExpr.zero(d), h))

    lower = np.full(d, -np.inf)
    upper = np.full(d, np.inf)
    lower[L.u(0):] = 0.0
    upper[L.u(0):] = b
    A = FeasibleSet(lower, upper)
    return DCProblem(d, f0, (), tuple(eqs), A, name=f"production_k{k}_seed{params.seed}")


def simulate_production(params: ProductionParams, u) -> np.ndarray:
    """Feasible point ``(z, u)`` from the true recurrence driven by ``u(0..k-1)``."""
    k = params.k
    u = np.asarray(u, dtype=float)
    if u.size != k:
        raise ValueError(f"need k = {k} controls")
    _, v, _ = params.data()
    z = np.zeros(k)
    z[0] = params.z0
    for i in range(k - 1):
        z[i + 1] = z[i] + u[i] - min(z[i] + u[i], v[i])
    return ProductionLayout(k).join(z[1:], u)


# -------------------------------------------------------------------- train

@dataclass(frozen=True)
class TrainParams:
    k: int = 480
    T: float = 48.0
    s: float = 200.0
    P: float = 0.78e-4
    Q: float = 0.28e-3
    mass: float = 1e5
    # bounds on the rescaled control u/mass
    u_lower: float = -2.0 / 3.0
    u_upper: float = 2.0 / 3.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 3:
            raise ValueError("horizon k must be an integer >= 3")
        if not (self.T > 0 and self.s > 0 and self.mass > 0):
            raise ValueError("T, s and mass must be positive")
        if self.P < 0 or self.Q < 0:
            raise ValueError("drag coefficients must be nonnegative")
        if not self.u_lower <= self.u_upper:
            raise ValueError("empty control bounds")

    @property
    def delta(self) -> float:
        return self.T / self.k


class TrainLayout:
    """Variable layout ``(u(0..k-1), x(1..k-1), y(1..k-1))``; ``u`` is rescaled."""

    def __init__(self, k: int):
        self.k = k
        self.dim = 3 * k - 2

    def u(self, i: int) -> int:
        return i

    def x(self, i: int) -> int:
        return self.k + i - 1

    def y(self, i: int) -> int:
        return 2 * self.k - 1 + i - 1

    def split(self, w):
        w = np.asarray(w, dtype=float)
        k = self.k
        return w[:k], w[k: 2 * k - 1], w[2 * k - 1:]


def build_train_problem(params: TrainParams) -> DCProblem:
    k, dt = params.k, params.delta
    L = TrainLayout(k)
    d = L.dim

    f0 = None
    for i in range(1, k):
        term = dc_pos_product(L.y(i), L.u(i), d)
        f0 = term if f0 is None else DCFunction(f0.g + term.g, f0.h + term.h)

    # affine part of A: position dynamics and boundary conditions
    rows, rhs = [], []
    rows.append(_unit(d, (L.x(1), 1.0)))  # x(1) = x(0) + dt y(0) = 0
    rhs.append(0.0)
    for i in range(1, k - 1):
        rows.append(_unit(d, (L.x(i + 1), 1.0), (L.x(i), -1.0), (L.y(i), -dt)))
        rhs.append(0.0)
    rows.append(_unit(d, (L.x(k - 1), -1.0), (L.y(k - 1), -dt)))  # x(k) = s
    rhs.append(-params.s)
    rows.append(_unit(d, (L.y(1), 1.0), (L.u(0), -dt)))  # y(1) = dt u(0)
    rhs.append(0.0)

    lower = np.full(d, -np.inf)
    upper = np.full(d, np.inf)
    lower[:k] = params.u_lower
    upper[:k] = params.u_upper
    A = FeasibleSet(lower, upper, np.vstack(rows), np.asarray(rhs))

    # velocity dynamics i = 1..k-1 with y(k) = 0:
    # y(i+1) - (1 - dt Q) y(i) - dt u(i) + dt P y(i)|y(i)| = 0
    eqs = []
    for i in range(1, k):
        pairs = [(L.y(i), -(1.0 - dt * params.Q)), (L.u(i), -dt)]
        if i + 1 <= k - 1:
            pairs.append((L.y(i + 1), 1.0))
        sq = dc_signed_square(L.y(i), d)
        g = ConvexExpr.of(Affine(_unit(d, *pairs), 0.0)) + sq.g.scaled(dt * params.P)
        h = sq.h.scaled(dt * params.P)
        eqs.append(DCFunction(g, h))
    return DCProblem(d, f0, (), tuple(eqs), A, name=f"train_k{k}")


def simulate_train(params: TrainParams, u) -> np.ndarray:
    """Point with ``phi = 0`` from the true recurrences driven by ``u(0..k-2)``.

    ``u(k-1)`` is chosen so that ``y(k) = 0``.  The result satisfies the
    position dynamics but in general not ``x(k) = s`` or the control box.
    """
    k, dt = params.k, params.delta
    u = np.asarray(u, dtype=float).copy()
    if u.size != k:
        raise ValueError(f"need k = {k} controls")
    x = np.zeros(k + 1)
    y = np.zeros(k + 1)
    for i in range(k - 1):
        x[i + 1] = x[i] + dt * y[i]
        y[i + 1] = y[i] + dt * u[i] - dt * params.P * y[i] * abs(y[i]) - dt * params.Q * y[i]
    yl = y[k - 1]
    u[k - 1] = (-yl + dt * params.P * yl * abs(yl) + dt * params.Q * yl) / dt
    return np.concatenate([u, x[1:k], y[1:k]])


def tachogram(params: TrainParams, w) -> np.ndarray:
    """``(position, velocity)`` at times ``0..k`` including boundary values."""
    _, x, y = TrainLayout(params.k).split(w)
    pos = np.concatenate([[0.0], x, [params.s]])
    vel = np.concatenate([[0.0], y, [0.0]])
    return np.column_stack([pos, vel])


# ------------------------------------------------------------------- starts

def production_starts(params: ProductionParams, n: int, seed: int) -> list[np.ndarray]:
    """Random starts with ``u, z`` uniform on ``[0, 15]`` (projected onto ``A`` later).

    The stream is seeded with ``(seed, 1)`` so it is independent of the
    instance data drawn from ``seed``.
    """
    rng = np.random.Generator(np.random.PCG64([seed, 1]))
    L = ProductionLayout(params.k)
    return [L.join(rng.uniform(0, 15, params.k - 1), rng.uniform(0, 15, params.k)) for _ in range(n)]
