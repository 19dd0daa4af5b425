"""Euclidean projection onto ``{l <= x <= u} ∩ {Ex = e}`` by Dykstra's method."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ProjectionError(RuntimeError):
    """Dykstra's iteration did not reach the requested accuracy."""


@dataclass
class AffineProjector:
    """Orthogonal projector onto ``{x : Ex = e}`` via a least-squares factorization."""

    E: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=float)
        self.e = np.asarray(self.e, dtype=float)
        if self.E.shape[0] == 0:
            self._Q = None
            self._shift = None
            return
        # thin QR of E' gives an orthonormal basis of the row space
        Q, R = np.linalg.qr(self.E.T)
        diag = np.abs(np.diag(R))
        keep = diag > 1e-12 * max(1.0, diag.max())
        self._Q = Q[:, keep]
        x_ls = np.linalg.lstsq(self.E, self.e, rcond=None)[0]
        self._shift = x_ls
        self.residual = float(np.linalg.norm(self.E @ x_ls - self.e, np.inf))

    @property
    def consistent(self) -> bool:
        return self._Q is None or self.residual <= 1e-9 * max(1.0, np.abs(self.e).max(initial=0.0))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self._Q is None:
            return x.copy()
        r = x - self._shift
        return x - self._Q @ (self._Q.T @ r)


def dykstra(x0, lower, upper, affine: AffineProjector, tol: float = 1e-12,
            max_sweeps: int = 10000) -> tuple[np.ndarray, int, bool]:
    """Project ``x0`` onto box ∩ affine set.

    Returns ``(x, sweeps, converged)``; ``x`` lies exactly in the box.
    """
    x = np.asarray(x0, dtype=float).copy()
    box = lambda v: np.minimum(np.maximum(v, lower), upper)  # noqa: E731
    if affine._Q is None:
        return box(x), 0, True
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    scale = max(1.0, float(np.abs(x).max(initial=0.0)))
    for k in range(1, max_sweeps + 1):
        y = affine(x + p)
        p = x + p - y
        x_new = box(y + q)
        q = y + q - x_new
        step = float(np.abs(x_new - x).max())
        x = x_new
        if step <= tol * scale:
            res = float(np.abs(affine.E @ x - affine.e).max())
            if res <= 1e-10 * max(1.0, float(np.abs(affine.e).max(initial=0.0))):
                return x, k, True
    return x, max_sweeps, False
