"""Convex atom algebra with exact values and deterministic subgradients.

A :class:`ConvexExpr` is a nonnegative combination of atoms drawn from a
closed set of convex building blocks.  Every atom knows its value, one
subgradient, and a batched value routine used by brute-force oracles.

Subgradient tie-breaking at kinks picks the first maximizing branch in
declaration order: ``HINGE`` is ``max{0, a'x+b}`` so the zero branch wins at
the kink, ``ABS`` is ``max{a'x+b, -(a'x+b)}`` so the ``+a`` branch wins, and
inactive hinges inside ``SQHINGESUM`` contribute nothing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

PSD_RTOL = 1e-10


def _vec(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


def _mat(a, name: str, ncols: int | None = None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if ncols is None or arr.size == ncols else arr
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


class Atom:
    """Base class; subclasses are frozen dataclasses."""

    kind: str = ""
    #: atoms whose graph is polyhedral can be represented exactly by linear rows
    polyhedral: bool = True

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def value_and_subgradient(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Affine(Atom):
    a: np.ndarray
    b: float = 0.0
    kind = "AFFINE"

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "AFFINE.a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return self.a.size

    def value_and_subgradient(self, x):
        return float(self.a @ x + self.b), self.a.copy()

    def values(self, X):
        return X @ self.a + self.b

    def to_dict(self):
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class Quad(Atom):
    """``0.5 x'Px + a'x + b`` with ``P`` symmetric positive semidefinite."""

    P: np.ndarray
    a: np.ndarray
    b: float = 0.0
    kind = "QUAD"
    polyhedral = False

    def __post_init__(self):
        P = _mat(self.P, "QUAD.P")
        if P.shape[0] != P.shape[1]:
            raise ValueError("QUAD.P must be square")
        a = _vec(self.a, "QUAD.a")
        if a.size != P.shape[0]:
            raise ValueError("QUAD.a length does not match P")
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return self.a.size

    def psd_violation(self) -> float:
        """Most negative eigenvalue beyond the tolerance, or 0.0."""
        if self.P.size == 0:
            return 0.0
        lam_min = float(np.linalg.eigvalsh(self.P)[0])
        scale = float(np.linalg.norm(self.P, 2))
        return max(0.0, -lam_min - PSD_RTOL * scale)

    def value_and_subgradient(self, x):
        Px = self.P @ x
        return float(0.5 * x @ Px + self.a @ x + self.b), Px + self.a

    def values(self, X):
        return 0.5 * np.einsum("ni,ij,nj->n", X, self.P, X) + X @ self.a + self.b

    def to_dict(self):
        return {"kind": self.kind, "P": self.P.tolist(), "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class MaxAff(Atom):
    """``max_i (A[i] @ x + b[i])``."""

    A: np.ndarray
    b: np.ndarray
    kind = "MAXAFF"

    def __post_init__(self):
        A = _mat(self.A, "MAXAFF.A")
        b = _vec(self.b, "MAXAFF.b")
        if A.shape[0] == 0 or A.shape[0] != b.size:
            raise ValueError("MAXAFF needs at least one piece and matching b")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.A.shape[1]

    def value_and_subgradient(self, x):
        r = self.A @ x + self.b
        i = int(np.argmax(r))  # argmax returns the first maximizer
        return float(r[i]), self.A[i].copy()

    def values(self, X):
        return (X @ self.A.T + self.b).max(axis=1)

    def to_dict(self):
        return {"kind": self.kind, "A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True, eq=False)
class Hinge(Atom):
    """``max{0, a'x + b}``."""

    a: np.ndarray
    b: float = 0.0
    kind = "HINGE"

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "HINGE.a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return self.a.size

    def value_and_subgradient(self, x):
        r = float(self.a @ x + self.b)
        if r > 0.0:
            return r, self.a.copy()
        return 0.0, np.zeros_like(self.a)

    def values(self, X):
        return np.maximum(0.0, X @ self.a + self.b)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class Abs(Atom):
    """``|a'x + b|``."""

    a: np.ndarray
    b: float = 0.0
    kind = "ABS"

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "ABS.a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return self.a.size

    def value_and_subgradient(self, x):
        r = float(self.a @ x + self.b)
        if r >= 0.0:
            return r, self.a.copy()
        return -r, -self.a

    def values(self, X):
        return np.abs(X @ self.a + self.b)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class SqHingeSum(Atom):
    """``(sum_i max{0, A[i] @ x + b[i]})**2``."""

    A: np.ndarray
    b: np.ndarray
    kind = "SQHINGESUM"
    polyhedral = False

    def __post_init__(self):
        A = _mat(self.A, "SQHINGESUM.A")
        b = _vec(self.b, "SQHINGESUM.b")
        if A.shape[0] == 0 or A.shape[0] != b.size:
            raise ValueError("SQHINGESUM needs at least one hinge and matching b")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.A.shape[1]

    def value_and_subgradient(self, x):
        r = self.A @ x + self.b
        act = r > 0.0
        s = float(r[act].sum())
        g = 2.0 * s * self.A[act].sum(axis=0) if act.any() else np.zeros(self.dim)
        return s * s, g

    def values(self, X):
        return np.maximum(0.0, X @ self.A.T + self.b).sum(axis=1) ** 2

    def to_dict(self):
        return {"kind": self.kind, "A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True, eq=False)
class Zero(Atom):
    n: int
    kind = "ZERO"

    @property
    def dim(self):
        return self.n

    def value_and_subgradient(self, x):
        return 0.0, np.zeros(self.n)

    def values(self, X):
        return np.zeros(X.shape[0])

    def to_dict(self):
        return {"kind": self.kind, "dim": self.n}


ATOM_KINDS = {
    cls.kind: cls for cls in (Affine, Quad, MaxAff, Hinge, Abs, SqHingeSum, Zero)
}


def atom_from_dict(obj: dict, dim: int) -> Atom:
    kind = obj.get("kind")
    if kind not in ATOM_KINDS:
        raise ValueError(f"unknown atom kind {kind!r}")
    if kind == "ZERO":
        return Zero(int(obj.get("dim", dim)))
    if kind in ("AFFINE", "HINGE", "ABS"):
        return ATOM_KINDS[kind](obj["a"], obj.get("b", 0.0))
    if kind == "QUAD":
        return Quad(obj["P"], obj.get("a", np.zeros(dim)), obj.get("b", 0.0))
    A = np.array(obj["A"], dtype=float).reshape(-1, dim)
    return ATOM_KINDS[kind](A, obj["b"])


@dataclass(frozen=True, eq=False)
class ConvexExpr:
    """Nonnegative weighted sum of convex atoms on ``R^dim``."""

    dim: int
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple((float(w), atom) for w, atom in self.terms)
        for w, atom in terms:
            if not w >= 0.0 or not np.isfinite(w):
                raise ValueError(f"atom weight must be finite and nonnegative, got {w}")
            if atom.dim != self.dim:
                raise ValueError(f"{atom.kind} atom has dimension {atom.dim}, expected {self.dim}")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def zero(cls, dim: int) -> "ConvexExpr":
        return cls(dim, ())

    @classmethod
    def of(cls, *atoms: Atom, weights: Sequence[float] | None = None) -> "ConvexExpr":
        if not atoms:
            raise ValueError("use ConvexExpr.zero(dim) for an empty expression")
        weights = [1.0] * len(atoms) if weights is None else weights
        return cls(atoms[0].dim, tuple(zip(weights, atoms)))

    def __add__(self, other: "ConvexExpr") -> "ConvexExpr":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return ConvexExpr(self.dim, self.terms + other.terms)

    def scaled(self, w: float) -> "ConvexExpr":
        if w < 0:
            raise ValueError("scale must be nonnegative")
        return ConvexExpr(self.dim, tuple((w * c, a) for c, a in self.terms))

    @property
    def is_polyhedral(self) -> bool:
        return all(a.polyhedral for _, a in self.terms)

    def psd_violations(self) -> list[int]:
        return [i for i, (_, a) in enumerate(self.terms) if isinstance(a, Quad) and a.psd_violation() > 0]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"dimension mismatch: expected {self.dim}, got {x.size}")
        return x

    @cached_property
    def _stack(self) -> "ExprStack":
        return ExprStack([self])

    def value_and_subgradient(self, x) -> tuple[float, np.ndarray]:
        x = self._check(x)
        vals, jac = self._stack.evaluate(x)
        return float(vals[0]), jac.getrow(0).toarray().ravel()

    def value(self, x) -> float:
        x = self._check(x)
        return float(self._stack.values(x)[0])

    def values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for w, atom in self.terms:
            out += w * atom.values(X)
        return out

    def to_dict(self) -> dict:
        return {"terms": [{"weight": w, "atom": a.to_dict()} for w, a in self.terms]}

    @classmethod
    def from_dict(cls, obj: dict, dim: int) -> "ConvexExpr":
        terms = []
        for t in obj.get("terms", []):
            terms.append((t.get("weight", 1.0), atom_from_dict(t["atom"], dim)))
        return cls(dim, tuple(terms))


def value_and_subgradient(F: ConvexExpr, x) -> tuple[float, np.ndarray]:
    """Value of ``F`` at ``x`` and the tie-broken subgradient."""
    return F.value_and_subgradient(x)


def _segment_first_argmax(vals: np.ndarray, seg: np.ndarray, nseg: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment max and index of its first occurrence; ``seg`` is sorted."""
    starts = np.searchsorted(seg, np.arange(nseg))
    mx = np.maximum.reduceat(vals, starts)
    hit = np.flatnonzero(vals == mx[seg])
    _, first = np.unique(seg[hit], return_index=True)
    return mx, hit[first]


class ExprStack:
    """Vectorized evaluation of many convex expressions at one point.

    ``evaluate(x)`` returns the value of each expression and a sparse matrix
    whose rows are their subgradients, applying the module tie-break rule.
    """

    def __init__(self, exprs: Iterable[ConvexExpr]):
        exprs = list(exprs)
        if not exprs:
            raise ValueError("empty expression stack")
        d = exprs[0].dim
        if any(e.dim != d for e in exprs):
            raise ValueError("all expressions must share the dimension")
        self.dim = d
        self.n_expr = len(exprs)
        E = self.n_expr

        aff_rows, aff_b, aff_e = [], [], []
        quads = []
        mx_rows, mx_b, mx_seg, mx_atom_e, mx_atom_w = [], [], [], [], []
        hg_rows, hg_b, hg_e, hg_w = [], [], [], []
        ab_rows, ab_b, ab_e, ab_w = [], [], [], []
        sq_rows, sq_b, sq_seg, sq_atom_e, sq_atom_w = [], [], [], [], []
        for e, expr in enumerate(exprs):
            for w, atom in expr.terms:
                if w == 0.0 or isinstance(atom, Zero):
                    continue
                if isinstance(atom, Affine):
                    aff_rows.append(w * atom.a)
                    aff_b.append(w * atom.b)
                    aff_e.append(e)
                elif isinstance(atom, Quad):
                    quads.append((e, w, sp.csr_matrix(atom.P), atom.a, atom.b))
                elif isinstance(atom, MaxAff):
                    k = len(mx_atom_e)
                    mx_rows.append(atom.A)
                    mx_b.append(atom.b)
                    mx_seg.append(np.full(atom.b.size, k))
                    mx_atom_e.append(e)
                    mx_atom_w.append(w)
                elif isinstance(atom, Hinge):
                    hg_rows.append(atom.a)
                    hg_b.append(atom.b)
                    hg_e.append(e)
                    hg_w.append(w)
                elif isinstance(atom, Abs):
                    ab_rows.append(atom.a)
                    ab_b.append(atom.b)
                    ab_e.append(e)
                    ab_w.append(w)
                elif isinstance(atom, SqHingeSum):
                    k = len(sq_atom_e)
                    sq_rows.append(atom.A)
                    sq_b.append(atom.b)
                    sq_seg.append(np.full(atom.b.size, k))
                    sq_atom_e.append(e)
                    sq_atom_w.append(w)
                else:  # pragma: no cover - closed algebra
                    raise TypeError(f"unsupported atom {atom!r}")

        def incidence(rows_e, n):
            return sp.csr_matrix((np.ones(n), (np.asarray(rows_e, dtype=int), np.arange(n))), shape=(E, n))

        self._aff = None
        if aff_rows:
            M = sp.csr_matrix(np.vstack(aff_rows))
            inc = incidence(aff_e, len(aff_e))
            self._aff = (M, np.asarray(aff_b), np.asarray(aff_e), (inc @ M).tocsr())
        self._quads = quads
        self._mx = None
        if mx_rows:
            self._mx = (
                sp.csr_matrix(np.vstack(mx_rows)),
                np.concatenate(mx_b),
                np.concatenate(mx_seg),
                np.asarray(mx_atom_e),
                np.asarray(mx_atom_w),
                incidence(mx_atom_e, len(mx_atom_e)),
            )
        self._hg = None
        if hg_rows:
            self._hg = (sp.csr_matrix(np.vstack(hg_rows)), np.asarray(hg_b), np.asarray(hg_e),
                        np.asarray(hg_w), incidence(hg_e, len(hg_e)))
        self._ab = None
        if ab_rows:
            self._ab = (sp.csr_matrix(np.vstack(ab_rows)), np.asarray(ab_b), np.asarray(ab_e),
                        np.asarray(ab_w), incidence(ab_e, len(ab_e)))
        self._sq = None
        if sq_rows:
            seg = np.concatenate(sq_seg)
            nat = len(sq_atom_e)
            self._sq = (
                sp.csr_matrix(np.vstack(sq_rows)),
                np.concatenate(sq_b),
                seg,
                np.asarray(sq_atom_e),
                np.asarray(sq_atom_w),
                incidence(sq_atom_e, nat),
                sp.csr_matrix((np.ones(seg.size), (seg, np.arange(seg.size))), shape=(nat, seg.size)),
            )

    def values(self, x: np.ndarray) -> np.ndarray:
        return self._run(x, want_jac=False)[0]

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, sp.csr_matrix]:
        return self._run(x, want_jac=True)

    def _run(self, x, want_jac):
        E, d = self.n_expr, self.dim
        vals = np.zeros(E)
        parts = []
        if self._aff is not None:
            M, b, e, J = self._aff
            vals += np.bincount(e, weights=M @ x + b, minlength=E)
            parts.append(J)
        for e, w, P, a, b in self._quads:
            Px = P @ x
            vals[e] += w * (0.5 * x @ Px + a @ x + b)
            if want_jac:
                g = w * (Px + a)
                parts.append(sp.csr_matrix((g, (np.full(d, e), np.arange(d))), shape=(E, d)))
        if self._mx is not None:
            M, b, seg, ae, aw, inc = self._mx
            r = M @ x + b
            mx, idx = _segment_first_argmax(r, seg, ae.size)
            vals += np.bincount(ae, weights=aw * mx, minlength=E)
            if want_jac:
                parts.append(inc @ sp.diags(aw) @ M[idx])
        if self._hg is not None:
            M, b, e, w, inc = self._hg
            r = M @ x + b
            act = r > 0.0
            vals += np.bincount(e, weights=w * np.where(act, r, 0.0), minlength=E)
            if want_jac:
                parts.append(inc @ sp.diags(w * act) @ M)
        if self._ab is not None:
            M, b, e, w, inc = self._ab
            r = M @ x + b
            vals += np.bincount(e, weights=w * np.abs(r), minlength=E)
            if want_jac:
                sgn = np.where(r >= 0.0, 1.0, -1.0)
                parts.append(inc @ sp.diags(w * sgn) @ M)
        if self._sq is not None:
            M, b, seg, ae, aw, inc, seg_inc = self._sq
            r = M @ x + b
            act = r > 0.0
            s = seg_inc @ np.where(act, r, 0.0)
            vals += np.bincount(ae, weights=aw * s * s, minlength=E)
            if want_jac:
                row_scale = (2.0 * aw * s)[seg] * act
                parts.append(inc @ seg_inc @ sp.diags(row_scale) @ M)
        if not want_jac:
            return vals, None
        jac = sp.csr_matrix((E, d))
        for p in parts:
            jac = jac + p
        return vals, jac.tocsr()
