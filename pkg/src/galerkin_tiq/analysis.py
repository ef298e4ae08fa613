"""Verification helpers: subspace gaps, projection defects and rate fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .dissipative import ProjectionQ
from .linalg import cholesky
from .problems import FormMatrices


class AnalysisError(ValueError):
    pass


def _orth_in(U: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Orthonormal basis (Euclidean) of ``L^H span(U)``."""
    Y = L.conj().T @ np.asarray(U, dtype=complex)
    Qm, R = np.linalg.qr(Y)
    d = np.abs(np.diag(R))
    if len(d) == 0 or d.min() <= 1e-12 * max(d.max(), 1e-300):
        raise AnalysisError("rank-deficient basis")
    return Qm


def subspace_gap(U, V, inner=None, symmetric: bool = False) -> float:
    """``delta(span U, span V) = sup_{x in U, |x|=1} dist(x, V)`` in the ``inner`` norm.

    ``inner`` is a Hermitian positive-definite Gram matrix (identity if
    omitted).  ``symmetric=True`` returns ``max(delta(U,V), delta(V,U))``.
    """
    U = np.atleast_2d(np.asarray(U, dtype=complex))
    V = np.atleast_2d(np.asarray(V, dtype=complex))
    n = U.shape[0]
    L = np.eye(n) if inner is None else cholesky(inner, "inner")
    Qu, Qv = _orth_in(U, L), _orth_in(V, L)

    def one_way(A, B):
        return float(min(1.0, np.linalg.norm(A - B @ (B.conj().T @ A), 2)))

    gap = one_way(Qu, Qv)
    if symmetric:
        gap = max(gap, one_way(Qv, Qu))
    return gap


def t_inner(fm: FormMatrices, lower_bound: float) -> np.ndarray:
    """Gram matrix of ``<x, y>_t = (t - m)(x, y) + <x, y>`` with ``m`` a lower bound."""
    return fm.t_hat - (lower_bound - 1.0) * fm.mass


def projection_defect(q: ProjectionQ, exact_basis, mass) -> float:
    """``||(I - Q) E||`` for the exact spectral projection ``E`` onto ``span(exact_basis)``.

    Requires ``q.coeffs`` (the range of ``Q`` inside the space).  Computed as
    the largest singular value of ``(I - Q)`` applied to an ``M``-orthonormal
    basis of the exact eigenspace, measured in the ``M`` norm.
    """
    if q.coeffs is None:
        raise AnalysisError("projection has no coefficient representation in this space")
    mass = np.asarray(mass, dtype=complex)
    L = cholesky(mass, "mass")
    X = np.asarray(exact_basis, dtype=complex)
    # M-orthonormalise the exact basis through its whitened QR factor
    Qx = sla.solve_triangular(L, _orth_in(X, L), lower=True, trans="C")
    C = q.coeffs
    resid = Qx - C @ (C.conj().T @ (mass @ Qx))
    if resid.shape[1] == 0:
        return 0.0
    return float(sla.svdvals(L.conj().T @ resid)[0])


@dataclass
class RateFit:
    levels: list  # (level, error)
    slope: float
    intercept: float
    r_squared: float

    def predict(self, level: float) -> float:
        return float(np.exp(self.intercept) * level ** self.slope)


def fit_rate(series) -> RateFit:
    """Least-squares fit of ``log(error) = intercept + slope * log(level)``."""
    pts = [(float(l), float(e)) for l, e in series]
    if len(pts) < 4:
        raise AnalysisError(f"need at least 4 points, got {len(pts)}")
    lv = np.array([p[0] for p in pts])
    err = np.array([p[1] for p in pts])
    if np.any(err <= 0) or np.any(lv <= 0):
        raise AnalysisError("levels and errors must be positive")
    x, y = np.log(lv), np.log(err)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ np.array([slope, intercept])) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(pts, float(slope), float(intercept), r2)
