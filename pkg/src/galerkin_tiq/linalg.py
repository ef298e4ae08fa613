"""Dense complex eigensolvers for matrix pencils ``A x = z B x``.

Matrices are plain :class:`numpy.ndarray` objects (row-major, ``complex128``).
Every routine reduces the pencil to a standard problem through the Cholesky
factor ``B = L L^H`` and reports residuals it actually computed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack


class LinalgError(ValueError):
    """Base class for failures of the dense kernel."""


class DimensionMismatchError(LinalgError):
    pass


class NotPositiveDefiniteError(LinalgError):
    """Cholesky factorisation failed; ``pivot`` is the 0-based failing index."""

    def __init__(self, pivot: int, what: str = "B"):
        self.pivot = pivot
        super().__init__(f"{what} is not positive definite (Cholesky failed at pivot {pivot})")


class ConvergenceError(LinalgError):
    """QR iteration failed; eigenvalues ``index+1 .. n-1`` are the only converged ones."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"QR iteration failed to converge; eigenvalue {index} unconverged")


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray
    residual_norms: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual_norms, initial=0.0))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``a`` to a finite 2-D complex array."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise DimensionMismatchError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinalgError(f"{name} has non-finite entries")
    return a


def _check_pencil(A, B):
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise DimensionMismatchError(f"pencil shapes differ or are not square: {A.shape}, {B.shape}")
    return A, B


def is_hermitian(A: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.linalg.norm(A), 1.0)
    return np.linalg.norm(A - A.conj().T) <= rtol * scale


def cholesky(B, what: str = "B") -> np.ndarray:
    """Lower Cholesky factor of a Hermitian positive-definite matrix.

    Raises :class:`NotPositiveDefiniteError` naming the failing pivot.
    """
    B = as_matrix(B, what)
    if B.shape[0] != B.shape[1]:
        raise DimensionMismatchError(f"{what} must be square, got {B.shape}")
    L, info = lapack.zpotrf(B, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1, what)
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise LinalgError(f"zpotrf illegal argument {-info}")
    return L


def whiten(A: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Return ``L^{-1} A L^{-H}``."""
    X = sla.solve_triangular(L, A, lower=True)
    return sla.solve_triangular(L, X.conj().T, lower=True).conj().T


def _order(values: np.ndarray) -> np.ndarray:
    return np.lexsort((values.imag, values.real))


def pencil_residuals(A, B, values, vectors) -> np.ndarray:
    """``||A v - z B v|| / ||v||_B`` for every column ``v``."""
    BV = B @ vectors
    R = A @ vectors - BV * values[np.newaxis, :]
    bnorm = np.sqrt(np.abs(np.einsum("ij,ij->j", vectors.conj(), BV)))
    return np.linalg.norm(R, axis=0) / np.where(bnorm > 0, bnorm, 1.0)


def hermitian_generalized_eig(A, B) -> EigenPairs:
    """Eigenpairs of the Hermitian pencil ``(A, B)`` with ``B`` positive definite.

    Values ascend; eigenvectors are ``B``-orthonormal.
    """
    A, B = _check_pencil(A, B)
    if not is_hermitian(A):
        raise LinalgError("A is not Hermitian")
    if not is_hermitian(B):
        raise LinalgError("B is not Hermitian")
    L = cholesky(B)
    C = whiten(A, L)
    C = 0.5 * (C + C.conj().T)
    w, Y = sla.eigh(C)
    X = sla.solve_triangular(L, Y, lower=True, trans="C")
    res = pencil_residuals(A, B, w.astype(complex), X)
    return EigenPairs(values=w.astype(float), vectors=X, residual_norms=res)


def _zgeev(C: np.ndarray, vectors: bool):
    w, _, vr, info = lapack.zgeev(C, compute_vl=0, compute_vr=int(vectors), overwrite_a=0)
    if info > 0:
        raise ConvergenceError(info - 1)
    if info < 0:  # pragma: no cover
        raise LinalgError(f"zgeev illegal argument {-info}")
    return w, vr


def general_pencil_eig(A, B, vectors: bool = True) -> EigenPairs:
    """Eigenpairs of ``A x = z B x`` for arbitrary ``A`` and Hermitian positive-definite ``B``.

    The pencil is reduced to ``L^{-1} A L^{-H}`` and handed to the Hessenberg/QR
    solver.  Ordering is by real part, then imaginary part.  Eigenvectors are
    normalised to unit ``B``-norm.  With ``vectors=False`` only the values are
    computed and ``residual_norms`` is filled with NaN.
    """
    A, B = _check_pencil(A, B)
    if not is_hermitian(B):
        raise LinalgError("B is not Hermitian")
    L = cholesky(B)
    C = whiten(A, L)
    w, Y = _zgeev(C, vectors)
    idx = _order(w)
    w = w[idx]
    if not vectors:
        n = len(w)
        return EigenPairs(values=w, vectors=np.empty((n, 0), dtype=complex),
                          residual_norms=np.full(n, np.nan))
    Y = Y[:, idx]
    Y = Y / np.linalg.norm(Y, axis=0)
    X = sla.solve_triangular(L, Y, lower=True, trans="C")
    res = pencil_residuals(A, B, w, X)
    return EigenPairs(values=w, vectors=X, residual_norms=res)


def smallest_singular_value(A) -> float:
    A = as_matrix(A, "A")
    return float(sla.svdvals(A)[-1])
