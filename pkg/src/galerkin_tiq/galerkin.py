"""Stage one: Galerkin spectra, the regularity probe and window selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import (EigenPairs, cholesky, general_pencil_eig, hermitian_generalized_eig,
                     smallest_singular_value, whiten)
from .problems import FormMatrices


class WindowError(ValueError):
    pass


@dataclass
class Spectrum:
    pairs: EigenPairs
    space_id: str = ""
    hermitian: bool = False
    # set for the inverse pencil: values are z, and 1/z live in the resolvent plane
    gamma: Optional[float] = None

    @property
    def values(self) -> np.ndarray:
        return self.pairs.values

    @property
    def vectors(self) -> np.ndarray:
        return self.pairs.vectors

    def resolvent_values(self) -> np.ndarray:
        """``1/z`` for the inverse pencil, or ``1/(lambda - gamma)`` when ``gamma`` is set."""
        if self.gamma is None:
            raise ValueError("spectrum carries no inverse shift")
        return 1.0 / np.asarray(self.values)

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class SpectralWindow:
    """Closed real interval ``[a, b]``.

    With ``gamma`` set the window lives in the resolvent variable
    ``w = 1/(lambda - gamma)`` and selects ``lambda`` with
    ``1/b + gamma <= lambda <= 1/a + gamma``.
    """

    a: float
    b: float
    gamma: Optional[float] = None

    def __post_init__(self):
        if not self.a < self.b:
            raise WindowError(f"window needs a < b, got [{self.a}, {self.b}]")
        if self.gamma is not None and self.a <= 0:
            raise WindowError("an inverse-mode window must lie in (0, inf)")

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x >= self.a) & (x <= self.b)

    def check_gamma(self, lower_bound: float) -> None:
        """Require ``gamma < lower_bound`` (a lower bound of the operator spectrum)."""
        if self.gamma is not None and not self.gamma < lower_bound:
            raise WindowError(f"gamma={self.gamma} is not below min spectrum {lower_bound}")


@dataclass
class Selection:
    indices: np.ndarray
    values: np.ndarray  # in the window variable
    vectors: np.ndarray  # M-orthonormal columns
    reorthonormalized: bool = False

    @property
    def empty(self) -> bool:
        return len(self.indices) == 0

    def __len__(self) -> int:
        return len(self.indices)


def spectrum_of_t(fm: FormMatrices) -> Spectrum:
    return Spectrum(hermitian_generalized_eig(fm.t_hat, fm.mass), fm.space_id, hermitian=True)


def spectrum_of_t_plus_a(fm: FormMatrices) -> Spectrum:
    if fm.a_hat is None:
        raise ValueError(f"FormMatrices {fm.space_id!r} has no perturbation matrix a_hat")
    return Spectrum(general_pencil_eig(fm.t_hat + fm.a_hat, fm.mass), fm.space_id)


def sigma_n(fm: FormMatrices, z: complex) -> float:
    """Smallest singular value of the whitened shifted pencil ``L^{-1}(T + A - zM)L^{-H}``."""
    S = fm.t_hat if fm.a_hat is None else fm.t_hat + fm.a_hat
    L = cholesky(fm.mass, "mass")
    return smallest_singular_value(whiten(S - z * fm.mass, L))


def m_orthonormalize(V: np.ndarray, M: np.ndarray, passes: int = 2, rtol: float = 1e-10):
    """Modified Gram-Schmidt in the ``M`` inner product, ``passes`` sweeps.

    Returns the orthonormal columns; raises ``np.linalg.LinAlgError`` on a
    numerically dependent column.
    """
    Q = np.array(V, dtype=complex, copy=True)
    k = Q.shape[1]
    norms0 = np.sqrt(np.abs(np.einsum("ij,ij->j", Q.conj(), M @ Q)))
    for _ in range(passes):
        for j in range(k):
            for i in range(j):
                Q[:, j] -= (Q[:, i].conj() @ (M @ Q[:, j])) * Q[:, i]
            nrm = np.sqrt(abs(Q[:, j].conj() @ (M @ Q[:, j])))
            if nrm <= rtol * max(norms0[j], 1e-300):
                raise np.linalg.LinAlgError(f"column {j} is numerically dependent")
            Q[:, j] /= nrm
    return Q


def orthonormality_defect(V: np.ndarray, M: np.ndarray) -> float:
    k = V.shape[1]
    return float(np.linalg.norm(V.conj().T @ M @ V - np.eye(k)))


def select_window(spec: Spectrum, window: SpectralWindow, mass: Optional[np.ndarray] = None,
                  tol: float = 1e-10) -> Selection:
    """Eigenpairs of a Hermitian spectrum inside ``window`` (endpoints included).

    In inverse mode (``window.gamma`` set) the test is on
    ``1/(lambda - gamma)`` and ``gamma`` must lie below every eigenvalue.
    Pass ``mass`` to have the selected vectors re-orthonormalised when their
    ``M``-orthonormality defect exceeds ``tol``.
    """
    if not spec.hermitian:
        raise WindowError("window selection needs a Hermitian spectrum")
    lam = np.real(spec.values)
    if window.gamma is not None:
        if len(lam):
            window.check_gamma(lam.min())
        x = 1.0 / (lam - window.gamma)
    else:
        x = lam
    idx = np.flatnonzero(window.contains(x))
    V = spec.vectors[:, idx]
    redone = False
    if mass is not None and len(idx) and orthonormality_defect(V, mass) > tol:
        V = m_orthonormalize(V, mass)
        redone = True
    return Selection(idx, x[idx], V, redone)


def inverse_values(spec: Spectrum, gamma: float) -> np.ndarray:
    """Galerkin eigenvalues of the shifted resolvent, ``1/(lambda - gamma)``."""
    lam = np.real(spec.values)
    if len(lam) and not gamma < lam.min():
        raise WindowError(f"gamma={gamma} is not below min spectrum {lam.min()}")
    return 1.0 / (lam - gamma)
