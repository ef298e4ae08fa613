"""Form-matrix generators for the built-in operators.

Three problem families are available:

``fourier_rank_one``
    ``T phi = a(x) phi + 10 <phi, psi_0> psi_0`` on ``L^2(-pi, pi)`` with the
    sawtooth symbol ``a(x) = -2pi - x`` on ``(-pi, 0]`` and ``2pi - x`` on
    ``(0, pi]``.  Level ``n`` is the Fourier half-width: the trial space is
    spanned by ``e^{-ikx}/sqrt(2pi)`` for ``k = -n..n`` (dimension ``2n+1``).
    The basis is orthonormal, so the mass matrix is the identity.

``block_fem``
    The block operator ``[[-d2/dx2, -d/dx], [d/dx, 2]]`` on
    ``L^2(0,1) + L^2(0,1)`` with a Dirichlet condition in the first component,
    discretised with P1 elements.  Level ``N`` is the number of uniform
    elements (``h = 1/N``).  Unknowns are ordered as the ``N-1`` interior nodal
    values of the first component followed by the ``N+1`` nodal values of the
    second.

``synthetic_dense``
    ``T = U^H diag(eigenvalues) U`` with a seeded random unitary ``U``.  Level
    ``k`` uses the first ``k`` coordinate vectors as trial basis (so the last
    level, ``k = len(eigenvalues)``, is the exact operator).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import LinalgError, cholesky, is_hermitian

FOURIER = "fourier_rank_one"
BLOCK_FEM = "block_fem"
SYNTHETIC = "synthetic_dense"
KINDS = (FOURIER, BLOCK_FEM, SYNTHETIC)

# Reference eigenvalues of the Fourier example (8 printed digits).
FOURIER_LAMBDA1 = -1.64834270
FOURIER_LAMBDA2 = 11.97518502


class ProblemError(ValueError):
    pass


@dataclass
class FormMatrices:
    """Matrices of the forms restricted to a trial space.

    ``t_hat[i, j] = t(phi_j, phi_i)``, ``mass[i, j] = <phi_j, phi_i>`` and, when
    present, ``a_hat[i, j] = <A phi_j, phi_i>``.
    """

    t_hat: np.ndarray
    mass: np.ndarray
    a_hat: Optional[np.ndarray] = None
    space_id: str = ""

    def __post_init__(self):
        self.t_hat = np.asarray(self.t_hat, dtype=complex)
        self.mass = np.asarray(self.mass, dtype=complex)
        if self.a_hat is not None:
            self.a_hat = np.asarray(self.a_hat, dtype=complex)

    @property
    def dim(self) -> int:
        return self.t_hat.shape[0]

    def validate(self) -> "FormMatrices":
        """Check shapes, Hermiticity of ``t_hat`` and ``mass`` and positivity of ``mass``.

        Raises :class:`ProblemError` naming the first violated check.
        """
        n = self.t_hat.shape[0] if self.t_hat.ndim == 2 else -1
        shapes = [self.t_hat.shape, self.mass.shape]
        if self.a_hat is not None:
            shapes.append(self.a_hat.shape)
        if n <= 0 or any(s != (n, n) for s in shapes):
            raise ProblemError(f"dimension mismatch: {shapes}")
        for name, mat in (("t_hat", self.t_hat), ("mass", self.mass), ("a_hat", self.a_hat)):
            if mat is not None and not np.all(np.isfinite(mat)):
                raise ProblemError(f"{name} has non-finite entries")
        if not is_hermitian(self.t_hat):
            raise ProblemError("t_hat is not Hermitian")
        if not is_hermitian(self.mass):
            raise ProblemError("mass is not Hermitian")
        try:
            cholesky(self.mass, "mass")
        except LinalgError as exc:
            raise ProblemError(str(exc)) from exc
        return self

    def mass_condition(self) -> float:
        return float(np.linalg.cond(self.mass))


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    eigenvalues: tuple = ()
    seed: int = 0
    n_branches: int = 8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProblemError(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == SYNTHETIC:
            ev = tuple(float(v) for v in self.eigenvalues)
            if not ev:
                raise ProblemError("synthetic_dense needs a non-empty eigenvalue list")
            object.__setattr__(self, "eigenvalues", ev)

    @classmethod
    def fourier(cls) -> "ProblemSpec":
        return cls(FOURIER)

    @classmethod
    def block_fem(cls, n_branches: int = 8) -> "ProblemSpec":
        return cls(BLOCK_FEM, n_branches=n_branches)

    @classmethod
    def synthetic(cls, eigenvalues, seed: int = 0) -> "ProblemSpec":
        return cls(SYNTHETIC, eigenvalues=tuple(eigenvalues), seed=seed)

    def check_level(self, level: Optional[int]) -> int:
        if self.kind == SYNTHETIC:
            n = len(self.eigenvalues)
            if level is None:
                return n
            if not 1 <= level <= n:
                raise ProblemError(f"synthetic level must be in 1..{n}, got {level}")
            return int(level)
        if level is None or int(level) != level:
            raise ProblemError(f"{self.kind} needs an integer level, got {level!r}")
        level = int(level)
        if self.kind == FOURIER and level < 1:
            raise ProblemError(f"Fourier half-width must be >= 1, got {level}")
        if self.kind == BLOCK_FEM and level < 2:
            raise ProblemError(f"number of elements 1/h must be >= 2, got {level}")
        return level

    def dim(self, level: Optional[int]) -> int:
        level = self.check_level(level)
        if self.kind == FOURIER:
            return 2 * level + 1
        if self.kind == BLOCK_FEM:
            return 2 * level
        return level


@dataclass
class NestedSpaces:
    coarse_dim: int
    fine_dim: int
    embedding: np.ndarray  # fine_dim x coarse_dim


@dataclass
class CrossForms:
    """Forms between a fine test space and a coarse trial space.

    ``mass[i, k] = <psi_k, phi_i>`` and ``t_hat[i, k] = t(psi_k, phi_i)`` with
    ``phi`` the fine and ``psi`` the coarse basis.  Nothing requires the coarse
    space to lie inside the fine one.
    """

    mass: np.ndarray
    t_hat: np.ndarray


@dataclass
class ReferenceSpectrum:
    eigenvalues: list = field(default_factory=list)  # (value, multiplicity)
    essential: list = field(default_factory=list)  # closed intervals (lo, hi)

    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.eigenvalues], dtype=float)


# --------------------------------------------------------------------- Fourier

def sawtooth_fourier_coefficient(m):
    """``(1/2pi) int_{-pi}^{pi} a(x) e^{imx} dx`` for integer ``m``.

    Splitting ``a(x) = -x + 2pi sign(x)`` gives ``i (2 - (-1)^m) / m`` for
    ``m != 0`` and ``0`` for ``m = 0``.
    """
    m = np.asarray(m)
    safe = np.where(m == 0, 1, m)
    sign = np.where(m % 2 == 0, 1.0, -1.0)
    return np.where(m == 0, 0.0, 1j * (2.0 - sign) / safe)


def sawtooth(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, -2 * np.pi - x, 2 * np.pi - x)


def _fourier_forms(n: int) -> FormMatrices:
    k = np.arange(-n, n + 1)
    t = sawtooth_fourier_coefficient(k[:, None] - k[None, :]).astype(complex)
    t[n, n] += 10.0
    return FormMatrices(t, np.eye(2 * n + 1, dtype=complex), space_id=f"{FOURIER}:n={n}")


# ------------------------------------------------------------------------- FEM

def p1_matrices(N: int):
    """Full P1 matrices on ``N`` uniform elements of ``[0, 1]`` (all ``N+1`` nodes).

    Returns ``(stiffness, mass, coupling)`` with
    ``coupling[i, j] = int phi_j phi_i'``.
    """
    h = 1.0 / N
    e = np.arange(N)
    rows = np.stack([e, e, e + 1, e + 1], axis=1)
    cols = np.stack([e, e + 1, e, e + 1], axis=1)
    k_loc = np.array([1.0, -1.0, -1.0, 1.0]) / h
    m_loc = np.array([2.0, 1.0, 1.0, 2.0]) * h / 6.0
    # test derivative (-1/h, +1/h) times int of trial hat (h/2)
    c_loc = np.array([-0.5, -0.5, 0.5, 0.5])
    K = np.zeros((N + 1, N + 1))
    M = np.zeros((N + 1, N + 1))
    C = np.zeros((N + 1, N + 1))
    for mat, loc in ((K, k_loc), (M, m_loc), (C, c_loc)):
        np.add.at(mat, (rows.ravel(), cols.ravel()), np.tile(loc, N))
    return K, M, C


def _fem_forms(N: int) -> FormMatrices:
    K, M, C = p1_matrices(N)
    inner = slice(1, N)
    n1, n2 = N - 1, N + 1
    t = np.block([[K[inner, inner], C[inner, :]],
                  [C[inner, :].T, 2.0 * M]])
    mass = np.block([[M[inner, inner], np.zeros((n1, n2))],
                     [np.zeros((n2, n1)), M]])
    return FormMatrices(t.astype(complex), mass.astype(complex), space_id=f"{BLOCK_FEM}:N={N}")


def _p1_eval(N: int, x: np.ndarray):
    """Values and derivatives of all ``N+1`` hat functions at points ``x``."""
    x = np.asarray(x, dtype=float)
    e = np.minimum((x * N).astype(int), N - 1)
    s = x * N - e
    val = np.zeros((len(x), N + 1))
    der = np.zeros((len(x), N + 1))
    r = np.arange(len(x))
    val[r, e] = 1.0 - s
    val[r, e + 1] = s
    der[r, e] = -N
    der[r, e + 1] = N
    return val, der


def _fem_cross(N_coarse: int, N_fine: int) -> CrossForms:
    breaks = np.union1d(np.linspace(0, 1, N_coarse + 1), np.linspace(0, 1, N_fine + 1))
    # merge breakpoints that coincide up to rounding
    breaks = breaks[np.concatenate([[True], np.diff(breaks) > 1e-14])]
    breaks[-1] = 1.0
    lo, hi = breaks[:-1], breaks[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    g = 1.0 / np.sqrt(3.0)
    x = np.concatenate([mid - g * half, mid + g * half])
    w = np.concatenate([half, half])
    vf, df = _p1_eval(N_fine, x)
    vc, dc = _p1_eval(N_coarse, x)
    If, Ic = slice(1, N_fine), slice(1, N_coarse)
    wvf, wdf = w[:, None] * vf, w[:, None] * df
    mass = np.block([[wvf[:, If].T @ vc[:, Ic], np.zeros((N_fine - 1, N_coarse + 1))],
                     [np.zeros((N_fine + 1, N_coarse - 1)), wvf.T @ vc]])
    t = np.block([[wdf[:, If].T @ dc[:, Ic], wdf[:, If].T @ vc],
                  [wvf.T @ dc[:, Ic], 2.0 * (wvf.T @ vc)]])
    return CrossForms(mass.astype(complex), t.astype(complex))


def _p1_interpolation(N_coarse: int, N_fine: int) -> np.ndarray:
    xf = np.linspace(0.0, 1.0, N_fine + 1)
    vals, _ = _p1_eval(N_coarse, xf)
    return vals


def block_fem_eigenvalue(k: int, sign: int) -> float:
    """Closed-form discrete eigenvalue ``lambda_k^+`` (``sign=+1``) or ``lambda_k^-``."""
    kp = (k * np.pi) ** 2
    return 0.5 * (2.0 + kp + sign * np.sqrt((kp + 2.0) ** 2 - 4.0 * kp))


# ------------------------------------------------------------------- synthetic

def synthetic_operator(problem: ProblemSpec):
    """Return ``(T, eigvecs)`` with ``T eigvecs = eigvecs diag(eigenvalues)``."""
    lam = np.asarray(problem.eigenvalues, dtype=float)
    n = len(lam)
    rng = np.random.default_rng(problem.seed)
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Qm, R = np.linalg.qr(Z)
    U = Qm * (np.diag(R) / np.abs(np.diag(R)))
    T = U.conj().T @ (lam[:, None] * U)
    T = 0.5 * (T + T.conj().T)
    return T, U.conj().T


# ------------------------------------------------------------------ public API

def assemble(problem: ProblemSpec, level: Optional[int] = None) -> FormMatrices:
    level = problem.check_level(level)
    if problem.kind == FOURIER:
        return _fourier_forms(level)
    if problem.kind == BLOCK_FEM:
        return _fem_forms(level)
    T, _ = synthetic_operator(problem)
    return FormMatrices(T[:level, :level].copy(), np.eye(level, dtype=complex),
                        space_id=f"{SYNTHETIC}:seed={problem.seed}:k={level}")


def is_nested(problem: ProblemSpec, coarse: Optional[int], fine: Optional[int]) -> bool:
    coarse, fine = problem.check_level(coarse), problem.check_level(fine)
    if problem.kind == BLOCK_FEM:
        return fine % coarse == 0
    return coarse <= fine


def embed(problem: ProblemSpec, coarse: Optional[int], fine: Optional[int]) -> NestedSpaces:
    """Embedding of coarse coefficient vectors into the fine space."""
    if not is_nested(problem, coarse, fine):
        raise ProblemError(f"levels {coarse} -> {fine} are not nested for {problem.kind}")
    coarse, fine = problem.check_level(coarse), problem.check_level(fine)
    nc, nf = problem.dim(coarse), problem.dim(fine)
    if problem.kind == FOURIER:
        E = np.zeros((nf, nc))
        off = fine - coarse
        E[off:off + nc, :] = np.eye(nc)
    elif problem.kind == BLOCK_FEM:
        P = _p1_interpolation(coarse, fine)
        E = np.zeros((nf, nc))
        E[:fine - 1, :coarse - 1] = P[1:fine, 1:coarse]
        E[fine - 1:, coarse - 1:] = P
    else:
        E = np.eye(nf, nc)
    return NestedSpaces(nc, nf, E.astype(complex))


def couple(problem: ProblemSpec, coarse: Optional[int], fine: Optional[int]) -> CrossForms:
    """Cross form matrices between the fine (test) and coarse (trial) spaces."""
    if problem.kind == BLOCK_FEM:
        return _fem_cross(problem.check_level(coarse), problem.check_level(fine))
    nest = embed(problem, coarse, fine)
    fm = assemble(problem, fine)
    return CrossForms(fm.mass @ nest.embedding, fm.t_hat @ nest.embedding)


def reference_spectrum(problem: ProblemSpec) -> ReferenceSpectrum:
    if problem.kind == FOURIER:
        return ReferenceSpectrum(
            [(FOURIER_LAMBDA1, 1), (FOURIER_LAMBDA2, 1)],
            [(-2 * np.pi, -np.pi), (np.pi, 2 * np.pi)],
        )
    if problem.kind == BLOCK_FEM:
        ev = [(block_fem_eigenvalue(k, -1), 1) for k in range(1, problem.n_branches + 1)]
        ev.append((2.0, 1))
        ev += [(block_fem_eigenvalue(k, +1), 1) for k in range(1, problem.n_branches + 1)]
        ev.sort()
        return ReferenceSpectrum(ev, [(1.0, 1.0)])
    vals, counts = np.unique(np.asarray(problem.eigenvalues), return_counts=True)
    return ReferenceSpectrum([(float(v), int(c)) for v, c in zip(vals, counts)], [])
