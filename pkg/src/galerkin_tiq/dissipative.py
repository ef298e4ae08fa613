"""Stage two: the dissipative problem ``T + iQ`` and what it tells us about ``T``.

``Q`` is the orthogonal projection onto the span of stage-one eigenvectors
chosen by a spectral window.  Eigenvalues of ``T`` inside the window reappear
near ``lambda + i``, away from the real axis where spurious Galerkin
eigenvalues live.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .galerkin import Selection, Spectrum, SpectralWindow, m_orthonormalize
from .linalg import (EigenPairs, LinalgError, NotPositiveDefiniteError, cholesky,
                     general_pencil_eig)
from .problems import CrossForms, FormMatrices, NestedSpaces

DEFAULT_IM_THRESHOLD = 0.5
MAX_RADIUS = 0.45
NUMERICAL_RANGE_TOL = 1e-8


class ProjectionError(ValueError):
    pass


class ClusterError(ValueError):
    pass


class LocalizationError(ValueError):
    pass


@dataclass
class ProjectionQ:
    """A finite-rank orthogonal projection seen from a fine trial space.

    Let ``u_1..u_r`` be the (``M``-orthonormal) vectors spanning the range and
    ``phi_i`` the fine basis.  The fields hold ``tested_mass[i, k] = <u_k, phi_i>``,
    ``tested_form[i, k] = t(u_k, phi_i)``, ``gram_form[l, k] = t(u_k, u_l)`` and
    ``gram_block = tested_mass tested_mass^H``, i.e. ``<Q phi_j, phi_i>``.
    ``coeffs`` are the fine coefficients of the ``u_k`` and are only
    available when the range lies inside the fine space.
    """

    tested_mass: np.ndarray
    tested_form: np.ndarray
    gram_form: np.ndarray
    coeffs: Optional[np.ndarray] = None

    @property
    def rank(self) -> int:
        return self.tested_mass.shape[1]

    @property
    def gram_block(self) -> np.ndarray:
        W = self.tested_mass
        return W @ W.conj().T

    @classmethod
    def zero(cls, fine_dim: int) -> "ProjectionQ":
        empty = np.zeros((fine_dim, 0), dtype=complex)
        return cls(empty, empty.copy(), np.zeros((0, 0), dtype=complex),
                   coeffs=empty.copy())


def build_projection(vectors, fine: FormMatrices, nesting: Optional[NestedSpaces] = None,
                     cross: Optional[CrossForms] = None,
                     coarse: Optional[FormMatrices] = None) -> ProjectionQ:
    """Projection onto the span of coarse coefficient vectors, expressed on ``fine``.

    With ``nesting`` the vectors are embedded and re-orthonormalised in the
    fine mass inner product.  Without it, ``cross`` (fine x coarse form
    matrices) and the ``coarse`` form matrices are needed.  A ``Selection``
    may be passed in place of raw vectors.
    """
    if isinstance(vectors, Selection):
        vectors = vectors.vectors
    U = np.asarray(vectors, dtype=complex)
    if U.ndim != 2:
        raise ProjectionError("vectors must be a 2-D array of columns")
    if U.shape[1] == 0:
        return ProjectionQ.zero(fine.dim)
    if nesting is not None:
        if nesting.embedding.shape != (fine.dim, U.shape[0]):
            raise ProjectionError(
                f"embedding {nesting.embedding.shape} does not map {U.shape[0]} -> {fine.dim}")
        try:
            C = m_orthonormalize(nesting.embedding @ U, fine.mass)
        except np.linalg.LinAlgError as exc:
            raise ProjectionError(f"rank deficient after embedding: {exc}") from exc
        TC = fine.t_hat @ C
        return ProjectionQ(fine.mass @ C, TC, C.conj().T @ TC, coeffs=C)
    if cross is None or coarse is None:
        raise ProjectionError("non-nested spaces need both cross and coarse form matrices")
    if cross.mass.shape != (fine.dim, coarse.dim) or U.shape[0] != coarse.dim:
        raise ProjectionError("cross form shapes do not match the spaces")
    try:
        U = m_orthonormalize(U, coarse.mass)
    except np.linalg.LinAlgError as exc:
        raise ProjectionError(f"rank deficient coarse vectors: {exc}") from exc
    return ProjectionQ(cross.mass @ U, cross.t_hat @ U, U.conj().T @ coarse.t_hat @ U)


def dissipative_spectrum(fine: FormMatrices, q: ProjectionQ, vectors: bool = True) -> Spectrum:
    """Galerkin spectrum of ``T + iQ`` on ``fine``: the pencil ``(T + iG, M)``."""
    if q.tested_mass.shape[0] != fine.dim:
        raise ProjectionError(f"projection lives on dim {q.tested_mass.shape[0]}, space has {fine.dim}")
    pairs = general_pencil_eig(fine.t_hat + 1j * q.gram_block, fine.mass, vectors=vectors)
    return Spectrum(pairs, fine.space_id + "+iQ")


def inverse_dissipative_spectrum(fine: FormMatrices, q: ProjectionQ, gamma: float,
                                 vectors: bool = True) -> Spectrum:
    """Solve ``A1 x = z (M + iR) x`` with ``A1 = T - gamma M``.

    ``R = V (U^H A1 U)^{-1} V^H`` where ``V`` holds ``(t - gamma)(u_k, phi_i)``;
    for ``A1``-orthogonal ``u_k`` it is the sum ``sum_k v_k v_k^H / d_k``.  The
    returned spectrum carries ``z`` values; ``resolvent_values()`` gives
    ``w = 1/z``, the Galerkin eigenvalues of ``(T - gamma)^{-1} + iQ``.

    Numerically the equivalent pencil ``(M + iR) x = w A1 x`` is solved, whose
    right-hand matrix is Hermitian positive definite.
    """
    gamma = float(gamma)
    A1 = fine.t_hat - gamma * fine.mass
    try:
        cholesky(A1, "T - gamma M")
    except NotPositiveDefiniteError as exc:
        raise LinalgError(f"T - gamma M is not positive definite for gamma={gamma} "
                          f"(pivot {exc.pivot})") from exc
    B = fine.mass.astype(complex)
    if q.rank:
        V = q.tested_form - gamma * q.tested_mass
        D = q.gram_form - gamma * np.eye(q.rank)
        D = 0.5 * (D + D.conj().T)
        try:
            cholesky(D, "coarse t - gamma")
        except NotPositiveDefiniteError as exc:
            raise LinalgError(f"coarse form shifted by gamma={gamma} is not positive definite") from exc
        R = V @ np.linalg.solve(D, V.conj().T)
        R = 0.5 * (R + R.conj().T)
        B = B + 1j * R
    wp = general_pencil_eig(B, A1, vectors=vectors)
    z = 1.0 / wp.values
    order = np.lexsort((z.imag, z.real))
    z = z[order]
    if vectors:
        X = wp.vectors[:, order]
        Res = A1 @ X - (B @ X) * z[np.newaxis, :]
        nrm = np.sqrt(np.abs(np.einsum("ij,ij->j", X.conj(), A1 @ X)))
        res = np.linalg.norm(Res, axis=0) / nrm
    else:
        X = wp.vectors
        res = wp.residual_norms
    return Spectrum(EigenPairs(z, X, res), fine.space_id + "+iQ(inverse)", gamma=gamma)


# ------------------------------------------------------------------ localization

def localize(z: complex, window: Optional[tuple] = None,
             tol: float = NUMERICAL_RANGE_TOL) -> tuple:
    """Real interval containing a point of ``sigma(T)`` given ``z`` in ``sigma(T + iQ)``.

    The default enclosure is ``Re z +- sqrt(Im z (1 - Im z))``.  When
    ``window=(a, b)`` is known to hold exactly one eigenvalue, the sharper
    interval ``(Re z - y(1-y)/(b - Re z), Re z + y(1-y)/(Re z - a))`` is used if
    it fits inside the window.
    """
    z = complex(z)
    y = z.imag
    if y < -tol or y > 1.0 + tol:
        raise LocalizationError(f"Im z = {y} is outside the numerical range [0, 1]")
    y = min(max(y, 0.0), 1.0)
    x = z.real
    q = y * (1.0 - y)
    if window is not None:
        a, b = window
        if a < x < b:
            lo, hi = x - q / (b - x), x + q / (x - a)
            if a < lo and hi < b:
                return (lo, hi)
    r = np.sqrt(q)
    return (x - r, x + r)


# --------------------------------------------------------------------- clusters

@dataclass
class Cluster:
    target: Optional[float]
    members: list
    mean: complex
    localization: tuple

    @property
    def multiplicity(self) -> int:
        return len(self.members)


@dataclass
class ClusterReport:
    clusters: list
    unassigned: list
    unexpected: list = field(default_factory=list)  # Im >= threshold but near no target
    echoes: list = field(default_factory=list)  # 0 < Im < threshold
    radius: float = 0.0
    im_threshold: float = DEFAULT_IM_THRESHOLD


def default_radius(targets: Sequence[float], window: Optional[tuple] = None) -> float:
    """Half the smallest target spacing, capped at ``MAX_RADIUS``.

    With a window ``(a, b)`` the disk around ``t + i`` is also kept clear of
    the unit circles centred at ``a`` and ``b``:
    ``r <= min(sqrt((t-a)^2 + 1), sqrt((b-t)^2 + 1)) - 1``.
    """
    t = np.sort(np.asarray(targets, dtype=float))
    r = MAX_RADIUS
    if len(t) > 1:
        r = min(r, 0.5 * float(np.min(np.diff(t))))
    if window is not None and len(t):
        a, b = window
        clear = np.minimum(np.hypot(t - a, 1.0), np.hypot(b - t, 1.0)) - 1.0
        r = min(r, float(np.min(clear)))
    return float(r)


def _plane_values(spec) -> np.ndarray:
    if isinstance(spec, Spectrum):
        return spec.resolvent_values() if spec.gamma is not None else np.asarray(spec.values)
    return np.asarray(spec, dtype=complex)


def cluster(spec, targets: Sequence[float], radius: Optional[float] = None,
            im_threshold: float = DEFAULT_IM_THRESHOLD, window: Optional[tuple] = None,
            unique: bool = False, echo_floor: float = 1e-10) -> ClusterReport:
    """Group eigenvalues around ``target + i`` for each real target.

    ``spec`` is a :class:`Spectrum` (inverse spectra are clustered in the
    resolvent plane) or an array of complex values.  ``window=(a, b)`` bounds
    the default radius (see :func:`default_radius`); with ``unique=True`` it
    is also declared to hold a single eigenvalue, enabling the sharper
    localisation.
    """
    z = _plane_values(spec)
    targets = [float(t) for t in targets]
    if radius is None:
        radius = default_radius(targets, window)
    if radius <= 0:
        raise ClusterError(f"radius must be positive, got {radius}")
    ts = np.sort(targets)
    if len(ts) > 1 and np.min(np.diff(ts)) <= 2 * radius:
        raise ClusterError("target disks overlap: targets must be more than 2*radius apart")
    members = {i: [] for i in range(len(targets))}
    unexpected, echoes, unassigned = [], [], []
    centres = np.asarray(targets) + 1j
    for idx, val in enumerate(z):
        if val.imag >= im_threshold and len(targets):
            d = np.abs(centres - val)
            j = int(np.argmin(d))
            if d[j] <= radius:
                members[j].append(idx)
                continue
            unexpected.append(idx)
        elif echo_floor < val.imag < im_threshold:
            echoes.append(idx)
        elif val.imag >= im_threshold:
            unexpected.append(idx)
        unassigned.append(idx)
    clusters = []
    for j, t in enumerate(targets):
        idx = members[j]
        mean = complex(np.mean(z[idx])) if idx else complex(np.nan, np.nan)
        loc = localize(mean, window if unique else None) if idx else (np.nan, np.nan)
        clusters.append(Cluster(t, idx, mean, loc))
    return ClusterReport(clusters, unassigned, unexpected, echoes, radius, im_threshold)


def auto_targets(spec, window: SpectralWindow | tuple, im_threshold: float = DEFAULT_IM_THRESHOLD,
                 link: float = MAX_RADIUS) -> list:
    """Target estimates read off a dissipative spectrum.

    Candidates have ``Im z >= im_threshold``, ``a < Re z < b`` and lie outside
    the unit circles centred at ``a`` and ``b`` (inside those circles the
    dissipative problem can have eigenvalues unrelated to ``sigma(T)``).
    Candidates closer than ``link`` along the real axis are merged; each
    group contributes the real part of its mean.
    """
    a, b = (window.a, window.b) if isinstance(window, SpectralWindow) else window
    z = _plane_values(spec)
    keep = ((z.imag >= im_threshold) & (z.real > a) & (z.real < b)
            & (np.abs(z - a) > 1.0) & (np.abs(z - b) > 1.0))
    cand = np.sort_complex(z[keep])
    if not len(cand):
        return []
    groups = [[cand[0]]]
    for v in cand[1:]:
        if v.real - groups[-1][-1].real <= link:
            groups[-1].append(v)
        else:
            groups.append([v])
    return [float(np.mean(g).real) for g in groups]


# -------------------------------------------------------------------- pollution

@dataclass
class Verdict:
    index: int
    value: float
    genuine: bool
    estimate: Optional[float] = None
    interval: Optional[tuple] = None

    @property
    def label(self) -> str:
        return "genuine" if self.genuine else "polluted"


def pollution_report(stage_one_values: Sequence[float], report: ClusterReport,
                     indices: Optional[Sequence[int]] = None,
                     match_tol: float = 1e-8) -> list:
    """Classify stage-one eigenvalues from a window as genuine or polluted.

    For each non-empty cluster, the ``multiplicity`` stage-one values closest
    to ``Re(mean)`` that fall inside the cluster's localisation interval
    (widened by ``match_tol``) are genuine.  Everything else is pollution.
    """
    vals = np.asarray(stage_one_values, dtype=float)
    if indices is None:
        indices = list(range(len(vals)))
    verdicts = [Verdict(int(i), float(v), False) for i, v in zip(indices, vals)]
    taken = np.zeros(len(vals), dtype=bool)
    for c in report.clusters:
        if not c.members:
            continue
        lo, hi = c.localization
        inside = np.flatnonzero((vals >= lo - match_tol) & (vals <= hi + match_tol) & ~taken)
        order = inside[np.argsort(np.abs(vals[inside] - c.mean.real))]
        for k in order[:c.multiplicity]:
            taken[k] = True
            verdicts[k].genuine = True
            verdicts[k].estimate = float(c.mean.real)
            verdicts[k].interval = (float(lo), float(hi))
    return verdicts
