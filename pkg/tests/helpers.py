"""Synthetic setups shared by the unit and acceptance tests."""
from __future__ import annotations

import numpy as np

from galerkin_tiq.dissipative import build_projection
from galerkin_tiq.problems import NestedSpaces, ProblemSpec, assemble, synthetic_operator


def identity_nesting(n: int) -> NestedSpaces:
    return NestedSpaces(n, n, np.eye(n, dtype=complex))


def synthetic_with_projection(eigenvalues, window, seed=0, perturbation=0.0, rng=None):
    """Exact synthetic operator with ``Q`` onto (perturbed) window eigenvectors.

    Returns ``(fm, q, exact_basis, inside)`` where ``exact_basis`` spans the
    window eigenspace and ``inside`` flags which eigenvalues lie in the window.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    problem = ProblemSpec.synthetic(lam, seed=seed)
    fm = assemble(problem)
    _, V = synthetic_operator(problem)
    a, b = window
    inside = (lam >= a) & (lam <= b)
    E = V[:, inside]
    U = E
    if perturbation:
        rng = np.random.default_rng(seed) if rng is None else rng
        W = rng.standard_normal(E.shape) + 1j * rng.standard_normal(E.shape)
        W -= E @ (E.conj().T @ W)
        W /= np.linalg.norm(W, 2)
        U = E + perturbation * W
    q = build_projection(U, fm, nesting=identity_nesting(fm.dim))
    return fm, q, E, inside
