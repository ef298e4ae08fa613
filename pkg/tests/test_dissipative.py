import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from galerkin_tiq.analysis import fit_rate, projection_defect, subspace_gap
from galerkin_tiq.dissipative import (ClusterError, LocalizationError, ProjectionError,
                                      ProjectionQ, auto_targets, build_projection, cluster,
                                      default_radius, dissipative_spectrum,
                                      inverse_dissipative_spectrum, localize, pollution_report)
from galerkin_tiq.galerkin import SpectralWindow, select_window, spectrum_of_t
from galerkin_tiq.linalg import LinalgError
from galerkin_tiq.problems import FormMatrices, NestedSpaces, ProblemSpec, assemble, embed

from helpers import identity_nesting, synthetic_with_projection

EIGS12 = [-6, -5, -4, -3, -0.5, 0.0, 0.7, 3, 4, 5, 6, 7]
seeds = st.integers(0, 2**31 - 1)


# ------------------------------------------------------------------ projection

def test_single_vector_projection():
    fm = FormMatrices(np.diag([1.0, 2.0, 3.0]), np.eye(3))
    q = build_projection(np.array([[1.0], [0], [0]]), fm, nesting=identity_nesting(3))
    expect = np.zeros((3, 3))
    expect[0, 0] = 1
    assert np.allclose(q.gram_block, expect)


def test_projection_idempotence():
    rng = np.random.default_rng(0)
    Y = rng.standard_normal((6, 6))
    M = Y @ Y.T + 6 * np.eye(6)
    fm = FormMatrices(np.eye(6), M)
    q = build_projection(rng.standard_normal((6, 2)), fm, nesting=identity_nesting(6))
    C = q.coeffs
    assert np.allclose(C.conj().T @ M @ C, np.eye(2), atol=1e-10)
    G = q.gram_block
    assert np.allclose(G, G.conj().T)
    mu = np.linalg.eigvals(np.linalg.solve(M, G))
    assert np.allclose(np.sort(mu.real), [0, 0, 0, 0, 1, 1], atol=1e-8)


def test_fourier_rank_four():
    p = ProblemSpec.fourier()
    sel = select_window(spectrum_of_t(assemble(p, 25)), SpectralWindow(-np.pi, np.pi))
    q = build_projection(sel, assemble(p, 50), nesting=embed(p, 25, 50))
    assert q.rank == 4


def test_projection_errors():
    fm = FormMatrices(np.eye(3), np.eye(3))
    v = np.array([[1.0], [1.0], [0.0]])
    with pytest.raises(ProjectionError):
        build_projection(np.hstack([v, 2 * v]), fm, nesting=identity_nesting(3))
    with pytest.raises(ProjectionError):
        build_projection(v, fm, nesting=NestedSpaces(2, 3, np.eye(3, 2)))
    with pytest.raises(ProjectionError):
        build_projection(v, fm)


# -------------------------------------------------------------------- spectra

def test_rank_zero_is_spectrum_of_t():
    fm = assemble(ProblemSpec.synthetic(EIGS12, seed=1))
    sp = dissipative_spectrum(fm, ProjectionQ.zero(fm.dim))
    assert np.allclose(sp.values, spectrum_of_t(fm).values, atol=1e-10)


def test_exact_projection_fixed_point():
    fm, q, _, inside = synthetic_with_projection(EIGS12, (-1, 1), seed=4)
    lam = np.asarray(EIGS12, float)
    expect = lam + 1j * inside
    assert np.abs(np.sort_complex(dissipative_spectrum(fm, q).values)
                  - np.sort_complex(expect)).max() <= 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=seeds, eps=st.floats(0.0, 2.0))
def test_numerical_range_and_est1(seed, eps):
    fm, q, _, _ = synthetic_with_projection(EIGS12, (-1, 1), seed=seed % 1000,
                                            perturbation=eps, rng=np.random.default_rng(seed))
    z = dissipative_spectrum(fm, q).values
    assert np.all(z.imag >= -1e-8) and np.all(z.imag <= 1 + 1e-8)
    y = np.clip(z.imag, 0, 1)
    dist = np.min(np.abs(z.real[:, None] - np.asarray(EIGS12)[None, :]), axis=1)
    assert np.all(dist <= np.sqrt(y * (1 - y)) + 1e-8)


def test_multiplicity_two_captured():
    eigs = [-6, -5, -4, -3, 0.0, 0.0, 3, 4, 5, 6, 7, 8]
    for seed in range(5):
        fm, q, E, _ = synthetic_with_projection(eigs, (-2.5, 2.5), seed=seed, perturbation=0.1)
        assert projection_defect(q, E, fm.mass) < 1 / np.sqrt(2)
        rep = cluster(dissipative_spectrum(fm, q), [0.0])
        assert rep.clusters[0].multiplicity == 2


def test_superconvergence_of_cluster_mean():
    # Exact operator, exact Q, trial spaces tilted away from the eigenspace by t
    lam = np.array([0.0, 0.0, -4, -3, 3, 4, 5, 6, -5, 7])
    n = len(lam)
    T = np.diag(lam).astype(complex)
    U = np.eye(n)[:, :2].astype(complex)
    rng = np.random.default_rng(3)
    W = rng.standard_normal((n, 6)) + 1j * rng.standard_normal((n, 6))
    pts = []
    for t in [0.02, 0.01, 0.005, 0.0025, 0.00125]:
        B = np.eye(n)[:, :6] + t * W
        fm = FormMatrices(B.conj().T @ T @ B, B.conj().T @ B)
        q = ProjectionQ(B.conj().T @ U, B.conj().T @ T @ U, U.conj().T @ T @ U)
        c = cluster(dissipative_spectrum(fm, q), [0.0]).clusters[0]
        assert c.multiplicity == 2
        pts.append((subspace_gap(U, B), abs(c.mean - 1j)))
    assert fit_rate(pts).slope >= 1.8


def test_inverse_rank_zero():
    fm = assemble(ProblemSpec.block_fem(), 8)
    gamma = 0.1
    sp = inverse_dissipative_spectrum(fm, ProjectionQ.zero(fm.dim), gamma)
    lam = spectrum_of_t(fm).values
    assert np.allclose(np.sort(sp.values.real), lam - gamma, rtol=1e-10)
    assert np.allclose(np.sort(sp.resolvent_values().real), np.sort(1 / (lam - gamma)),
                       rtol=1e-10)
    assert np.abs(sp.values.imag).max() <= 1e-10


def test_inverse_exact_projection_in_resolvent_variable():
    eigs = [1.0, 2.0, 4.0, 5.0, 8.0]
    fm, q, _, inside = synthetic_with_projection(eigs, (3.5, 4.5), seed=2)
    sp = inverse_dissipative_spectrum(fm, q, 0.5)
    w = np.sort_complex(sp.resolvent_values())
    expect = np.sort_complex(1 / (np.asarray(eigs) - 0.5) + 1j * inside)
    assert np.abs(w - expect).max() <= 1e-10
    assert sp.pairs.max_residual <= 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=seeds, eps=st.floats(0.0, 1.0))
def test_inverse_numerical_range(seed, eps):
    eigs = [1.0, 1.5, 2.0, 4.0, 5.0, 8.0, 9.0]
    fm, q, _, _ = synthetic_with_projection(eigs, (1.4, 4.5), seed=seed % 500,
                                            perturbation=eps, rng=np.random.default_rng(seed))
    w = inverse_dissipative_spectrum(fm, q, 0.0).resolvent_values()
    assert np.all(w.imag >= -1e-8) and np.all(w.imag <= 1 + 1e-8)


def test_inverse_gamma_not_below_spectrum():
    fm = FormMatrices(np.diag([1.0, 2.0]), np.eye(2))
    with pytest.raises(LinalgError, match="gamma"):
        inverse_dissipative_spectrum(fm, ProjectionQ.zero(2), 1.5)


# ---------------------------------------------------------------- localization

def test_localize_examples():
    assert localize(2.0 + 1j) == (2.0, 2.0)
    lo, hi = localize(2.0 + 0.5j)
    assert (hi - lo) / 2 == pytest.approx(0.5)
    lo, hi = localize(0.3 + 0.9j, (0.0, 1.0))
    assert lo == pytest.approx(0.3 - 0.09 / 0.7)
    assert hi == pytest.approx(0.6)


def test_localize_sharper_interval_falls_back():
    # refined interval would leave the window, so the generic one is used
    lo, hi = localize(0.05 + 0.5j, (0.0, 1.0))
    assert (lo, hi) == pytest.approx((0.05 - 0.5, 0.05 + 0.5))


def test_localize_outside_numerical_range():
    with pytest.raises(LocalizationError):
        localize(1 + 1.1j)
    with pytest.raises(LocalizationError):
        localize(1 - 0.01j)


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_localize_encloses_true_eigenvalue(seed):
    fm, q, _, _ = synthetic_with_projection(EIGS12, (-1, 1), seed=seed % 1000, perturbation=0.3,
                                            rng=np.random.default_rng(seed))
    for z in dissipative_spectrum(fm, q).values:
        lo, hi = localize(z)
        assert np.any((np.asarray(EIGS12) >= lo - 1e-8) & (np.asarray(EIGS12) <= hi + 1e-8))


# -------------------------------------------------------------------- clusters

def test_cluster_single_point():
    rep = cluster(np.array([2.0 + 1j, 5.0, 0.1 + 0.2j]), [2.0])
    c = rep.clusters[0]
    assert c.multiplicity == 1 and c.mean == 2.0 + 1j
    assert sorted(rep.unassigned) == [1, 2]
    assert rep.echoes == [2]


def test_cluster_partition_invariant():
    fm, q, _, _ = synthetic_with_projection(EIGS12, (-1, 1), seed=7, perturbation=0.2)
    sp = dissipative_spectrum(fm, q)
    rep = cluster(sp, [-0.5, 0.0, 0.7], radius=0.2)
    seen = sorted(sum((c.members for c in rep.clusters), []) + rep.unassigned)
    assert seen == list(range(len(sp)))


def test_cluster_overlap_rejected():
    with pytest.raises(ClusterError):
        cluster(np.array([1j]), [0.0, 0.5], radius=0.3)
    with pytest.raises(ClusterError):
        cluster(np.array([1j]), [0.0], radius=0.0)


def test_default_radius():
    assert default_radius([0.0]) == 0.45
    assert default_radius([0.0, 0.4]) == pytest.approx(0.2)
    # window endpoints keep the disk clear of the unit circles around them
    assert default_radius([0.5], (0.25, 0.9)) == pytest.approx(np.hypot(0.25, 1) - 1)


def test_auto_targets_ignore_edge_circles():
    z = np.array([0.5 + 1.0j, 0.75 + 0.76j, 0.3 + 0.1j, -3 + 0.9j])
    assert auto_targets(z, (0.25, 0.9)) == [0.5]


# ------------------------------------------------------------------- pollution

def _polluted_synthetic():
    """Exact T with one true eigenvalue in (-2, 2) and two spurious coarse values."""
    lam = np.array([0.0, -5, 5, -5, 5, -6, 6, 7])
    T = np.diag(lam).astype(complex)
    fm = FormMatrices(T, np.eye(8, dtype=complex))

    def mix(i, j, theta):
        v = np.zeros(8)
        v[i], v[j] = np.cos(theta), np.sin(theta)
        return v

    # Rayleigh quotients -5 cos(2 theta): 0.9 and -1.3
    t1, t2 = 0.5 * np.arccos(-0.9 / 5), 0.5 * np.arccos(1.3 / 5)
    basis = np.column_stack([np.eye(8)[:, 0], mix(1, 2, t1), mix(3, 4, t2), np.eye(8)[:, 5]])
    coarse = FormMatrices(basis.T @ T @ basis, basis.T @ basis)
    return fm, coarse, NestedSpaces(4, 8, basis.astype(complex))


def test_pollution_one_genuine_two_polluted():
    fm, coarse, nest = _polluted_synthetic()
    window = SpectralWindow(-2, 2)
    sel = select_window(spectrum_of_t(coarse), window)
    assert np.allclose(np.sort(sel.values), [-1.3, 0.0, 0.9])
    q = build_projection(sel, fm, nesting=nest)
    plane = dissipative_spectrum(fm, q).values
    targets = auto_targets(plane, window)
    assert targets == pytest.approx([0.0], abs=1e-12)
    verdicts = pollution_report(sel.values, cluster(plane, targets, window=(-2, 2)),
                                indices=sel.indices)
    labels = {round(v.value, 6): v.label for v in verdicts}
    assert labels == {-1.3: "polluted", 0.0: "genuine", 0.9: "polluted"}


def test_pollution_empty_selection():
    rep = cluster(np.array([5.0 + 0j]), [])
    assert pollution_report([], rep) == []
