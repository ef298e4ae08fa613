import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from galerkin_tiq.galerkin import (SpectralWindow, WindowError, inverse_values, m_orthonormalize,
                                   orthonormality_defect, select_window, sigma_n, spectrum_of_t,
                                   spectrum_of_t_plus_a)
from galerkin_tiq.problems import FOURIER_LAMBDA2, FormMatrices, ProblemSpec, assemble

from oracles import match_error, pencil_roots

FOURIER = ProblemSpec.fourier()


def test_spectrum_of_t_synthetic():
    sp = spectrum_of_t(assemble(ProblemSpec.synthetic([0, 1, 5], seed=3)))
    assert sp.hermitian
    assert np.allclose(sp.values, [0, 1, 5], atol=1e-12)


def test_fourier_51_has_four_values_in_gap():
    sp = spectrum_of_t(assemble(FOURIER, 25))
    sel = select_window(sp, SpectralWindow(-np.pi, np.pi))
    assert len(sel) == 4
    assert np.all(np.abs(sel.values) < np.pi)


def test_select_window_examples():
    sp = spectrum_of_t(assemble(ProblemSpec.synthetic([0, 1, 5], seed=1)))
    sel = select_window(sp, SpectralWindow(0.5, 2))
    assert sel.indices.tolist() == [1]
    empty = select_window(sp, SpectralWindow(2, 3))
    assert empty.empty and empty.vectors.shape == (3, 0)


def test_select_window_includes_endpoints():
    sp = spectrum_of_t(FormMatrices(np.diag([1.0, 2.0, 3.0]), np.eye(3)))
    assert select_window(sp, SpectralWindow(1.0, 2.0)).indices.tolist() == [0, 1]


def test_select_window_vectors_mass_orthonormal():
    fm = assemble(ProblemSpec.block_fem(), 12)
    sp = spectrum_of_t(fm)
    sel = select_window(sp, SpectralWindow(0.5, 3.0), mass=fm.mass)
    assert len(sel) > 0
    assert orthonormality_defect(sel.vectors, fm.mass) <= 1e-10


def test_inverse_window_and_gamma_check():
    sp = spectrum_of_t(FormMatrices(np.diag([2.0, 4.0, 10.0]), np.eye(3)))
    sel = select_window(sp, SpectralWindow(0.2, 0.3, gamma=0.0))
    assert sel.indices.tolist() == [1]
    assert sel.values == pytest.approx([0.25])
    with pytest.raises(WindowError):
        select_window(sp, SpectralWindow(0.2, 0.3, gamma=3.0))
    with pytest.raises(WindowError):
        inverse_values(sp, 2.0)


def test_window_validation():
    with pytest.raises(WindowError):
        SpectralWindow(1.0, 1.0)
    with pytest.raises(WindowError):
        SpectralWindow(-1.0, 1.0, gamma=0.0)


def test_t_plus_a_zero_perturbation():
    fm = assemble(ProblemSpec.synthetic([0, 1, 5], seed=0))
    fa = FormMatrices(fm.t_hat, fm.mass, np.zeros((3, 3)))
    assert np.allclose(np.sort(spectrum_of_t_plus_a(fa).values.real), spectrum_of_t(fm).values)


def test_t_plus_a_random_oracle():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    T = X + X.conj().T
    A = 1e-2 * (rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    sp = spectrum_of_t_plus_a(FormMatrices(T, np.eye(8), A))
    assert match_error(sp.values, pencil_roots(T + A, np.eye(8))) <= 1e-10


def test_t_plus_a_needs_perturbation():
    with pytest.raises(ValueError):
        spectrum_of_t_plus_a(FormMatrices(np.eye(2), np.eye(2)))


def test_sigma_n_examples():
    fm = FormMatrices(np.diag([1.0, 3.0]), np.eye(2))
    assert sigma_n(fm, 2.0) == pytest.approx(1.0)
    fe = assemble(ProblemSpec.block_fem(), 6)
    for z in spectrum_of_t(fe).values[:3]:
        assert sigma_n(fe, z) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1),
       z1=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       z2=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_sigma_n_is_one_lipschitz(seed, z1, z2):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    Y = rng.standard_normal((6, 6))
    fm = FormMatrices(X + X.conj().T, Y @ Y.T + 6 * np.eye(6),
                      0.3 * (rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))))
    assert abs(sigma_n(fm, z1) - sigma_n(fm, z2)) <= abs(z1 - z2) + 1e-12


def test_fourier_lambda2_monotone_under_nesting():
    # lambda_2 is the top of the spectrum, so the largest Galerkin value
    # increases towards it as the spaces grow
    prev = -np.inf
    for n in [10, 20, 40, 80, 160]:
        lam2 = spectrum_of_t(assemble(FOURIER, n)).values[-1]
        assert prev <= lam2 <= FOURIER_LAMBDA2 + 1e-8
        prev = lam2
    assert FOURIER_LAMBDA2 - prev < 0.1


def test_m_orthonormalize():
    rng = np.random.default_rng(2)
    Y = rng.standard_normal((7, 7))
    M = Y @ Y.T + 7 * np.eye(7)
    V = rng.standard_normal((7, 3)) + 1j * rng.standard_normal((7, 3))
    Q = m_orthonormalize(V, M)
    assert orthonormality_defect(Q, M) <= 1e-12
    with pytest.raises(np.linalg.LinAlgError):
        m_orthonormalize(np.column_stack([V[:, 0], 2 * V[:, 0]]), M)
