"""Two-stage Galerkin approximation of eigenvalues hidden by spectral pollution.

Stage one computes a Galerkin spectrum of a self-adjoint ``T`` and builds the
orthogonal projection ``Q`` onto eigenvectors in a window; stage two solves
``T + iQ`` on a larger space, where eigenvalues of ``T`` in the window show up
near ``lambda + i``.
"""
from .linalg import (ConvergenceError, DimensionMismatchError, EigenPairs, LinalgError,
                     NotPositiveDefiniteError, general_pencil_eig, hermitian_generalized_eig,
                     smallest_singular_value)
from .problems import (FormMatrices, NestedSpaces, ProblemSpec, assemble, couple, embed,
                       reference_spectrum)
from .galerkin import (SpectralWindow, Spectrum, select_window, sigma_n, spectrum_of_t,
                       spectrum_of_t_plus_a)
from .dissipative import (ClusterReport, ProjectionQ, auto_targets, build_projection, cluster,
                          dissipative_spectrum, inverse_dissipative_spectrum, localize,
                          pollution_report)
from .analysis import RateFit, fit_rate, projection_defect, subspace_gap
from .matrixio import export_matrices, import_matrices

__version__ = "0.1.0"
