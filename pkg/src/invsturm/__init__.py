"""Direct and inverse Sturm-Liouville problems with the eigenvalue
parameter appearing linearly in one boundary condition.

The equation -y'' + q(x) y = lam y on [0, pi] with
    y'(0) - h y(0) = 0,
    lam (y'(pi) + H y(pi)) = H1 y'(pi) + H2 y(pi),   rho = H*H1 - H2 > 0,
is solved in both directions: coefficients -> spectrum plus norming
constants (``forward``), and spectral data or two spectra -> coefficients
(``glm``, ``twospectra``).
"""

from .core import (
    EigenRecord,
    KernelField,
    ProblemCoefficients,
    SpectralData,
    TwoSpectra,
    ValidationReport,
    estimate_omega,
    validate_problem,
    validate_spectral_data,
    validate_two_spectra,
)
from .forward import ForwardSolution, char_function, compute_k, find_eigenvalues, forward_solve, norming_constant
from .glm import ReconstructionResult, ReconstructOptions, build_F, reconstruct_from_spectral_data
from .twospectra import TwoSpectraResult, estimate_sigma, gammas_from_two_spectra, m_function, reconstruct_from_two_spectra

__version__ = "0.1.0"

__all__ = [
    "EigenRecord",
    "ForwardSolution",
    "KernelField",
    "ProblemCoefficients",
    "ReconstructOptions",
    "ReconstructionResult",
    "SpectralData",
    "TwoSpectra",
    "TwoSpectraResult",
    "ValidationReport",
    "build_F",
    "char_function",
    "compute_k",
    "estimate_omega",
    "estimate_sigma",
    "find_eigenvalues",
    "forward_solve",
    "gammas_from_two_spectra",
    "m_function",
    "norming_constant",
    "reconstruct_from_spectral_data",
    "reconstruct_from_two_spectra",
    "validate_problem",
    "validate_spectral_data",
    "validate_two_spectra",
    "__version__",
]
