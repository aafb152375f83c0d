"""Regularized Tyler scatter estimation, its random-matrix deterministic
equivalents, and the shrinkage-optimized GLRT detector built on top of it."""

__version__ = "0.1.0"

from .errors import (
    AllPointsFailed,
    BracketFailure,
    DegenerateDenominator,
    GlrtError,
    MissingTruth,
    NonConvergence,
    RhoOutOfRange,
    SingularEstimate,
    ZeroSample,
)
from .model import (
    CovarianceModel,
    Dataset,
    TextureModel,
    build_toeplitz_ar,
    identity_model,
    sample_dataset,
    uniform_steering,
)
from .estimators import (
    ScatterEstimate,
    SolverConfig,
    deterministic_equivalent_S,
    robust_shrinkage_fit,
    sample_covariance,
)
from .rmt import (
    TheoryContext,
    rayleigh_tail,
    rho_bar,
    solve_gamma,
    solve_stieltjes,
    theoretical_sigma2,
    theory_context,
)
from .detector import (
    GlrtStatistic,
    RhoSweepResult,
    decide,
    empirical_rho_bar,
    empirical_sigma2,
    empirical_sigma2_at_one,
    glrt_statistic,
    select_rho_star,
)
