"""Damped Newton maximum likelihood for exponential families.

The core optimizer (:func:`maximize`) runs a penalized Newton iteration with
an adaptive damping parameter driven by the gain ratio.  Model plugins cover
the Dirichlet and Aitchison distributions on the simplex and multivariate
GLMs with the natural link.
"""

from .aitchison import (
    AitchisonParams,
    AitchisonSuffStats,
    aitchison_loglik,
    fit_aitchison,
    init_from_aln,
    log_partition,
    sample_aitchison,
)
from .bench import BenchConfig, BenchReport, fit_dataset, run_aitchison_study, run_dirichlet_study
from .composition import alr, alr_inv, closure
from .dataio import read_composition_csv
from .dirichlet import (
    INITIALIZERS,
    DirichletSuffStats,
    alpha_hat,
    dirichlet_loglik,
    fit_dirichlet,
    fpi_fit,
    sample_dirichlet,
)
from .errors import LMExpFamError
from .glm import GlmModel, glm_fit, iteration_map_rate
from .optim import (
    Algorithm,
    FitOptions,
    FitResult,
    PenaltyKind,
    StopReason,
    gain_ratio,
    maximize,
    update_damping,
)
from .special import digamma, inv_digamma, trigamma

__version__ = "0.1.0"
