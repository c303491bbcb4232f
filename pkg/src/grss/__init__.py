"""Ranked set sampling with binomial side counts: sampling, likelihood, MLE,
Fisher information and Monte Carlo comparison of RSS and GRSS estimators."""

from .distributions import Family, LocationScaleModel, kurtosis, std_cdf, std_pdf, std_quantile
from .errors import (
    BootstrapError,
    DatasetError,
    DomainError,
    EvaluationError,
    GrssError,
    MonteCarloError,
    QuadratureError,
)
from .estimation import FitOptions, FitResult, bootstrap_mse, fit_mle
from .fixtures import FIXTURE_NAMES, FIXTURE_TRUTH, load_fixture
from .information import (
    CoefficientRule,
    ConditionalMethod,
    InfoMatrix,
    abc_constants,
    conditional_info,
    delta_matrix,
    rss_fisher,
    srs_fisher,
    total_info_and_se,
)
from .likelihood import Mode, Theta, grss_loglik, grss_score, rss_loglik, rss_score
from .sampling import GrssDataset, RssDataset, draw_grss, draw_rss, z_marginal_pmf
from .simulation import SimConfig, SimSummary, fixture_report, run_sim, run_table

__version__ = "0.1.0"
