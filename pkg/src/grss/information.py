"""Expected Fisher information for RSS and GRSS samples.

The information in a GRSS sample splits as ``I_D = I_X + I_{Z|X}``:

* ``I_X`` is the ranked-set information of the measurements,
  ``mr * I_SRS + mr * k * Delta`` with ``k = m - 1`` by default.
* ``I_{Z|X}`` comes from the binomial counts.  A unit with value ``x`` carries
  ``m * grad F grad F^T / (F (1 - F))``, averaged over the order statistic of
  its rank.

All expectations are computed in the probability domain.  The substitution
``x = mu + sigma * F^{-1}(u)`` maps every integral onto ``u in (0, 1)``, and
order-statistic weights become Beta(i, m - i + 1) densities in ``u``.

Entries are ordered ``(mu, sigma)`` with ``sigma`` the scale.  For the
exponential family the support moves with ``mu``, so every ``(mu, mu)`` entry
except the SRS one diverges.  Those entries are returned as ``+inf``; the
matching entries of the inverse are 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .distributions import Family, LocationScaleModel
from .errors import DomainError, EvaluationError, MonteCarloError, QuadratureError

__all__ = [
    "Role",
    "CoefficientRule",
    "ConditionalMethod",
    "InfoMatrix",
    "AbcConstants",
    "InfoReport",
    "srs_fisher",
    "delta_matrix",
    "delta_scale_only",
    "rss_fisher",
    "abc_constants",
    "conditional_info",
    "total_info_and_se",
    "information_report",
    "fit_std_errors",
]

QUAD_ABS_TOL = 1e-8
MC_MAX_RELATIVE_SE = 0.02


class Role(enum.Enum):
    SRS = "srs"
    DELTA = "delta"
    X = "x"
    Z_GIVEN_X = "z_given_x"
    TOTAL = "total"


class CoefficientRule(enum.Enum):
    """Multiplier of ``Delta`` in ``I_X``: ``mr(m-1)`` or ``mr(r-1)``."""

    CHEN_M_MINUS_1 = "chen"
    PAPER_R_MINUS_1 = "paper"

    @classmethod
    def parse(cls, name: str | CoefficientRule) -> CoefficientRule:
        if isinstance(name, CoefficientRule):
            return name
        key = name.strip().lower().replace("_", "").replace("-", "")
        if key in ("chen", "chenmminus1", "m1", "mminus1"):
            return cls.CHEN_M_MINUS_1
        if key in ("paper", "paperrminus1", "r1", "rminus1"):
            return cls.PAPER_R_MINUS_1
        raise DomainError(f"unknown coefficient rule {name!r}; use 'chen' or 'paper'")

    def multiplier(self, m: int, r: int) -> int:
        return m - 1 if self is CoefficientRule.CHEN_M_MINUS_1 else r - 1


class ConditionalMethod(enum.Enum):
    """How ``I_{Z|X}`` is computed.

    ``FORMULA`` uses the closed A, B, C expressions, ``QUADRATURE`` integrates
    the exact per-unit information and ``MONTE_CARLO`` takes the covariance of
    the simulated binomial-factor score.
    """

    FORMULA = "formula"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "montecarlo"

    @classmethod
    def parse(cls, name: str | ConditionalMethod) -> ConditionalMethod:
        if isinstance(name, ConditionalMethod):
            return name
        key = name.strip().lower().replace("_", "").replace("-", "")
        for method in cls:
            if key == method.value:
                return method
        if key == "mc":
            return cls.MONTE_CARLO
        raise DomainError(f"unknown conditional-information method {name!r}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class InfoMatrix:
    """A symmetric 2x2 information matrix ordered ``(mu, sigma)``.

    ``standard_errors`` holds Monte Carlo standard errors per entry when the
    matrix is a simulation estimate.
    """

    entries: np.ndarray
    role: Role
    standard_errors: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.shape != (2, 2):
            raise DomainError(f"information matrix must be 2x2, got shape {e.shape}")
        if np.isnan(e).any():
            raise EvaluationError("information matrix has NaN entries")
        # Exact symmetry by construction; asymmetric input is a caller error.
        if not (e[0, 1] == e[1, 0] or abs(e[0, 1] - e[1, 0]) <= 1e-12 * (1 + abs(e[0, 1]))):
            raise DomainError("information matrix must be symmetric")
        e[1, 0] = e[0, 1]
        object.__setattr__(self, "entries", _freeze(e))
        if self.standard_errors is not None:
            object.__setattr__(self, "standard_errors", _freeze(self.standard_errors))

    def __getitem__(self, idx):
        return float(self.entries[idx])

    @property
    def location_regular(self) -> bool:
        return math.isfinite(self.entries[0, 0])

    def scaled(self, factor: float, role: Role | None = None) -> InfoMatrix:
        se = None if self.standard_errors is None else self.standard_errors * abs(factor)
        with np.errstate(invalid="ignore"):
            e = np.where(self.entries == 0, 0.0, self.entries * factor)
        return InfoMatrix(e, role or self.role, se)

    def plus(self, other: InfoMatrix, role: Role) -> InfoMatrix:
        return InfoMatrix(self.entries + other.entries, role)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues; with an infinite location entry, ``(inf, I_22)``."""
        if not self.location_regular:
            return np.array([self.entries[1, 1], math.inf])
        return np.linalg.eigvalsh(self.entries)

    def inverse(self) -> np.ndarray:
        """Matrix inverse, taking the limit when the location entry is infinite."""
        e = self.entries
        if not self.location_regular:
            if not e[1, 1] > 0:
                raise EvaluationError(f"{self.role.value} information is singular")
            return np.array([[0.0, 0.0], [0.0, 1.0 / e[1, 1]]])
        det = e[0, 0] * e[1, 1] - e[0, 1] ** 2
        if not det > 1e-14 * max(e[0, 0] * e[1, 1], 1e-300):
            raise EvaluationError(f"{self.role.value} information is singular (det={det:.3g})")
        return np.array([[e[1, 1], -e[0, 1]], [-e[0, 1], e[0, 0]]]) / det

    def in_variance_parameterization(self, sigma: float) -> InfoMatrix:
        """Re-express for ``(mu, sigma^2)`` via the Jacobian ``d sigma / d sigma^2``."""
        j = 1.0 / (2.0 * sigma)
        e = self.entries
        return InfoMatrix(
            [[e[0, 0], e[0, 1] * j], [e[0, 1] * j, e[1, 1] * j * j]], self.role
        )


@dataclass(frozen=True)
class AbcConstants:
    """Standard-form constants giving ``I_{Z|X} = (mr / sigma^2) [[a, c], [c, b]]``."""

    a: float
    b: float
    c: float
    m: int


# --- quadrature ----------------------------------------------------------


def _integrate(integrand, n_out: int, family: Family, what: str) -> np.ndarray:
    """Integrate a vector-valued function of ``u`` over (0, 1).

    The interval is split at the family median, where the Laplace density
    has its kink.
    """
    points = (0.5,) if family.standard.symmetric else None
    res, err, info = integrate.quad_vec(
        integrand,
        0.0,
        1.0,
        epsabs=QUAD_ABS_TOL * 1e-2,
        epsrel=1e-10,
        points=points,
        limit=2000,
        norm="max",
        full_output=True,
    )
    res = np.atleast_1d(np.asarray(res, dtype=float))
    if info.status != 0 or not err <= QUAD_ABS_TOL or not np.all(np.isfinite(res)):
        raise QuadratureError(f"quadrature for {what} did not converge", float(err))
    assert res.shape == (n_out,)
    return res


def _at_quantile(model: LocationScaleModel, u: float):
    """Standardized point and primitives at the ``u``-quantile, in model units."""
    std = model.family.standard
    x = model.mu + model.sigma * float(std.ppf(u))
    v = (x - model.mu) / model.sigma
    log_f = float(std.logpdf(v))
    f_model = math.exp(log_f) / model.sigma
    cdf = math.exp(float(std.logcdf(v)))
    sf = math.exp(float(std.logsf(v)))
    psi = float(std.dlogpdf(v))
    return v, f_model, cdf, sf, psi


def _order_weight(u: float, i: int, m: int) -> float:
    """Density of ``F(W_i)``: Beta(i, m - i + 1) at ``u``."""
    log_w = (
        math.log(i)
        + special.gammaln(m + 1)
        - special.gammaln(i + 1)
        - special.gammaln(m - i + 1)
        + (i - 1) * math.log(u)
        + (m - i) * math.log1p(-u)
    )
    return math.exp(log_w)


def _model(family, theta) -> LocationScaleModel:
    family = Family.parse(family)
    mu, sigma = float(theta[0]), float(theta[1])
    return LocationScaleModel(family, mu, sigma)


def _check_sizes(m: int, r: int) -> None:
    if int(m) != m or int(r) != r or m < 1 or r < 1:
        raise DomainError(f"need integers m >= 1 and r >= 1, got m={m}, r={r}")


def _gradient_products(model: LocationScaleModel, u: float) -> np.ndarray:
    """``(F_mu^2, F_mu F_sigma, F_sigma^2) / (F (1 - F))`` at the ``u``-quantile."""
    v, f, cdf, sf, _ = _at_quantile(model, u)
    # dF/dmu = -f(x; theta), dF/dsigma = -v f(x; theta).
    base = f * f / (cdf * sf)
    return np.array([base, v * base, v * v * base])


def _with_location_gap(model: LocationScaleModel, vec: np.ndarray) -> np.ndarray:
    """Place ``vec = (e11, e12, e22)`` in a matrix, marking a divergent e11."""
    e11 = vec[0] if model.family.standard.location_regular else math.inf
    return np.array([[e11, vec[1]], [vec[1], vec[2]]])


def srs_fisher(family: Family | str, theta) -> InfoMatrix:
    """Per-observation Fisher information of a simple random sample.

    Parameters
    ----------
    family : Family or str
    theta : (mu, sigma)

    Returns
    -------
    InfoMatrix
        Entries ``E[psi^2]``, ``E[psi (1 + v psi)]`` and ``E[(1 + v psi)^2]``
        divided by ``sigma^2``, where ``psi = f'/f``.
    """
    model = _model(family, theta)

    def integrand(u):
        v, _, _, _, psi = _at_quantile(model, u)
        s_mu = -psi / model.sigma
        s_sigma = -(1.0 + v * psi) / model.sigma
        return np.array([s_mu * s_mu, s_mu * s_sigma, s_sigma * s_sigma])

    vec = _integrate(integrand, 3, model.family, "SRS information")
    return InfoMatrix([[vec[0], vec[1]], [vec[1], vec[2]]], Role.SRS)


def delta_matrix(family: Family | str, theta, parameterization: str = "scale") -> InfoMatrix:
    """Per-unit information gain of ranking, ``E[grad F grad F^T / (F (1 - F))]``.

    Parameters
    ----------
    family : Family or str
    theta : (mu, sigma)
    parameterization : {"scale", "variance"}
        Whether the second coordinate is ``sigma`` or ``sigma^2``.

    Returns
    -------
    InfoMatrix
        For the Normal at ``sigma = 1`` the diagonal is ``(0.48054, 0.27007)``
        in the scale parameterization and ``(0.48054, 0.06752)`` in the
        variance parameterization.
    """
    model = _model(family, theta)
    vec = _integrate(
        lambda u: _location_masked(model, _gradient_products(model, u)),
        3,
        model.family,
        "Delta",
    )
    out = InfoMatrix(_with_location_gap(model, vec), Role.DELTA)
    if parameterization == "scale":
        return out
    if parameterization == "variance":
        return out.in_variance_parameterization(model.sigma)
    raise DomainError(f"parameterization must be 'scale' or 'variance', got {parameterization!r}")


def _location_masked(model: LocationScaleModel, vec: np.ndarray) -> np.ndarray:
    # The divergent location entry is excluded from integration.
    if not model.family.standard.location_regular:
        vec[0] = 0.0
    return vec


def delta_scale_only(family: Family | str, sigma: float) -> float:
    """``Delta`` for the scale-only subfamily (location fixed at 0)."""
    return delta_matrix(family, (0.0, sigma))[1, 1]


def rss_fisher(
    family: Family | str,
    theta,
    m: int,
    r: int,
    coefficient_rule: CoefficientRule | str = CoefficientRule.CHEN_M_MINUS_1,
) -> InfoMatrix:
    """Information in the measurements of an RSS sample of ``m * r`` units."""
    _check_sizes(m, r)
    rule = CoefficientRule.parse(coefficient_rule)
    n = m * r
    srs = srs_fisher(family, theta).entries
    k = rule.multiplier(m, r)
    if k == 0:
        return InfoMatrix(n * srs, Role.X)
    return InfoMatrix(n * srs + n * k * delta_matrix(family, theta).entries, Role.X)


def abc_constants(family: Family | str, m: int) -> AbcConstants:
    """The constants A, B, C in standard form, as sums over ranks.

    ``A = sum_i E[f^2 / (F (1 - F))](W_i)``, and B and C use the closed-form
    integrands

        B: (2 W f F (1-F) - 3 W^2 f^2 F + W^2 f^2) / (F (1-F)^2)
        C: W f^2 (3F - 1) / (F (1-F)^2)

    with ``W_i`` the ``i``-th order statistic of ``m`` standard draws.  A is
    ``+inf`` for the exponential family.
    """
    _check_sizes(m, 1)
    model = _model(family, (0.0, 1.0))
    regular = model.family.standard.location_regular

    def integrand(u):
        w, f, cdf, sf, _ = _at_quantile(model, u)
        weight = sum(_order_weight(u, i, m) for i in range(1, m + 1))
        a = f * f / (cdf * sf) if regular else 0.0
        b = (2 * w * f * cdf * sf - 3 * w * w * f * f * cdf + w * w * f * f) / (cdf * sf * sf)
        c = w * f * f * (3 * cdf - 1) / (cdf * sf * sf)
        return weight * np.array([a, b, c])

    a, b, c = _integrate(integrand, 3, model.family, "A, B, C")
    return AbcConstants(float(a) if regular else math.inf, float(b), float(c), int(m))


def _rank_sum_integrand(model: LocationScaleModel, m: int):
    def integrand(u):
        weight = sum(_order_weight(u, i, m) for i in range(1, m + 1))
        return _location_masked(model, weight * _gradient_products(model, u))

    return integrand


def conditional_info(
    family: Family | str,
    theta,
    m: int,
    r: int,
    method: ConditionalMethod | str = ConditionalMethod.QUADRATURE,
    *,
    replicates: int = 200_000,
    rng: np.random.Generator | int | None = None,
) -> InfoMatrix:
    """Information carried by the counts given the measurements.

    Parameters
    ----------
    family : Family or str
    theta : (mu, sigma)
    m, r : int
        Set size and number of cycles.
    method : ConditionalMethod or str
        ``"quadrature"`` (default) integrates the exact per-unit information
        ``m E[grad F grad F^T / (F (1 - F))]`` against each rank's
        order-statistic law.  ``"formula"`` assembles
        ``(mr / sigma^2) [[A, C], [C, B]]``.  ``"montecarlo"`` estimates the
        covariance of the binomial-factor score over ``replicates`` simulated
        cycles.
    replicates : int
        Monte Carlo cycle count.
    rng : Generator, int or None
        Monte Carlo randomness.

    Raises
    ------
    MonteCarloError
        If a finite diagonal entry has relative standard error above 2%.
    """
    _check_sizes(m, r)
    model = _model(family, theta)
    method = ConditionalMethod.parse(method)
    if method is ConditionalMethod.FORMULA:
        k = abc_constants(model.family, m)
        scale = m * r / model.sigma**2
        return InfoMatrix([[k.a * scale, k.c * scale], [k.c * scale, k.b * scale]], Role.Z_GIVEN_X)
    if method is ConditionalMethod.QUADRATURE:
        vec = _integrate(_rank_sum_integrand(model, m), 3, model.family, "conditional information")
        return InfoMatrix(_with_location_gap(model, m * r * vec), Role.Z_GIVEN_X)
    return _conditional_monte_carlo(model, m, r, replicates, np.random.default_rng(rng))


def _conditional_monte_carlo(
    model: LocationScaleModel, m: int, r: int, replicates: int, rng: np.random.Generator
) -> InfoMatrix:
    from .sampling import _draw_cells

    if replicates < 2:
        raise DomainError("Monte Carlo needs at least 2 replicates")
    std = model.family.standard
    chunk = 50_000
    products = []
    done = 0
    while done < replicates:
        k = min(chunk, replicates - done)
        x, z, _, _ = _draw_cells(model, m, k, rng)
        v = (x - model.mu) / model.sigma
        _, _, _, h_cdf, h_sf, _ = std.score_terms(v)
        g = (m - z) * h_sf - z * h_cdf
        s_mu = g.reshape(k, m).sum(axis=1) / model.sigma
        s_sigma = (v * g).reshape(k, m).sum(axis=1) / model.sigma
        products.append(np.stack([s_mu, s_sigma], axis=1))
        done += k
    s = np.concatenate(products)
    s -= s.mean(axis=0)
    pairs = np.stack([s[:, 0] * s[:, 0], s[:, 0] * s[:, 1], s[:, 1] * s[:, 1]], axis=1)
    est = r * pairs.mean(axis=0)
    se = r * pairs.std(axis=0, ddof=1) / math.sqrt(replicates)
    regular = std.location_regular
    if not regular:
        est[0], se[0] = math.inf, math.nan
    for idx in ((0,) if regular else ()) + (2,):
        if not se[idx] <= MC_MAX_RELATIVE_SE * abs(est[idx]):
            raise MonteCarloError(
                f"conditional information entry {idx} has relative SE "
                f"{se[idx] / abs(est[idx]):.3g} > {MC_MAX_RELATIVE_SE}; raise replicates"
            )
    return InfoMatrix(
        [[est[0], est[1]], [est[1], est[2]]],
        Role.Z_GIVEN_X,
        standard_errors=[[se[0], se[1]], [se[1], se[2]]],
    )


class InfoReport(NamedTuple):
    srs: InfoMatrix
    delta: InfoMatrix
    x: InfoMatrix
    z_given_x: InfoMatrix
    total: InfoMatrix
    se_grss: tuple[float, float]
    se_rss: tuple[float, float]


def _asymptotic_se(info: InfoMatrix, n: int) -> tuple[float, float]:
    # The per-unit information is info / n; the SD of the estimator is
    # sqrt(diag((info / n)^-1) / n).
    inv = info.scaled(1.0 / n).inverse() / n
    return float(math.sqrt(inv[0, 0])), float(math.sqrt(inv[1, 1]))


def total_info_and_se(
    family: Family | str,
    theta,
    m: int,
    r: int,
    coefficient_rule: CoefficientRule | str = CoefficientRule.CHEN_M_MINUS_1,
    conditional_method: ConditionalMethod | str = ConditionalMethod.QUADRATURE,
    **mc_options,
) -> tuple[InfoMatrix, tuple[float, float]]:
    """Total GRSS information ``I_X + I_{Z|X}`` and the asymptotic SDs of the MLE.

    Returns
    -------
    total : InfoMatrix
    se : (float, float)
        ``sqrt(diag(I_D^-1))`` for the sample of ``n = m r`` units.  A location
        SD of 0 means the location estimator converges faster than
        ``1/sqrt(n)`` (exponential family).

    Raises
    ------
    EvaluationError
        If the total information is singular.
    """
    i_x = rss_fisher(family, theta, m, r, coefficient_rule)
    i_z = conditional_info(family, theta, m, r, conditional_method, **mc_options)
    total = i_x.plus(i_z, Role.TOTAL)
    return total, _asymptotic_se(total, m * r)


def information_report(
    family: Family | str,
    theta,
    m: int,
    r: int,
    coefficient_rule: CoefficientRule | str = CoefficientRule.CHEN_M_MINUS_1,
    conditional_method: ConditionalMethod | str = ConditionalMethod.QUADRATURE,
    **mc_options,
) -> InfoReport:
    """All information pieces plus GRSS and RSS asymptotic SDs."""
    _check_sizes(m, r)
    i_x = rss_fisher(family, theta, m, r, coefficient_rule)
    i_z = conditional_info(family, theta, m, r, conditional_method, **mc_options)
    total = i_x.plus(i_z, Role.TOTAL)
    n = m * r
    return InfoReport(
        srs_fisher(family, theta),
        delta_matrix(family, theta),
        i_x,
        i_z,
        total,
        _asymptotic_se(total, n),
        _asymptotic_se(i_x, n),
    )


def fit_std_errors(fit, m: int, r: int) -> tuple[float, float]:
    """Asymptotic SDs at a fitted ``theta``: ``I_D`` for GRSS fits, ``I_X`` for RSS.

    Returns NaNs when the fit has no finite estimate.
    """
    mu, sigma = fit.theta_hat
    if not (math.isfinite(mu) and math.isfinite(sigma) and sigma > 0):
        return math.nan, math.nan
    if fit.mode.value == "rss":
        return _asymptotic_se(rss_fisher(fit.family, (mu, sigma), m, r), m * r)
    return total_info_and_se(fit.family, (mu, sigma), m, r)[1]
