"""Standard forms of the four parent families and their location-scale extension.

Every family is described in standard form (location 0, scale 1) by its density
``f``, distribution function ``F``, quantile ``F^-1`` and density derivative
``f'``.  The log-CDF and log-survival functions are evaluated through tail-stable
forms because the likelihood takes logarithms of both ``F`` and ``1 - F``.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "Family",
    "StandardForm",
    "LocationScaleModel",
    "std_pdf",
    "std_logpdf",
    "std_cdf",
    "std_sf",
    "std_logcdf",
    "std_logsf",
    "std_pdf_deriv",
    "std_quantile",
    "standardize",
    "kurtosis",
]

_LOG_HALF = math.log(0.5)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _scalar_or_array(out):
    return float(out) if np.ndim(out) == 0 else out


class StandardForm(ABC):
    """A parent distribution in standard form.

    Subclasses implement the log-scale primitives; everything else derives from
    them.  ``score_terms`` is the fused hot path used by the likelihood.
    """

    name: str
    mean: float
    sd: float
    kurtosis: float
    symmetric: bool
    lower: float = -math.inf
    # False when the support depends on the location parameter, which makes
    # the location entries of the Fisher information diverge.
    location_regular: bool = True

    @abstractmethod
    def logpdf(self, v: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def logcdf(self, v: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def logsf(self, v: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def ppf(self, p: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def dlogpdf(self, v: np.ndarray) -> np.ndarray:
        """f'(v)/f(v) on the support."""

    def pdf(self, v):
        return np.exp(self.logpdf(v))

    def cdf(self, v):
        return np.exp(self.logcdf(v))

    def sf(self, v):
        return np.exp(self.logsf(v))

    def pdf_deriv(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(invalid="ignore"):
            out = self.pdf(v) * self.dlogpdf(v)
        return np.where(self.pdf(v) > 0, out, 0.0)

    def score_terms(self, v: np.ndarray):
        """Return ``(log F, log S, log f, f/F, f/S, f'/f)`` at standardized points.

        Ratios are only meaningful where the corresponding log term is finite.
        """
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            log_cdf = self.logcdf(v)
            log_sf = self.logsf(v)
            log_pdf = self.logpdf(v)
            return (
                log_cdf,
                log_sf,
                log_pdf,
                np.exp(log_pdf - log_cdf),
                np.exp(log_pdf - log_sf),
                self.dlogpdf(v),
            )


class _Normal(StandardForm):
    name = "normal"
    mean = 0.0
    sd = 1.0
    kurtosis = 3.0
    symmetric = True

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)
        return -0.5 * v * v - _LOG_SQRT_2PI

    def logcdf(self, v):
        return special.log_ndtr(v)

    def logsf(self, v):
        return special.log_ndtr(-np.asarray(v, dtype=float))

    def ppf(self, p):
        return special.ndtri(p)

    def dlogpdf(self, v):
        return -np.asarray(v, dtype=float)

    def score_terms(self, v):
        log_cdf = special.log_ndtr(v)
        log_sf = special.log_ndtr(-v)
        log_pdf = -0.5 * v * v - _LOG_SQRT_2PI
        return (
            log_cdf,
            log_sf,
            log_pdf,
            np.exp(log_pdf - log_cdf),
            np.exp(log_pdf - log_sf),
            -v,
        )


class _Logistic(StandardForm):
    name = "logistic"
    mean = 0.0
    sd = math.pi / math.sqrt(3.0)
    kurtosis = 4.2
    symmetric = True

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)
        return special.log_expit(v) + special.log_expit(-v)

    def logcdf(self, v):
        return special.log_expit(v)

    def logsf(self, v):
        return special.log_expit(-np.asarray(v, dtype=float))

    def ppf(self, p):
        return special.logit(p)

    def dlogpdf(self, v):
        return -np.tanh(0.5 * np.asarray(v, dtype=float))

    def score_terms(self, v):
        log_cdf = special.log_expit(v)
        log_sf = special.log_expit(-v)
        # f = F(1-F), so f/F = 1-F and f/(1-F) = F.
        sf = special.expit(-v)
        cdf = special.expit(v)
        return log_cdf, log_sf, log_cdf + log_sf, sf, cdf, sf - cdf


class _Laplace(StandardForm):
    name = "laplace"
    mean = 0.0
    sd = math.sqrt(2.0)
    kurtosis = 6.0
    symmetric = True

    def logpdf(self, v):
        return _LOG_HALF - np.abs(v)

    def logcdf(self, v):
        v = np.asarray(v, dtype=float)
        tail = 0.5 * np.exp(-np.abs(v))
        return np.where(v < 0, _LOG_HALF + v, np.log1p(-tail))

    def logsf(self, v):
        return self.logcdf(-np.asarray(v, dtype=float))

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(p < 0.5, np.log(2.0 * p), -np.log(2.0 * (1.0 - p)))

    def dlogpdf(self, v):
        # Kink at 0: midpoint of the subdifferential [-1, 1] of -|v|.
        return -np.sign(v)

    def score_terms(self, v):
        a = np.abs(v)
        tail = 0.5 * np.exp(-a)
        lower = v < 0
        log_near = np.log1p(-tail)
        log_far = _LOG_HALF - a
        log_cdf = np.where(lower, log_far, log_near)
        log_sf = np.where(lower, log_near, log_far)
        hazard_near = tail / (1.0 - tail)
        return (
            log_cdf,
            log_sf,
            _LOG_HALF - a,
            np.where(lower, 1.0, hazard_near),
            np.where(lower, hazard_near, 1.0),
            -np.sign(v),
        )


class _Exponential(StandardForm):
    """Unit exponential, density ``e^{-v}`` on ``v > 0``."""

    name = "exponential"
    mean = 1.0
    sd = 1.0
    kurtosis = 9.0
    symmetric = False
    lower = 0.0
    location_regular = False

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v > 0, -v, -np.inf)

    def logcdf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(v > 0, np.log(-np.expm1(-np.maximum(v, 0.0))), -np.inf)

    def logsf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v > 0, -v, 0.0)

    def ppf(self, p):
        return -np.log1p(-np.asarray(p, dtype=float))

    def dlogpdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v > 0, -1.0, 0.0)

    def score_terms(self, v):
        inside = v > 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            vp = np.where(inside, v, 1.0)
            log_cdf = np.where(inside, np.log(-np.expm1(-vp)), -np.inf)
            return (
                log_cdf,
                np.where(inside, -v, 0.0),
                np.where(inside, -v, -np.inf),
                np.where(inside, 1.0 / np.expm1(vp), np.inf),
                np.where(inside, 1.0, 0.0),
                np.where(inside, -1.0, 0.0),
            )


class Family(enum.Enum):
    """The four parent populations."""

    NORMAL = "normal"
    LOGISTIC = "logistic"
    LAPLACE = "laplace"
    EXPONENTIAL = "exponential"

    @property
    def standard(self) -> StandardForm:
        return _STANDARD[self]

    @classmethod
    def parse(cls, name: str | Family) -> Family:
        if isinstance(name, Family):
            return name
        key = name.strip().lower().replace("_", "-")
        if key in _ALIASES:
            return _ALIASES[key]
        raise DomainError(f"unknown family {name!r}")


_STANDARD = {
    Family.NORMAL: _Normal(),
    Family.LOGISTIC: _Logistic(),
    Family.LAPLACE: _Laplace(),
    Family.EXPONENTIAL: _Exponential(),
}

_ALIASES = {
    "normal": Family.NORMAL,
    "gaussian": Family.NORMAL,
    "logistic": Family.LOGISTIC,
    "laplace": Family.LAPLACE,
    "exponential": Family.EXPONENTIAL,
    "exp": Family.EXPONENTIAL,
    "two-param-exp": Family.EXPONENTIAL,
    "twoparamexponential": Family.EXPONENTIAL,
}


def std_pdf(family: Family, v):
    return _scalar_or_array(family.standard.pdf(v))


def std_logpdf(family: Family, v):
    return _scalar_or_array(family.standard.logpdf(v))


def std_cdf(family: Family, v):
    return _scalar_or_array(family.standard.cdf(v))


def std_sf(family: Family, v):
    return _scalar_or_array(family.standard.sf(v))


def std_logcdf(family: Family, v):
    return _scalar_or_array(family.standard.logcdf(v))


def std_logsf(family: Family, v):
    return _scalar_or_array(family.standard.logsf(v))


def std_pdf_deriv(family: Family, v):
    """Derivative of the standard density.

    At the Laplace kink (v = 0) this returns 0, and for the exponential it is 0
    off the support.
    """
    return _scalar_or_array(family.standard.pdf_deriv(v))


def std_quantile(family: Family, p):
    """Inverse of ``std_cdf``; raises ``DomainError`` unless ``0 < p < 1``."""
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0) & (arr < 1)):
        raise DomainError(f"quantile needs 0 < p < 1, got {p!r}")
    return _scalar_or_array(family.standard.ppf(arr))


def kurtosis(family: Family) -> float:
    """Pearson (non-excess) kurtosis of the family."""
    return family.standard.kurtosis


@dataclass(frozen=True)
class LocationScaleModel:
    """A family together with location ``mu`` and scale ``sigma``.

    ``sigma`` is always the scale, never the variance.
    """

    family: Family
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be a positive finite number, got {self.sigma!r}")
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu!r}")

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    def pdf(self, x):
        return _scalar_or_array(self.family.standard.pdf(self.standardize(x)) / self.sigma)

    def logpdf(self, x):
        return _scalar_or_array(
            self.family.standard.logpdf(self.standardize(x)) - math.log(self.sigma)
        )

    def cdf(self, x):
        return _scalar_or_array(self.family.standard.cdf(self.standardize(x)))

    def quantile(self, p):
        return _scalar_or_array(self.mu + self.sigma * np.asarray(std_quantile(self.family, p)))

    @property
    def mean(self) -> float:
        return self.mu + self.sigma * self.family.standard.mean

    @property
    def sd(self) -> float:
        return self.sigma * self.family.standard.sd


def standardize(model: LocationScaleModel, x):
    """``(x - mu) / sigma``; the result may fall outside the family's support."""
    return _scalar_or_array(model.standardize(x))
