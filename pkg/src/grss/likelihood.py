"""Log-likelihoods and analytic scores for RSS and GRSS data.

For a unit of rank ``i`` with count ``z`` and standardized value
``v = (x - mu) / sigma`` the GRSS log-likelihood contributes

    log[i C(m, z) C(m, i)] + (z + i - 1) log F(v) + (2m - z - i) log(1 - F(v))
        + log f(v) - log sigma

and the plain RSS log-likelihood is the same with ``z`` removed from both
exponents (``i - 1`` and ``m - i``) and from the constant.  The difference of
the two is the conditional binomial factor of ``z`` given ``x``.

A zero exponent times ``log 0`` counts as 0; a positive one gives ``-inf``.
``log 0`` can only arise at the support boundary of the exponential family, or
when tail probabilities underflow beyond |v| ~ 1e154 (Normal), which never
occurs in practice.
"""

from __future__ import annotations

import enum
import math
from typing import NamedTuple

import numpy as np
from scipy import special

from .distributions import Family
from .errors import DomainError, EvaluationError
from .sampling import GrssDataset, RssDataset

__all__ = [
    "Mode",
    "Theta",
    "Score",
    "Design",
    "design",
    "evaluate",
    "grss_loglik",
    "rss_loglik",
    "binomial_loglik",
    "grss_score",
    "rss_score",
    "binomial_score",
    "loglik",
    "score",
]


class Mode(enum.Enum):
    RSS = "rss"
    GRSS = "grss"

    @classmethod
    def parse(cls, name: str | Mode) -> Mode:
        if isinstance(name, Mode):
            return name
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise DomainError(f"unknown mode {name!r}") from None


class Theta(NamedTuple):
    mu: float
    sigma: float


class Score(NamedTuple):
    d_mu: float
    d_sigma: float


class Design(NamedTuple):
    """Per-observation exponents of ``log F`` and ``log(1 - F)`` plus the constant.

    ``density`` is False for the binomial factor, which has no ``log f`` terms
    and no ``-n log sigma``.
    """

    x: np.ndarray
    a: np.ndarray
    b: np.ndarray
    const: float
    density: bool

    @property
    def n(self) -> int:
        return self.x.size


def _log_comb(m: int, k: np.ndarray) -> np.ndarray:
    return special.gammaln(m + 1) - special.gammaln(k + 1) - special.gammaln(m - k + 1)


def design(data: RssDataset, kind: str | Mode) -> Design:
    """Coefficient arrays for ``kind`` in {"grss", "rss", "binomial"}."""
    kind = kind.value if isinstance(kind, Mode) else kind
    m = data.m
    i = data.rank.astype(float)
    if kind == "rss":
        const = float(np.sum(np.log(i) + _log_comb(m, i)))
        return Design(data.x, i - 1.0, m - i, const, True)
    if not isinstance(data, GrssDataset):
        raise DomainError(f"{kind} likelihood needs z counts (a GrssDataset)")
    z = data.z.astype(float)
    if kind == "grss":
        const = float(np.sum(np.log(i) + _log_comb(m, z) + _log_comb(m, i)))
        return Design(data.x, z + i - 1.0, 2.0 * m - z - i, const, True)
    if kind == "binomial":
        return Design(data.x, z, m - z, float(np.sum(_log_comb(m, z))), False)
    raise DomainError(f"unknown likelihood kind {kind!r}")


def evaluate(
    family: Family, d: Design, mu: float, sigma: float, with_score: bool = True
) -> tuple[float, float, float]:
    """Return ``(loglik, d/dmu, d/dsigma)``; scores are NaN when loglik is -inf."""
    std = family.standard
    v = (d.x - mu) / sigma
    if std.lower > -math.inf:
        outside = v <= std.lower
        if outside.any():
            # Below the support f = F = 0: fatal for a density term or a
            # positive log F exponent, otherwise the unit contributes nothing.
            if d.density or np.any(d.a[outside] > 0):
                return -math.inf, math.nan, math.nan
            inside = ~outside
            d = Design(d.x[inside], d.a[inside], d.b[inside], d.const, False)
            v = v[inside]
    # Away from a support boundary every log term is finite, so plain dot
    # products are safe even where an exponent is zero.
    log_cdf, log_sf, log_pdf, h_cdf, h_sf, psi = std.score_terms(v)
    total = d.const + np.dot(d.a, log_cdf) + np.dot(d.b, log_sf)
    if d.density:
        total += np.sum(log_pdf) - d.n * math.log(sigma)
    ll = float(total)
    if math.isnan(ll) or ll == -math.inf:
        return -math.inf, math.nan, math.nan
    if not with_score:
        return ll, math.nan, math.nan
    g = d.b * h_sf - d.a * h_cdf
    if d.density:
        g -= psi
        d_sigma = (float(np.dot(v, g)) - d.n) / sigma
    else:
        d_sigma = float(np.dot(v, g)) / sigma
    return ll, float(np.sum(g)) / sigma, d_sigma


def _theta(theta) -> Theta:
    mu, sigma = float(theta[0]), float(theta[1])
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return Theta(mu, sigma)


def _loglik(kind, data, family, theta) -> float:
    t = _theta(theta)
    return evaluate(Family.parse(family), design(data, kind), t.mu, t.sigma, with_score=False)[0]


def _score(kind, data, family, theta) -> Score:
    t = _theta(theta)
    ll, d_mu, d_sigma = evaluate(Family.parse(family), design(data, kind), t.mu, t.sigma)
    if ll == -math.inf:
        raise EvaluationError(f"{kind} log-likelihood is -inf at mu={t.mu}, sigma={t.sigma}")
    return Score(d_mu, d_sigma)


def grss_loglik(data: GrssDataset, family: Family, theta) -> float:
    """Full GRSS log-likelihood, constant included; may be ``-inf``."""
    return _loglik("grss", data, family, theta)


def rss_loglik(data: RssDataset, family: Family, theta) -> float:
    """RSS log-likelihood (``z`` ignored if present); may be ``-inf``."""
    return _loglik("rss", data, family, theta)


def binomial_loglik(data: GrssDataset, family: Family, theta) -> float:
    """Log of the conditional probability of the counts given the measurements."""
    return _loglik("binomial", data, family, theta)


def grss_score(data: GrssDataset, family: Family, theta) -> Score:
    return _score("grss", data, family, theta)


def rss_score(data: RssDataset, family: Family, theta) -> Score:
    return _score("rss", data, family, theta)


def binomial_score(data: GrssDataset, family: Family, theta) -> Score:
    return _score("binomial", data, family, theta)


def loglik(data: RssDataset, family: Family, theta, mode: Mode | str) -> float:
    return _loglik(Mode.parse(mode).value, data, family, theta)


def score(data: RssDataset, family: Family, theta, mode: Mode | str) -> Score:
    return _score(Mode.parse(mode).value, data, family, theta)
