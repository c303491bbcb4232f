"""Maximum-likelihood estimation of (mu, sigma) from RSS or GRSS data.

The likelihood equations have no closed-form root, so the fit runs a
quasi-Newton search over ``(mu, log sigma)`` on standardized data, driven by
the analytic scores, from several deterministic starting points.  The best
candidate is then polished with Newton steps on a finite-difference Hessian of
the score, which also serves as the second-order check.

Two families need extra candidates besides the smooth stationary points:

* exponential: the log-likelihood can increase in ``mu`` right up to the
  support edge, so ``mu`` is kept below ``min(x) - boundary_gap * s`` (``s`` the
  sample SD) and the constrained optimum on that edge is always considered;
* Laplace: ``log f`` has kinks at ``mu = x_k`` where the maximum often sits.
  A kink is optimal when the score, with ``f'/f`` taken as 0 at the kink, is no
  larger in size than the one-sided jump ``(units at x_k) / sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .distributions import Family, LocationScaleModel
from .errors import BootstrapError, DomainError
from .fixtures import load_fixture
from .likelihood import Design, Mode, Score, Theta, design, evaluate
from .sampling import GrssDataset, RssDataset, draw_grss

__all__ = [
    "FitOptions",
    "FitResult",
    "BootstrapMSE",
    "fit_mle",
    "bootstrap_mse",
    "load_fixture",
]

_JITTER = ((0.0, 0.0), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5), (-0.5, -0.5))
_FD_STEP = 1e-5


@dataclass(frozen=True)
class FitOptions:
    score_tolerance: float = 1e-8
    max_iterations: int = 200
    multistart_count: int = 5
    boundary_gap: float = 1e-6

    def __post_init__(self):
        for name in ("score_tolerance", "max_iterations", "multistart_count", "boundary_gap"):
            if not getattr(self, name) > 0:
                raise DomainError(f"FitOptions.{name} must be positive")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of ``fit_mle``.

    ``hessian`` holds second differences of the log-likelihood in ``(mu, sigma)``
    at ``theta_hat``.  When ``converged`` is False the point is the best one
    found but fails stationarity or the curvature check; it is NaN if no start
    reached a finite likelihood.
    """

    theta_hat: Theta
    mode: Mode
    family: Family
    converged: bool
    loglik_at_opt: float
    hessian: np.ndarray
    score: Score
    iterations: int
    boundary_hit: bool = False
    kink: bool = False
    std_errors: tuple[float, float] | None = None
    message: str = ""


class _Candidate(NamedTuple):
    mu: float
    sigma: float
    ll: float
    kind: str  # "interior", "boundary" or "kink"


class _Problem:
    """Log-likelihood of standardized data as a function of (mu', sigma')."""

    def __init__(self, data: RssDataset, family: Family, mode: Mode, opts: FitOptions):
        raw = design(data, mode)
        x = raw.x
        if np.unique(x).size < 2:
            raise DomainError("fit_mle needs at least two distinct x values")
        self.loc = float(np.mean(x))
        self.scale = float(np.std(x, ddof=1))
        xs = (x - self.loc) / self.scale
        self.d = Design(xs, raw.a, raw.b, raw.const, True)
        self.family = family
        self.n = xs.size
        self.offset = self.n * math.log(self.scale)
        self.support_edge = float(xs.min()) if not family.standard.location_regular else math.inf
        self.bound = self.support_edge - opts.boundary_gap
        self.evals = 0

    def __call__(self, mu: float, sigma: float) -> tuple[float, float, float]:
        self.evals += 1
        if not sigma > 0 or not math.isfinite(mu) or not math.isfinite(sigma):
            return -math.inf, math.nan, math.nan
        return evaluate(self.family, self.d, mu, sigma)

    def hessian(self, mu: float, sigma: float, ll_g=None) -> np.ndarray:
        """Second differences from central differences of the analytic score."""
        h = _FD_STEP * sigma
        if ll_g is None:
            ll_g = self(mu, sigma)
        g0 = np.array(ll_g[1:])
        cols = []
        for k, (dm, ds) in enumerate(((h, 0.0), (0.0, h))):
            fwd = self(mu + dm, sigma + ds)
            bwd = self(mu - dm, sigma - ds)
            if math.isfinite(fwd[0]) and math.isfinite(bwd[0]):
                cols.append((np.array(fwd[1:]) - np.array(bwd[1:])) / (2 * h))
            elif math.isfinite(bwd[0]):
                cols.append((g0 - np.array(bwd[1:])) / h)
            elif math.isfinite(fwd[0]):
                cols.append((np.array(fwd[1:]) - g0) / h)
            else:
                cols.append(np.full(2, math.nan))
        hess = np.column_stack(cols)
        return 0.5 * (hess + hess.T)


def _bfgs(fun: Callable, y: np.ndarray, max_iter: int, gtol: float):
    """Minimise ``fun(y) -> (f, grad)`` by BFGS with Armijo backtracking.

    Steps are accepted on function value alone, so kinks cannot stall the
    curvature test.  Returns ``(y, f, iterations)``.
    """
    f, g = fun(y)
    if not math.isfinite(f):
        return y, f, 0
    hinv = np.eye(2)
    it = 0
    flat = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= gtol * (1.0 + abs(f)):
            break
        p = -hinv @ g
        slope = float(g @ p)
        if slope >= 0:
            hinv = np.eye(2)
            p = -g
            slope = float(g @ p)
        longest = np.max(np.abs(p))
        if longest > 1.0:
            p = p / longest
            slope /= longest
        t = 1.0
        while True:
            y_new = y + t * p
            f_new, g_new = fun(y_new)
            if math.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                return y, f, it
        s = y_new - y
        dg = g_new - g
        sy = float(s @ dg)
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(dg):
            if it == 1:
                hinv = np.eye(2) * sy / float(dg @ dg)
            rho = 1.0 / sy
            v = np.eye(2) - rho * np.outer(s, dg)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)
        # Creeping along a kink: give up after a few negligible decreases.
        flat = flat + 1 if f - f_new <= 1e-12 * (1.0 + abs(f)) else 0
        y, f, g = y_new, f_new, g_new
        if flat >= 3:
            break
    return y, f, it


def _run_start(prob: _Problem, mu0: float, sigma0: float, opts: FitOptions):
    bounded = math.isfinite(prob.bound)

    def to_theta(y):
        mu = prob.bound - math.exp(y[0]) if bounded else y[0]
        return mu, math.exp(y[1])

    def fun(y):
        if bounded and y[0] > 700:
            return math.inf, np.zeros(2)
        mu, sigma = to_theta(y)
        ll, g_mu, g_sigma = prob(mu, sigma)
        if not math.isfinite(ll):
            return math.inf, np.zeros(2)
        d0 = -math.exp(y[0]) * g_mu if bounded else g_mu
        return -ll, -np.array([d0, sigma * g_sigma])

    y0 = np.array([math.log(prob.bound - mu0) if bounded else mu0, math.log(sigma0)])
    y, f, it = _bfgs(fun, y0, opts.max_iterations, gtol=1e-6)
    mu, sigma = to_theta(y)
    return _Candidate(mu, sigma, -f, "interior"), it


def _starts(prob: _Problem, count: int):
    std = prob.family.standard
    sigma0 = 1.0 / std.sd
    mu0 = -sigma0 * std.mean
    out = []
    for k in range(count):
        dm, dw = _JITTER[k % len(_JITTER)]
        spread = 1 + k // len(_JITTER)
        mu = mu0 + dm * spread * sigma0
        sigma = sigma0 * math.exp(dw * spread)
        if mu >= prob.bound - 1e-3:
            mu = prob.bound - 0.1 * sigma0 * (k + 1)
        out.append((mu, sigma))
    return out


def _polish(prob: _Problem, mu: float, sigma: float, target: float, fix_mu: bool, max_steps: int = 30):
    """Newton iterations on (mu', sigma'), or sigma' alone when ``fix_mu``.

    Returns ``(mu, sigma, (ll, g_mu, g_sigma), hessian, steps)`` evaluated at the
    final point.
    """
    steps = 0
    while True:
        cur = prob(mu, sigma)
        hess = prob.hessian(mu, sigma, cur)
        ll, g = cur[0], np.array(cur[1:])
        gap = abs(g[1]) if fix_mu else np.max(np.abs(g))
        if gap <= target or steps >= max_steps or not np.all(np.isfinite(hess)):
            return mu, sigma, cur, hess, steps
        if fix_mu:
            step = np.array([0.0, -g[1] / hess[1, 1] if hess[1, 1] < 0 else g[1] * sigma**2])
        else:
            try:
                eig = np.linalg.eigvalsh(hess)
            except np.linalg.LinAlgError:
                return mu, sigma, cur, hess, steps
            if eig[-1] >= 0:
                return mu, sigma, cur, hess, steps
            step = -np.linalg.solve(hess, g)
        if abs(step[1]) > 0.5 * sigma:
            step *= 0.5 * sigma / abs(step[1])
        t = 1.0
        while t > 1e-10:
            mu_new, sigma_new = mu + t * step[0], sigma + t * step[1]
            if mu_new <= prob.bound:
                ll_new = prob(mu_new, sigma_new)[0]
                if math.isfinite(ll_new) and ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                    break
            t *= 0.5
        else:
            return mu, sigma, cur, hess, steps
        mu, sigma = mu_new, sigma_new
        steps += 1


def _profile_sigma(prob: _Problem, mu: float, sigma: float) -> tuple[float, float]:
    """Maximise over sigma' at fixed mu' with guarded Newton steps in log sigma."""
    w = math.log(sigma)
    ll, _, g = prob(mu, math.exp(w))
    if not math.isfinite(ll):
        return sigma, -math.inf
    for _ in range(60):
        s = math.exp(w)
        gw = s * g
        if abs(gw) <= 1e-10 * (1.0 + abs(ll)):
            break
        h = 1e-5
        gp = prob(mu, math.exp(w + h))
        gm = prob(mu, math.exp(w - h))
        curv = (math.exp(w + h) * gp[2] - math.exp(w - h) * gm[2]) / (2 * h)
        step = -gw / curv if curv < 0 and math.isfinite(curv) else math.copysign(0.5, gw)
        step = max(-1.0, min(1.0, step))
        t = 1.0
        while t > 1e-10:
            cand = prob(mu, math.exp(w + t * step))
            if math.isfinite(cand[0]) and cand[0] >= ll - 1e-12 * (1.0 + abs(ll)):
                break
            t *= 0.5
        else:
            break
        w += t * step
        ll, g = cand[0], cand[2]
    return math.exp(w), ll


def _extra_candidates(prob: _Problem, found: list[_Candidate]) -> list[_Candidate]:
    out = []
    best = max(found, key=lambda c: c.ll)
    sigma_start = best.sigma if math.isfinite(best.ll) else 1.0
    if math.isfinite(prob.bound):
        sigma, ll = _profile_sigma(prob, prob.bound, sigma_start)
        out.append(_Candidate(prob.bound, sigma, ll, "boundary"))
    if prob.family is Family.LAPLACE:
        xs = np.unique(prob.d.x)
        kinks = set()
        for c in found:
            if math.isfinite(c.ll):
                order = np.argsort(np.abs(xs - c.mu))
                kinks.update(float(xs[k]) for k in order[:2])
        for xk in sorted(kinks):
            sigma, ll = _profile_sigma(prob, xk, sigma_start)
            out.append(_Candidate(xk, sigma, ll, "kink"))
    return out


def _finalize(prob: _Problem, cand: _Candidate, mode: Mode, opts: FitOptions, iterations: int) -> FitResult:
    family = prob.family
    fix_mu = cand.kind != "interior"
    # Tolerance is stated in original units: score_orig = score_std / scale.
    ll_guess = cand.ll - prob.offset
    target = 0.1 * opts.score_tolerance * (1.0 + abs(ll_guess)) * prob.scale
    mu, sigma, (ll, g_mu, g_sigma), hess, steps = _polish(prob, cand.mu, cand.sigma, target, fix_mu)
    scale = prob.scale
    theta = Theta(float(prob.loc + scale * mu), float(scale * sigma))
    ll_orig = ll - prob.offset
    score = Score(float(g_mu / scale), float(g_sigma / scale))
    hessian = hess / scale**2
    tol = opts.score_tolerance * (1.0 + abs(ll_orig))
    finite_h = bool(np.all(np.isfinite(hessian)))
    boundary_hit = False
    kink = False
    if cand.kind == "interior":
        ok = (
            math.isfinite(ll_orig)
            and max(abs(score.d_mu), abs(score.d_sigma)) <= tol
            and finite_h
            and bool(np.all(np.linalg.eigvalsh(hessian) < 0))
        )
        message = "interior stationary point" if ok else "interior point failed stationarity or curvature check"
    elif cand.kind == "boundary":
        boundary_hit = True
        ok = (
            math.isfinite(ll_orig)
            and abs(score.d_sigma) <= tol
            and score.d_mu >= -tol
            and finite_h
            and hessian[1, 1] < 0
        )
        message = "optimum on the support boundary" if ok else "boundary point is not a constrained maximum"
    else:
        kink = True
        at_kink = int(np.count_nonzero(prob.d.x == mu))
        ok = (
            math.isfinite(ll_orig)
            and abs(score.d_sigma) <= tol
            and abs(score.d_mu) <= at_kink / theta.sigma + tol
            and finite_h
            and hessian[1, 1] < 0
        )
        message = "optimum at a density kink" if ok else "kink point is not a maximum"
    return FitResult(
        theta_hat=theta,
        mode=mode,
        family=family,
        converged=bool(ok),
        loglik_at_opt=ll_orig,
        hessian=hessian,
        score=score,
        iterations=iterations + steps,
        boundary_hit=boundary_hit,
        kink=kink,
        message=message,
    )


def fit_mle(
    data: RssDataset,
    family: Family | str,
    mode: Mode | str = Mode.GRSS,
    opts: FitOptions | None = None,
    with_std_errors: bool = False,
) -> FitResult:
    """Maximum-likelihood estimate of ``(mu, sigma)``.

    Parameters
    ----------
    data : RssDataset or GrssDataset
        GRSS mode needs the ``z`` counts; RSS mode ignores them.
    family, mode : parent family and which likelihood to maximise.
    opts : FitOptions, optional
    with_std_errors : bool
        Attach asymptotic standard errors from the expected information at
        ``theta_hat`` (adds a few quadratures).

    Returns
    -------
    FitResult
        ``converged`` is False, never a fabricated estimate, when no start
        reaches a stationary maximum.
    """
    family = Family.parse(family)
    mode = Mode.parse(mode)
    opts = opts or FitOptions()
    prob = _Problem(data, family, mode, opts)

    found = []
    iterations = 0
    for mu0, sigma0 in _starts(prob, opts.multistart_count):
        cand, it = _run_start(prob, mu0, sigma0, opts)
        found.append(cand)
        iterations += it
    found.extend(_extra_candidates(prob, found))
    finite = sorted((c for c in found if math.isfinite(c.ll)), key=lambda c: -c.ll)
    if not finite:
        nan = math.nan
        return FitResult(
            Theta(nan, nan), mode, family, False, -math.inf,
            np.full((2, 2), nan), Score(nan, nan), iterations,
            message="no start reached a finite likelihood",
        )

    first = None
    tried: list[_Candidate] = []
    for cand in finite:
        if any(
            c.kind == cand.kind
            and abs(c.mu - cand.mu) <= 1e-6 * (1 + abs(c.mu))
            and abs(c.sigma - cand.sigma) <= 1e-6 * c.sigma
            for c in tried
        ):
            continue
        tried.append(cand)
        result = _finalize(prob, cand, mode, opts, iterations)
        first = first or result
        if result.converged:
            break
    else:
        result = first

    if with_std_errors and result.converged:
        from .information import fit_std_errors

        result = replace(result, std_errors=fit_std_errors(result, data.m, data.r))
    return result


class BootstrapMSE(NamedTuple):
    location: float
    scale: float
    used: int
    dropped: int


def _bootstrap_refit(args):
    model, family, mode, m, r, seed, sampler, opts = args
    rng = np.random.default_rng(seed)
    data = sampler(model, m, r, rng)
    if mode is Mode.RSS and isinstance(data, GrssDataset):
        data = data.to_rss()
    fit = fit_mle(data, family, mode, opts)
    return fit.converged, fit.theta_hat.mu, fit.theta_hat.sigma


def bootstrap_mse(
    fit: FitResult,
    family: Family | str,
    m: int,
    r: int,
    B: int,
    rng: np.random.Generator | int | None = None,
    *,
    mode: Mode | str | None = None,
    strict_paper: bool = False,
    sampler: Callable = draw_grss,
    opts: FitOptions | None = None,
    workers: int = 1,
) -> BootstrapMSE:
    """Parametric-bootstrap dispersion ``sum((theta_b - theta_hat)**2) / (B - 1)``.

    Datasets are simulated from the fitted model (or from a normal with the
    fitted location and scale when ``strict_paper``) and refitted.  Replicate
    ``b`` draws from its own child stream of ``rng``, so the result does not
    depend on ``workers``.  Non-converged refits are dropped; more than 10%
    drops raise ``BootstrapError``.
    """
    if not fit.converged:
        raise DomainError("bootstrap needs a converged fit")
    if B < 2:
        raise DomainError("bootstrap needs B >= 2")
    family = Family.parse(family)
    mode = Mode.parse(mode) if mode is not None else fit.mode
    mu_hat, sigma_hat = fit.theta_hat
    model = LocationScaleModel(Family.NORMAL if strict_paper else family, mu_hat, sigma_hat)
    root = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    seeds = root.bit_generator.seed_seq.spawn(B)
    tasks = [(model, family, mode, m, r, s, sampler, opts) for s in seeds]

    from .simulation import parallel_map

    results = parallel_map(_bootstrap_refit, tasks, workers)
    ok = np.array([c for c, _, _ in results], dtype=bool)
    dropped = int(B - ok.sum())
    if dropped > 0.1 * B:
        raise BootstrapError(f"{dropped} of {B} bootstrap refits failed to converge")
    mus = np.array([mu for _, mu, _ in results])[ok]
    sigmas = np.array([s for _, _, s in results])[ok]
    used = int(ok.sum())
    denom = used - 1
    return BootstrapMSE(
        float(np.sum((mus - mu_hat) ** 2) / denom),
        float(np.sum((sigmas - sigma_hat) ** 2) / denom),
        used,
        dropped,
    )
