"""Monte Carlo bias and MSE of the RSS and GRSS maximum-likelihood estimators.

Each replicate draws one GRSS dataset and fits every requested mode to it, so
the RSS fit sees exactly the GRSS measurements without their counts.  Replicate
``k`` of a run seeded with ``s`` draws from ``SeedSequence(s, spawn_key=(k,))``,
the same stream ``SeedSequence(s).spawn(N)[k]`` would give.  Results are
gathered in replicate order and reduced with one numpy sum, so they do not
depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .distributions import Family, LocationScaleModel
from .errors import DomainError
from .estimation import bootstrap_mse, fit_mle
from .fixtures import FIXTURE_TRUTH, load_fixture
from .likelihood import Mode
from .sampling import draw_grss

__all__ = [
    "SimConfig",
    "SimCell",
    "SimSummary",
    "TableRow",
    "FixtureRow",
    "run_sim",
    "run_table",
    "table_grid",
    "write_table_csv",
    "format_table_csv",
    "table_file_name",
    "fixture_report",
    "format_fixture_report",
    "parallel_map",
    "TABLE_SIGMAS",
    "TABLE_DESIGNS",
]

# Scale of the three table groups, keyed by the tag used in file names.
TABLE_SIGMAS = {"3": 3.0, "0.2": 0.2, "1": 1.0}
# (m, r) cells of one table group, in print order.
TABLE_DESIGNS = tuple((3, r) for r in (5, 10, 15, 20, 25)) + tuple(
    (5, r) for r in (3, 6, 9, 12, 15)
)
MAX_DROP_FRACTION = 0.05
CSV_HEADER = ("n", "m", "r", "estimator", "param", "bias", "mse", "used", "dropped")


def parallel_map(func: Callable, items: Sequence, workers: int = 1) -> list:
    """``[func(x) for x in items]``, optionally across worker processes.

    Output order always follows ``items``.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunksize))


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell.  ``sigma`` is the scale, not the variance."""

    family: Family
    mu: float
    sigma: float
    m: int
    r: int
    replicates: int
    seed: int
    modes: tuple[Mode, ...] = (Mode.RSS, Mode.GRSS)

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        modes = tuple(dict.fromkeys(Mode.parse(x) for x in self.modes))
        if not modes:
            raise DomainError("at least one mode is required")
        object.__setattr__(self, "modes", modes)
        if not (math.isfinite(self.mu) and self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"need finite mu and sigma > 0, got mu={self.mu}, sigma={self.sigma}")
        for name in ("m", "r", "replicates", "seed"):
            value = getattr(self, name)
            if int(value) != value:
                raise DomainError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.m < 1 or self.r < 1:
            raise DomainError(f"need m >= 1 and r >= 1, got m={self.m}, r={self.r}")
        if self.replicates < 2:
            raise DomainError("need at least 2 replicates")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def n(self) -> int:
        return self.m * self.r


class SimCell(NamedTuple):
    mode: Mode
    param: str
    bias: float
    mse: float
    used: int
    dropped: int

    @property
    def variance(self) -> float:
        """Spread about the replicate mean, ``mse - bias**2``."""
        return self.mse - self.bias**2


@dataclass(frozen=True)
class SimSummary:
    config: SimConfig
    cells: tuple[SimCell, ...]

    @property
    def valid(self) -> bool:
        """False when any mode lost more than 5% of replicates to non-convergence."""
        return all(c.dropped <= MAX_DROP_FRACTION * self.config.replicates for c in self.cells)

    def cell(self, mode: Mode | str, param: str) -> SimCell:
        mode = Mode.parse(mode)
        for c in self.cells:
            if c.mode is mode and c.param == param:
                return c
        raise KeyError((mode, param))


def _replicate(config: SimConfig, index: int) -> np.ndarray:
    """``(mu_hat, sigma_hat, converged)`` per mode for replicate ``index``."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(index,)))
    model = LocationScaleModel(config.family, config.mu, config.sigma)
    data = draw_grss(model, config.m, config.r, rng)
    out = np.empty((len(config.modes), 3))
    for k, mode in enumerate(config.modes):
        fit = fit_mle(data if mode is Mode.GRSS else data.to_rss(), config.family, mode)
        out[k] = (fit.theta_hat.mu, fit.theta_hat.sigma, float(fit.converged))
    return out


def run_sim(config: SimConfig, workers: int = 1) -> SimSummary:
    """Bias ``mean(theta_hat - theta)`` and MSE ``mean((theta_hat - theta)**2)``.

    Averages run over converged replicates only; dropped counts are reported
    per mode and the summary is flagged invalid above 5% drops.
    """
    results = np.stack(parallel_map(partial(_replicate, config), range(config.replicates), workers))
    truth = (config.mu, config.sigma)
    cells = []
    for k, mode in enumerate(config.modes):
        ok = results[:, k, 2] == 1.0
        used = int(ok.sum())
        for j, param in enumerate(("mu", "sigma")):
            if used:
                err = results[ok, k, j] - truth[j]
                bias, mse = float(np.sum(err) / used), float(np.sum(err * err) / used)
            else:
                bias = mse = math.nan
            cells.append(SimCell(mode, param, bias, mse, used, config.replicates - used))
    return SimSummary(config, tuple(cells))


class TableRow(NamedTuple):
    n: int
    m: int
    r: int
    estimator: str
    param: str
    bias: float
    mse: float
    used: int
    dropped: int


def _cell_seed(root: int, family: Family, sigma_tag: str, m: int, r: int) -> int:
    # A distinct, reproducible 64-bit seed per table cell.
    words = [root, list(Family).index(family), list(TABLE_SIGMAS).index(sigma_tag), m, r]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def table_grid(
    family: Family | str,
    sigma_tag: str,
    seed: int,
    replicates: int,
    mu: float = 5.0,
    designs: Iterable[tuple[int, int]] = TABLE_DESIGNS,
) -> list[SimConfig]:
    """The configurations behind one family's table pair at scale ``TABLE_SIGMAS[sigma_tag]``."""
    family = Family.parse(family)
    if sigma_tag not in TABLE_SIGMAS:
        raise DomainError(f"unknown sigma tag {sigma_tag!r}; choose from {list(TABLE_SIGMAS)}")
    return [
        SimConfig(family, mu, TABLE_SIGMAS[sigma_tag], m, r, replicates,
                  _cell_seed(seed, family, sigma_tag, m, r))
        for m, r in designs
    ]


def run_table(grid: Sequence[SimConfig], workers: int = 1) -> list[TableRow]:
    """One row per (config, mode, parameter), in grid order."""
    grid = list(grid)
    if not grid:
        raise DomainError("empty simulation grid")
    rows = []
    for config in grid:
        summary = run_sim(config, workers)
        for c in summary.cells:
            rows.append(TableRow(config.n, config.m, config.r, c.mode.value.upper(),
                                 c.param, c.bias, c.mse, c.used, c.dropped))
    return rows


def _g6(x: float) -> str:
    return f"{x:.6g}"


def format_table_csv(rows: Iterable[TableRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([row.n, row.m, row.r, row.estimator, row.param,
                         _g6(row.bias), _g6(row.mse), row.used, row.dropped])
    return buf.getvalue()


def table_file_name(family: Family | str, sigma_tag: str) -> str:
    return f"{Family.parse(family).value}_sigma{sigma_tag}.csv"


def write_table_csv(path: str | os.PathLike, rows: Iterable[TableRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_table_csv(rows))


class FixtureRow(NamedTuple):
    family: str
    estimator: str
    mu_hat: float
    sigma_hat: float
    bias_mu: float
    bias_sigma: float
    mse_mu: float
    mse_sigma: float
    converged: bool


def fixture_report(
    B: int = 10_000,
    seed: int | None = 0,
    workers: int = 1,
    strict_paper: bool = False,
    families: Iterable[Family | str] = tuple(Family),
) -> list[FixtureRow]:
    """RSS and GRSS fits to the four example datasets, with bootstrap MSEs.

    Bias is ``theta_hat - (5, 3)``.  ``B = 0`` skips the bootstrap (MSE NaN).
    Each (family, estimator) bootstrap uses its own child of ``seed``.
    """
    rows = []
    entropy = np.random.SeedSequence(seed).entropy
    mu0, sigma0 = FIXTURE_TRUTH
    for family in (Family.parse(f) for f in families):
        data = load_fixture(family)
        for k, mode in enumerate((Mode.RSS, Mode.GRSS)):
            fit = fit_mle(data if mode is Mode.GRSS else data.to_rss(), family, mode)
            stream = np.random.SeedSequence(entropy, spawn_key=(list(Family).index(family), k))
            mse = (math.nan, math.nan)
            if B and fit.converged:
                boot = bootstrap_mse(fit, family, data.m, data.r, B, np.random.default_rng(stream),
                                     strict_paper=strict_paper, workers=workers)
                mse = (boot.location, boot.scale)
            mu, sigma = fit.theta_hat
            rows.append(FixtureRow(family.value, mode.value.upper(), mu, sigma,
                                   mu - mu0, sigma - sigma0, mse[0], mse[1], fit.converged))
    return rows


def format_fixture_report(rows: Iterable[FixtureRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FixtureRow._fields)
    for row in rows:
        writer.writerow([row.family, row.estimator] + [_g6(v) for v in row[2:8]]
                        + [str(row.converged).lower()])
    return buf.getvalue()
