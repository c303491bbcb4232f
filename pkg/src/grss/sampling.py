"""Ranked set sampling with binomial side counts, under perfect ranking.

A cycle selects, for each rank ``i = 1..m``, the ``i``-th order statistic of an
independent set of ``m`` units.  The augmented scheme pairs every measured unit
``x`` with ``z``, the number of ``m`` fresh unmeasured units not exceeding it,
so that ``z | x ~ Bin(m, F(x))``.

Random layout
-------------
A dataset with ``r`` cycles consumes one block of ``r * m * (m + 1)`` uniforms
from its generator, laid out as ``u[cycle, rank, purpose]``.  Purpose 0 drives
the order statistic (through the Beta(i, m - i + 1) quantile) and purposes
``1..m`` are the fresh units behind the count.  Every (cycle, rank, purpose)
tuple therefore owns a fixed position of the stream, and ``draw_rss`` and
``draw_grss`` given the same stream share their ``x`` values.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, NamedTuple

import numpy as np
from scipy import special

from .distributions import LocationScaleModel
from .errors import DatasetError, DomainError

__all__ = [
    "GrssObservation",
    "RssDataset",
    "GrssDataset",
    "draw_order_statistic",
    "draw_rss",
    "draw_grss",
    "z_marginal_pmf",
    "z_marginal_pmf_vector",
    "write_dataset",
    "read_dataset",
    "format_dataset",
    "parse_dataset",
]

# Shifts a 53-bit uniform k / 2**53 to the midpoint of its cell, inside (0, 1).
_HALF_ULP = 2.0**-54


class GrssObservation(NamedTuple):
    x: float
    z: int | None
    rank: int
    cycle: int


def _as_int_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DatasetError(f"{name} must be one-dimensional")
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise DatasetError(f"{name} must hold integers")
    return arr.astype(np.int64)


@dataclass(frozen=True, eq=False)
class RssDataset:
    """A ranked set sample of size ``m * r``.

    Observations are stored sorted by (cycle, rank).  Arrays are read-only.
    """

    m: int
    r: int
    x: np.ndarray
    rank: np.ndarray
    cycle: np.ndarray

    def __post_init__(self):
        m, r = int(self.m), int(self.r)
        if m < 1 or r < 1:
            raise DatasetError(f"need m >= 1 and r >= 1, got m={self.m}, r={self.r}")
        x = np.asarray(self.x, dtype=float)
        rank = _as_int_array(self.rank, "rank")
        cycle = _as_int_array(self.cycle, "cycle")
        if not (x.ndim == 1 and x.size == rank.size == cycle.size):
            raise DatasetError("x, rank and cycle must be 1-d arrays of equal length")
        if x.size != m * r:
            raise DatasetError(f"expected m*r = {m * r} observations, got {x.size}")
        if not np.all(np.isfinite(x)):
            raise DatasetError("x values must be finite")
        if rank.min() < 1 or rank.max() > m:
            raise DatasetError(f"ranks must lie in 1..{m}")
        if cycle.min() < 1 or cycle.max() > r:
            raise DatasetError(f"cycles must lie in 1..{r}")
        key = (cycle - 1) * m + (rank - 1)
        order = np.argsort(key, kind="stable")
        if not np.array_equal(key[order], np.arange(m * r)):
            raise DatasetError("each (rank, cycle) pair must appear exactly once")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "r", r)
        for name, arr in (("x", x), ("rank", rank), ("cycle", cycle)):
            arr = np.array(arr[order])
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        self._finish(order)

    def _finish(self, order: np.ndarray) -> None:
        pass

    @property
    def n(self) -> int:
        return self.m * self.r

    @property
    def observations(self) -> list[GrssObservation]:
        return [
            GrssObservation(float(x), None, int(i), int(j))
            for x, i, j in zip(self.x, self.rank, self.cycle)
        ]

    def affine(self, a: float, b: float) -> RssDataset:
        """The dataset with every ``x`` replaced by ``a + b * x`` (``b > 0``)."""
        if not b > 0:
            raise DomainError("affine map needs b > 0 to preserve ranks")
        return RssDataset(self.m, self.r, a + b * self.x, self.rank, self.cycle)

    def to_rss(self) -> RssDataset:
        return self

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return (
            self.m == other.m
            and self.r == other.r
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.rank, other.rank)
            and np.array_equal(self.cycle, other.cycle)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GrssDataset(RssDataset):
    """A ranked set sample where every measured unit carries its count ``z``."""

    z: np.ndarray = field(default=None)

    def _finish(self, order: np.ndarray) -> None:
        if self.z is None:
            raise DatasetError("GrssDataset needs z counts")
        z = _as_int_array(self.z, "z")
        if z.size != self.n:
            raise DatasetError("z must have one entry per observation")
        if z.min() < 0 or z.max() > self.m:
            raise DatasetError(f"z counts must lie in 0..{self.m}")
        z = np.array(z[order])
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    @classmethod
    def from_observations(cls, m: int, r: int, observations) -> GrssDataset:
        obs = list(observations)
        return cls(
            m,
            r,
            [o[0] for o in obs],
            [o[2] for o in obs],
            [o[3] for o in obs],
            [o[1] for o in obs],
        )

    @property
    def observations(self) -> list[GrssObservation]:
        return [
            GrssObservation(float(x), int(z), int(i), int(j))
            for x, z, i, j in zip(self.x, self.z, self.rank, self.cycle)
        ]

    def affine(self, a: float, b: float) -> GrssDataset:
        if not b > 0:
            raise DomainError("affine map needs b > 0 to preserve ranks")
        return GrssDataset(self.m, self.r, a + b * self.x, self.rank, self.cycle, self.z)

    def to_rss(self) -> RssDataset:
        return RssDataset(self.m, self.r, self.x, self.rank, self.cycle)

    def __eq__(self, other):
        base = super().__eq__(other)
        if base is NotImplemented or not base:
            return base
        return np.array_equal(self.z, other.z)

    __hash__ = None


def _open_uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.random(shape) + _HALF_ULP


def draw_order_statistic(
    model: LocationScaleModel, i: int, m: int, rng: np.random.Generator
) -> float:
    """One draw of the ``i``-th order statistic of ``m`` units from ``model``."""
    if not 1 <= i <= m:
        raise DomainError(f"rank {i} outside 1..{m}")
    p = special.betaincinv(i, m - i + 1, _open_uniforms(rng, None))
    return float(model.mu + model.sigma * model.family.standard.ppf(p))


def _draw_cells(model: LocationScaleModel, m: int, r: int, rng: np.random.Generator):
    if m < 1 or r < 1:
        raise DomainError(f"need m >= 1 and r >= 1, got m={m}, r={r}")
    u = _open_uniforms(rng, (r, m, m + 1))
    ranks = np.arange(1, m + 1)
    p = special.betaincinv(ranks, m - ranks + 1, u[:, :, 0])
    x = model.mu + model.sigma * model.family.standard.ppf(p)
    # Fresh unit k lies at or below x exactly when its uniform is <= F(x) = p.
    z = np.count_nonzero(u[:, :, 1:] <= p[:, :, None], axis=2)
    cycle = np.repeat(np.arange(1, r + 1), m)
    rank = np.tile(ranks, r)
    return x.ravel(), z.ravel(), rank, cycle


def draw_grss(
    model: LocationScaleModel, m: int, r: int, rng: np.random.Generator
) -> GrssDataset:
    x, z, rank, cycle = _draw_cells(model, m, r, rng)
    return GrssDataset(m, r, x, rank, cycle, z)


def draw_rss(
    model: LocationScaleModel, m: int, r: int, rng: np.random.Generator
) -> RssDataset:
    x, _, rank, cycle = _draw_cells(model, m, r, rng)
    return RssDataset(m, r, x, rank, cycle)


def z_marginal_pmf(i: int, m: int, z: int) -> float:
    """Marginal probability that the count paired with rank ``i`` equals ``z``.

    The count is beta-binomial: ``C(m, z) B(z + i, 2m - z - i + 1) / B(i, m - i + 1)``,
    which involves neither the family nor the parameters.  Evaluated exactly in
    rational arithmetic.
    """
    if not 1 <= i <= m:
        raise DomainError(f"rank {i} outside 1..{m}")
    if not 0 <= z <= m:
        raise DomainError(f"count {z} outside 0..{m}")
    return float(
        math.comb(m, z) * _beta_int(z + i, 2 * m - z - i + 1) / _beta_int(i, m - i + 1)
    )


def _beta_int(a: int, b: int) -> Fraction:
    return Fraction(math.factorial(a - 1) * math.factorial(b - 1), math.factorial(a + b - 1))


def z_marginal_pmf_vector(i: int, m: int) -> np.ndarray:
    return np.array([z_marginal_pmf(i, m, z) for z in range(m + 1)])


# --- text format ---------------------------------------------------------


def format_dataset(data: RssDataset, seed: int | None = None) -> str:
    header = f"m={data.m} r={data.r}"
    if seed is not None:
        header += f" seed={seed}"
    lines = [header]
    has_z = isinstance(data, GrssDataset)
    for k in range(data.n):
        line = f"{data.cycle[k]} {data.rank[k]} {data.x[k]:.16e}"
        if has_z:
            line += f" {data.z[k]}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def parse_dataset(text: str) -> RssDataset:
    """Parse the whitespace-separated text format written by ``format_dataset``."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise DatasetError("empty dataset file")
    header = {}
    for token in rows[0]:
        key, sep, value = token.partition("=")
        if not sep:
            raise DatasetError(f"malformed header token {token!r}")
        header[key] = value
    try:
        m, r = int(header["m"]), int(header["r"])
    except (KeyError, ValueError) as exc:
        raise DatasetError("header must read 'm=<int> r=<int>'") from exc
    body = rows[1:]
    widths = {len(row) for row in body}
    if not body or not widths <= {3, 4} or len(widths) != 1:
        raise DatasetError("observation lines must all be 'cycle rank x' or 'cycle rank x z'")
    try:
        cycle = [int(row[0]) for row in body]
        rank = [int(row[1]) for row in body]
        x = [float(row[2]) for row in body]
        z = [int(row[3]) for row in body] if widths == {4} else None
    except ValueError as exc:
        raise DatasetError(f"unparseable observation line: {exc}") from exc
    if z is None:
        return RssDataset(m, r, x, rank, cycle)
    return GrssDataset(m, r, x, rank, cycle, z)


def write_dataset(path: str | os.PathLike | IO[str], data: RssDataset, seed: int | None = None) -> None:
    text = format_dataset(data, seed)
    if isinstance(path, io.TextIOBase) or hasattr(path, "write"):
        path.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def read_dataset(path: str | os.PathLike) -> RssDataset:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read())
