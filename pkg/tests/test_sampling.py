import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from grss.distributions import Family, LocationScaleModel
from grss.errors import DatasetError, DomainError
from grss.sampling import (
    GrssDataset,
    RssDataset,
    draw_grss,
    draw_order_statistic,
    draw_rss,
    format_dataset,
    parse_dataset,
    read_dataset,
    write_dataset,
    z_marginal_pmf,
    z_marginal_pmf_vector,
)

from conftest import ALL_FAMILIES

STD_NORMAL = LocationScaleModel(Family.NORMAL, 0.0, 1.0)


def _pmf_by_quadrature(i, m, z):
    """P(Z = z) as the integral of the binomial pmf against Beta(i, m - i + 1)."""
    beta = stats.beta(i, m - i + 1)
    val, _ = integrate.quad(lambda u: stats.binom.pmf(z, m, u) * beta.pdf(u), 0, 1, epsabs=1e-13)
    return val


def test_pmf_small_cases():
    assert z_marginal_pmf(1, 1, 0) == pytest.approx(0.5, abs=1e-15)
    assert z_marginal_pmf(1, 1, 1) == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(z_marginal_pmf_vector(1, 2), [1 / 2, 1 / 3, 1 / 6], atol=1e-15)


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5, 7])
def test_pmf_matches_quadrature_and_beta_binomial(m):
    for i in range(1, m + 1):
        pmf = z_marginal_pmf_vector(i, m)
        oracle = [_pmf_by_quadrature(i, m, z) for z in range(m + 1)]
        np.testing.assert_allclose(pmf, oracle, atol=1e-10)
        np.testing.assert_allclose(pmf, stats.betabinom(m, i, m - i + 1).pmf(range(m + 1)), atol=1e-12)
        assert math.fsum(pmf) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("args", [(0, 3, 1), (4, 3, 1), (1, 3, -1), (1, 3, 4)])
def test_pmf_domain(args):
    with pytest.raises(DomainError):
        z_marginal_pmf(*args)


def test_order_statistic_single_unit_is_plain_draw():
    rng = np.random.default_rng(1)
    draws = [draw_order_statistic(STD_NORMAL, 1, 1, rng) for _ in range(4000)]
    assert stats.kstest(draws, "norm").pvalue > 0.01


def test_order_statistic_probability_mean():
    rng = np.random.default_rng(2)
    data = draw_rss(STD_NORMAL, 3, 100_000, rng)
    u = stats.norm.cdf(data.x[data.rank == 2])
    assert abs(u.mean() - 0.5) <= 0.005


def _sorted_draws(model, i, m, n, rng):
    sets = model.mu + model.sigma * model.family.standard.ppf(rng.random((n, m)))
    return np.sort(sets, axis=1)[:, i - 1]


@pytest.mark.parametrize("family", [Family.NORMAL, Family.EXPONENTIAL])
@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_beta_quantile_sampler_matches_sorting(family, m):
    model = LocationScaleModel(family, 1.0, 2.0)
    rng = np.random.default_rng(100 + m)
    for i in range(1, m + 1):
        beta_draws = [draw_order_statistic(model, i, m, rng) for _ in range(2000)]
        sort_draws = _sorted_draws(model, i, m, 2000, rng)
        assert stats.ks_2samp(beta_draws, sort_draws).pvalue > 0.01 / m


def test_ks_example_first_of_five():
    rng = np.random.default_rng(3)
    beta_draws = [draw_order_statistic(STD_NORMAL, 1, 5, rng) for _ in range(10_000)]
    sort_draws = _sorted_draws(STD_NORMAL, 1, 5, 10_000, rng)
    assert stats.ks_2samp(beta_draws, sort_draws).pvalue > 0.01


def test_rank_three_mean_is_expected_maximum():
    rng = np.random.default_rng(4)
    data = draw_rss(STD_NORMAL, 3, 10_000, rng)
    oracle = _sorted_draws(STD_NORMAL, 3, 3, 400_000, np.random.default_rng(5)).mean()
    assert oracle == pytest.approx(0.8463, abs=0.005)
    assert abs(data.x[data.rank == 3].mean() - oracle) <= 0.01


def test_set_size_one_gives_iid_draws():
    data = draw_rss(STD_NORMAL, 1, 10, np.random.default_rng(6))
    assert data.n == 10 and np.all(data.rank == 1)


@pytest.mark.parametrize("m, r", [(1, 1), (2, 3), (3, 5), (5, 4)])
def test_cardinality_and_layout(m, r):
    data = draw_grss(STD_NORMAL, m, r, np.random.default_rng(7))
    assert data.n == m * r == data.x.size
    assert np.array_equal(data.rank, np.tile(np.arange(1, m + 1), r))
    assert np.array_equal(data.cycle, np.repeat(np.arange(1, r + 1), m))
    assert data.z.min() >= 0 and data.z.max() <= m


def test_rss_and_grss_share_measurements():
    model = LocationScaleModel(Family.LOGISTIC, 5, 3)
    g = draw_grss(model, 3, 7, np.random.default_rng(8))
    r = draw_rss(model, 3, 7, np.random.default_rng(8))
    assert np.array_equal(g.x, r.x)
    assert g.to_rss() == r


def test_determinism():
    model = LocationScaleModel(Family.LAPLACE, 5, 3)
    a = draw_grss(model, 4, 6, np.random.default_rng(9))
    b = draw_grss(model, 4, 6, np.random.default_rng(9))
    assert a == b
    assert a != draw_grss(model, 4, 6, np.random.default_rng(10))


def test_counts_are_binomial_given_x():
    # Refit z | x: the count minus m F(x) averages to zero with the binomial SD.
    model = LocationScaleModel(Family.NORMAL, 5, 3)
    m = 4
    data = draw_grss(model, m, 25_000, np.random.default_rng(11))
    p = model.cdf(data.x)
    resid = data.z - m * p
    se = math.sqrt(np.sum(m * p * (1 - p))) / data.n
    assert abs(resid.mean()) <= 4 * se
    # Conditional variance matches m p (1 - p) on average.
    assert np.mean(resid**2) == pytest.approx(np.mean(m * p * (1 - p)), rel=0.03)


def test_median_unit_gives_fair_coin():
    rng = np.random.default_rng(12)
    zs = [draw_grss(STD_NORMAL, 1, 1, rng).z[0] for _ in range(4000)]
    assert abs(np.mean(zs) - 0.5) <= 4 * math.sqrt(0.25 / 4000)


@pytest.mark.parametrize("family", ALL_FAMILIES)
def test_count_pmf_by_rank_is_family_free(family):
    m = 3
    data = draw_grss(LocationScaleModel(family, -2.0, 0.5), m, 30_000, np.random.default_rng(13))
    for i in range(1, m + 1):
        counts = np.bincount(data.z[data.rank == i], minlength=m + 1)
        expected = counts.sum() * z_marginal_pmf_vector(i, m)
        assert stats.chisquare(counts, expected).pvalue > 0.001


def test_dataset_validation():
    with pytest.raises(DatasetError):
        RssDataset(2, 1, [0.0, 1.0], [1, 1], [1, 1])  # repeated (rank, cycle)
    with pytest.raises(DatasetError):
        RssDataset(2, 1, [0.0], [1], [1])  # wrong cardinality
    with pytest.raises(DatasetError):
        RssDataset(2, 1, [0.0, math.nan], [1, 2], [1, 1])
    with pytest.raises(DatasetError):
        RssDataset(2, 1, [0.0, 1.0], [1, 3], [1, 1])
    with pytest.raises(DatasetError):
        GrssDataset(2, 1, [0.0, 1.0], [1, 2], [1, 1], [0, 3])  # z > m
    with pytest.raises(DatasetError):
        GrssDataset(2, 1, [0.0, 1.0], [1, 2], [1, 1], [0.5, 1])
    with pytest.raises(DatasetError):
        GrssDataset(2, 1, [0.0, 1.0], [1, 2], [1, 1])


def test_dataset_sorted_and_immutable():
    d = GrssDataset.from_observations(2, 2, [(4.0, 1, 2, 2), (1.0, 0, 1, 1), (3.0, 2, 1, 2), (2.0, 2, 2, 1)])
    assert d.x.tolist() == [1.0, 2.0, 3.0, 4.0]
    assert d.z.tolist() == [0, 2, 2, 1]
    with pytest.raises(ValueError):
        d.x[0] = 9.0
    obs = d.observations[3]
    assert (obs.x, obs.z, obs.rank, obs.cycle) == (4.0, 1, 2, 2)


def test_affine_preserves_counts():
    d = draw_grss(STD_NORMAL, 3, 2, np.random.default_rng(14))
    e = d.affine(2.0, 3.0)
    np.testing.assert_allclose(e.x, 2 + 3 * d.x)
    assert np.array_equal(e.z, d.z)
    with pytest.raises(DomainError):
        d.affine(0.0, -1.0)


@settings(max_examples=50, deadline=None)
@given(
    m=st.integers(1, 5),
    r=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
    with_z=st.booleans(),
)
def test_text_round_trip(m, r, seed, with_z):
    data = draw_grss(LocationScaleModel(Family.LOGISTIC, 5, 3), m, r, np.random.default_rng(seed))
    if not with_z:
        data = data.to_rss()
    text = format_dataset(data, seed=seed)
    assert text.splitlines()[0] == f"m={m} r={r} seed={seed}"
    assert len(text.splitlines()) == m * r + 1
    back = parse_dataset(text)
    assert type(back) is type(data) and back == data


def test_file_round_trip(tmp_path):
    data = draw_grss(STD_NORMAL, 2, 3, np.random.default_rng(15))
    path = tmp_path / "d.txt"
    write_dataset(path, data)
    assert read_dataset(path) == data
    buf = io.StringIO()
    write_dataset(buf, data)
    assert parse_dataset(buf.getvalue()) == data


@pytest.mark.parametrize(
    "text",
    ["", "m=2\n1 1 0.0\n", "m=1 r=1\n1 1\n", "m=1 r=1\n1 1 x\n", "m=2 r=1\n1 1 0.0 0\n1 2 1.0\n", "m=1 r=1\n1 1 0.0 5\n"],
)
def test_parse_rejects_malformed(text):
    with pytest.raises(DatasetError):
        parse_dataset(text)
