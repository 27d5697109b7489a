import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from skillshift import corpus, strata
from skillshift.errors import DomainError, SingularDesign

from conftest import make_posting


@pytest.mark.parametrize("lat, key", [(40.05, 40.1), (40.04, 40.0), (-40.05, -40.1), (0.25, 0.3), (-0.25, -0.3)])
def test_market_key_rounds_half_away_from_zero(lat, key):
    assert strata.market_key(lat, 0.0) == (key, 0.0)


def test_large_markets_need_top_decile_every_year():
    ps = []
    for y in (2010, 2018):
        for m in range(10):
            n = 20 if m == 0 or (m == 1 and y == 2010) else 2
            ps += [make_posting(["a"], year=y, lat=float(m), lon=0.0) for _ in range(n)]
    assert strata.large_markets(ps, (2010, 2018)) == {(0.0, 0.0)}


def test_large_employers_strictly_more_than_ten():
    ps = [make_posting(["a"], year=y, employer=e) for y in (2010, 2018)
          for e, n in (("big", 11), ("edge", 10), ("", 50)) for _ in range(n)]
    assert strata.large_employers(ps, (2010, 2018)) == {"big"}


def test_stratify_partitions_postings():
    ps = [make_posting(["a"], year=y, employer=f"e{i % 3}", lat=float(i % 4)) for y in (2010, 2018)
          for i in range(60)]
    strat = strata.stratify_by_size(ps, (2010, 2018), employer_min_posts=5)
    assert sum(len(v) for v in strat.subsets.values()) == len(ps)
    assert set(strat.subsets) == set(strata.SUBSETS)


@pytest.mark.parametrize("counts, want", [([1], 1.0), ([1, 1], 0.5), ([5, 3, 2], 0.38)])
def test_hhi_hand_values(counts, want):
    assert strata.hhi(counts) == want


@settings(max_examples=100)
@given(st.lists(st.integers(1, 100), min_size=1, max_size=20))
def test_hhi_bounds(counts):
    h = strata.hhi(counts)
    assert 1 / len(counts) - 1e-12 <= h <= 1 + 1e-12


def test_employer_concentration_cell():
    ps = [make_posting(["a"], employer=e) for e in "aaaaabbbcc"] + [make_posting(["a"], employer="z", year=2018)]
    assert strata.employer_concentration(ps, "11-1000", (40.0, -75.0), 2010) == pytest.approx(0.38)
    table = strata.hhi_table(ps)
    assert table[("11-1000", (40.0, -75.0), 2018)] == 1.0


@pytest.mark.parametrize("occ, lf, dominant", [(0.80, 0.50, True), (0.75, 0.50, True), (0.25, 0.17, True),
                                               (0.70, 0.50, False)])
def test_dominance_worked_examples(occ, lf, dominant):
    dom = strata.demographic_dominance([("11-1000", "g", occ, lf)], threshold=1.5)
    assert ("g" in dom["11-1000"]) is dominant


def test_dominance_ratio_rounding():
    assert strata.dominance_ratio(0.80, 0.50) == 1.6
    assert strata.dominance_ratio(0.25, 0.17) == 1.5
    assert strata.dominance_ratio(0.25, 0.17, decimals=None) == pytest.approx(25 / 17)
    with pytest.raises(DomainError):
        strata.demographic_dominance([("o", "g", 1.2, 0.5)])


def test_education_shift_hand_value():
    ps = ([make_posting(["a"], occupation="11-0001", education_years=12)] * 2
          + [make_posting(["a", "b"], occupation="11-0001", year=2018, education_years=12)] * 2
          + [make_posting(["b"], occupation="11-0002", year=2018, education_years=16)] * 2)
    snaps = corpus.build_snapshots(ps, core_quantile=1.0)
    edu = strata.education_means(ps)
    # b demanded in 2018 by both occupations: (12 + 16) / 2 = 14; focal 2010 mean is 12
    assert strata.education_cost_shift("11-0001", 2010, 2018, snaps, edu) == pytest.approx(2.0)


def test_education_coverage_threshold():
    ps = [make_posting(["a"], education_years=16)] + [make_posting(["a"])] * 19
    assert strata.education_means(ps, coverage=0.1)[("11-1000", 2010)] is None
    assert strata.education_means(ps, coverage=0.05)[("11-1000", 2010)] == 16.0


def test_spearman_hand_value():
    r, _ = strata.correlate([1, 2, 3], [1, 3, 2], "spearman")
    assert r == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=4, max_size=30))
def test_correlations_match_oracles(pairs):
    x, y = np.array(pairs).T
    if np.ptp(x) < 1e-6 or np.ptp(y) < 1e-6:
        return
    r, p = strata.correlate(x, y, "pearson")
    want = stats.pearsonr(x, y)
    assert r == pytest.approx(want[0], abs=1e-10)
    rs, _ = strata.correlate(x, y, "spearman")
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    if np.ptp(rx) and np.ptp(ry):
        assert rs == pytest.approx(np.corrcoef(rx, ry)[0, 1], abs=1e-10)


def normal_equations(X, y):
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    resid = y - X @ beta
    sigma2 = resid @ resid / (len(y) - X.shape[1])
    return beta, np.sqrt(np.diag(sigma2 * np.linalg.inv(X.T @ X))), resid


@pytest.mark.parametrize("seed", range(20))
def test_ols_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    n, p = rng.integers(8, 30), rng.integers(1, 4)
    X = rng.standard_normal((n, p))
    y = X @ rng.standard_normal(p) + rng.standard_normal(n)
    fit = strata.ols_fit(X, y)
    beta, se, resid = normal_equations(np.column_stack([np.ones(n), X]), y)
    assert np.allclose(fit.coef, beta, atol=1e-8)
    assert np.allclose(fit.se, se, atol=1e-8)
    assert fit.r2 == pytest.approx(1 - resid @ resid / np.sum((y - y.mean()) ** 2), abs=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_fixed_effects_match_dummy_regression(seed):
    rng = np.random.default_rng(100 + seed)
    g = rng.integers(0, 4, size=40)
    g[:4] = range(4)
    X = rng.standard_normal((40, 2))
    y = X @ [0.5, -1.0] + g * 0.7 + rng.standard_normal(40)
    fit = strata.ols_fit(X, y, fixed_effects=g)
    D = (g[:, None] == np.arange(4)).astype(float)
    beta, se, resid = normal_equations(np.column_stack([X, D]), y)
    assert np.allclose(fit.coef, beta[:2], atol=1e-8)
    assert np.allclose(fit.se, se[:2], atol=1e-8)
    assert fit.r2 == pytest.approx(1 - resid @ resid / np.sum((y - y.mean()) ** 2), abs=1e-8)
    assert fit.n_groups == 4 and fit.df_resid == 40 - 2 - 4


def test_singular_design_names_column():
    X = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(SingularDesign) as exc:
        strata.ols_fit(X, np.arange(10.0) ** 2, names=["a", "b"])
    assert exc.value.columns == ["b"]


def test_fixed_effects_absorb_group_constant_regressor():
    g = np.repeat([0, 1, 2], 4)
    with pytest.raises(SingularDesign):
        strata.ols_fit(g.astype(float), np.arange(12.0), names=["grp"], fixed_effects=g)


def test_regression_table_layout():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20, 1))
    fits = {"a_long_model_name": strata.ols_fit(X, X[:, 0] + rng.standard_normal(20), names=["x"]),
            "another_long_name": strata.ols_fit(X, rng.standard_normal(20), names=["x"])}
    header = strata.format_regression_table(fits).splitlines()[0].split()
    assert header == list(fits)
