import math

import numpy as np
import pytest
import scipy.stats
import statsmodels.api as sm
from hypothesis import given, settings, strategies as st
from statsmodels.stats.outliers_influence import variance_inflation_factor

from issue_surprisal.errors import DomainError, RankDeficient, SampleSizeError
from issue_surprisal.stats import (
    Series,
    average_ranks,
    cohens_kappa,
    descriptive,
    kappa_gate,
    kendall_tau,
    nested_f_test,
    ols_regression,
    pearson,
    shapiro_wilk,
    spearman,
    vif,
)

RNG = np.random.default_rng(20240301)

finite_floats = st.floats(min_value=-1e6, max_value=1e6,
                          allow_nan=False, allow_infinity=False)


def series(values, label=""):
    return Series(tuple(float(v) for v in values), label=label)


class TestSeries:
    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            Series((1.0, float("nan")))
        with pytest.raises(DomainError):
            Series((1.0, float("inf")))

    def test_descriptive(self):
        d = descriptive(series([1, 2, 3, 4]))
        assert d.n == 4
        assert d.mean == pytest.approx(2.5)
        assert d.std == pytest.approx(np.std([1, 2, 3, 4], ddof=1))
        assert (d.minimum, d.maximum) == (1.0, 4.0)

    def test_descriptive_empty(self):
        with pytest.raises(DomainError):
            descriptive(series([]))


class TestShapiroWilk:
    @pytest.mark.parametrize("n", [3, 4, 5, 6, 8, 11, 12, 25, 50, 200, 1000])
    def test_matches_scipy(self, n):
        x = RNG.normal(size=n)
        got = shapiro_wilk(series(x))
        ref = scipy.stats.shapiro(x)
        assert got.statistic == pytest.approx(ref.statistic, abs=1e-6)
        assert got.p_value == pytest.approx(ref.pvalue, abs=1e-4)

    @pytest.mark.parametrize("n", [10, 30, 100])
    def test_matches_scipy_skewed(self, n):
        x = RNG.exponential(size=n)
        got = shapiro_wilk(series(x))
        ref = scipy.stats.shapiro(x)
        assert got.statistic == pytest.approx(ref.statistic, abs=1e-6)
        assert got.p_value == pytest.approx(ref.pvalue, abs=1e-4)

    def test_sample_size_bounds(self):
        with pytest.raises(SampleSizeError):
            shapiro_wilk(series([1, 2]))
        with pytest.raises(SampleSizeError):
            shapiro_wilk(series(RNG.normal(size=5001)))

    def test_identical_values(self):
        with pytest.raises(DomainError):
            shapiro_wilk(series([3, 3, 3, 3]))

    @given(st.lists(finite_floats, min_size=5, max_size=40, unique=True))
    @settings(max_examples=50, deadline=None)
    def test_w_in_unit_interval(self, values):
        got = shapiro_wilk(series(values))
        assert 0.0 < got.statistic <= 1.0
        assert 0.0 <= got.p_value <= 1.0


class TestPearson:
    def test_matches_scipy(self):
        x = RNG.normal(size=30)
        y = 0.4 * x + RNG.normal(size=30)
        got = pearson(series(x), series(y))
        ref = scipy.stats.pearsonr(x, y)
        assert got.statistic == pytest.approx(ref.statistic, abs=1e-10)
        assert got.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    def test_perfect_correlation(self):
        got = pearson(series([1, 2, 3, 4]), series([2, 4, 6, 8]))
        assert got.statistic == pytest.approx(1.0)
        assert got.p_value == 0.0

    def test_zero_variance(self):
        with pytest.raises(DomainError):
            pearson(series([1, 1, 1]), series([1, 2, 3]))

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            pearson(series([1, 2]), series([1, 2, 3]))

    @given(st.lists(st.tuples(finite_floats, finite_floats), min_size=4, max_size=30))
    @settings(max_examples=50, deadline=None)
    def test_symmetry(self, pairs):
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        if np.std(xs) == 0 or np.std(ys) == 0:
            return
        ab = pearson(series(xs), series(ys))
        ba = pearson(series(ys), series(xs))
        assert ab.statistic == pytest.approx(ba.statistic, abs=1e-12)


class TestRanks:
    def test_ties_get_average_rank(self):
        assert list(average_ranks([10, 20, 20, 30])) == [1.0, 2.5, 2.5, 4.0]

    def test_matches_scipy_rankdata(self):
        x = RNG.integers(0, 5, size=40)
        assert np.allclose(average_ranks(x), scipy.stats.rankdata(x))


class TestSpearman:
    def test_matches_scipy_with_ties(self):
        x = RNG.integers(0, 6, size=25).astype(float)
        y = x + RNG.normal(size=25)
        got = spearman(series(x), series(y))
        ref = scipy.stats.spearmanr(x, y)
        assert got.statistic == pytest.approx(ref.statistic, abs=1e-10)
        assert got.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    def test_equals_pearson_of_ranks(self):
        x = RNG.normal(size=20)
        y = RNG.normal(size=20)
        got = spearman(series(x), series(y))
        via_ranks = pearson(series(average_ranks(x)), series(average_ranks(y)))
        assert got.statistic == pytest.approx(via_ranks.statistic, abs=1e-12)

    @given(st.lists(st.tuples(st.integers(-10**6, 10**6), finite_floats),
                    min_size=4, max_size=25, unique_by=lambda p: p[0]))
    @settings(max_examples=50, deadline=None)
    def test_monotone_transform_invariance(self, pairs):
        xs = [float(p[0]) for p in pairs]
        ys = [p[1] for p in pairs]
        if np.std(ys) == 0:
            return
        plain = spearman(series(xs), series(ys))
        warped = spearman(series([math.atan(v / 1e6) for v in xs]), series(ys))
        assert plain.statistic == pytest.approx(warped.statistic, abs=1e-9)


class TestKendall:
    def test_exact_small_sample_matches_scipy(self):
        x, y = [1, 2, 3, 4, 5], [1, 3, 2, 5, 4]
        got = kendall_tau(series(x), series(y))
        ref = scipy.stats.kendalltau(x, y)
        assert got.statistic == pytest.approx(0.6, abs=1e-12)
        assert got.p_value == pytest.approx(ref.pvalue, abs=1e-10)
        assert got.p_value == pytest.approx(0.2333333333, abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scipy_asymptotic_with_ties(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 4, size=30).astype(float)
        y = rng.integers(0, 4, size=30).astype(float)
        if np.std(x) == 0 or np.std(y) == 0:
            return
        got = kendall_tau(series(x), series(y))
        ref = scipy.stats.kendalltau(x, y, method="asymptotic")
        assert got.statistic == pytest.approx(ref.statistic, abs=1e-10)
        assert got.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    def test_all_tied(self):
        with pytest.raises(DomainError):
            kendall_tau(series([1, 1, 1]), series([1, 2, 3]))

    def test_reversed_ranking(self):
        got = kendall_tau(series([1, 2, 3, 4]), series([4, 3, 2, 1]))
        assert got.statistic == pytest.approx(-1.0)


class TestKappa:
    def test_perfect_agreement(self):
        assert cohens_kappa([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_chance_agreement_is_zero(self):
        # po = 0.5 and pe = 0.5 with balanced marginals.
        assert cohens_kappa([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(0.0)

    def test_known_value_point_six(self):
        a = [1, 1, 1, 1, 1, 5, 5, 5, 5, 5]
        b = [1, 1, 1, 1, 5, 5, 5, 5, 5, 1]
        assert cohens_kappa(a, b) == pytest.approx(0.6, abs=1e-12)

    def test_constant_identical_raters(self):
        assert cohens_kappa([2, 2, 2], [2, 2, 2]) == 1.0

    def test_gate(self):
        assert kappa_gate(0.7) and kappa_gate(0.9)
        assert not kappa_gate(0.69)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            cohens_kappa([1], [1, 2])


def _design(n=40, k=3, seed=7):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, k))
    beta = np.arange(1, k + 1, dtype=float)
    y = 2.0 + X @ beta + rng.normal(size=n)
    return X, y


class TestOls:
    def test_matches_statsmodels(self):
        X, y = _design()
        got = ols_regression(X.tolist(), series(y))
        ref = sm.OLS(y, sm.add_constant(X)).fit()
        assert np.allclose(got.coefficients, ref.params, atol=1e-9)
        assert got.r_squared == pytest.approx(ref.rsquared, abs=1e-10)
        assert got.f_statistic == pytest.approx(ref.fvalue, abs=1e-8)
        assert got.f_p_value == pytest.approx(ref.f_pvalue, abs=1e-10)
        assert np.allclose(got.residuals, ref.resid, atol=1e-9)

    def test_rank_deficient(self):
        X = np.ones((10, 2))
        X[:, 1] = 2 * X[:, 0]
        with pytest.raises(RankDeficient):
            ols_regression(X.tolist(), series(RNG.normal(size=10)))

    def test_too_few_rows(self):
        with pytest.raises(SampleSizeError):
            ols_regression([[1.0, 2.0], [2.0, 1.0], [3.0, 4.0]], series([1, 2, 3]))


class TestNestedF:
    def test_matches_statsmodels_compare_f_test(self):
        X, y = _design(n=50, k=4)
        full = ols_regression(X.tolist(), series(y))
        null = ols_regression(X[:, :1].tolist(), series(y))
        got = nested_f_test(null, full)
        ref_full = sm.OLS(y, sm.add_constant(X)).fit()
        ref_null = sm.OLS(y, sm.add_constant(X[:, :1])).fit()
        f_ref, p_ref, _ = ref_full.compare_f_test(ref_null)
        assert got.statistic == pytest.approx(f_ref, abs=1e-8)
        assert got.p_value == pytest.approx(p_ref, abs=1e-10)

    def test_self_comparison_is_zero(self):
        X, y = _design(n=30, k=2)
        model = ols_regression(X.tolist(), series(y))
        got = nested_f_test(model, model)
        assert got.statistic == 0.0 and got.p_value == 1.0

    def test_rejects_non_nested(self):
        X, y = _design(n=30, k=3)
        big = ols_regression(X.tolist(), series(y))
        small = ols_regression(X[:, :1].tolist(), series(y))
        with pytest.raises(DomainError):
            nested_f_test(big, small)


class TestVif:
    def test_matches_statsmodels(self):
        X, _ = _design(n=60, k=4, seed=11)
        X[:, 3] = 0.9 * X[:, 0] + 0.1 * RNG.normal(size=60)
        got = vif(X.tolist())
        design = sm.add_constant(X)
        ref = [variance_inflation_factor(design, j + 1) for j in range(4)]
        # statsmodels includes the intercept in the auxiliary regressions,
        # as does our implementation (ols_regression always adds one).
        assert np.allclose(got, ref, atol=1e-8)

    def test_at_least_one(self):
        X, _ = _design(n=30, k=3, seed=3)
        assert all(v >= 1.0 - 1e-12 for v in vif(X.tolist()))

    def test_exact_collinearity(self):
        X = RNG.normal(size=(20, 2))
        X = np.column_stack([X, X[:, 0] + X[:, 1]])
        with pytest.raises(RankDeficient):
            vif(X.tolist())
