import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from topocf.errors import RankDeficient, TooFewSamples
from topocf.explain import design_matrix, ols_fit, pearson_corr, significance_format, stars, t_two_sided_p


def planted(M=200, C=3, noise=0.1, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(M, C))
    beta = rng.normal(size=C)
    y = 0.5 + X @ beta + noise * rng.normal(size=M)
    return X, y, beta


@given(st.integers(0, 10_000))
def test_ols_matches_normal_equations(seed):
    X, y, _ = planted(M=30, C=3, seed=seed)
    rep = ols_fit(X, y)
    A = np.column_stack([np.ones(len(y)), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    resid = y - A @ beta
    df = len(y) - 4
    se = np.sqrt(np.diag(np.linalg.inv(A.T @ A)) * (resid @ resid) / df)
    t = beta / se
    p = 2 * stats.t.sf(np.abs(t), df)
    assert np.allclose(np.r_[rep.intercept, rep.coef], beta, atol=1e-10)
    assert np.allclose(rep.se, se, rtol=1e-8)
    assert np.allclose(rep.p, p, rtol=1e-6, atol=1e-14)
    r2 = 1 - resid @ resid / ((y - y.mean()) ** 2).sum()
    assert rep.r2 == pytest.approx(r2)
    assert rep.adj_r2 == pytest.approx(1 - (1 - r2) * (len(y) - 1) / df)


@given(st.floats(-50, 50), st.integers(1, 200))
def test_t_p_value_matches_scipy(t, df):
    assert t_two_sided_p(t, df) == pytest.approx(2 * stats.t.sf(abs(t), df), rel=1e-9, abs=1e-300)


def test_rank_deficient_names_dependent_column():
    X, y, _ = planted(M=40, C=2)
    X = np.column_stack([X, X[:, 0] + X[:, 1]])
    with pytest.raises(RankDeficient) as exc:
        ols_fit(X, y, ["a", "b", "c"])
    assert len(exc.value.dropped) == 1


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        ols_fit(np.ones((3, 2)), np.ones(3))


def test_constant_response_has_zero_r2():
    X, _, _ = planted(M=20, C=2)
    rep = ols_fit(X, np.full(20, 3.0))
    assert rep.r2 == 0.0 and rep.intercept == pytest.approx(3.0)


def test_condition_warning():
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    X = np.column_stack([x, x + 1e-3 * rng.normal(size=50)])
    rep = ols_fit(X, x + rng.normal(size=50))
    assert rep.condition_number > 30 and rep.warnings


def test_design_matrix_standardizes_and_drops_constants():
    rows = [[1.0, 5.0, 2.0], [2.0, 5.0, 4.0], [3.0, 5.0, 9.0]]
    D = design_matrix(rows, ["a", "b", "c"])
    assert D.names == ("a", "c") and D.dropped == ("b",)
    assert np.allclose(D.X.mean(0), 0) and np.allclose(np.sqrt((D.X ** 2).mean(0)), 1)


def test_pearson_matches_numpy():
    X, _, _ = planted(M=25, C=4)
    assert np.allclose(pearson_corr(X), np.corrcoef(X.T), atol=1e-12)


def test_significance_format():
    X, y, beta = planted(M=300, C=3, noise=0.01)
    rows = significance_format(ols_fit(X, y, ["a", "b", "c"]))
    assert [r["rank"] for r in rows] == [1, 2, 3]
    assert rows[0]["abs"] >= rows[1]["abs"] >= rows[2]["abs"]
    assert all(r["stars"] == "***" for r in rows)
    assert stars(0.02) == "*" and stars(0.2) == ""
