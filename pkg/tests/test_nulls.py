import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcovfdr.nulls import (GammaNull, fit_gamma_null, gamma_pvalue, gamma_pvalues_grouped,
                           probit_transform)


def test_unit_moments_give_unit_exponential():
    s = 1 / math.sqrt(2)
    null = fit_gamma_null([1 - s, 1 + s])
    assert null.shape == pytest.approx(1.0, rel=1e-12)
    assert null.scale == pytest.approx(1.0, rel=1e-12)


def test_mean_two_variance_two():
    null = fit_gamma_null([1.0, 3.0])
    assert (null.shape, null.scale) == pytest.approx((2.0, 1.0), rel=1e-12)
    assert null.mean == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("bad", [[1.0, 1.0, 1.0], [1.0], [-1.0, -3.0], [1.0, np.nan]])
def test_fit_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        fit_gamma_null(bad)


def test_implied_mean_matches_source():
    t = np.random.default_rng(0).gamma(3.0, 0.4, size=500)
    null = fit_gamma_null(t)
    assert null.mean == pytest.approx(t.mean(), rel=1e-12)
    assert null.source_moments[0] == t.mean()


def test_pvalue_examples():
    unit = GammaNull(1.0, 1.0)
    assert gamma_pvalue(unit, 0.0) == 1.0
    assert gamma_pvalue(unit, 1.0) == pytest.approx(math.exp(-1), abs=1e-12)
    far = gamma_pvalue(unit, 100.0)
    assert far > 0
    assert far == pytest.approx(math.exp(-100), rel=1e-10)


def test_pvalue_rejects_negative():
    with pytest.raises(ValueError):
        gamma_pvalue(GammaNull(1.0, 1.0), -0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.2, 20), st.floats(0.05, 5), st.floats(0, 30), st.floats(1e-3, 5))
def test_pvalue_decreasing(shape, scale, t, dt):
    null = GammaNull(shape, scale)
    assert gamma_pvalue(null, t + dt) <= gamma_pvalue(null, t)


def test_pvalue_strictly_decreasing_on_grid():
    null = GammaNull(2.0, 0.7)
    p = gamma_pvalue(null, np.linspace(0, 20, 400))
    assert (np.diff(p) < 0).all()


def test_pvalue_calibrated_on_gamma_draws():
    rng = np.random.default_rng(1)
    null = GammaNull(2.5, 0.4)
    p = gamma_pvalue(null, rng.gamma(2.5, 0.4, size=10_000))
    for u in np.arange(0.1, 0.95, 0.1):
        sd = math.sqrt(u * (1 - u) / p.size)
        assert abs(np.mean(p <= u) - u) < 3 * sd


def test_probit_of_null_pvalues_is_standard_normal():
    rng = np.random.default_rng(2)
    t = rng.gamma(4.0, 0.25, size=10_000)
    z, clamped = probit_transform(gamma_pvalue(fit_gamma_null(t), t))
    assert abs(z.mean()) < 0.05 and abs(z.std() - 1) < 0.05
    assert clamped == 0


def test_probit_examples():
    assert probit_transform(0.5) == (0.0, 0)
    z, _ = probit_transform(0.025)
    assert z == pytest.approx(-1.959963984540054, abs=1e-12)
    z, clamped = probit_transform(1e-300)
    assert clamped == 1
    assert z == pytest.approx(-7.941345326170997, abs=1e-9)


def test_probit_counts_every_clamp():
    _, clamped = probit_transform(np.array([0.0, 1.0, 0.3, 1e-20]))
    assert clamped == 3


def test_grouped_nulls_fit_separately():
    rng = np.random.default_rng(3)
    t = np.concatenate([rng.gamma(2, 0.5, 300), rng.gamma(2, 2.0, 300)])
    groups = np.repeat(["chr1", "chr2"], 300)
    p, nulls = gamma_pvalues_grouped(t, groups)
    assert set(nulls) == {"chr1", "chr2"}
    assert nulls["chr2"].mean > 3 * nulls["chr1"].mean
    np.testing.assert_allclose(p[:300], gamma_pvalue(nulls["chr1"], t[:300]))
    p_global, nulls_global = gamma_pvalues_grouped(t)
    assert list(nulls_global) == [None]
