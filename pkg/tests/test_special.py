"""Survival functions and regularized incomplete gamma/beta.

scipy appears here only as an independent oracle; the library under test
computes everything itself.
"""

import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from petcast.errors import ValidationError
from petcast.special import chi2_sf, f_sf, regularized_beta, regularized_gamma_q


class TestRegularizedGammaQ:
    def test_zero_argument(self):
        assert regularized_gamma_q(3.0, 0.0) == 1.0

    def test_infinite_argument(self):
        assert regularized_gamma_q(3.0, math.inf) == 0.0

    def test_against_oracle_grid(self):
        """Both the series branch (x < a+1) and the fraction branch."""
        for a in (0.5, 1.0, 2.5, 10.0, 40.0):
            for x in (1e-6, 0.1, 1.0, 3.0, 9.5, 40.0, 120.0):
                want = scipy.special.gammaincc(a, x)
                assert regularized_gamma_q(a, x) == pytest.approx(want, abs=1e-10)

    def test_nonpositive_shape_rejected(self):
        with pytest.raises(ValidationError):
            regularized_gamma_q(0.0, 1.0)

    def test_negative_argument_rejected(self):
        with pytest.raises(ValidationError):
            regularized_gamma_q(1.0, -0.5)


class TestRegularizedBeta:
    def test_endpoints(self):
        assert regularized_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_beta(2.0, 3.0, 1.0) == 1.0

    def test_symmetric_midpoint_exact(self):
        for a in (0.5, 1.0, 2.0, 7.5):
            assert regularized_beta(a, a, 0.5) == 0.5

    def test_against_oracle_grid(self):
        for a in (0.5, 1.0, 2.0, 4.5, 12.0):
            for b in (0.5, 1.5, 3.0, 8.0):
                for x in (0.01, 0.2, 0.5, 0.8, 0.99):
                    want = scipy.special.betainc(a, b, x)
                    got = regularized_beta(a, b, x)
                    assert got == pytest.approx(want, abs=1e-10)

    def test_nonpositive_shapes_rejected(self):
        with pytest.raises(ValidationError):
            regularized_beta(-1.0, 2.0, 0.5)


class TestChi2Sf:
    def test_zero_statistic(self):
        for k in range(1, 8):
            assert chi2_sf(0.0, k) == 1.0

    def test_two_df_closed_form(self):
        assert chi2_sf(7.2, 2) == pytest.approx(math.exp(-3.6), abs=1e-12)

    def test_one_df_quantile(self):
        assert chi2_sf(3.84146, 1) == pytest.approx(0.05, abs=5e-4)

    def test_one_df_normal_tail_identity(self):
        # chi-square(1) tail equals the two-sided standard-normal tail
        for x in (0.3, 1.0, 2.7, 6.0):
            want = 2.0 * scipy.stats.norm.sf(math.sqrt(x))
            assert chi2_sf(x, 1) == pytest.approx(want, abs=1e-10)

    def test_against_oracle_grid(self):
        for k in (1, 2, 3, 5, 10, 30):
            for x in (0.05, 0.5, 2.0, 7.2, 15.0, 60.0):
                want = scipy.stats.chi2.sf(x, k)
                assert chi2_sf(x, k) == pytest.approx(want, abs=1e-10)

    @given(st.floats(0.0, 80.0), st.floats(0.0, 80.0), st.integers(1, 12))
    @settings(max_examples=150)
    def test_monotone_decreasing_and_bounded(self, x1, x2, k):
        lo, hi = sorted((x1, x2))
        p_lo, p_hi = chi2_sf(lo, k), chi2_sf(hi, k)
        assert 0.0 <= p_hi <= p_lo <= 1.0

    def test_bad_df_rejected(self):
        with pytest.raises(ValidationError):
            chi2_sf(1.0, 0)

    def test_negative_statistic_rejected(self):
        with pytest.raises(ValidationError):
            chi2_sf(-1.0, 2)


class TestFSf:
    def test_zero_statistic(self):
        assert f_sf(0.0, 3, 7) == 1.0

    def test_equal_df_median_exact(self):
        for d in range(1, 11):
            assert f_sf(1.0, d, d) == 0.5

    def test_textbook_quantile(self):
        assert f_sf(4.26, 2, 9) == pytest.approx(0.05, abs=5e-4)

    def test_against_oracle_grid(self):
        for d1 in (1, 2, 4, 9, 20):
            for d2 in (1, 3, 8, 25, 120):
                for x in (0.1, 0.7, 1.0, 2.5, 6.0, 30.0):
                    want = scipy.stats.f.sf(x, d1, d2)
                    assert f_sf(x, d1, d2) == pytest.approx(want, abs=1e-10)

    @given(st.floats(0.0, 50.0), st.floats(0.0, 50.0),
           st.integers(1, 15), st.integers(1, 15))
    @settings(max_examples=150)
    def test_monotone_decreasing_and_bounded(self, x1, x2, d1, d2):
        lo, hi = sorted((x1, x2))
        p_lo, p_hi = f_sf(lo, d1, d2), f_sf(hi, d1, d2)
        assert 0.0 <= p_hi <= p_lo + 1e-14
        assert p_lo <= 1.0

    def test_bad_df_rejected(self):
        with pytest.raises(ValidationError):
            f_sf(1.0, 0, 3)

    def test_negative_statistic_rejected(self):
        with pytest.raises(ValidationError):
            f_sf(-2.0, 3, 3)


def test_dense_random_oracle_sweep():
    """Wide randomized agreement sweep for both survival functions."""
    rng = np.random.default_rng(123)
    for _ in range(400):
        x = float(rng.uniform(0.0, 100.0))
        k = int(rng.integers(1, 60))
        assert chi2_sf(x, k) == pytest.approx(
            scipy.stats.chi2.sf(x, k), abs=1e-10
        )
    for _ in range(400):
        x = float(rng.uniform(0.0, 40.0))
        d1 = int(rng.integers(1, 40))
        d2 = int(rng.integers(1, 40))
        assert f_sf(x, d1, d2) == pytest.approx(
            scipy.stats.f.sf(x, d1, d2), abs=1e-10
        )
