"""The oracles must agree with each other before they can judge the code."""

import math

import numpy as np
import pytest
from scipy import special

from oracles import (
    PRODUCT10_BELOW_001,
    cesaro_mean_of_y,
    product_uniform_cdf,
    product_uniform_cdf_gamma,
    product_uniform_cdf_quad,
    squaring_orbit,
)


@pytest.mark.parametrize("k", [1, 2, 3, 5, 10])
@pytest.mark.parametrize("t", [1e-9, 1e-3, 0.1, 0.5, 0.9])
def test_product_cdf_three_ways(k, t):
    series = float(product_uniform_cdf(k, t))
    assert series == pytest.approx(product_uniform_cdf_gamma(k, t), rel=1e-12, abs=1e-15)
    assert series == pytest.approx(product_uniform_cdf_quad(k, t), rel=1e-8, abs=1e-12)


def test_frozen_incomplete_gamma():
    assert special.gammaincc(10, math.log(100)) == pytest.approx(PRODUCT10_BELOW_001, rel=1e-14)
    assert product_uniform_cdf_quad(10, 0.01) == pytest.approx(PRODUCT10_BELOW_001, rel=1e-9)


def test_cesaro_mean_closed_form_by_summation():
    for n in (1, 2, 10, 500):
        assert cesaro_mean_of_y(n) == pytest.approx(np.mean([2.0**-k for k in range(1, n + 1)]), rel=1e-14)
    assert cesaro_mean_of_y(10) == pytest.approx(0.0999023, abs=1e-7)


def test_squaring_orbit():
    assert squaring_orbit(0.5, 3) == [0.25, 0.0625, 0.00390625]
    assert sum(squaring_orbit(0.5, 3)) / 3 == 27 / 256
    assert squaring_orbit(1.0, 2) == [0.0, 0.0]
