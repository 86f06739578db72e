from fractions import Fraction

import numpy as np
import pytest

from collapse_kaon import analytic
from collapse_kaon.core import Flavor, PhysicalParams


def test_survival_at_t0_is_one(default_params):
    for theta0 in (0, 0.5, 1):
        assert analytic.survival_probability("S", default_params, theta0, 0.0) == 1.0


def test_survival_slope_by_finite_difference():
    p = PhysicalParams(Gamma_S=0, Gamma_L=0, m_S=1, m_L=1)
    h = 1e-6
    for theta0, slope in ((0, 0.05), (0.5, 0.0), (1, -0.05)):
        fd = (analytic.survival_probability("S", p, theta0, h)
              - analytic.survival_probability("S", p, theta0, 0.0)) / h
        assert fd == pytest.approx(slope, abs=1e-6)


def test_exact_coefficients():
    p = PhysicalParams()
    assert analytic.survival_linear_coefficient("S", p, Fraction(0)) == Fraction(361, 8000)
    assert analytic.survival_quadratic_coefficient("L", p, Fraction(1, 2)) == 0


def test_theta_reflection_symmetry():
    # the survival bracket's linear term is odd and quadratic term even about theta0 = 1/2
    p = PhysicalParams()
    for th in (Fraction(0), Fraction(1, 5), Fraction(1, 3)):
        assert analytic.survival_linear_coefficient("S", p, th) == \
            -analytic.survival_linear_coefficient("S", p, 1 - th)
        assert analytic.survival_quadratic_coefficient("S", p, th) == \
            analytic.survival_quadratic_coefficient("S", p, 1 - th)


def test_no_clamping_above_one():
    p = PhysicalParams(Gamma_S=0)
    assert analytic.survival_probability("S", p, 0.0, 1.0) > 1.0


def test_oscillation_complementary_at_half_without_decay():
    p = PhysicalParams(Gamma_S=0, Gamma_L=0)
    t = np.linspace(0, 10, 11)
    total = (analytic.oscillation_probability(Flavor.K0, p, 0.5, t)
             + analytic.oscillation_probability(Flavor.K0bar, p, 0.5, t))
    np.testing.assert_allclose(total, 1.0, atol=1e-14)


def test_oscillation_validation():
    with pytest.raises(ValueError):
        analytic.oscillation_probability(Flavor.K_S, PhysicalParams(), 0.5, 1.0)
    with pytest.raises(ValueError):
        analytic.oscillation_probability(Flavor.K0, PhysicalParams(m_L=0.95), 0.5, 1.0)
    with pytest.raises(ValueError):
        analytic.survival_probability("S", PhysicalParams(), 0.5, -1.0)
