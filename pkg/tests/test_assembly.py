from fractions import Fraction

import numpy as np
import pytest

from collapse_kaon import analytic
from collapse_kaon.assembly import (DysonCrossTerm, assemble_cross_term, assemble_oscillation,
                                    assemble_survival, assemble_transition, cross_term_breakdown,
                                    cross_terms, gaussian_moment)
from collapse_kaon.core import Flavor, MassState, PhysicalParams, ThetaPolynomial


def test_gaussian_moments():
    assert gaussian_moment(0, Fraction(1)) == 1
    assert gaussian_moment(2, Fraction(1)) == Fraction(1, 2)
    assert gaussian_moment(4, Fraction(2)) == 3
    assert gaussian_moment(3, Fraction(1)) == 0
    with pytest.raises(ValueError):
        gaussian_moment(2, 0)


def test_gaussian_moments_match_numeric_integral():
    alpha = 0.7
    x = np.linspace(-12, 12, 20001)
    rho = np.exp(-x**2 / alpha) / np.sqrt(np.pi * alpha)
    for n in (2, 4):
        assert np.trapezoid(x**n * rho, x) == pytest.approx(gaussian_moment(n, alpha), rel=1e-8)


def test_cross_term_list():
    assert list(cross_terms()) == [(0, 0), (2, 0), (1, 1), (0, 2), (4, 0), (3, 1), (2, 2),
                                   (1, 3), (0, 4)]


def test_odd_cross_term_vanishes():
    term = DysonCrossTerm(2, 1, Fraction(1), Fraction(1))
    assert assemble_cross_term(term, PhysicalParams()).is_zero()


def test_cross_term_order_limit():
    with pytest.raises(ValueError):
        DysonCrossTerm(4, 2, 1, 1)


def test_first_order_cross_term():
    p = PhysicalParams(lam=Fraction(1, 10), alpha=Fraction(1), m_S=Fraction(1), m_0=Fraction(1))
    got = assemble_cross_term(DysonCrossTerm(1, 1, Fraction(1), Fraction(1)), p)
    # lambda <q^2> t with <q^2> = alpha / 2
    assert got == ThetaPolynomial.monomial(Fraction(1, 20), 1)


def test_breakdown_sums_to_branch():
    p = PhysicalParams()
    total = sum((poly for _, _, poly in cross_term_breakdown(MassState.S, MassState.S, p)),
                ThetaPolynomial.zero())
    assert total == assemble_survival("S", p).branch(MassState.S, MassState.S)


@pytest.mark.parametrize("mu", ["S", "L"])
def test_survival_matches_closed_form(mu):
    p = PhysicalParams()
    assert assemble_survival(mu, p).branch(MassState(mu), MassState(mu)) == \
        analytic.survival_bracket(mu, p)
    t = np.linspace(0, 3, 7)
    for theta0 in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(assemble_survival(mu, p)(theta0, t),
                                   analytic.survival_probability(mu, p, theta0, t), rtol=1e-13)


@pytest.mark.parametrize("final", [Flavor.K0, Flavor.K0bar])
def test_oscillation_matches_closed_form(final):
    p = PhysicalParams()
    t = np.linspace(0, 20, 41)
    for theta0 in (0.0, 0.5, 0.8, 1.0):
        np.testing.assert_allclose(assemble_oscillation(Flavor.K0, final, p)(theta0, t),
                                   analytic.oscillation_probability(final, p, theta0, t),
                                   rtol=1e-12, atol=1e-15)


def test_interference_branches_are_symmetric():
    p = PhysicalParams()
    series = assemble_oscillation(Flavor.K0, Flavor.K0, p)
    assert series.branch(MassState.S, MassState.L) == series.branch(MassState.L, MassState.S)
    assert 4 * series.branch(MassState.S, MassState.L) == analytic.oscillation_bracket(p)


def test_oscillation_requires_split_masses():
    with pytest.raises(ValueError):
        assemble_oscillation(Flavor.K0, Flavor.K0, PhysicalParams(m_L=0.95))
    with pytest.raises(ValueError):
        assemble_oscillation(Flavor.K_S, Flavor.K0, PhysicalParams())


def test_probability_at_t0():
    p = PhysicalParams()
    assert assemble_transition(Flavor.K0, Flavor.K0, p)(0.5, 0.0) == pytest.approx(1.0)
    assert assemble_transition(Flavor.K0, Flavor.K0bar, p)(0.5, 0.0) == pytest.approx(0.0)
