from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from collapse_kaon.core import (Flavor, HeavisideConvention, MassState, PhysicalParams,
                                ThetaPolynomial, as_fraction, branch_weight, format_fraction,
                                to_mass_basis)

fractions = st.fractions(min_value=-5, max_value=5, max_denominator=50)
monomials = st.tuples(fractions, st.integers(0, 3), st.integers(0, 3))
polys = st.lists(monomials, max_size=4).map(
    lambda ms: sum((ThetaPolynomial.monomial(c, k, j) for c, k, j in ms), ThetaPolynomial.zero()))


def test_as_fraction_uses_decimal_repr():
    assert as_fraction(0.1) == Fraction(1, 10)
    assert as_fraction("3/8") == Fraction(3, 8)
    assert format_fraction(Fraction(0)) == "0/1"


def test_params_defaults_and_json_names():
    p = PhysicalParams()
    assert p.delta_m == pytest.approx(0.1)
    d = p.to_dict()
    assert "lambda" in d and "lam" not in d
    assert PhysicalParams.from_dict(d) == p


@pytest.mark.parametrize("bad", [{"m_S": 0}, {"alpha": -1}, {"lam": -0.1}, {"m_0": float("nan")}])
def test_params_reject_invalid(bad):
    with pytest.raises(ValueError):
        PhysicalParams(**bad)


def test_params_reject_unknown_key():
    with pytest.raises(ValueError, match="unknown"):
        PhysicalParams.from_dict({"mass": 1})


def test_heaviside_range():
    assert HeavisideConvention(Fraction(1, 2)).exact == Fraction(1, 2)
    with pytest.raises(ValueError):
        HeavisideConvention(1.5)


def test_flavor_states_are_normalized():
    for flavor in Flavor:
        c_S, c_L = to_mass_basis(flavor)
        assert abs(c_S) ** 2 + abs(c_L) ** 2 == pytest.approx(1.0)


def test_branch_weights_sum_to_unity_over_final_flavors():
    # K0 and K0bar are a complete basis, so diagonal weights sum to |c_mu|^2 and cross weights cancel
    for mu in MassState:
        for nu in MassState:
            total = sum(branch_weight(Flavor.K0, f, mu, nu) for f in (Flavor.K0, Flavor.K0bar))
            assert total == (Fraction(1, 2) if mu is nu else 0)
    assert branch_weight(Flavor.K0, Flavor.K0bar, MassState.S, MassState.L) == Fraction(-1, 4)


def test_polynomial_str_and_evaluate():
    p = ThetaPolynomial.monomial(Fraction(1, 2), 2, 2)
    assert str(p) == "1/2*theta0^2*t^2"
    assert p.evaluate(Fraction(1), Fraction(2)) == 2
    assert p.evaluate(1.0, 2.0) == pytest.approx(2.0)


def test_integrate_and_substitute():
    p = ThetaPolynomial.monomial(3, 2, 1)
    assert p.integrate_t() == ThetaPolynomial.monomial(1, 3, 1)
    assert p.substitute_theta(Fraction(1, 3)) == ThetaPolynomial.monomial(1, 2)


@given(polys, polys, polys)
def test_ring_laws(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a + b) + c == a + (b + c)
    assert a * (b + c) == a * b + a * c
    assert a - a == ThetaPolynomial.zero()


@given(polys, fractions, fractions)
def test_evaluation_is_a_homomorphism(p, th, t):
    q = p * p + 1
    assert q.evaluate(th, t) == p.evaluate(th, t) ** 2 + 1
