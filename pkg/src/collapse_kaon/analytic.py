"""Closed-form second-order probabilities in the Heaviside parameter theta0.

These are the reference values the assembled series and the trajectory
simulation are checked against. Nothing is clamped: for ``theta0 < 1/2`` the
survival probability grows above one.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .core import Flavor, MassState, PhysicalParams, ThetaPolynomial, as_fraction


def _mass_state(mu) -> MassState:
    if isinstance(mu, MassState):
        return mu
    return MassState(str(mu).removeprefix("K_"))


def survival_bracket(mu, params: PhysicalParams) -> ThetaPolynomial:
    """Exact bracket ``1 - (a/2) r (2 th - 1) t + (3 a^2/4) r^2 (2 th (th - 1) + 1/2) t^2``.

    ``r = lambda m_mu^2 / m_0^2``; multiply by ``exp(-Gamma_mu t)`` for the probability.
    """
    mu = _mass_state(mu)
    alpha, lam, m0 = params.exact("alpha"), params.exact("lam"), params.exact("m_0")
    m = params.exact("m_S" if mu is MassState.S else "m_L")
    r = lam * m**2 / m0**2
    th = ThetaPolynomial.monomial(1, 0, 1)
    linear = -(alpha / 2) * r * (2 * th - 1)
    quadratic = Fraction(3, 4) * alpha**2 * r**2 * (2 * th * (th - 1) + Fraction(1, 2))
    t = ThetaPolynomial.monomial(1, 1)
    return 1 + linear * t + quadratic * t * t


def oscillation_bracket(params: PhysicalParams) -> ThetaPolynomial:
    """Exact bracket multiplying ``+-2 cos(dm t) exp(-(Gamma_L + Gamma_S) t / 2)``."""
    alpha, lam, m0 = params.exact("alpha"), params.exact("lam"), params.exact("m_0")
    mL, mS = params.exact("m_L"), params.exact("m_S")
    th = ThetaPolynomial.monomial(1, 0, 1)
    t = ThetaPolynomial.monomial(1, 1)
    linear = -Fraction(1, 2) * lam / m0**2 * alpha * ((mL**2 + mS**2) * th - mL * mS)
    quadratic = Fraction(3, 8) * lam**2 / m0**4 * alpha**2 * (
        (mL**4 + mS**4) * th * th
        - 2 * mL * mS * (mL**2 + mS**2) * th
        + 2 * mL**2 * mS**2 * (th * th + Fraction(1, 2))
    )
    return 1 + linear * t + quadratic * t * t


def survival_probability(mu, params: PhysicalParams, theta0, t):
    """Survival probability of a mass eigenstate ``K_S`` or ``K_L`` at time ``t``."""
    mu = _mass_state(mu)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    m = params.mass(mu)
    gamma = params.width(mu)
    r = params.lam * m**2 / params.m_0**2
    a = params.alpha
    th = float(theta0)
    bracket = 1 - 0.5 * a * r * (2 * th - 1) * t + 0.75 * a**2 * r**2 * (2 * th * (th - 1) + 0.5) * t**2
    out = bracket * np.exp(-gamma * t)
    return out if out.ndim else float(out)


def oscillation_probability(final, params: PhysicalParams, theta0, t, initial=Flavor.K0):
    """Strangeness transition probability ``K0 -> K0`` or ``K0 -> K0bar``.

    The ``+`` branch applies when ``final`` equals ``initial``.
    """
    final, initial = Flavor(final), Flavor(initial)
    if {final, initial} - {Flavor.K0, Flavor.K0bar}:
        raise ValueError("oscillation probabilities are defined between K0 and K0bar")
    if params.m_L == params.m_S:
        raise ValueError("oscillation requires m_L != m_S")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    sign = 1.0 if final is initial else -1.0
    lam, a, m0 = params.lam, params.alpha, params.m_0
    mL, mS = params.m_L, params.m_S
    GL, GS = params.Gamma_L, params.Gamma_S
    th = float(theta0)
    eL, eS = np.exp(-GL * t), np.exp(-GS * t)
    line1 = eL + eS - 0.5 * lam / m0**2 * a * t * (mL**2 * eL + mS**2 * eS) * (2 * th - 1)
    line2 = 0.75 * lam**2 / m0**4 * a**2 * t**2 * (mL**4 * eL + mS**4 * eS) * (2 * th * (th - 1) + 0.5)
    bracket = (
        1
        - 0.5 * lam / m0**2 * a * t * ((mL**2 + mS**2) * th - mL * mS)
        + 0.375 * lam**2 / m0**4 * a**2 * t**2 * (
            (mL**4 + mS**4) * th**2
            - 2 * mL * mS * (mL**2 + mS**2) * th
            + 2 * mL**2 * mS**2 * (th**2 + 0.5)
        )
    )
    interference = sign * 2 * bracket * np.cos((mL - mS) * t) * np.exp(-0.5 * (GL + GS) * t)
    out = 0.25 * (line1 + line2 + interference)
    return out if out.ndim else float(out)


def survival_linear_coefficient(mu, params: PhysicalParams, theta0) -> Fraction:
    """Exact ``d/dt`` of the survival bracket at ``t = 0``."""
    return survival_bracket(mu, params).t_coefficient(1).evaluate(as_fraction(theta0), 0)


def survival_quadratic_coefficient(mu, params: PhysicalParams, theta0) -> Fraction:
    return survival_bracket(mu, params).t_coefficient(2).evaluate(as_fraction(theta0), 0)
