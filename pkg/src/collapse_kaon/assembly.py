"""Second-order transition probabilities assembled from Dyson cross terms.

A cross term pairs an order-``a`` Dyson amplitude on the ket branch with an
order-``b`` amplitude on the bra branch. Its noise average is the Wick sum of
delta integrals for layout ``(a, b)``; the position operator contributes the
wave-packet moment ``<q^(a+b)>`` once the final-momentum sum is closed by
completeness. Decay enters afterwards as an exact exponential envelope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterator

import numpy as np

from .core import (Flavor, MassState, PhysicalParams, ThetaPolynomial, as_fraction,
                   branch_weight)
from .wick import BranchLayout, wick_sum

MAX_ORDER = 4


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def gaussian_moment(n: int, alpha):
    """``<q^n>`` for the packet density ``exp(-x^2/alpha) / sqrt(pi alpha)``.

    Exact for rational ``alpha``, float otherwise.
    """
    if n < 0:
        raise ValueError("moment order must be non-negative")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n % 2:
        return Fraction(0) if isinstance(alpha, Rational) else 0.0
    half = (as_fraction(alpha) / 2) if isinstance(alpha, Rational) else alpha / 2
    return _double_factorial(n - 1) * half ** (n // 2)


@dataclass(frozen=True)
class DysonCrossTerm:
    a: int
    b: int
    ket_mass: object
    bra_mass: object

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("Dyson orders must be non-negative")
        if self.a + self.b > MAX_ORDER:
            raise ValueError(f"a + b must not exceed {MAX_ORDER}")


def _phase(a: int, b: int) -> int:
    """``(-i)^a (+i)^b`` for even ``a + b``; always real."""
    z = (-1j) ** a * (1j) ** b
    re = round(z.real)
    if abs(z.imag) > 1e-12 or abs(z.real - re) > 1e-12:
        raise AssertionError(f"non-real phase for ({a}, {b})")
    return re


def assemble_cross_term(term: DysonCrossTerm, params: PhysicalParams) -> ThetaPolynomial:
    """Noise-averaged, momentum-summed contribution ``E[T(a) T(b)*]`` of one cross term.

    Odd ``a + b`` vanishes and returns the zero polynomial.
    """
    a, b = term.a, term.b
    if (a + b) % 2:
        return ThetaPolynomial.zero()
    lam, m0, alpha = params.exact("lam"), params.exact("m_0"), params.exact("alpha")
    m_ket, m_bra = as_fraction(term.ket_mass), as_fraction(term.bra_mass)
    prefactor = (
        _phase(a, b)
        * lam ** ((a + b) // 2)
        * (m_ket / m0) ** a
        * (m_bra / m0) ** b
        * gaussian_moment(a + b, alpha)
    )
    if not prefactor:
        return ThetaPolynomial.zero()
    return prefactor * wick_sum(BranchLayout(a, b))


def cross_terms(max_order: int = MAX_ORDER) -> Iterator[tuple[int, int]]:
    """``(a, b)`` with even ``a + b <= max_order``, in increasing total then ket order."""
    for total in range(0, max_order + 1, 2):
        for a in range(total, -1, -1):
            yield a, total - a


def branch_polynomial(mu: MassState, nu: MassState, params: PhysicalParams) -> ThetaPolynomial:
    """Polynomial part of the (ket mass ``mu``, bra mass ``nu``) branch product."""
    total = ThetaPolynomial.zero()
    for a, b in cross_terms():
        term = DysonCrossTerm(a, b, params.exact("m_S" if mu is MassState.S else "m_L"),
                              params.exact("m_S" if nu is MassState.S else "m_L"))
        total = total + assemble_cross_term(term, params)
    return total


def cross_term_breakdown(mu: MassState, nu: MassState, params: PhysicalParams):
    """List of ``(a, b, polynomial)`` for every cross term of a branch product."""
    out = []
    for a, b in cross_terms():
        term = DysonCrossTerm(a, b, params.exact("m_S" if mu is MassState.S else "m_L"),
                              params.exact("m_S" if nu is MassState.S else "m_L"))
        out.append((a, b, assemble_cross_term(term, params)))
    return out


@dataclass(frozen=True)
class BranchTerm:
    mu: MassState
    nu: MassState
    weight: Fraction
    polynomial: ThetaPolynomial
    delta_m: float
    decay_rate: float

    @property
    def weighted(self) -> ThetaPolynomial:
        return self.weight * self.polynomial


@dataclass(frozen=True)
class ProbabilitySeries:
    """``sum_(mu,nu) w cos(dm t) P(theta0, t) exp(-(G_mu + G_nu) t / 2)``."""

    terms: tuple[BranchTerm, ...] = field(default_factory=tuple)

    def merged(self) -> dict[tuple[MassState, MassState], ThetaPolynomial]:
        """Weighted polynomials summed per branch, zero branches dropped."""
        out: dict[tuple[MassState, MassState], ThetaPolynomial] = {}
        for term in self.terms:
            key = (term.mu, term.nu)
            out[key] = out.get(key, ThetaPolynomial.zero()) + term.weighted
        return {k: v for k, v in out.items() if not v.is_zero()}

    def branch(self, mu: MassState, nu: MassState) -> ThetaPolynomial:
        return self.merged().get((mu, nu), ThetaPolynomial.zero())

    def __add__(self, other: "ProbabilitySeries") -> "ProbabilitySeries":
        rates = {(t.mu, t.nu): (t.delta_m, t.decay_rate) for t in self.terms + other.terms}
        return ProbabilitySeries(tuple(
            BranchTerm(mu, nu, Fraction(1), poly, *rates[(mu, nu)])
            for (mu, nu), poly in (ProbabilitySeries(self.terms + other.terms).merged().items())
        ))

    def substitute_theta(self, theta0) -> "ProbabilitySeries":
        return ProbabilitySeries(tuple(
            BranchTerm(t.mu, t.nu, t.weight, t.polynomial.substitute_theta(theta0), t.delta_m,
                       t.decay_rate)
            for t in self.terms
        ))

    def evaluate(self, theta0, t):
        t_arr = np.asarray(t, dtype=float)
        total = np.zeros_like(t_arr)
        for term in self.terms:
            if not term.weight:
                continue
            poly = np.asarray(term.polynomial.evaluate(float(theta0), t_arr), dtype=float)
            total = total + (float(term.weight) * np.cos(term.delta_m * t_arr) * poly
                             * np.exp(-term.decay_rate * t_arr))
        return total if total.ndim else float(total)

    __call__ = evaluate


def assemble_transition(initial, final, params: PhysicalParams) -> ProbabilitySeries:
    """Second-order probability series for any pair of flavor states."""
    initial, final = Flavor(initial), Flavor(final)
    terms = []
    for mu in MassState:
        for nu in MassState:
            weight = branch_weight(initial, final, mu, nu)
            if not weight:
                continue
            terms.append(BranchTerm(
                mu, nu, weight, branch_polynomial(mu, nu, params),
                params.mass(mu) - params.mass(nu),
                0.5 * (params.width(mu) + params.width(nu)),
            ))
    return ProbabilitySeries(tuple(terms))


def assemble_survival(mu, params: PhysicalParams) -> ProbabilitySeries:
    """Survival series of ``K_S`` (``mu='S'``) or ``K_L`` (``mu='L'``)."""
    mu = mu if isinstance(mu, MassState) else MassState(str(mu).removeprefix("K_"))
    flavor = Flavor.K_S if mu is MassState.S else Flavor.K_L
    return assemble_transition(flavor, flavor, params)


def assemble_oscillation(initial, final, params: PhysicalParams) -> ProbabilitySeries:
    initial, final = Flavor(initial), Flavor(final)
    if {initial, final} - {Flavor.K0, Flavor.K0bar}:
        raise ValueError("oscillation series are defined between K0 and K0bar")
    if params.m_L == params.m_S:
        raise ValueError("oscillation requires m_L != m_S")
    return assemble_transition(initial, final, params)
