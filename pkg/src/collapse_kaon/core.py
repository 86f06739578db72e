"""Shared domain types: physical parameters, flavor algebra, exact theta-polynomials."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from numbers import Rational, Real
from typing import Iterable, Mapping


def as_fraction(value) -> Fraction:
    """Convert a number to an exact rational.

    Floats go through their shortest decimal repr, so ``0.1`` becomes ``1/10``
    rather than the nearest binary fraction.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value.numerator, value.denominator)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, Real):
        if not math.isfinite(value):
            raise ValueError(f"cannot convert non-finite value {value!r} to a rational")
        return Fraction(repr(float(value)))
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


def format_fraction(value: Fraction) -> str:
    """Serialize a rational as ``num/den`` (``den`` always present)."""
    value = as_fraction(value)
    return f"{value.numerator}/{value.denominator}"


# --------------------------------------------------------------------------
# Physical parameters
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PhysicalParams:
    """Masses, widths and collapse constants, in units with hbar = c = 1.

    ``lam`` is the collapse strength (serialized as ``lambda``), ``alpha`` the
    squared wave-packet width. Defaults are a synthetic desk-scale set with
    ``Gamma_S / Gamma_L = 600``.
    """

    m_S: float = 0.95
    m_L: float = 1.05
    m_0: float = 1.0
    Gamma_S: float = 0.6
    Gamma_L: float = 0.001
    lam: float = 0.1
    alpha: float = 1.0
    p_i: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, Real):
                raise TypeError(f"{_json_name(f.name)} must be a number, got {value!r}")
            if not math.isfinite(float(value)):
                raise ValueError(f"{_json_name(f.name)} must be finite")
        for name in ("m_S", "m_L", "m_0", "alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("lam", "Gamma_S", "Gamma_L"):
            if getattr(self, name) < 0:
                raise ValueError(f"{_json_name(name)} must be >= 0")

    @property
    def delta_m(self) -> float:
        return self.m_L - self.m_S

    def mass(self, branch: "MassState") -> float:
        return self.m_S if branch is MassState.S else self.m_L

    def width(self, branch: "MassState") -> float:
        return self.Gamma_S if branch is MassState.S else self.Gamma_L

    def exact(self, name: str) -> Fraction:
        return as_fraction(getattr(self, name))

    def replace(self, **changes) -> "PhysicalParams":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return PhysicalParams(**data)

    def to_dict(self) -> dict:
        return {_json_name(k): v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PhysicalParams":
        known = {_json_name(f.name): f.name for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ValueError(f"unknown parameter key(s): {', '.join(unknown)}")
        return cls(**{known[k]: v for k, v in data.items()})


def _json_name(field_name: str) -> str:
    return "lambda" if field_name == "lam" else field_name


@dataclass(frozen=True)
class HeavisideConvention:
    """The value assigned to the step function at zero."""

    theta0: float | Fraction

    def __post_init__(self):
        if not 0 <= self.theta0 <= 1:
            raise ValueError(f"theta0 must lie in [0, 1], got {self.theta0}")

    @property
    def exact(self) -> Fraction:
        return as_fraction(self.theta0)


THETA_ZERO = HeavisideConvention(Fraction(0))
THETA_HALF = HeavisideConvention(Fraction(1, 2))
THETA_ONE = HeavisideConvention(Fraction(1))


# --------------------------------------------------------------------------
# Flavor algebra
# --------------------------------------------------------------------------

class MassState(enum.Enum):
    S = "S"
    L = "L"


class Flavor(enum.Enum):
    K_S = "K_S"
    K_L = "K_L"
    K0 = "K0"
    K0bar = "K0bar"


# (sign, squared magnitude) of the K_S and K_L amplitudes; K0bar = (K_S - K_L)/sqrt2
_EXACT_AMPLITUDES: dict[Flavor, tuple[tuple[int, Fraction], tuple[int, Fraction]]] = {
    Flavor.K_S: ((1, Fraction(1)), (1, Fraction(0))),
    Flavor.K_L: ((1, Fraction(0)), (1, Fraction(1))),
    Flavor.K0: ((1, Fraction(1, 2)), (1, Fraction(1, 2))),
    Flavor.K0bar: ((1, Fraction(1, 2)), (-1, Fraction(1, 2))),
}


def to_mass_basis(state: Flavor | str) -> tuple[complex, complex]:
    """Return the ``(c_S, c_L)`` amplitudes of a flavor state."""
    state = Flavor(state)
    return tuple(complex(sign * math.sqrt(sq)) for sign, sq in _EXACT_AMPLITUDES[state])


def _exact_sqrt(value: Fraction) -> Fraction:
    num, den = math.isqrt(value.numerator), math.isqrt(value.denominator)
    if num * num != value.numerator or den * den != value.denominator:
        raise ValueError(f"{value} is not a rational square")
    return Fraction(num, den)


def branch_weight(initial: Flavor, final: Flavor, mu: MassState, nu: MassState) -> Fraction:
    """Exact weight ``c_mu c_nu* d_mu* d_nu`` of the (mu, nu) branch product.

    ``c`` are the amplitudes of ``initial`` and ``d`` those of ``final``; all are
    real for the four supported flavors.
    """
    idx = {MassState.S: 0, MassState.L: 1}
    factors = [
        _EXACT_AMPLITUDES[Flavor(initial)][idx[mu]],
        _EXACT_AMPLITUDES[Flavor(initial)][idx[nu]],
        _EXACT_AMPLITUDES[Flavor(final)][idx[mu]],
        _EXACT_AMPLITUDES[Flavor(final)][idx[nu]],
    ]
    sign = math.prod(s for s, _ in factors)
    return sign * _exact_sqrt(math.prod((sq for _, sq in factors), start=Fraction(1)))


# --------------------------------------------------------------------------
# Exact polynomials in (t, theta0)
# --------------------------------------------------------------------------

class ThetaPolynomial:
    """Polynomial ``sum c[k][j] * theta0**j * t**k`` with exact rational coefficients.

    Instances are immutable; zero coefficients are never stored.
    """

    __slots__ = ("_coeffs",)

    def __init__(self, coeffs: Mapping[tuple[int, int], object] | None = None):
        clean = {}
        for (k, j), c in (coeffs or {}).items():
            if k < 0 or j < 0:
                raise ValueError("exponents must be non-negative")
            c = as_fraction(c)
            if c:
                clean[(int(k), int(j))] = clean.get((int(k), int(j)), Fraction(0)) + c
        self._coeffs = {key: c for key, c in sorted(clean.items()) if c}

    @classmethod
    def constant(cls, value) -> "ThetaPolynomial":
        return cls({(0, 0): value})

    @classmethod
    def monomial(cls, coeff, t_power: int = 0, theta_power: int = 0) -> "ThetaPolynomial":
        return cls({(t_power, theta_power): coeff})

    @classmethod
    def zero(cls) -> "ThetaPolynomial":
        return cls()

    @property
    def coeffs(self) -> dict[tuple[int, int], Fraction]:
        return dict(self._coeffs)

    def coefficient(self, t_power: int, theta_power: int) -> Fraction:
        return self._coeffs.get((t_power, theta_power), Fraction(0))

    def t_coefficient(self, t_power: int) -> "ThetaPolynomial":
        """Coefficient of ``t**t_power`` as a polynomial in theta0 alone."""
        return ThetaPolynomial({(0, j): c for (k, j), c in self._coeffs.items() if k == t_power})

    @property
    def t_degree(self) -> int:
        return max((k for k, _ in self._coeffs), default=-1)

    @property
    def theta_degree(self) -> int:
        return max((j for _, j in self._coeffs), default=-1)

    def is_zero(self) -> bool:
        return not self._coeffs

    def __bool__(self):
        return not self.is_zero()

    def _coerce(self, other) -> "ThetaPolynomial":
        if isinstance(other, ThetaPolynomial):
            return other
        return ThetaPolynomial.constant(other)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self._coeffs)
        for key, c in other._coeffs.items():
            out[key] = out.get(key, Fraction(0)) + c
        return ThetaPolynomial(out)

    __radd__ = __add__

    def __neg__(self):
        return ThetaPolynomial({key: -c for key, c in self._coeffs.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out: dict[tuple[int, int], Fraction] = {}
        for (k1, j1), c1 in self._coeffs.items():
            for (k2, j2), c2 in other._coeffs.items():
                key = (k1 + k2, j1 + j2)
                out[key] = out.get(key, Fraction(0)) + c1 * c2
        return ThetaPolynomial(out)

    __rmul__ = __mul__

    def integrate_t(self) -> "ThetaPolynomial":
        """Definite integral ``int_0^t p(theta0, s) ds``."""
        return ThetaPolynomial({(k + 1, j): c / (k + 1) for (k, j), c in self._coeffs.items()})

    def substitute_theta(self, theta0) -> "ThetaPolynomial":
        """Fix theta0 to an exact value, leaving a polynomial in t."""
        theta0 = as_fraction(theta0)
        out: dict[tuple[int, int], Fraction] = {}
        for (k, j), c in self._coeffs.items():
            out[(k, 0)] = out.get((k, 0), Fraction(0)) + c * theta0**j
        return ThetaPolynomial(out)

    def evaluate(self, theta0, t):
        """Evaluate at numeric ``(theta0, t)``.

        Rational inputs give an exact ``Fraction``; anything else is rounded once
        at the end.
        """
        exact = all(isinstance(v, Rational) for v in (theta0, t))
        th, tt = (as_fraction(theta0), as_fraction(t)) if exact else (theta0, t)
        if exact:
            return sum((c * th**j * tt**k for (k, j), c in self._coeffs.items()), Fraction(0))
        if isinstance(t, complex) or isinstance(theta0, complex):
            return sum(complex(c) * theta0**j * t**k for (k, j), c in self._coeffs.items())
        # accumulate exactly in theta0, round once per power of t
        total = 0.0
        for k in range(self.t_degree + 1):
            ck = sum((float(c) * theta0**j for (kk, j), c in self._coeffs.items() if kk == k), 0.0)
            total += ck * t**k
        return total

    def __call__(self, theta0, t):
        return self.evaluate(theta0, t)

    def __eq__(self, other):
        if isinstance(other, ThetaPolynomial):
            return self._coeffs == other._coeffs
        if isinstance(other, (int, Fraction)):
            return self._coeffs == ThetaPolynomial.constant(other)._coeffs
        return NotImplemented

    def __hash__(self):
        return hash(tuple(self._coeffs.items()))

    def __repr__(self):
        return f"ThetaPolynomial({self})"

    def __str__(self):
        if not self._coeffs:
            return "0"
        parts = []
        for (k, j), c in self._coeffs.items():
            factors = [] if c == 1 and (k or j) else [str(c)]
            if j:
                factors.append("theta0" if j == 1 else f"theta0^{j}")
            if k:
                factors.append("t" if k == 1 else f"t^{k}")
            parts.append("*".join(factors))
        return " + ".join(parts)

    def terms(self) -> Iterable[tuple[int, int, Fraction]]:
        """Yield ``(k, j, coefficient)`` sorted by t power then theta0 power."""
        for (k, j), c in self._coeffs.items():
            yield k, j, c
