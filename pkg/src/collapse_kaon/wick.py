"""Wick pairings of white-noise insertions and their time-ordered delta integrals.

Noise insertion times live on two chains: the ket chain ``t >= t1 >= ... >= 0``
and an independently ordered bra chain ``t >= s1 >= ... >= 0``. Variables are
numbered globally, ket first, starting at 1 in printed labels. The symbolic
engine returns exact :class:`ThetaPolynomial` values in ``(theta0, t)``; the
quadrature oracle regularizes every delta into a finite asymmetric bump and
integrates numerically.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .core import ThetaPolynomial, as_fraction, format_fraction

_T = -1      # node for the upper time t
_ZERO = -2   # node for time 0


class OracleConvergenceError(RuntimeError):
    """Successive epsilon refinements of the quadrature oracle disagree."""


@dataclass(frozen=True)
class BranchLayout:
    n_ket: int
    n_bra: int

    def __post_init__(self):
        if self.n_ket < 0 or self.n_bra < 0:
            raise ValueError("chain lengths must be non-negative")

    @property
    def total(self) -> int:
        return self.n_ket + self.n_bra

    def chains(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Zero-based variable indices of the ket and bra chains, outermost first."""
        return tuple(range(self.n_ket)), tuple(range(self.n_ket, self.total))

    def label(self, index: int) -> str:
        if index < self.n_ket:
            return f"t{index + 1}"
        return f"s{index - self.n_ket + 1}"

    def __str__(self):
        return f"({self.n_ket},{self.n_bra})"


@dataclass(frozen=True)
class WickPairing:
    """A perfect matching, stored as sorted zero-based ``(i, j)`` pairs with ``i < j``."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        norm = tuple(sorted(tuple(sorted(p)) for p in self.pairs))
        object.__setattr__(self, "pairs", norm)
        seen = [i for p in norm for i in p]
        if len(seen) != len(set(seen)):
            raise ValueError(f"variable used twice in pairing {norm}")

    @classmethod
    def from_labels(cls, text: str) -> "WickPairing":
        """Parse the compact form ``(12)(34)`` (one-based, single digits)."""
        groups = text.replace(" ", "").strip("()").split(")(")
        return cls(tuple((int(g[0]) - 1, int(g[1]) - 1) for g in groups if g))

    def variables(self) -> set[int]:
        return {i for p in self.pairs for i in p}

    def check(self, layout: BranchLayout) -> None:
        if self.variables() != set(range(layout.total)):
            raise ValueError(f"pairing {self} does not match layout {layout}")

    def __str__(self):
        return "".join(f"({i + 1}{j + 1})" for i, j in self.pairs)


def _matchings(items: Sequence[int]) -> Iterator[list[tuple[int, int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for k, partner in enumerate(rest):
        for tail in _matchings(rest[:k] + rest[k + 1:]):
            yield [(first, partner)] + tail


def enumerate_pairings(layout: BranchLayout) -> list[WickPairing]:
    """All perfect matchings of the layout's variables, in lexicographic order.

    Odd totals have no matchings (odd Gaussian moments vanish).
    """
    if layout.total % 2:
        return []
    pairings = [WickPairing(tuple(m)) for m in _matchings(tuple(range(layout.total)))]
    return sorted(pairings, key=lambda p: p.pairs)


def layouts_up_to(max_order: int) -> list[BranchLayout]:
    """Every layout with an even, positive total not exceeding ``max_order``."""
    out = []
    for total in range(2, max_order + 1, 2):
        for n_ket in range(total, -1, -1):
            out.append(BranchLayout(n_ket, total - n_ket))
    return out


# --------------------------------------------------------------------------
# Symbolic engine
# --------------------------------------------------------------------------

def _chain_edges(layout: BranchLayout) -> list[tuple[int, int]]:
    """Order constraints ``(hi, lo)`` meaning ``x_hi >= x_lo``."""
    edges = []
    for chain in layout.chains():
        nodes = (_T,) + chain + (_ZERO,)
        edges.extend(zip(nodes[:-1], nodes[1:]))
    return edges


def _has_cycle(nodes: set[int], edges: set[tuple[int, int]]) -> bool:
    succ = {n: [lo for hi, lo in edges if hi == n and lo in nodes] for n in nodes}
    state = dict.fromkeys(nodes, 0)

    def visit(n):
        state[n] = 1
        for m in succ[n]:
            if state[m] == 1 or (state[m] == 0 and visit(m)):
                return True
        state[n] = 2
        return False

    return any(state[n] == 0 and visit(n) for n in nodes)


def _reachable(edges: set[tuple[int, int]], start: int) -> set[int]:
    """Nodes provably ``<=`` start (transitive closure of the edges)."""
    seen, stack = set(), [start]
    while stack:
        n = stack.pop()
        for hi, lo in edges:
            if hi == n and lo not in seen:
                seen.add(lo)
                stack.append(lo)
    return seen


# polynomial in the surviving variables and t: {((var, exp), ...): Fraction}
_Poly = dict


def _poly_integrate(poly: _Poly, var: int, upper: int) -> _Poly:
    """``int_0^upper poly d(var)`` where ``upper`` is a variable or ``_T``."""
    out: _Poly = {}
    for mono, c in poly.items():
        powers = dict(mono)
        e = powers.pop(var, 0)
        powers[upper] = powers.get(upper, 0) + e + 1
        key = tuple(sorted(powers.items()))
        out[key] = out.get(key, Fraction(0)) + c / (e + 1)
    return out


def _integrate_order_polytope(poly: _Poly, variables: frozenset[int],
                              edges: frozenset[tuple[int, int]]) -> _Poly:
    """Integrate ``poly`` over ``{t >= x >= 0}`` cut by the order constraints.

    Works innermost-first: the highest-index variable with no variable below it
    is integrated from 0 up to its tightest upper bound. Incomparable upper
    bounds split the region into pieces, one per choice of the smallest bound.
    """
    if not variables:
        return poly
    minimal = [v for v in variables if not any(hi == v and lo in variables for hi, lo in edges)]
    var = max(minimal)
    bounds = {hi for hi, lo in edges if lo == var} | {_T}
    # t bounds every variable from above
    closure = {b: set(variables) if b == _T else _reachable(set(edges), b) for b in bounds}
    tight = sorted(b for b in bounds if not any(o in closure[b] for o in bounds if o != b))
    rest = variables - {var}
    kept = frozenset(e for e in edges if var not in e)
    total: _Poly = {}
    for upper in tight:
        extra = frozenset((o, upper) for o in tight if o != upper)
        piece_edges = kept | extra
        if _has_cycle(set(rest), set(piece_edges)):
            continue
        piece = _integrate_order_polytope(_poly_integrate(poly, var, upper), rest, piece_edges)
        for mono, c in piece.items():
            total[mono] = total.get(mono, Fraction(0)) + c
    return {m: c for m, c in total.items() if c}


def evaluate_simplex_delta_integral(layout: BranchLayout, pairing: WickPairing) -> ThetaPolynomial:
    """Exact value of the time-ordered integral of a product of delta functions.

    Each pair ``(a, b)`` contributes ``delta(x_a - x_b)``. The inner variable
    ``x_b`` is integrated first and pinned to ``x_a``; when ``x_a`` is one of
    the endpoints of ``x_b``'s range the delta yields ``theta0`` instead of 1.
    Pairs whose pinned values force a lower-dimensional region evaluate to 0.
    """
    pairing.check(layout)
    edges = set(_chain_edges(layout))
    theta_power = 0
    for a, b in pairing.pairs:
        renamed = set()
        for hi, lo in edges:
            hi, lo = (a if hi == b else hi), (a if lo == b else lo)
            if hi == lo:
                theta_power += 1
            else:
                renamed.add((hi, lo))
        edges = renamed
    survivors = {a for a, _ in pairing.pairs}
    if _has_cycle(survivors | {_T, _ZERO}, edges):
        return ThetaPolynomial.zero()
    edges = {(hi, lo) for hi, lo in edges if lo != _ZERO and hi != _T}
    poly = _integrate_order_polytope({(): Fraction(1)}, frozenset(survivors), frozenset(edges))
    out = {}
    for mono, c in poly.items():
        powers = dict(mono)
        if set(powers) - {_T}:
            raise AssertionError("integration left free variables")
        out[(powers.get(_T, 0), theta_power)] = c
    return ThetaPolynomial(out)


def wick_sum(layout: BranchLayout) -> ThetaPolynomial:
    """Sum of the delta integrals over every pairing of the layout."""
    total = ThetaPolynomial.zero()
    for pairing in enumerate_pairings(layout):
        total = total + evaluate_simplex_delta_integral(layout, pairing)
    return total


def wick_table_rows(max_order: int = 4) -> list[dict[str, str]]:
    """Rows ``layout, pairing, k, j, coefficient`` for all layouts up to ``max_order``.

    Pairings with a vanishing integral get a single row with coefficient ``0/1``.
    """
    rows = []
    for layout in layouts_up_to(max_order):
        for pairing in enumerate_pairings(layout):
            value = evaluate_simplex_delta_integral(layout, pairing)
            terms = list(value.terms()) or [(0, 0, Fraction(0))]
            for k, j, c in terms:
                rows.append({
                    "layout": str(layout),
                    "pairing": str(pairing),
                    "k": str(k),
                    "j": str(j),
                    "coefficient": format_fraction(c),
                })
    return rows


# --------------------------------------------------------------------------
# Quadrature oracle
# --------------------------------------------------------------------------

def _bump_cell_average(offsets: np.ndarray, theta0: float, cells: int, eps: float) -> np.ndarray:
    """Average of the regularized delta over a pair of grid cells ``offsets`` apart.

    The bump carries mass ``theta0`` on ``(0, eps)`` and ``1 - theta0`` on
    ``(-eps, 0]``. The difference of two uniform points in cells ``k`` apart has a
    triangular density whose halves fall on unit intervals ``k-1`` and ``k``.
    """
    def unit(m):
        return np.where((m >= 0) & (m < cells), theta0 / eps,
                        np.where((m >= -cells) & (m < 0), (1.0 - theta0) / eps, 0.0))
    return 0.5 * (unit(offsets - 1) + unit(offsets))


def quadrature_oracle(layout: BranchLayout, pairing: WickPairing, theta0: float, t: float,
                      epsilon: float, cells_per_epsilon: int = 10) -> float:
    """Regularized integral with every delta replaced by a bump of half-width ``epsilon``.

    Nested midpoint-rule quadrature on a uniform grid of step
    ``epsilon / cells_per_epsilon``; ``epsilon`` is snapped so that ``t`` is a
    whole number of cells. Chain orderings and bumps are cell-averaged and the
    nested sums are contracted as a tensor network.
    """
    pairing.check(layout)
    if not 0 <= theta0 <= 1:
        raise ValueError("theta0 must lie in [0, 1]")
    if t <= 0 or epsilon <= 0:
        raise ValueError("t and epsilon must be positive")
    n = layout.total
    if n == 0:
        return 1.0
    cells = int(cells_per_epsilon)
    n_cells = max(1, round(cells * t / epsilon))
    h = t / n_cells
    eps = cells * h
    offsets = np.subtract.outer(np.arange(n_cells), np.arange(n_cells))
    order = np.where(offsets > 0, 1.0, np.where(offsets == 0, 0.5, 0.0))
    bump = _bump_cell_average(offsets, float(theta0), cells, eps)

    # a bump sitting on an adjacent chain pair is merged with that pair's ordering
    # factor: the product of the two cell averages is not the average of the product
    ordered_bump = np.where(offsets > 0, bump, np.where(offsets == 0, 0.5 * float(theta0) / eps, 0.0))

    letters = string.ascii_letters
    pairs = set(pairing.pairs)
    operands, subscripts = [], []
    for chain in layout.chains():
        for a, b in zip(chain[:-1], chain[1:]):
            operands.append(ordered_bump if (a, b) in pairs else order)
            subscripts.append(letters[a] + letters[b])
    for a, b in pairing.pairs:
        if not (a < layout.n_ket) == (b < layout.n_ket) or b != a + 1:
            operands.append(bump)
            subscripts.append(letters[a] + letters[b])
    # contract each connected group of variables on its own; einsum would otherwise
    # form outer products of independent factors
    groups: list[tuple[set[str], list[int]]] = []
    for idx, sub in enumerate(subscripts):
        touching = [g for g in groups if g[0] & set(sub)]
        merged = (set(sub).union(*(g[0] for g in touching)),
                  [idx] + [i for g in touching for i in g[1]])
        groups = [g for g in groups if g not in touching] + [merged]
    total = 1.0
    for _, members in groups:
        expr = ",".join(subscripts[i] for i in members) + "->"
        total *= float(np.einsum(expr, *(operands[i] for i in members), optimize="greedy"))
    return total * h**n


def _neville_at_zero(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Value at 0 of the interpolating polynomial through ``(xs, ys)``."""
    p = list(ys)
    for level in range(1, len(xs)):
        for i in range(len(xs) - level):
            x_lo, x_hi = xs[i], xs[i + level]
            p[i] = (x_hi * p[i] - x_lo * p[i + 1]) / (x_hi - x_lo)
    return p[0]


def extrapolated_oracle(layout: BranchLayout, pairing: WickPairing, theta0: float, t: float,
                        epsilons: Sequence[float] | None = None, tol: float = 1e-6,
                        cells_per_epsilon: int = 10) -> float:
    """Richardson-extrapolate :func:`quadrature_oracle` to ``epsilon -> 0``.

    The grid value is a polynomial in ``epsilon`` of degree ``n/2`` once the grid
    is fine enough, so polynomial extrapolation on ``n/2 + 2`` nodes has one
    spare node; the leave-one-out estimates must agree within ``tol`` (relative
    to ``t**(n/2)``) or :class:`OracleConvergenceError` is raised.
    """
    n = layout.total
    if epsilons is None:
        levels = n // 2 + 2
        epsilons = [t / (10.0 * (k + 1)) for k in range(levels)]
    values = [quadrature_oracle(layout, pairing, theta0, t, e, cells_per_epsilon) for e in epsilons]
    # use the snapped epsilons actually realized on the grid
    actual = [cells_per_epsilon * t / max(1, round(cells_per_epsilon * t / e)) for e in epsilons]
    full = _neville_at_zero(actual, values)
    coarse = _neville_at_zero(actual[:-1], values[:-1])
    scale = max(t ** (n / 2), abs(full))
    if abs(full - coarse) > tol * scale:
        raise OracleConvergenceError(
            f"{layout} {pairing}: extrapolations {coarse!r} and {full!r} differ by "
            f"{abs(full - coarse):.3g} (> {tol} x {scale:.3g})")
    return full


def theta_polynomial_from_rows(rows: Sequence[dict[str, str]]) -> ThetaPolynomial:
    """Rebuild a polynomial from wick-table rows of a single pairing."""
    return ThetaPolynomial({(int(r["k"]), int(r["j"])): as_fraction(r["coefficient"]) for r in rows})
