"""Trajectory simulation of the random-Hamiltonian Schroedinger equation.

With the rest-mass Hamiltonian the position operator is not dynamical, so every
grid point evolves independently under a scalar stochastic multiplier. The
three discretizations of the noise term realize the three step-function
conventions: left point (Ito, theta0 = 0), unitary midpoint (Stratonovich,
theta0 = 1/2) and right point (implicit, theta0 = 1). ``ExactCharacteristic``
uses the closed-form solution that depends only on the Wiener value ``W_t``.

Each trajectory draws its noise from its own Philox counter block keyed by the
master seed, so results do not depend on batching or execution order.
"""
from __future__ import annotations

import enum
import logging
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np

from .core import Flavor, MassState, PhysicalParams, branch_weight

log = logging.getLogger(__name__)

OVERFLOW_NORM2 = 1e6
OBSERVABLES = ("P_SS", "P_LL", "P_K0K0", "P_K0K0bar", "norm2", "interference_re", "interference_im")


class StepOverflowError(FloatingPointError):
    """A trajectory's norm squared exceeded the overflow cap."""


class Scheme(enum.Enum):
    LEFT_POINT = "LeftPoint"
    MIDPOINT_UNITARY = "MidpointUnitary"
    RIGHT_POINT = "RightPoint"
    EXACT_CHARACTERISTIC = "ExactCharacteristic"

    @property
    def theta0(self) -> Fraction:
        return {
            Scheme.LEFT_POINT: Fraction(0),
            Scheme.MIDPOINT_UNITARY: Fraction(1, 2),
            Scheme.RIGHT_POINT: Fraction(1),
            Scheme.EXACT_CHARACTERISTIC: Fraction(1, 2),
        }[self]

    @classmethod
    def parse(cls, name: "str | Scheme") -> "Scheme":
        if isinstance(name, Scheme):
            return name
        key = str(name).replace("-", "").replace("_", "").lower()
        for scheme in cls:
            if scheme.value.lower() == key or scheme.name.replace("_", "").lower() == key:
                return scheme
        raise ValueError(f"unknown scheme {name!r}; choose from {[s.value for s in cls]}")


_KERNEL_CODE = {Scheme.LEFT_POINT: 0, Scheme.MIDPOINT_UNITARY: 1, Scheme.RIGHT_POINT: 2}


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred position grid; ``extent`` defaults to ``12 sqrt(alpha)``."""

    n_points: int = 512
    extent: float | None = None

    def points(self, alpha: float) -> tuple[np.ndarray, float]:
        extent = self.extent if self.extent is not None else 12.0 * math.sqrt(alpha)
        dx = extent / self.n_points
        if dx > math.sqrt(alpha) / 10 * (1 + 1e-12):
            raise ValueError(f"grid spacing {dx:.4g} does not resolve the packet "
                             f"(need <= sqrt(alpha)/10 = {math.sqrt(alpha) / 10:.4g})")
        if extent < 10 * math.sqrt(alpha) * (1 - 1e-12):
            raise ValueError(f"grid extent {extent:.4g} is below 10 sqrt(alpha)")
        x = -extent / 2 + (np.arange(self.n_points) + 0.5) * dx
        return x, dx


def initial_packet(params: PhysicalParams, grid: Grid) -> tuple[np.ndarray, np.ndarray, float]:
    """Gaussian packet of width ``sqrt(alpha)`` and momentum ``p_i`` on the grid.

    Returns ``(x, psi0, dx)`` with ``psi0`` renormalized to unit grid norm after
    checking the raw samples are already within ``1e-6`` of it.
    """
    x, dx = grid.points(params.alpha)
    psi0 = ((math.pi * params.alpha) ** -0.25 * np.exp(-x**2 / (2 * params.alpha))
            * np.exp(1j * params.p_i * x))
    norm2 = float(np.sum(np.abs(psi0) ** 2) * dx)
    if abs(norm2 - 1) > 1e-6:
        raise ValueError(f"grid norm of the initial packet is {norm2!r}, not 1 +- 1e-6")
    return x, psi0 / math.sqrt(norm2), dx


@dataclass(frozen=True)
class TrajectoryState:
    """Flavor components of one trajectory on the position grid."""

    x: np.ndarray
    psi_S: np.ndarray
    psi_L: np.ndarray
    dx: float
    t: float = 0.0

    @classmethod
    def initial(cls, params: PhysicalParams, flavor=Flavor.K0, grid: Grid = Grid()) -> "TrajectoryState":
        from .core import to_mass_basis

        x, psi0, dx = initial_packet(params, grid)
        c_S, c_L = to_mass_basis(flavor)
        return cls(x, c_S * psi0, c_L * psi0, dx)

    def norm2(self) -> float:
        return float((np.sum(np.abs(self.psi_S) ** 2) + np.sum(np.abs(self.psi_L) ** 2)) * self.dx)

    def component_norm2(self, mu: MassState) -> float:
        psi = self.psi_S if mu is MassState.S else self.psi_L
        return float(np.sum(np.abs(psi) ** 2) * self.dx)

    def overlap_LS(self) -> complex:
        """``<psi_L | psi_S>`` on the grid."""
        return complex(np.sum(np.conj(self.psi_L) * self.psi_S) * self.dx)


def _noise_coefficients(params: PhysicalParams) -> tuple[float, float]:
    root = math.sqrt(params.lam) / params.m_0
    return root * params.m_S, root * params.m_L


def step(state: TrajectoryState, scheme, dW: float, dt: float, params: PhysicalParams) -> TrajectoryState:
    """Advance one trajectory by ``dt`` with Wiener increment ``dW``.

    Each flavor component is multiplied pointwise by the scheme's factor, with
    ``z = -m dt + beta(x) dW`` and ``beta(x) = sqrt(lambda) (m / m_0) x``:
    ``1 + i z`` (left point), ``exp(i z)`` (midpoint) or ``1 / (1 - i z)``
    (right point).
    """
    scheme = Scheme.parse(scheme)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if scheme is Scheme.EXACT_CHARACTERISTIC:
        raise ValueError("the exact characteristic solution has no time step; use "
                         "exact_characteristic_trajectory")
    b_S, b_L = _noise_coefficients(params)
    out = []
    for psi, m, b in ((state.psi_S, params.m_S, b_S), (state.psi_L, params.m_L, b_L)):
        z = -m * dt + b * state.x * dW
        if scheme is Scheme.LEFT_POINT:
            factor = 1 + 1j * z
        elif scheme is Scheme.MIDPOINT_UNITARY:
            factor = np.exp(1j * z)
        else:
            factor = 1 / (1 - 1j * z)
        out.append(factor * psi)
    new = TrajectoryState(state.x, out[0], out[1], state.dx, state.t + dt)
    norm2 = new.norm2()
    if not math.isfinite(norm2) or norm2 > OVERFLOW_NORM2:
        raise StepOverflowError(f"norm^2 = {norm2:.3g} at t = {new.t:.6g}")
    return new


def exact_characteristic_trajectory(W_t: float, t: float, params: PhysicalParams,
                                    grid: Grid = Grid()) -> dict[str, float]:
    """Noise-only observables of one trajectory from its Wiener value ``W_t``.

    ``psi_mu(x, t) = exp(-i m_mu t) exp(i sqrt(lambda) (m_mu/m_0) x W_t) psi_mu(x, 0)``;
    flavor norms stay exactly one and only the interference factor fluctuates.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    x, psi0, dx = initial_packet(params, grid)
    b_S, b_L = _noise_coefficients(params)
    rho = np.abs(psi0) ** 2 * dx
    phase = np.exp(-1j * (params.m_S - params.m_L) * t + 1j * (b_S - b_L) * x * W_t)
    overlap = complex(np.sum(rho * phase))
    n_S = n_L = float(np.sum(rho))
    return {"P_SS": n_S, "P_LL": n_L, "interference_re": overlap.real,
            "interference_im": overlap.imag}


def exact_interference_factor(params: PhysicalParams, t) -> np.ndarray | float:
    """Noise average of the interference factor's magnitude, ``(1 + c alpha)^(-1/2)``.

    ``c = lambda (m_L - m_S)^2 t / (2 m_0^2)``.
    """
    t = np.asarray(t, dtype=float)
    c = params.lam * params.delta_m**2 * t / (2 * params.m_0**2)
    out = (1 + c * params.alpha) ** -0.5
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# Noise streams
# --------------------------------------------------------------------------

def trajectory_generator(master_seed: int, index: int) -> np.random.Generator:
    """Philox stream for one trajectory; the index selects a disjoint counter block."""
    if not 0 <= master_seed < 2**64:
        raise ValueError("master_seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=master_seed, counter=[0, 0, 0, index]))


def wiener_increments(master_seed: int, index: int, n_steps: int, dt: float,
                      substeps: int = 1) -> np.ndarray:
    """``n_steps`` increments of variance ``dt`` for trajectory ``index``.

    The path is drawn at resolution ``dt / substeps`` and summed in groups, so
    runs sharing ``dt / substeps`` see the same Brownian path.
    """
    fine = trajectory_generator(master_seed, index).standard_normal(n_steps * substeps)
    fine *= math.sqrt(dt / substeps)
    return fine.reshape(n_steps, substeps).sum(axis=1) if substeps > 1 else fine


# --------------------------------------------------------------------------
# Batched kernel
# --------------------------------------------------------------------------

@numba.njit(cache=True, parallel=True)
def _evolve_batch(code, dW, dt, x, psi0, dx, m_S, m_L, b_S, b_L, sample_steps, cap):
    n_traj, n_steps = dW.shape
    n_grid = x.shape[0]
    n_samples = sample_steps.shape[0]
    n_S = np.zeros((n_traj, n_samples))
    n_L = np.zeros((n_traj, n_samples))
    ov_re = np.zeros((n_traj, n_samples))
    ov_im = np.zeros((n_traj, n_samples))
    failed = np.zeros(n_traj, dtype=np.bool_)
    for i in numba.prange(n_traj):
        sr = psi0.real.copy()
        si = psi0.imag.copy()
        lr = psi0.real.copy()
        li = psi0.imag.copy()
        # midpoint factors are pure phases, so composing steps adds their exponents
        ph_S = np.zeros(n_grid)
        ph_L = np.zeros(n_grid)
        k = 0
        for j in range(n_samples):
            target = sample_steps[j]
            while k < target:
                w = dW[i, k]
                for g in range(n_grid):
                    zs = -m_S * dt + b_S * x[g] * w
                    zl = -m_L * dt + b_L * x[g] * w
                    if code == 1:
                        ph_S[g] += zs
                        ph_L[g] += zl
                    else:
                        a, c = sr[g], si[g]
                        sr[g] = a - c * zs
                        si[g] = c + a * zs
                        a, c = lr[g], li[g]
                        lr[g] = a - c * zl
                        li[g] = c + a * zl
                        if code == 2:
                            ds = 1.0 / (1.0 + zs * zs)
                            dl = 1.0 / (1.0 + zl * zl)
                            sr[g] *= ds
                            si[g] *= ds
                            lr[g] *= dl
                            li[g] *= dl
                k += 1
            acc_s = 0.0
            acc_l = 0.0
            acc_r = 0.0
            acc_i = 0.0
            for g in range(n_grid):
                if code == 1:
                    cs, ss = math.cos(ph_S[g]), math.sin(ph_S[g])
                    cl, sl = math.cos(ph_L[g]), math.sin(ph_L[g])
                    ar = psi0.real[g] * cs - psi0.imag[g] * ss
                    ai = psi0.real[g] * ss + psi0.imag[g] * cs
                    br = psi0.real[g] * cl - psi0.imag[g] * sl
                    bi = psi0.real[g] * sl + psi0.imag[g] * cl
                else:
                    ar, ai, br, bi = sr[g], si[g], lr[g], li[g]
                acc_s += ar * ar + ai * ai
                acc_l += br * br + bi * bi
                # conj(psi_L) * psi_S
                acc_r += br * ar + bi * ai
                acc_i += br * ai - bi * ar
            n_S[i, j] = acc_s * dx
            n_L[i, j] = acc_l * dx
            ov_re[i, j] = acc_r * dx
            ov_im[i, j] = acc_i * dx
            total = 0.5 * (n_S[i, j] + n_L[i, j])
            if not (total <= cap):
                failed[i] = True
                break
    return n_S, n_L, ov_re, ov_im, failed


def _configure_threads() -> None:
    value = os.environ.get("COLLAPSE_KAON_THREADS", "0")
    try:
        n = int(value)
    except ValueError:
        raise ValueError(f"COLLAPSE_KAON_THREADS must be an integer, got {value!r}") from None
    if n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _sample_steps(t_grid, dt: float) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d sequence")
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < 0:
        raise ValueError("t_grid must be non-negative and non-decreasing")
    steps = np.rint(t_grid / dt).astype(np.int64)
    if np.any(np.abs(steps * dt - t_grid) > 1e-9 * np.maximum(1.0, t_grid)):
        raise ValueError("every t_grid point must be a whole number of steps dt")
    return steps


@dataclass
class TrajectoryBatch:
    """Per-trajectory noise-only observables, shape ``(n_trajectories, len(t))``.

    ``n_S`` and ``n_L`` are the grid norms of the K_S- and K_L-prepared
    components, ``overlap`` is ``<psi_L|psi_S>`` for unit-amplitude components.
    Rows of failed (overflowed) trajectories are NaN from the failure on.
    """

    t: np.ndarray
    n_S: np.ndarray
    n_L: np.ndarray
    overlap: np.ndarray
    failed: np.ndarray

    @property
    def n_trajectories(self) -> int:
        return self.n_S.shape[0]


def run_trajectories(scheme, params: PhysicalParams, n_trajectories: int, dt: float, t_grid,
                     master_seed: int, grid: Grid = Grid(), path_substeps: int = 1,
                     batch_size: int = 2048) -> TrajectoryBatch:
    """Simulate ``n_trajectories`` independent trajectories and record observables."""
    scheme = Scheme.parse(scheme)
    if n_trajectories < 1:
        raise ValueError("need at least one trajectory")
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = np.asarray(t_grid, dtype=float)
    x, psi0, dx = initial_packet(params, grid)
    b_S, b_L = _noise_coefficients(params)
    n_S = np.empty((n_trajectories, t.size))
    n_L = np.empty_like(n_S)
    overlap = np.empty(n_S.shape, dtype=complex)
    failed = np.zeros(n_trajectories, dtype=bool)

    if scheme is Scheme.EXACT_CHARACTERISTIC:
        if np.any(np.diff(t) < 0) or t[0] < 0:
            raise ValueError("t_grid must be non-negative and non-decreasing")
        rho = np.abs(psi0) ** 2 * dx
        spacing = np.diff(np.concatenate([[0.0], t]))
        base = np.exp(-1j * (params.m_S - params.m_L) * t)
        for i in range(n_trajectories):
            W = np.cumsum(trajectory_generator(master_seed, i).standard_normal(t.size)
                          * np.sqrt(spacing))
            overlap[i] = base * (np.exp(1j * (b_S - b_L) * np.outer(W, x)) @ rho)
        n_S[:] = np.sum(rho)
        n_L[:] = np.sum(rho)
        return TrajectoryBatch(t, n_S, n_L, overlap, failed)

    steps = _sample_steps(t, dt)
    n_steps = int(steps[-1])
    _configure_threads()
    code = _KERNEL_CODE[scheme]
    for start in range(0, n_trajectories, batch_size):
        stop = min(start + batch_size, n_trajectories)
        dW = np.empty((stop - start, n_steps))
        for i in range(start, stop):
            dW[i - start] = wiener_increments(master_seed, i, n_steps, dt, path_substeps)
        bs, bl, br, bi, bf = _evolve_batch(code, dW, dt, x, psi0, dx, params.m_S, params.m_L,
                                           b_S, b_L, steps, OVERFLOW_NORM2)
        n_S[start:stop], n_L[start:stop] = bs, bl
        overlap[start:stop] = br + 1j * bi
        failed[start:stop] = bf
    if failed.any():
        log.warning("%d of %d trajectories overflowed (norm^2 > %g)",
                    int(failed.sum()), n_trajectories, OVERFLOW_NORM2)
        n_S[failed] = n_L[failed] = np.nan
        overlap[failed] = np.nan
    return TrajectoryBatch(t, n_S, n_L, overlap, failed)


def trajectory_observables(batch: TrajectoryBatch, params: PhysicalParams,
                           initial=Flavor.K0) -> dict[str, np.ndarray]:
    """Per-trajectory observables with decay envelopes applied.

    ``P_K0K0`` and ``P_K0K0bar`` start from ``initial``; ``norm2`` is the total
    norm of the ``initial``-prepared state.
    """
    t = batch.t
    env_S = np.exp(-params.Gamma_S * t)
    env_L = np.exp(-params.Gamma_L * t)
    env_SL = np.exp(-0.5 * (params.Gamma_S + params.Gamma_L) * t)
    P_SS = batch.n_S * env_S
    P_LL = batch.n_L * env_L
    cross = batch.overlap * env_SL

    def transition(final):
        w = {(mu, nu): float(branch_weight(initial, final, mu, nu)) for mu in MassState for nu in MassState}
        return (w[MassState.S, MassState.S] * P_SS + w[MassState.L, MassState.L] * P_LL
                + 2 * w[MassState.S, MassState.L] * cross.real)

    P_K0K0 = transition(Flavor.K0)
    P_K0K0bar = transition(Flavor.K0bar)
    # |c_S|^2 and |c_L|^2 of the prepared state
    w_S = float(branch_weight(Flavor(initial), Flavor.K_S, MassState.S, MassState.S))
    w_L = float(branch_weight(Flavor(initial), Flavor.K_L, MassState.L, MassState.L))
    return {
        "P_SS": P_SS,
        "P_LL": P_LL,
        "P_K0K0": P_K0K0,
        "P_K0K0bar": P_K0K0bar,
        "norm2": w_S * P_SS + w_L * P_LL,
        "interference_re": batch.overlap.real,
        "interference_im": batch.overlap.imag,
    }


@dataclass
class TrajectoryEnsembleEstimate:
    t: np.ndarray
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    n_trajectories: int
    n_failed: int
    master_seed: int
    scheme: Scheme
    dt: float
    extra: dict = field(default_factory=dict)


def summarize(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over axis 0, reduced in trajectory-index order."""
    ok = values[~np.isnan(values).any(axis=tuple(range(1, values.ndim)))] if values.ndim > 1 else values
    n = ok.shape[0]
    if n == 0:
        nan = np.full(values.shape[1:], np.nan)
        return nan, nan
    mean = np.add.reduce(ok, axis=0) / n
    if n == 1:
        return mean, np.full_like(mean, np.nan)
    var = np.add.reduce((ok - mean) ** 2, axis=0) / (n - 1)
    return mean, np.sqrt(var / n)


def estimate(scheme, params: PhysicalParams, n_trajectories: int, dt: float, t_grid,
             master_seed: int, grid: Grid = Grid(), path_substeps: int = 1) -> TrajectoryEnsembleEstimate:
    """Noise-averaged probabilities with standard errors on ``t_grid``."""
    scheme = Scheme.parse(scheme)
    batch = run_trajectories(scheme, params, n_trajectories, dt, t_grid, master_seed, grid,
                             path_substeps)
    per_traj = trajectory_observables(batch, params)
    mean, stderr = {}, {}
    for name in OBSERVABLES:
        mean[name], stderr[name] = summarize(per_traj[name])
    return TrajectoryEnsembleEstimate(batch.t, mean, stderr, n_trajectories,
                                      int(batch.failed.sum()), master_seed, scheme, dt)
