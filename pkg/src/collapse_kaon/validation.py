"""Acceptance criteria, runnable from the CLI (``validate``) and from the test suite."""
from __future__ import annotations

import filecmp
import os
import random
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import sympy as sp
from scipy.optimize import curve_fit

from . import analytic
from .assembly import _phase, assemble_oscillation, assemble_survival, cross_terms
from .core import Flavor, MassState, PhysicalParams, ThetaPolynomial
from .montecarlo import (Grid, Scheme, estimate, exact_interference_factor, run_trajectories,
                         trajectory_observables)
from .wick import (BranchLayout, WickPairing, enumerate_pairings, evaluate_simplex_delta_integral,
                   extrapolated_oracle, layouts_up_to, wick_sum)

THETAS = (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0
    data: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# 1. Wick engine vs quadrature
# --------------------------------------------------------------------------

def check_wick_engine(t: float = 1.0, rel_tol: float = 1e-3, max_seconds: float = 60.0):
    start = time.perf_counter()
    nested = evaluate_simplex_delta_integral(BranchLayout(4, 0), WickPairing.from_labels("(12)(34)"))
    nested_ok = nested == ThetaPolynomial.monomial(Fraction(1, 2), 2, 2)
    worst, failures, checked = 0.0, [], 0
    for layout in layouts_up_to(4):
        for pairing in enumerate_pairings(layout):
            exact = evaluate_simplex_delta_integral(layout, pairing)
            for theta0 in THETAS:
                ref = float(exact.evaluate(theta0, Fraction(t).limit_denominator()))
                got = extrapolated_oracle(layout, pairing, float(theta0), t)
                scale = abs(ref) if ref else t ** (layout.total / 2)
                err = abs(got - ref) / scale
                worst = max(worst, err)
                checked += 1
                if err > rel_tol:
                    failures.append(f"{layout} {pairing} theta0={theta0}: {got!r} vs {ref!r}")
    elapsed = time.perf_counter() - start
    passed = nested_ok and not failures and elapsed < max_seconds
    detail = (f"nested (4,0) = {nested}; {checked} oracle checks, worst rel err {worst:.2e}; "
              f"{elapsed:.1f} s")
    if failures:
        detail += "; failures: " + "; ".join(failures[:3])
    return passed, detail, {"worst_rel_err": worst, "checked": checked, "seconds": elapsed}


# --------------------------------------------------------------------------
# 2. Assembled coefficients equal the closed forms
# --------------------------------------------------------------------------

def _random_params(rng: random.Random) -> PhysicalParams:
    def q(lo, hi):
        return Fraction(rng.randint(lo, hi), rng.randint(1, 20))
    m_S = q(1, 40)
    m_L = m_S + q(1, 10)
    return PhysicalParams(m_S=m_S, m_L=m_L, m_0=q(5, 40), lam=q(1, 10), alpha=q(1, 30),
                          Gamma_S=q(0, 10), Gamma_L=q(0, 3))


def _identity_mismatches(params: PhysicalParams) -> list[str]:
    bad = []
    for mu in MassState:
        got = assemble_survival(mu, params).branch(mu, mu)
        want = analytic.survival_bracket(mu, params)
        for k in (0, 1, 2):
            if got.t_coefficient(k) != want.t_coefficient(k):
                bad.append(f"survival {mu.value} t^{k}: {got.t_coefficient(k)} != {want.t_coefficient(k)}")
    osc = 4 * assemble_oscillation(Flavor.K0, Flavor.K0, params).branch(MassState.S, MassState.L)
    want = analytic.oscillation_bracket(params)
    for k in (0, 1, 2):
        if osc.t_coefficient(k) != want.t_coefficient(k):
            bad.append(f"oscillation t^{k}: {osc.t_coefficient(k)} != {want.t_coefficient(k)}")
    return bad


def check_coefficient_identity(n_random: int = 3, seed: int = 2024, max_seconds: float = 1.0):
    start = time.perf_counter()
    rng = random.Random(seed)
    param_sets = [PhysicalParams()] + [_random_params(rng) for _ in range(n_random)]
    bad = []
    for params in param_sets:
        bad += _identity_mismatches(params)
    elapsed = time.perf_counter() - start
    passed = not bad and elapsed < max_seconds
    detail = f"{len(param_sets)} parameter sets, {len(bad)} mismatches, {elapsed * 1e3:.0f} ms"
    if bad:
        detail += "; " + "; ".join(bad[:3])
    return passed, detail, {"seconds": elapsed, "mismatches": bad}


# --------------------------------------------------------------------------
# 3. Particle-number conservation at theta0 = 1/2 without decay
# --------------------------------------------------------------------------

def check_conservation():
    params = PhysicalParams(Gamma_S=0, Gamma_L=0)
    half = Fraction(1, 2)
    one = ThetaPolynomial.constant(1)
    residuals = {}
    for mu in MassState:
        poly = assemble_survival(mu, params).branch(mu, mu).substitute_theta(half)
        residuals[f"P_{mu.value}{mu.value}"] = poly - one
    total = (assemble_oscillation(Flavor.K0, Flavor.K0, params)
             + assemble_oscillation(Flavor.K0, Flavor.K0bar, params)).substitute_theta(half)
    merged = total.merged()
    residuals["P_K0K0 + P_K0K0bar"] = (sum(merged.values(), ThetaPolynomial.zero()) - one)
    cross_left = [k for k in merged if k[0] is not k[1]]
    passed = all(r.is_zero() for r in residuals.values()) and not cross_left
    detail = "; ".join(f"{k} residual = {r}" for k, r in residuals.items())
    if cross_left:
        detail += f"; interference branches left: {cross_left}"
    return passed, detail, {}


# --------------------------------------------------------------------------
# 4. theta0 = 1/2 reductions, symbolically
# --------------------------------------------------------------------------

def _symbolic_cross_bracket():
    """Interference bracket assembled symbolically from the Wick sums."""
    lam, alpha, m0, mS, mL, t, th = sp.symbols("lambda alpha m_0 m_S m_L t theta0", positive=True)
    total = sp.Integer(0)
    for a, b in cross_terms():
        n = a + b
        moment = sp.factorial2(n - 1) * (alpha / 2) ** (n // 2) if n else sp.Integer(1)
        poly = wick_sum(BranchLayout(a, b)) if n else ThetaPolynomial.constant(1)
        expr = sum(sp.Rational(c.numerator, c.denominator) * t**k * th**j for k, j, c in poly.terms())
        total += _phase(a, b) * lam ** (n // 2) * (mS / m0) ** a * (mL / m0) ** b * moment * expr
    return total, (lam, alpha, m0, mS, mL, t, th)


def check_half_reductions():
    bracket, (lam, alpha, m0, mS, mL, t, th) = _symbolic_cross_bracket()
    at_half = sp.expand(bracket.subs(th, sp.Rational(1, 2)))
    linear = at_half.coeff(t, 1)
    quadratic = at_half.coeff(t, 2)
    lin_res = sp.simplify(linear + sp.Rational(1, 4) * lam / m0**2 * alpha * (mL - mS) ** 2)
    # strip the common 3/8 (lambda alpha / m_0^2)^2 prefactor
    inner = sp.simplify(quadratic / (sp.Rational(3, 8) * lam**2 * alpha**2 / m0**4))
    quad_res = sp.simplify(sp.expand(inner - (mL - mS) ** 4 / 4))
    passed = lin_res == 0 and quad_res == 0
    detail = f"linear residual = {lin_res}; quadratic inner = {sp.factor(inner)}, residual = {quad_res}"
    return passed, detail, {}


# --------------------------------------------------------------------------
# 5. Scheme <-> theta0 correspondence by simulation
# --------------------------------------------------------------------------

def _per_trajectory_slopes(t: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Least-squares linear coefficient of ``values - 1`` on ``{t, t^2, t^3}``."""
    design = np.stack([t, t**2, t**3], axis=1)
    return (values - 1.0) @ np.linalg.pinv(design)[0]


def check_scheme_correspondence(n_trajectories: int = 100_000, dt: float = 1e-3, seed: int = 5,
                                grid: Grid = Grid(128), unitary_tol: float = 1e-10):
    params = PhysicalParams(m_S=1, m_L=1, Gamma_S=0, Gamma_L=0)
    start = time.perf_counter()
    data, lines, passed = {}, [], True

    t_unit = np.linspace(0.0, 1.0, 11)
    mid = run_trajectories(Scheme.MIDPOINT_UNITARY, params, n_trajectories, dt, t_unit, seed, grid)
    dev = float(np.nanmax(np.abs(np.concatenate([mid.n_S, mid.n_L]) - 1.0)))
    ok = dev < unitary_tol and not mid.failed.any()
    passed &= ok
    lines.append(f"MidpointUnitary max |norm^2 - 1| = {dev:.1e}")
    data["midpoint_max_dev"] = dev

    t_fit = np.linspace(0.0, 0.5, 21)
    target_rate = 0.5 * params.lam * params.m_S**2 * params.alpha / params.m_0**2
    for scheme, sign in ((Scheme.LEFT_POINT, 1.0), (Scheme.RIGHT_POINT, -1.0)):
        target = sign * target_rate
        coarse = run_trajectories(scheme, params, n_trajectories, dt, t_fit, seed, grid,
                                  path_substeps=2)
        fine = run_trajectories(scheme, params, n_trajectories, dt / 2, t_fit, seed, grid)
        s_c = _per_trajectory_slopes(t_fit, coarse.n_S)
        s_f = _per_trajectory_slopes(t_fit, fine.n_S)
        extrap = 2 * s_f - s_c
        mean_c, mean_f, mean_x = (float(np.mean(s)) for s in (s_c, s_f, extrap))
        err_x = float(np.std(extrap, ddof=1) / np.sqrt(extrap.size))
        within = abs(mean_x - target) < 3 * err_x
        improves = abs(mean_f - target) < abs(mean_c - target)
        ok = within and improves and not (coarse.failed.any() or fine.failed.any())
        passed &= ok
        lines.append(f"{scheme.value}: slope(dt) = {mean_c:.6f}, slope(dt/2) = {mean_f:.6f}, "
                     f"extrapolated = {mean_x:.6f} +- {err_x:.1e} (target {target:+.3f})")
        data[scheme.value] = {"coarse": mean_c, "fine": mean_f, "extrapolated": mean_x,
                              "stderr": err_x, "within_3_stderr": within, "halving_improves": improves}
    elapsed = time.perf_counter() - start
    data["seconds"] = elapsed
    lines.append(f"{elapsed:.0f} s (target < 300 s)")
    return bool(passed), "; ".join(lines), data


# --------------------------------------------------------------------------
# 6. Exact characteristic solution vs perturbation
# --------------------------------------------------------------------------

def check_exact_characteristic(c_alpha: float = 0.05, tol: float = 5e-5,
                               n_trajectories: int = 20_000, seed: int = 11):
    params = PhysicalParams()
    t = c_alpha * 2 * params.m_0**2 / (params.lam * params.delta_m**2 * params.alpha)
    exact = exact_interference_factor(params, t)
    perturbative = float(analytic.oscillation_bracket(params).evaluate(0.5, t))
    diff = exact - perturbative
    ok_series = abs(diff) < tol

    est = estimate(Scheme.EXACT_CHARACTERISTIC, params, n_trajectories, t, np.array([t]), seed)
    expected = np.exp(1j * params.delta_m * t) * exact
    mc = complex(est.mean["interference_re"][0], est.mean["interference_im"][0])
    err = complex(est.stderr["interference_re"][0], est.stderr["interference_im"][0])
    ok_mc = abs(mc.real - expected.real) < 3 * err.real and abs(mc.imag - expected.imag) < 3 * err.imag
    detail = (f"t = {t:g}: (1+c alpha)^-1/2 = {exact:.8f}, bracket = {perturbative:.8f}, "
              f"difference = {diff:.2e}; trajectory mean {mc:.5f} vs {expected:.5f} "
              f"(stderr {abs(err):.1e})")
    return ok_series and ok_mc, detail, {"difference": diff, "t": t}


# --------------------------------------------------------------------------
# 7. Standard quantum-mechanics limit
# --------------------------------------------------------------------------

def _standard_oscillation(params: PhysicalParams, t: np.ndarray, sign: float) -> np.ndarray:
    GL, GS = params.Gamma_L, params.Gamma_S
    return 0.25 * (np.exp(-GL * t) + np.exp(-GS * t)
                   + sign * 2 * np.cos(params.delta_m * t) * np.exp(-0.5 * (GL + GS) * t))


def check_standard_limit(ulps: float = 8.0, freq_tol: float = 0.01, n_trajectories: int = 32,
                         seed: int = 3):
    params = PhysicalParams(lam=0)
    t = np.linspace(0.0, 50.0, 501)
    worst = 0.0
    for final, sign in ((Flavor.K0, 1.0), (Flavor.K0bar, -1.0)):
        ref = _standard_oscillation(params, t, sign)
        for got in (analytic.oscillation_probability(final, params, 0.5, t),
                    assemble_oscillation(Flavor.K0, final, params)(0.5, t)):
            worst = max(worst, float(np.max(np.abs(got - ref))))
    eps = np.finfo(float).eps
    ok_formula = worst <= ulps * eps

    t_mc = np.arange(0.0, 200.0 + 1e-9, 0.5)
    batch = run_trajectories(Scheme.MIDPOINT_UNITARY, params, n_trajectories, 0.01, t_mc, seed)
    signal = np.mean(trajectory_observables(batch, params)["interference_re"], axis=0)

    def model(tt, amp, omega, phase):
        return amp * np.cos(omega * tt + phase)

    (amp, omega, phase), _ = curve_fit(model, t_mc, signal, p0=(1.0, 0.9 * params.delta_m, 0.0))
    rel = abs(abs(omega) - params.delta_m) / params.delta_m
    passed = ok_formula and rel < freq_tol
    detail = (f"max |P - P_standard| = {worst:.1e} ({worst / eps:.1f} ulp); fitted omega = "
              f"{abs(omega):.6f} vs dm = {params.delta_m:.6f} (rel {rel:.1e})")
    return passed, detail, {"max_abs_diff": worst, "omega": abs(omega)}


# --------------------------------------------------------------------------
# 8. Byte-identical reruns
# --------------------------------------------------------------------------

def check_determinism(args: Sequence[str] = ("--trajectories", "2000", "--seed", "7",
                                            "--t-max", "0.5", "--steps", "5")):
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for threads in ("0", "1"):
            out = Path(tmp) / f"run_{threads}.csv"
            env = dict(os.environ, COLLAPSE_KAON_THREADS=threads)
            proc = subprocess.run([sys.executable, "-m", "collapse_kaon", "compare", *args,
                                   "--out", str(out)], env=env, capture_output=True, text=True)
            if proc.returncode != 0:
                return False, f"compare exited {proc.returncode}: {proc.stderr.strip()[-300:]}", {}
            outs.append(out)
        same = filecmp.cmp(outs[0], outs[1], shallow=False)
        size = outs[0].stat().st_size
    return same, f"two compare runs ({size} bytes, thread caps auto and 1) identical: {same}", {}


CRITERIA: dict[int, tuple[str, Callable]] = {
    1: ("Wick engine vs quadrature oracle", check_wick_engine),
    2: ("Assembled coefficients = closed forms", check_coefficient_identity),
    3: ("Particle-number conservation at theta0=1/2", check_conservation),
    4: ("theta0=1/2 reductions (symbolic)", check_half_reductions),
    5: ("Scheme <-> theta0 correspondence", check_scheme_correspondence),
    6: ("Exact characteristic vs perturbation", check_exact_characteristic),
    7: ("Standard-QM limit", check_standard_limit),
    8: ("Determinism", check_determinism),
}


def run_criterion(number: int) -> CriterionResult:
    name, func = CRITERIA[number]
    start = time.perf_counter()
    try:
        passed, detail, data = func()
    except Exception as exc:  # reported as a failure, not a crash
        passed, detail, data = False, f"{type(exc).__name__}: {exc}", {}
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - start,
                           _jsonable(data))


def run_all(only: Sequence[int] | None = None) -> list[CriterionResult]:
    numbers = sorted(only) if only else sorted(CRITERIA)
    unknown = [n for n in numbers if n not in CRITERIA]
    if unknown:
        raise ValueError(f"unknown criteria {unknown}; valid are {sorted(CRITERIA)}")
    return [run_criterion(n) for n in numbers]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, Fraction):
        return str(value)
    return value
