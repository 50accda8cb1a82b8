"""Explicit constants from the existence argument: ``M``, ``mu_0^p``, ``M_p``,
the breakpoints ``T_p`` and the majorant sequence ``phi_n``.

Everything here is deterministic. Certificate integrals use adaptive Simpson
with absolute tolerance ``QUAD_TOL``. Breakpoints come from bisection on the
monotone map ``T_p -> int_{T_p}^{T_{p-1}} rho(s, M_p) ds``, parametrized by the
step length ``T_{p-1} - T_p`` and solved to ``ROOT_RTOL`` relative to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev
from scipy.optimize import bisect

from .coefficients import CoefficientSet, ModulusSpec, h1_integrals
from .errors import ConfigurationError, EvaluatorError
from .paths import PathBundle

QUAD_TOL = 1e-12
ROOT_RTOL = 1e-10

INTERVAL_NOTE = (
    "the moment bound is stated for t in [T_1, T] but derived on [0, T]; "
    "values here are computed on the interval named in each report"
)


def _check_range(C: float, alpha: float, T: float):
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    if not C > 0:
        raise ConfigurationError(f"C must be > 0, got {C}")
    if not T >= 0:
        raise ConfigurationError(f"T must be >= 0, got {T}")


def constant_M(C: float, alpha: float, T: float) -> float:
    """``max{(3(1-a)/(2C+a) + 1) e^{(2C+a)T/(1-a)}, ((1-a)/C + 1) e^{CT/(1-a)}}``."""
    _check_range(C, alpha, T)
    rate = (2 * C + alpha) * T / (1 - alpha)
    if rate > 700:
        raise ConfigurationError(f"M overflows: exponent (2C+alpha)T/(1-alpha) = {rate:.4g}")
    first = (3 * (1 - alpha) / (2 * C + alpha) + 1) * math.exp(rate)
    second = ((1 - alpha) / C + 1) * math.exp(C * T / (1 - alpha))
    return max(first, second)


def lemma2_constant(C: float, alpha: float, T: float) -> float:
    """``e^{CT/(1-a)} ((1-a)/C + 1)``, the factor bounding consecutive Picard differences."""
    _check_range(C, alpha, T)
    return math.exp(C * T / (1 - alpha)) * ((1 - alpha) / C + 1)


@dataclass(frozen=True)
class CertificateInputs:
    """Constants and base integrals over ``[0, T]``.

    ``y_sq`` is ``E|xi|^2`` on the first interval and ``E|Y_{T_{p-1}}|^2`` later.
    """

    C: float
    alpha: float
    beta: float
    T: float
    y_sq: float
    f0_sq: float = 0.0
    g0_sq: float = 0.0
    h0_sq_dA: float = 0.0
    rho: ModulusSpec = ModulusSpec("linear", 1.0)

    def __post_init__(self):
        _check_range(self.C, self.alpha, self.T)
        if not self.beta < 0:
            raise ConfigurationError(f"beta must be < 0, got {self.beta}")
        values = (self.y_sq, self.f0_sq, self.g0_sq, self.h0_sq_dA)
        if any(not (math.isfinite(v) and v >= 0) for v in values):
            raise ConfigurationError("base integrals must be finite and >= 0")
        if not any(v > 0 for v in values):
            raise ConfigurationError("need E|xi|^2 > 0 or a positive base integral")

    @classmethod
    def from_coefficients(cls, cs: CoefficientSet, bundle: PathBundle, m: int | None = None) -> "CertificateInputs":
        """Monte Carlo base integrals on the bundle's grid."""
        m = bundle.rank if m is None else m
        xi = np.asarray(cs.xi(bundle), dtype=float)
        ints = h1_integrals(cs, bundle, m)
        return cls(
            C=cs.C, alpha=cs.alpha, beta=cs.beta, T=bundle.grid.horizon, y_sq=float(np.mean(xi**2)),
            f0_sq=ints["E_int_f0_sq"], g0_sq=ints["E_int_g0_sq"], h0_sq_dA=ints["E_int_h0_sq_dA"], rho=cs.rho,
        )

    def with_y_sq(self, y_sq: float) -> "CertificateInputs":
        return CertificateInputs(self.C, self.alpha, self.beta, self.T, y_sq, self.f0_sq, self.g0_sq, self.h0_sq_dA, self.rho)

    @property
    def growth(self) -> float:
        return math.exp((2 * self.C + self.alpha) * self.T / (1 - self.alpha))

    def driver_terms(self) -> float:
        a, C = self.alpha, self.C
        return (
            2 * (1 - a) / (2 * C + a) * self.f0_sq
            + (1 + 2 * C) / (1 - a) * self.g0_sq
            + self.h0_sq_dA / abs(self.beta)
        )


def mu_and_Mp(inputs: CertificateInputs) -> tuple[float, float]:
    """``(mu_0^p, M_p)`` with ``M_p = 2 mu_0^p``."""
    mu0 = inputs.growth * (inputs.y_sq + inputs.driver_terms())
    return mu0, 2 * mu0


def termination_constant(inputs: CertificateInputs) -> float:
    """The constant ``A``: ``M_p`` without its ``E|Y|^2`` part. Reported, not used to stop."""
    return 2 * inputs.growth * inputs.driver_terms()


# Quadrature


def adaptive_simpson(fn: Callable[[float], float], a: float, b: float, tol: float = QUAD_TOL, max_depth: int = 60) -> float:
    """Adaptive Simpson with Richardson correction; absolute tolerance ``tol``."""
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_simpson(fn, b, a, tol, max_depth)

    def value(x):
        v = float(fn(x))
        if not math.isfinite(v):
            raise EvaluatorError("integrand returned a non-finite value", point={"s": x})
        return v

    fa, fb, fm = value(a), value(b), value(0.5 * (a + b))
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl, fr = value(0.5 * (lo + mid)), value(0.5 * (mid + hi))
        left = (mid - lo) / 6 * (flo + 4 * fl + fmid)
        right = (hi - mid) / 6 * (fmid + 4 * fr + fhi)
        delta = left + right - est
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15
        else:
            stack.append((lo, mid, flo, fl, fmid, left, eps / 2, depth + 1))
            stack.append((mid, hi, fmid, fr, fhi, right, eps / 2, depth + 1))
    return total


def rho_integral(rho: ModulusSpec, u: float, a: float, b: float, tol: float = QUAD_TOL) -> float:
    """``int_a^b rho(s, u) ds``."""
    return adaptive_simpson(lambda s: rho(s, u), a, b, tol)


# Breakpoints


def next_breakpoint(T_prev: float, M_p: float, mu0: float, rho: ModulusSpec, M: float, tol: float = QUAD_TOL) -> float:
    """Largest-step ``T_p`` with ``int_{T_p}^{T_prev} rho(s, M_p) ds = mu0 / M``, or 0 when the whole interval fits."""
    if not T_prev > 0:
        raise ConfigurationError("T_prev must be > 0")
    if not (M > 0 and M_p > 0 and mu0 > 0):
        raise ConfigurationError("M, M_p and mu_0 must be > 0")
    target = mu0 / M
    if rho_integral(rho, M_p, 0.0, T_prev, tol) <= target:
        return 0.0

    def gap(step):
        return rho_integral(rho, M_p, T_prev - step, T_prev, tol) - target

    # bisect on the step length so the tolerance is relative to it, hence also below ROOT_RTOL * T_prev
    step = bisect(gap, 0.0, T_prev, xtol=1e-300, rtol=ROOT_RTOL, maxiter=400)
    return float(T_prev - step)


class BoundProvider:
    """``E|Y_{T_{p-1}}|^2`` from ``E|xi|^2`` at ``p = 1`` and a fixed bound afterwards."""

    mode = "bound"

    def __init__(self, bound: float):
        if not bound >= 0:
            raise ConfigurationError("moment bound must be >= 0")
        self.bound = float(bound)

    def __call__(self, p: int, t: float, inputs: CertificateInputs) -> float:
        return inputs.y_sq if p == 1 else self.bound


class SolverProvider:
    """``E|Y_t|^2`` read from a solver run at the grid time nearest ``t``."""

    mode = "solver"

    def __init__(self, times: Sequence[float], Y: np.ndarray):
        self.times = np.asarray(times, dtype=float)
        self.second_moment = np.mean(np.asarray(Y, dtype=float) ** 2, axis=0)

    def __call__(self, p: int, t: float, inputs: CertificateInputs) -> float:
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.second_moment[k])


@dataclass
class Schedule:
    breakpoints: list[float]
    mu0: list[float] = field(default_factory=list)
    M_p: list[float] = field(default_factory=list)
    terminated: bool = False
    mode: str = "bound"
    M: float = float("nan")
    A: float = float("nan")
    note: str = INTERVAL_NOTE

    @property
    def n_intervals(self) -> int:
        return len(self.breakpoints) - 1

    def rows(self) -> list[tuple[int, float, float, float, float]]:
        """``(p, T_{p-1}, T_p, mu_0^p, M_p)`` per interval."""
        b = self.breakpoints
        return [(p + 1, b[p], b[p + 1], self.mu0[p], self.M_p[p]) for p in range(self.n_intervals)]


def schedule(inputs: CertificateInputs, provider=None, M: float | None = None, p_max: int = 10000) -> Schedule:
    """Breakpoints ``T = T_0 > T_1 > ... `` until some ``T_p = 0`` or ``p_max`` intervals."""
    if p_max < 1:
        raise ConfigurationError("p_max must be >= 1")
    provider = BoundProvider(inputs.y_sq) if provider is None else provider
    M = constant_M(inputs.C, inputs.alpha, inputs.T) if M is None else M
    out = Schedule([inputs.T], mode=provider.mode, M=M, A=termination_constant(inputs))
    if inputs.T == 0:
        out.terminated = True
        return out
    t_prev = inputs.T
    for p in range(1, p_max + 1):
        stage = inputs.with_y_sq(provider(p, t_prev, inputs))
        mu0, Mp = mu_and_Mp(stage)
        t_next = next_breakpoint(t_prev, Mp, mu0, inputs.rho, M)
        out.breakpoints.append(t_next)
        out.mu0.append(mu0)
        out.M_p.append(Mp)
        if t_next == 0.0:
            out.terminated = True
            break
        t_prev = t_next
    return out


# Majorant sequence


@dataclass
class PhiTable:
    """``values[n, i] = phi_n(t_grid[i])``."""

    t_grid: np.ndarray
    values: np.ndarray
    monotone: np.ndarray
    sup: np.ndarray
    quad_error: np.ndarray
    interval: tuple[float, float]
    note: str = INTERVAL_NOTE

    @property
    def all_monotone(self) -> bool:
        return bool(np.all(self.monotone))


def phi_sequence(
    M: float,
    M1: float,
    rho: ModulusSpec,
    t_grid: Sequence[float],
    n_max: int,
    horizon: float | None = None,
    degree: int = 256,
) -> PhiTable:
    """``phi_0(t) = M int_t^T rho(s, M_1) ds`` and ``phi_{n+1}(t) = M int_t^T rho(s, phi_n(s)) ds``.

    Each ``phi_n`` is held as a Chebyshev interpolant on ``[min(t_grid), T]`` and
    integrated exactly in that representation, so polynomial iterates (linear
    ``rho``) are reproduced to rounding. ``quad_error[n]`` is the largest change
    in ``phi_n`` against a run at half the degree. ``monotone[i]`` flags
    ``phi_{n+1} <= phi_n`` at grid point ``i`` for every ``n``, up to those errors.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    T = float(t_grid.max()) if horizon is None else float(horizon)
    lo = float(t_grid.min())
    if lo > T or n_max < 0:
        raise ConfigurationError("t_grid must lie in [T_1, T] and n_max >= 0")
    if not (M > 0 and M1 >= 0):
        raise ConfigurationError("M must be > 0 and M_1 >= 0")
    values = _phi_iterates(M, M1, rho, t_grid, n_max, lo, T, degree)
    coarse = _phi_iterates(M, M1, rho, t_grid, n_max, lo, T, max(degree // 2, 8))
    quad_error = np.max(np.abs(values - coarse), axis=1) if values.size else np.zeros(n_max + 1)
    slack = (quad_error[1:] + quad_error[:-1])[:, None] + 1e-15 * np.abs(values[:-1])
    monotone = np.all(np.diff(values, axis=0) <= slack, axis=0)
    return PhiTable(t_grid, values, monotone, values.max(axis=1), quad_error, (lo, T))


def _phi_iterates(M, M1, rho, t_grid, n_max, lo, T, degree):
    out = np.empty((n_max + 1, len(t_grid)))
    if T == lo:
        out[:] = 0.0
        return out
    domain = [lo, T]
    nodes = chebyshev.chebpts2(degree + 1)
    s = lo + (nodes + 1) * (T - lo) / 2

    def integrate_to_T(integrand_at_nodes):
        series = chebyshev.Chebyshev.fit(s, integrand_at_nodes, degree, domain=domain)
        anti = series.integ(lbnd=T)
        return lambda x: -M * anti(x)

    rho_s = np.array([rho(si, M1) for si in s])
    phi = integrate_to_T(rho_s)
    for n in range(n_max + 1):
        if n > 0:
            prev = np.maximum(phi(s), 0.0)
            phi = integrate_to_T(np.array([rho(si, ui) for si, ui in zip(s, prev)]))
        vals = phi(t_grid)
        vals[t_grid >= T] = 0.0
        out[n] = np.maximum(vals, 0.0)
    return out


# Empirical check of consecutive Picard differences


@dataclass
class Lemma2Report:
    constant: float
    lhs: np.ndarray
    rhs: np.ndarray
    stderr: np.ndarray
    n_violations: int
    n_hard_violations: int
    worst_z: float

    @property
    def passed(self) -> bool:
        return self.n_hard_violations == 0


def lemma2_check(times, dy2_history, dy2_stderr_history, rho: ModulusSpec, C: float, alpha: float, se_factor: float = 2.0) -> Lemma2Report:
    """Compare ``E|Y^{n+1}_t - Y^n_t|^2`` with ``K int_t^T rho(s, E|Y^n_s - Y^{n-1}_s|^2) ds``.

    ``dy2_history[j]`` holds ``E|Y^{j+1} - Y^j|^2`` per grid point. The time
    integral is a trapezoid sum on the grid. A point counts as a hard violation
    when the left side exceeds the right by more than ``se_factor`` standard errors.
    """
    times = np.asarray(times, dtype=float)
    T = float(times[-1] - times[0])
    K = lemma2_constant(C, alpha, T)
    lhs, rhs, se = [], [], []
    for n in range(1, len(dy2_history)):
        r = np.array([rho(t, u) for t, u in zip(times, np.asarray(dy2_history[n - 1]))])
        seg = 0.5 * (r[1:] + r[:-1]) * np.diff(times)
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        lhs.append(np.asarray(dy2_history[n]))
        rhs.append(K * tail)
        se.append(np.asarray(dy2_stderr_history[n]))
    if not lhs:
        empty = np.zeros((0, len(times)))
        return Lemma2Report(K, empty, empty, empty, 0, 0, -math.inf)
    lhs, rhs, se = np.array(lhs), np.array(rhs), np.array(se)
    excess = lhs - rhs
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(excess > 0, excess / np.where(se > 0, se, np.nan), -np.inf)
    z = np.nan_to_num(z, nan=np.inf, posinf=np.inf, neginf=-np.inf)
    return Lemma2Report(
        K, lhs, rhs, se,
        n_violations=int(np.sum(excess > 0)),
        n_hard_violations=int(np.sum(z > se_factor)),
        worst_z=float(np.max(z)) if z.size else -math.inf,
    )
