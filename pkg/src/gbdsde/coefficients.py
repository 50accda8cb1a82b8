"""Coefficients ``(f, g, h, xi)``, concave moduli, and sampling audits of (H1)-(H5).

Every check samples a configured box and reports the worst margin found; a
pass is evidence over that box, not a global certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import ConfigurationError, EvaluatorError
from .paths import PathBundle

CHECK_TOL = 1e-9

DriverFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
HFn = Callable[[float, np.ndarray], np.ndarray]
TerminalFn = Callable[[PathBundle], np.ndarray]
BoundFn = Callable[[float], float]


# Moduli


@dataclass(frozen=True)
class ModulusSpec:
    """Concave modulus ``rho(t, u)``.

    kinds: ``linear`` (scale*u), ``log`` (scale*u*(1 + ln(1/u)) below ``knee``,
    continued by its tangent line above), ``sqrt`` (scale*sqrt(u), not Osgood), ``zero``, and
    ``table`` (piecewise linear through ``(table_u, table_rho)``, constant past
    the last node).
    """

    kind: str = "linear"
    scale: float = 1.0
    table_u: tuple[float, ...] = ()
    table_rho: tuple[float, ...] = ()
    knee: float = 0.1

    def __post_init__(self):
        if self.kind not in ("linear", "log", "sqrt", "zero", "table"):
            raise ConfigurationError(f"unknown modulus kind {self.kind!r}")
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise ConfigurationError("modulus scale must be >= 0")
        if not 0 < self.knee <= 1:
            raise ConfigurationError("log modulus knee must lie in (0, 1]")
        if self.kind == "table":
            u, r = np.asarray(self.table_u, float), np.asarray(self.table_rho, float)
            if len(u) < 2 or len(u) != len(r):
                raise ConfigurationError("table modulus needs matching u and rho lists of length >= 2")
            if u[0] != 0 or r[0] != 0:
                raise ConfigurationError("table modulus must start at (0, 0)")
            if np.any(np.diff(u) <= 0):
                raise ConfigurationError("table modulus u-nodes must increase")

    def __call__(self, t, u):
        if isinstance(u, (float, int)) and self.kind in ("linear", "sqrt", "zero"):
            # scalar path for the quadrature loops in the certificates
            if self.kind == "linear":
                return self.scale * float(u)
            return self.scale * math.sqrt(max(u, 0.0)) if self.kind == "sqrt" else 0.0
        u = np.asarray(u, dtype=float)
        if self.kind == "linear":
            out = self.scale * u
        elif self.kind == "log":
            out = self.scale * log_modulus(u, self.knee)
        elif self.kind == "sqrt":
            out = self.scale * np.sqrt(np.maximum(u, 0.0))
        elif self.kind == "zero":
            out = np.zeros_like(u)
        else:
            out = np.interp(u, self.table_u, self.table_rho)
        return out if out.ndim else float(out)

    def label(self) -> str:
        if self.kind == "table":
            return "table"
        if self.kind == "log":
            return f"log(scale={self.scale:g}, knee={self.knee:g})"
        return f"{self.kind}(scale={self.scale:g})"


def log_modulus(u, knee: float = 0.1):
    """``u (1 + ln(1/u))`` on ``[0, knee]``, then its tangent line; concave, Osgood.

    A knee at 1 gives a modulus that is flat past 1. Lower knees keep the
    modulus growing linearly for large arguments.
    """
    u = np.asarray(u, dtype=float)
    slope = -math.log(knee)
    safe = np.clip(u, 1e-300, knee)
    out = np.where(u > knee, knee * (1.0 + slope) + slope * (u - knee), safe * (1.0 - np.log(safe)))
    return np.where(u <= 0.0, 0.0, out)


def log_root_modulus(r, knee: float = 0.1):
    """``sqrt(log_modulus(r^2))``: nondecreasing, subadditive, not Lipschitz at 0."""
    r = np.asarray(r, dtype=float)
    return np.sqrt(log_modulus(r * r, knee))


# Coefficients


def _one(t):
    return 1.0


@dataclass(frozen=True)
class CoefficientSet:
    """Drivers and constants of a GBDSDE.

    ``f(t, y, z)`` and ``g(t, y, z)`` take per-path arrays ``y`` of shape ``(n,)``
    and ``z`` of shape ``(n, m)``; ``h(t, y)`` takes ``y``; ``xi(bundle)``
    returns the terminal value per path. The bounding functions default to 1.
    """

    f: DriverFn
    g: DriverFn
    h: HFn
    xi: TerminalFn
    rho: ModulusSpec
    C: float
    alpha: float
    beta: float
    K: float
    f_bound: BoundFn = _one
    g_bound: BoundFn = _one
    h_bound: BoundFn = _one
    name: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.beta < 0:
            raise ConfigurationError(f"beta must be < 0, got {self.beta}")
        if not self.C > 0:
            raise ConfigurationError(f"C must be > 0, got {self.C}")
        if not self.K > 0:
            raise ConfigurationError(f"K must be > 0, got {self.K}")


@dataclass
class CheckReport:
    name: str
    passed: bool
    margins: dict[str, float]
    worst: dict[str, dict] = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for key, value in self.margins.items():
            where = self.worst.get(key)
            suffix = f" at {where}" if where else ""
            out.append(f"  {key} margin = {value:.6g}{suffix}")
        return out


@dataclass(frozen=True)
class BoxSampler:
    """Uniform samples of ``t in [0, T]``, ``|y| <= y_max``, ``||z|| <= z_max``.

    Half of the pair samples are "near" pairs whose separation is log-uniform in
    ``[near_min, 1]``, so moduli are probed close to the diagonal.
    """

    horizon: float = 1.0
    y_max: float = 10.0
    z_max: float = 10.0
    n_samples: int = 10_000
    seed: int = 0
    near_min: float = 1e-8
    n_times: int = 64

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def _times(self, rng, n):
        # evaluators take scalar t, so times are drawn from a fixed grid
        return rng.choice(np.linspace(0.0, self.horizon, self.n_times + 1), n)

    def points(self, m: int):
        rng = self.rng(1)
        n = self.n_samples
        t = self._times(rng, n)
        y = rng.uniform(-self.y_max, self.y_max, n)
        z = self._ball(rng, n, m)
        # box faces, where growth bounds are tightest
        corners_y = np.array([-self.y_max, self.y_max, 0.0, 0.0])
        corners_z = np.zeros((4, m))
        if m:
            corners_z[2, 0] = self.z_max
            corners_z[3, 0] = -self.z_max
        t = np.concatenate([t, np.full(4, self.horizon)])
        return t, np.concatenate([y, corners_y]), np.concatenate([z, corners_z])

    def pairs(self, m: int):
        rng = self.rng(2)
        n = self.n_samples
        t = self._times(rng, n)
        y1 = rng.uniform(-self.y_max, self.y_max, n)
        z1 = self._ball(rng, n, m)
        y2 = rng.uniform(-self.y_max, self.y_max, n)
        z2 = self._ball(rng, n, m)
        near = np.arange(n) < n // 2
        k = int(near.sum())
        gap = np.exp(rng.uniform(math.log(self.near_min), 0.0, k)) * rng.choice([-1.0, 1.0], k)
        y2[near] = y1[near] + gap
        zgap = np.exp(rng.uniform(math.log(self.near_min), 0.0, (k, 1))) * self._ball(rng, k, m) / max(self.z_max, 1e-300)
        z2[near] = z1[near] + np.where(rng.uniform(size=(k, 1)) < 0.5, 0.0, zgap)
        return t, y1, z1, y2, z2

    def _ball(self, rng, n, m):
        if m == 0:
            return np.zeros((n, 0))
        direction = rng.standard_normal((n, m))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return direction * rng.uniform(0, self.z_max, (n, 1))


def _evaluate(name, fn, t, *args, point_args=None):
    """Evaluate ``fn`` once per distinct ``t``; raise on non-finite output."""
    out = np.empty(len(t))
    for tv in np.unique(t):
        idx = np.nonzero(t == tv)[0]
        out[idx] = np.broadcast_to(fn(float(tv), *(a[idx] for a in args)), (len(idx),))
    bad = ~np.isfinite(out)
    if bad.any():
        i = int(np.argmax(bad))
        point = {"t": float(t[i])}
        for label, a in zip(point_args or (), args):
            point[label] = np.asarray(a[i]).tolist()
        raise EvaluatorError(f"{name} returned {out[i]} at {point}", point)
    return out


def _bounds(fn, t):
    return np.array([fn(float(tv)) for tv in t])


def _worst(margin, **coords):
    i = int(np.argmax(margin))
    return float(margin[i]), {k: np.asarray(v[i]).round(6).tolist() for k, v in coords.items()}


def check_growth(cs: CoefficientSet, sampler: BoxSampler, m: int) -> CheckReport:
    """(H2) linear growth of ``f``, ``g`` and ``h`` around the bounding functions."""
    t, y, z = sampler.points(m)
    znorm = np.linalg.norm(z, axis=1)
    fv = _evaluate("f", cs.f, t, y, z, point_args=("y", "z"))
    gv = _evaluate("g", cs.g, t, y, z, point_args=("y", "z"))
    hv = _evaluate("h", cs.h, t, y, point_args=("y",))
    margins, worst = {}, {}
    for key, val, bound, reach in (
        ("f", fv, cs.f_bound, np.abs(y) + znorm),
        ("g", gv, cs.g_bound, np.abs(y) + znorm),
        ("h", hv, cs.h_bound, np.abs(y)),
    ):
        bt = _bounds(bound, t)
        if np.any(bt < 1):
            raise ConfigurationError(f"bounding function for {key} must take values in [1, inf)")
        margins[key], worst[key] = _worst(np.abs(val) - (bt + cs.K * reach), t=t, y=y)
    passed = all(v <= CHECK_TOL for v in margins.values())
    return CheckReport("growth (H2)", passed, margins, worst)


def check_monotone_h(cs: CoefficientSet, sampler: BoxSampler) -> CheckReport:
    """(H3): worst ``(dy dh - beta dy^2) / dy^2`` over sampled pairs."""
    t, y1, _, y2, _ = sampler.pairs(0)
    keep = y1 != y2
    t, y1, y2 = t[keep], y1[keep], y2[keep]
    dy = y1 - y2
    dh = _evaluate("h", cs.h, t, y1, point_args=("y",)) - _evaluate("h", cs.h, t, y2, point_args=("y",))
    ratio = (dy * dh - cs.beta * dy * dy) / (dy * dy)
    margin, where = _worst(ratio, t=t, y1=y1, y2=y2)
    return CheckReport("monotonicity of h (H3)", margin <= CHECK_TOL, {"h": margin}, {"h": where})


def check_modulus(cs: CoefficientSet, sampler: BoxSampler, m: int) -> CheckReport:
    """(H4): squared-difference bounds on ``f`` and ``g``, Lipschitz ``h``, and properties of ``rho``."""
    t, y1, z1, y2, z2 = sampler.pairs(m)
    dy2 = (y1 - y2) ** 2
    dz2 = np.sum((z1 - z2) ** 2, axis=1)
    rho = np.asarray(cs.rho(t, dy2), dtype=float)
    args = ("y", "z")
    df = _evaluate("f", cs.f, t, y1, z1, point_args=args) - _evaluate("f", cs.f, t, y2, z2, point_args=args)
    dg = _evaluate("g", cs.g, t, y1, z1, point_args=args) - _evaluate("g", cs.g, t, y2, z2, point_args=args)
    dh = _evaluate("h", cs.h, t, y1, point_args=("y",)) - _evaluate("h", cs.h, t, y2, point_args=("y",))
    margins, worst = {}, {}
    coords = dict(t=t, y1=y1, y2=y2)
    margins["f"], worst["f"] = _worst(df**2 - rho - cs.C * dz2, **coords)
    margins["g"], worst["g"] = _worst(dg**2 - rho - cs.alpha * dz2, **coords)
    margins["h_lipschitz"], worst["h_lipschitz"] = _worst(np.abs(dh) - cs.K * np.sqrt(dy2), **coords)

    shape = modulus_shape(cs.rho, sampler.horizon, u_max=(2 * sampler.y_max) ** 2)
    margins.update(shape.margins)
    integrals = modulus_time_integrals(cs.rho, sampler.horizon)
    finite = all(math.isfinite(v) for v in integrals.values())
    passed = all(v <= CHECK_TOL for v in margins.values()) and finite
    return CheckReport("modulus (H4)", passed, margins, worst, {"time_integrals": integrals})


def modulus_shape(rho: ModulusSpec, horizon: float, u_max: float = 400.0, n_u: int = 2001, n_t: int = 5) -> CheckReport:
    """Sampled ``rho(t, 0) = 0``, nondecreasing and concave (second differences) in ``u``."""
    u = np.concatenate([[0.0], np.geomspace(1e-12, u_max, n_u - 1)])
    margins = {"rho_at_zero": 0.0, "rho_decrease": -np.inf, "rho_convexity": -np.inf}
    for t in np.linspace(0, horizon, n_t):
        r = np.asarray(rho(t, u), dtype=float)
        margins["rho_at_zero"] = max(margins["rho_at_zero"], abs(float(r[0])))
        margins["rho_decrease"] = max(margins["rho_decrease"], float(np.max(-np.diff(r))))
        slopes = np.diff(r) / np.diff(u)
        # concavity: slopes nonincreasing, measured relative to their size
        rel = np.diff(slopes) / np.maximum(np.abs(slopes[:-1]), 1e-300)
        margins["rho_convexity"] = max(margins["rho_convexity"], float(np.max(rel)) - 1e-6)
    passed = all(v <= CHECK_TOL for v in margins.values())
    return CheckReport("modulus shape", passed, margins)


def modulus_time_integrals(rho: ModulusSpec, horizon: float, u_values: Sequence[float] = (1e-6, 1e-3, 1.0, 10.0, 100.0)) -> dict:
    """(H4)(ii): ``int_0^T rho(t, u) dt`` by quadrature at fixed ``u``."""
    return {float(u): float(quad(lambda s: float(rho(s, u)), 0.0, horizon, limit=200)[0]) for u in u_values}


def check_osgood(
    rho: ModulusSpec,
    M: float,
    t_probe: Sequence[float],
    horizon: float = 1.0,
    eps_exponents: Sequence[int] = tuple(range(2, 11)),
    delta_exponents: Sequence[int] = tuple(range(6, 13)),
    ratio_threshold: float = 0.5,
) -> CheckReport:
    """(H4)(iii) probes for uniqueness of the zero solution of ``u' = -M rho(t, u)``, ``u(T) = 0``.

    (a) ``I(eps) = int_eps^1 du / rho(t*, u)`` for ``eps = 10^-2 .. 10^-10``: the
    increments per decade must stay positive and must not decay geometrically
    (last increment at least ``ratio_threshold`` times the previous one).
    (b) ``u' = -M rho``, ``u(T) = delta`` for ``delta = 10^-6 .. 10^-12``: ``ln u(0)``
    must keep decreasing with ``delta`` at a non-geometrically-decaying rate,
    i.e. ``u(0)`` is not converging to a positive limit.
    """
    if M <= 0:
        raise ConfigurationError("M must be > 0")
    details: dict = {"divergence": {}, "backward_ode": {}}
    ok_a = True
    for t_star in t_probe:
        values = [_inverse_integral(rho, float(t_star), 10.0 ** -e) for e in eps_exponents]
        details["divergence"][float(t_star)] = values
        ok_a &= _keeps_growing(values, ratio_threshold)

    log_u0 = []
    for e in delta_exponents:
        log_u0.append(_backward_ode_log_u0(rho, M, horizon, 10.0 ** -e))
    details["backward_ode_log_u0"] = {f"1e-{e}": float(v) for e, v in zip(delta_exponents, log_u0)}
    ok_b = _keeps_growing([-v for v in log_u0], ratio_threshold)

    margins = {"divergence_probe": 0.0 if ok_a else 1.0, "backward_ode_probe": 0.0 if ok_b else 1.0}
    return CheckReport(f"Osgood condition (H4)(iii), rho={rho.label()}", ok_a and ok_b, margins, details=details)


def _keeps_growing(values, ratio_threshold) -> bool:
    values = np.asarray(values, dtype=float)
    if np.all(np.isinf(values)):
        return True
    steps = np.diff(values)
    if not np.all(steps > 0):
        return False
    return bool(steps[-1] >= ratio_threshold * steps[-2])


def _inverse_integral(rho: ModulusSpec, t: float, eps: float) -> float:
    if float(rho(t, 0.5)) == 0.0:
        return math.inf

    def integrand(s):
        u = math.exp(s)
        r = float(rho(t, u))
        return math.inf if r <= 0 else u / r

    value, _ = quad(integrand, math.log(eps), 0.0, limit=400, epsabs=0.0, epsrel=1e-11)
    return value


def _backward_ode_log_u0(rho: ModulusSpec, M: float, horizon: float, delta: float) -> float:
    """Integrate ``v = ln u`` from ``t = T`` down to 0 in reversed time."""

    def rhs(tau, v):
        # past e^700 the ratio rho/u is evaluated at the cap; concavity makes it flat there anyway
        u = math.exp(min(v[0], 700.0))
        return [M * float(rho(horizon - tau, u)) / u]

    sol = solve_ivp(rhs, (0.0, horizon), [math.log(delta)], method="LSODA", rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise EvaluatorError(f"backward ODE probe failed: {sol.message}")
    return float(sol.y[0, -1])


@dataclass
class TerminalReport:
    lambdas: list[float]
    estimates: list[float]
    stderrs: list[float]
    stable: list[bool]
    h1_integrals: dict[str, float]
    h1_positive: bool

    @property
    def passed(self) -> bool:
        return all(self.stable) and all(math.isfinite(e) for e in self.estimates) and self.h1_positive

    def lines(self) -> list[str]:
        out = [f"terminal (H5) and (H1): {'PASS' if self.passed else 'FAIL'}"]
        for lam, est, se, ok in zip(self.lambdas, self.estimates, self.stderrs, self.stable):
            out.append(f"  lambda={lam:g}: E[exp(lambda A_T) xi^2] = {est:.6g} +- {se:.2g} {'stable' if ok else 'GROWING'}")
        for key, value in self.h1_integrals.items():
            out.append(f"  {key} = {value:.6g}")
        return out


def check_terminal(cs: CoefficientSet, bundle: PathBundle, lambda_grid: Sequence[float], m: int | None = None) -> TerminalReport:
    """(H5) Monte Carlo ``E[exp(lambda A_T) xi^2]`` with nested-subsample stability, plus (H1) integrals."""
    xi = np.asarray(cs.xi(bundle), dtype=float)
    if not np.all(np.isfinite(xi)):
        raise EvaluatorError("xi returned non-finite values", {"path": int(np.argmax(~np.isfinite(xi)))})
    A_T = bundle.A[:, -1]
    n = bundle.n_paths
    estimates, stderrs, stable = [], [], []
    for lam in lambda_grid:
        sample = np.exp(lam * A_T) * xi**2
        est, se = float(sample.mean()), _se(sample)
        estimates.append(est)
        stderrs.append(se)
        ok = True
        for frac in (8, 4, 2):
            sub = sample[: max(n // frac, 2)]
            sub_se = _se(sub)
            if abs(float(sub.mean()) - est) > 4 * max(sub_se, 1e-12 * abs(est)):
                ok = False
        stable.append(ok and math.isfinite(est))
    integrals = h1_integrals(cs, bundle, bundle.rank if m is None else m)
    total = sum(integrals.values())
    return TerminalReport(list(map(float, lambda_grid)), estimates, stderrs, stable, integrals, 0 < total < math.inf)


def h1_integrals(cs: CoefficientSet, bundle: PathBundle, m: int) -> dict[str, float]:
    """``E int |f(s,0,0)|^2 ds``, ``E int |g(s,0,0)|^2 ds`` and ``E int |h(s,0)|^2 dA_s`` (left-point sums)."""
    n = bundle.n_paths
    times, dt, dA = bundle.grid.times, bundle.grid.dt, bundle.dA
    y0, z0 = np.zeros(n), np.zeros((n, m))
    f_int = np.zeros(n)
    g_int = np.zeros(n)
    h_int = np.zeros(n)
    for k in range(bundle.grid.n_steps):
        t = float(times[k])
        f_int += np.broadcast_to(cs.f(t, y0, z0), (n,)) ** 2 * dt[k]
        g_int += np.broadcast_to(cs.g(t, y0, z0), (n,)) ** 2 * dt[k]
        h_int += np.broadcast_to(cs.h(t, y0), (n,)) ** 2 * dA[:, k]
    return {"E_int_f0_sq": float(f_int.mean()), "E_int_g0_sq": float(g_int.mean()), "E_int_h0_sq_dA": float(h_int.mean())}


def _se(sample):
    return float(sample.std(ddof=1) / math.sqrt(len(sample))) if len(sample) > 1 else float("nan")
