"""Picard iteration for the GBDSDE over a discrete backward scheme.

Each outer iterate ``n`` freezes ``Y^{n-1}`` in the ``y``-slots of ``f`` and
``g`` and runs one backward sweep:

    Z_k   = CE[(Y_{k+1} - CE[Y_{k+1}]) dH_k] / dt_k
    r_k   = CE[Y_{k+1} + f(t_{k+1}, Y^{n-1}_{k+1}, Z_k) dt_k + g(t_{k+1}, Y^{n-1}_{k+1}, Z_k) dB_k]
    Y_k   = r_k + h(t_k, Y_k) dA_k          (solved implicitly)

``CE`` is a least-squares projection on polynomials of quantities known at
``t_k`` under ``F^L_{t_k} v F^B_{t_k,T}``: ``L_{t_k}``, ``A_{t_k}``, the
backward Brownian level ``B_T - B_{t_k}`` and the step increment ``dB_k``.
Coefficients are evaluated at grid values, so ``Y_{s-}`` and ``Y_s`` coincide.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr

from .coefficients import CoefficientSet
from .errors import ConfigurationError, ImplicitStepError, RegressionError
from .paths import PathBundle

log = logging.getLogger(__name__)

FEATURES = ("L", "A", "B_back", "dB")


@dataclass(frozen=True)
class SolverConfig:
    n_picard_max: int = 50
    picard_tol: float = 1e-3
    degree: int = 2
    features: tuple[str, ...] = FEATURES
    chaos_order: int | None = None
    implicit_tol: float = 1e-12
    ridge: float = 1e-8
    singular_tol: float = 1e-12
    regression_tol: float = 1e-3
    initial_value: float = 0.0

    def __post_init__(self):
        if self.n_picard_max < 1:
            raise ConfigurationError("n_picard_max must be >= 1")
        for name in ("picard_tol", "implicit_tol", "ridge", "singular_tol", "regression_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")
        if self.degree < 0:
            raise ConfigurationError("degree must be >= 0")
        unknown = set(self.features) - set(FEATURES)
        if unknown:
            raise ConfigurationError(f"unknown regression features {sorted(unknown)}; known: {FEATURES}")
        if self.chaos_order is not None and self.chaos_order < 0:
            raise ConfigurationError("chaos_order must be >= 0")

    def m_for(self, rank: int) -> int:
        m = rank if self.chaos_order is None else self.chaos_order
        if m > rank:
            raise ConfigurationError(f"chaos truncation m={m} exceeds basis rank {rank}")
        if rank >= 1 and m < 1:
            raise ConfigurationError("chaos truncation m must be >= 1 when the basis has rank >= 1")
        return m


@dataclass
class SolutionEstimate:
    """Solver output. ``Y`` is ``(n_paths, N + 1)``; ``Z`` is ``(n_paths, N, m)`` on step left ends."""

    times: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    residuals: list[float] = field(default_factory=list)
    converged: bool = False
    n_iterations: int = 0
    dy2_history: list[np.ndarray] = field(default_factory=list)
    dy2_stderr_history: list[np.ndarray] = field(default_factory=list)

    @property
    def mean_Y(self) -> np.ndarray:
        return self.Y.mean(axis=0)

    @property
    def mean_Z(self) -> np.ndarray:
        return self.Z.mean(axis=0)

    def mean_abs_Y(self) -> np.ndarray:
        return np.abs(self.Y).mean(axis=0)

    def mean_norm_Z(self) -> np.ndarray:
        return np.linalg.norm(self.Z, axis=2).mean(axis=0)


# Regression


class Projector:
    """Least-squares projection onto a fixed polynomial design.

    Constant columns are dropped before the design is built (the intercept
    carries constants), and a pivoted QR drops columns that are numerically
    dependent on earlier ones (``B_T - B_{t_k}`` equals ``dB_k`` on the last
    step, for instance). If what remains still has a normal matrix with
    reciprocal condition number below ``singular_tol``, the fit falls back to
    ridge-regularized normal equations with penalty ``ridge * trace / p``.
    """

    DEPENDENT_TOL = 1e-10

    def __init__(self, raw: np.ndarray, degree: int, ridge: float = 1e-8, singular_tol: float = 1e-12):
        raw = np.asarray(raw, dtype=float)
        if raw.ndim == 1:
            raw = raw[:, None]
        n = raw.shape[0]
        center = raw.mean(axis=0)
        scale = raw.std(axis=0)
        keep = scale > 1e-12 * (1.0 + np.abs(center))
        z = (raw[:, keep] - center[keep]) / scale[keep]
        design = polynomial_design(z, degree)
        p = design.shape[1]
        if n < p:
            raise RegressionError(f"{n} samples cannot fit {p} regression columns")
        q, r, perm = qr(design, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        if not diag[0] > 0:
            raise RegressionError("regression design is identically zero")
        rank = int(np.sum(diag > self.DEPENDENT_TOL * diag[0]))
        self.columns = np.sort(perm[:rank])
        self.ridged = bool((diag[rank - 1] / diag[0]) ** 2 <= singular_tol)
        self._n = n
        if self.ridged:
            self.design = design[:, self.columns]
            gram = self.design.T @ self.design / n
            gram += ridge * np.trace(gram) / rank * np.eye(rank)
            try:
                self._factor = cho_factor(gram)
            except LinAlgError as exc:
                raise RegressionError(f"degenerate regression design: {exc}") from None
        else:
            self._q = q[:, :rank]

    def __call__(self, targets: np.ndarray) -> np.ndarray:
        targets = np.asarray(targets, dtype=float)
        if targets.size and np.all(targets == targets[0]):
            # the intercept reproduces constants; skip the rounding of a projection
            return targets.copy()
        if self.ridged:
            coef = cho_solve(self._factor, self.design.T @ targets / self._n)
            return self.design @ coef
        return self._q @ (self._q.T @ targets)


def polynomial_design(z: np.ndarray, degree: int) -> np.ndarray:
    """All monomials of total degree ``<= degree`` in the columns of ``z``, intercept first."""
    n, d = z.shape
    columns = [np.ones(n)]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            columns.append(np.prod(z[:, combo], axis=1))
    return np.column_stack(columns)


def regress_conditional(features: np.ndarray, targets: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Fitted values of ``targets`` regressed on polynomials of ``features``."""
    return Projector(features, cfg.degree, cfg.ridge, cfg.singular_tol)(np.asarray(targets, dtype=float))


def step_features(bundle: PathBundle, k: int, features=FEATURES) -> np.ndarray:
    cols = []
    for name in features:
        if name == "L":
            cols.append(bundle.L[:, k])
        elif name == "A":
            cols.append(bundle.A[:, k])
        elif name == "B_back":
            cols.append(bundle.B[:, -1] - bundle.B[:, k])
        elif name == "dB":
            cols.append(bundle.B[:, k + 1] - bundle.B[:, k])
    if not cols:
        return np.zeros((bundle.n_paths, 0))
    return np.column_stack(cols)


def build_projectors(bundle: PathBundle, cfg: SolverConfig) -> list[Projector]:
    projectors = []
    for k in range(bundle.grid.n_steps):
        try:
            projectors.append(Projector(step_features(bundle, k, cfg.features), cfg.degree, cfg.ridge, cfg.singular_tol))
        except RegressionError as exc:
            raise RegressionError(f"time step {k} (t={bundle.grid.times[k]:g}): {exc}") from None
    return projectors


# Implicit step


def implicit_h_step(rhs, h, t: float, dA, tol: float = 1e-12, max_iter: int = 100):
    """Solve ``y = rhs + h(t, y) dA`` per path.

    Under (H3) ``y - h(t, y) dA`` is strictly increasing with slope at least 1,
    so the root lies within ``|h(t, rhs)| dA`` of ``rhs``. Safeguarded Newton
    (finite-difference slope, bisection fallback) inside that bracket.
    """
    scalar = np.ndim(rhs) == 0 and np.ndim(dA) == 0
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    dA = np.broadcast_to(np.asarray(dA, dtype=float), rhs.shape)
    if np.any(dA < 0):
        raise ImplicitStepError("dA must be >= 0")
    y = rhs.copy()
    idx = np.nonzero(dA > 0)[0]
    if len(idx):
        r, d = rhs[idx], dA[idx]

        def phi(v):
            return v - np.asarray(h(t, v), dtype=float) * d - r

        width = np.abs(np.asarray(h(t, r), dtype=float)) * d + tol
        lo, hi = r - width, r + width
        for _ in range(60):
            bad = (phi(lo) > 0) | (phi(hi) < 0)
            if not bad.any():
                break
            width = np.where(bad, 2 * width, width)
            lo, hi = r - width, r + width
        else:
            raise ImplicitStepError(
                f"could not bracket y = rhs + h(t, y) dA at t={t:g}; h is not decreasing in y (H3 violated?)"
            )
        v = r.copy()
        for _ in range(max_iter):
            f_v = phi(v)
            if np.all(np.abs(f_v) < tol):
                break
            lo = np.where(f_v < 0, v, lo)
            hi = np.where(f_v > 0, v, hi)
            eps = 1e-7 * (1.0 + np.abs(v))
            slope = (phi(v + eps) - f_v) / eps
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = v - f_v / slope
            ok = (slope > 0) & (newton > lo) & (newton < hi)
            v = np.where(np.abs(f_v) < tol, v, np.where(ok, newton, 0.5 * (lo + hi)))
        else:
            raise ImplicitStepError(f"implicit h-step did not reach tolerance {tol:g} at t={t:g}")
        y[idx] = v
    return float(y[0]) if scalar else y


# Norm and sweep


def e_norm(Y: np.ndarray, Z: np.ndarray, bundle: PathBundle) -> float:
    """``E[max_k Y_k^2 + sum_k Y_k^2 dA_k + sum_k ||Z_k||^2 dt_k]`` (squared norm)."""
    Y = np.asarray(Y, dtype=float)
    sup = np.max(Y**2, axis=1)
    a_part = np.sum(Y[:, :-1] ** 2 * bundle.dA, axis=1)
    z_part = np.sum(np.sum(np.asarray(Z) ** 2, axis=2) * bundle.grid.dt, axis=1) if np.size(Z) else 0.0
    return float(np.mean(sup + a_part + z_part))


def backward_sweep(prev_Y, bundle: PathBundle, cs: CoefficientSet, cfg: SolverConfig, xi=None, projectors=None):
    """One backward pass with ``prev_Y`` frozen in the ``y``-slots of ``f`` and ``g``."""
    n, N = bundle.n_paths, bundle.grid.n_steps
    m = cfg.m_for(bundle.rank)
    times, dt = bundle.grid.times, bundle.grid.dt
    if xi is None:
        xi = np.asarray(cs.xi(bundle), dtype=float)
    if projectors is None:
        projectors = build_projectors(bundle, cfg)
    prev_Y = np.asarray(prev_Y, dtype=float)
    dB, dA, dH = bundle.dB, bundle.dA, bundle.dH[..., :m]

    Y = np.empty((n, N + 1))
    Z = np.zeros((n, N, m))
    Y[:, N] = xi
    for k in range(N - 1, -1, -1):
        project = projectors[k]
        y_next = Y[:, k + 1]
        if m:
            # dH_k has zero conditional mean, so centring Y_{k+1} leaves CE[Y dH] unchanged
            centred = y_next - project(y_next)
            Z[:, k, :] = project(centred[:, None] * dH[:, k, :]) / dt[k]
        z_k = Z[:, k, :]
        t_next = float(times[k + 1])
        target = (
            y_next
            + np.broadcast_to(cs.f(t_next, prev_Y[:, k + 1], z_k), (n,)) * dt[k]
            + np.broadcast_to(cs.g(t_next, prev_Y[:, k + 1], z_k), (n,)) * dB[:, k]
        )
        r_k = project(target)
        Y[:, k] = implicit_h_step(r_k, cs.h, float(times[k]), dA[:, k], cfg.implicit_tol)
    return Y, Z


def solve(bundle: PathBundle, cs: CoefficientSet, cfg: SolverConfig = SolverConfig()) -> SolutionEstimate:
    """Picard iteration from ``Y^0 = cfg.initial_value`` until the E-norm change falls below ``picard_tol``."""
    n, N = bundle.n_paths, bundle.grid.n_steps
    m = cfg.m_for(bundle.rank)
    xi = np.asarray(cs.xi(bundle), dtype=float)
    if xi.shape != (n,) or not np.all(np.isfinite(xi)):
        raise ConfigurationError("xi must return finite values, one per path")
    projectors = build_projectors(bundle, cfg)

    prev_Y = np.full((n, N + 1), float(cfg.initial_value))
    prev_Z = np.zeros((n, N, m))
    est = SolutionEstimate(times=bundle.grid.times, Y=prev_Y, Z=prev_Z)
    for it in range(1, cfg.n_picard_max + 1):
        Y, Z = backward_sweep(prev_Y, bundle, cs, cfg, xi=xi, projectors=projectors)
        diff = Y - prev_Y
        residual = e_norm(diff, Z - prev_Z, bundle)
        sq = diff**2
        est.residuals.append(residual)
        est.dy2_history.append(sq.mean(axis=0))
        est.dy2_stderr_history.append(sq.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(N + 1, np.nan))
        est.Y, est.Z, est.n_iterations = Y, Z, it
        log.debug("picard iteration %d: residual %.3e", it, residual)
        if residual < cfg.picard_tol:
            est.converged = True
            break
        prev_Y, prev_Z = Y, Z
    return est
