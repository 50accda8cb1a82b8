"""Property battery behind ``gbdsde verify``.

Each check returns a :class:`CheckResult` holding the measured value, the
threshold it is compared against and a pass flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levy_model import LevyModel
from .paths import IncreasingProcessSpec, ItoIntegrands, TimeGrid, bracket_stats, ito_identity_residual, simulate
from .presets import constant_g, linear_f, linear_h
from .solver import SolverConfig, solve
from .teugels import basis_for_model, gram_check

ORTHONORMAL_TOL = 1e-10
BRACKET_SE = 4.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status}  {self.name}: {self.value:.3e} vs {self.threshold:.3e}{extra}"


def check_orthonormality(model: LevyModel, max_order: int, pivot_tol: float = 1e-12) -> CheckResult:
    basis = basis_for_model(model, max_order, pivot_tol)
    residual = float(np.max(np.abs(gram_check(basis)))) if basis.rank else 0.0
    return CheckResult("orthonormality", residual < ORTHONORMAL_TOL, residual, ORTHONORMAL_TOL, f"rank {basis.rank}")


def check_brackets(bundle) -> list[CheckResult]:
    """``[H^(i), H^(j)]_T`` within ``BRACKET_SE`` standard errors of ``delta_ij T``."""
    out = []
    T = bundle.grid.horizon
    for i in range(1, bundle.rank + 1):
        for j in range(i, bundle.rank + 1):
            mean, se = bracket_stats(bundle, i, j)
            gap = abs(mean - (T if i == j else 0.0))
            out.append(CheckResult(f"bracket H{i},H{j}", gap <= BRACKET_SE * se, gap, BRACKET_SE * se, f"mean {mean:.4f}"))
    return out


ITO_CASES = {
    "zero integrands": ItoIntegrands(),
    "zeta1 = 1": ItoIntegrands(zeta=1.0),
    "gamma = 1": ItoIntegrands(gamma=1.0),
}


def check_ito(bundle) -> list[CheckResult]:
    """Residual below ``max(3 SE, 5 dt)`` for each standard integrand case."""
    dt = float(np.max(bundle.grid.dt))
    out = []
    for name, integrands in ITO_CASES.items():
        if name == "zeta1 = 1" and bundle.rank == 0:
            continue
        res = ito_identity_residual(bundle, integrands)
        tol = max(3 * res.stderr, 5 * dt)
        out.append(CheckResult(f"Ito identity, {name}", res.residual < tol, res.residual, tol))
    return out


@dataclass(frozen=True)
class ClosedFormCase:
    name: str
    coefficients: object
    exact: object  # (bundle) -> (n_paths, N + 1) array
    c_disc: float


def closed_form_cases(a: float = 2.0, beta: float = -1.0, gamma: float = 0.5, c: float = 1.0) -> list[ClosedFormCase]:
    """Cases with known solutions and the constant ``C`` in their ``C dt`` error allowance.

    ``f = a``: ``Y_t = c + a (T - t)``, exact for the scheme, ``C = |a|``.
    ``h = beta y`` with ``A_t = t``: ``Y_t = c e^{beta (T - t)}``; implicit Euler
    has global error at most ``|c| beta^2 T dt``, so ``C = |c| beta^2 T``.
    ``g = gamma``: ``Y_t = c + gamma (B_T - B_t)``, exact, ``C = |gamma|``.
    """

    def f_exact(bundle):
        t = bundle.grid.times
        return np.broadcast_to(c + a * (bundle.grid.horizon - t), (bundle.n_paths, len(t)))

    def h_exact(bundle):
        t = bundle.grid.times
        return np.broadcast_to(c * np.exp(beta * (bundle.grid.horizon - t)), (bundle.n_paths, len(t)))

    def g_exact(bundle):
        return c + gamma * (bundle.B[:, -1:] - bundle.B)

    return [
        ClosedFormCase("constant f", linear_f(a=a, c=c), f_exact, abs(a)),
        ClosedFormCase("linear h", linear_h(beta=beta, c=c), h_exact, abs(c) * beta * beta),
        ClosedFormCase("constant g", constant_g(gamma=gamma, c=c), g_exact, abs(gamma)),
    ]


def closed_form_error(case: ClosedFormCase, bundle, cfg: SolverConfig = SolverConfig()) -> tuple[float, float]:
    """``max_k |mean(Y_k - Y_k^exact)|`` and the standard error at that step."""
    est = solve(bundle, case.coefficients, cfg)
    diff = est.Y - case.exact(bundle)
    mean = diff.mean(axis=0)
    se = diff.std(axis=0, ddof=1) / math.sqrt(bundle.n_paths) if bundle.n_paths > 1 else np.zeros_like(mean)
    k = int(np.argmax(np.abs(mean)))
    return float(abs(mean[k])), float(se[k])


def check_closed_forms(model: LevyModel, n_paths: int, seed: int, n_steps: int = 50, cfg: SolverConfig = SolverConfig()) -> list[CheckResult]:
    """Error within ``3 (SE + C dt)`` at ``n_steps``; not larger at ``2 n_steps``."""
    coarse = simulate(model, TimeGrid.uniform(model.horizon, n_steps), IncreasingProcessSpec(), n_paths, seed)
    fine = simulate(model, TimeGrid.uniform(model.horizon, 2 * n_steps), IncreasingProcessSpec(), n_paths, seed)
    dt = model.horizon / n_steps
    out = []
    for case in closed_form_cases():
        c = case.c_disc * model.horizon if case.name == "linear h" else case.c_disc
        err, se = closed_form_error(case, coarse, cfg)
        err2, _ = closed_form_error(case, fine, cfg)
        tol = 3 * (se + c * dt)
        refines = err2 <= err or max(err, err2) < 1e-10
        out.append(CheckResult(
            f"closed form, {case.name}", err < tol and refines, err, tol,
            f"error {err2:.2e} at {2 * n_steps} steps",
        ))
    return out


def run_battery(model: LevyModel, n_paths: int, seed: int, max_order: int = 4, n_steps: int = 100) -> list[CheckResult]:
    results = [check_orthonormality(model, max_order)]
    basis = basis_for_model(model, max_order)
    bundle = simulate(model, TimeGrid.uniform(model.horizon, n_steps), IncreasingProcessSpec(), n_paths, seed, basis)
    results += check_brackets(bundle)
    results += check_ito(bundle)
    results += check_closed_forms(model, min(n_paths, 10000), seed)
    return results
