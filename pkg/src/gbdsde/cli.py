"""Command-line experiment runner.

    gbdsde <basis|simulate|check|schedule|phi|solve|verify> --config FILE [--out DIR] [--seed N] [--paths N]

Every CSV starts with ``#`` lines carrying the config hash, the seed and the
package versions, so the same config and seed reproduce files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .certificates import (
    BoundProvider,
    CertificateInputs,
    SolverProvider,
    constant_M,
    mu_and_Mp,
    next_breakpoint,
    phi_sequence,
    schedule,
)
from .coefficients import check_growth, check_modulus, check_monotone_h, check_osgood, check_terminal
from .config import ExperimentConfig, load_config
from .errors import GBDSDEError
from .paths import bracket_stats, simulate
from .solver import solve
from .teugels import basis_for_model, gram_check
from .verification import run_battery

log = logging.getLogger("gbdsde")

COMMANDS = ("basis", "simulate", "check", "schedule", "phi", "solve", "verify")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class Run:
    """Shared state of one CLI invocation: config, output directory, header."""

    def __init__(self, command: str, cfg: ExperimentConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.written: list[Path] = []

    def header(self) -> list[str]:
        return [
            f"# gbdsde {self.command}",
            f"# config_sha256={self.cfg.digest}",
            f"# seed={self.cfg.seed} n_paths={self.cfg.n_paths} n_steps={self.cfg.n_steps}",
            f"# versions gbdsde={__version__} numpy={np.__version__} scipy={scipy.__version__}",
        ]

    def write(self, name: str, columns, rows, notes=()) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        with open(path, "w", newline="") as fh:
            for line in self.header():
                fh.write(line + "\n")
            for note in notes:
                fh.write(f"# {note}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        self.written.append(path)
        return path

    def basis(self):
        return basis_for_model(self.cfg.model, self.cfg.max_order, self.cfg.pivot_tol)

    def bundle(self, basis=None):
        cfg = self.cfg
        return simulate(cfg.model, cfg.grid, cfg.a_spec, cfg.n_paths, cfg.seed, basis or self.basis())


def cmd_basis(run: Run) -> int:
    basis = run.basis()
    r = basis.rank
    residual = float(np.max(np.abs(gram_check(basis)))) if r else 0.0
    rows = [[i + 1, *basis.coeffs[i, : i + 1], *([""] * (r - i - 1))] for i in range(r)]
    run.write("basis.csv", ["i", *[f"c_{k}" for k in range(1, r + 1)]], rows, notes=[f"rank={r} gram_residual={residual!r}"])
    print(f"rank {r}, max Gram residual {residual:.3e}")
    return 0


def cmd_simulate(run: Run) -> int:
    bundle = run.bundle()
    r = bundle.rank
    H = bundle.H
    times = bundle.grid.times
    rows = []
    for p in range(min(run.cfg.max_paths, bundle.n_paths)):
        for k, t in enumerate(times):
            rows.append([p, t, bundle.B[p, k], bundle.L[p, k], bundle.A[p, k], *H[p, k]])
    run.write("paths.csv", ["path", "t", "B", "L", "A", *[f"H{i}" for i in range(1, r + 1)]], rows)
    brackets = []
    for i in range(1, r + 1):
        for j in range(i, r + 1):
            mean, se = bracket_stats(bundle, i, j)
            brackets.append([i, j, mean, se])
            print(f"[H{i},H{j}]_T = {mean:.4f} +- {se:.4f}")
    run.write("brackets.csv", ["i", "j", "mean", "stderr"], brackets)
    return 0


def cmd_check(run: Run) -> int:
    cfg = run.cfg
    cs = cfg.coefficient_set()
    bundle = run.bundle()
    m = cfg.solver.m_for(bundle.rank)
    sampler = cfg.sampler()
    M = constant_M(cs.C, cs.alpha, cfg.model.horizon)
    osgood_M = float(cfg.checks.get("osgood_M", M))
    t_probe = cfg.checks.get("t_probe", [0.0, 0.5 * cfg.model.horizon])
    reports = [
        check_growth(cs, sampler, m),
        check_monotone_h(cs, sampler),
        check_modulus(cs, sampler, m),
        check_osgood(cs.rho, osgood_M, t_probe, horizon=cfg.model.horizon),
    ]
    terminal = check_terminal(cs, bundle, cfg.checks.get("lambda_grid", [0.0, 0.5, 1.0]), m)
    rows = []
    for rep in reports:
        for key, value in rep.margins.items():
            rows.append([rep.name, key, value, rep.passed])
        print("\n".join(rep.lines()))
    for lam, est, se, ok in zip(terminal.lambdas, terminal.estimates, terminal.stderrs, terminal.stable):
        rows.append(["terminal (H5)", f"lambda={lam:g}", est, ok])
    for key, value in terminal.h1_integrals.items():
        rows.append(["integrals (H1)", key, value, terminal.h1_positive])
    print("\n".join(terminal.lines()))
    run.write("checks.csv", ["check", "key", "value", "passed"], rows)
    passed = all(rep.passed for rep in reports) and terminal.passed
    print(f"hypothesis checks: {'PASS' if passed else 'FAIL'}")
    return 0


def _certificate_setup(run: Run):
    cfg = run.cfg
    cs = cfg.coefficient_set()
    bundle = run.bundle()
    inputs = CertificateInputs.from_coefficients(cs, bundle, cfg.solver.m_for(bundle.rank))
    return cs, bundle, inputs


def cmd_schedule(run: Run) -> int:
    cfg = run.cfg
    cs, bundle, inputs = _certificate_setup(run)
    mode = str(cfg.certificates.get("provider", "bound"))
    if mode == "solver":
        est = solve(bundle, cs, cfg.solver)
        provider = SolverProvider(est.times, est.Y)
    elif mode == "bound":
        provider = BoundProvider(float(cfg.certificates.get("moment_bound", inputs.y_sq)))
    else:
        raise GBDSDEError(f"[certificates] provider must be 'bound' or 'solver', got {mode!r}")
    sch = schedule(inputs, provider, p_max=int(cfg.certificates.get("p_max", 10000)))
    notes = [
        f"M={sch.M!r} A={sch.A!r} provider={sch.mode} terminated={_fmt(sch.terminated)} intervals={sch.n_intervals}",
        f"note: {sch.note}",
    ]
    run.write("schedule.csv", ["p", "T_prev", "T_p", "mu0", "M_p"], sch.rows(), notes=notes)
    print(f"M = {sch.M:.6g}, {sch.n_intervals} intervals, terminated={sch.terminated}, provider={sch.mode}")
    return 0


def cmd_phi(run: Run) -> int:
    cfg = run.cfg
    _, _, inputs = _certificate_setup(run)
    T = inputs.T
    M = constant_M(inputs.C, inputs.alpha, T)
    mu0, M1 = mu_and_Mp(inputs)
    T1 = next_breakpoint(T, M1, mu0, inputs.rho, M)
    n_max = int(cfg.certificates.get("n_max", 30))
    t_grid = np.linspace(T1, T, int(cfg.certificates.get("phi_points", 51)))
    table = phi_sequence(M, M1, inputs.rho, t_grid, n_max, horizon=T)
    notes = [f"M={M!r} M_1={M1!r} T_1={T1!r} interval=[T_1, T]", f"note: {table.note}"]
    rows = [[t, *table.values[:, i]] for i, t in enumerate(t_grid)]
    run.write("phi.csv", ["t", *[f"phi_{n}" for n in range(n_max + 1)]], rows, notes=notes)
    summary = [[n, table.sup[n], table.quad_error[n]] for n in range(n_max + 1)]
    run.write("phi_summary.csv", ["n", "sup", "quad_error"], summary, notes=[f"monotone_in_n={_fmt(table.all_monotone)}"])
    print(f"T_1 = {T1:.6g}, sup phi_{n_max} = {table.sup[-1]:.3e}, monotone in n: {table.all_monotone}")
    return 0


def cmd_solve(run: Run) -> int:
    cfg = run.cfg
    cs = cfg.coefficient_set()
    bundle = run.bundle()
    est = solve(bundle, cs, cfg.solver)
    y0 = est.Y[:, 0]
    stats = [
        ("mean", float(y0.mean())),
        ("std", float(y0.std(ddof=1)) if len(y0) > 1 else 0.0),
        ("min", float(y0.min())),
        ("q05", float(np.quantile(y0, 0.05))),
        ("median", float(np.median(y0))),
        ("q95", float(np.quantile(y0, 0.95))),
        ("max", float(y0.max())),
    ]
    run.write("y0_summary.csv", ["statistic", "value"], stats,
              notes=[f"converged={_fmt(est.converged)} iterations={est.n_iterations}"])
    run.write("residuals.csv", ["iteration", "residual"], list(enumerate(est.residuals, start=1)))
    profile = zip(est.times, est.mean_Y, est.mean_abs_Y(), np.append(est.mean_norm_Z(), math.nan))
    run.write("profile.csv", ["t", "mean_Y", "mean_abs_Y", "mean_norm_Z"], profile)
    print(f"Y_0 mean {stats[0][1]:.6g} (std {stats[1][1]:.3g}); {est.n_iterations} Picard iterations, converged={est.converged}")
    return 0


def cmd_verify(run: Run) -> int:
    cfg = run.cfg
    results = run_battery(cfg.model, cfg.n_paths, cfg.seed, cfg.max_order)
    for res in results:
        print(res.line())
    run.write("verify.csv", ["check", "passed", "value", "threshold", "detail"],
              [[r.name, r.passed, r.value, r.threshold, r.detail] for r in results])
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return 0 if ok else 1


HELP = {
    "basis": "orthonormal polynomial coefficients for the model",
    "simulate": "sample paths of B, L, A and the Teugels martingales",
    "check": "sampling audit of the coefficient hypotheses",
    "schedule": "breakpoints and per-interval constants",
    "phi": "majorant sequence on [T_1, T]",
    "solve": "Picard iteration with the regression scheme",
    "verify": "property battery with pass/fail per check",
}

HANDLERS = {
    "basis": cmd_basis,
    "simulate": cmd_simulate,
    "check": cmd_check,
    "schedule": cmd_schedule,
    "phi": cmd_phi,
    "solve": cmd_solve,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbdsde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gbdsde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", help="output directory (default: config, then $GBDSDE_OUT, then ./out)")
        p.add_argument("--seed", type=int, help="override [paths] seed")
        p.add_argument("--paths", type=int, help="override [paths] n_paths")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, n_paths=args.paths, out_dir=args.out)
        r = Run(args.command, cfg)
        status = HANDLERS[args.command](r)
    except GBDSDEError as exc:
        print(f"gbdsde {args.command}: error: {exc}", file=sys.stderr)
        return 2
    for path in r.written:
        log.info("wrote %s", path)
    return status


def main() -> None:
    sys.exit(run())

