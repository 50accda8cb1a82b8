"""Experiment configuration read from TOML.

Sections: ``model``, ``grid``, ``paths``, ``basis``, ``a_process``,
``coefficients``, ``solver``, ``checks``, ``certificates``, ``outputs``.
Unknown sections and keys are rejected by name.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .coefficients import BoxSampler, CoefficientSet, ModulusSpec
from .errors import ConfigurationError
from .expressions import expression_coefficients
from .levy_model import LevyModel, model_preset
from .paths import DEFAULT_MAX_ORDER, IncreasingProcessSpec, TimeGrid
from .presets import preset
from .solver import SolverConfig

OUT_ENV = "GBDSDE_OUT"

_KEYS = {
    "model": {"preset", "params", "drift", "sigma", "atoms", "horizon", "family", "intensity", "family_params", "n_nodes"},
    "grid": {"n_steps"},
    "paths": {"n_paths", "seed"},
    "basis": {"max_order", "pivot_tol"},
    "a_process": {"kind", "a", "gamma"},
    "coefficients": {
        "preset", "params", "f", "g", "h", "xi", "C", "alpha", "beta", "K",
        "f_bound", "g_bound", "h_bound", "modulus",
    },
    "solver": {f.name for f in fields(SolverConfig)},
    "checks": {"y_max", "z_max", "n_samples", "seed", "lambda_grid", "t_probe", "osgood_M"},
    "certificates": {"p_max", "provider", "moment_bound", "n_max", "phi_points"},
    "outputs": {"dir", "max_paths"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: LevyModel
    n_steps: int = 50
    n_paths: int = 10000
    seed: int = 0
    max_order: int = DEFAULT_MAX_ORDER
    pivot_tol: float = 1e-12
    a_spec: IncreasingProcessSpec = IncreasingProcessSpec()
    coefficients: dict = field(default_factory=lambda: {"preset": "trivial"})
    solver: SolverConfig = SolverConfig()
    checks: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)
    out_dir: str = "out"
    max_paths: int = 20
    digest: str = ""

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.model.horizon, self.n_steps)

    def coefficient_set(self) -> CoefficientSet:
        return build_coefficients(self.coefficients)

    def sampler(self) -> BoxSampler:
        c = self.checks
        return BoxSampler(
            self.model.horizon,
            y_max=float(c.get("y_max", 10.0)),
            z_max=float(c.get("z_max", 10.0)),
            n_samples=int(c.get("n_samples", 10000)),
            seed=int(c.get("seed", self.seed)),
        )

    def with_overrides(self, seed: int | None = None, n_paths: int | None = None, out_dir: str | None = None):
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if n_paths is not None:
            if n_paths < 1:
                raise ConfigurationError("--paths must be >= 1")
            changes["n_paths"] = int(n_paths)
        if out_dir is not None:
            changes["out_dir"] = out_dir
        return _replace(self, **changes)


def _replace(cfg, **changes):
    values = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    values.update(changes)
    return type(cfg)(**values)


def config_digest(raw: dict) -> str:
    """SHA-256 of the parsed config in canonical JSON form."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - set(_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown config section(s) {sorted(unknown)}")
    for section, table in raw.items():
        if not isinstance(table, dict):
            raise ConfigurationError(f"[{section}] must be a table")
        extra = set(table) - _KEYS[section]
        if extra:
            raise ConfigurationError(f"unknown key(s) {sorted(extra)} in [{section}]")

    model = _model(raw.get("model", {}))
    grid = raw.get("grid", {})
    paths = raw.get("paths", {})
    basis = raw.get("basis", {})
    a = raw.get("a_process", {})
    outputs = raw.get("outputs", {})
    coefficients = dict(raw.get("coefficients", {"preset": "trivial"}))
    cfg = ExperimentConfig(
        model=model,
        n_steps=_int(grid, "n_steps", 50, "grid", minimum=1),
        n_paths=_int(paths, "n_paths", 10000, "paths", minimum=1),
        seed=_int(paths, "seed", 0, "paths", minimum=0),
        max_order=_int(basis, "max_order", DEFAULT_MAX_ORDER, "basis", minimum=1),
        pivot_tol=_float(basis, "pivot_tol", 1e-12, "basis"),
        a_spec=_guard("a_process", lambda: IncreasingProcessSpec(
            kind=str(a.get("kind", "linear")), a=_float(a, "a", 1.0, "a_process"), gamma=_float(a, "gamma", 1.0, "a_process"),
        )),
        coefficients=coefficients,
        solver=_guard("solver", lambda: _solver(raw.get("solver", {}))),
        checks=dict(raw.get("checks", {})),
        certificates=dict(raw.get("certificates", {})),
        out_dir=str(outputs.get("dir", os.environ.get(OUT_ENV, "out"))),
        max_paths=_int(outputs, "max_paths", 20, "outputs", minimum=0),
        digest=config_digest(raw),
    )
    _guard("coefficients", cfg.coefficient_set)
    return cfg


def build_coefficients(table: dict) -> CoefficientSet:
    table = dict(table)
    if "preset" in table:
        stray = set(table) - {"preset", "params"}
        if stray:
            raise ConfigurationError(f"[coefficients] preset does not take {sorted(stray)}; use params")
        return preset(str(table["preset"]), **dict(table.get("params", {})))
    mod = dict(table.pop("modulus", {"kind": "linear"}))
    try:
        rho = ModulusSpec(
            kind=str(mod.get("kind", "linear")), scale=float(mod.get("scale", 1.0)),
            table_u=tuple(mod.get("table_u", ())), table_rho=tuple(mod.get("table_rho", ())),
            knee=float(mod.get("knee", 0.1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"[coefficients.modulus]: {exc}") from None
    return expression_coefficients(table, rho)


def _model(table: dict) -> LevyModel:
    def build():
        if "preset" in table:
            params = dict(table.get("params", {}))
            if "horizon" in table:
                params["horizon"] = float(table["horizon"])
            return model_preset(str(table["preset"]), **params)
        horizon = _float(table, "horizon", 1.0, "model")
        drift = _float(table, "drift", 0.0, "model")
        sigma = _float(table, "sigma", 0.0, "model")
        if "family" in table:
            return LevyModel.from_family(
                str(table["family"]), _float(table, "intensity", 1.0, "model"), dict(table.get("family_params", {})),
                drift=drift, sigma=sigma, horizon=horizon, n_nodes=_int(table, "n_nodes", 10, "model", minimum=1),
            )
        atoms = table.get("atoms", [])
        if not isinstance(atoms, list):
            raise ConfigurationError("[model] atoms must be a list of [x, lambda] pairs")
        return LevyModel(drift=drift, sigma=sigma, atoms=tuple(tuple(a) for a in atoms), horizon=horizon)

    return _guard("model", build)


def _solver(table: dict) -> SolverConfig:
    values = dict(table)
    if "features" in values:
        values["features"] = tuple(values["features"])
    return SolverConfig(**values)


def _guard(section, fn):
    try:
        return fn()
    except ConfigurationError as exc:
        message = str(exc)
        raise ConfigurationError(message if message.startswith("[") else f"[{section}] {message}") from None
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"[{section}] invalid value: {exc}") from None


def _int(table, key, default, section, minimum=None) -> int:
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"[{section}] {key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"[{section}] {key} must be >= {minimum}, got {value}")
    return value


def _float(table, key, default, section) -> float:
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"[{section}] {key} must be a number, got {value!r}")
    return float(value)
