"""Finite-activity Lévy model: drift, Brownian part and a jump measure given by atoms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "LevyModel",
    "MomentSequence",
    "moments_nu",
    "moments_mu",
    "mean_power_jump",
    "family_atoms",
    "family_moment",
    "MODEL_PRESETS",
    "model_preset",
]


@dataclass(frozen=True)
class MomentSequence:
    """Moments ``values[k]`` for ``k = 0..k_max`` of either ``nu`` or ``mu``."""

    values: np.ndarray
    measure_tag: Literal["nu", "mu"]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]

    @property
    def k_max(self) -> int:
        return len(self.values) - 1


@dataclass(frozen=True)
class LevyModel:
    """Lévy process ``L_t = b t + sigma W_t + sum of jumps``.

    The jump measure is ``nu = sum_j lambda_j delta_{x_j}``. Atoms sharing a
    position are merged and the list is kept sorted, so two models built from
    permuted atom lists compare equal.
    """

    drift: float = 0.0
    sigma: float = 0.0
    atoms: tuple[tuple[float, float], ...] = ()
    horizon: float = 1.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not math.isfinite(self.drift):
            raise ConfigurationError("drift must be finite")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ConfigurationError("sigma must be a finite number >= 0")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigurationError("horizon must be > 0")
        merged: dict[float, float] = {}
        for atom in self.atoms:
            try:
                x, lam = (float(v) for v in atom)
            except (TypeError, ValueError):
                raise ConfigurationError(f"atom {atom!r} is not a pair [x, lambda]") from None
            if x == 0 or not math.isfinite(x):
                raise ConfigurationError(f"atom position must be finite and nonzero, got {x}")
            if not (lam > 0 and math.isfinite(lam)):
                raise ConfigurationError(f"atom intensity must be finite and > 0, got {lam}")
            merged[x] = merged.get(x, 0.0) + lam
        object.__setattr__(self, "atoms", tuple(sorted(merged.items())))

    @classmethod
    def from_family(
        cls,
        family: str,
        intensity: float,
        params: dict,
        drift: float = 0.0,
        sigma: float = 0.0,
        horizon: float = 1.0,
        n_nodes: int = 10,
    ) -> "LevyModel":
        """Build a model whose jump law is a named parametric family.

        The jump-size law is replaced by a Gauss quadrature rule with
        ``n_nodes`` atoms, exact for all moments up to order ``2 n_nodes - 1``.
        """
        atoms = family_atoms(family, intensity, params, n_nodes)
        return cls(drift=drift, sigma=sigma, atoms=atoms, horizon=horizon, name=family)

    @property
    def positions(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms], dtype=float)

    @property
    def intensities(self) -> np.ndarray:
        return np.array([lam for _, lam in self.atoms], dtype=float)

    @property
    def total_intensity(self) -> float:
        return float(sum(lam for _, lam in self.atoms))

    def support_size_mu(self) -> int:
        """Number of distinct support points of ``mu = x^2 nu + sigma^2 delta_0``."""
        return len(self.atoms) + (1 if self.sigma > 0 else 0)


def moments_nu(model: LevyModel, k_max: int) -> MomentSequence:
    """Return ``int x^k nu(dx)`` for ``k = 0..k_max`` (exact sums over atoms)."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    x = model.positions
    lam = model.intensities
    powers = x[None, :] ** np.arange(k_max + 1)[:, None]
    return MomentSequence(powers @ lam if len(x) else np.zeros(k_max + 1), "nu")


def moments_mu(model: LevyModel, k_max: int) -> MomentSequence:
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    nu = moments_nu(model, k_max + 2).values
    values = nu[2:].copy()
    values[0] += model.sigma**2
    return MomentSequence(values, "mu")


def mean_power_jump(model: LevyModel, i: int) -> float:
    """``E[L_1^{(i)}]``: drift plus mean jump for ``i = 1``, ``int x^i nu(dx)`` otherwise."""
    if i < 1:
        raise ValueError("power index i must be >= 1")
    jump_part = float(sum(lam * x**i for x, lam in model.atoms))
    return model.drift + jump_part if i == 1 else jump_part


# Parametric jump laws, discretized by Gauss rules.

_FAMILIES = ("normal", "uniform")


def family_atoms(family: str, intensity: float, params: dict, n_nodes: int = 10) -> list[tuple[float, float]]:
    if family not in _FAMILIES:
        raise ConfigurationError(f"unsupported jump family {family!r}; known: {', '.join(_FAMILIES)}")
    if not intensity > 0:
        raise ConfigurationError("family intensity must be > 0")
    if n_nodes < 1:
        raise ConfigurationError("n_nodes must be >= 1")
    if family == "normal":
        mean, std = float(params.get("mean", 0.0)), float(params["std"])
        if std <= 0:
            raise ConfigurationError("normal jump std must be > 0")
        nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
        nodes = mean + std * nodes
        weights = weights / weights.sum()
    else:
        low, high = float(params["low"]), float(params["high"])
        if not high > low:
            raise ConfigurationError("uniform jump law needs high > low")
        nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
        nodes = 0.5 * (high - low) * nodes + 0.5 * (high + low)
        weights = weights / weights.sum()
    if np.any(np.abs(nodes) < 1e-14):
        raise ConfigurationError(
            f"{family} quadrature places a node at 0; use an even n_nodes or shift the law"
        )
    return [(float(x), float(intensity * w)) for x, w in zip(nodes, weights)]


def family_moment(family: str, intensity: float, params: dict, k: int) -> float:
    """Closed-form ``int x^k nu(dx)`` for a parametric family."""
    if family == "normal":
        mean, std = float(params.get("mean", 0.0)), float(params["std"])
        # E[(m + s G)^k] = sum_j C(k, j) m^(k-j) s^j E[G^j], E[G^j] = (j-1)!! for even j
        total = 0.0
        for j in range(0, k + 1, 2):
            total += math.comb(k, j) * mean ** (k - j) * std**j * _double_factorial(j - 1)
        return intensity * total
    if family == "uniform":
        low, high = float(params["low"]), float(params["high"])
        return intensity * (high ** (k + 1) - low ** (k + 1)) / ((k + 1) * (high - low))
    raise ConfigurationError(f"unsupported jump family {family!r}")


def _double_factorial(n: int) -> int:
    return 1 if n <= 0 else n * _double_factorial(n - 2)



# Named models used by configs and tests.

MODEL_PRESETS = {
    "poisson": lambda horizon=1.0, intensity=4.0: LevyModel(atoms=((1.0, intensity),), horizon=horizon, name="poisson"),
    "two-atom": lambda horizon=1.0, intensity=0.5: LevyModel(
        atoms=((-1.0, intensity), (1.0, intensity)), horizon=horizon, name="two-atom"
    ),
    "jump-diffusion": lambda horizon=1.0, intensity=0.5, sigma=1.0: LevyModel(
        sigma=sigma, atoms=((-1.0, intensity), (1.0, intensity)), horizon=horizon, name="jump-diffusion"
    ),
    "brownian": lambda horizon=1.0, sigma=1.0: LevyModel(sigma=sigma, horizon=horizon, name="brownian"),
}


def model_preset(name: str, **params) -> LevyModel:
    try:
        factory = MODEL_PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown model preset {name!r}; known: {', '.join(MODEL_PRESETS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for model preset {name!r}: {exc}") from None
