"""Exact simulation of ``B``, ``L``, the power-jump and Teugels increments, and ``A``.

Jumps are finite in number, so they are drawn exactly (Poisson counts per atom,
uniform jump times) and then binned into grid steps. ``B``, the Brownian part
of ``L`` and the jumps come from three independent child streams of one
``SeedSequence``, so a bundle is a pure function of its inputs and the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConfigurationError
from .levy_model import LevyModel
from .teugels import TeugelsBasis, basis_for_model, power_jump_means, teugels_increments

DEFAULT_MAX_ORDER = 4


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if times.ndim != 1 or len(times) < 2:
            raise ConfigurationError("time grid needs at least two points")
        if times[0] != 0.0:
            raise ConfigurationError("time grid must start at 0")
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("time grid must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ConfigurationError("n_steps must be >= 1")
        times = np.linspace(0.0, horizon, n_steps + 1)
        times[-1] = horizon
        return cls(times)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class IncreasingProcessSpec:
    """``A_t``: ``linear`` (a t), ``power`` (t^gamma) or ``running_max`` (max_{s<=t} |B_s| - |B_0|)."""

    kind: str = "linear"
    a: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind == "linear":
            if not (math.isfinite(self.a) and self.a >= 0):
                raise ConfigurationError(f"linear A needs a >= 0 (nondecreasing), got {self.a}")
        elif self.kind == "power":
            if not (math.isfinite(self.gamma) and self.gamma >= 1):
                raise ConfigurationError(f"power A needs gamma >= 1, got {self.gamma}")
        elif self.kind != "running_max":
            raise ConfigurationError(f"unknown increasing-process kind {self.kind!r}")

    @property
    def deterministic(self) -> bool:
        return self.kind != "running_max"

    def evaluate(self, times: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
        if self.kind == "linear":
            return self.a * times
        if self.kind == "power":
            return times**self.gamma
        if B is None:
            raise ConfigurationError("running_max A needs Brownian paths")
        absb = np.abs(B)
        return np.maximum.accumulate(absb, axis=-1) - absb[..., :1]


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Simulated paths. Arrays are ``(n_paths, N + 1)`` for values, ``(n_paths, N[, rank])`` for increments."""

    model: LevyModel
    basis: TeugelsBasis
    grid: TimeGrid
    a_spec: IncreasingProcessSpec
    n_paths: int
    seed: int
    B: np.ndarray
    L: np.ndarray
    A: np.ndarray
    dL_power: np.ndarray
    dH: np.ndarray
    jump_path: np.ndarray
    jump_time: np.ndarray
    jump_size: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def rank(self) -> int:
        return self.basis.rank

    @property
    def dB(self) -> np.ndarray:
        return np.diff(self.B, axis=1)

    @property
    def dA(self) -> np.ndarray:
        return np.diff(self.A, axis=1)

    @property
    def H(self) -> np.ndarray:
        """``H^{(i)}_{t_k}``, shape ``(n_paths, N + 1, rank)``."""
        if "H" not in self._cache:
            H = np.zeros((self.n_paths, self.grid.n_steps + 1, self.rank))
            np.cumsum(self.dH, axis=1, out=H[:, 1:, :])
            self._cache["H"] = H
        return self._cache["H"]

    def jump_log(self, path: int) -> list[tuple[float, float]]:
        lo, hi = np.searchsorted(self.jump_path, [path, path + 1])
        return list(zip(self.jump_time[lo:hi].tolist(), self.jump_size[lo:hi].tolist()))

    def reconstruct_dH(self) -> np.ndarray:
        """Recompute ``dH`` from the jump log, ``L`` and the basis."""
        n, N, r = self.n_paths, self.grid.n_steps, self.rank
        if r == 0:
            return np.zeros((n, N, 0))
        steps = _bin_steps(self.grid, self.jump_time)
        powers = _power_sums(self.jump_path, steps, self.jump_size, n, N, r)
        powers[..., 0] = np.diff(self.L, axis=1)
        return teugels_increments(self.basis, powers, self.grid.dt, power_jump_means(self.model, r))


def simulate(
    model: LevyModel,
    grid: TimeGrid,
    a_spec: IncreasingProcessSpec,
    n_paths: int,
    seed: int,
    basis: TeugelsBasis | None = None,
) -> PathBundle:
    if n_paths < 1:
        raise ConfigurationError("n_paths must be >= 1")
    if basis is None:
        basis = basis_for_model(model, DEFAULT_MAX_ORDER)
    n, N, r = n_paths, grid.n_steps, basis.rank
    dt = grid.dt
    T = grid.horizon

    stream_b, stream_w, stream_j = (
        np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(3)
    )

    B = np.zeros((n, N + 1))
    np.cumsum(stream_b.standard_normal((n, N)) * np.sqrt(dt), axis=1, out=B[:, 1:])

    jump_path, jump_time, jump_size = _draw_jumps(model, T, n, stream_j)
    steps = _bin_steps(grid, jump_time)
    n_powers = max(r, 1)
    dL_power = _power_sums(jump_path, steps, jump_size, n, N, n_powers)
    dL_power[..., 0] += model.drift * dt
    if model.sigma > 0:
        dL_power[..., 0] += model.sigma * stream_w.standard_normal((n, N)) * np.sqrt(dt)

    L = np.zeros((n, N + 1))
    np.cumsum(dL_power[..., 0], axis=1, out=L[:, 1:])
    dL_power = dL_power[..., :r]

    if r:
        dH = teugels_increments(basis, dL_power, dt, power_jump_means(model, r))
    else:
        dH = np.zeros((n, N, 0))

    if a_spec.deterministic:
        A = np.broadcast_to(a_spec.evaluate(grid.times), (n, N + 1))
    else:
        A = a_spec.evaluate(grid.times, B)

    return PathBundle(
        model=model, basis=basis, grid=grid, a_spec=a_spec, n_paths=n, seed=seed,
        B=B, L=L, A=A, dL_power=dL_power, dH=dH,
        jump_path=jump_path, jump_time=jump_time, jump_size=jump_size,
    )


def _draw_jumps(model: LevyModel, T: float, n: int, rng: np.random.Generator):
    paths, sizes = [], []
    for x, lam in model.atoms:
        counts = rng.poisson(lam * T, n)
        paths.append(np.repeat(np.arange(n), counts))
        sizes.append(np.full(counts.sum(), x))
    if not paths:
        return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0)
    path = np.concatenate(paths)
    size = np.concatenate(sizes)
    time = rng.uniform(0.0, T, len(path))
    order = np.lexsort((time, path))
    return path[order], time[order], size[order]


def _bin_steps(grid: TimeGrid, times: np.ndarray) -> np.ndarray:
    steps = np.searchsorted(grid.times, times, side="right") - 1
    return np.clip(steps, 0, grid.n_steps - 1)


def _power_sums(path, step, size, n, N, n_powers) -> np.ndarray:
    out = np.zeros((n, N, n_powers))
    flat = path * N + step
    power = np.ones_like(size)
    for p in range(n_powers):
        power = power * size
        out[..., p] = np.bincount(flat, weights=power, minlength=n * N).reshape(n, N)
    return out


# Verification statistics.


def bracket_stats(bundle: PathBundle, i: int, j: int) -> tuple[float, float]:
    """Mean and standard error of the realized covariation ``sum_k dH^(i)_k dH^(j)_k`` at ``T``.

    Its expectation is ``delta_ij T``.
    """
    r = bundle.rank
    if not (1 <= i <= r and 1 <= j <= r):
        raise IndexError(f"bracket indices ({i}, {j}) outside 1..{r}")
    sample = np.einsum("nk,nk->n", bundle.dH[..., i - 1], bundle.dH[..., j - 1])
    return float(sample.mean()), _stderr(sample)


def increment_mean_stats(bundle: PathBundle) -> tuple[np.ndarray, np.ndarray]:
    """Per-step sample mean and standard error of ``dH``, both shaped ``(N, rank)``."""
    dH = bundle.dH
    return dH.mean(axis=0), dH.std(axis=0, ddof=1) / math.sqrt(bundle.n_paths)


Integrand = Union[float, Callable[[float, int, PathBundle], "float | np.ndarray"]]


@dataclass(frozen=True)
class ItoIntegrands:
    """Integrands of ``alpha_t = alpha_T + int beta ds + int eta dA + int gamma dB<- - sum int zeta^(i) dH^(i)``.

    Each entry is a constant or a callable ``(t, k, bundle)`` returning a scalar or
    a per-path array; ``zeta`` returns one value per Teugels index (scalar
    constants apply to ``H^(1)`` only). ``start`` is the deterministic part of
    ``alpha``.
    """

    beta: Integrand = 0.0
    eta: Integrand = 0.0
    gamma: Integrand = 0.0
    zeta: Integrand = 0.0
    start: float = 0.0


@dataclass(frozen=True)
class ItoIdentityResult:
    residual: float
    stderr: float
    lhs: float
    rhs: float


def ito_identity_residual(bundle: PathBundle, integrands: ItoIntegrands) -> ItoIdentityResult:
    """Monte Carlo residual of the expected-square identity at ``t = 0``.

    ``alpha`` is assembled so that ``alpha_{t_k}`` is measurable with respect to
    ``F^L_{t_k} v F^B_{t_k,T}``: the ``dH`` part is accumulated forward from
    ``start`` and the ``ds``, ``dA`` and backward ``dB`` parts backward from ``T``.
    Both sides of

        E|alpha_0|^2 = E|alpha_T|^2 + 2E int alpha beta ds + 2E int alpha eta dA
                       + E int |gamma|^2 ds - E int sum_i |zeta^(i)|^2 ds

    are estimated with left-point sums; the returned residual is ``|LHS - RHS|``.
    """
    n, N, r = bundle.n_paths, bundle.grid.n_steps, bundle.rank
    times, dt = bundle.grid.times, bundle.grid.dt
    dA, dB = bundle.dA, bundle.dB

    beta = np.stack([_per_path(integrands.beta, times[k], k, bundle, n) for k in range(N)], axis=1)
    eta = np.stack([_per_path(integrands.eta, times[k], k, bundle, n) for k in range(N)], axis=1)
    gamma = np.stack([_per_path(integrands.gamma, times[k + 1], k + 1, bundle, n) for k in range(N)], axis=1)
    zeta = np.stack([_zeta_per_path(integrands.zeta, times[k], k, bundle, n, r) for k in range(N)], axis=1)

    forward = np.full((n, N + 1), float(integrands.start))
    if r:
        np.cumsum(np.einsum("nkr,nkr->nk", zeta, bundle.dH), axis=1, out=forward[:, 1:])
        forward[:, 1:] += integrands.start
    backward_inc = beta * dt + eta * dA + gamma * dB
    backward = np.zeros((n, N + 1))
    backward[:, :-1] = np.cumsum(backward_inc[:, ::-1], axis=1)[:, ::-1]
    alpha = forward + backward

    left = alpha[:, :-1]
    rhs_paths = (
        alpha[:, -1] ** 2
        + 2 * np.sum(left * beta * dt, axis=1)
        + 2 * np.sum(left * eta * dA, axis=1)
        + np.sum(gamma**2 * dt, axis=1)
        - np.sum(np.sum(zeta**2, axis=2) * dt, axis=1)
    )
    lhs_paths = alpha[:, 0] ** 2
    diff = lhs_paths - rhs_paths
    return ItoIdentityResult(
        residual=abs(float(diff.mean())),
        stderr=_stderr(diff),
        lhs=float(lhs_paths.mean()),
        rhs=float(rhs_paths.mean()),
    )


def _per_path(value, t, k, bundle, n) -> np.ndarray:
    out = value(t, k, bundle) if callable(value) else value
    return np.broadcast_to(np.asarray(out, dtype=float), (n,))


def _zeta_per_path(value, t, k, bundle, n, r) -> np.ndarray:
    out = value(t, k, bundle) if callable(value) else value
    out = np.asarray(out, dtype=float)
    if out.ndim == 0:
        vec = np.zeros(r)
        if r:
            vec[0] = out
        out = vec
    return np.broadcast_to(out, (n, r))


def _stderr(sample: np.ndarray) -> float:
    if len(sample) < 2:
        return float("nan")
    return float(sample.std(ddof=1) / math.sqrt(len(sample)))
