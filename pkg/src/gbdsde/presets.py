"""Named coefficient sets used by the CLI and the test-suite."""

from __future__ import annotations

import math

import numpy as np

from .coefficients import CoefficientSet, ModulusSpec, log_root_modulus
from .errors import ConfigurationError


def _z1(z):
    z = np.asarray(z)
    return z[:, 0] if z.ndim == 2 and z.shape[1] else np.zeros(len(z))


def _zero_driver(t, y, z):
    return np.zeros(len(y))


def _zero_h(t, y):
    return np.zeros(len(y))


def constant_terminal(c):
    def xi(bundle):
        return np.full(bundle.n_paths, float(c))

    return xi


def teugels_terminal(bundle):
    """``xi = H^(1)_T``."""
    if bundle.rank == 0:
        raise ConfigurationError("martingale terminal needs a basis of rank >= 1")
    return bundle.H[:, -1, 0].copy()


def sine_terminal(c, amp):
    def xi(bundle):
        return c + amp * np.sin(bundle.L[:, -1])

    return xi


def trivial(c=1.0):
    return CoefficientSet(
        f=_zero_driver, g=_zero_driver, h=_zero_h, xi=constant_terminal(c),
        rho=ModulusSpec("linear", 1.0), C=1.0, alpha=0.5, beta=-1.0, K=1.0,
        name="trivial", params={"c": c},
    )


def linear_f(a=1.0, b=0.0, bz=0.0, c=1.0):
    """``f = a + b y + bz z^(1)``; constant ``f`` when ``b = bz = 0``."""

    def f(t, y, z):
        return a + b * y + bz * _z1(z)

    return CoefficientSet(
        f=f, g=_zero_driver, h=_zero_h, xi=constant_terminal(c),
        rho=ModulusSpec("linear", max(2 * b * b, 1.0)), C=max(2 * bz * bz, 1.0),
        alpha=0.5, beta=-1.0, K=max(abs(b), abs(bz), 1.0),
        f_bound=lambda t: max(1.0, abs(a)),
        name="linear-f", params={"a": a, "b": b, "bz": bz, "c": c},
    )


def linear_h(beta=-1.0, c=1.0):
    if not beta < 0:
        raise ConfigurationError("linear-h needs beta < 0")

    def h(t, y):
        return beta * y

    return CoefficientSet(
        f=_zero_driver, g=_zero_driver, h=h, xi=constant_terminal(c),
        rho=ModulusSpec("linear", 1.0), C=1.0, alpha=0.5, beta=beta, K=max(1.0, abs(beta)),
        name="linear-h", params={"beta": beta, "c": c},
    )


def constant_g(gamma=1.0, c=1.0):
    def g(t, y, z):
        return np.full(len(y), float(gamma))

    return CoefficientSet(
        f=_zero_driver, g=g, h=_zero_h, xi=constant_terminal(c),
        rho=ModulusSpec("linear", 1.0), C=1.0, alpha=0.5, beta=-1.0, K=1.0,
        g_bound=lambda t: max(1.0, abs(gamma)),
        name="constant-g", params={"gamma": gamma, "c": c},
    )


def martingale_terminal():
    return CoefficientSet(
        f=_zero_driver, g=_zero_driver, h=_zero_h, xi=teugels_terminal,
        rho=ModulusSpec("linear", 1.0), C=1.0, alpha=0.5, beta=-1.0, K=1.0,
        name="martingale-terminal", params={},
    )


def non_lipschitz(f0=1.0, a=0.5, bz=0.2, b=0.5, beta=-1.0, c=1.0, amp=0.5, knee=0.1):
    """Log-modulus drivers.

    ``f = f0 + a w(|y|) + bz z^(1)`` and ``g = b w(|y|)`` with
    ``w(r) = sqrt(rho_log(r^2))``, so ``|df|^2 <= 2a^2 rho_log(|dy|^2) + 2bz^2 ||dz||^2``
    and ``|dg|^2 <= b^2 rho_log(|dy|^2)``. ``h = beta y`` and ``xi = c + amp sin(L_T)``.
    Growth: ``w(r) <= sqrt(knee (1 + s)) + sqrt(s) r`` with ``s = ln(1/knee)``.
    """
    slope = -math.log(knee)
    w0, w1 = math.sqrt(knee * (1 + slope)), math.sqrt(slope)

    def f(t, y, z):
        return f0 + a * log_root_modulus(np.abs(y), knee) + bz * _z1(z)

    def g(t, y, z):
        return b * log_root_modulus(np.abs(y), knee)

    def h(t, y):
        return beta * y

    return CoefficientSet(
        f=f, g=g, h=h, xi=sine_terminal(c, amp),
        rho=ModulusSpec("log", max(2 * a * a, b * b), knee=knee), C=max(2 * bz * bz, 1e-12), alpha=0.5,
        beta=beta, K=max(1.0, abs(beta), abs(bz), abs(a) * w1, abs(b) * w1),
        f_bound=lambda t: max(1.0, abs(f0) + abs(a) * w0), g_bound=lambda t: max(1.0, abs(b) * w0),
        name="non-lipschitz",
        params={"f0": f0, "a": a, "bz": bz, "b": b, "beta": beta, "c": c, "amp": amp, "knee": knee},
    )


def negative_example(f0=1.0, a=0.5, beta=-1.0, c=1.0):
    """Hölder-1/2 driver ``f = f0 + a sqrt(|y|)`` with modulus ``a^2 sqrt(u)``: valid (H4)(i), not Osgood."""

    def f(t, y, z):
        return f0 + a * np.sqrt(np.abs(y))

    def h(t, y):
        return beta * y

    return CoefficientSet(
        f=f, g=_zero_driver, h=h, xi=constant_terminal(c),
        rho=ModulusSpec("sqrt", a * a), C=1.0, alpha=0.5, beta=beta, K=max(1.0, abs(beta), abs(a)),
        f_bound=lambda t: max(1.0, abs(f0) + abs(a)),
        name="negative-example", params={"f0": f0, "a": a, "beta": beta, "c": c},
    )


PRESETS = {
    "trivial": trivial,
    "linear-f": linear_f,
    "linear-h": linear_h,
    "constant-g": constant_g,
    "martingale-terminal": martingale_terminal,
    "non-lipschitz": non_lipschitz,
    "negative-example": negative_example,
}


def preset(name: str, **params) -> CoefficientSet:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown coefficient preset {name!r}; known: {', '.join(PRESETS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for preset {name!r}: {exc}") from None
