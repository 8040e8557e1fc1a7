"""Closed-form limiting laws used as verification targets.

``rho_infinity`` is the limiting frequency density of the disordered-boson
ensemble, supported on ``(0, 3*sqrt(3)]``; ``semicircle`` is the equilibrium
law of the theta=1 ensemble with ``log w = -x^2/2``.
"""
import math

import numpy as np

from .errors import ConfigError

B_BOSON = 3.0 * math.sqrt(3.0)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def rho_infinity(t):
    """Limiting boson frequency density; zero outside ``(0, b]``."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t <= B_BOSON)
    tt = np.where(inside, t, 1.0)
    s = np.sqrt(np.clip(1.0 - (tt / B_BOSON) ** 2, 0.0, None))
    val = (tt / B_BOSON) ** (-1.0 / 3.0) * (np.cbrt(1.0 + s) - np.cbrt(1.0 - s)) / (2.0 * np.pi)
    return np.where(inside, val, 0.0)


def _rho_infinity_substituted(u):
    # t = b*sin(pi/2 * u^3) removes the t^(-1/3) edge and the square-root edge
    phi = 0.5 * np.pi * u ** 3
    s = np.cos(phi)
    one_minus_s = 2.0 * np.sin(0.5 * phi) ** 2
    sin_phi = np.sin(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(u > 0, sin_phi ** (-1.0 / 3.0) * (np.cbrt(1.0 + s) - np.cbrt(one_minus_s)), 0.0)
    dt_du = B_BOSON * s * 1.5 * np.pi * u ** 2
    return rho * dt_du / (2.0 * np.pi)


def rho_infinity_cdf(t):
    """CDF of ``rho_infinity`` by 64-point Gauss-Legendre in a smoothing variable."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    tc = np.clip(t, 0.0, B_BOSON)
    umax = np.cbrt(2.0 / np.pi * np.arcsin(tc / B_BOSON))
    half = 0.5 * umax[:, None]
    u = half * (_GL_X[None, :] + 1.0)
    out = np.sum(_rho_infinity_substituted(u) * _GL_W[None, :], axis=1) * half[:, 0]
    return out


def rho_infinity_moment(k: int = 1) -> float:
    u = 0.5 * (_GL_X + 1.0)
    t = B_BOSON * np.sin(0.5 * np.pi * u ** 3)
    return float(0.5 * np.sum(t ** k * _rho_infinity_substituted(u) * _GL_W))


def semicircle_density(x, radius: float = 2.0):
    x = np.asarray(x, dtype=float)
    r2 = radius * radius
    return np.where(np.abs(x) < radius, 2.0 / (np.pi * r2) * np.sqrt(np.clip(r2 - x * x, 0.0, None)), 0.0)


def semicircle_cdf(x, radius: float = 2.0):
    x = np.clip(np.asarray(x, dtype=float) / radius, -1.0, 1.0)
    return 0.5 + (x * np.sqrt(1.0 - x * x) + np.arcsin(x)) / np.pi


REFERENCE_LAWS = {
    "rho-infinity": (rho_infinity, rho_infinity_cdf, (0.0, B_BOSON)),
    "semicircle": (semicircle_density, semicircle_cdf, (-2.0, 2.0)),
}


def reference_law(name: str):
    """Return ``(density, cdf, (lo, hi))`` for a named reference law."""
    try:
        return REFERENCE_LAWS[name]
    except KeyError as exc:
        raise ConfigError(f"unknown reference law {name!r}; choose from {sorted(REFERENCE_LAWS)}") from exc


def reference_atoms(name: str, cells: int = 20000):
    """Discretize a reference law into ``cells`` midpoint atoms carrying exact cell masses."""
    _, cdf, (lo, hi) = reference_law(name)
    edges = np.linspace(lo, hi, cells + 1)
    mass = np.diff(cdf(edges))
    mass = np.clip(mass, 0.0, None)
    mass /= mass.sum()
    return 0.5 * (edges[1:] + edges[:-1]), mass
