"""Isotropic alpha-stable transition densities on the periodic grid, and
stable increments.

The density is normalised by its characteristic function exp(-t|xi|^alpha),
so alpha = 2 is the Gaussian with variance 2t per coordinate.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma as gamma_fn

from .grid import Grid, GridFunction, centered_from_symbol

FOURIER_TAIL_TOL = 1e-12


class RefinementError(ValueError):
    """Requested time is below what the grid can resolve."""

    def __init__(self, msg, suggested_N=None):
        super().__init__(msg)
        self.suggested_N = suggested_N


def t_min(alpha: float, grid: Grid) -> float:
    """Smallest t with exp(-t (pi/h)^alpha) below the Fourier tail tolerance."""
    kmax = math.pi / grid.h
    return -math.log(FOURIER_TAIL_TOL) / kmax**alpha


def _check_time(alpha, t, grid):
    if not t > 0:
        raise ValueError("t must be positive")
    if not 1 < alpha <= 2:
        raise ValueError("alpha must lie in (1, 2]")
    tm = t_min(alpha, grid)
    if t < tm:
        # N such that the Nyquist mode is damped at time t
        need = (-math.log(FOURIER_TAIL_TOL) / t) ** (1.0 / alpha) * grid.L / math.pi * 2
        n = 1 << max(3, math.ceil(math.log2(need)))
        raise RefinementError(f"t={t:g} below resolvable t_min={tm:g}; use N >= {n}", n)


def symbol(alpha: float, t: float, grid: Grid) -> np.ndarray:
    return np.exp(-t * grid.freq_abs() ** alpha)


def stable_density(alpha: float, t: float, grid: Grid) -> GridFunction:
    _check_time(alpha, t, grid)
    return GridFunction(grid, centered_from_symbol(grid, symbol(alpha, t, grid)), time=t)


def grad_stable_density(alpha: float, t: float, grid: Grid) -> GridFunction:
    _check_time(alpha, t, grid)
    sym = symbol(alpha, t, grid)
    comps = [centered_from_symbol(grid, 1j * k * sym) for k in grid.deriv_freqs()]
    return GridFunction(grid, np.stack(comps), time=t)


def tail_constant(alpha: float) -> float:
    """C with P(|X_1| > x) ~ C x^-alpha for the 1-d symmetric law."""
    if alpha >= 2:
        return 0.0
    return 2.0 * gamma_fn(alpha) * math.sin(math.pi * alpha / 2) / math.pi


def tail_bound(alpha: float, t: float, L: float, d: int = 1) -> float:
    """Bound on the mass of p_t outside [-L, L]^d (union over coordinates)."""
    if alpha >= 2:
        return d * math.erfc(L / (2.0 * math.sqrt(t)))
    return d * tail_constant(alpha) * t * L ** (-alpha)


def verify_hk_exponent(alpha: float, spec, deriv_order: int, times, grid: Grid,
                       **norm_kw) -> float:
    """Least-squares slope of log ||d^a p_s||_B against log s."""
    from .besov import thermic_besov_norm

    times = np.asarray(sorted(times), dtype=float)
    if times.size < 3:
        raise ValueError("need at least 3 times for the regression")
    norms = []
    for s in times:
        f = stable_density(alpha, s, grid) if deriv_order == 0 else grad_stable_density(alpha, s, grid)
        norms.append(thermic_besov_norm(f, spec, alpha, **norm_kw).total)
    slope, _ = np.polyfit(np.log(times), np.log(norms), 1)
    return float(slope)


def hk_exponent(alpha, gamma, ell, d, a, long_time=False) -> float:
    """Predicted time exponent of the heat-kernel Besov norm."""
    spatial = (d / alpha) * (1.0 - (0.0 if math.isinf(ell) else 1.0 / ell))
    if long_time:
        return -spatial - abs(a) / alpha
    return -(max(gamma / alpha + spatial, 0.0) + abs(a) / alpha)


# sampling ----------------------------------------------------------------

def lanes(d: int) -> int:
    """Uniforms consumed per stable draw."""
    return 2 if d == 1 else 4


def _normal_pair(u1, u2):
    rad = np.sqrt(-2.0 * np.log(u1))
    return rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)


def _cms(alpha, u1, u2):
    """Chambers-Mallows-Stuck symmetric draw with char. function exp(-|xi|^alpha)."""
    v = np.pi * (u1 - 0.5)
    w = -np.log(u2)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def _positive_stable(a, u1, u2):
    """Kanter's representation: Laplace transform exp(-s^a), 0 < a < 1."""
    u = np.pi * u1
    e = -np.log(u2)
    A = (np.sin(a * u) ** a * np.sin((1.0 - a) * u) ** (1.0 - a) / np.sin(u)) ** (1.0 / (1.0 - a))
    return (A / e) ** ((1.0 - a) / a)


def stable_from_uniforms(alpha: float, u: np.ndarray, d: int) -> np.ndarray:
    """Map uniforms of shape (n, lanes(d)) in (0,1) to n standard isotropic draws (n, d)."""
    if d == 1:
        if alpha == 2:
            z, _ = _normal_pair(u[:, 0], u[:, 1])
            return (math.sqrt(2.0) * z)[:, None]
        return _cms(alpha, u[:, 0], u[:, 1])[:, None]
    z1, z2 = _normal_pair(u[:, 0], u[:, 1])
    z = math.sqrt(2.0) * np.stack([z1, z2], axis=1)
    if alpha == 2:
        return z
    # subordinated Brownian motion: E exp(-A|xi|^2) = exp(-|xi|^alpha)
    A = _positive_stable(alpha / 2.0, u[:, 2], u[:, 3])
    return np.sqrt(A)[:, None] * z


def open_uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniforms in the open interval (0, 1), 53-bit."""
    return (rng.integers(0, 2**53, size=shape, dtype=np.int64) + 0.5) * 2.0**-53


def sample_stable_increment(alpha: float, dt: float, rng: np.random.Generator,
                            d: int = 1, size: int | None = None) -> np.ndarray:
    """dt^(1/alpha) S with S standard isotropic alpha-stable; shape (d,) or (size, d)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = 1 if size is None else size
    s = stable_from_uniforms(alpha, open_uniforms(rng, (n, lanes(d))), d)
    s *= dt ** (1.0 / alpha)
    return s[0] if size is None else s
