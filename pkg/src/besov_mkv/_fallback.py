"""Pure numpy versions of the particle hot loops.

Bit-compatible with the compiled core: deposits accumulate one corner at a
time in particle order, exactly like the compiled loops.
"""
import numpy as np

from .rng import counter_uniforms  # noqa: F401

NAME = "numpy"


def _cell(x, L, N):
    s = (x + L) * (N / (2.0 * L))
    j = np.floor(s)
    fr = s - j
    j = j.astype(np.int64) % N
    return j, fr


def cic_deposit_1d(x, L, N):
    j, fr = _cell(np.asarray(x, dtype=np.float64), L, N)
    out = np.bincount(j, weights=1.0 - fr, minlength=N)
    out += np.bincount((j + 1) % N, weights=fr, minlength=N)
    return out


def cic_deposit_2d(x, y, L, N):
    i, fx = _cell(np.asarray(x, dtype=np.float64), L, N)
    j, fy = _cell(np.asarray(y, dtype=np.float64), L, N)
    i1, j1 = (i + 1) % N, (j + 1) % N
    out = np.bincount(i * N + j, weights=(1.0 - fx) * (1.0 - fy), minlength=N * N)
    out += np.bincount(i * N + j1, weights=(1.0 - fx) * fy, minlength=N * N)
    out += np.bincount(i1 * N + j, weights=fx * (1.0 - fy), minlength=N * N)
    out += np.bincount(i1 * N + j1, weights=fx * fy, minlength=N * N)
    return out.reshape(N, N)


def interp_1d(field, x, L):
    N = field.shape[0]
    j, fr = _cell(np.asarray(x, dtype=np.float64), L, N)
    return field[j] * (1.0 - fr) + field[(j + 1) % N] * fr


def interp_2d(field, x, y, L):
    N = field.shape[0]
    i, fx = _cell(np.asarray(x, dtype=np.float64), L, N)
    j, fy = _cell(np.asarray(y, dtype=np.float64), L, N)
    i1, j1 = (i + 1) % N, (j + 1) % N
    lo = field[i, j] * (1.0 - fy) + field[i, j1] * fy
    hi = field[i1, j] * (1.0 - fy) + field[i1, j1] * fy
    return lo * (1.0 - fx) + hi * fx
