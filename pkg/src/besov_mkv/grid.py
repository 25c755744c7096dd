"""Periodic grids, sampled fields and spectral helpers.

The box is [-L, L)^d with N points per axis, x_j = -L + j*h, h = 2L/N, so the
origin sits at index N//2.  Fourier multipliers act on ``fftn(values)``
directly; objects centred at the origin (densities, kernels) are rolled to
index 0 with ``ifftshift`` before they are used as convolution kernels.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    d: int
    L: float
    N: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("only d=1 and d=2 grids are supported")
        if self.N < 8 or (self.N & (self.N - 1)) != 0:
            raise ValueError("N must be a power of two and at least 8")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def cell(self) -> float:
        """Volume element h^d."""
        return self.h ** self.d

    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    def coords(self) -> list:
        """Coordinate arrays broadcastable against a scalar field."""
        x = self.axis()
        if self.d == 1:
            return [x]
        return list(np.meshgrid(x, x, indexing="ij"))

    def radius2(self) -> np.ndarray:
        return sum(c**2 for c in self.coords())

    def freqs(self) -> list:
        """Angular frequencies per axis, broadcast to the field shape."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        if self.d == 1:
            return [k]
        return list(np.meshgrid(k, k, indexing="ij"))

    def freq_abs(self) -> np.ndarray:
        return np.sqrt(sum(k**2 for k in self.freqs()))

    def deriv_freqs(self) -> list:
        """Frequencies for odd derivatives: the Nyquist mode is zeroed so that
        derivatives of real fields stay real."""
        out = []
        for k in self.freqs():
            k = k.copy()
            nyq = np.isclose(np.abs(k), np.pi / self.h)
            k[nyq] = 0.0
            out.append(k)
        return out

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.d, self.L, self.N * factor)

    def to_dict(self) -> dict:
        return {"d": self.d, "L": self.L, "N": self.N}


@dataclass
class GridFunction:
    """Scalar field (shape grid.shape) or vector field (shape (d,) + grid.shape)."""

    grid: Grid
    values: np.ndarray
    time: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape not in (self.grid.shape, (self.grid.d,) + self.grid.shape):
            raise ValueError(f"values of shape {self.values.shape} do not fit {self.grid}")

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.grid.d + 1

    @property
    def components(self) -> int:
        return self.grid.d if self.is_vector else 1

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy(), self.time, dict(self.meta))

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c, self.time, dict(self.meta))

    __rmul__ = __mul__

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _vals(other), self.time)

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _vals(other), self.time)


def _vals(f):
    return f.values if isinstance(f, GridFunction) else f


# spectral helpers ---------------------------------------------------------

def _axes(grid: Grid, arr: np.ndarray) -> tuple:
    return tuple(range(arr.ndim - grid.d, arr.ndim))


def fft(grid: Grid, arr: np.ndarray) -> np.ndarray:
    return np.fft.fftn(arr, axes=_axes(grid, arr))


def ifft_real(grid: Grid, arr: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(arr, axes=_axes(grid, arr)).real


def centered_hat(grid: Grid, arr: np.ndarray) -> np.ndarray:
    """Transform of an origin-centred field, scaled so that multiplying by it
    in Fourier space is the continuous convolution on the torus."""
    axes = _axes(grid, arr)
    return np.fft.fftn(np.fft.ifftshift(arr, axes=axes), axes=axes) * grid.cell


def centered_from_symbol(grid: Grid, symbol: np.ndarray) -> np.ndarray:
    """Origin-centred field whose continuous-convolution symbol is ``symbol``."""
    axes = _axes(grid, symbol)
    return np.fft.fftshift(np.fft.ifftn(symbol, axes=axes).real, axes=axes) / grid.cell


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    """Periodic convolution (f*g)(x) = int f(y) g(x-y) dy with g origin-centred.

    Either argument may be a vector field; a vector against a scalar acts
    componentwise.
    """
    if f.grid != g.grid:
        raise ValueError("grids differ")
    grid = f.grid
    out = ifft_real(grid, fft(grid, f.values) * centered_hat(grid, g.values))
    return GridFunction(grid, out)


def gradient(f: GridFunction) -> GridFunction:
    grid = f.grid
    fh = fft(grid, f.values)
    comps = [ifft_real(grid, 1j * k * fh) for k in grid.deriv_freqs()]
    return GridFunction(grid, np.stack(comps))


def dirac(grid: Grid, center=None) -> GridFunction:
    vals = np.zeros(grid.shape)
    idx = (grid.N // 2,) * grid.d if center is None else tuple(center)
    vals[idx] = 1.0 / grid.cell
    return GridFunction(grid, vals)


def gaussian(grid: Grid, sigma: float, center=0.0) -> GridFunction:
    """Periodized isotropic normal density with standard deviation sigma."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    x = grid.axis()
    per_axis = []
    for j in range(grid.d):
        acc = np.zeros(grid.N)
        for shift in range(-3, 4):
            acc += np.exp(-((x - c[j] + 2 * grid.L * shift) ** 2) / (2 * sigma**2))
        per_axis.append(acc / np.sqrt(2 * np.pi * sigma**2))
    if grid.d == 1:
        return GridFunction(grid, per_axis[0])
    return GridFunction(grid, np.multiply.outer(per_axis[0], per_axis[1]))


def uniform(grid: Grid) -> GridFunction:
    return GridFunction(grid, np.full(grid.shape, 1.0 / (2 * grid.L) ** grid.d))


# binary dumps -------------------------------------------------------------

def sidecar_path(path: str) -> str:
    root, _ = os.path.splitext(path)
    return root + ".json"


def save_grid_function(path: str, f: GridFunction, **extra) -> None:
    """Little-endian float64, row-major, with a JSON sidecar."""
    np.ascontiguousarray(f.values, dtype="<f8").tofile(path)
    meta = {**f.grid.to_dict(), "components": f.components, "time": f.time}
    meta.update(f.meta)
    meta.update(extra)
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_grid_function(path: str) -> GridFunction:
    with open(sidecar_path(path)) as fh:
        meta = json.load(fh)
    grid = Grid(int(meta["d"]), float(meta["L"]), int(meta["N"]))
    comps = int(meta.get("components", 1))
    shape = grid.shape if comps == 1 else (comps,) + grid.shape
    vals = np.fromfile(path, dtype="<f8")
    if vals.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {np.prod(shape)} values, found {vals.size}")
    extra = {k: v for k, v in meta.items() if k not in ("d", "L", "N", "components", "time")}
    return GridFunction(grid, vals.reshape(shape), meta.get("time"), extra)
