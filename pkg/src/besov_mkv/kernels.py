"""Interaction kernels of prescribed negative Besov regularity, their
divergence, and Gaussian mollification."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .besov import BesovSpec, thermic_norms
from .grid import Grid, GridFunction, centered_from_symbol, fft, ifft_real, sidecar_path

FAMILIES = ("random_fourier", "fractional_derivative_gaussian", "gradient_potential")
MIN_N = 64


class UnderResolvedWarning(UserWarning):
    pass


@dataclass
class KernelSpec:
    family: str
    beta: float
    p: float = math.inf
    q: float = math.inf
    seed: int = 0
    slabs: int = 1
    amplitude: float = 1.0
    # d=1: one order smoother so that div b = b' also has index beta;
    # d=2: project onto divergence-free fields
    div_control: bool = False
    width: float | None = None
    t_span: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not -2 < self.beta <= 0:
            raise ValueError("beta must lie in (-2, 0]")
        if not (1 <= self.slabs <= 8):
            raise ValueError("slabs must be between 1 and 8")
        if not self.amplitude > 0 or (self.width is not None and not self.width > 0):
            raise ValueError("family parameters must be positive")
        self.t_span = tuple(float(x) for x in self.t_span)

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        kw = dict(data)
        for k in ("p", "q"):
            if isinstance(kw.get(k), str):
                kw[k] = math.inf if kw[k].lower() == "inf" else float(kw[k])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("p", "q"):
            if math.isinf(d[k]):
                d[k] = "inf"
        d["t_span"] = list(self.t_span)
        return d


@dataclass
class SlabKernel:
    """Piecewise-constant-in-time vector field: fields[k] acts on [edges[k], edges[k+1])."""

    grid: Grid
    fields: np.ndarray  # (K, d) + grid.shape
    edges: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.fields.shape[0]

    def index(self, s) -> np.ndarray:
        return np.clip(np.searchsorted(self.edges, s, side="right") - 1, 0, self.K - 1)

    def at(self, s: float) -> GridFunction:
        return GridFunction(self.grid, self.fields[int(self.index(s))])

    def map(self, fn) -> "SlabKernel":
        return SlabKernel(self.grid, np.stack([fn(GridFunction(self.grid, f)).values for f in self.fields]),
                          self.edges.copy(), dict(self.meta))

    def scaled(self, c: float) -> "SlabKernel":
        return SlabKernel(self.grid, self.fields * c, self.edges.copy(), dict(self.meta))


def as_slabs(b, t_span=(0.0, 1.0)) -> SlabKernel:
    if isinstance(b, SlabKernel):
        return b
    if not b.is_vector:
        raise ValueError("kernel must be a vector field")
    return SlabKernel(b.grid, b.values[None], np.array([t_span[0], t_span[1]], dtype=float), dict(b.meta))


# synthesis -----------------------------------------------------------------

def _mode_indices(grid: Grid) -> list:
    k = np.fft.fftfreq(grid.N, d=1.0 / grid.N).round().astype(np.int64)
    if grid.d == 1:
        return [k]
    return list(np.meshgrid(k, k, indexing="ij"))


def _mode_counters(grid: Grid, comp: int, slab: int) -> np.ndarray:
    """Hash counters depending only on the integer wave vector, the component
    and the slab, so refined grids reproduce the modes of coarser ones."""
    ks = _mode_indices(grid)
    off = 1 << 20
    c = (ks[0] + off).astype(np.uint64) << np.uint64(40)
    if grid.d == 2:
        c = c | ((ks[1] + off).astype(np.uint64) << np.uint64(16))
    return c | np.uint64(comp << 8) | np.uint64(slab)


def _complex_gaussian(key, grid, comp, slab):
    c = _mode_counters(grid, comp, slab) * np.uint64(2)
    re = rng.keyed_normals(key, c)
    im = rng.keyed_normals(key, c + np.uint64(1))
    return (re + 1j * im) / math.sqrt(2.0)


def _resolved_mask(grid: Grid) -> np.ndarray:
    """Exclude the zero mode and Nyquist rows so truncations nest across N."""
    ks = _mode_indices(grid)
    mask = np.ones(grid.shape, dtype=bool)
    for k in ks:
        mask &= np.abs(k) < grid.N // 2
    mask &= sum(np.abs(k) for k in ks) > 0
    return mask


def _from_coefficients(grid: Grid, coef: np.ndarray) -> np.ndarray:
    """Real field sum_k Re(c_k exp(i xi_k x)) at x_j = -L + j h."""
    phase = np.ones(grid.shape)
    for k in _mode_indices(grid):
        phase = phase * np.where(k % 2 == 0, 1.0, -1.0)  # exp(-i xi_k L) = (-1)^k
    axes = tuple(range(coef.ndim - grid.d, coef.ndim))
    return np.fft.ifftn(coef * phase, axes=axes).real * grid.N**grid.d


def _random_fourier(spec: KernelSpec, grid: Grid, slab: int) -> np.ndarray:
    key = rng.master_key(spec.seed)
    xi = grid.freq_abs()
    mask = _resolved_mask(grid)
    expo = -spec.beta - grid.d / 2.0
    if spec.div_control and grid.d == 1:
        expo -= 1.0
    sigma = np.where(mask, (1.0 + xi) ** expo, 0.0) * spec.amplitude
    if spec.div_control and grid.d == 2:
        # b = (-d2 psi, d1 psi): |b_k| ~ sigma_k, div b = 0
        xi_safe = np.where(xi > 0, xi, 1.0)
        psi = sigma / xi_safe * _complex_gaussian(key, grid, 0, slab)
        k1, k2 = grid.freqs()
        coef = np.stack([-1j * k2 * psi, 1j * k1 * psi])
    else:
        coef = np.stack([sigma * _complex_gaussian(key, grid, c, slab) for c in range(grid.d)])
    return _from_coefficients(grid, coef)


def _fractional_gaussian(spec: KernelSpec, grid: Grid, slab: int) -> np.ndarray:
    """b_hat(xi) = A (i xi/|xi|) |xi|^(-beta-d) exp(-w^2 |xi|^2 / 2): homogeneous
    of degree beta up to the Gaussian cut at scale w (default 2h)."""
    w = spec.width if spec.width is not None else 2.0 * grid.h
    xi = grid.freq_abs()
    safe = np.where(xi > 0, xi, 1.0)
    radial = np.where(xi > 0, safe ** (-spec.beta - grid.d - 1.0), 0.0) * np.exp(-0.5 * (w * xi) ** 2)
    comps = [centered_from_symbol(grid, spec.amplitude * 1j * k * radial) for k in grid.deriv_freqs()]
    return np.stack(comps)


def _potential(spec: KernelSpec, grid: Grid, slab: int) -> np.ndarray:
    """Sum of three Gaussian bumps with seeded centres and signs."""
    w = spec.width if spec.width is not None else 0.5
    gen = np.random.default_rng([spec.seed, slab])
    centres = gen.uniform(-0.5 * grid.L, 0.5 * grid.L, size=(3, grid.d))
    signs = gen.choice([-1.0, 1.0], size=3)
    coords = grid.coords()
    V = np.zeros(grid.shape)
    for c, sgn in zip(centres, signs):
        r2 = np.zeros(grid.shape)
        for j in range(grid.d):
            dx = (coords[j] - c[j] + grid.L) % (2 * grid.L) - grid.L
            r2 = r2 + dx**2
        V += sgn * np.exp(-r2 / (2 * w**2))
    return V * spec.amplitude


def synthesize_potential(spec: KernelSpec, grid: Grid, slab: int = 0) -> GridFunction:
    if spec.family != "gradient_potential":
        raise ValueError("only gradient_potential kernels have a potential")
    return GridFunction(grid, _potential(spec, grid, slab))


def synthesize_kernel(spec: KernelSpec, grid: Grid):
    """Vector field of the requested family; a SlabKernel when spec.slabs > 1."""
    if grid.N < MIN_N:
        raise ValueError(f"grid too coarse for the regularity probe (N={grid.N} < {MIN_N})")
    fields = []
    for k in range(spec.slabs):
        if spec.family == "random_fourier":
            fields.append(_random_fourier(spec, grid, k))
        elif spec.family == "fractional_derivative_gaussian":
            fields.append(_fractional_gaussian(spec, grid, k) * (1.0 + 0.25 * k))
        else:
            fields.append(gradient_field(GridFunction(grid, _potential(spec, grid, k))))
    meta = {"role": "kernel", "beta": spec.beta, "family": spec.family, "seed": spec.seed}
    if spec.slabs == 1:
        return GridFunction(grid, fields[0], meta=meta)
    edges = np.linspace(spec.t_span[0], spec.t_span[1], spec.slabs + 1)
    return SlabKernel(grid, np.stack(fields), edges, meta)


def gradient_field(V: GridFunction) -> np.ndarray:
    grid = V.grid
    vh = fft(grid, V.values)
    return np.stack([ifft_real(grid, 1j * k * vh) for k in grid.deriv_freqs()])


def divergence(b: GridFunction) -> GridFunction:
    if not b.is_vector:
        raise ValueError("divergence needs a vector field")
    grid = b.grid
    bh = fft(grid, b.values)
    div_h = sum(1j * k * bh[i] for i, k in enumerate(grid.deriv_freqs()))
    return GridFunction(grid, ifft_real(grid, div_h))


def mollifier_symbol(grid: Grid, eps: float) -> np.ndarray:
    return np.exp(-0.5 * (eps * grid.freq_abs()) ** 2)


def mollify(b, epsilon: float):
    """b * eta_eps with eta_eps the centred Gaussian of standard deviation eps."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    grid = b.grid
    if epsilon < grid.h:
        warnings.warn(f"mollifier under-resolved: eps={epsilon:g} < h={grid.h:g}", UnderResolvedWarning,
                      stacklevel=2)
    sym = mollifier_symbol(grid, epsilon)
    if isinstance(b, SlabKernel):
        vals = ifft_real(grid, fft(grid, b.fields) * sym)
        return SlabKernel(grid, vals, b.edges.copy(), dict(b.meta, epsilon=epsilon))
    return GridFunction(grid, ifft_real(grid, fft(grid, b.values) * sym), b.time, dict(b.meta, epsilon=epsilon))


# norms ---------------------------------------------------------------------

def slab_norms(b, spec: BesovSpec, alpha_ref: float = 2.0) -> np.ndarray:
    sk = as_slabs(b)
    low, th, _, _ = thermic_norms(sk.grid, sk.fields, spec, alpha_ref, vector=True)
    return np.atleast_1d(low + th)


def time_norm(b, spec: BesovSpec, r: float, alpha_ref: float = 2.0) -> float:
    """||b||_{L^r(B)} over the slab partition (sup when r = inf)."""
    sk = as_slabs(b)
    vals = slab_norms(sk, spec, alpha_ref)
    if math.isinf(r):
        return float(vals.max())
    widths = np.diff(sk.edges)
    return float((widths * vals**r).sum() ** (1.0 / r))


def kernel_norm_pair(b, spec: BesovSpec, r: float, alpha_ref: float = 2.0) -> tuple:
    """(||b||, ||div b||) in L^r(B^beta_{p,q})."""
    sk = as_slabs(b)
    div = np.stack([divergence(GridFunction(sk.grid, f)).values for f in sk.fields])
    low, th, _, _ = thermic_norms(sk.grid, div, spec, alpha_ref, vector=False)
    dv = np.atleast_1d(low + th)
    if math.isinf(r):
        dn = float(dv.max())
    else:
        dn = float((np.diff(sk.edges) * dv**r).sum() ** (1.0 / r))
    return time_norm(sk, spec, r, alpha_ref), dn


@dataclass
class MollifierReport:
    epsilons: list
    sup_norm_ratio: float
    convergence_table: dict

    def to_dict(self) -> dict:
        return {"epsilons": list(self.epsilons), "sup_norm_ratio": self.sup_norm_ratio,
                "convergence_table": {str(k): list(v) for k, v in self.convergence_table.items()}}


def mollifier_report(b, epsilons, beta_bar_list, beta: float, p: float = math.inf,
                     q: float = math.inf, alpha_ref: float = 2.0) -> MollifierReport:
    sk = as_slabs(b)
    spec = BesovSpec(beta, p, q)
    base = slab_norms(sk, spec, alpha_ref)
    ratio = 1.0
    table = {bb: [] for bb in beta_bar_list}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderResolvedWarning)
        for eps in epsilons:
            be = mollify(sk, eps)
            ratio = max(ratio, float((slab_norms(be, spec, alpha_ref) / base).max()))
            for bb in beta_bar_list:
                diff = SlabKernel(sk.grid, sk.fields - be.fields, sk.edges)
                table[bb].append(float(slab_norms(diff, BesovSpec(bb, p, q), alpha_ref).max()))
    return MollifierReport(list(epsilons), ratio, table)


# dumps -----------------------------------------------------------------------

def save_kernel(path: str, b, spec: KernelSpec | None = None) -> None:
    sk = as_slabs(b)
    extra = {"role": "kernel", "beta": sk.meta.get("beta", spec.beta if spec else None),
             "slabs": sk.K, "edges": [float(e) for e in sk.edges]}
    if spec is not None:
        extra["spec"] = spec.to_dict()
    np.ascontiguousarray(sk.fields, dtype="<f8").tofile(path)
    meta = {**sk.grid.to_dict(), "components": sk.grid.d, "time": None, **extra}
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_kernel(path: str):
    with open(sidecar_path(path)) as fh:
        meta = json.load(fh)
    grid = Grid(int(meta["d"]), float(meta["L"]), int(meta["N"]))
    K = int(meta.get("slabs", 1))
    vals = np.fromfile(path, dtype="<f8").reshape((K, grid.d) + grid.shape)
    info = {"role": "kernel", "beta": meta.get("beta")}
    if K == 1:
        return GridFunction(grid, vals[0], meta=info)
    return SlabKernel(grid, vals, np.asarray(meta["edges"], dtype=float), info)


__all__ = ["KernelSpec", "SlabKernel", "MollifierReport", "synthesize_kernel", "divergence", "mollify",
           "mollifier_report", "time_norm", "kernel_norm_pair", "save_kernel", "load_kernel",
           "as_slabs"]
