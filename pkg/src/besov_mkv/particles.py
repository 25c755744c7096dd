"""Mollified McKean-Vlasov particle system with alpha-stable noise.

Euler scheme on the torus [-L, L)^d:

    X_{k+1} = X_k + B(t_k, X_k) dt + dt^(1/alpha) S_k,   B = b_eps * KDE(X_k)

The mean-field drift is computed on the grid (cloud-in-cell binning, Gaussian
smoothing, spectral convolution with b_eps) and interpolated back linearly.
Noise comes from counter-based streams keyed by (seed, particle index, step),
so trajectories do not depend on chunking or thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from ._backend import core
from .fokker_planck import DensityPath
from .grid import Grid, GridFunction, centered_hat, fft, ifft_real
from .kernels import as_slabs
from .stable_kernel import lanes, stable_from_uniforms

CHUNK = 1 << 15  # particles per work unit; fixed so reductions never depend on threads
_INIT_STEP = 0  # counter step reserved for initial sampling (d=1)
_REJ_BASE = 1 << 40  # counter steps used by rejection sampling (d=2)


class InstabilityError(RuntimeError):
    pass


@dataclass
class ParticleEnsemble:
    N: int
    positions: np.ndarray  # (N, d), wrapped into the box
    time: float
    key: np.uint64
    alpha: float
    wraps: int = 0

    @property
    def streams(self) -> np.ndarray:
        return np.arange(self.N, dtype=np.uint64)


@dataclass
class Trajectory:
    grid: Grid
    alpha: float
    dt: float
    seed: int
    times: np.ndarray  # recorded times
    paths: np.ndarray  # (n_rec, N, d) unwrapped positions
    drift_integral: np.ndarray  # (n_rec, N, d) running sum of B(t_k, X_k) dt
    stats: dict = field(default_factory=dict)  # per-step mean / var
    final: ParticleEnsemble | None = None

    @property
    def N(self) -> int:
        return self.paths.shape[1]

    def wrapped(self, i: int) -> np.ndarray:
        L = self.grid.L
        return (self.paths[i] + L) % (2 * L) - L

    def index_of(self, s: float) -> int:
        i = int(np.argmin(np.abs(self.times - s)))
        if not math.isclose(self.times[i], s, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"time {s:g} was not recorded")
        return i


def wrap(x: np.ndarray, L: float) -> np.ndarray:
    return (x + L) % (2 * L) - L


# deposits and interpolation -------------------------------------------------

def _deposit(grid: Grid, x: np.ndarray) -> np.ndarray:
    """CIC counts over all particles, accumulated chunk by chunk in order."""
    out = np.zeros(grid.shape)
    for lo in range(0, x.shape[0], CHUNK):
        c = x[lo:lo + CHUNK]
        if grid.d == 1:
            out += core.cic_deposit_1d(c[:, 0], grid.L, grid.N)
        else:
            out += core.cic_deposit_2d(c[:, 0], c[:, 1], grid.L, grid.N)
    return out


def _interp(grid: Grid, field_: np.ndarray, x: np.ndarray) -> np.ndarray:
    if grid.d == 1:
        return core.interp_1d(field_, x[:, 0], grid.L)
    return core.interp_2d(field_, x[:, 0], x[:, 1], grid.L)


def cic_symbol(grid: Grid) -> np.ndarray:
    """Transfer function of cloud-in-cell binning, sinc^2(xi h / 2) per axis."""
    out = np.ones(grid.shape)
    for k in grid.freqs():
        out = out * np.sinc(k * grid.h / (2 * np.pi)) ** 2
    return out


def kde_symbol(grid: Grid, bandwidth: float) -> np.ndarray:
    return np.exp(-0.5 * (bandwidth * grid.freq_abs()) ** 2)


def _kde_hat(grid: Grid, x: np.ndarray, bandwidth: float) -> np.ndarray:
    counts = _deposit(grid, x)
    return fft(grid, counts) / (x.shape[0] * grid.cell) * kde_symbol(grid, bandwidth)


def empirical_density(positions, grid: Grid, bandwidth: float | None = None) -> GridFunction:
    """Gaussian KDE on the torus: CIC histogram, then spectral smoothing."""
    x = positions.positions if isinstance(positions, ParticleEnsemble) else np.asarray(positions, float)
    x = x.reshape(x.shape[0], grid.d)
    bw = 2.0 * grid.h if bandwidth is None else bandwidth
    return GridFunction(grid, ifft_real(grid, _kde_hat(grid, wrap(x, grid.L), bw)))


# initial sampling --------------------------------------------------------------

def sample_initial(mu: GridFunction, N: int, key) -> np.ndarray:
    """Positions (N, d) drawn from the grid density mu.

    d=1: inverse CDF of the piecewise-linear density (cumulative trapezoid).
    d=2: rejection from uniform proposals against the bilinear density.
    """
    grid = mu.grid
    ids = np.arange(N, dtype=np.uint64)
    dens = np.maximum(mu.values, 0.0)
    if grid.d == 1:
        x = np.append(grid.axis(), grid.L)
        f = np.append(dens, dens[0])
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * grid.h)])
        norm = cdf[-1]
        cdf /= norm
        u = rng.counter_uniforms(key, ids, _INIT_STEP, 2)[:, 0]
        # invert the piecewise-quadratic CDF on each cell: a t^2 + f0 t = u - cdf_j
        j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, grid.N - 1)
        f0, f1 = f[j] / norm, f[j + 1] / norm
        target = u - cdf[j]
        a = 0.5 * (f1 - f0) / grid.h
        den = f0 + np.sqrt(np.maximum(f0 * f0 + 4 * a * target, 0.0))
        t = np.where(den > 0, 2 * target / np.where(den > 0, den, 1.0), 0.0)
        t = np.clip(t, 0.0, grid.h)
        return wrap(x[j] + t, grid.L)[:, None]
    top = dens.max()
    out = np.empty((N, 2))
    todo = np.arange(N)
    attempt = 0
    while todo.size:
        u = rng.counter_uniforms(key, todo.astype(np.uint64), _REJ_BASE + attempt, 3)
        x = -grid.L + 2 * grid.L * u[:, 0]
        y = -grid.L + 2 * grid.L * u[:, 1]
        val = core.interp_2d(dens, x, y, grid.L)
        ok = u[:, 2] * top < val
        out[todo[ok], 0] = x[ok]
        out[todo[ok], 1] = y[ok]
        todo = todo[~ok]
        attempt += 1
        if attempt > 100000:
            raise RuntimeError("rejection sampling did not terminate")
    return out


# simulation --------------------------------------------------------------------

def _noise(alpha, dt, key, ids, step, d):
    u = core.counter_uniforms(key, ids, step, lanes(d))
    return stable_from_uniforms(alpha, u, d) * dt ** (1.0 / alpha)


def _parallel(fn, n, threads):
    """Apply fn(lo, hi) over fixed chunks; results concatenated in order."""
    bounds = [(lo, min(n, lo + CHUNK)) for lo in range(0, n, CHUNK)]
    if threads is None or threads <= 1 or len(bounds) == 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda bh: fn(*bh), bounds))


def simulate(b_eps, mu: GridFunction, t0: float, S: float, N: int, dt: float, seed: int,
             alpha: float = 2.0, bandwidth: float | None = None, record="all",
             threads: int | None = None, positions0: np.ndarray | None = None) -> Trajectory:
    """Euler scheme for the mollified particle system.

    ``record`` is "all", "terminal" or a stride in steps.  ``b_eps=None`` means
    no interaction.  ``positions0`` overrides sampling from mu.
    """
    if N < 100:
        raise ValueError("need at least 100 particles")
    grid = mu.grid
    d = grid.d
    n_steps = int(round((S - t0) / dt))
    if n_steps < 1 or not math.isclose(t0 + n_steps * dt, S, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("S - t0 must be a positive multiple of dt")
    if not dt > 0:
        raise ValueError("dt must be positive")
    bw = 2.0 * grid.h if bandwidth is None else bandwidth
    key = rng.master_key(seed)
    ids = np.arange(N, dtype=np.uint64)
    x = sample_initial(mu, N, key) if positions0 is None else np.array(positions0, float).reshape(N, d)
    unwrapped = x.copy()
    x = wrap(x, grid.L)
    sk = None if b_eps is None else as_slabs(b_eps)
    b_h = None if sk is None else centered_hat(grid, sk.fields)
    drift_int = np.zeros((N, d))

    stride = {"all": 1, "terminal": n_steps}.get(record, record)
    times, snaps, dsnaps = [t0], [unwrapped.copy()], [drift_int.copy()]
    means, varis = [unwrapped.mean(axis=0)], [unwrapped.var(axis=0)]
    wraps = 0
    box = 2 * grid.L
    for k in range(n_steps):
        t = t0 + k * dt
        if b_h is not None:
            rh = _kde_hat(grid, x, bw)
            field_ = ifft_real(grid, b_h[int(sk.index(t))] * rh)  # (d,) + shape
        else:
            field_ = None

        def step(lo, hi, k=k, field_=field_):
            xs = x[lo:hi]
            if field_ is None:
                drift = np.zeros((hi - lo, d))
            else:
                drift = np.stack([_interp(grid, field_[c], xs) for c in range(d)], axis=1)
            return drift, _noise(alpha, dt, key, ids[lo:hi], k + 1, d)

        parts = _parallel(step, N, threads)
        drift = np.concatenate([p[0] for p in parts])
        dw = np.concatenate([p[1] for p in parts])
        move = drift * dt
        if not np.all(np.isfinite(move)) or np.abs(move).max(initial=0.0) > 3 * box:
            raise InstabilityError(f"drift displacement beyond 3 box widths at t={t:g}")
        wraps += int(np.count_nonzero(np.abs(dw) >= box))
        drift_int += move
        unwrapped += move + dw
        x = wrap(x + move + dw, grid.L)
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            if times[-1] != t + dt:
                times.append(t0 + (k + 1) * dt)
                snaps.append(unwrapped.copy())
                dsnaps.append(drift_int.copy())
        means.append(unwrapped.mean(axis=0))
        varis.append(unwrapped.var(axis=0))
    ens = ParticleEnsemble(N, x, S, key, alpha, wraps)
    stats = {"mean": np.array(means), "var": np.array(varis), "wraps": wraps,
             "step_times": t0 + dt * np.arange(n_steps + 1), "bandwidth": bw}
    return Trajectory(grid, alpha, dt, seed, np.array(times), np.array(snaps), np.array(dsnaps),
                      stats, ens)


# cross-validation --------------------------------------------------------------

def compare_to_fp(traj: Trajectory, path: DensityPath, bandwidth: float | None = None,
                  matched: bool = True) -> tuple:
    """L1 distance between the particle KDE and the FP frame at common nodes.

    With ``matched`` the FP frame goes through the same binning and smoothing
    as the particles.  Returns (times, distances).
    """
    grid = traj.grid
    if path.grid != grid:
        raise ValueError("trajectory and path live on different grids")
    bw = traj.stats.get("bandwidth", 2.0 * grid.h) if bandwidth is None else bandwidth
    smooth = kde_symbol(grid, bw) * cic_symbol(grid)
    ts, ds = [], []
    for i, s in enumerate(traj.times):
        j = np.flatnonzero(np.isclose(path.times, s, rtol=1e-9, atol=1e-12))
        if j.size == 0:
            continue
        kde = empirical_density(traj.wrapped(i), grid, bw).values
        ref = path.frames[j[0]]
        if matched:
            ref = ifft_real(grid, fft(grid, ref) * smooth)
        ts.append(float(s))
        ds.append(float(np.abs(kde - ref).sum() * grid.cell))
    return np.array(ts), np.array(ds)


# Young reconstruction ------------------------------------------------------------

@dataclass
class YoungReconstruction:
    partition: np.ndarray
    pseudo_increments: np.ndarray  # (len(partition) - 1, N, d)
    riemann_sum: np.ndarray  # (N, d)
    reference: np.ndarray  # (N, d)

    @property
    def gap(self) -> float:
        """Mean over particles of |riemann_sum - reference|."""
        return float(np.abs(self.riemann_sum - self.reference).sum(axis=1).mean())


def _drift_fields(b, path: DensityPath, times: np.ndarray) -> np.ndarray:
    """Fourier transforms of b * rho(v) at the given path times (t0 allowed)."""
    grid = path.grid
    sk = as_slabs(b)
    b_h = centered_hat(grid, sk.fields)
    all_t = np.concatenate([[path.t0], path.times])
    all_f = np.concatenate([path.mu[None], path.frames]) if path.mu is not None else None
    out = []
    for v in times:
        j = np.flatnonzero(np.isclose(all_t, v, rtol=1e-9, atol=1e-12))
        if j.size == 0 or all_f is None:
            raise ValueError(f"path has no frame at t={v:g}")
        out.append(b_h[int(sk.index(v))] * fft(grid, all_f[j[0]]))
    return np.array(out)


def young_reconstruction(b, path: DensityPath, traj: Trajectory, partition) -> YoungReconstruction:
    """Riemann sums of the pseudo-increments

        A(t_i, t_{i+1}) = int_{t_i}^{t_{i+1}} (B_rho(v) * p_{v - t_i})(X_{t_i}) dv

    against the direct drift integral sum_k B_rho(t_k, X_{t_k}) dt over the
    trajectory's steps.  The v-integral uses the trapezoid rule on the path nodes.
    """
    part = np.asarray(partition, dtype=float)
    if part.ndim != 1 or part.size < 2 or np.any(np.diff(part) <= 0):
        raise ValueError("partition must be strictly increasing")
    if np.min(np.diff(part)) < traj.dt * (1 - 1e-9):
        raise ValueError("partition is finer than the trajectory step")
    grid = traj.grid
    d = grid.d
    N = traj.N
    if b is None:
        z = np.zeros((N, d))
        return YoungReconstruction(part, np.zeros((part.size - 1, N, d)), z, z.copy())
    step_idx = [traj.index_of(s) for s in part]
    lam = grid.freq_abs() ** path.alpha
    incs = []
    for i in range(part.size - 1):
        a = part[i]
        vs = traj.times[step_idx[i]:step_idx[i + 1] + 1]
        Bh = _drift_fields(b, path, vs)
        w = np.full(vs.size, traj.dt)
        w[0] = w[-1] = 0.5 * traj.dt
        acc = sum(w[m] * np.exp(-(vs[m] - a) * lam) * Bh[m] for m in range(vs.size))
        F = ifft_real(grid, acc)
        xi = traj.wrapped(step_idx[i])
        incs.append(np.stack([_interp(grid, F[comp], xi) for comp in range(d)], axis=1))
    incs = np.array(incs)
    # direct integral over the trajectory steps inside [t_first, t_last)
    ref = np.zeros((N, d))
    for k in range(step_idx[0], step_idx[-1]):
        F = ifft_real(grid, _drift_fields(b, path, traj.times[k:k + 1])[0])
        xk = traj.wrapped(k)
        ref += traj.dt * np.stack([_interp(grid, F[comp], xk) for comp in range(d)], axis=1)
    return YoungReconstruction(part, incs, incs.sum(axis=0), ref)


# pathwise probe and tightness ------------------------------------------------------

def pathwise_probe_d1(b, mu: GridFunction, eps_pair, shared_seed: int, t0: float = 0.0,
                      S: float = 1.0, N: int = 10000, dt: float = 1 / 128,
                      alpha: float = 2.0, bandwidth: float | None = None, threads=None) -> tuple:
    """Mean |X^eps - X^eps'| per node for two runs sharing every random draw.

    Returns (times, gaps)."""
    from .kernels import mollify

    if mu.grid.d != 1:
        raise ValueError("the pathwise probe is one-dimensional")
    e1, e2 = eps_pair
    runs = []
    for e in (e1, e2):
        be = None if b is None else mollify(b, e)
        runs.append(simulate(be, mu, t0, S, N, dt, shared_seed, alpha, bandwidth, "all", threads))
    gaps = np.abs(runs[0].paths - runs[1].paths).sum(axis=2).mean(axis=1)
    return runs[0].times, gaps


def tightness_moments(traj: Trajectory, lambda_exp: float, lag_set, xi_min: float = 0.05) -> dict:
    """Fit log E|X_{s+h} - X_s|^lambda against log h (steps in ``lag_set``)."""
    lags, moms = [], []
    for m in lag_set:
        m = int(m)
        if m <= 0:
            continue
        inc = traj.paths[m:] - traj.paths[:-m]
        moms.append(float((np.sqrt((inc**2).sum(axis=2)) ** lambda_exp).mean()))
        lags.append(m * float(traj.times[1] - traj.times[0]))
    slope = float(np.polyfit(np.log(lags), np.log(moms), 1)[0])
    need = 1.0 + xi_min if traj.alpha == 2 else xi_min
    return {"slope": slope, "lags": lags, "moments": moms, "threshold": need, "tight": slope >= need}
