"""Mollified nonlinear Fokker-Planck equation in Duhamel form.

    rho(s) = p_{s-t0} * mu - int_{t0}^s grad p_{s-v} * (B(v) rho(v)) dv,
    B(v) = b(v) * rho(v).

In Fourier space the heat kernel is exp(-(s-v)|xi|^a), so the time integral is
discretised by an exponential product trapezoid: the flux G(v) is interpolated
linearly on each step and integrated exactly against the exponential.  This
absorbs the (s-v)-singularity of grad p_{s-v} into closed-form weights.  The
nonlinear problem is solved by Picard iteration on the whole path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from . import params as P
from .besov import BesovSpec, WeightSpec, _lp, thermic_norms, weight, weighted_path_norm
from .grid import Grid, GridFunction, centered_hat, fft, ifft_real
from .kernels import SlabKernel, as_slabs, mollify
from .stable_kernel import t_min, tail_bound

QUAD_RULES = ("exp_trapezoid", "exp_euler")
_CHUNK = 1 << 22  # complex entries per batched flux evaluation


class HorizonTooLongError(RuntimeError):
    """Picard iteration diverges: the requested time span exceeds the horizon."""

    def __init__(self, msg, suggested_S=None, history=()):
        super().__init__(msg)
        self.suggested_S = suggested_S
        self.history = list(history)


class ConvergenceError(RuntimeError):
    pass


class MassDriftError(RuntimeError):
    pass


class TailError(ValueError):
    """Periodization error bound above tolerance: enlarge L or shorten S."""


class GateError(P.DomainError):
    def __init__(self, msg, gate=None):
        super().__init__(msg)
        self.gate = gate


@dataclass
class SolverConfig:
    dt: float
    picard_tol: float = 1e-6
    picard_max: int = 80
    quad_rule: str = "exp_trapezoid"
    mass_tol: float = 1e-3
    epsilon: float | None = None
    tail_tol: float | None = 1e-6
    gamma: float = 0.0  # time weight of the Picard distance

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.quad_rule not in QUAD_RULES:
            raise ValueError(f"quad_rule must be one of {QUAD_RULES}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("dt", "picard_tol", "picard_max", "quad_rule",
                                              "mass_tol", "epsilon", "tail_tol", "gamma")}


@dataclass
class DensityPath:
    grid: Grid
    t0: float
    times: np.ndarray  # nodes in (t0, S]
    frames: np.ndarray  # (M,) + grid.shape
    alpha: float = 2.0
    gamma_meta: dict = field(default_factory=dict)
    mu: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.shape != (len(self.times),) + self.grid.shape:
            raise ValueError("frames do not match times and grid")
        if len(self.times) and (self.times[0] <= self.t0 or np.any(np.diff(self.times) <= 0)):
            raise ValueError("times must increase strictly from above t0")
        self._norm_cache = {}

    def __len__(self):
        return len(self.times)

    def frame(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.frames[i], float(self.times[i]))

    def masses(self) -> np.ndarray:
        return self.frames.reshape(len(self), -1).sum(axis=1) * self.grid.cell

    def check(self, mass_tol: float = 1e-3) -> None:
        if not np.all(np.isfinite(self.frames)):
            raise MassDriftError("non-finite density values")
        drift = np.abs(self.masses() - 1.0)
        if drift.size and drift.max() > mass_tol:
            i = int(drift.argmax())
            raise MassDriftError(f"mass drift {drift[i]:.3g} at s={self.times[i]:g} exceeds {mass_tol:g}; "
                                 "refine dt")

    def besov_norms(self, spec: BesovSpec, alpha_ref: float | None = None) -> np.ndarray:
        a = self.alpha if alpha_ref is None else alpha_ref
        key = (spec, a)
        if key not in self._norm_cache:
            low, th, _, _ = thermic_norms(self.grid, self.frames, spec, a)
            self._norm_cache[key] = np.atleast_1d(low + th)
        return self._norm_cache[key]

    def l1_norms(self) -> np.ndarray:
        return np.atleast_1d(_lp(self.grid, self.frames, 1.0, False))

    def minus(self, other: "DensityPath") -> "DensityPath":
        """Difference path (mass zero, used for Cauchy tables)."""
        if other.grid != self.grid or not np.allclose(other.times, self.times):
            raise ValueError("paths live on different nodes")
        return DensityPath(self.grid, self.t0, self.times, self.frames - other.frames, self.alpha,
                           dict(self.gamma_meta), meta={"difference": True})

    def clipped(self) -> np.ndarray:
        """Nonnegative renormalised frames, for reporting only."""
        f = np.maximum(self.frames, 0.0)
        m = f.reshape(len(self), -1).sum(axis=1) * self.grid.cell
        return f / m.reshape((-1,) + (1,) * self.grid.d)


# drift -----------------------------------------------------------------------

def convolution_drift(b, rho: GridFunction) -> GridFunction:
    """Componentwise periodic convolution b * rho with b centred at the origin."""
    if isinstance(b, SlabKernel):
        b = b.at(rho.time if rho.time is not None else b.edges[0])
    if b.grid != rho.grid:
        raise ValueError("grids differ")
    if not b.is_vector or rho.is_vector:
        raise ValueError("need a vector kernel and a scalar density")
    grid = rho.grid
    out = ifft_real(grid, centered_hat(grid, b.values) * fft(grid, rho.values))
    return GridFunction(grid, out, rho.time)


# solver internals ------------------------------------------------------------

def _phi12(z: np.ndarray):
    """phi1 = (1 - e^-z)/z and phi2 = (z - 1 + e^-z)/z^2, series near 0."""
    small = z < 1e-2
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(-zs)
    phi1 = np.where(small, 1 - z / 2 + z**2 / 6 - z**3 / 24, -em1 / zs)
    phi2 = np.where(small, 0.5 - z / 6 + z**2 / 24 - z**3 / 120 + z**4 / 720, (zs + em1) / zs**2)
    return phi1, phi2


class _Duhamel:
    """Precomputed pieces of the discrete Duhamel map for one (b, mu, nodes)."""

    def __init__(self, b, mu: GridFunction, t0: float, n_steps: int, dt: float, alpha: float,
                 quad_rule: str = "exp_trapezoid"):
        grid = mu.grid
        self.grid, self.alpha, self.dt, self.M = grid, alpha, dt, n_steps
        self.t0 = t0
        self.times = t0 + dt * np.arange(n_steps + 1)
        lam = grid.freq_abs() ** alpha
        self.lam = lam
        self.E = np.exp(-dt * lam)
        phi1, phi2 = _phi12(dt * lam)
        if quad_rule == "exp_trapezoid":
            self.w_new, self.w_old = dt * phi2, dt * (phi1 - phi2)
        else:
            self.w_new, self.w_old = np.zeros_like(lam), dt * phi1
        self.mu = mu.values
        mu_h = fft(grid, mu.values)
        self.heat_h = np.exp(-np.multiply.outer(self.times - t0, lam)) * mu_h
        self.ik = [1j * k for k in grid.deriv_freqs()]
        if b is None:
            self.b_h, self.slab_of = None, None
        else:
            sk = as_slabs(b)
            if sk.grid != grid:
                raise ValueError("kernel and density grids differ")
            self.b_h = centered_hat(grid, sk.fields)  # (K, d) + shape
            self.slab_of = sk.index(self.times)
        self.loc = None

    def heat(self) -> np.ndarray:
        return ifft_real(self.grid, self.heat_h)

    def flux(self, rho: np.ndarray) -> np.ndarray:
        """G_n = sum_i i xi_i F[(b_i * rho_n) rho_n] for all nodes."""
        grid = self.grid
        out = np.zeros((rho.shape[0],) + grid.shape, dtype=complex)
        if self.b_h is None:
            return out
        step = max(1, _CHUNK // (grid.d * grid.N**grid.d))
        for lo in range(0, rho.shape[0], step):
            sl = slice(lo, lo + step)
            r = rho[sl]
            rh = fft(grid, r)
            bh = self.b_h[self.slab_of[sl]]  # (m, d) + shape
            B = ifft_real(grid, bh * rh[:, None])
            Gh = fft(grid, B * r[:, None])
            out[sl] = sum(self.ik[i] * Gh[:, i] for i in range(grid.d))
        return out

    def integrate(self, G: np.ndarray, window: int | None = None) -> np.ndarray:
        """Convolution integrals I_n = sum_j E^{n-j} loc_j by recursion.

        With a window K the integral is split as e^{-K dt lam} I_{n-K} (the
        part at lag >= K dt) plus a sliding sum over the last K steps.
        """
        M = self.M
        loc = np.empty_like(G)
        loc[0] = 0.0
        loc[1:] = self.w_new * G[1:] + self.w_old * G[:-1]
        I = np.zeros_like(G)
        if window is None or window >= M:
            for n in range(1, M + 1):
                I[n] = self.E * I[n - 1] + loc[n]
            self.tail_share = 0.0
            return I
        EK = self.E**window
        near = np.zeros(G.shape[1:], dtype=complex)
        tail_mass = 0.0
        for n in range(1, M + 1):
            near = self.E * near + loc[n]
            if n > window:
                near = near - EK * loc[n - window]
                tail = EK * I[n - window]
                I[n] = tail + near
                tail_mass = max(tail_mass, float(np.abs(tail).max()))
            else:
                I[n] = near
        self.tail_share = tail_mass
        return I

    def apply(self, rho: np.ndarray, window: int | None = None) -> np.ndarray:
        """One application of the Duhamel map to a full path (node 0 = mu)."""
        I = self.integrate(self.flux(rho), window)
        return ifft_real(self.grid, self.heat_h - I)

    def distance(self, a: np.ndarray, b: np.ndarray, gamma: float) -> float:
        el = self.times[1:] - self.t0
        l1 = _lp(self.grid, a[1:] - b[1:], 1.0, False)
        return float((el**gamma * l1).max()) if len(el) else 0.0


def _nodes(t0, S, dt):
    n = int(round((S - t0) / dt))
    if n < 1 or not math.isclose(t0 + n * dt, S, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"S - t0 = {S - t0:g} is not a positive multiple of dt = {dt:g}")
    return n


def _check_inputs(mu: GridFunction, t0, S, cfg: SolverConfig, alpha):
    grid = mu.grid
    if mu.is_vector:
        raise ValueError("mu must be a scalar density")
    if np.any(mu.values < -1e-12):
        raise ValueError("mu must be nonnegative")
    if abs(mu.mass() - 1.0) > cfg.mass_tol:
        raise MassDriftError(f"mu has mass {mu.mass():.6g}, expected 1")
    if not cfg.dt > t_min(alpha, grid):
        raise ValueError(f"dt={cfg.dt:g} is below the resolvable t_min={t_min(alpha, grid):g}")
    if cfg.tail_tol is not None:
        tb = tail_bound(alpha, S - t0, grid.L, grid.d)
        if tb > cfg.tail_tol:
            raise TailError(f"periodization tail bound {tb:.3g} exceeds {cfg.tail_tol:g}: enlarge L")
    return _nodes(t0, S, cfg.dt)


def _init_path(duh: _Duhamel, init):
    if isinstance(init, np.ndarray):
        rho = np.array(init, dtype=float)
    elif init == "heat":
        rho = duh.heat()
    elif init == "uniform":
        rho = np.empty((duh.M + 1,) + duh.grid.shape)
        rho[:] = 1.0 / (2 * duh.grid.L) ** duh.grid.d
    else:
        raise ValueError(f"unknown Picard initialisation {init!r}")
    rho[0] = duh.mu
    return rho


def _picard(duh: _Duhamel, cfg: SolverConfig, init="heat", window=None):
    rho = _init_path(duh, init)
    history = []
    rising = 0
    for _ in range(cfg.picard_max):
        new = duh.apply(rho, window)
        dist = duh.distance(new, rho, cfg.gamma)
        if not math.isfinite(dist):
            raise HorizonTooLongError("Picard iterates blew up", history=history)
        rising = rising + 1 if history and dist > history[-1] else 0
        history.append(dist)
        rho = new
        if dist < cfg.picard_tol:
            break
        if rising >= 3:
            S = duh.times[-1]
            raise HorizonTooLongError(
                f"Picard distance grew for 3 iterations ({history[-4:]}); the span exceeds the "
                f"existence horizon, try S <= {duh.t0 + 0.5 * (S - duh.t0):g}",
                suggested_S=duh.t0 + 0.5 * (S - duh.t0), history=history)
    else:
        raise ConvergenceError(f"no convergence in {cfg.picard_max} iterations (last {history[-1]:.3g})")
    residual = duh.distance(duh.apply(rho, window), rho, cfg.gamma)
    return rho, history, residual


def _make_path(duh, rho, cfg, history, residual, extra=None) -> DensityPath:
    meta = {"picard_history": history, "picard_iterations": len(history), "residual": residual,
            "config": cfg.to_dict()}
    meta.update(extra or {})
    path = DensityPath(duh.grid, duh.t0, duh.times[1:], rho[1:], duh.alpha,
                       {"picard_gamma": cfg.gamma}, mu=duh.mu.copy(), meta=meta)
    path.check(cfg.mass_tol)
    if residual >= 2 * cfg.picard_tol:
        raise ConvergenceError(f"Duhamel residual {residual:.3g} >= 2 picard_tol")
    return path


def solve_mollified_fp(b_eps, mu: GridFunction, t0: float, S: float, cfg: SolverConfig,
                       alpha: float = 2.0, init="heat") -> DensityPath:
    """Picard solution of the mollified Duhamel equation on nodes t0 + k dt.

    ``b_eps`` is used as given (None means b = 0); ``cfg.epsilon`` is recorded.
    """
    M = _check_inputs(mu, t0, S, cfg, alpha)
    duh = _Duhamel(b_eps, mu, t0, M, cfg.dt, alpha, cfg.quad_rule)
    rho, history, residual = _picard(duh, cfg, init)
    return _make_path(duh, rho, cfg, history, residual, {"epsilon": cfg.epsilon})


# weighted curves and the Gronwall envelope -------------------------------------

def _weights(el, w):
    if isinstance(w, WeightSpec):
        return weight(w, el)
    return el**w


def weighted_sup_path(path: DensityPath, gamma, spec: BesovSpec,
                      alpha_ref: float | None = None) -> np.ndarray:
    """Running max over nodes of weight(v - t0) ||rho(v)||_B; ``gamma`` is a
    power or a WeightSpec."""
    el = path.times - path.t0
    vals = _weights(el, gamma) * path.besov_norms(spec, alpha_ref)
    return np.maximum.accumulate(vals)


@dataclass
class GronwallFit:
    C_cal: float
    c_mu_curve: np.ndarray
    c_b_curve: np.ndarray
    envelope: np.ndarray
    horizon: float
    f: np.ndarray
    times: np.ndarray
    t0: float
    regime: str = "short"
    mu_norm: float = float("nan")
    kernel_norm: float = float("nan")
    gate: float = float("inf")
    failed: bool = False
    rtol: float = 1e-9

    @property
    def within(self) -> np.ndarray:
        return (self.times - self.t0) < self.horizon

    @property
    def node_ok(self) -> np.ndarray:
        env = np.where(np.isfinite(self.envelope), self.envelope, -np.inf)
        return self.f <= env * (1.0 + self.rtol)

    @property
    def holds(self) -> bool:
        if self.failed:
            return False
        w = self.within
        return bool(np.all(self.node_ok[w])) and bool(w.any())

    def to_dict(self) -> dict:
        def fl(x):
            return [None if not np.isfinite(v) else float(v) for v in np.asarray(x)]
        return {"C_cal": self.C_cal, "horizon": None if math.isinf(self.horizon) else self.horizon,
                "regime": self.regime, "mu_norm": self.mu_norm, "kernel_norm": self.kernel_norm,
                "gate": None if math.isinf(self.gate) else self.gate, "failed": self.failed,
                "holds": self.holds, "times": fl(self.times), "f": fl(self.f),
                "c_mu": fl(self.c_mu_curve), "c_b": fl(self.c_b_curve), "envelope": fl(self.envelope)}


def regime_exponents(ps: P.ParameterSet, regime: str = "short") -> dict:
    """Norm index, path weight and the time powers of C_mu(s), C_b(s)."""
    dq = P.gamma_exponents(ps)
    pc = P.conjugate_exponent(ps.p)
    a = ps.alpha
    if regime in ("short", "long"):
        if dq.gamma is None:
            raise P.DomainError("C3 does not hold: " + "; ".join(dq.flags))
        lam_b = 1.0 - P.inv(ps.r) - dq.gamma + (ps.beta - ps.delta) / a
        out = {"spec": BesovSpec(-ps.beta - ps.theta, pc, 1.0), "mu_pow": ps.eta / a, "b_pow": lam_b,
               "denom": P.horizon_denominator(ps, dq.gamma)}
        out["weight"] = dq.gamma if regime == "short" else WeightSpec(dq.gamma1, dq.gamma2)
        return out
    if regime == "classical":
        if dq.gamma_star is None:
            raise P.DomainError("C2star does not hold")
        kappa = (1.0 - ps.eta) / (2.0 * ps.eta) * dq.Gamma_cl / a
        return {"spec": BesovSpec(-ps.beta + dq.Gamma_cl, pc, 1.0), "weight": dq.gamma_star,
                "mu_pow": kappa, "b_pow": kappa, "denom": -2.0 * kappa}
    raise ValueError(f"unknown regime {regime!r}")


def initial_norm(mu: GridFunction, ps: P.ParameterSet, alpha_ref: float | None = None) -> float:
    """||mu|| in B^{beta0_bar}_{p0_bar, q0_bar}."""
    dq = P.gamma_exponents(ps)
    spec = BesovSpec(dq.beta0_bar, dq.p0_bar, dq.q0_bar)
    low, th, _, _ = thermic_norms(mu.grid, mu.values, spec, ps.alpha if alpha_ref is None else alpha_ref)
    return float(low + th)


def _split_curves(path: DensityPath, ex: dict):
    """Running sups of the weighted norms of the free heat flow and of the
    Duhamel correction rho - p * mu."""
    lam = path.grid.freq_abs() ** path.alpha
    mu_h = fft(path.grid, path.mu)
    heat = ifft_real(path.grid, np.exp(-np.multiply.outer(path.times - path.t0, lam)) * mu_h)
    heat_path = DensityPath(path.grid, path.t0, path.times, heat, path.alpha)
    w = _weights(path.times - path.t0, ex["weight"])
    f_heat = np.maximum.accumulate(w * heat_path.besov_norms(ex["spec"]))
    f_duh = np.maximum.accumulate(w * path.minus(heat_path).besov_norms(ex["spec"]))
    return f_heat, f_duh


def gronwall_envelope(path: DensityPath, ps: P.ParameterSet, norms_b, C_cal: float | None = None,
                      regime: str = "short", mu_norm: float | None = None,
                      T: float | None = None, calibration: str = "quadratic") -> GronwallFit:
    """Calibrate (C_cal=None) or validate the quadratic Gronwall envelope.

    ``norms_b`` = (||b||, ||div b||) in L^r(B^beta_{p,q}).

    ``calibration="quadratic"`` takes the smallest C with C_b f^2 - f + C_mu >= 0
    at every node.  ``"split"`` fits the two estimates the inequality is built
    from separately, sup v^g ||p_v * mu|| <= C_mu(s) and
    sup v^g ||rho(v) - p_v * mu|| <= C_b(s) f(s)^2, and keeps the larger
    constant; it also satisfies the quadratic inequality, with slack.
    """
    ex = regime_exponents(ps, regime)
    el = path.times - path.t0
    f = weighted_sup_path(path, ex["weight"], ex["spec"])
    if mu_norm is None:
        mu_norm = initial_norm(GridFunction(path.grid, path.mu), ps, path.alpha)
    kb = float(norms_b[0] + norms_b[1])
    short = np.minimum(el, 1.0) if regime == "long" else el
    A_mu = mu_norm * short ** ex["mu_pow"]
    A_b = kb * short ** ex["b_pow"]
    failed = False
    if C_cal is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            if calibration == "quadratic":
                ratios = f / (A_b * f**2 + A_mu)
            elif calibration == "split":
                f_heat, f_duh = _split_curves(path, ex)
                r_duh = np.where(f_duh > 0, f_duh / (A_b * f**2), 0.0)
                ratios = np.maximum(f_heat / A_mu, r_duh)
            else:
                raise ValueError(f"unknown calibration {calibration!r}")
        if not np.all(np.isfinite(ratios)) or not np.all(ratios > 0):
            failed = True
            C_cal = float("inf")
        else:
            C_cal = float(ratios.max())
    c_mu = C_cal * A_mu
    c_b = C_cal * A_b
    env = np.full(len(el), np.nan)
    if not failed:
        for i in range(len(el)):
            roots = P.gronwall_roots(float(c_mu[i]), float(c_b[i]))
            if roots is not None:
                env[i] = roots[0]
    C0, Cb = C_cal * mu_norm, C_cal * kb
    gate = P.smallness_gate(C_cal, kb)
    if failed or Cb == 0:
        horizon = float("inf") if not failed else 0.0
    else:
        horizon = P.time_horizon(C0, Cb, ex["denom"])
        if regime == "long":
            horizon = P.time_horizon_longtime(C0, Cb, ex["denom"], mu_norm, C_cal,
                                              float(el[-1]) if T is None else T)
    return GronwallFit(C_cal, c_mu, c_b, env, horizon, f, path.times.copy(), path.t0, regime,
                       mu_norm, kb, gate, failed)


# epsilon ladder -------------------------------------------------------------

@dataclass
class CauchyTable:
    epsilons: list
    besov_col: list
    l1_col: list
    decreasing: bool
    geometric: bool
    failure_flag: bool
    paths: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"epsilons": self.epsilons, "besov": self.besov_col, "l1": self.l1_col,
                "decreasing": self.decreasing, "geometric": self.geometric,
                "failure_flag": self.failure_flag}


def _strictly_decreasing(xs):
    return all(b < a for a, b in zip(xs[:-1], xs[1:]))


def cauchy_sweep(b, mu: GridFunction, epsilons, ps: P.ParameterSet, cfg: SolverConfig,
                 t0: float = 0.0, S: float = 1.0, regime: str = "short") -> CauchyTable:
    """Solve at each epsilon and tabulate consecutive differences."""
    import warnings

    from .kernels import UnderResolvedWarning
    from dataclasses import replace

    ex = regime_exponents(ps, regime)
    paths = []
    for eps in epsilons:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnderResolvedWarning)
            be = None if b is None else mollify(b, eps)
        c = replace(cfg, epsilon=eps)
        if regime == "long":
            paths.append(solve_fp_longtime(be, mu, t0, S, c, ps)[0])
        else:
            paths.append(solve_mollified_fp(be, mu, t0, S, c, ps.alpha))
    besov_col, l1_col = [], []
    for p1, p2 in zip(paths[:-1], paths[1:]):
        diff = p1.minus(p2)
        el = diff.times - diff.t0
        if regime == "long":
            r_conj = P.conjugate_exponent(ps.r)
            besov_col.append(weighted_path_norm(diff, r_conj, ex["weight"], ex["spec"], ps.alpha))
        else:
            besov_col.append(float((el ** ex["weight"] * diff.besov_norms(ex["spec"])).max()))
        l1_col.append(float(diff.l1_norms().max()))
    dec = _strictly_decreasing(besov_col) and _strictly_decreasing(l1_col)
    geo = len(besov_col) > 0 and besov_col[-1] <= besov_col[0] / 4 and l1_col[-1] <= l1_col[0] / 4
    fail = len(besov_col) > 1 and (besov_col[-1] > besov_col[-2] or l1_col[-1] > l1_col[-2])
    return CauchyTable(list(epsilons), besov_col, l1_col, dec, geo, fail, paths)


def node_residuals(path: DensityPath, b, mu: GridFunction | None = None,
                   window: int | None = None) -> np.ndarray:
    """Per-node L1 distance between a path and the Duhamel map with kernel
    ``b`` applied to it."""
    mu = GridFunction(path.grid, path.mu) if mu is None else mu
    dt = float(path.times[0] - path.t0)
    duh = _Duhamel(b, mu, path.t0, len(path), dt, path.alpha,
                   path.meta.get("config", {}).get("quad_rule", "exp_trapezoid"))
    rho = np.concatenate([mu.values[None], path.frames])
    return np.atleast_1d(_lp(path.grid, duh.apply(rho, window)[1:] - path.frames, 1.0, False))


def limit_duhamel_residual(path: DensityPath, b, mu: GridFunction | None = None,
                           gamma: float | None = None, window: int | None = None) -> float:
    """Weighted sup-L1 distance between a path and the Duhamel map built
    with kernel ``b`` (typically the un-mollified one) applied to it."""
    g = path.gamma_meta.get("picard_gamma", 0.0) if gamma is None else gamma
    el = path.times - path.t0
    return float((el**g * node_residuals(path, b, mu, window)).max())


def uniqueness_probe(b_eps, mu: GridFunction, t0: float, S: float, cfg: SolverConfig,
                     alpha: float = 2.0) -> dict:
    """Solve from the heat-flow and from the uniform initialisation and compare."""
    a = solve_mollified_fp(b_eps, mu, t0, S, cfg, alpha, init="heat")
    u = solve_mollified_fp(b_eps, mu, t0, S, cfg, alpha, init="uniform")
    el = a.times - t0
    dist = float((el**cfg.gamma * _lp(a.grid, a.frames - u.frames, 1.0, False)).max())
    return {"distance": dist, "tolerance": 2 * cfg.picard_tol, "agree": dist <= 2 * cfg.picard_tol,
            "iterations": (a.meta["picard_iterations"], u.meta["picard_iterations"])}


def drift_integrability(path: DensityPath, b, r_theta: float, theta: float, alpha: float,
                        r: float, regime: str = "martingale", include_t0: bool = True) -> float:
    """Discrete L^{r_theta}-in-time norm of ||b * rho(s)||_{B^{-theta}_{inf,inf}}."""
    lo = alpha if regime == "martingale" else 2 * alpha
    if not lo < r_theta < r:
        raise P.DomainError(f"r_theta={r_theta:g} outside the admissible interval ({lo:g}, {r:g})")
    if b is None:
        return 0.0
    grid = path.grid
    frames = path.frames
    times = path.times
    if include_t0 and path.mu is not None:
        frames = np.concatenate([path.mu[None], frames])
        times = np.concatenate([[path.t0], times])
    sk = as_slabs(b)
    b_h = centered_hat(grid, sk.fields)[sk.index(times)]
    drift = ifft_real(grid, b_h * fft(grid, frames)[:, None])
    low, th, _, _ = thermic_norms(grid, drift, BesovSpec(-theta, math.inf, math.inf), path.alpha,
                                  vector=True)
    vals = np.atleast_1d(low + th)
    if math.isinf(r_theta):
        return float(vals.max())
    return float(trapezoid(vals**r_theta, times) ** (1.0 / r_theta))


# long time and classical regimes ------------------------------------------------

@dataclass
class WeightedReport:
    regime: str
    spec: BesovSpec
    weight: object
    curve: np.ndarray
    sup: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        w = self.weight
        w = [w.lambda1, w.lambda2] if isinstance(w, WeightSpec) else w
        return {"regime": self.regime, "norm": [self.spec.gamma, self.spec.ell, self.spec.m],
                "weight": w, "sup": self.sup, **self.extra}


def _report(path, ps, regime, extra=None) -> WeightedReport:
    ex = regime_exponents(ps, regime)
    el = path.times - path.t0
    curve = _weights(el, ex["weight"]) * path.besov_norms(ex["spec"])
    return WeightedReport(regime, ex["spec"], ex["weight"], curve, float(curve.max()), extra or {})


def solve_fp_longtime(b_eps, mu: GridFunction, t0: float, S: float, cfg: SolverConfig,
                      ps: P.ParameterSet, C_cal: float | None = None, norms_b=None, init="heat"):
    """Same Picard scheme with the time integral split at lag 1.

    When ``C_cal`` and ``norms_b`` are given and S - t0 exceeds the
    short-time horizon, ||mu|| must lie below the gate 1/(4 C_cal K_b).
    """
    if not P.check_C3LT(ps).satisfied:
        raise P.DomainError("long-time condition C3LT does not hold")
    M = _check_inputs(mu, t0, S, cfg, ps.alpha)
    extra = {}
    if C_cal is not None and norms_b is not None:
        kb = float(norms_b[0] + norms_b[1])
        mu_norm = initial_norm(mu, ps)
        if kb > 0:
            ex = regime_exponents(ps, "short")
            horizon = P.time_horizon(C_cal * mu_norm, C_cal * kb, ex["denom"])
            gate = P.smallness_gate(C_cal, kb)
            extra.update(short_horizon=horizon, gate=gate, mu_norm=mu_norm)
            if S - t0 > horizon and mu_norm >= gate:
                raise GateError(f"||mu||={mu_norm:.4g} is not below the smallness gate {gate:.4g} "
                                f"while S - t0 exceeds the horizon {horizon:.4g}", gate)
    window = int(round(1.0 / cfg.dt))
    duh = _Duhamel(b_eps, mu, t0, M, cfg.dt, ps.alpha, cfg.quad_rule)
    rho, history, residual = _picard(duh, cfg, init, window)
    extra.update(epsilon=cfg.epsilon, lag_window=window, tail_max=duh.tail_share)
    path = _make_path(duh, rho, cfg, history, residual, extra)
    path.gamma_meta["regime"] = "long"
    return path, _report(path, ps, "long", {"lag_window": window})


def solve_fp_classical(b_eps, mu: GridFunction, t0: float, S: float, cfg: SolverConfig,
                       ps: P.ParameterSet, init="heat"):
    """Classical regime (theta = 0): norms in B^{-beta+Gamma}_{p',1}, weight (s-t0)^{gamma*}."""
    if ps.theta != 0:
        raise P.DomainError("the classical regime requires theta = 0")
    if not P.check_C2star(ps).satisfied:
        raise P.DomainError("C2star does not hold")
    path = solve_mollified_fp(b_eps, mu, t0, S, cfg, ps.alpha, init)
    path.gamma_meta["regime"] = "classical"
    dq = P.gamma_exponents(ps)
    return path, _report(path, ps, "classical", {"Gamma": dq.Gamma_cl, "gamma_star": dq.gamma_star})
