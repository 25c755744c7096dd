"""Besov norms through the heat-semigroup (thermic) characterization, and
numerical probes of the standard Besov inequalities.

||f||_{B^g_{l,m}} = ||F^-1(phi F f)||_{L^l}
                    + ( int_0^1 dv/v [v^(n - g/a) ||d_v^n p_v * f||_{L^l}]^m )^(1/m)

with p_v the isotropic a-stable density.  The v-derivative is spectral:
d_v^n exp(-v|xi|^a) = (-|xi|^a)^n exp(-v|xi|^a).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import beta as beta_fn

from .grid import Grid, GridFunction, fft, ifft_real, convolve  # noqa: F401  (convolve re-exported)

V_MIN = 1e-6
V_NODES = 64
V_RTOL = 5e-3
V_MAX_DOUBLINGS = 4
SLOPE_TOL = 0.05


class HypothesisError(ValueError):
    """Inequality hypotheses do not hold for the requested exponents."""

    def __init__(self, msg, clauses=()):
        super().__init__(msg)
        self.clauses = list(clauses)


@dataclass(frozen=True)
class BesovSpec:
    gamma: float
    ell: float
    m: float

    def __post_init__(self):
        if not (self.ell >= 1 and self.m >= 1):
            raise ValueError("ell and m must be >= 1")

    def n_order(self, alpha: float) -> int:
        return max(1, math.floor(self.gamma / alpha) + 1)


@dataclass(frozen=True)
class Lebesgue:
    """Plain L^ell, used as the middle space of the (E1) chain."""
    ell: float


@dataclass(frozen=True)
class WeightSpec:
    lambda1: float
    lambda2: float

    def negate(self) -> "WeightSpec":
        return WeightSpec(-self.lambda1, -self.lambda2)


@dataclass
class BesovNorm:
    low_freq: float
    thermic: float
    diverged: bool = False
    v_nodes: int = V_NODES

    @property
    def total(self) -> float:
        return self.low_freq + self.thermic

    def to_dict(self) -> dict:
        return {"low_freq": self.low_freq, "thermic": self.thermic,
                "total": self.total, "diverged": bool(self.diverged)}


def conj(x: float) -> float:
    if x == 1:
        return math.inf
    if math.isinf(x):
        return 1.0
    return x / (x - 1.0)


# L^ell norms ---------------------------------------------------------------

def _lp(grid: Grid, arr: np.ndarray, ell: float, vector: bool) -> np.ndarray:
    """L^ell norm over the trailing grid axes; vector fields use the pointwise
    Euclidean length.  Leading axes are batch axes."""
    a = np.sqrt((arr**2).sum(axis=-grid.d - 1)) if vector else np.abs(arr)
    axes = tuple(range(a.ndim - grid.d, a.ndim))
    if math.isinf(ell):
        return a.max(axis=axes)
    if ell == 1:
        return a.sum(axis=axes) * grid.cell
    if ell == 2:
        return np.sqrt((a * a).sum(axis=axes) * grid.cell)
    return ((a**ell).sum(axis=axes) * grid.cell) ** (1.0 / ell)


def lp_norm(f: GridFunction, ell: float) -> float:
    return float(_lp(f.grid, f.values, ell, f.is_vector))


# thermic characterization --------------------------------------------------

def low_pass(grid: Grid) -> np.ndarray:
    """C^2 radial cut: 1 on |xi| <= 1, 0 on |xi| >= 3/2, quintic smoothstep between."""
    s = np.clip((grid.freq_abs() - 1.0) / 0.5, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def v_grid(n_nodes: int = V_NODES, v_min: float = V_MIN) -> np.ndarray:
    return np.logspace(math.log10(v_min), 0.0, n_nodes)


def _integrand(grid, fh, lam, v, n, a, ell, vector):
    mult = (-lam) ** n * np.exp(-v * lam)
    return v**a * _lp(grid, ifft_real(grid, mult * fh), ell, vector)


def _combine(vs, g, m):
    if math.isinf(m):
        return g.max(axis=0)
    return integrate.trapezoid(g**m, np.log(vs), axis=0) ** (1.0 / m)


def _small_scale_slope(vs, g, lam_max):
    """Log-log slope of the integrand over v in [20, 2000]/lam_max, the
    smallest scales the grid resolves; negative slope means growth as v -> 0.
    Also returns whether the sup over v is attained at or below that window."""
    lo, hi = 20.0 / lam_max, min(2000.0 / lam_max, 0.1)
    sel = (vs >= lo) & (vs <= hi)
    if sel.sum() < 3:
        return None, None
    x = np.log(vs[sel])
    y = np.log(np.maximum(g[sel], 1e-300)).reshape(sel.sum(), -1)
    xm = x - x.mean()
    slope = (xm[:, None] * (y - y.mean(axis=0))).sum(axis=0) / (xm**2).sum()
    sup_small = vs[np.argmax(g, axis=0)] <= hi
    return slope.reshape(g.shape[1:]), sup_small


def thermic_norms(grid: Grid, values: np.ndarray, spec: BesovSpec, alpha_ref: float,
                  vector: bool = False, n_nodes: int = V_NODES, refine: bool = True):
    """Norms of a batch of fields (leading axis) at once.

    Returns (low, thermic, diverged, nodes_used) arrays over the batch.
    """
    values = np.asarray(values, dtype=float)
    fh = fft(grid, values)
    lam = grid.freq_abs() ** alpha_ref
    n = spec.n_order(alpha_ref)
    a = n - spec.gamma / alpha_ref

    low = _lp(grid, ifft_real(grid, low_pass(grid) * fh), spec.ell, vector)

    cache = {}

    def g_at(vs):
        out = []
        for v in vs:
            key = float(v)
            if key not in cache:
                cache[key] = _integrand(grid, fh, lam, v, n, a, spec.ell, vector)
            out.append(cache[key])
        return np.array(out)

    vs = v_grid(n_nodes)
    g = g_at(vs)
    th = _combine(vs, g, spec.m)
    converged = np.ones(np.shape(th), dtype=bool)
    if refine and not math.isinf(spec.m):
        converged = np.zeros(np.shape(th), dtype=bool)
        for _ in range(V_MAX_DOUBLINGS):
            logv = np.log(vs)
            mid = np.exp(0.5 * (logv[1:] + logv[:-1]))
            vs = np.sort(np.concatenate([vs, mid]))
            g = g_at(vs)
            th_new = _combine(vs, g, spec.m)
            rel = np.abs(th_new - th) / np.maximum(np.abs(th_new), 1e-300)
            th = th_new
            converged = rel < V_RTOL
            if converged.all():
                break
    diverged = ~converged
    slope, sup_small = _small_scale_slope(vs, g, lam.max())
    if slope is not None:
        # smooth fields give slope ~ a; for m < inf a flat integrand already
        # diverges logarithmically, for m = inf the sup must also sit at the
        # grid scale
        if math.isinf(spec.m):
            diverged = diverged | ((slope < -SLOPE_TOL) & sup_small)
        else:
            diverged = diverged | (slope < min(SLOPE_TOL, a / 2.0))
    return low, th, diverged, len(vs)


def thermic_besov_norm(f: GridFunction, spec: BesovSpec, alpha_ref: float = 2.0,
                       n_nodes: int = V_NODES, refine: bool = True) -> BesovNorm:
    low, th, div, k = thermic_norms(f.grid, f.values, spec, alpha_ref, f.is_vector,
                                    n_nodes, refine)
    return BesovNorm(float(low), float(th), bool(div), k)


def besov_norm(f: GridFunction, spec, alpha_ref: float = 2.0) -> float:
    """Norm for a BesovSpec or a Lebesgue spec."""
    if isinstance(spec, Lebesgue):
        return lp_norm(f, spec.ell)
    return thermic_besov_norm(f, spec, alpha_ref).total


def refinement_probe(make_field, grids, spec: BesovSpec, alpha_ref: float = 2.0):
    """Fit log(norm) against log(N) over a grid-refinement sequence.

    ``make_field(grid)`` must return the same object sampled on each grid.
    Returns (slope, norms).
    """
    Ns, norms = [], []
    for g in grids:
        Ns.append(g.N)
        norms.append(thermic_besov_norm(make_field(g), spec, alpha_ref).total)
    slope = np.polyfit(np.log(Ns), np.log(norms), 1)[0]
    return float(slope), norms


# inequality probes ---------------------------------------------------------

def _inv(x):
    return 0.0 if math.isinf(x) else 1.0 / x


def embedding_clauses(spec_from, spec_to, d: int) -> list:
    """Violated clauses for the embedding spec_from -> spec_to, [] if allowed."""
    if isinstance(spec_from, Lebesgue) or isinstance(spec_to, Lebesgue):
        if isinstance(spec_from, Lebesgue) and isinstance(spec_to, Lebesgue):
            return [] if spec_from == spec_to else ["lebesgue-pair"]
        if isinstance(spec_to, Lebesgue):
            # B^g_{l,m} -> B^0_{l,1} -> L^l
            bad = embedding_clauses(spec_from, BesovSpec(0.0, spec_to.ell, 1.0), d)
            return bad
        # L^l -> B^0_{l,inf} -> B^g_{l1,m1}
        return embedding_clauses(BesovSpec(0.0, spec_from.ell, math.inf), spec_to, d)
    bad = []
    if not spec_from.ell <= spec_to.ell:
        bad.append("ell0<=ell1")
    if not spec_from.m <= spec_to.m:
        bad.append("m0<=m1")
    lhs = spec_to.gamma - d * _inv(spec_to.ell)
    rhs = spec_from.gamma - d * _inv(spec_from.ell)
    if not lhs <= rhs + 1e-12:
        bad.append("gamma1-d/ell1<=gamma0-d/ell0")
    return bad


def check_embedding(f: GridFunction, spec_from, spec_to, alpha_ref: float = 2.0) -> float:
    bad = embedding_clauses(spec_from, spec_to, f.grid.d)
    if bad:
        raise HypothesisError(f"embedding hypotheses violated: {bad}", bad)
    return besov_norm(f, spec_to, alpha_ref) / besov_norm(f, spec_from, alpha_ref)


def check_young(f: GridFunction, g: GridFunction, spec: BesovSpec, delta: float,
                split, alpha_ref: float = 2.0) -> float:
    """split = (ell1, m1, ell2, m2); ratio ||f*g||_{B^g_{l,m}} / (||f||_{B^{g-delta}_{l1,m1}} ||g||_{B^delta_{l2,m2}})."""
    ell1, m1, ell2, m2 = split
    bad = []
    if abs(1.0 + _inv(spec.ell) - _inv(ell1) - _inv(ell2)) > 1e-12:
        bad.append("1+1/ell=1/ell1+1/ell2")
    if not _inv(m1) >= max(_inv(spec.m) - _inv(m2), 0.0) - 1e-12:
        bad.append("m-clause")
    if bad:
        raise HypothesisError(f"Young hypotheses violated: {bad}", bad)
    lhs = thermic_besov_norm(convolve(f, g), spec, alpha_ref).total
    nf = thermic_besov_norm(f, BesovSpec(spec.gamma - delta, ell1, m1), alpha_ref).total
    ng = thermic_besov_norm(g, BesovSpec(delta, ell2, m2), alpha_ref).total
    return lhs / (nf * ng)


def check_duality(f: GridFunction, g: GridFunction, spec: BesovSpec,
                  alpha_ref: float = 2.0, slack: float = 1e-2) -> bool:
    pairing = abs(float((f.values * g.values).sum() * f.grid.cell))
    if pairing == 0.0:
        return True
    dual = BesovSpec(-spec.gamma, conj(spec.ell), conj(spec.m))
    bound = thermic_besov_norm(f, spec, alpha_ref).total * thermic_besov_norm(g, dual, alpha_ref).total
    return pairing <= bound * (1.0 + slack)


def check_lift(f: GridFunction, spec: BesovSpec, alpha_ref: float = 2.0) -> float:
    from .grid import gradient
    num = thermic_besov_norm(gradient(f), BesovSpec(spec.gamma - 1.0, spec.ell, spec.m), alpha_ref).total
    return num / thermic_besov_norm(f, spec, alpha_ref).total


def check_product_rule(rule: str, f: GridFunction, g: GridFunction, exponents: dict,
                       alpha_ref: float = 2.0) -> float:
    """Ratio of the two sides of a product rule; the product is the pointwise
    grid product (band-limited at the Nyquist cut).

    PR1: lam >= 0, 1/ell = 1/ell1 + 1/ell2; ||fg||_{B^lam_{ell,inf}} vs ||f||_{B^lam_{ell1,inf}} ||g||_{B^lam_{ell2,1}}.
    PR2: rho > |lam|; ||fg||_{B^lam_{ell,m}} vs ||f||_{B^rho_{inf,inf}} ||g||_{B^lam_{ell,m}}.
    PR3: lam1 < lam2, lam1 <= lam, ell < inf; ||fg||_{B^-lam_{ell,inf}} vs ||f||_{B^-lam1_{inf,inf}} ||g||_{B^lam2_{ell,1}}.
    """
    e = exponents
    inf = math.inf
    bad = []
    if rule == "PR1":
        lam = e["lam"]
        if lam < 0:
            bad.append("lam>=0")
        if abs(_inv(e["ell"]) - _inv(e["ell1"]) - _inv(e["ell2"])) > 1e-12:
            bad.append("1/ell=1/ell1+1/ell2")
        specs = (BesovSpec(lam, e["ell"], inf), BesovSpec(lam, e["ell1"], inf), BesovSpec(lam, e["ell2"], 1.0))
    elif rule == "PR2":
        lam, rho = e["lam"], e["rho"]
        if not rho > abs(lam):
            bad.append("rho>|lam|")
        specs = (BesovSpec(lam, e["ell"], e["m"]), BesovSpec(rho, inf, inf), BesovSpec(lam, e["ell"], e["m"]))
    elif rule == "PR3":
        lam, lam1, lam2 = e["lam"], e["lam1"], e["lam2"]
        if not lam1 < lam2:
            bad.append("lam1<lam2")
        if not lam1 <= lam:
            bad.append("lam1<=lam")
        if min(lam, lam1, lam2) < 0:
            bad.append("nonnegative indices")
        if math.isinf(e["ell"]):
            bad.append("ell<inf")
        specs = (BesovSpec(-lam, e["ell"], inf), BesovSpec(-lam1, inf, inf), BesovSpec(lam2, e["ell"], 1.0))
    else:
        raise ValueError(f"unknown product rule {rule!r}")
    if bad:
        raise HypothesisError(f"{rule} hypotheses violated: {bad}", bad)
    prod = GridFunction(f.grid, f.values * g.values)
    lhs = thermic_besov_norm(prod, specs[0], alpha_ref).total
    return lhs / (thermic_besov_norm(f, specs[1], alpha_ref).total
                  * thermic_besov_norm(g, specs[2], alpha_ref).total)


class RatioBaseline:
    """Calibrate-then-validate protocol for inequalities with unknown constants:
    the max ratio over a calibration batch is frozen, later batches must stay
    within ``tol`` of it."""

    def __init__(self, tol: float = 1e-2):
        self.tol = tol
        self.baseline = None

    def calibrate(self, ratios) -> float:
        r = np.asarray(list(ratios), dtype=float)
        if not np.all(np.isfinite(r)):
            raise ValueError("non-finite ratio in calibration batch")
        self.baseline = float(r.max())
        return self.baseline

    def validate(self, ratios) -> bool:
        if self.baseline is None:
            raise RuntimeError("calibrate first")
        return bool(np.max(list(ratios)) <= self.baseline * (1.0 + self.tol))


# time-singularity integrals ------------------------------------------------

def beta_integral(gamma1: float, gamma2: float, t: float, r: float) -> float:
    """int_t^r (r-s)^-gamma1 (s-t)^-gamma2 ds = B(1-gamma1, 1-gamma2) (r-t)^(1-gamma1-gamma2)."""
    if gamma1 >= 1 or gamma2 >= 1:
        raise ValueError("exponents must be < 1")
    if r < t:
        raise ValueError("need t <= r")
    if r == t:
        return 0.0
    return float(beta_fn(1.0 - gamma1, 1.0 - gamma2) * (r - t) ** (1.0 - gamma1 - gamma2))


def beta_integral_quad(gamma1: float, gamma2: float, t: float, r: float) -> float:
    """Adaptive quadrature of the same integral with the endpoint powers
    passed as algebraic weights."""
    val, _ = integrate.quad(lambda s: 1.0, t, r, weight="alg", wvar=(-gamma2, -gamma1),
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return float(val)


def weight(w: WeightSpec, s: float):
    """(s ^ 1)^lambda1 (s v 1)^lambda2: short-time power lambda1, long-time power lambda2."""
    s = np.asarray(s, dtype=float)
    out = np.minimum(s, 1.0) ** w.lambda1 * np.maximum(s, 1.0) ** w.lambda2
    return float(out) if out.ndim == 0 else out


def beta_integral_lt(a1: float, a2: float, b1: float, b2: float, t: float, s: float):
    """int_t^s w^{-a2}_{-a1}(s-v) w^{-b2}_{-b1}(v-t) dv by quadrature, and the
    comparison weight w^{1-b2-a2}_{1-b1-a1}(s-t).  Returns (integral, bound_weight)."""
    for x in (a1, a2, b1, b2):
        if not 0 <= x < 1:
            raise ValueError("exponents must lie in [0, 1)")
    if s <= t:
        return 0.0, 0.0
    wa, wb = WeightSpec(-a1, -a2), WeightSpec(-b1, -b2)
    pts = sorted({p for p in (t + 1.0, s - 1.0) if t < p < s})
    edges = [t] + pts + [s]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        # within lag 1 of an endpoint the weight is an exact power, which is
        # handed to the algebraic-weight rule instead of the integrand
        left = lo == t and hi - t <= 1.0
        right = hi == s and s - lo <= 1.0

        def g(v, left=left, right=right):
            fa = 1.0 if right else weight(wa, s - v)
            fb = 1.0 if left else weight(wb, v - t)
            return fa * fb

        val, _ = integrate.quad(g, lo, hi, weight="alg",
                                wvar=(-b1 if left else 0.0, -a1 if right else 0.0),
                                limit=200, epsabs=0.0, epsrel=1e-11)
        total += val
    return float(total), weight(WeightSpec(1.0 - b1 - a1, 1.0 - b2 - a2), s - t)


def weighted_path_norm(path, r_exp: float, w: WeightSpec, spec: BesovSpec,
                       alpha_ref: float = 2.0) -> float:
    """sup (r_exp = inf) or discrete L^r_exp over nodes of weight(s - t0) ||path(s)||_B."""
    norms = path.besov_norms(spec, alpha_ref)
    el = path.times - path.t0
    vals = np.where(el > 0, weight(w, np.maximum(el, 1e-300)) * norms, 0.0)
    if math.isinf(r_exp):
        return float(vals.max())
    return float(integrate.trapezoid(vals**r_exp, path.times) ** (1.0 / r_exp))
