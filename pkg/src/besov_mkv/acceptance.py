"""Acceptance suite: thirteen end-to-end checks at desk scale.

Each criterion returns a CriterionResult; a criterion passes when its
numerical test holds and it ran inside its time budget.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import params as P
from .besov import (BesovSpec, RatioBaseline, beta_integral, beta_integral_lt, beta_integral_quad)
from .fokker_planck import (SolverConfig, cauchy_sweep, drift_integrability, gronwall_envelope,
                            limit_duhamel_residual, solve_mollified_fp, uniqueness_probe)
from .grid import Grid, gaussian
from .kernels import KernelSpec, UnderResolvedWarning, kernel_norm_pair, mollify, synthesize_kernel
from .particles import compare_to_fp, pathwise_probe_d1, simulate, young_reconstruction
from .stable_kernel import hk_exponent, stable_density, verify_hk_exponent

INF = math.inf


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: float = INF
    numeric_ok: bool = True

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        short = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items() if not isinstance(v, (list, dict)))
        return f"[{tag}] {self.number:2d} {self.name} ({self.runtime:.1f}s/{self.budget:g}s) {short}"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "numeric_ok": self.numeric_ok, "runtime": self.runtime, "budget": self.budget,
                "detail": _jsonable(self.detail)}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# reference set-up -------------------------------------------------------------

REF = P.ParameterSet(alpha=2.0, d=1, r=INF, p=INF, q=INF, beta=-1.9, beta0=1.45, p0=1.0, q0=1.0,
                     theta=0.44, eta=0.02, delta=0.01)
KERNEL_AMPLITUDE = 5e-4


def reference_problem(N: int = 512, seed: int = 0, L: float = 10.0):
    """(grid, mu, b, (||b||, ||div b||)) of the short-time reference experiment."""
    g = Grid(1, L, N)
    mu = gaussian(g, 0.4)
    b = synthesize_kernel(KernelSpec("random_fourier", REF.beta, seed=seed, div_control=True,
                                     amplitude=KERNEL_AMPLITUDE), g)
    nb = kernel_norm_pair(b, BesovSpec(REF.beta, REF.p, REF.q), REF.r, REF.alpha)
    return g, mu, b, nb


def _mollify(b, eps):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderResolvedWarning)
        return mollify(b, eps)


# criteria ------------------------------------------------------------------------

def c01_conditions():
    eps = 0.1
    thr = 1.5 * (1.0 - eps)
    ex1 = P.ParameterSet(alpha=2.0, d=1, r=INF, p=INF, q=INF, beta=-2.0 + eps, beta0=thr + 0.01,
                         p0=1.0, q0=1.0)
    iv = P.feasible_theta_interval(ex1)
    theta = iv.midpoint() if iv else None
    ok1 = False
    if iv is not None:
        at = ex1.with_(theta=theta)
        ok1 = P.check_C3(at).satisfied and P.check_MS(at).satisfied and theta > 0.5 - eps
    low = ex1.with_(beta0=thr - 0.05 - 0.01)
    ok2 = P.feasible_theta_interval(low) is None
    lt = P.ParameterSet(alpha=2.0 - eps, d=1, r=INF, p=1.0, q=INF, beta=-2.0 + 2 * eps,
                        beta0=2.5 - eps, p0=1.0, q0=1.0)
    iv_lt = P.feasible_theta_interval(lt)
    ok3 = False
    if iv_lt is not None:
        at = lt.with_(theta=iv_lt.midpoint())
        ok3 = all(c.satisfied for c in P.run_checks(at, ["C3", "C3LT", "WS"]))
    ok4 = not P.check_C3LT(ex1.with_(theta=theta or 0.0)).satisfied
    return ok1 and ok2 and ok3 and ok4, {
        "theta": theta, "interval": [iv.lo, iv.hi] if iv else None, "example1": ok1,
        "below_threshold_infeasible": ok2, "longtime_example": ok3, "alpha2_fails_C3LT": ok4}


def _p1_quad(alpha, x):
    """1-d stable density at time 1 by Fourier inversion with a cosine weight."""
    val, _ = integrate.quad(lambda k: math.exp(-k**alpha), 0.0, INF, weight="cos", wvar=abs(x))
    return val / math.pi


def c02_heat_kernel():
    g = Grid(1, 10.0, 256)
    err = 0.0
    for t in np.linspace(0.05, 1.0, 8):
        p = stable_density(2.0, t, g).values
        # periodized Gaussian of variance 2t
        exact = gaussian(g, math.sqrt(2.0 * t)).values
        err = max(err, float(np.abs(p - exact).max()))
    a = 1.5
    ss = 0.0
    for t in (0.25, 0.5, 2.0):
        c = t ** (1.0 / a)
        pt = stable_density(a, t, Grid(1, 10.0, 256)).values
        p1 = stable_density(a, 1.0, Grid(1, 10.0 / c, 256)).values
        ss = max(ss, float(np.abs(pt - p1 / c).max()))
    big = Grid(1, 400.0, 8192)
    p1 = stable_density(a, 1.0, big).values
    idx = big.N // 2 + np.array([0, 3, 10, 25, 60])
    quad = np.array([_p1_quad(a, x) for x in big.axis()[idx]])
    qerr = float(np.abs(p1[idx] - quad).max())
    ok = err <= 1e-6 and ss <= 1e-5 and qerr <= 1e-5
    return ok, {"gauss_err": err, "self_similarity_err": ss, "quad_err": qerr}


SHORT_TRIPLES = [(0.5, INF, INF, 0), (1.0, 1.0, 1.0, 0), (0.5, 2.0, INF, 1), (-0.5, INF, INF, 1)]
LONG_TRIPLES = [(0.5, 1.0, INF, 1), (0.5, INF, INF, 0)]


def c03_hk_exponents():
    # small times so the thermic part dominates the non-decaying low block
    g = Grid(1, 10.0, 4096)
    ts = np.geomspace(5e-4, 5e-3, 6)
    rows, ok = [], True
    for gm, ell, m, a in SHORT_TRIPLES:
        fit = verify_hk_exponent(2.0, BesovSpec(gm, ell, m), a, ts, g)
        ref = hk_exponent(2.0, gm, ell, 1, a)
        rel = abs(fit - ref) / abs(ref)
        ok &= rel <= 0.10
        rows.append([gm, ell, m, a, fit, ref, rel])
    g = Grid(1, 100.0, 1024)
    ts = np.geomspace(8.0, 64.0, 6)
    for gm, ell, m, a in LONG_TRIPLES:
        fit = verify_hk_exponent(2.0, BesovSpec(gm, ell, m), a, ts, g)
        ref = hk_exponent(2.0, gm, ell, 1, a, long_time=True)
        rel = abs(fit - ref) / abs(ref)
        ok &= rel <= 0.15
        rows.append([gm, ell, m, a, fit, ref, rel])
    return bool(ok), {"max_rel": max(r[-1] for r in rows), "rows": rows}


def c04_beta_integrals():
    gen = np.random.default_rng(2024)
    pairs = gen.uniform(-0.5, 0.95, size=(20, 2))
    worst = 0.0
    for g1, g2 in pairs:
        cf = beta_integral(g1, g2, 0.3, 1.7)
        qv = beta_integral_quad(g1, g2, 0.3, 1.7)
        worst = max(worst, abs(cf - qv) / abs(qv))
    quads = gen.uniform(0.0, 0.9, size=(20, 4))
    quads[:, 3] = np.minimum(quads[:, 3], 0.9 - quads[:, 1])  # a2 + b2 < 1
    lags_cal = np.geomspace(1e-3, 1e3, 9)
    lags_val = np.sqrt(lags_cal[1:] * lags_cal[:-1])

    def ratios(lags):
        out = []
        for a1, a2, b1, b2 in quads:
            for lag in lags:
                val, w = beta_integral_lt(a1, a2, b1, b2, 0.0, float(lag))
                out.append(val / w)
        return out

    base = RatioBaseline(tol=1e-2)
    C = base.calibrate(ratios(lags_cal))
    valid = base.validate(ratios(lags_val))
    return worst <= 1e-8 and math.isfinite(C) and valid, {"max_rel_err": worst, "C": C,
                                                           "validated": valid}


def c05_fp_linear():
    g, mu, b, _ = reference_problem()
    cfg = SolverConfig(dt=1 / 128)
    path = solve_mollified_fp(None, mu, 0.0, 1.0, cfg)
    heat_err = max(float(np.abs(path.frames[i] - gaussian(g, math.sqrt(0.16 + 2 * s)).values).max())
                   for i, s in enumerate(path.times))
    tight = SolverConfig(dt=1 / 128, picard_tol=1e-11, epsilon=0.05)
    be = _mollify(b, 0.05)
    full = solve_mollified_fp(be, mu, 0.0, 1.0, tight)
    half = len(full) // 2 - 1  # index of s = 0.5
    first = solve_mollified_fp(be, mu, 0.0, 0.5, tight)
    start = first.frame(len(first) - 1)
    start.values = np.maximum(start.values, 0.0)
    second = solve_mollified_fp(be, start, 0.5, 1.0, tight)
    comp = float(np.abs(second.frames - full.frames[half + 1:]).max())
    mass = max(float(np.abs(p.masses() - 1).max()) for p in (full, first, second))
    ok = heat_err <= 1e-8 and comp <= 1e-7 and mass <= 1e-3
    return ok, {"nodes": len(path), "heat_err": heat_err, "composition_err": comp, "mass_drift": mass}


def c06_gronwall():
    eps = 0.05
    cfg = SolverConfig(dt=1 / 128, epsilon=eps)
    fits = {}
    for N in (512, 1024):
        g, mu, b, nb = reference_problem(N, seed=0)
        path = solve_mollified_fp(_mollify(b, eps), mu, 0.0, 1.0, cfg)
        fits[N] = gronwall_envelope(path, REF, nb, calibration="split")
        if N == 512:
            quad = gronwall_envelope(path, REF, nb, calibration="quadratic")
    C = fits[512].C_cal
    stable = abs(fits[1024].C_cal - C) / C
    seeds = {}
    for seed in (1, 2, 3):
        g, mu, b, nb = reference_problem(512, seed=seed)
        path = solve_mollified_fp(_mollify(b, eps), mu, 0.0, 1.0, cfg)
        fv = gronwall_envelope(path, REF, nb, C_cal=C)
        seeds[seed] = {"holds": fv.holds, "horizon": fv.horizon,
                       "max_ratio": float(np.nanmax(fv.f / fv.envelope))}
    ok = math.isfinite(C) and stable <= 0.10 and all(v["holds"] for v in seeds.values())
    return ok, {"C_cal": C, "C_cal_2N": fits[1024].C_cal, "rel_change": stable,
                "horizon": fits[512].horizon, "quadratic_C_cal": quad.C_cal, "seeds": seeds}


EPS_LADDER = [0.2, 0.1, 0.05, 0.025]


def c07_cauchy():
    g, mu, b, _ = reference_problem()
    tab = cauchy_sweep(b, mu, EPS_LADDER, REF, SolverConfig(dt=1 / 128))
    return tab.decreasing and tab.geometric, {"besov": tab.besov_col, "l1": tab.l1_col,
                                              "decreasing": tab.decreasing, "geometric": tab.geometric}


def c08_limit_equation():
    g, mu, b, _ = reference_problem()
    eps = EPS_LADDER[-1]
    cfg = SolverConfig(dt=1 / 128, epsilon=eps)
    be = _mollify(b, eps)
    path = solve_mollified_fp(be, mu, 0.0, 1.0, cfg)
    moll = float(path.meta["residual"])
    limit = limit_duhamel_residual(path, b)
    uq = uniqueness_probe(be, mu, 0.0, 1.0, cfg)
    ok = limit <= 5 * moll and uq["agree"]
    return ok, {"unmollified_residual": limit, "mollified_residual": moll,
                "ratio": limit / moll if moll > 0 else INF, "uniqueness_distance": uq["distance"],
                "uniqueness_ok": uq["agree"]}


def c09_drift_integrability():
    g, mu, b, _ = reference_problem()
    be = _mollify(b, 0.05)
    r_theta = 8.0
    vals = []
    for dt in (1 / 64, 1 / 128):
        path = solve_mollified_fp(be, mu, 0.0, 1.0, SolverConfig(dt=dt))
        vals.append(drift_integrability(path, be, r_theta, REF.theta, REF.alpha, REF.r, regime="weak"))
    change = abs(vals[1] - vals[0]) / vals[1]
    refused = []
    for bad in (1.5, INF):
        try:
            drift_integrability(path, be, bad, REF.theta, REF.alpha, REF.r, regime="martingale")
            refused.append(False)
        except P.DomainError:
            refused.append(True)
    ok = all(math.isfinite(v) for v in vals) and change < 0.05 and all(refused)
    return ok, {"norm_dt": vals[0], "norm_dt_half": vals[1], "rel_change": change,
                "refused_outside": all(refused)}


def c10_particles(threads=None):
    g, mu, b, _ = reference_problem()
    be = _mollify(b, 0.05)
    path = solve_mollified_fp(be, mu, 0.0, 1.0, SolverConfig(dt=1 / 128, epsilon=0.05))
    traj = simulate(be, mu, 0.0, 1.0, 100_000, 1 / 128, seed=7, record="terminal", threads=threads)
    _, dist = compare_to_fp(traj, path, matched=True)
    return float(dist[-1]) <= 0.05, {"terminal_l1": float(dist[-1]), "wraps": traj.stats["wraps"]}


def c11_young():
    g = Grid(1, 10.0, 1024)
    mu = gaussian(g, 0.4)
    b = synthesize_kernel(KernelSpec("gradient_potential", 0.0, seed=1, amplitude=0.5), g)
    dt = 1 / 256
    path = solve_mollified_fp(b, mu, 0.0, 1.0, SolverConfig(dt=dt))
    traj = simulate(b, mu, 0.0, 1.0, 2000, dt, seed=3)
    steps, gaps = [64, 32, 16, 8, 4, 2, 1], []
    for m in steps:
        gaps.append(young_reconstruction(b, path, traj, np.arange(0, 257, m) * dt).gap)
    rate = float(np.polyfit(np.log(np.array(steps) * dt), np.log(gaps), 1)[0])
    zero = young_reconstruction(None, path, traj, np.arange(0, 257, 8) * dt)
    exact_zero = zero.gap == 0.0 and not np.any(zero.pseudo_increments)
    ok = rate >= 0.5 and gaps[-1] <= 1e-3 and exact_zero
    return ok, {"rate": rate, "terminal_gap": gaps[-1], "zero_kernel_exact": exact_zero, "gaps": gaps}


def c12_pathwise(threads=None):
    g, mu, b, _ = reference_problem()
    ladder = [0.2, 0.1, 0.05]
    gaps = []
    for e1, e2 in zip(ladder[:-1], ladder[1:]):
        _, gp = pathwise_probe_d1(b, mu, (e1, e2), shared_seed=11, N=10_000, threads=threads)
        gaps.append(float(gp[-1]))
    ok = all(y < x for x, y in zip(gaps[:-1], gaps[1:]))
    return ok, {"terminal_gaps": gaps, "first": gaps[0], "last": gaps[-1]}


def c13_determinism(workdir=None):
    import tempfile

    from . import cli

    with tempfile.TemporaryDirectory() as tmp:
        base = workdir or tmp
        cfg = cli.smoke_config()
        a = cli.run_pipeline(cfg, f"{base}/run_a", seed=5, threads=1)
        b = cli.run_pipeline_from_manifest(f"{base}/run_a/manifest.json", f"{base}/run_b", threads=3)
    same = a["outputs"] == b["outputs"]
    return same, {"files": len(a["outputs"]), "identical": same}


CRITERIA = {
    1: ("conditions", c01_conditions, 1.0),
    2: ("heat_kernel_oracle", c02_heat_kernel, 5.0),
    3: ("hk_exponents", c03_hk_exponents, 60.0),
    4: ("beta_integrals", c04_beta_integrals, 5.0),
    5: ("fp_linear", c05_fp_linear, 60.0),
    6: ("gronwall_envelope", c06_gronwall, 600.0),
    7: ("eps_cauchy", c07_cauchy, 900.0),
    8: ("limit_equation", c08_limit_equation, 300.0),
    9: ("drift_integrability", c09_drift_integrability, 120.0),
    10: ("particle_cross_validation", c10_particles, 600.0),
    11: ("young_reconstruction", c11_young, 120.0),
    12: ("pathwise_probe", c12_pathwise, 300.0),
    13: ("determinism", c13_determinism, 60.0),
}

SUITES = {
    "conditions": [1],
    "linear": [2, 3, 4, 5],
    "nonlinear": [6, 7, 8, 9],
    "particles": [10, 11, 12],
    "determinism": [13],
    "quick": [1, 2, 4, 5, 9, 13],
    "all": sorted(CRITERIA),
}


def run_criterion(number: int) -> CriterionResult:
    name, fn, budget = CRITERIA[number]
    t = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t
    ok = bool(ok)
    return CriterionResult(number, name, ok and dt < budget, detail, dt, budget, ok)


def run_suite(suite: str, echo=None) -> list:
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; known: {', '.join(SUITES)}")
    out = []
    for n in SUITES[suite]:
        res = run_criterion(n)
        if echo:
            echo(res.line())
        out.append(res)
    return out
