"""Command-line front end: configs in, JSON/CSV/binary artifacts out.

The commands only orchestrate library calls.  Exit codes: 0 pass,
1 infeasible parameters or failed assertion, 2 numerical error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import params as P
from .besov import BesovSpec, thermic_besov_norm
from .fokker_planck import (ConvergenceError, HorizonTooLongError, MassDriftError, SolverConfig,
                            TailError, cauchy_sweep, gronwall_envelope, node_residuals,
                            regime_exponents, solve_fp_classical, solve_fp_longtime,
                            solve_mollified_fp, weighted_sup_path)
from .grid import Grid, gaussian, load_grid_function, save_grid_function, sidecar_path, uniform
from .kernels import (KernelSpec, UnderResolvedWarning, kernel_norm_pair, load_kernel, mollify,
                      save_kernel, synthesize_kernel)
from .particles import InstabilityError, compare_to_fp, simulate, young_reconstruction
from .stable_kernel import RefinementError, grad_stable_density, stable_density

EXIT_OK, EXIT_FAIL, EXIT_NUMERIC = 0, 1, 2
NUMERIC_ERRORS = (ConvergenceError, HorizonTooLongError, MassDriftError, TailError, InstabilityError,
                  RefinementError, FloatingPointError)
MODES = ("short", "long", "classical")


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage, self.cause = stage, cause


# configuration ------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    params: P.ParameterSet
    grid: Grid
    mu_spec: dict
    kernel_spec: KernelSpec | None
    solver: SolverConfig
    mode: str = "short"
    epsilons: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    t0: float = 0.0
    S: float = 1.0
    particles: dict = field(default_factory=dict)
    outputs: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "ExperimentConfig":
        raw = copy.deepcopy(data)
        if "params_file" in data:
            path = os.path.join(base_dir, data["params_file"])
            if not os.path.exists(path):
                raise FileNotFoundError(f"params_file {path} does not exist")
            ps = P.ParameterSet.from_json(path)
        else:
            ps = P.ParameterSet.from_dict(data["params"])
        g = data.get("grid", {})
        grid = Grid(int(g.get("d", ps.d)), float(g.get("L", 10.0)), int(g.get("N", 512)))
        if grid.d != ps.d:
            raise P.DomainError("grid dimension differs from the parameter set")
        mu_spec = dict(data.get("mu", {"kind": "gaussian", "sigma": 0.4}))
        if mu_spec.get("kind") == "file":
            mu_spec["path"] = os.path.join(base_dir, mu_spec["path"])
            if not os.path.exists(mu_spec["path"]):
                raise FileNotFoundError(f"mu file {mu_spec['path']} does not exist")
        ks = data.get("kernel")
        kernel = None if ks is None else KernelSpec.from_dict(ks)
        solver = SolverConfig(**data.get("solver", {"dt": 1 / 128}))
        mode = data.get("mode", "short")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        return cls(ps, grid, mu_spec, kernel, solver, mode, list(data.get("epsilons", [0.2, 0.1, 0.05])),
                   float(data.get("t0", 0.0)), float(data.get("S", 1.0)), dict(data.get("particles", {})),
                   data.get("outputs"), raw)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), os.path.dirname(os.path.abspath(path)))


def smoke_config() -> dict:
    """Small but complete pipeline configuration (a few seconds)."""
    return {
        "params": P.ParameterSet(alpha=2.0, d=1, r=math.inf, p=math.inf, q=math.inf, beta=-1.9,
                                 beta0=1.45, p0=1.0, q0=1.0, theta=0.44, eta=0.02,
                                 delta=0.01).to_dict(),
        "grid": {"d": 1, "L": 10.0, "N": 256},
        "mu": {"kind": "gaussian", "sigma": 0.4},
        "kernel": KernelSpec("random_fourier", -1.9, seed=0, div_control=True, amplitude=5e-4).to_dict(),
        "solver": {"dt": 1 / 32},
        "mode": "short",
        "epsilons": [0.2, 0.1],
        "S": 1.0,
        "particles": {"N": 70000, "dt": 1 / 32, "stride": 8},
    }


def build_mu(cfg: ExperimentConfig):
    kind = cfg.mu_spec.get("kind", "gaussian")
    if kind == "gaussian":
        return gaussian(cfg.grid, float(cfg.mu_spec.get("sigma", 0.4)), cfg.mu_spec.get("center", 0.0))
    if kind == "uniform":
        return uniform(cfg.grid)
    if kind == "file":
        mu = load_grid_function(cfg.mu_spec["path"])
        if mu.grid != cfg.grid:
            raise ValueError("mu file lives on a different grid")
        return mu
    raise ValueError(f"unknown mu kind {kind!r}")


def _mollified(b, eps):
    if b is None:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderResolvedWarning)
        return mollify(b, eps)


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_csv(path: str, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None or (isinstance(v, float) and math.isnan(v)) else
                    (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# operations ---------------------------------------------------------------------------

REGIME_CHECKS = {"short": ["C3", "MS", "WS"], "long": ["C3", "C3LT", "WS"], "classical": ["C2star", "C2star_strong"]}


def run_check(ps: P.ParameterSet, mode: str = "short") -> dict:
    """All condition sets, the feasible theta interval and derived exponents."""
    names = ["C3", "MS", "WS", "C3LT", "C2star", "C2star_strong", "C0", "C0S", "C1", "C1S", "C2"]
    reports = {r.condition_name: r.to_dict() for r in P.run_checks(ps, names)}
    iv = P.feasible_theta_interval(ps)
    dq = P.gamma_exponents(ps)
    need = REGIME_CHECKS[mode]
    feasible = all(reports[n]["satisfied"] for n in need)
    if mode != "classical":
        feasible = feasible and iv is not None and ps.theta in iv
    out = {"mode": mode, "feasible": feasible, "required": need, "conditions": reports,
           "theta_interval": None if iv is None else {"lo": iv.lo, "hi": iv.hi, "lo_closed": iv.lo_closed,
                                                      "excluded": iv.excluded},
           "derived": dq.to_dict()}
    if dq.gamma is not None:
        out["horizon_denominator"] = P.horizon_denominator(ps, dq.gamma)
    return out


def _solve(cfg: ExperimentConfig, be, mu, eps):
    from dataclasses import replace

    sc = replace(cfg.solver, epsilon=eps)
    if cfg.mode == "long":
        return solve_fp_longtime(be, mu, cfg.t0, cfg.S, sc, cfg.params)[0]
    if cfg.mode == "classical":
        return solve_fp_classical(be, mu, cfg.t0, cfg.S, sc, cfg.params)[0]
    return solve_mollified_fp(be, mu, cfg.t0, cfg.S, sc, cfg.params.alpha)


def fp_rows(path, cfg: ExperimentConfig, b_eps, fit=None):
    ex = regime_exponents(cfg.params, cfg.mode)
    norms = path.besov_norms(ex["spec"])
    wsup = weighted_sup_path(path, ex["weight"], ex["spec"])
    window = int(round(1.0 / cfg.solver.dt)) if cfg.mode == "long" else None
    res = node_residuals(path, b_eps, window=window)
    env = fit.envelope if fit is not None else np.full(len(path), np.nan)
    masses = path.masses()
    return [[float(s), masses[i], norms[i], wsup[i], env[i], res[i]] for i, s in enumerate(path.times)]


FP_HEADER = ["s", "mass", "besov_norm", "weighted_norm", "envelope", "residual"]
SIM_HEADER = ["s", "mean", "var", "l1_to_fp"]


def sim_rows(traj, path=None):
    st = traj.stats
    l1 = {}
    if path is not None:
        ts, ds = compare_to_fp(traj, path)
        l1 = {round(float(t), 12): float(d) for t, d in zip(ts, ds)}
    rows = []
    for k, s in enumerate(st["step_times"]):
        rows.append([float(s), float(st["mean"][k].mean()), float(st["var"][k].mean()),
                     l1.get(round(float(s), 12))])
    return rows


def _resolve_inputs(config: dict, base_dir: str):
    """Absolute paths for referenced files, and their hashes."""
    config = copy.deepcopy(config)
    inputs = {}
    if "params_file" in config:
        config["params_file"] = os.path.abspath(os.path.join(base_dir, config["params_file"]))
        if os.path.exists(config["params_file"]):
            inputs["params_file"] = sha256(config["params_file"])
    mu = config.get("mu") or {}
    if mu.get("kind") == "file":
        mu["path"] = os.path.abspath(os.path.join(base_dir, mu["path"]))
        for f in (mu["path"], os.path.splitext(mu["path"])[0] + ".json"):
            if os.path.exists(f):
                inputs[os.path.basename(f)] = sha256(f)
    return config, inputs


def run_pipeline(config: dict, out_dir: str, seed: int = 0, threads: int | None = None,
                 base_dir: str = ".") -> dict:
    """check -> synthesize -> mollify ladder -> FP per eps -> Cauchy table ->
    envelope -> simulate -> compare.  Writes manifest.json; returns it."""
    os.makedirs(out_dir, exist_ok=True)
    stage = "config"
    config, inputs = _resolve_inputs(config, base_dir)
    try:
        cfg = ExperimentConfig.from_dict(config, base_dir)
        stage = "check"
        chk = run_check(cfg.params, cfg.mode)
        write_json(os.path.join(out_dir, "check.json"), chk)
        if not chk["feasible"]:
            raise P.DomainError("parameters infeasible for mode " + cfg.mode)
        stage = "synthesize"
        mu = build_mu(cfg)
        save_grid_function(os.path.join(out_dir, "mu.bin"), mu, role="initial")
        b = None
        nb = (0.0, 0.0)
        if cfg.kernel_spec is not None:
            b = synthesize_kernel(cfg.kernel_spec, cfg.grid)
            save_kernel(os.path.join(out_dir, "kernel.bin"), b, cfg.kernel_spec)
            ps = cfg.params
            nb = kernel_norm_pair(b, BesovSpec(ps.beta, ps.p, ps.q), ps.r, ps.alpha)
        stage = "solve"
        paths = {}
        for eps in cfg.epsilons:
            be = _mollified(b, eps)
            paths[eps] = (_solve(cfg, be, mu, eps), be)
        stage = "cauchy"
        if b is not None and len(cfg.epsilons) > 1 and cfg.mode != "long":
            tab = cauchy_sweep(b, mu, cfg.epsilons, cfg.params, cfg.solver, cfg.t0, cfg.S, cfg.mode)
            write_json(os.path.join(out_dir, "cauchy.json"), tab.to_dict())
        stage = "envelope"
        fit = None
        eps_last = cfg.epsilons[-1]
        path, be = paths[eps_last]
        if b is not None and cfg.mode != "long":
            fit = gronwall_envelope(path, cfg.params, nb, regime=cfg.mode, calibration="split")
            write_json(os.path.join(out_dir, "envelope.json"), fit.to_dict())
        for eps, (p, bee) in paths.items():
            write_csv(os.path.join(out_dir, f"fp_eps{eps:g}.csv"), FP_HEADER,
                      fp_rows(p, cfg, bee, fit if eps == eps_last else None))
        stage = "simulate"
        pc = cfg.particles
        if pc:
            dt = float(pc.get("dt", cfg.solver.dt))
            stride = int(pc.get("stride", 1))
            traj = simulate(be, mu, cfg.t0, cfg.S, int(pc.get("N", 10000)), dt, seed, cfg.params.alpha,
                            pc.get("bandwidth"), stride, threads)
            stage = "compare"
            write_csv(os.path.join(out_dir, "particles.csv"), SIM_HEADER, sim_rows(traj, path))
    except (P.DomainError, ValueError, FileNotFoundError, *NUMERIC_ERRORS) as exc:
        raise StageError(stage, exc) from exc
    outputs = {}
    for name in sorted(os.listdir(out_dir)):
        if name != "manifest.json":
            outputs[name] = sha256(os.path.join(out_dir, name))
    manifest = {"version": __version__, "seed": seed, "config": config, "inputs": inputs,
                "config_sha256": hashlib.sha256(json.dumps(_clean(config), sort_keys=True).encode()).hexdigest(),
                "outputs": outputs}
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return _clean(manifest)


def run_pipeline_from_manifest(manifest_path: str, out_dir: str, threads: int | None = None) -> dict:
    with open(manifest_path) as fh:
        m = json.load(fh)
    return run_pipeline(m["config"], out_dir, int(m["seed"]), threads,
                        os.path.dirname(os.path.abspath(manifest_path)))




# argument handling ----------------------------------------------------------------------

FILE_EXTS = (".bin", ".csv", ".json")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _target(args, name):
    """Output file: --out is a file when it carries a known extension, else a directory."""
    if args.out.endswith(FILE_EXTS):
        parent = os.path.dirname(args.out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        return args.out
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _ext(text):
    return math.inf if str(text).lower() == "inf" else float(text)


def _grid_arg(text, d=1):
    """'N,L' or 'd,L,N'."""
    parts = text.split(",")
    if len(parts) == 2:
        return Grid(int(d), float(parts[1]), int(parts[0]))
    if len(parts) == 3:
        return Grid(int(parts[0]), float(parts[1]), int(parts[2]))
    raise ValueError("grid must be N,L or d,L,N")


def cmd_check(args):
    src = args.params or args.params_pos
    if src is None:
        raise ValueError("check needs --params")
    ps = P.ParameterSet.from_json(src)
    if args.conditions:
        names = [c.strip() for c in args.conditions.split(",") if c.strip()]
        reps = [r.to_dict() for r in P.run_checks(ps, names)]
        print(json.dumps(_clean(reps), indent=1))
        if args.out_given:
            write_json(_target(args, "check.json"), reps)
        return EXIT_OK if all(r["satisfied"] for r in reps) else EXIT_FAIL
    rep = run_check(ps, args.mode)
    write_json(_target(args, "check.json"), rep)
    iv = rep["theta_interval"]
    print(f"mode={args.mode} feasible={rep['feasible']}")
    for name in rep["required"]:
        c = rep["conditions"][name]
        print(f"  {name}: {'ok' if c['satisfied'] else 'violated ' + ','.join(c['violated_clauses'])}")
    print("  theta interval: " + ("empty" if iv is None else f"({iv['lo']:.6g}, {iv['hi']:.6g})"))
    if "horizon_denominator" in rep:
        print(f"  horizon exponent denominator: {rep['horizon_denominator']:.6g}")
    return EXIT_OK if rep["feasible"] else EXIT_FAIL


def cmd_kernel(args):
    g = _grid_arg(args.grid, args.d)
    f = (grad_stable_density if args.grad else stable_density)(args.alpha, args.t, g)
    path = _target(args, "kernel.bin")
    save_grid_function(path, f, role="stable_density", alpha=args.alpha, grad=bool(args.grad))
    print(path)
    return EXIT_OK


def _load_field(path):
    with open(sidecar_path(path)) as fh:
        meta = json.load(fh)
    if meta.get("role") == "kernel":
        f = load_kernel(path)
        if hasattr(f, "fields"):
            raise ValueError("norms of multi-slab kernels: pass one slab")
        return f
    return load_grid_function(path)


def cmd_norm(args):
    src = args.input or args.input_pos
    if src is None:
        raise ValueError("norm needs --in")
    spec = BesovSpec(args.gamma, _ext(args.ell), _ext(args.m))
    nrm = thermic_besov_norm(_load_field(src), spec, args.alpha_ref)
    rep = nrm.to_dict()
    print(json.dumps(_clean(rep)))
    if args.out_given:
        write_json(_target(args, "norm.json"), {"spec": [spec.gamma, args.ell, args.m], **rep})
    return EXIT_FAIL if nrm.diverged else EXIT_OK


def cmd_synth(args):
    if args.config is not None:
        cfg = ExperimentConfig.from_json(args.config)
        mu = build_mu(cfg)
        save_grid_function(_out(args, "mu.bin"), mu, role="initial")
        if cfg.kernel_spec is not None:
            if args.seed is not None:
                cfg.kernel_spec.seed = args.seed
            save_kernel(_out(args, "kernel.bin"), synthesize_kernel(cfg.kernel_spec, cfg.grid), cfg.kernel_spec)
        return EXIT_OK
    if args.spec is None:
        raise ValueError("synth needs a config or --spec")
    spec = KernelSpec.from_dict(_load_json(args.spec))
    if args.seed is not None:
        spec.seed = args.seed
    g = _grid_arg(args.grid, args.d)
    b = synthesize_kernel(spec, g)
    if args.epsilon:
        b = _mollified(b, args.epsilon)
    path = _target(args, "kernel.bin")
    save_kernel(path, b, spec)
    if args.mu_sigma is not None:
        save_grid_function(os.path.join(os.path.dirname(path), "mu.bin"), gaussian(g, args.mu_sigma),
                           role="initial")
    print(path)
    return EXIT_OK


def _mode_of(args):
    if getattr(args, "longtime", False) and getattr(args, "classical", False):
        raise ValueError("--longtime and --classical are exclusive")
    return "long" if getattr(args, "longtime", False) else "classical" if getattr(args, "classical", False) \
        else "short"


def _setup(args):
    """(cfg, mu, b, eps); mu is None when the parameters are infeasible."""
    if args.config is not None:
        cfg = ExperimentConfig.from_json(args.config)
        mu = build_mu(cfg)
        b = None if cfg.kernel_spec is None else synthesize_kernel(cfg.kernel_spec, cfg.grid)
        eps = args.eps if args.eps is not None else cfg.epsilons[-1]
    else:
        for flag in ("params", "mu"):
            if getattr(args, flag) is None:
                raise ValueError(f"--{flag} is required without a config")
        ps = P.ParameterSet.from_json(args.params)
        mu = load_grid_function(args.mu)
        b = None if args.kernel is None else load_kernel(args.kernel)
        if b is not None and b.grid != mu.grid:
            raise ValueError("kernel and mu live on different grids")
        solver = SolverConfig(dt=args.dt if args.dt is not None else 1 / 128)
        cfg = ExperimentConfig(ps, mu.grid, {"kind": "file", "path": args.mu}, None, solver, _mode_of(args),
                               [args.eps] if args.eps else [], args.t0, args.S,
                               {"N": args.N} if getattr(args, "N", None) else {})
        eps = args.eps
    chk = run_check(cfg.params, cfg.mode)
    if not chk["feasible"]:
        print(f"infeasible parameters for mode {cfg.mode}", file=sys.stderr)
        return cfg, None, None, None
    return cfg, mu, b, eps


def cmd_solve_fp(args):
    cfg, mu, b, eps = _setup(args)
    if mu is None:
        return EXIT_FAIL
    be = _mollified(b, eps) if eps else b
    path = _solve(cfg, be, mu, eps)
    fit = None
    if b is not None and cfg.mode != "long":
        ps = cfg.params
        nb = kernel_norm_pair(b, BesovSpec(ps.beta, ps.p, ps.q), ps.r, ps.alpha)
        fit = gronwall_envelope(path, ps, nb, C_cal=args.C_cal, regime=cfg.mode, calibration="split")
        write_json(_out(args, "envelope.json"), fit.to_dict())
    out = _out(args, "fp.csv")
    write_csv(out, FP_HEADER, fp_rows(path, cfg, be, fit))
    print(out)
    if fit is not None and not fit.holds:
        print("envelope violated within the horizon", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_simulate(args):
    cfg, mu, b, eps = _setup(args)
    if mu is None:
        return EXIT_FAIL
    be = _mollified(b, eps) if eps else b
    pc = cfg.particles
    dt = float(pc.get("dt", cfg.solver.dt))
    seed = args.seed if args.seed is not None else int(pc.get("seed", 0))
    n = args.N if args.N is not None else int(pc.get("N", 10000))
    traj = simulate(be, mu, cfg.t0, cfg.S, n, dt, seed, cfg.params.alpha,
                    pc.get("bandwidth"), int(pc.get("stride", 1)), args.threads)
    path = None
    if args.compare:
        path = _solve(cfg, be, mu, eps)
    out = _out(args, "particles.csv")
    write_csv(out, SIM_HEADER, sim_rows(traj, path))
    print(out)
    return EXIT_OK


def cmd_young(args):
    cfg, mu, b, eps = _setup(args)
    if mu is None:
        return EXIT_FAIL
    be = _mollified(b, eps) if (args.mollify and eps) else b
    path = _solve(cfg, be, mu, eps)
    pc = cfg.particles
    seed = args.seed if args.seed is not None else int(pc.get("seed", 0))
    n_part = args.N if args.N is not None else int(pc.get("N", 2000))
    traj = simulate(be, mu, cfg.t0, cfg.S, n_part, cfg.solver.dt, seed, cfg.params.alpha,
                    threads=args.threads)
    n = len(path)
    rows = []
    m = 1
    while m <= n // 2:
        if n % m == 0:
            part = cfg.t0 + np.arange(0, n + 1, m) * cfg.solver.dt
            rows.append([m * cfg.solver.dt, young_reconstruction(be, path, traj, part).gap])
        m *= 2
    out = _out(args, "young.csv")
    write_csv(out, ["h", "gap"], rows[::-1])
    print(out)
    return EXIT_OK


def cmd_pipeline(args):
    if args.manifest:
        m = run_pipeline_from_manifest(args.manifest, args.out, args.threads)
    else:
        cfg = smoke_config() if args.config is None else _load_json(args.config)
        base = "." if args.config is None else os.path.dirname(os.path.abspath(args.config))
        m = run_pipeline(cfg, args.out, args.seed or 0, args.threads, base)
    if args.expect:
        want = _load_json(args.expect)["outputs"]
        if want != m["outputs"]:
            bad = sorted(k for k in set(want) | set(m["outputs"]) if want.get(k) != m["outputs"].get(k))
            print("outputs differ: " + ", ".join(bad), file=sys.stderr)
            return EXIT_FAIL
    print(os.path.join(args.out, "manifest.json"))
    return EXIT_OK


def cmd_acceptance(args):
    from . import acceptance as A

    if args.list:
        for name, nums in A.SUITES.items():
            print(f"{name}: " + " ".join(str(n) for n in nums))
        for n, (name, _, budget) in A.CRITERIA.items():
            print(f"  {n:2d} {name} (budget {budget:g}s)")
        return EXIT_OK
    if args.suite not in A.SUITES:
        print(f"unknown suite {args.suite!r}; known: {', '.join(A.SUITES)}", file=sys.stderr)
        return EXIT_FAIL
    results = A.run_suite(args.suite, echo=print)
    write_json(_out(args, f"acceptance_{args.suite}.json"), [r.to_dict() for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def _add_out(p):
    # per-command --out; falls back to the global one
    p.add_argument("--out", default=argparse.SUPPRESS)


def _add_problem(p, particles=False):
    p.add_argument("config", nargs="?", default=None, help="experiment config JSON (alternative to flags)")
    p.add_argument("--params", default=None)
    p.add_argument("--kernel", default=None, help="kernel dump; omitted means b = 0")
    p.add_argument("--mu", default=None, help="initial density dump")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--S", type=float, default=1.0)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--eps", "--epsilon", dest="eps", type=float, default=None)
    p.add_argument("--longtime", action="store_true")
    p.add_argument("--classical", action="store_true")
    if particles:
        p.add_argument("--N", type=int, default=None, help="number of particles")
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    _add_out(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="besov-mkv", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out", default="out")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="evaluate condition sets")
    p.add_argument("params_pos", nargs="?", default=None, metavar="params")
    p.add_argument("--params", default=None)
    p.add_argument("--conditions", default=None, help="comma-separated names; emits a report array")
    p.add_argument("--mode", choices=MODES, default="short")
    _add_out(p)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("kernel", help="dump the stable density (or its gradient)")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--grid", default="512,10", help="N,L or d,L,N")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--grad", action="store_true")
    _add_out(p)
    p.set_defaults(fn=cmd_kernel)

    p = sub.add_parser("norm", help="thermic Besov norm of a dumped field")
    p.add_argument("input_pos", nargs="?", default=None, metavar="input")
    p.add_argument("--in", dest="input", default=None)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--ell", default="inf")
    p.add_argument("--m", default="inf")
    p.add_argument("--alpha-ref", type=float, default=2.0)
    _add_out(p)
    p.set_defaults(fn=cmd_norm)

    p = sub.add_parser("synth", help="synthesize a kernel (and optionally mu)")
    p.add_argument("config", nargs="?", default=None)
    p.add_argument("--spec", default=None, help="kernel spec JSON")
    p.add_argument("--grid", default="512,10", help="N,L or d,L,N")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--mu-sigma", type=float, default=None, help="also write a Gaussian mu.bin")
    _add_out(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("solve-fp", help="mollified Fokker-Planck solve, per-node CSV")
    _add_problem(p)
    p.add_argument("--C-cal", dest="C_cal", type=float, default=None)
    p.set_defaults(fn=cmd_solve_fp)

    p = sub.add_parser("simulate", help="interacting particle system, per-node CSV")
    _add_problem(p, particles=True)
    p.add_argument("--no-compare", dest="compare", action="store_false", help="skip the FP comparison")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("young", help="Young-integral reconstruction gap against mesh size")
    _add_problem(p, particles=True)
    p.add_argument("--mollify", action="store_true")
    p.set_defaults(fn=cmd_young)

    p = sub.add_parser("pipeline", help="full experiment with a hashed manifest")
    p.add_argument("config", nargs="?")
    p.add_argument("--manifest", default=None, help="rerun from an existing manifest")
    p.add_argument("--expect", default=None, help="manifest whose output hashes must match")
    _add_out(p)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("acceptance", help="run acceptance criteria")
    p.add_argument("--suite", default="all")
    p.add_argument("--list", action="store_true")
    _add_out(p)
    p.set_defaults(fn=cmd_acceptance)
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.out_given = any(a == "--out" or a.startswith("--out=") for a in argv)
    try:
        return args.fn(args)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        if isinstance(exc.cause, NUMERIC_ERRORS):
            return EXIT_NUMERIC
        return EXIT_FAIL
    except NUMERIC_ERRORS as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (P.DomainError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
