"""Parameter conditions and derived exponents for the well-posedness regimes.

Exponents live on the extended half-line [1, inf]; ``math.inf`` is used for
infinity with the conventions 1/inf = 0 and d/inf = 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

INF = math.inf
EXCLUSION_TOL = 1e-12

PARAM_KEYS = ("alpha", "d", "r", "p", "q", "beta", "beta0", "p0", "q0",
              "theta", "theta_bar", "eta", "delta")


class DomainError(ValueError):
    pass


def inv(p: float) -> float:
    """1/p with 1/inf = 0."""
    return 0.0 if math.isinf(p) else 1.0 / p


def conjugate_exponent(p: float) -> float:
    if not p >= 1:
        raise DomainError(f"exponent must be >= 1, got {p}")
    if p == 1:
        return INF
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def ratio(a: float, b: float) -> float:
    """a/b on extended reals, with inf/inf := 1."""
    if math.isinf(a) and math.isinf(b):
        return 1.0
    if math.isinf(b):
        return 0.0
    if math.isinf(a):
        return INF
    return a / b


def pos(x: float) -> float:
    return x if x > 0 else 0.0


def _parse_ext(v):
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity"):
            return INF
        return float(v)
    return v


@dataclass(frozen=True)
class ParameterSet:
    alpha: float
    d: int
    r: float
    p: float
    q: float
    beta: float
    beta0: float
    p0: float
    q0: float
    theta: float = 0.0
    theta_bar: float = INF
    eta: float = 1e-2
    delta: float = 1e-2
    delta_prime: float = 1e-2
    eps_lt: float = 1e-2  # slack of the long-time chain condition

    def __post_init__(self):
        if not 1 < self.alpha <= 2:
            raise DomainError("alpha must lie in (1, 2]")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError("d must be a positive integer")
        for name in ("r", "p", "q", "p0", "q0"):
            if not getattr(self, name) >= 1:
                raise DomainError(f"{name} must be >= 1")
        if not 0 <= self.theta < 0.5:
            raise DomainError("theta must lie in [0, 1/2)")
        if not (self.eta > 0 and self.delta > 0):
            raise DomainError("eta and delta must be positive")
        if math.isfinite(self.theta_bar) and not self.theta_bar > self.theta:
            raise DomainError("theta_bar must exceed theta")

    def with_(self, **kw) -> "ParameterSet":
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterSet":
        unknown = set(data) - set(PARAM_KEYS) - {"delta_prime", "eps_lt"}
        if unknown:
            raise DomainError(f"unknown parameter keys: {sorted(unknown)}")
        kw = {k: _parse_ext(v) for k, v in data.items()}
        if "d" in kw:
            kw["d"] = int(kw["d"])
        return cls(**kw)

    @classmethod
    def from_json(cls, path: str) -> "ParameterSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = "inf" if isinstance(v, float) and math.isinf(v) else v
        return out


@dataclass
class ConditionReport:
    condition_name: str
    satisfied: bool
    margin: float
    violated_clauses: list = field(default_factory=list)
    slacks: dict = field(default_factory=dict)
    informational: bool = False

    def to_dict(self) -> dict:
        def clean(x):
            return "inf" if isinstance(x, float) and math.isinf(x) else x
        return {"condition_name": self.condition_name, "satisfied": self.satisfied,
                "margin": clean(self.margin), "violated_clauses": list(self.violated_clauses),
                "slacks": {k: clean(v) for k, v in self.slacks.items()},
                "informational": self.informational}


def _report(name, strict: dict, nonstrict: dict | None = None, informational=False):
    """strict: clause -> slack that must be > 0; nonstrict: clause -> bool."""
    nonstrict = nonstrict or {}
    violated = [k for k, s in strict.items() if not s > 0]
    violated += [k for k, ok in nonstrict.items() if not ok]
    margin = min(strict.values()) if strict else INF
    return ConditionReport(name, not violated, margin, violated, dict(strict), informational)


# derived quantities --------------------------------------------------------

def zeta0(ps: ParameterSet) -> float:
    p0c = conjugate_exponent(ps.p0)
    return (ps.beta0 + ps.d * inv(p0c)) * min(1.0, ratio(p0c, ps.p))


def beta0_bar(ps: ParameterSet) -> float:
    p0c = conjugate_exponent(ps.p0)
    return ps.beta0 * min(1.0, ratio(p0c, ps.p))


def _excess(ps: ParameterSet, theta: float | None = None) -> float:
    """-theta - beta + d/p - zeta0, the singular part of the weight exponent."""
    th = ps.theta if theta is None else theta
    return -th - ps.beta + ps.d * inv(ps.p) - zeta0(ps)


# condition sets ------------------------------------------------------------

def check_C3(ps: ParameterSet) -> ConditionReport:
    lower = ps.beta - (-ps.alpha + ps.alpha * inv(ps.r) + pos(_excess(ps)))
    upper = (-1.0 - 2.0 * ps.theta) - ps.beta
    excluded = -ps.theta - beta0_bar(ps) + ps.d * inv(ps.p)
    gap = abs(ps.beta - excluded)
    # the exclusion clause counts as violated within the absolute tolerance
    strict = {"lower": lower, "upper": upper, "exclusion": gap if gap > EXCLUSION_TOL else 0.0}
    return _report("C3", strict)


def check_MS(ps: ParameterSet) -> ConditionReport:
    a = ps.alpha
    # r > a/(a-1)  <=>  1/r < (a-1)/a
    r_clause = (a - 1.0) / a - inv(ps.r)
    theta_clause = 0.5 * (a - a * inv(ps.r) - 1.0) - ps.theta
    return _report("MS", {"r": r_clause, "theta": theta_clause})


def check_WS(ps: ParameterSet) -> ConditionReport:
    a = ps.alpha
    bound = max(a / (a - 1.0), 2.0 * a)
    return _report("WS", {"r": inv(bound) - inv(ps.r)})


def check_C3LT(ps: ParameterSet, eps: float | None = None) -> ConditionReport:
    eps = ps.eps_lt if eps is None else eps
    x = ps.alpha * (1.0 - inv(ps.r))
    upper = min(1.0 + ps.d * inv(ps.p), 2.0 - eps)
    return _report("C3LT", {"lower": x - 1.0}, {"upper": x <= upper})


def check_C2star(ps: ParameterSet) -> ConditionReport:
    c = -ps.beta + ps.d * inv(ps.p) - zeta0(ps)
    lower = ps.beta - (-ps.alpha + ps.alpha * inv(ps.r) + pos(c))
    return _report("C2star", {"lower": lower})


def check_C2star_strong(ps: ParameterSet) -> ConditionReport:
    a, ar = ps.alpha, ps.alpha * inv(ps.r)
    c = -ps.beta + ps.d * inv(ps.p) - zeta0(ps)
    first = ps.beta - (1.0 - 1.5 * a + ar + c)
    second = ps.beta - (-a + ar + pos(c))
    return _report("C2star_strong", {"first": first, "second": second})


# conditions of earlier works, reported for comparison only
def _prior(name, bound):
    def check(ps: ParameterSet) -> ConditionReport:
        return _report(name, {"lower": bound(ps)}, informational=True)
    check.__name__ = "check_" + name
    return check


def _c(ps):
    return -ps.beta + ps.d * inv(ps.p) - zeta0(ps)


check_C0 = _prior("C0", lambda ps: ps.beta - (1 - ps.alpha + ps.alpha * inv(ps.r) + ps.d * inv(ps.p)))
check_C0S = _prior("C0S", lambda ps: ps.beta - (2 - 1.5 * ps.alpha + ps.alpha * inv(ps.r) + ps.d * inv(ps.p)))
check_C1 = _prior("C1", lambda ps: ps.beta - (1 - ps.alpha + ps.alpha * inv(ps.r) + pos(_c(ps))))
check_C1S = _prior("C1S", lambda ps: ps.beta - max(2 - 1.5 * ps.alpha + ps.alpha * inv(ps.r) + _c(ps),
                                                   1 - ps.alpha + ps.alpha * inv(ps.r) + pos(_c(ps))))
check_C2 = _prior("C2", lambda ps: -(1 - ps.alpha + ps.alpha * inv(ps.r)
                                     + pos(1 + ps.d * inv(ps.p) - zeta0(ps))))

CHECKS = {
    "C3": check_C3, "MS": check_MS, "WS": check_WS, "C3LT": check_C3LT,
    "C2star": check_C2star, "C2star_strong": check_C2star_strong,
    "C0": check_C0, "C0S": check_C0S, "C1": check_C1, "C1S": check_C1S, "C2": check_C2,
}


def run_checks(ps: ParameterSet, names) -> list:
    out = []
    for n in names:
        if n not in CHECKS:
            raise DomainError(f"unknown condition set {n!r}; known: {sorted(CHECKS)}")
        out.append(CHECKS[n](ps))
    return out


# theta interval --------------------------------------------------------------

@dataclass
class ThetaInterval:
    lo: float
    hi: float
    lo_closed: bool
    excluded: list = field(default_factory=list)

    def __contains__(self, theta: float) -> bool:
        if theta < self.lo or (theta == self.lo and not self.lo_closed):
            return False
        if not theta < self.hi:
            return False
        return all(abs(theta - e) > EXCLUSION_TOL for e in self.excluded)

    def midpoint(self) -> float:
        mid = 0.5 * (self.lo + self.hi)
        for e in self.excluded:
            if abs(mid - e) <= EXCLUSION_TOL:
                mid = 0.5 * (mid + self.hi)
        return mid

    @property
    def width(self) -> float:
        return self.hi - self.lo


def feasible_theta_interval(ps: ParameterSet) -> ThetaInterval | None:
    """Set of theta in [0, 1/2) for which both C3 and MS hold (theta of ``ps`` ignored).

    C3 lower clause: (c - theta)_+ < m with c = -beta + d/p - zeta0 and
    m = beta + alpha - alpha/r, i.e. theta > c - m provided m > 0.
    """
    a = ps.alpha
    if not (a - 1.0) / a - inv(ps.r) > 0:
        return None
    m = ps.beta + a - a * inv(ps.r)
    if not m > 0:
        return None
    c = -ps.beta + ps.d * inv(ps.p) - zeta0(ps)
    lo_strict = c - m
    hi = min(0.5, (-1.0 - ps.beta) / 2.0, 0.5 * (a - a * inv(ps.r) - 1.0))
    if lo_strict < 0:
        lo, lo_closed = 0.0, True
    else:
        lo, lo_closed = lo_strict, False
    if not (lo < hi):
        return None
    excluded = -ps.beta - beta0_bar(ps) + ps.d * inv(ps.p)
    ex = [excluded] if (lo <= excluded < hi) else []
    return ThetaInterval(lo, hi, lo_closed, ex)


# exponents -------------------------------------------------------------------

@dataclass
class DerivedQuantities:
    zeta0: float
    beta0_bar: float
    p0_bar: float
    q0_bar: float
    gamma0: float | None = None
    gamma: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None
    Gamma_cl: float | None = None
    gamma_star: float | None = None
    r_theta_range: tuple | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}


def gamma_exponents(ps: ParameterSet) -> DerivedQuantities:
    a = ps.alpha
    p_c = conjugate_exponent(ps.p)
    dq = DerivedQuantities(
        zeta0=zeta0(ps), beta0_bar=beta0_bar(ps),
        p0_bar=min(ps.p0, p_c),
        q0_bar=max(ps.q0, ps.q0 * ratio(ps.p, conjugate_exponent(ps.p0))),
    )
    c3 = check_C3(ps)
    if c3.satisfied:
        dq.gamma0 = pos(_excess(ps)) / a
        dq.gamma = ps.eta / a + dq.gamma0
        dq.gamma1 = dq.gamma
        bound = 1.0 - inv(ps.r) + ps.beta / a
        if not dq.gamma < bound:
            raise AssertionError(f"gamma={dq.gamma} must stay below 1/r' + beta/alpha = {bound}")
    else:
        dq.flags.append("C3 violated: " + ",".join(c3.violated_clauses))

    dq.gamma2 = 1.0 - inv(ps.r) - 1.0 / a
    if not check_C3LT(ps).satisfied:
        dq.flags.append("C3LT violated")

    if check_C2star(ps).satisfied:
        c = -ps.beta + ps.d * inv(ps.p) - dq.zeta0
        G = ps.eta * (a - 1.0 + ps.beta - a * inv(ps.r) - ps.d * inv(ps.p) + dq.zeta0)
        dq.Gamma_cl = G
        dq.gamma_star = (c + (1.0 + ps.eta) / (2.0 * ps.eta) * G) / a
        if not 0 < G < 1:
            dq.flags.append("Gamma outside (0,1)")
    else:
        dq.flags.append("C2star violated")

    ms, ws = check_MS(ps), check_WS(ps)
    if ws.satisfied:
        dq.r_theta_range = (2.0 * a, ps.r)
    elif ms.slacks["r"] > 0:
        dq.r_theta_range = (a, ps.r)
    return dq


def horizon_denominator(ps: ParameterSet, gamma: float) -> float:
    """gamma - 1 + 1/r - (beta - delta + eta)/alpha; must be negative."""
    return gamma - 1.0 + inv(ps.r) - (ps.beta - ps.delta + ps.eta) / ps.alpha


def time_horizon(C0: float, Cb: float, exponent_denom: float) -> float:
    if not exponent_denom < 0:
        raise DomainError("horizon exponent denominator must be negative")
    if not (C0 > 0 and Cb > 0):
        raise DomainError("C0 and Cb must be positive")
    return (4.0 * C0 * Cb) ** (1.0 / exponent_denom)


def time_horizon_longtime(C0: float, Cb: float, exponent_denom: float,
                          mu_norm: float, C: float, T: float) -> float:
    """Long-time horizon: the short-time increment if the initial norm is above
    the gate 1/(4 C Cb), otherwise the full length T."""
    gate = smallness_gate(C, Cb)
    if mu_norm >= gate:
        return time_horizon(C0, Cb, exponent_denom)
    return T


def smallness_gate(C: float, Cb: float) -> float:
    return INF if C * Cb == 0 else 1.0 / (4.0 * C * Cb)


def gronwall_roots(c_mu: float, c_b: float):
    if c_mu < 0 or c_b < 0:
        raise DomainError("coefficients must be nonnegative")
    if c_b == 0:
        return (c_mu, INF)
    disc = 1.0 - 4.0 * c_mu * c_b
    if not disc > 0:
        return None
    s = math.sqrt(disc)
    r_plus = (1.0 + s) / (2.0 * c_b)
    # product of the roots is c_mu/c_b; avoids cancellation in (1 - s)
    r_minus = (c_mu / c_b) / r_plus
    return (r_minus, r_plus)
