import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import beta as beta_fn

from besov_mkv.besov import (BesovSpec, HypothesisError, Lebesgue, RatioBaseline, WeightSpec,
                             beta_integral, beta_integral_lt, beta_integral_quad, check_duality,
                             check_embedding, check_lift, check_product_rule, check_young, lp_norm,
                             thermic_besov_norm, v_grid, weight)
from besov_mkv.grid import Grid, GridFunction, convolve, dirac, gaussian
from besov_mkv.stable_kernel import stable_density

INF = math.inf


def band_limited(g, rng, kmax=8):
    x = g.axis()
    out = np.zeros(g.N)
    for k in range(1, kmax + 1):
        w = math.pi * k / g.L
        out += rng.standard_normal() * np.cos(w * x) + rng.standard_normal() * np.sin(w * x)
    return GridFunction(g, out)


# L^ell ------------------------------------------------------------------------------

def test_lp_indicator():
    g = Grid(1, 1.0, 256)
    f = GridFunction(g, (np.abs(g.axis()) < 0.5).astype(float))
    assert lp_norm(f, 1) == pytest.approx(1.0, abs=g.h)


def test_lp_gaussian_l2():
    g = Grid(1, 20.0, 1024)
    assert lp_norm(gaussian(g, 1.0), 2) == pytest.approx((4 * math.pi) ** -0.25, abs=1e-6)


def test_lp_sup_of_heat_kernel():
    g = Grid(1, 10.0, 512)
    for t in (0.1, 0.5, 1.0):
        assert lp_norm(stable_density(2.0, t, g), INF) == pytest.approx((4 * math.pi * t) ** -0.5, abs=1e-6)


# thermic norm against closed forms ---------------------------------------------------

def test_single_mode_closed_form():
    # cos(kx) is an eigenfunction: d_v^n p_v * f = (-k^a)^n e^{-v k^a} f
    g = Grid(1, 10.0, 512)
    k = 3 * math.pi / 10
    f = GridFunction(g, np.cos(k * g.axis()))
    spec = BesovSpec(0.5, INF, INF)
    n, a = 1, 1 - 0.25
    vs = v_grid()
    want = (vs**a * k**2 * np.exp(-vs * k**2)).max()
    nrm = thermic_besov_norm(f, spec, 2.0)
    assert nrm.low_freq == pytest.approx(1.0, abs=1e-12)
    assert nrm.thermic == pytest.approx(want, rel=1e-10)
    assert spec.n_order(2.0) == n


def test_gaussian_sup_closed_form():
    # f = N(0, s^2) = heat kernel at tau0 = s^2/2; ||Delta p_tau||_inf = (4 pi)^-1/2 tau^-3/2 / 2
    g = Grid(1, 20.0, 2048)
    s = 0.5
    tau0 = s * s / 2
    f = gaussian(g, s)
    vs = v_grid()
    want = (vs**0.75 * 0.5 * (4 * math.pi) ** -0.5 * (vs + tau0) ** -1.5).max()
    assert thermic_besov_norm(f, BesovSpec(0.5, INF, INF), 2.0).thermic == pytest.approx(want, rel=1e-8)


def test_gaussian_l1_m1_against_quadrature():
    # ||Delta p_tau||_1 = 4 e^{-1/2} / (2 tau sqrt(2 pi)) for variance 2 tau
    g = Grid(1, 20.0, 2048)
    s = 0.5
    tau0 = s * s / 2

    def l1(v):
        var = 2 * (v + tau0)
        return 4 * math.exp(-0.5) / (var * math.sqrt(2 * math.pi))

    gamma = 0.3
    a = 1 - gamma / 2
    want, _ = integrate.quad(lambda v: v ** (a - 1) * l1(v), 0, 1, epsabs=0, epsrel=1e-10, limit=200)
    got = thermic_besov_norm(gaussian(g, s), BesovSpec(gamma, 1.0, 1.0), 2.0)
    assert not got.diverged
    assert got.thermic == pytest.approx(want, rel=1e-2)


def test_dirac_norm_stable_under_refinement():
    vals = []
    for N in (256, 512, 1024):
        g = Grid(1, 10.0, N)
        vals.append(thermic_besov_norm(dirac(g), BesovSpec(-0.5, 2.0, INF), 2.0).total)
    assert max(vals) / min(vals) < 1.2


def test_dirac_positive_regularity_diverges():
    for N in (256, 1024):
        nrm = thermic_besov_norm(dirac(Grid(1, 10.0, N)), BesovSpec(0.5, 1.0, 1.0), 2.0)
        assert nrm.diverged


def test_stable_density_norm_finite():
    g = Grid(1, 10.0, 512)
    p = stable_density(1.5, 1.0, g)
    for spec in (BesovSpec(0.5, 1, 1), BesovSpec(-0.5, INF, INF), BesovSpec(1.5, 2, INF)):
        nrm = thermic_besov_norm(p, spec, 1.5)
        assert math.isfinite(nrm.total) and not nrm.diverged


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3), seed=st.integers(0, 100))
def test_homogeneity(c, seed):
    g = Grid(1, 10.0, 256)
    f = band_limited(g, np.random.default_rng(seed))
    spec = BesovSpec(0.3, 2.0, 2.0)
    a = thermic_besov_norm(f, spec).total
    b = thermic_besov_norm(f * c, spec).total
    assert b == pytest.approx(abs(c) * a, rel=1e-10)


def test_monotone_in_gamma():
    g = Grid(1, 10.0, 256)
    rng = np.random.default_rng(1)
    gammas = np.linspace(-1.5, 1.5, 7)
    for _ in range(20):
        f = band_limited(g, rng, kmax=30)
        for ell, m in ((INF, INF), (1.0, 2.0)):
            # fixed derivative order so that only the weight exponent moves
            ns = [thermic_besov_norm(f, BesovSpec(gm, ell, m), 2.0).total for gm in gammas if gm < 2.0]
            assert all(b >= a * (1 - 1e-9) for a, b in zip(ns, ns[1:]))


# embeddings and inequalities --------------------------------------------------------

def test_embedding_chain_baseline():
    g = Grid(1, 10.0, 256)
    rng = np.random.default_rng(0)
    for ell in (1.0, 2.0, INF):
        chain = (BesovSpec(0.0, ell, 1.0), Lebesgue(ell), BesovSpec(0.0, ell, INF))
        ratios = [[check_embedding(f, a, b) for a, b in zip(chain, chain[1:])]
                  for f in (band_limited(g, rng, 20) for _ in range(20))]
        ratios = np.array(ratios)
        base = RatioBaseline()
        base.calibrate(ratios[:10].max(axis=1))
        assert base.validate(ratios[10:].max(axis=1))


def test_embedding_identity_and_borderline():
    g = Grid(1, 10.0, 256)
    f = band_limited(g, np.random.default_rng(2))
    s = BesovSpec(0.2, 2.0, 2.0)
    assert check_embedding(f, s, s) == pytest.approx(1.0)
    # gamma1 - d/ell1 = gamma0 - d/ell0
    assert math.isfinite(check_embedding(f, BesovSpec(0.5, 1.0, 1.0), BesovSpec(-0.5, INF, 1.0)))
    with pytest.raises(HypothesisError) as exc:
        check_embedding(f, BesovSpec(0.0, 2.0, 2.0), BesovSpec(0.5, 2.0, 2.0))
    assert exc.value.clauses


def test_convolution_of_gaussians():
    g = Grid(1, 20.0, 1024)
    h = convolve(gaussian(g, 0.6), gaussian(g, 0.8))
    assert np.abs(h.values - gaussian(g, 1.0).values).max() < 1e-8


def test_young_dirac_identity_and_refusal():
    g = Grid(1, 10.0, 256)
    f = gaussian(g, 0.7)
    d = dirac(g)
    assert np.allclose(convolve(f, d).values, f.values, atol=1e-12)
    r = check_young(f, d, BesovSpec(0.2, 1.0, INF), delta=-0.5, split=(1.0, INF, 1.0, INF))
    assert math.isfinite(r) and r > 0
    with pytest.raises(HypothesisError):
        check_young(f, d, BesovSpec(0.2, 1.0, INF), delta=0.1, split=(2.0, INF, 2.0, INF))


def test_young_random_baseline():
    g = Grid(1, 10.0, 256)
    rng = np.random.default_rng(5)
    spec, split = BesovSpec(0.0, 2.0, INF), (2.0, INF, 1.0, INF)

    def batch():
        out = []
        for _ in range(10):
            f = band_limited(g, rng, 16)
            h = gaussian(g, rng.uniform(0.2, 1.0))
            out.append(check_young(f, h, spec, 0.3, split))
        return out

    base = RatioBaseline(tol=0.5)
    base.calibrate(batch())
    assert base.validate(batch())


def test_duality():
    g = Grid(1, 10.0, 256)
    f = gaussian(g, 0.5)
    assert check_duality(f, f, BesovSpec(0.0, 2.0, 2.0))
    assert check_duality(f, GridFunction(g, np.zeros(g.N)), BesovSpec(0.3, 2.0, 2.0))
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = band_limited(g, rng, 20), band_limited(g, rng, 20)
        assert check_duality(a, b, BesovSpec(rng.uniform(-1, 1), 2.0, 2.0))


def test_lift():
    g = Grid(1, 10.0, 256)
    assert check_lift(GridFunction(g, np.ones(g.N)), BesovSpec(0.5, 2.0, 2.0)) == pytest.approx(0.0, abs=1e-12)
    ratios = []
    for k in (4, 8, 16, 32):
        f = GridFunction(g, np.sin(math.pi * k / g.L * g.axis()))
        ratios.append(check_lift(f, BesovSpec(0.5, INF, INF)))
    assert max(ratios) / min(ratios) < 3.0


def test_product_rules():
    g = Grid(1, 10.0, 256)
    f = band_limited(g, np.random.default_rng(4), 20)
    one = GridFunction(g, np.ones(g.N))
    r = check_product_rule("PR3", f, one, {"lam": 0.5, "lam1": 0.3, "lam2": 0.6, "ell": 2.0})
    assert math.isfinite(r) and r > 0
    a, b = gaussian(g, 0.5), gaussian(g, 0.8)
    r1 = check_product_rule("PR1", a, b, {"lam": 0.5, "ell": 1.0, "ell1": 2.0, "ell2": 2.0})
    assert r1 < 10.0
    with pytest.raises(HypothesisError):
        check_product_rule("PR3", f, one, {"lam": 0.5, "lam1": 0.7, "lam2": 0.6, "ell": 2.0})
    with pytest.raises(HypothesisError):
        check_product_rule("PR2", f, one, {"lam": 0.5, "rho": 0.4, "ell": 2.0, "m": 2.0})


# time integrals and weights ---------------------------------------------------------

def test_beta_integral_examples():
    assert beta_integral(0.0, 0.0, 0.3, 1.7) == pytest.approx(1.4, rel=1e-15)
    assert beta_integral(0.5, 0.5, 0.0, 1.0) == pytest.approx(math.pi, abs=1e-8)
    assert beta_integral_quad(0.5, 0.5, 0.0, 1.0) == pytest.approx(math.pi, abs=1e-8)
    with pytest.raises(ValueError):
        beta_integral(1.0, 0.2, 0.0, 1.0)


def _substituted_quad(g1, g2, t, r):
    # oracle: split at the midpoint, remove each singularity (g > 0) by v = u^(1/(1-g));
    # a vanishing endpoint power (g <= 0) is integrated directly
    m = 0.5 * (t + r)
    if g2 > 0:
        k2 = 1 / (1 - g2)
        left, _ = integrate.quad(lambda u: k2 * (r - t - u**k2) ** -g1, 0, (m - t) ** (1 - g2), epsabs=0, epsrel=1e-13, limit=200)
    else:
        left, _ = integrate.quad(lambda v: (r - v) ** -g1 * (v - t) ** -g2, t, m, epsabs=0, epsrel=1e-13, limit=200)
    if g1 > 0:
        k1 = 1 / (1 - g1)
        right, _ = integrate.quad(lambda u: k1 * (r - t - u**k1) ** -g2, 0, (r - m) ** (1 - g1), epsabs=0, epsrel=1e-13, limit=200)
    else:
        right, _ = integrate.quad(lambda v: (r - v) ** -g1 * (v - t) ** -g2, m, r, epsabs=0, epsrel=1e-13, limit=200)
    return left + right


@settings(max_examples=40, deadline=None)
@given(g1=st.floats(-0.9, 0.95), g2=st.floats(-0.9, 0.95), t=st.floats(0, 2), span=st.floats(0.05, 5))
def test_beta_integral_closed_form_vs_quadrature(g1, g2, t, span):
    r = t + span
    exact = beta_integral(g1, g2, t, r)
    assert beta_integral(g2, g1, t, r) == pytest.approx(exact, rel=1e-12)
    assert _substituted_quad(g1, g2, t, r) == pytest.approx(exact, rel=1e-7)


def test_weight_examples():
    assert weight(WeightSpec(0.3, -0.2), 4.0) == pytest.approx(0.7579, abs=1e-4)
    assert weight(WeightSpec(0.0, 0.0), 3.3) == 1.0
    assert weight(WeightSpec(0.7, -1.3), 1.0) == 1.0


@settings(max_examples=100, deadline=None)
@given(l1=st.floats(-2, 2), l2=st.floats(-2, 2), s=st.floats(1e-4, 1e4))
def test_weight_times_negated_is_one(l1, l2, s):
    w = WeightSpec(l1, l2)
    assert weight(w, s) * weight(w.negate(), s) == pytest.approx(1.0, rel=1e-12)


def test_beta_lt_quadrature_and_bound():
    val, bnd = beta_integral_lt(0.3, 0.3, 0.3, 0.3, 0.0, 4.0)
    # oracle: plain quadrature after removing both endpoint singularities by substitution
    wa = lambda u: min(u, 1) ** -0.3 * max(u, 1) ** -0.3  # noqa: E731
    k = 1 / 0.7
    f = lambda u: k * u ** (k - 1) * wa(u**k) * wa(4 - u**k)  # noqa: E731
    ref = 2 * integrate.quad(f, 0, 2 ** 0.7, epsabs=0, epsrel=1e-12, limit=200, points=[1.0])[0]
    assert val == pytest.approx(ref, rel=1e-8)
    assert bnd == pytest.approx(weight(WeightSpec(0.4, 0.4), 4.0))
    base = RatioBaseline()
    base.calibrate([val / bnd])
    assert base.validate([val / bnd])


def test_beta_lt_ratio_bounded_over_lags():
    rng = np.random.default_rng(0)
    lags = np.geomspace(1e-3, 1e3, 9)
    for _ in range(5):
        a1, a2, b1, b2 = rng.uniform(0, 0.45, 4)
        rs = [beta_integral_lt(a1, a2, b1, b2, 0.0, s)[0] / beta_integral_lt(a1, a2, b1, b2, 0.0, s)[1]
              for s in lags]
        assert max(rs) / min(rs) < 20
    with pytest.raises(ValueError):
        beta_integral_lt(1.0, 0.1, 0.1, 0.1, 0.0, 1.0)


def test_beta_function_identity():
    assert beta_integral(0.2, 0.4, 0.0, 2.0) == pytest.approx(beta_fn(0.8, 0.6) * 2.0 ** 0.4)


@pytest.mark.parametrize("k", [0.1, 0.2, 0.5])
def test_low_band_thermic_part_follows_symbol(k):
    # a mode below the low-pass cut still has thermic part k^a e^{-k^a} (max at v=1),
    # so the thermic part is small like k^alpha, not negligible
    g = Grid(1, 10 * math.pi, 512)
    f = GridFunction(g, np.cos(k * g.axis()))
    nrm = thermic_besov_norm(f, BesovSpec(-1.9, INF, INF), 2.0)
    assert nrm.low_freq == pytest.approx(1.0, abs=1e-12)
    assert nrm.thermic == pytest.approx(k**2 * math.exp(-k**2), rel=1e-6)
