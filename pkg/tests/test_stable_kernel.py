import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from besov_mkv.besov import BesovSpec
from besov_mkv.grid import (Grid, GridFunction, convolve, gaussian, load_grid_function,
                            save_grid_function)
from besov_mkv.stable_kernel import (RefinementError, grad_stable_density, hk_exponent,
                                     sample_stable_increment, stable_density, t_min, tail_bound,
                                     verify_hk_exponent)

G = Grid(1, 10.0, 256)


def heat(x, t):
    return np.exp(-x * x / (4 * t)) / np.sqrt(4 * np.pi * t)


# grid ---------------------------------------------------------------------------

def test_grid_layout():
    g = Grid(1, 10.0, 256)
    assert g.h == pytest.approx(20 / 256)
    assert g.axis()[128] == 0.0 and g.axis()[0] == -10.0
    with pytest.raises(ValueError):
        Grid(1, 10.0, 100)
    with pytest.raises(ValueError):
        Grid(3, 10.0, 64)


def test_dump_roundtrip(tmp_path):
    g = Grid(2, 5.0, 32)
    f = GridFunction(g, np.random.default_rng(0).standard_normal((2, 32, 32)), time=0.5)
    p = str(tmp_path / "f.bin")
    save_grid_function(p, f)
    meta = json.loads((tmp_path / "f.json").read_text())
    assert {k: meta[k] for k in ("d", "L", "N", "components", "time")} == \
        {"d": 2, "L": 5.0, "N": 32, "components": 2, "time": 0.5}
    raw = np.fromfile(p, dtype="<f8")
    assert np.array_equal(raw, f.values.ravel())
    back = load_grid_function(p)
    assert np.array_equal(back.values, f.values)


# densities -------------------------------------------------------------------------

def test_gaussian_case():
    p = stable_density(2.0, 0.25, G)
    assert np.abs(p.values - heat(G.axis(), 0.25)).max() < 1e-8


@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8, 2.0])
@pytest.mark.parametrize("t", [0.1, 1.0])
def test_unit_mass(alpha, t):
    assert stable_density(alpha, t, Grid(1, 10.0, 2048)).mass() == pytest.approx(1.0, abs=1e-8)


def test_against_scipy_levy_stable():
    # independent oracle: scipy's integral representation, scale t^(1/alpha)
    g = Grid(1, 400.0, 8192)
    alpha, t = 1.5, 0.5
    p = stable_density(alpha, t, g)
    idx = np.searchsorted(g.axis(), np.linspace(-3, 3, 13))
    ref = stats.levy_stable.pdf(g.axis()[idx], alpha, 0.0, scale=t ** (1 / alpha))
    # periodization error at L=400 is about C t L^-alpha / L
    assert np.abs(p.values[idx] - ref).max() < 2e-5


def test_self_similarity():
    alpha, t, c = 1.5, 0.25, 2.0
    g1 = Grid(1, 40.0, 4096)
    g2 = Grid(1, 40.0 * c ** (1 / alpha), 4096)
    # on g2 the node x_j equals c^(1/alpha) times the node of g1
    p_ct = stable_density(alpha, c * t, g2).values
    p_t = stable_density(alpha, t, g1).values
    assert np.abs(p_ct - c ** (-1 / alpha) * p_t).max() < 1e-6


def test_time_errors():
    with pytest.raises(ValueError):
        stable_density(1.5, 0.0, G)
    with pytest.raises(RefinementError) as exc:
        stable_density(2.0, 0.5 * t_min(2.0, G), G)
    assert exc.value.suggested_N > G.N
    stable_density(2.0, 0.5 * t_min(2.0, G), Grid(1, 10.0, exc.value.suggested_N))


def test_gradient_gaussian():
    t = 0.25
    gp = grad_stable_density(2.0, t, G).values[0]
    x = G.axis()
    assert np.abs(gp - (-x / (2 * t)) * heat(x, t)).max() < 1e-7
    assert abs(gp[G.N // 2]) < 1e-14
    assert abs(gp.sum() * G.h) < 1e-12


def test_gradient_vs_finite_difference():
    g = Grid(1, 10.0, 1024)
    p = stable_density(1.5, 0.5, g).values
    gp = grad_stable_density(1.5, 0.5, g).values[0]
    fd = (np.roll(p, -1) - np.roll(p, 1)) / (2 * g.h)
    g2 = Grid(1, 10.0, 2048)
    p2 = stable_density(1.5, 0.5, g2).values
    fd2 = ((np.roll(p2, -1) - np.roll(p2, 1)) / (2 * g2.h))[::2]
    e1, e2 = np.abs(fd - gp).max(), np.abs(fd2 - gp).max()
    assert e1 / e2 == pytest.approx(4.0, rel=0.1)


def test_gradient_2d_odd():
    g = Grid(2, 10.0, 64)
    gp = grad_stable_density(1.7, 1.0, g).values
    assert gp.shape == (2, 64, 64)
    # component 0 is odd in the first axis about the origin
    c = 32
    assert np.allclose(gp[0, c + 5, :], -gp[0, c - 5, :], atol=1e-14)


@pytest.mark.parametrize("alpha,N", [(2.0, 256), (1.7, 1024), (1.3, 4096)])
def test_chapman_kolmogorov(alpha, N):
    # N large enough that t = 0.05 is resolvable for this alpha
    g = Grid(1, 10.0, N)
    for t, s in ((0.05, 0.05), (0.1, 0.4), (0.5, 1.0)):
        lhs = stable_density(alpha, t + s, g)
        rhs = convolve(stable_density(alpha, t, g), stable_density(alpha, s, g))
        assert np.abs(lhs.values - rhs.values).max() <= 1e-6


def test_tail_bound():
    assert tail_bound(2.0, 1.0, 10.0) < 1e-10
    assert tail_bound(1.5, 1.0, 10.0) == pytest.approx(
        2 * math.gamma(1.5) * math.sin(0.75 * math.pi) / math.pi * 10 ** -1.5)


# heat-kernel exponents ------------------------------------------------------------

def test_hk_exponent_formula():
    assert hk_exponent(2.0, 0.5, math.inf, 1, 0) == pytest.approx(-0.75)
    assert hk_exponent(2.0, -0.5, 1.0, 1, 0) == 0.0
    assert hk_exponent(2.0, 0.0, 1.0, 1, 1, long_time=True) == pytest.approx(-0.5)


def test_hk_short_time_slope():
    g = Grid(1, 10.0, 4096)
    times = np.geomspace(5e-4, 5e-3, 6)
    slope = verify_hk_exponent(2.0, BesovSpec(0.5, math.inf, math.inf), 0, times, g)
    assert slope == pytest.approx(-0.75, rel=0.1)


def test_hk_clipped_slope():
    times = np.geomspace(5e-4, 5e-3, 6)
    slope = verify_hk_exponent(2.0, BesovSpec(-0.5, 1.0, math.inf), 0, times, Grid(1, 10.0, 4096))
    assert abs(slope) < 0.05


def test_hk_long_time_slope():
    g = Grid(1, 100.0, 1024)
    slope = verify_hk_exponent(2.0, BesovSpec(0.0, 1.0, math.inf), 1, np.geomspace(8, 64, 6), g)
    assert slope == pytest.approx(-0.5, rel=0.1)


def test_hk_needs_three_times():
    with pytest.raises(ValueError):
        verify_hk_exponent(2.0, BesovSpec(0.5, 1.0, 1.0), 0, [0.1, 0.2], G)


# sampling -----------------------------------------------------------------------

def test_gaussian_increment_variance():
    x = sample_stable_increment(2.0, 1.0, np.random.default_rng(0), size=10**6)[:, 0]
    assert x.var() == pytest.approx(2.0, rel=0.01)


@pytest.mark.parametrize("alpha", [1.3, 1.5, 2.0])
def test_increment_scaling_ks(alpha):
    a = sample_stable_increment(alpha, 2.0, np.random.default_rng(1), size=10**5)[:, 0]
    b = 2 ** (1 / alpha) * sample_stable_increment(alpha, 1.0, np.random.default_rng(2), size=10**5)[:, 0]
    assert stats.ks_2samp(a, b).pvalue > 0.01


@pytest.mark.parametrize("alpha", [1.5, 1.8])
def test_increment_law_vs_scipy(alpha):
    x = sample_stable_increment(alpha, 1.0, np.random.default_rng(3), size=20000)[:, 0]
    cdf = lambda v: stats.levy_stable.cdf(v, alpha, 0.0)  # noqa: E731
    assert stats.kstest(x, cdf).pvalue > 0.01


def test_increment_symmetry():
    x = sample_stable_increment(2.0, 1.0, np.random.default_rng(4), size=10**6)[:, 0]
    assert abs(x.mean()) < 4 * math.sqrt(2.0) / 1e3
    y = sample_stable_increment(1.5, 1.0, np.random.default_rng(5), size=10**6)[:, 0]
    assert abs(np.median(y)) < 5e-3


def test_2d_isotropic_marginal():
    # each coordinate of the isotropic law has char. function exp(-|xi|^alpha)
    z = sample_stable_increment(1.5, 1.0, np.random.default_rng(6), d=2, size=20000)
    cdf = lambda v: stats.levy_stable.cdf(v, 1.5, 0.0)  # noqa: E731
    assert stats.kstest(z[:, 0], cdf).pvalue > 0.01
    ang = np.arctan2(z[:, 1], z[:, 0])
    assert stats.kstest(ang, stats.uniform(-np.pi, 2 * np.pi).cdf).pvalue > 0.01


def test_increment_errors():
    with pytest.raises(ValueError):
        sample_stable_increment(1.5, 0.0, np.random.default_rng(0))
    assert sample_stable_increment(1.5, 1.0, np.random.default_rng(0)).shape == (1,)


@settings(max_examples=20, deadline=None)
@given(alpha=st.floats(1.05, 2.0), t=st.floats(0.05, 2.0))
def test_mass_and_positivity(alpha, t):
    g = Grid(1, 20.0, 512)
    if t < t_min(alpha, g):
        with pytest.raises(RefinementError):
            stable_density(alpha, t, g)
        return
    p = stable_density(alpha, t, g)
    assert p.mass() == pytest.approx(1.0, abs=1e-8)
    assert p.values.min() > -1e-8
