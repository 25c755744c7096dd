import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from besov_mkv.besov import BesovSpec, lp_norm, refinement_probe, thermic_besov_norm
from besov_mkv.grid import Grid, GridFunction, gaussian
from besov_mkv.kernels import (KernelSpec, SlabKernel, UnderResolvedWarning, divergence,
                               kernel_norm_pair, load_kernel, mollifier_report, mollify, save_kernel,
                               synthesize_kernel, synthesize_potential, time_norm)

INF = math.inf
G = Grid(1, 10.0, 512)
GRIDS = [Grid(1, 10.0, N) for N in (256, 512, 1024, 2048)]


def rf(seed=0, **kw):
    return KernelSpec("random_fourier", kw.pop("beta", -1.9), seed=seed, **kw)


def test_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("nope", -1.0)
    with pytest.raises(ValueError):
        KernelSpec("random_fourier", -2.0)
    with pytest.raises(ValueError):
        KernelSpec("random_fourier", -1.0, slabs=9)
    with pytest.raises(ValueError):
        KernelSpec("gradient_potential", -1.0, amplitude=0.0)
    s = KernelSpec.from_dict({"family": "random_fourier", "beta": -1.9, "p": "inf", "q": "inf",
                              "seed": 3, "slabs": 2})
    assert s.seed == 3 and s.slabs == 2 and math.isinf(s.p)
    assert KernelSpec.from_dict(s.to_dict()) == s


def test_coarse_grid_refused():
    with pytest.raises(ValueError):
        synthesize_kernel(rf(), Grid(1, 10.0, 32))


def test_deterministic():
    a = synthesize_kernel(rf(5), G).values
    b = synthesize_kernel(rf(5), G).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, synthesize_kernel(rf(6), G).values)


def test_modes_nest_across_refinement():
    # the same wave vectors carry the same coefficients on every grid
    a = synthesize_kernel(rf(1), Grid(1, 10.0, 256)).values[0]
    b = synthesize_kernel(rf(1), Grid(1, 10.0, 512)).values[0]
    ah, bh = np.fft.rfft(a) / 256, np.fft.rfft(b) / 512
    # node 0 sits at -L on both grids, so the coefficients agree for |k| < 128
    assert np.allclose(ah[1:127], bh[1:127], rtol=1e-10, atol=1e-14)


def test_reference_field_regularity():
    b = synthesize_kernel(rf(0), G)
    assert not thermic_besov_norm(b, BesovSpec(-1.9, INF, INF)).diverged
    assert thermic_besov_norm(b, BesovSpec(-1.6, INF, INF)).diverged


@pytest.mark.parametrize("seed", range(10))
def test_refinement_probe(seed):
    def make(g):
        return synthesize_kernel(rf(seed), g)
    up, _ = refinement_probe(make, GRIDS, BesovSpec(-1.9 + 0.3, INF, INF))
    down, _ = refinement_probe(make, GRIDS, BesovSpec(-1.9 - 0.1, INF, INF))
    assert up > 0
    assert down <= 0.02


def test_div_control_gains_one_order():
    spec = rf(0, div_control=True)

    def make(g):
        return synthesize_kernel(spec, g)
    slope, _ = refinement_probe(make, GRIDS, BesovSpec(-0.9 - 0.1, INF, INF))
    assert slope <= 0.02
    slope, _ = refinement_probe(lambda g: divergence(make(g)), GRIDS, BesovSpec(-1.9 + 0.3, INF, INF))
    assert slope > 0


@pytest.mark.parametrize("beta", [-0.5, -1.0, -1.5, -1.9])
def test_smooth_potential_in_all_negative_spaces(beta):
    spec = KernelSpec("gradient_potential", beta, seed=2)
    slope, _ = refinement_probe(lambda g: synthesize_kernel(spec, g), GRIDS, BesovSpec(beta, INF, INF))
    assert abs(slope) < 0.02


def test_fractional_family_is_vector():
    b = synthesize_kernel(KernelSpec("fractional_derivative_gaussian", -1.5), G)
    assert b.is_vector and np.isfinite(b.values).all()


# divergence -------------------------------------------------------------------------

def test_divergence_constant_is_zero():
    b = GridFunction(G, np.full((1, G.N), 3.0))
    assert np.abs(divergence(b).values).max() < 1e-12


def test_divergence_of_curl_field():
    g = Grid(2, 10.0, 64)
    x, y = g.coords()
    psi = np.sin(math.pi * x / 5) * np.cos(2 * math.pi * y / 10)
    ph = np.fft.fftn(psi)
    k1, k2 = g.deriv_freqs()
    d1 = np.fft.ifftn(1j * k1 * ph).real
    d2 = np.fft.ifftn(1j * k2 * ph).real
    b = GridFunction(g, np.stack([-d2, d1]))
    assert np.abs(divergence(b).values).max() < 1e-10
    div_free = synthesize_kernel(rf(4, div_control=True), g)
    assert np.abs(divergence(div_free).values).max() < 1e-9 * np.abs(div_free.values).max()


def test_divergence_vs_centered_difference():
    errs = []
    for N in (1024, 2048):
        g = Grid(1, 10.0, N)
        b = mollify(synthesize_kernel(rf(2), g), 0.3)
        f = b.values[0]
        fd = (np.roll(f, -1) - np.roll(f, 1)) / (2 * g.h)
        errs.append(np.abs(fd - divergence(b).values).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_divergence_of_gradient_is_laplacian():
    spec = KernelSpec("gradient_potential", -1.0, seed=1)
    V = synthesize_potential(spec, G)
    lap = np.fft.ifft(-(G.deriv_freqs()[0] ** 2) * np.fft.fft(V.values)).real
    assert np.abs(divergence(synthesize_kernel(spec, G)).values - lap).max() < 1e-10


# mollifier ---------------------------------------------------------------------------

def test_mollify_smooth_field_second_order():
    g = Grid(1, 20.0, 1024)
    b = GridFunction(g, gaussian(g, 1.0).values[None])
    errs = [lp_norm(b - mollify(b, e), 2) for e in (0.2, 0.1, 0.05)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_mollify_band_limited_non_expansive():
    b = mollify(synthesize_kernel(rf(0), G), 0.5)  # effectively band-limited
    rep = mollifier_report(b, [0.4, 0.2, 0.1], [-1.95], beta=-1.9)
    assert 1.0 <= rep.sup_norm_ratio <= 1 + 1e-6


def test_mollifier_convergence_table():
    b = synthesize_kernel(rf(0), Grid(1, 10.0, 1024))
    eps = [0.4, 0.2, 0.1, 0.05, 0.025]
    rep = mollifier_report(b, eps, [-1.95, -2.2, -2.9], beta=-1.9)
    for col in rep.convergence_table.values():
        assert all(b_ <= a * 1.05 for a, b_ in zip(col, col[1:]))
    # ||b - b^eps|| in the beta_bar norm decays like eps^(beta - beta_bar)
    for bb, col in rep.convergence_table.items():
        rate = np.polyfit(np.log(eps[1:]), np.log(col[1:]), 1)[0]
        assert rate >= 0.6 * (-1.9 - bb)
    col = rep.convergence_table[-2.9]
    assert all(b_ <= 0.55 * a for a, b_ in zip(col[1:], col[2:]))
    assert rep.to_dict()["epsilons"] == eps


def test_mollify_warns_below_grid_spacing():
    with pytest.warns(UnderResolvedWarning):
        mollify(synthesize_kernel(rf(), G), 0.5 * G.h)
    with pytest.raises(ValueError):
        mollify(synthesize_kernel(rf(), G), 0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), eps=st.floats(0.05, 1.0))
def test_mollify_properties(seed, eps):
    b = synthesize_kernel(rf(seed), G)
    b = GridFunction(G, b.values + 0.7)  # nonzero mean
    be = mollify(b, eps)
    assert np.allclose(be.values.mean(axis=-1), b.values.mean(axis=-1), rtol=0, atol=1e-12)
    assert np.abs(divergence(be).values - mollify(divergence(b), eps).values).max() < 1e-9


# slabs, norms, dumps -----------------------------------------------------------------

def test_slab_kernel_time_norm():
    sk = synthesize_kernel(rf(0, slabs=4), G)
    assert isinstance(sk, SlabKernel) and sk.K == 4
    assert np.array_equal(sk.index([0.0, 0.3, 0.99, 1.0]), [0, 1, 3, 3])
    spec = BesovSpec(-1.9, INF, INF)
    sup = time_norm(sk, spec, INF)
    l2 = time_norm(sk, spec, 2.0)
    assert l2 <= sup * (1 + 1e-12)
    nb, ndiv = kernel_norm_pair(sk, spec, INF)
    assert nb == sup and ndiv > 0


def test_kernel_dump_roundtrip(tmp_path):
    import json
    for spec in (rf(0), rf(0, slabs=3)):
        b = synthesize_kernel(spec, G)
        path = str(tmp_path / f"k{spec.slabs}.bin")
        save_kernel(path, b, spec)
        meta = json.loads((tmp_path / f"k{spec.slabs}.json").read_text())
        assert meta["role"] == "kernel" and meta["beta"] == -1.9
        back = load_kernel(path)
        vals = back.fields if spec.slabs > 1 else back.values
        ref = b.fields if spec.slabs > 1 else b.values
        assert np.array_equal(vals, ref)


def test_under_resolved_warning_is_a_warning():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        mollify(synthesize_kernel(rf(), G), 0.01)
    assert any(issubclass(r.category, UnderResolvedWarning) for r in rec)
