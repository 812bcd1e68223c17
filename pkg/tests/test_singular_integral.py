import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from emhd_cascade.errors import (CascadeDegeneracyError, ConfigurationError,
                                 IllConditionedEvaluationWarning, InvalidFieldError,
                                 UnsupportedOrderError)
from emhd_cascade.fields import Grid, SampledField
from emhd_cascade.profiles import bump, make_seed_profile
from emhd_cascade.singular_integral import (BubbleSources, analytic_battery,
                                            coupling_from_profiles, hilbert_derivative_at,
                                            hilbert_periodic, interaction_field, paired_kernel,
                                            periodized_lorentzian, self_hilbert_on_grid)


def periodic(n, length=2 * np.pi):
    return Grid.periodic(length, n, centered=False)


def test_cos_maps_to_sin():
    g = periodic(256)
    out = hilbert_periodic(SampledField(g, np.cos(g.points))).values
    assert np.max(np.abs(out - np.sin(g.points))) <= 1e-10


def test_sin_maps_to_minus_cos():
    g = periodic(256)
    out = hilbert_periodic(SampledField(g, np.sin(3 * g.points))).values
    assert np.max(np.abs(out + np.cos(3 * g.points))) <= 1e-10


def test_zero_field_and_constant_vanish():
    g = periodic(64)
    assert np.all(hilbert_periodic(SampledField(g, np.zeros(64))).values == 0)
    assert np.max(np.abs(hilbert_periodic(SampledField(g, np.full(64, 3.0))).values)) < 1e-14


def test_periodic_rejects_bad_grids():
    with pytest.raises(ConfigurationError):
        hilbert_periodic(SampledField(periodic(96), np.zeros(96)))
    g = periodic(64)
    v = np.zeros(64)
    v[3] = np.nan
    with pytest.raises(InvalidFieldError):
        hilbert_periodic(SampledField(g, v))


def test_periodized_lorentzian_closed_form():
    # direct image sum against the cotangent closed form
    L = 40.0
    x = np.linspace(-5, 5, 11)
    n = np.arange(-400000, 400001)
    f_sum = np.sum(1 / (1 + (x[:, None] + n * L) ** 2), axis=1)
    f, _ = periodized_lorentzian(x, L)
    assert np.max(np.abs(f - f_sum)) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1), st.integers(min_value=1, max_value=40))
def test_anti_involution_band_limited(seed_, modes):
    gen = np.random.default_rng(seed_)
    n = 256
    spec = np.zeros(n // 2 + 1, complex)
    spec[1:modes + 1] = gen.normal(size=modes) + 1j * gen.normal(size=modes)
    u = np.fft.irfft(spec, n=n) + gen.normal()
    f = SampledField(periodic(n), u)
    hh = hilbert_periodic(hilbert_periodic(f)).values
    assert np.max(np.abs(hh + (u - u.mean()))) <= 1e-8 * max(1.0, np.max(np.abs(u)))


def test_parity_swaps_on_symmetric_grid():
    g = Grid.periodic(2 * np.pi, 128, centered=True)
    x = g.points
    ev = SampledField(g, np.cos(x) + np.cos(2 * x), parity="even")
    out = hilbert_periodic(ev)
    assert out.parity == "odd"
    # odd about 0 on the centred grid: f(-x_i) = -f(x_i)
    v = out.values
    mirrored = v[(-np.arange(128)) % 128]
    assert np.max(np.abs(v + mirrored)) < 1e-8


def test_lorentzian_pv_path():
    g = Grid(-50.0, 50.0, 4096)
    f = SampledField(g, 1 / (1 + g.points ** 2))
    assert abs(hilbert_derivative_at(f, 3.0, 0) - 0.3) <= 1e-3


def test_point_mass_second_derivative():
    w = 1e-3
    g = Grid(1 - 10 * w, 1 + 10 * w, 512)
    m = np.exp(-(g.points - 1) ** 2 / (2 * w * w)) / (w * np.sqrt(2 * np.pi))
    val = hilbert_derivative_at(SampledField(g, m), 0.0, 2)
    assert abs(val + 2 / np.pi) <= 1e-3


def test_zero_field_any_order():
    g = Grid(0.0, 1.0, 64)
    f = SampledField(g, np.zeros(64))
    for N in range(6):
        assert hilbert_derivative_at(f, 3.0, N) == 0


def test_order_limit():
    g = Grid(0.0, 1.0, 64)
    with pytest.raises(UnsupportedOrderError):
        hilbert_derivative_at(SampledField(g, np.zeros(64)), 3.0, 6)
    with pytest.raises(UnsupportedOrderError):
        hilbert_derivative_at(SampledField(g, np.zeros(64)), 3.0, -1)


def test_far_field_decay_bound(seed):
    W = seed.field
    r = seed.r
    l1 = 2 * W.l1_norm()  # both halves of the odd profile
    from math import factorial
    for N in range(6):
        for x in (2.0, 3.5, 8.0):
            val = abs(hilbert_derivative_at(W, x, N))
            bound = factorial(N) / np.pi * l1 / (x - 1 - 2 * r) ** (N + 1)
            assert val <= bound


def test_endpoint_warns(seed):
    W = seed.field
    with pytest.warns(IllConditionedEvaluationWarning):
        v = hilbert_derivative_at(W, 1 + seed.r, 1)
    assert np.isfinite(v)


def test_paired_kernel_matches_direct_sum():
    zeta = np.array([2.0, 3.0, -4.5])
    y = np.array([0.9, 1.1, 0.3])
    for m in range(1, 7):
        for p in (-1, 1):
            direct = (zeta - y) ** (-m) + p * (zeta + y) ** (-m)
            assert np.allclose(paired_kernel(zeta, y, m, p), direct, rtol=1e-13)


def test_coupling_against_quadrature(seed):
    # H phi''(0) = (4/pi) int_0^inf bump(y - 1) / y^3 dy for the negative orientation
    r = seed.r
    ref = 4 / np.pi * quad(lambda y: bump(y - 1, r) / y ** 3, 1 - r, 1 + r, epsabs=0,
                           epsrel=1e-13, limit=200)[0]
    assert seed.delta0 == pytest.approx(ref, rel=1e-9)
    assert coupling_from_profiles(seed.grid, seed.values[None, :])[0] == pytest.approx(ref, rel=1e-9)


def test_series_paths_agree(seed):
    src = BubbleSources(seed.grid, seed.values[None, :], "odd")
    for N in range(1, 6):
        z = np.linspace(0.0, 0.4, 7)
        ref = src.direct(0, z, N)
        assert np.max(np.abs(src.near(0, z, N) - ref)) <= 1e-9 * np.max(np.abs(ref))
        z = np.linspace(3.0, 30.0, 7)
        ref = src.direct(0, z, N)
        assert np.max(np.abs(src.far(0, z, N) - ref)) <= 1e-9 * np.max(np.abs(ref))


def test_targets_inside_support_rejected(seed):
    src = BubbleSources(seed.grid, seed.values[None, :], "odd")
    with pytest.raises(CascadeDegeneracyError):
        src.evaluate(0, np.array([1.0]), 2)


def test_self_transform_matches_full_line_grid():
    # the steep bump needs ~2000 points per window before d^3 H converges to 1e-6
    seed = make_seed_profile(0.05, 2048)
    r = seed.r
    fg = Grid(-(1 + 3 * r), 1 + 3 * r, 2 ** 15)
    xs = fg.points
    full = SampledField(fg, -np.sign(xs) * bump(np.abs(xs) - 1, r))
    pts = seed.grid.points[::37]
    for N in range(4):
        a = self_hilbert_on_grid(seed.field, N)[::37]
        b = hilbert_derivative_at(full, pts, N)
        assert np.max(np.abs(a - b)) <= 1e-5 * np.max(np.abs(a))


def test_interaction_field_empty_sum(seed):
    from emhd_cascade.atlas import initial_atlas
    from emhd_cascade.params import ModelParams

    at = initial_atlas(ModelParams(n=0), seed)
    f = interaction_field(at, 0, 2, "below_k")
    assert np.all(f.values == 0)


def test_interaction_field_against_global_grid(atlas3):
    """Far contributions from every other bubble vs a direct kernel sum on one fine grid."""
    at = atlas3
    k = 1
    got = interaction_field(at, k, 2, "below_k").values
    # bubble 0 only, sampled on its own physical support
    g = at.grid
    s0 = at.scale[0]
    amp0 = np.exp(at.log_amplitude(0)[0])
    src = SampledField(Grid(g.x_min * s0, g.x_max * s0, g.n_points), amp0 * at.W[0],
                       parity="odd", half_line=True)
    x = g.points * at.scale[k]
    ref = hilbert_derivative_at(src, x, 2)
    assert np.max(np.abs(got - ref)) <= 1e-5 * np.max(np.abs(ref))


def test_interaction_requires_positive_order(atlas3):
    with pytest.raises(UnsupportedOrderError):
        interaction_field(atlas3, 0, 0)


def test_battery_passes():
    res = analytic_battery()
    assert all(v["pass"] for v in res.values()), res
