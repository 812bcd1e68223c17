import numpy as np
import pytest

from emhd_cascade.direct_solver import (SpectralState, dealias_mask, integrate, j_from_b,
                                        nonlinear_terms, rhs_eval, stable_dt)
from emhd_cascade.errors import ConfigurationError
from emhd_cascade.fields import Grid, SampledField


def _grid(n=64):
    return Grid.periodic(2 * np.pi, n, centered=False)


@pytest.mark.parametrize("b", [1.0, 2.0, -0.5])
def test_rhs_on_sine_is_closed_form(b):
    g = _grid()
    x = g.points
    st = SpectralState.from_values(g, np.sin(x))
    got = np.fft.irfft(rhs_eval(st, b=b), n=g.n_points)
    assert np.max(np.abs(got - 1.5 * b * np.sin(2 * x))) < 1e-10


def test_rhs_splits_into_transport_and_stretching():
    g = _grid()
    x = g.points
    t1, t2 = nonlinear_terms(np.sin(x), g.h, 1.0)
    assert np.allclose(t1, np.sin(2 * x), atol=1e-12)
    assert np.allclose(t2, 0.5 * np.sin(2 * x), atol=1e-12)


def test_j_from_b_cosine():
    # B_x = -sin x and H(-cos x) = -sin x
    g = _grid()
    J = j_from_b(SampledField(g, np.cos(g.points)))
    assert np.max(np.abs(J.values + np.cos(g.points))) < 1e-12


def test_j_from_b_has_zero_mean():
    g = _grid(128)
    x = g.points
    B = SampledField(g, 3.0 + np.exp(np.sin(x)))
    assert abs(np.mean(j_from_b(B).values)) < 1e-13


def test_linear_dissipation_is_exact():
    g = _grid()
    x = g.points
    mu, t = 0.3, 0.7
    st = SpectralState.from_values(g, np.sin(x) + 0.5 * np.cos(3 * x), mu=mu)
    run = integrate(st, t, nonlinear=False, dt=0.05)
    exact = np.exp(-mu * t) * np.sin(x) + 0.5 * np.exp(-9 * mu * t) * np.cos(3 * x)
    assert run.stop_reason == "completed"
    assert np.max(np.abs(run.final.values() - exact)) < 1e-12


def test_fractional_dissipation_exponent():
    g = _grid()
    x = g.points
    st = SpectralState.from_values(g, np.cos(4 * x), mu=0.1, alpha=1.0)
    run = integrate(st, 1.0, nonlinear=False)
    assert np.allclose(run.final.values(), np.exp(-0.4) * np.cos(4 * x), atol=1e-12)


def test_backward_with_dissipation_rejected():
    g = _grid()
    st = SpectralState.from_values(g, np.sin(g.points), mu=0.1)
    with pytest.raises(ConfigurationError):
        integrate(st, -0.1)


def test_dealias_mask_two_thirds():
    m = dealias_mask(48)
    assert m.size == 25
    assert m[:17].all() and not m[17:].any()


def test_short_nonlinear_run_matches_taylor():
    # B(t) ~ sin x + 1.5 t sin 2x for small t
    g = _grid(128)
    x = g.points
    st = SpectralState.from_values(g, np.sin(x))
    t = 1e-4
    run = integrate(st, t)
    assert np.max(np.abs(run.final.values() - np.sin(x) - 1.5 * t * np.sin(2 * x))) < 1e-7


def test_mean_is_conserved():
    g = _grid(128)
    x = g.points
    st = SpectralState.from_values(g, 0.2 + np.sin(x) * np.exp(-np.cos(x)))
    run = integrate(st, 0.01)
    assert run.mean_drift < 1e-14


def test_stable_dt_positive_and_finite():
    g = _grid()
    st = SpectralState.from_values(g, np.sin(g.points))
    assert 0 < stable_dt(st) < np.inf
    assert stable_dt(SpectralState.from_values(g, np.zeros(g.n_points))) == np.inf


def test_bad_spectrum_shape():
    with pytest.raises(ConfigurationError):
        SpectralState(_grid(), np.zeros(10, complex))
