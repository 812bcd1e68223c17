import json
import math

import numpy as np
import pytest

from emhd_cascade import CascadeParams, ModelParams, integrate, solve_root
from emhd_cascade.diagnostics import (DiagnosticsReport, FunctionSnapshot, blowup_rate_fit,
                                      cascade_snapshot, holder_estimate, holder_time,
                                      ode_snapshots, rate_series_from_trajectory, run_id,
                                      selfsim_feasibility, selfsim_probe, selfsim_report,
                                      synthetic_selfsimilar)
from emhd_cascade.errors import ConfigurationError, CoverageError, ProbeError


def test_rate_fit_recovers_inverse_power():
    t = np.geomspace(1e-6, 1e-2, 60)
    M = 3.0 / t * (1 + 0.01 * np.sin(np.log(t)))
    fit = blowup_rate_fit(t, M)
    assert abs(fit["slope"] + 1) < 0.01
    assert fit["band_ratio"] < 1.03
    assert fit["r2"] > 0.999


def test_rate_fit_constant_has_zero_slope():
    t = np.geomspace(1e-4, 1.0, 30)
    fit = blowup_rate_fit(t, np.full_like(t, 5.0))
    assert abs(fit["slope"]) < 1e-12
    assert fit["band_ratio"] == pytest.approx(1e4)


def test_rate_fit_window_and_coverage():
    t = np.geomspace(1e-6, 1.0, 61)
    fit = blowup_rate_fit(t, 1 / t, window=(1e-5, 1e-3))
    assert fit["window"] == pytest.approx((1e-5, 1e-3))
    with pytest.raises(CoverageError):
        blowup_rate_fit(t, 1 / t, window=(1e-4, 1e-3))
    with pytest.raises(ProbeError):
        blowup_rate_fit(t, -1 / t)


@pytest.mark.parametrize("A", [1.5, 2.0, 3.0])
def test_cascade_rate_is_inverse_time(A):
    # enough bubbles that A^n reaches the bottom of the window, as 2^30 does for A = 2
    n = math.ceil(30 * math.log(2) / math.log(A))
    p = CascadeParams(A=A, r=min(0.1, 0.8 / A ** 2), n=n)
    tr = integrate(p, -solve_root(A), rtol=1e-10, per_decade=10, t_min_abs=2.0 ** -30)
    fit = blowup_rate_fit(*rate_series_from_trajectory(tr), window=(2.0 ** -25, 2.0 ** -5))
    assert abs(fit["slope"] + 1) < 0.05
    assert fit["band_ratio"] < 10


@pytest.mark.parametrize("c,expected", [(0.0, -1.0), (-0.25, -2.0), (1.0, -1 / 3), (4.5, -0.1)])
def test_feasibility_constraint_has_no_solution(c, expected):
    (row,) = selfsim_feasibility(c)
    assert row["Cl_inv2"] == pytest.approx(expected)
    assert row["feasible"] is False


def test_feasibility_rejects_out_of_range():
    with pytest.raises(ConfigurationError):
        selfsim_feasibility([0.0, -0.5])


def test_probe_identical_snapshots_distance_zero():
    s = synthetic_selfsimilar(-1e-3)
    res = selfsim_probe([s, s, s])
    assert res["max_pairwise"] < 1e-14
    assert res["cauchy_radius"] < 1e-14


def test_probe_negative_control_collapses():
    snaps = [synthetic_selfsimilar(-t) for t in np.geomspace(1e-5, 1e-4, 6)]
    rep = selfsim_report(snaps)
    for p in (1, 4):
        assert rep[p]["max_pairwise"] < 1e-3


def _poly_gauss(power):
    from numpy.polynomial import Polynomial

    polys = [Polynomial([0] * power + [1])]
    for _ in range(4):
        polys.append(polys[-1].deriv() - Polynomial([0, 1]) * polys[-1])
    return lambda z, m: polys[m](z) * np.exp(-z * z / 2)


def test_probe_separates_different_shapes():
    a = synthetic_selfsimilar(-1.0)
    b = synthetic_selfsimilar(-1.0, g=_poly_gauss(9))
    assert selfsim_probe([a, b])["min_pairwise"] > 0.1


def test_probe_errors():
    with pytest.raises(ProbeError):
        selfsim_probe([synthetic_selfsimilar(-1.0)])
    flat = FunctionSnapshot(-1.0, lambda x, m: np.zeros_like(x))
    with pytest.raises(ProbeError):
        selfsim_probe([flat, flat])


def test_cascade_snapshots_discretely_selfsimilar():
    ts = -np.geomspace(1e-5, 1e-4, 5)
    snaps = ode_snapshots(ModelParams(A=2.0, r=0.1, n=24), ts)
    rep = selfsim_report(snaps)
    # outermost bubble dominates under the slow weight
    assert rep[1]["min_pairwise"] > 0.05
    assert rep[4]["cauchy_radius"] > 0.05


@pytest.fixture(scope="module")
def holder():
    p = ModelParams(A=2.0, r=0.1, n=12)
    return holder_estimate(cascade_snapshot(p, holder_time(p)), random_pairs=50)


def test_holder_prediction_value(holder):
    a = solve_root(2.0)
    assert holder["s_predicted"] == pytest.approx((a - math.log(2)) / (a - math.log(0.1)))
    assert holder["s_predicted"] == pytest.approx(0.2311162, abs=1e-6)


def test_holder_measured_matches_prediction(holder):
    assert holder["s_measured"] == pytest.approx(holder["s_predicted"], rel=1e-3)
    assert np.all(np.abs(holder["local_exponents"] - holder["s_predicted"]) < 1e-3)
    assert holder["random_above_envelope"] == 0


def test_holder_time_ratio():
    p = ModelParams(A=2.0, r=0.1, n=6)
    at = cascade_snapshot(p, holder_time(p))
    ratios = at.x[1:] / at.x[:-1]
    assert np.allclose(ratios, 2.0 * math.exp(-solve_root(2.0)), rtol=1e-6)


def test_report_json_roundtrip():
    rep = DiagnosticsReport(params={"A": 2.0}, run_id="x",
                            holder={"v": np.float64(2.0), "arr": np.arange(3), "nan": math.nan},
                            monitors={"ok": {"pass": True}})
    d = json.loads(rep.to_json())
    assert d["holder"]["arr"] == [0, 1, 2]
    assert d["holder"]["nan"] == "nan"
    assert rep.passed()
    rep.monitors["bad"] = {"pass": False}
    assert not rep.passed()


def test_run_id_stable():
    assert run_id({"a": 1, "b": [1, 2]}) == run_id({"b": [1, 2], "a": 1})
    assert run_id({"a": 1}) != run_id({"a": 2})
