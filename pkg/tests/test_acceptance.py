"""Acceptance criteria 1-9, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the lines as
they happen; they are also collected into the terminal summary.
"""
import math
import time
import warnings

import numpy as np
import pytest

from emhd_cascade import (CascadeParams, ModelParams, evolve, find_lifespan, initial_atlas,
                          integrate, make_seed_profile, ratio_monotonicity, solve_root,
                          sobolev_norm, tail_report, truncate, verify_integral_bound)
from emhd_cascade.assembly import model_residual
from emhd_cascade.diagnostics import (blowup_rate_fit, cascade_snapshot, holder_estimate,
                                      holder_time, ode_snapshots, rate_series_from_trajectory,
                                      selfsim_feasibility, selfsim_probe, synthetic_selfsimilar,
                                      weight_power)
from emhd_cascade.direct_solver import SpectralState, crosscheck, rhs_eval
from emhd_cascade.direct_solver import integrate as direct_integrate
from emhd_cascade.errors import DivergenceWarning
from emhd_cascade.fields import Grid
from emhd_cascade.profiles import (bootstrap_holds, dispersive_limit, energy_shape,
                                   step_profiles, support_tracker)
from emhd_cascade.singular_integral import analytic_battery

LINES = {}


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES[n] = line
    print(line)
    return ok


def test_criterion_1_hilbert_engine():
    t0 = time.perf_counter()
    res = analytic_battery(4096)
    wall = time.perf_counter() - t0
    ok = all(v["pass"] for v in res.values()) and wall < 5
    detail = ", ".join(f"{k} {v['error']:.1e}" for k, v in res.items())
    assert report(1, ok, f"{detail}; {wall:.2f} s"), res


def test_criterion_2_root_solver():
    t0 = time.perf_counter()
    rows = []
    for A in (1.1, 1.2, 1.5, 2.0, 3.0, 5.0):
        a = solve_root(A)
        rows.append((A, a, abs(A * (1 - math.exp(-a)) - a), math.log(A) < a < 2 * (A - 1)))
    wall = time.perf_counter() - t0
    ok = all(r[2] <= 1e-12 and r[3] for r in rows) and wall < 1
    worst = max(r[2] for r in rows)
    assert report(2, ok, f"max residual {worst:.1e}, bounds hold for all A; {wall:.3f} s"), rows


def test_criterion_3_cascade_ode():
    t0 = time.perf_counter()
    p = CascadeParams(A=2.0, r=0.05, n=30, delta=1.0)
    a = solve_root(p.A)
    tr = integrate(p, -a, rtol=1e-10, per_decade=20, t_min_abs=2.0 ** -30)
    mono = ratio_monotonicity(tr)
    integ = verify_integral_bound(tr, p)
    fit = blowup_rate_fit(*rate_series_from_trajectory(tr), window=(2.0 ** -25, 2.0 ** -5))
    wall = time.perf_counter() - t0
    ok = (mono["worst_violation"] <= 1e-10 and integ["upper_pass"] and integ["lower_pass"]
          and abs(fit["slope"] + 1) <= 0.05 and fit["band_ratio"] <= 10 and wall < 60)
    assert report(3, ok, f"monotonicity {mono['worst_violation']:.1e}, integral "
                         f"{integ['integral']:.10f} vs a {a:.10f}, slope {fit['slope']:.5f}, "
                         f"band {fit['band_ratio']:.3f}; {wall:.1f} s")


@pytest.fixture(scope="module")
def coupled():
    t0 = time.perf_counter()
    params = ModelParams()
    seed = make_seed_profile(params.r, params.points_per_bubble, params.margin)
    life = find_lifespan(params, seed)
    run = evolve(params, life["T"], steps=40, seed=seed)
    return params, life, run, time.perf_counter() - t0


def test_criterion_4_coupled_run(coupled):
    params, life, run, wall = coupled
    trk = support_tracker(run.times, run.u_fields, run.final.grid, params.r)
    shape = energy_shape(run)
    ok = (bootstrap_holds(run) and float(run.hdot4.max()) <= params.epsilon
          and bool(np.all(run.support_ok)) and trk["max_displacement"] <= params.r
          and shape["spread"] <= 2.0 and shape["worst_factor"] <= 2.0 and wall < 1800)
    assert report(4, ok, f"T {life['T']:.3g}, max Hdot4 {run.hdot4.max():.4f}, displacement "
                         f"{trk['max_displacement']:.1e}, K {shape['K']:.3g} spread "
                         f"{shape['spread']:.4f}, worst ratio factor {shape['worst_factor']:.5f}; "
                         f"{wall:.0f} s")


def test_criterion_5_residual_order():
    t0 = time.perf_counter()
    res = []
    for pts in (128, 256, 512):
        at = initial_atlas(ModelParams(n=1, points_per_bubble=pts))
        dt = -0.5 * dispersive_limit(at)
        af = step_profiles(at, dt)
        res.append(model_residual(at.with_state(a=af.a), af, dt)["residual"])
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    wall = time.perf_counter() - t0
    ok = bool(np.all(orders >= 1.9)) and wall < 600
    assert report(5, ok, f"residuals {', '.join(f'{r:.2e}' for r in res)}, orders "
                         f"{', '.join(f'{o:.2f}' for o in orders)}; {wall:.1f} s")


def test_criterion_6_direct_solver():
    t0 = time.perf_counter()
    g = Grid.periodic(2 * np.pi, 64, centered=False)
    x = g.points
    got = np.fft.irfft(rhs_eval(SpectralState.from_values(g, np.sin(x)), b=1.0), n=64)
    e_rhs = float(np.max(np.abs(got - 1.5 * np.sin(2 * x))))
    mu, T = 0.2, 1.0
    st = SpectralState.from_values(g, np.sin(x) + np.cos(5 * x), mu=mu)
    fin = direct_integrate(st, T, nonlinear=False, dt=0.01).final.values()
    e_decay = float(np.max(np.abs(fin - np.exp(-mu * T) * np.sin(x)
                                  - np.exp(-25 * mu * T) * np.cos(5 * x))))
    cc = crosscheck(initial_atlas(ModelParams(n=2)), 2e-6, 16.0, 2 ** 16)
    wall = time.perf_counter() - t0
    ok = e_rhs <= 1e-10 and e_decay <= 1e-6 and cc["rel_l2_increment"] <= 0.05 and wall < 900
    assert report(6, ok, f"rhs error {e_rhs:.1e}, decay error {e_decay:.1e}, crosscheck "
                         f"{cc['rel_l2_increment']:.2e} over tau 2e-6; {wall:.1f} s")


def test_criterion_7_holder():
    t0 = time.perf_counter()
    p = ModelParams(A=2.0, r=0.1, n=12)
    h = holder_estimate(cascade_snapshot(p, holder_time(p)))
    sp = h["s_predicted"]
    wall = time.perf_counter() - t0
    ok = (p.n + 1 >= 10 and 0.5 * sp <= h["s_measured"] <= 1.5 * sp
          and h["min_implied_exponent"] >= 0.5 * sp and h["random_above_envelope"] == 0
          and wall < 300)
    assert report(7, ok, f"s_predicted {sp:.4f}, measured {h['s_measured']:.4f}, min local "
                         f"{h['min_implied_exponent']:.4f}, random pairs above envelope "
                         f"{h['random_above_envelope']}; {wall:.1f} s")


def test_criterion_8_non_selfsimilarity():
    t0 = time.perf_counter()
    cs = np.linspace(-0.5, 5.0, 101)[1:]
    table = selfsim_feasibility(cs)
    infeasible = all(row["Cl_inv2"] < 0 and not row["feasible"] for row in table)
    times = -np.geomspace(1e-4, 1e-5, 11)
    snaps = ode_snapshots(ModelParams(A=2.0, r=0.1, n=30), times)
    probe = selfsim_probe(snaps)
    control = selfsim_probe([synthetic_selfsimilar(t) for t in times])
    steep = selfsim_probe(snaps, weight=weight_power(4))
    wall = time.perf_counter() - t0
    ok = (len(table) == 100 and infeasible and probe["min_pairwise"] >= 0.05
          and control["max_pairwise"] < 1e-3 and wall < 300)
    assert report(8, ok, f"{len(table)} c values infeasible, min distance "
                         f"{probe['min_pairwise']:.4f}, control {control['max_pairwise']:.1e}"
                         f" (weight power 4: min {steep['min_pairwise']:.4f}, Cauchy radius "
                         f"{steep['cauchy_radius']:.3f}); {wall:.1f} s")


def test_criterion_9_convergence(coupled):
    t0 = time.perf_counter()
    p = ModelParams(A=2.0, r=0.05, n=16)
    at = initial_atlas(p)
    predicted = p.A * p.r ** 0.5
    rep0 = tail_report(at, truncate(at, 8), N=4)
    _, _, run, _ = coupled
    rep1 = tail_report(run.final)
    ratios = [rep0["fitted_ratio"], rep1["fitted_ratio"]]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sobolev_norm(at, 3.5)
    fired = any(issubclass(w.category, DivergenceWarning) for w in caught)
    wall = time.perf_counter() - t0
    ok = (all(abs(r / predicted - 1) <= 0.1 for r in ratios) and rep0["cN_distance"] <= 1e-12
          and fired and wall < 300)
    assert report(9, ok, f"tail ratio {ratios[0]:.5f} (t = 0), {ratios[1]:.5f} (evolved) vs "
                         f"{predicted:.5f}, C^4 distance n = 8 vs 16 {rep0['cN_distance']:.1e}, "
                         f"divergence warning {'fired' if fired else 'missing'}; {wall:.1f} s")
