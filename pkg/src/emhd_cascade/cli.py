"""Batch front end: ``emhd-cascade --mode NAME [--config PATH] [--override k=v ...]``.

Every run writes ``manifest.json`` (resolved config, versions, wall time,
monitor results, artifact list) next to its CSV, JSON and SVG outputs.
Exit codes: 0 all monitors pass, 2 a monitor failed, 3 configuration error,
4 numerical breakdown.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from .errors import (CascadeDegeneracyError, CascadeError, ConfigurationError, CoverageError,
                     OverflowBreakdown, RegimeError, ResolutionError, SchemaMismatchError,
                     StepSizeError, StiffnessError)
from .params import ModelParams

log = logging.getLogger("emhd_cascade")

MODES = ("cascade", "direct", "crosscheck", "diagnose", "root", "hilbert-selftest")
EXIT_OK, EXIT_MONITOR, EXIT_CONFIG, EXIT_BREAKDOWN = 0, 2, 3, 4

DEFAULTS = {
    "mode": "cascade",
    "params": {"b": 1.0, "A": 2.0, "r": 0.05, "n": None, "epsilon": 0.1, "c": 4.0, "d": 3.0,
               "T": None, "mu": 0.0, "alpha": 2.0, "include_b_in_ode": True,
               "points_per_bubble": 512, "margin": None},
    "numerics": {"rtol": 1e-10, "per_decade": 20, "steps": 40, "scheme": "fd5"},
    "cascade": {"n": 30, "delta": 1.0, "t_min_abs": 2.0 ** -30,
                "fit_window": [2.0 ** -25, 2.0 ** -5], "slope_tol": 0.05, "band_max": 10.0},
    "direct": {"n": 2, "length": 16.0, "n_points": 2 ** 16, "tau": 2e-6, "checkpoints": 4},
    "crosscheck": {"n": 2, "length": 16.0, "n_points": 2 ** 16, "tau": 2e-6, "tol": 0.05},
    "diagnose": {"coupled": True, "holder": {"A": 2.0, "r": 0.1, "n": 12, "random_pairs": 200},
                 "selfsim": {"n": 30, "t_lo": 1e-5, "t_hi": 1e-4, "snapshots": 11,
                             "weights": [1, 4], "threshold": 0.05, "c_count": 100,
                             "c_max": 5.0}},
    "root": {"A": None},
    "output": {"dir": "emhd_run", "plots": True},
}


# ---------------------------------------------------------------------------
# configuration

def _merge(base, extra, path=""):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        where = f"{path}.{k}" if path else k
        if k not in out:
            raise ConfigurationError(f"unknown config key {where!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigurationError(f"config key {where!r} must be a table")
            out[k] = _merge(out[k], v, where)
        else:
            out[k] = v
    return out


def read_config(path) -> dict:
    p = Path(path)
    text = p.read_text()
    if p.suffix == ".json":
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        low = text.lower()
        if low in ("true", "false"):
            return low == "true"
        if low in ("none", "null"):
            return None
        return text


def apply_override(cfg: dict, item: str) -> dict:
    """``a.b.c=value``; the value is parsed as JSON when possible."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigurationError(f"override {item!r} is not key=value")
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigurationError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigurationError(f"unknown config key {key!r}")
    node[parts[-1]] = _parse_value(raw.strip())
    return cfg


def resolve_config(config=None, mode=None, overrides=(), seed_profile=None, out=None,
                   plots=None) -> dict:
    cfg = _merge(DEFAULTS, config or {})
    if mode is not None:
        cfg["mode"] = mode
    for item in overrides:
        apply_override(cfg, item)
    if seed_profile:
        key, _, raw = seed_profile.partition("=")
        if key.strip() != "r":
            raise ConfigurationError(f"--seed-profile expects r=VALUE, got {seed_profile!r}")
        cfg["params"]["r"] = _parse_value(raw)
    if out is not None:
        cfg["output"]["dir"] = str(out)
    if plots is not None:
        cfg["output"]["plots"] = plots == "on"
    if cfg["mode"] not in MODES:
        raise ConfigurationError(f"unknown mode {cfg['mode']!r}; choose from {', '.join(MODES)}")
    return cfg


def model_params(cfg: dict, n=None) -> ModelParams:
    """Validated parameters; ``n`` falls back to the mode default when unset."""
    p = dict(cfg["params"])
    if p["n"] is None:
        p["n"] = 12 if n is None else n
    return ModelParams.from_dict(p)


# ---------------------------------------------------------------------------
# output helpers

class Run:
    def __init__(self, cfg):
        self.cfg = cfg
        self.out = Path(cfg["output"]["dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []
        self.monitors = {}
        self.plots = bool(cfg["output"]["plots"])

    def path(self, name):
        self.artifacts.append(name)
        return self.out / name

    def monitor(self, name, passed, **info):
        self.monitors[name] = {"pass": bool(passed), **info}
        log.info("monitor %s: %s", name, "pass" if passed else "FAIL")

    def write_json(self, name, data):
        from .diagnostics import _jsonable

        self.path(name).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True))

    def write_rows(self, name, header, rows):
        with self.path(name).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) for v in row])

    @property
    def failures(self):
        return sorted(k for k, v in self.monitors.items() if not v["pass"])


def _versions():
    import matplotlib
    import scipy
    import sklearn

    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__,
            "matplotlib": matplotlib.__version__, "emhd_cascade": __version__}


# ---------------------------------------------------------------------------
# modes

def mode_root(run: Run):
    from .cascade_ode import solve_root

    A = run.cfg["root"]["A"]
    A = run.cfg["params"]["A"] if A is None else A
    a = solve_root(A)
    resid = abs(A * (1 - math.exp(-a)) - a)
    lo, hi = math.log(A), 2 * (A - 1)
    ok = lo < a < hi
    print(f"A = {A}: a = {a:.15g}  residual = {resid:.3g}  ln A = {lo:.6g} < a < 2(A-1) = {hi:.6g}:"
          f" {'ok' if ok else 'VIOLATED'}")
    run.monitor("root_residual", resid <= 1e-12, residual=resid)
    run.monitor("root_bounds", ok, a=a, lower=lo, upper=hi)
    run.write_json("root.json", {"A": A, "a": a, "residual": resid, "lower": lo, "upper": hi})


def mode_selftest(run: Run):
    from .singular_integral import analytic_battery

    res = analytic_battery()
    for name, v in res.items():
        print(f"{name:24s} error {v['error']:.3e}  tol {v['tol']:.0e}  "
              f"{'pass' if v['pass'] else 'FAIL'}")
        run.monitor(f"hilbert_{name}", v["pass"], error=v["error"], tol=v["tol"])
    run.write_json("hilbert_selftest.json", res)


def _cascade_rate(run: Run, params: ModelParams, c):
    """Constant-coupling ODE run with the lemma checks and the rate fit."""
    from .cascade_ode import integrate, ratio_monotonicity, solve_root, verify_integral_bound
    from .diagnostics import blowup_rate_fit, rate_series_from_trajectory

    num = run.cfg["numerics"]
    cp = params.cascade_params(delta=c["delta"])
    a = solve_root(cp.A)
    traj = integrate(cp, -a, rtol=num["rtol"], per_decade=num["per_decade"],
                     t_min_abs=c["t_min_abs"], include_b=params.include_b_in_ode)
    traj.write_csv(run.path("trajectory.csv"))
    mono = ratio_monotonicity(traj)
    integ = verify_integral_bound(traj, cp, include_b=params.include_b_in_ode)
    T, M = rate_series_from_trajectory(traj)
    fit = blowup_rate_fit(T, M, window=tuple(c["fit_window"]))
    run.monitor("ratio_monotonicity", mono["pass"], worst=mono["worst_violation"])
    run.monitor("integral_upper", integ["upper_pass"], integral=integ["integral"],
                bound=integ["upper_bound"])
    run.monitor("integral_lower", integ["lower_pass"], integral=integ["integral"],
                bound=integ["lower_bound"])
    run.monitor("rate_slope", abs(fit["slope"] + 1) <= c["slope_tol"], slope=fit["slope"])
    run.monitor("rate_band", fit["band_ratio"] <= c["band_max"], band=fit["band_ratio"])
    if run.plots:
        from .plots import rate_fit_plot

        rate_fit_plot(T, M, fit, run.path("rate_fit.svg"))
    return traj, fit, {"monotonicity": mono, "integral": integ}


def mode_cascade(run: Run):
    from .diagnostics import DiagnosticsReport, run_id

    c = run.cfg["cascade"]
    params = model_params(run.cfg, c["n"])
    _, fit, checks = _cascade_rate(run, params, c)
    print(f"rate fit slope {fit['slope']:.5f}  band {fit['band_ratio']:.4g}  "
          f"monotonicity {checks['monotonicity']['worst_violation']:.2e}")
    rep = DiagnosticsReport(params.to_dict(), run_id(run.cfg), rate_fit=fit,
                            monitors=dict(run.monitors))
    run.path("report.json").write_text(rep.to_json())


def _embed_atlas(cfg, section):
    from .atlas import initial_atlas

    s = cfg[section]
    params = model_params(cfg, s["n"])
    return params, initial_atlas(params)


def mode_direct(run: Run):
    from .direct_solver import SpectralState, integrate, periodic_embedding
    from .fields import write_field_csv

    s = run.cfg["direct"]
    params, atlas = _embed_atlas(run.cfg, "direct")
    g, B0 = periodic_embedding(atlas, s["length"], s["n_points"])
    st = SpectralState.from_values(g, B0, mu=params.mu, alpha=params.alpha)
    marks = np.linspace(atlas.t, atlas.t - s["tau"], s["checkpoints"] + 1)[1:]
    res = integrate(st, atlas.t - s["tau"], b=params.b, checkpoints=marks)
    for i, state in enumerate(res.states):
        write_field_csv(run.path(f"direct_{i}.csv"), state.field())
    run.write_rows("direct_series.csv", ["t", "max_abs_B", "max_abs_B_xxx"],
                   [(st_.t, np.max(np.abs(st_.values())), np.max(np.abs(st_.derivative(3))))
                    for st_ in res.states])
    run.monitor("direct_completed", res.stop_reason == "completed", reason=res.stop_reason)
    run.monitor("direct_mean", res.mean_drift <= 1e-10, drift=res.mean_drift)
    print(f"direct run: {res.steps} steps, stop = {res.stop_reason}, mean drift {res.mean_drift:.2e}")


def mode_crosscheck(run: Run):
    from .direct_solver import crosscheck

    s = run.cfg["crosscheck"]
    params, atlas = _embed_atlas(run.cfg, "crosscheck")
    res = crosscheck(atlas, s["tau"], s["length"], s["n_points"])
    slim = {k: v for k, v in res.items() if k not in ("direct", "cascade")}
    run.write_json("crosscheck.json", slim)
    run.monitor("crosscheck", res["rel_l2_increment"] <= s["tol"], **slim)
    print(f"crosscheck tau = {s['tau']:.3g}: relative L2 increment difference "
          f"{res['rel_l2_increment']:.3e} (tol {s['tol']})")


def _coupled(run: Run, params: ModelParams):
    from .profiles import (bootstrap_holds, energy_shape, evolve, find_lifespan,
                           make_seed_profile, support_tracker)

    num = run.cfg["numerics"]
    seed = make_seed_profile(params.r, params.points_per_bubble, params.margin)
    life = {"T": params.T} if params.T is not None else find_lifespan(params, seed)
    res = evolve(params, life["T"], steps=num["steps"], seed=seed, scheme=num["scheme"])
    trk = support_tracker(res.times, res.u_fields, seed.grid, params.r)
    n1 = params.n + 1
    header = ["t"] + [f"hdot4_{k}" for k in range(n1)] + [f"E{i + 1}" for i in range(8)]
    agg = res.energies.sum(axis=1)
    run.write_rows("monitors.csv", header,
                   [np.concatenate([[t], h, e]) for t, h, e in zip(res.times, res.hdot4, agg)])
    run.monitor("bootstrap", bootstrap_holds(res), max_hdot4=float(res.hdot4.max()),
                max_displacement=trk["max_displacement"], T=life["T"])
    shape = energy_shape(res)
    run.monitor("gronwall_shape", shape["spread"] <= 2.0, K=shape["K"], spread=shape["spread"])
    worst = shape["worst_factor"]
    run.monitor("energy_ratios", worst <= 2.0, worst_factor=worst)
    if run.plots:
        from .plots import monitor_plot

        monitor_plot(res.times, res.hdot4, params.epsilon, run.path("hdot4.svg"))
    return res, life


def mode_diagnose(run: Run):
    from .diagnostics import (DiagnosticsReport, cascade_snapshot, holder_estimate, holder_time,
                              ode_snapshots, run_id, selfsim_feasibility, selfsim_probe,
                              synthetic_selfsimilar, weight_power)

    cfg = run.cfg
    d = cfg["diagnose"]
    params = model_params(cfg, cfg["cascade"]["n"])
    _, fit, _ = _cascade_rate(run, params, cfg["cascade"])

    h = d["holder"]
    hp = params.replace(A=h["A"], r=h["r"], n=h["n"])
    snap = cascade_snapshot(hp, holder_time(hp))
    hol = holder_estimate(snap, h["random_pairs"])
    sp = hol["s_predicted"]
    run.monitor("holder_slope", 0.5 * sp <= hol["s_measured"] <= 1.5 * sp,
                measured=hol["s_measured"], predicted=sp)
    run.monitor("holder_pairs", hol["min_implied_exponent"] >= 0.5 * sp
                and hol["random_above_envelope"] == 0, min_local=hol["min_implied_exponent"])

    s = d["selfsim"]
    cs = np.linspace(-0.5, s["c_max"], s["c_count"] + 1)[1:]
    table = selfsim_feasibility(cs)
    run.monitor("selfsim_feasibility", not any(row["feasible"] for row in table),
                count=len(table))
    times = -np.geomspace(s["t_hi"], s["t_lo"], s["snapshots"])
    sparams = params.replace(n=s["n"])
    snaps = ode_snapshots(sparams, times)
    control = [synthetic_selfsimilar(t) for t in times]
    probe = {}
    for p in s["weights"]:
        res = selfsim_probe(snaps, weight=weight_power(p))
        neg = selfsim_probe(control, weight=weight_power(p))
        probe[str(p)] = {k: res[k] for k in ("min_pairwise", "max_pairwise", "cauchy_radius",
                                             "consecutive")}
        probe[str(p)]["control_max_pairwise"] = neg["max_pairwise"]
        run.monitor(f"selfsim_control_w{p}", neg["max_pairwise"] < 1e-3,
                    max_pairwise=neg["max_pairwise"])
    first = str(s["weights"][0])
    run.monitor("selfsim_distance", probe[first]["min_pairwise"] >= s["threshold"],
                weight=first, min_pairwise=probe[first]["min_pairwise"],
                cauchy_radius=probe[first]["cauchy_radius"])

    if d["coupled"]:
        _coupled(run, model_params(cfg))

    if run.plots:
        from .diagnostics import rescaled_profiles
        from .plots import holder_plot, profile_overlay_plot

        holder_plot(hol, run.path("holder.svg"))
        y = np.geomspace(1e-2, 1e2, 4000)
        rows, _, _ = rescaled_profiles(snaps, y=y, weight=weight_power(s["weights"][0]))
        profile_overlay_plot(y, rows, times, run.path("selfsim_overlay.svg"), s["weights"][0])

    rep = DiagnosticsReport(params.to_dict(), run_id(cfg), rate_fit=fit,
                            holder={k: v for k, v in hol.items()},
                            selfsim={"probe": probe, "feasibility": table},
                            monitors=dict(run.monitors))
    run.path("report.json").write_text(rep.to_json())
    print(f"rate slope {fit['slope']:.5f}; Hoelder {hol['s_measured']:.5f} vs {sp:.5f}; "
          f"selfsim min distance {probe[first]['min_pairwise']:.4f}")


HANDLERS = {"root": mode_root, "hilbert-selftest": mode_selftest, "cascade": mode_cascade,
            "direct": mode_direct, "crosscheck": mode_crosscheck, "diagnose": mode_diagnose}


def run(cfg: dict) -> int:
    """Execute one resolved configuration; returns the exit status."""
    t0 = time.perf_counter()
    r = Run(cfg)
    status = EXIT_OK
    error = None
    try:
        if cfg["mode"] != "root" and cfg["mode"] != "hilbert-selftest":
            model_params(cfg)  # validate before any computation
        HANDLERS[cfg["mode"]](r)
        status = EXIT_MONITOR if r.failures else EXIT_OK
    except (ConfigurationError, RegimeError, ResolutionError) as exc:
        status, error = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    except (OverflowBreakdown, StiffnessError, StepSizeError, CascadeDegeneracyError,
            CoverageError, FloatingPointError) as exc:
        status, error = EXIT_BREAKDOWN, f"{type(exc).__name__}: {exc}"
    manifest = {"mode": cfg["mode"], "config": cfg, "versions": _versions(),
                "wall_time": time.perf_counter() - t0, "status": status,
                "failures": r.failures, "monitors": r.monitors, "error": error,
                "artifacts": sorted(set(r.artifacts))}
    from .diagnostics import _jsonable, run_id

    manifest["run_id"] = run_id(cfg)
    (r.out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True))
    if error:
        print(error, file=sys.stderr)
    if r.failures:
        print(json.dumps({"failures": r.failures}), file=sys.stderr)
    return status


# ---------------------------------------------------------------------------
# regression diffs

def _numeric_csv(path):
    rows = [line for line in Path(path).read_text().splitlines()
            if line and not line.startswith("#")]
    body = []
    for line in rows:
        try:
            body.append([float(v) for v in line.split(",")])
        except ValueError:
            continue  # header
    return np.array(body)


def _flatten(obj, prefix=""):
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            out.update(_flatten(v, f"{prefix}[{i}]"))
    else:
        out[prefix] = obj
    return out


def diff_runs(manifest_a, manifest_b, rtol=1e-12, atol=0.0) -> dict:
    """Numeric diff of two runs' CSV and JSON artifacts.

    Configuration changes are reported separately from numeric drift.
    Different modes or mismatched artifact shapes raise SchemaMismatchError.
    """
    pa, pb = Path(manifest_a), Path(manifest_b)
    ma, mb = (json.loads(p.read_text()) for p in (pa, pb))
    if ma.get("mode") != mb.get("mode"):
        raise SchemaMismatchError(f"modes differ: {ma.get('mode')} vs {mb.get('mode')}")
    ca, cb = _flatten(ma["config"]), _flatten(mb["config"])
    config = {k: (ca.get(k), cb.get(k)) for k in sorted(set(ca) | set(cb))
              if ca.get(k) != cb.get(k) and not k.startswith("output.")}
    files = {}
    data = [n for n in set(ma["artifacts"]) | set(mb["artifacts"]) if n.endswith((".csv", ".json"))]
    for name in sorted(data):
        fa, fb = pa.parent / name, pb.parent / name
        if not (fa.exists() and fb.exists()):
            raise SchemaMismatchError(f"artifact {name} missing from one run")
        if name.endswith(".csv"):
            A, B = _numeric_csv(fa), _numeric_csv(fb)
            if A.shape != B.shape:
                if config:
                    files[name] = {"config_level": True, "within": True,
                                   "shapes": [list(A.shape), list(B.shape)]}
                    continue
                raise SchemaMismatchError(f"{name}: shapes {A.shape} vs {B.shape}")
            d = np.abs(A - B)
            scale = np.maximum(np.abs(A), np.abs(B))
        else:
            ja, jb = (_flatten(json.loads(f.read_text())) for f in (fa, fb))
            if set(ja) != set(jb) and not config:
                raise SchemaMismatchError(f"{name}: keys differ")
            keys = [k for k in ja if k in jb and isinstance(ja[k], (int, float)) and not isinstance(ja[k], bool)
                    and isinstance(jb[k], (int, float))]
            A = np.array([ja[k] for k in keys], float)
            B = np.array([jb[k] for k in keys], float)
            d, scale = np.abs(A - B), np.maximum(np.abs(A), np.abs(B))
        max_abs = float(d.max()) if d.size else 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(scale > 0, d / scale, 0.0)
        max_rel = float(rel.max()) if rel.size else 0.0
        files[name] = {"max_abs": max_abs, "max_rel": max_rel,
                       "within": bool(np.all(d <= atol + rtol * scale))}
    return {"mode": ma["mode"], "config_changes": config, "files": files,
            "identical": not config and all(f.get("max_abs") == 0 for f in files.values()),
            "within_tolerance": all(f["within"] for f in files.values())}


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    ap = argparse.ArgumentParser(prog="emhd-cascade", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="TOML or JSON configuration file")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted config override, repeatable (e.g. params.A=3)")
    ap.add_argument("--seed-profile", metavar="r=VALUE", help="seed profile support radius")
    ap.add_argument("--plots", choices=("on", "off"))
    ap.add_argument("--diff", nargs=2, metavar=("MANIFEST_A", "MANIFEST_B"),
                    help="compare two runs instead of running")
    ap.add_argument("--rtol", type=float, default=1e-12, help="tolerance for --diff")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _limit_threads():
    n = os.environ.get("EMHD_CASCADE_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    try:
        return threadpool_limits(limits=max(1, int(n)))
    except ValueError:
        raise ConfigurationError(f"EMHD_CASCADE_THREADS must be an integer, got {n!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.diff:
            rep = diff_runs(*args.diff, rtol=args.rtol)
            print(json.dumps(rep, indent=2, sort_keys=True))
            return EXIT_OK if rep["within_tolerance"] and not rep["config_changes"] else EXIT_MONITOR
        _limit_threads()
        base = read_config(args.config) if args.config else None
        cfg = resolve_config(base, args.mode, args.override, args.seed_profile, args.out,
                             args.plots)
    except (ConfigurationError, SchemaMismatchError, json.JSONDecodeError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CascadeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
