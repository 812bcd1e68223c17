"""Blow-up rate fit, Hoelder exponent, and the self-similarity obstruction."""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .atlas import BubbleAtlas
from .cascade_ode import CascadeState, integrate, solve_root
from .errors import ConfigurationError, CoverageError, PrecisionWarning, ProbeError
from .params import ModelParams


def run_id(config: dict) -> str:
    """Short content hash of a configuration (stable key order)."""
    blob = json.dumps(config, sort_keys=True, default=float).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


@dataclass
class DiagnosticsReport:
    params: dict
    run_id: str
    rate_fit: dict | None = None
    holder: dict | None = None
    selfsim: dict | None = None
    monitors: dict = field(default_factory=dict)

    def passed(self) -> bool:
        return all(bool(m.get("pass", True)) for m in self.monitors.values()
                   if isinstance(m, dict))

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)


# ---------------------------------------------------------------------------
# blow-up rate

def rate_series_from_trajectory(traj):
    """``(|t|, sup_k x_k)`` at the checkpoints of a cascade trajectory (t < 0)."""
    t, x, _ = traj.checkpoints()
    keep = t < 0
    return -t[keep], np.max(x[keep], axis=1)


def rate_series_from_atlases(atlases):
    from .assembly import max_third_derivative

    t = np.array([a.t for a in atlases])
    M = np.array([max_third_derivative(a) for a in atlases])
    keep = t < 0
    return -t[keep], M[keep]


def blowup_rate_fit(abs_t, M, window=None, min_decades=2.0) -> dict:
    """Least-squares slope of ``log M`` against ``log|t|`` plus the band ``max(M|t|)/min(M|t|)``."""
    abs_t = np.asarray(abs_t, dtype=float)
    M = np.asarray(M, dtype=float)
    if window is not None:
        lo, hi = window
        sel = (abs_t >= lo * (1 - 1e-12)) & (abs_t <= hi * (1 + 1e-12))
        abs_t, M = abs_t[sel], M[sel]
    if abs_t.size < 3 or math.log10(abs_t.max() / abs_t.min()) < min_decades - 1e-9:
        raise CoverageError(f"rate fit needs >= {min_decades} decades of |t|")
    if np.any(M <= 0):
        raise ProbeError("rate fit needs positive M")
    lx, ly = np.log(abs_t), np.log(M)
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = slope * lx + icpt
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss if ss > 0 else 1.0
    band = M * abs_t
    return {"slope": float(slope), "intercept": float(icpt), "r2": r2,
            "window": (float(abs_t.min()), float(abs_t.max())), "points": int(abs_t.size),
            "band_ratio": float(band.max() / band.min())}


# ---------------------------------------------------------------------------
# snapshots

def cascade_snapshot(params: ModelParams, t: float, seed=None, delta=None) -> BubbleAtlas:
    """Atlas at time t with seed profiles and ``x_k`` from the constant-coupling cascade.

    The couplings are frozen at ``H phi''(0)`` (the value the coupled run
    keeps them near); profiles stay at the seed.
    """
    from .atlas import initial_atlas

    at = initial_atlas(params, seed)
    d = at.seed.delta0 if delta is None else delta
    if t == 0:
        return at
    cp = params.cascade_params(delta=d)
    traj = integrate(cp, t, rtol=1e-10, checkpoints=[t], include_b=params.include_b_in_ode)
    return at.with_state(t=t, x=traj.x[-1], a=np.full(params.n + 1, d))


def holder_time(params: ModelParams, seed=None) -> float:
    """``t* = -a / (b' delta0)``: there ``x_(k+1)/x_k = A e^(-a)`` for every k."""
    from .profiles import make_seed_profile

    seed = seed or make_seed_profile(params.r, params.points_per_bubble, params.margin)
    return -solve_root(params.A) / (params.ode_factor * seed.delta0)


def _peak_xi(atlas: BubbleAtlas, k: int, m=3):
    """Location and value of ``max |d^m W_k|`` on the reference grid."""
    from .assembly import profile_peak

    return profile_peak(atlas, k, m)


def holder_estimate(atlas: BubbleAtlas, random_pairs=200, rng=0) -> dict:
    """Measured vs predicted Hoelder exponent of ``d^3 B`` at the origin.

    Binding pairs join the ``d^3 W`` peaks of adjacent bubbles and give the
    fitted slope.  Random within-bubble pairs check that no worse quotient
    hides inside a bubble: every pair is filed under the bubble scale it
    lives at, and the local exponent between neighbouring scales is
    ``log(M_(k+1)/M_k) / log(s_(k+1)/s_k)`` with ``M_k`` the supremum of
    increments at scale k (the adjacent-peak difference or the bubble's own
    oscillation, whichever is larger).  Random pairs must stay under ``M_k``.  A Hoelder bound with exponent s forces these
    local exponents to stay at or above s as the scales shrink.
    """
    from .assembly import evaluate

    p = atlas.params
    a = solve_root(p.A)
    s_pred = (a - math.log(p.A)) / (a - math.log(p.r))
    clamped = min(max(s_pred, 0.0), 0.5)
    active = atlas.n + 1
    if active < 10:
        warnings.warn(f"only {active} bubbles; Hoelder slope is imprecise", PrecisionWarning,
                      stacklevel=2)
    xi_p, _ = _peak_xi(atlas, 0)
    peaks = xi_p * atlas.scale
    vals = evaluate(atlas, peaks, 3, "spectral")
    dx = np.abs(peaks[:-1] - peaks[1:])
    dv = np.abs(vals[:-1] - vals[1:])
    slope, icpt = np.polyfit(np.log(dx), np.log(dv), 1)
    from .assembly import profile_derivative

    amp = np.exp(atlas.log_amplitude(0) - 3 * atlas.log_scale)
    osc = np.array([amp[k] * np.ptp(profile_derivative(atlas, k, 3)) for k in range(active)])
    M = np.maximum(dv, osc[:-1])
    gen = np.random.default_rng(rng)
    r = p.r
    count = 0
    outside = 0
    for _ in range(random_pairs):
        k = int(gen.integers(0, active - 1))
        u = gen.uniform(1 - 2 * r, 1 + 2 * r, size=2) * atlas.scale[k]
        f = evaluate(atlas, u, 3, "spectral")
        outside += abs(f[0] - f[1]) > M[k] * (1 + 1e-6)
        count += 1
    ls = np.log(atlas.scale[:-1])
    local = np.diff(np.log(M)) / np.diff(ls)
    quotient = M / dx ** s_pred
    return {"s_measured": float(slope), "s_predicted": s_pred, "s_predicted_clamped": clamped,
            "holder_constant": math.exp(icpt), "pairs_adjacent": int(dx.size),
            "pairs_random": count, "random_above_envelope": int(outside),
            "local_exponents": local,
            "min_implied_exponent": float(local.min()) if local.size else float("nan"),
            "max_quotient": float(quotient.max()), "a": a, "t": atlas.t}


# ---------------------------------------------------------------------------
# self-similarity

def selfsim_feasibility(c_values, params=None) -> list:
    """Limit constraints of dynamic rescaling: ``C_l^-2 = -1/(2c+1)`` for each c."""
    out = []
    for c in np.atleast_1d(np.asarray(c_values, dtype=float)):
        if not c > -0.5:
            raise ConfigurationError(f"c > -1/2 violated (c = {c})")
        cw_inv = -(2 * c + 1)
        cl_inv2 = 1.0 / cw_inv
        out.append({"c": float(c), "Cw_inv": cw_inv, "Cl_inv2": cl_inv2,
                    "feasible": bool(cl_inv2 > 0)})
    return out


class AtlasSnapshot:
    """Self-similarity probe view of a cascade atlas."""

    def __init__(self, atlas: BubbleAtlas):
        self.atlas = atlas
        self.t = atlas.t

    def evaluate(self, x, m=0):
        from .assembly import evaluate

        return evaluate(self.atlas, x, m, "spectral")

    def extent(self):
        """Positive-side interval holding every bubble window."""
        g = self.atlas.grid
        return g.x_min * float(self.atlas.scale.min()), g.x_max * float(self.atlas.scale.max())

    def peak(self):
        """``(max|d^3 B|, location)`` via the prefactor collapse."""
        at = self.atlas
        best = (-1.0, 0.0)
        la = at.log_amplitude(0) - 3 * at.log_scale
        for k in range(at.n + 1):
            xi, v = _peak_xi(at, k)
            M = math.exp(la[k]) * v
            if M > best[0]:
                best = (M, xi * at.scale[k])
        return best


class FunctionSnapshot:
    """Snapshot given by a callable ``f(x, m)`` (used for synthetic families)."""

    def __init__(self, t, f, search=None):
        self.t = t
        self.f = f
        self.search = np.geomspace(1e-8, 1e3, 20001) if search is None else search

    def evaluate(self, x, m=0):
        return self.f(np.asarray(x, dtype=float), m)

    def extent(self):
        return float(self.search[0]), float(self.search[-1])

    def peak(self):
        v = np.abs(self.f(self.search, 3))
        i = int(np.argmax(v))
        lo = self.search[max(i - 1, 0)]
        hi = self.search[min(i + 1, self.search.size - 1)]
        res = minimize_scalar(lambda x: -abs(self.f(np.array([x]), 3)[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-14 * hi})
        return -float(res.fun), float(res.x)


def weight_power(p):
    """Weight ``(1 + y^2)^-p``; p = 1 is the default of the probe."""
    return lambda v: (1.0 + v * v) ** (-p)


def rescaled_profiles(snapshots, y=None, weight=None, rel_spacing=1e-3):
    """Rows ``C_w B(C_l y)`` on a common log grid, normalised in weighted L^2.

    ``C_l`` is the location of ``max|d^3 B|`` and ``C_w = 1/(max|d^3 B| C_l^3)``
    (so the rescaled third derivative peaks at 1 at y = 1).  Odd data are
    compared on ``y > 0`` only.  The default grid covers every snapshot's
    extent after rescaling, so no bubble is cut off at a window edge.
    """
    if weight is None:
        weight = weight_power(1)
    found = []
    for s in snapshots:
        M, Cl = s.peak()
        if not (M > 0 and Cl > 0 and math.isfinite(M)):
            raise ProbeError(f"degenerate scales at t = {s.t}: M = {M}, C_l = {Cl}")
        found.append((M, Cl))
    if y is None:
        lo = min(s.extent()[0] / Cl for s, (_, Cl) in zip(snapshots, found))
        hi = max(s.extent()[1] / Cl for s, (_, Cl) in zip(snapshots, found))
        y = np.exp(np.arange(math.log(lo), math.log(hi) + rel_spacing, rel_spacing))
    dly = np.gradient(np.log(y))
    w = weight(y) * y * dly
    rows = []
    scales = []
    for s, (M, Cl) in zip(snapshots, found):
        Cw = 1.0 / (M * Cl ** 3)
        v = Cw * s.evaluate(Cl * y, 0)
        nrm = math.sqrt(float(np.sum(w * v * v)))
        if not nrm > 0:
            raise ProbeError(f"zero rescaled profile at t = {s.t}")
        rows.append(v / nrm)
        scales.append((Cw, Cl))
    return np.array(rows), w, scales


def selfsim_probe(snapshots, y=None, weight=None, rel_spacing=1e-3) -> dict:
    """Pairwise weighted-L^2 distances between rescaled snapshots.

    Reports the literal minimum pairwise distance and the Cauchy radius
    ``min_i max_j d(i, j)``: the smallest ball (centred on a snapshot) that
    holds every rescaled profile.  Convergence to a fixed profile drives both
    to zero.  The literal minimum also shrinks for trajectories that are only
    discretely self-similar (snapshots one period apart rescale onto each
    other), so the radius is the discriminating number.
    """
    snaps = list(snapshots)
    if len(snaps) < 2:
        raise ProbeError("need at least two snapshots")
    rows, w, scales = rescaled_profiles(snaps, y, weight, rel_spacing)
    m = len(rows)
    d = np.zeros((m, m))
    for i in range(m):
        diff = rows[i][None, :] - rows
        d[i] = np.sqrt(np.sum(w * diff * diff, axis=1))
    off = d[~np.eye(m, dtype=bool)]
    return {"min_pairwise": float(off.min()), "max_pairwise": float(off.max()),
            "cauchy_radius": float(np.min(np.max(d, axis=1))),
            "consecutive": [float(d[i, i + 1]) for i in range(m - 1)],
            "times": [float(s.t) for s in snaps], "scales": scales, "distances": d}


def synthetic_selfsimilar(t, g=None):
    """``u(x,t) = |t|^-1 g(x/|t|)`` with ``g(z) = z^5 exp(-z^2/2)`` (negative control).

    The fifth power keeps the peak of ``|d^3 g|`` away from the origin, so
    ``C_l`` is a genuine interior maximum rather than the edge of the search grid.
    """
    from numpy.polynomial import Polynomial

    T = abs(t)
    if g is None:
        polys = [Polynomial([0, 0, 0, 0, 0, 1])]
        for _ in range(4):
            P = polys[-1]
            polys.append(P.deriv() - Polynomial([0, 1]) * P)

        def g(z, m):
            return polys[m](z) * np.exp(-z * z / 2)

    return FunctionSnapshot(t, lambda x, m: T ** (-1 - m) * g(x / T, m),
                            search=T * np.geomspace(1e-3, 30.0, 20001))


def selfsim_report(snapshots, powers=(1, 4), rel_spacing=1e-3) -> dict:
    """``selfsim_probe`` under each weight ``(1 + y^2)^-p``, keyed by p."""
    snaps = list(snapshots)
    return {int(p): selfsim_probe(snaps, weight=weight_power(p), rel_spacing=rel_spacing)
            for p in powers}


def ode_snapshots(params: ModelParams, times, seed=None, delta=None):
    """Cascade snapshots (seed profiles, constant-coupling ``x_k``) at the given times."""
    from .atlas import initial_atlas

    at0 = initial_atlas(params, seed)
    d = at0.seed.delta0 if delta is None else delta
    cp = params.cascade_params(delta=d)
    ts = np.sort(np.asarray(times, dtype=float))
    traj = integrate(cp, float(ts.min()), rtol=1e-10, checkpoints=ts,
                     include_b=params.include_b_in_ode)
    out = []
    for t in ts:
        i = int(np.argmin(np.abs(traj.t - t)))
        out.append(AtlasSnapshot(at0.with_state(t=float(traj.t[i]), x=traj.x[i],
                                                a=np.full(params.n + 1, d))))
    return out
