"""Composite solution ``B_n = sum_k B_k``: evaluation, norms, residual, tails, checkpoints."""
from __future__ import annotations

import json
import math
import warnings
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .atlas import BubbleAtlas, initial_atlas
from .errors import DivergenceWarning, InvalidFieldError, UnsupportedOrderError
from .fields import (SampledField, homogeneous_sobolev_norm, padded_size, read_field_csv,
                     spectral_derivative, write_field_csv)
from .params import ModelParams
from .singular_integral import interaction_field

__all__ = ["BubbleAtlas", "initial_atlas", "evaluate", "sobolev_norm", "model_residual",
           "tail_report", "truncate", "save_atlas", "load_atlas", "profile_derivative"]


def profile_derivative(atlas: BubbleAtlas, k: int, m: int) -> np.ndarray:
    """``d^m W_k`` on the reference grid (seed and deviation differentiated apart)."""
    h = atlas.grid.h
    return spectral_derivative(atlas.seed.values, h, m) + spectral_derivative(atlas.D[k], h, m)


def _spectral_interp(values, grid, y, m, chunk=4096):
    """``d^m`` of the band-limited interpolant (zero-padded box) at points y."""
    n = values.size
    M = padded_size(n, 2)
    spec = np.fft.rfft(values, n=M) / M
    k = 2 * np.pi * np.fft.rfftfreq(M, d=grid.h)
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    if M % 2 == 0:
        w[-1] = 1.0
    coef = w * spec * (1j * k) ** m
    if m % 2 and M % 2 == 0:
        coef[-1] = 0.0
    out = np.empty(y.size)
    for s in range(0, y.size, chunk):
        ph = np.exp(1j * np.outer(y[s:s + chunk] - grid.x_min, k))
        out[s:s + chunk] = (ph @ coef).real
    return out


def evaluate(atlas: BubbleAtlas, points, m: int = 0, method: str = "cubic") -> np.ndarray:
    """``d^m B_n`` at physical points (m <= 4).

    Each bubble contributes ``x_k^c (r/A)^(dk) s_k^(-m) d^m W_k(x / s_k)``;
    points outside every reference window get exactly 0.  ``method`` is
    ``cubic`` (spline through spectral derivative samples) or ``spectral``
    (band-limited interpolation, used where interpolation error must stay at
    roundoff).
    """
    if int(m) != m or not 0 <= m <= 4:
        raise UnsupportedOrderError(f"derivative order must be 0..4, got {m}")
    m = int(m)
    pts = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise InvalidFieldError("evaluation points must be finite")
    flat = pts.ravel()
    out = np.zeros(flat.size)
    g = atlas.grid
    ls = atlas.log_scale
    la = atlas.log_amplitude(0)
    sign_neg = (-1.0) ** (m + 1)
    for k in range(atlas.n + 1):
        xi = flat / math.exp(ls[k])
        a = np.abs(xi)
        sel = np.flatnonzero((a >= g.x_min) & (a <= g.x_max))
        if sel.size == 0:
            continue
        if method == "spectral":
            vals = _spectral_interp(atlas.seed.values, g, a[sel], m) \
                + _spectral_interp(atlas.D[k], g, a[sel], m)
        elif method == "cubic":
            vals = CubicSpline(g.points, profile_derivative(atlas, k, m))(a[sel])
        else:
            raise ValueError(f"unknown method {method!r}")
        vals = np.where(xi[sel] < 0, sign_neg * vals, vals)
        out[sel] += math.exp(la[k] - m * ls[k]) * vals
    return out.reshape(pts.shape)


def profile_peak(atlas: BubbleAtlas, k: int, m: int = 3):
    """``(xi, max |d^m W_k|)``: grid argmax refined on the band-limited interpolant."""
    g = atlas.grid
    v = np.abs(profile_derivative(atlas, k, m))
    i = int(np.argmax(v))
    lo, hi = g.points[max(i - 1, 0)], g.points[min(i + 1, g.n_points - 1)]

    def f(x):
        y = np.array([x])
        return -abs(_spectral_interp(atlas.seed.values, g, y, m)[0]
                    + _spectral_interp(atlas.D[k], g, y, m)[0])

    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    return float(res.x), max(-float(res.fun), float(v[i]))


def max_third_derivative(atlas: BubbleAtlas) -> float:
    """``max |d^3 B|`` through the prefactor collapse ``sup_k x_k max |d^3 W_k|``.

    Windows of different bubbles are disjoint, so the sup over the line is
    the largest per-bubble peak times its prefactor.
    """
    la = atlas.log_amplitude(0) - 3 * atlas.log_scale
    return max(math.exp(la[k]) * profile_peak(atlas, k, 3)[1] for k in range(atlas.n + 1))


def tail_ratio(params: ModelParams, m: float) -> float:
    """Geometric ratio of consecutive ``||d^m B_k||`` at t = 0: ``A^(c-d) r^(d+1/2-m)``."""
    return params.A ** (params.c - params.d) * params.r ** (params.d + 0.5 - m)


def convergent_limit(params: ModelParams) -> float:
    """Largest m with a summable tail: ``d + 1/2 - (c-d) ln A / ln(1/r)``."""
    return params.d + 0.5 - (params.c - params.d) * math.log(params.A) / math.log(1 / params.r)


def sobolev_norm(atlas: BubbleAtlas, m: float, warn=True) -> dict:
    """``(sum_k ||d^m B_k||^2)^(1/2)`` with per-bubble terms and the tail ratio."""
    m = float(m)
    if m < 0:
        raise UnsupportedOrderError("m must be nonnegative")
    ls = atlas.log_scale
    la = atlas.log_amplitude(0)
    per = np.empty(atlas.n + 1)
    for k, W in enumerate(atlas.profiles):
        per[k] = math.exp(la[k] + (0.5 - m) * ls[k]) * homogeneous_sobolev_norm(W, m)
    ratio = tail_ratio(atlas.params, m)
    if warn and ratio >= 1:
        warnings.warn(f"tail ratio A^(c-d) r^(d+1/2-m) = {ratio:.4g} >= 1 at m = {m}: the "
                      f"bubble sum diverges as n grows (convergent for m < "
                      f"{convergent_limit(atlas.params):.4f})", DivergenceWarning, stacklevel=2)
    return {"m": m, "norm": float(np.sqrt(np.sum(per ** 2))), "per_bubble": per,
            "tail_ratio": ratio, "convergent_limit": convergent_limit(atlas.params),
            "diverges": bool(ratio >= 1)}


def _midpoint(before: BubbleAtlas, after: BubbleAtlas) -> BubbleAtlas:
    return before.with_state(t=0.5 * (before.t + after.t), x=0.5 * (before.x + after.x),
                             a=0.5 * (before.a + after.a), D=0.5 * (before.D + after.D))


def model_residual(before: BubbleAtlas, after: BubbleAtlas, dt: float, params=None) -> dict:
    """Relative L^2 residual of ``B_t = -2bJB_x + b H(B_xx) B`` across one step.

    ``J = -H(B_x)``, so ``-2bJB_x = 2b (d_x H B) B_x``.  The time derivative is
    the centred difference of the two atlases evaluated at fixed physical
    points; the right side uses the midpoint atlas.  Sample points are the
    midpoint atlas's grid nodes inside each support window, weighted by their
    physical spacing.  Normalised by the largest of the three terms.
    """
    p = before.params if params is None else params
    mid = _midpoint(before, after)
    r = p.r
    g = mid.grid
    xi = g.points
    win = (xi >= 1 - 2 * r) & (xi <= 1 + 2 * r)
    Bt, N1, N2, wts = [], [], [], []
    for k in range(mid.n + 1):
        s = mid.scale[k]
        x = xi[win] * s
        bt = (evaluate(after, x, 0, "spectral") - evaluate(before, x, 0, "spectral")) / dt
        amp = math.exp(mid.log_amplitude(0)[k])
        B = amp * mid.W[k][win]
        Bx = amp / s * profile_derivative(mid, k, 1)[win]
        U1 = interaction_field(mid, k, 1).values[win]
        U2 = interaction_field(mid, k, 2).values[win]
        Bt.append(bt)
        N1.append(2 * p.b * U1 * Bx)
        N2.append(p.b * U2 * B)
        wts.append(np.full(x.size, 2 * g.h * s))
    Bt, N1, N2, w = (np.concatenate(v) for v in (Bt, N1, N2, wts))
    R = Bt - N1 - N2

    def nrm(v):
        return float(np.sqrt(np.sum(w * v ** 2)))

    scale = max(nrm(Bt), nrm(N1), nrm(N2))
    return {"residual": nrm(R) / scale if scale > 0 else 0.0, "absolute": nrm(R),
            "norm_Bt": nrm(Bt), "norm_transport": nrm(N1), "norm_stretching": nrm(N2)}


def truncate(atlas: BubbleAtlas, n: int) -> BubbleAtlas:
    """The first ``n + 1`` bubbles of an atlas as an atlas of its own."""
    if not 0 <= n <= atlas.n:
        raise ValueError(f"cannot truncate n = {atlas.n} to {n}")
    return BubbleAtlas(atlas.params.replace(n=n), atlas.seed, atlas.t, atlas.x[:n + 1],
                       atlas.a[:n + 1], atlas.D[:n + 1], dict(atlas.meta))


def tail_report(atlas: BubbleAtlas, other: BubbleAtlas | None = None, N: int = 2,
                window=(0.1, 1.0), m: float = 3.0, samples: int = 4001) -> dict:
    """C^N distance to a coarser truncation on ``+/-window`` and the Hdot^m tail.

    ``other`` defaults to ``truncate(atlas, atlas.n // 2)``.
    """
    if other is None:
        other = truncate(atlas, atlas.n // 2)
    lo, hi = window
    x = np.linspace(lo, hi, samples)
    x = np.concatenate([-x[::-1], x])
    dist = 0.0
    for mm in range(min(N, 4) + 1):
        d = np.max(np.abs(evaluate(atlas, x, mm, "spectral") - evaluate(other, x, mm, "spectral")))
        dist = max(dist, float(d))
    per = sobolev_norm(atlas, m, warn=False)["per_bubble"]
    tails = np.array([per[k + 1:].sum() for k in range(atlas.n + 1)])
    ratios = per[1:] / per[:-1]
    kk = np.arange(per.size)
    slope = float(np.polyfit(kk, np.log(per), 1)[0]) if per.size > 1 else float("nan")
    return {"cN_distance": dist, "N": N, "window": (lo, hi), "n": atlas.n, "n_other": other.n,
            "m": m, "per_bubble": per, "tails": tails, "ratios": ratios,
            "fitted_ratio": math.exp(slope), "predicted_ratio": tail_ratio(atlas.params, m)}


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest plus per-bubble CSV fields

def save_atlas(atlas: BubbleAtlas, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    seed = atlas.seed
    manifest = {
        "params": atlas.params.to_dict(),
        "t": atlas.t,
        "x": [float(v) for v in atlas.x],
        "a": [float(v) for v in atlas.a],
        "seed": {"r": seed.r, "points": seed.grid.n_points, "margin": seed.margin,
                 "orientation": seed.orientation, "delta0": seed.delta0},
        "profiles": [f"profile_{k}.csv" for k in range(atlas.n + 1)],
        "deviations": [f"deviation_{k}.csv" for k in range(atlas.n + 1)],
    }
    for k, W in enumerate(atlas.profiles):
        write_field_csv(d / f"profile_{k}.csv", W)
        write_field_csv(d / f"deviation_{k}.csv", atlas.deviation(k))
    (d / "atlas.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return d


def load_atlas(directory) -> BubbleAtlas:
    from .profiles import make_seed_profile

    d = Path(directory)
    man = json.loads((d / "atlas.json").read_text())
    params = ModelParams.from_dict(man["params"])
    s = man["seed"]
    seed = make_seed_profile(s["r"], s["points"], s["margin"], s["orientation"])
    D = np.array([read_field_csv(d / f).values for f in man["deviations"]])
    return BubbleAtlas(params, seed, man["t"], man["x"], man["a"], D)
