"""Scaling-factor ODE ``x_k' = x_k * sum_{j<k} a_j x_j`` and the checks on it."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import CoverageError, RegimeError, StiffnessError
from .params import CascadeParams

ROOT_TOL = 1e-12


def solve_root(A: float) -> float:
    """Positive root of ``a = A (1 - exp(-a))``.

    Only ``A > 1`` has a positive root; for ``A <= 1`` the single root is
    ``a = 0`` and a :class:`RegimeError` is raised (the printed ``A < 1``
    regime contradicts the bounds ``ln A < a < 2(A-1)``).
    """
    A = float(A)
    if not A > 1:
        raise RegimeError(f"A > 1 required for a positive root (A = {A}); "
                          "the A < 1 regime leaves only a = 0")

    def g(a):
        return A * -math.expm1(-a) - a

    lo = math.log(A)
    hi = 2.0 * A
    if g(lo) <= 0:
        # A so close to 1 that ln A and the root merge in floating point
        lo = 0.5 * lo
    a = brentq(g, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    for _ in range(3):
        dg = A * math.exp(-a) - 1.0
        if dg == 0:
            break
        a -= g(a) / dg
    if abs(g(a)) > ROOT_TOL:
        raise RegimeError(f"root residual {abs(g(a)):.3g} above {ROOT_TOL}")
    return a


@dataclass
class CascadeState:
    t: float
    x: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        if self.x.shape != self.a.shape:
            raise ValueError("x and a must have the same length")
        if np.any(self.x <= 0):
            raise ValueError("scaling factors must be positive")

    @property
    def n(self):
        return self.x.size - 1

    @classmethod
    def initial(cls, A, n, couplings=None):
        x = float(A) ** np.arange(n + 1)
        a = np.zeros(n + 1) if couplings is None else np.broadcast_to(couplings, (n + 1,)).copy()
        return cls(0.0, x, a)


def cascade_rates(x, a, factor=1.0):
    """``rho_k = factor * sum_{j<k} a_j x_j`` (exclusive cumulative sum)."""
    s = np.cumsum(a * x)
    rho = np.empty_like(s)
    rho[0] = 0.0
    rho[1:] = s[:-1]
    return factor * rho


def cascade_rhs(x, a, factor=1.0):
    return x * cascade_rates(x, a, factor)


def _rk4(x, a, dt, factor):
    k1 = cascade_rhs(x, a, factor)
    k2 = cascade_rhs(x + 0.5 * dt * k1, a, factor)
    k3 = cascade_rhs(x + 0.5 * dt * k2, a, factor)
    k4 = cascade_rhs(x + dt * k3, a, factor)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _underflow(dt, t, x, a, factor):
    scale = max(abs(t), 1.0 / max(float(np.max(np.abs(cascade_rates(x, a, factor)))), 1e-300))
    return abs(dt) < 1e-15 * min(scale, 1.0)


def step_cascade(state: CascadeState, params: CascadeParams, dt: float, couplings=None,
                 rtol=1e-3, include_b=True):
    """One accepted RK4 step; returns ``(new_state, dt_used, dt_suggested)``.

    The local error is estimated by step doubling; the step is halved until
    the relative error is below ``rtol`` and every ``x_k`` stays positive.
    """
    if dt == 0:
        raise ValueError("dt must be nonzero")
    a = state.a if couplings is None else np.broadcast_to(np.asarray(couplings, float),
                                                          state.x.shape)
    if not np.all(np.isfinite(a)):
        raise ValueError("couplings must be finite")
    factor = float(params.b) if include_b else 1.0
    x = state.x
    while True:
        if _underflow(dt, state.t, x, a, factor):
            raise StiffnessError(f"step size underflow at t = {state.t:.6g} (dt = {dt:.3g})")
        with np.errstate(over="ignore", invalid="ignore"):
            full = _rk4(x, a, dt, factor)
            half = _rk4(_rk4(x, a, 0.5 * dt, factor), a, 0.5 * dt, factor)
        ok = np.all(np.isfinite(half)) and np.all(half > 0) and np.all(full > 0)
        if ok:
            err = float(np.max(np.abs(half - full) / np.abs(half))) / 15.0
            if err <= rtol:
                grow = 2.0 if err == 0 else min(2.0, 0.9 * (rtol / err) ** 0.2)
                new = CascadeState(state.t + dt, half, np.array(a))
                return new, dt, dt * max(grow, 1.0)
        dt *= 0.5


@dataclass
class Trajectory:
    """Every accepted step of a cascade run; ``checkpoint`` marks log-uniform times."""

    t: np.ndarray
    x: np.ndarray
    a: np.ndarray
    checkpoint: np.ndarray
    params: CascadeParams | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.x.shape[1] - 1

    def states(self):
        for t, x, a in zip(self.t, self.x, self.a):
            yield CascadeState(float(t), x, a)

    def checkpoints(self):
        idx = np.flatnonzero(self.checkpoint)
        return self.t[idx], self.x[idx], self.a[idx]

    def to_csv(self) -> str:
        n = self.n
        buf = io.StringIO()
        head = ["t"] + [f"x_{k}" for k in range(n + 1)] + [f"a_{k}" for k in range(n + 1)]
        buf.write(",".join(head) + "\n")
        for t, x, a in zip(self.t, self.x, self.a):
            buf.write(",".join(repr(float(v)) for v in np.concatenate([[t], x, a])) + "\n")
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv())


def log_checkpoints(t_end, t_min_abs, per_decade=20):
    """Times ``-|t|`` uniform in ``log|t|`` between ``t_min_abs`` and ``|t_end|``."""
    hi = abs(t_end)
    lo = min(t_min_abs, hi)
    m = max(2, int(math.ceil(per_decade * math.log10(hi / lo))) + 1)
    return np.sign(t_end) * np.geomspace(lo, hi, m)


def integrate(params: CascadeParams, t_end: float, couplings=None, state=None, rtol=1e-3,
              checkpoints=None, per_decade=20, t_min_abs=None, include_b=True,
              max_steps=2_000_000) -> Trajectory:
    """Integrate from ``state`` (default ``x_k = A^k`` at t = 0) to ``t_end``.

    ``couplings`` is an array, a callable ``(t, x) -> a`` refreshed every step,
    or None for the constant floor ``delta``.  The run lands exactly on every
    checkpoint time (log-uniform in ``|t|`` by default).
    """
    if state is None:
        state = CascadeState.initial(params.A, params.n)
    if couplings is None:
        couplings = np.full(params.n + 1, float(params.delta))
    fn = couplings if callable(couplings) else (lambda t, x, c=np.asarray(couplings, float): c)
    direction = 1.0 if t_end > state.t else -1.0
    if checkpoints is None:
        span = abs(t_end - state.t)
        lo = t_min_abs if t_min_abs is not None else span * 1e-12
        if state.t == 0:
            checkpoints = log_checkpoints(t_end, lo, per_decade)
        else:
            checkpoints = np.linspace(state.t, t_end, per_decade + 1)[1:]
    marks = np.unique(np.concatenate([np.asarray(checkpoints, float), [t_end]]))
    marks = marks[(marks - state.t) * direction > 0]
    marks = marks[np.argsort(direction * marks)]

    a0 = np.broadcast_to(np.asarray(fn(state.t, state.x), float), state.x.shape)
    state = CascadeState(state.t, state.x, a0)
    rate = float(np.max(np.abs(cascade_rates(state.x, a0, params.b if include_b else 1.0))))
    dt = direction * min(abs(t_end - state.t), 1e-3 / max(rate, 1e-300))
    ts, xs, as_, cp = [state.t], [state.x.copy()], [a0.copy()], [True]
    mi = 0
    steps = 0
    while mi < marks.size:
        target = marks[mi]
        a = np.broadcast_to(np.asarray(fn(state.t, state.x), float), state.x.shape)
        remaining = target - state.t
        hit = abs(dt) >= abs(remaining)
        trial = remaining if hit else dt
        state, used, dt_next = step_cascade(CascadeState(state.t, state.x, a), params, trial,
                                            rtol=rtol, include_b=include_b)
        landed = hit and used == trial
        if landed:
            state.t = float(target)
            mi += 1
        else:
            dt = direction * abs(dt_next)
        if landed:
            dt = direction * max(abs(dt), abs(dt_next))
        ts.append(state.t)
        xs.append(state.x.copy())
        as_.append(state.a.copy())
        cp.append(landed)
        steps += 1
        if steps > max_steps:
            raise StiffnessError(f"more than {max_steps} steps before t = {t_end}")
    return Trajectory(np.array(ts), np.array(xs), np.array(as_), np.array(cp), params,
                      {"rtol": rtol, "include_b": include_b})


# ---------------------------------------------------------------------------
# checks

def _hermite_integral(t, f, df):
    """Integral of the piecewise cubic Hermite interpolant (trapezoid + end-slope correction)."""
    h = np.diff(t)
    return float(np.sum(h / 2 * (f[1:] + f[:-1]) - h ** 2 / 12 * (df[1:] - df[:-1])))


def verify_integral_bound(traj: Trajectory, params: CascadeParams, rel_slack=1e-6,
                          include_b=True) -> dict:
    """``int_{-a}^0 x_n dt`` against ``a/delta_min`` (upper) and ``a/delta_max`` (reversed)."""
    a = solve_root(params.A)
    t = traj.t
    order = np.argsort(t)
    t, x, cpl = t[order], traj.x[order], traj.a[order]
    if t[0] > -a * (1 - 1e-12) or t[-1] < 0:
        raise CoverageError(f"trajectory covers [{t[0]:.6g}, {t[-1]:.6g}], need [-a, 0] "
                            f"with a = {a:.6g}")
    keep = t >= -a
    i0 = max(int(np.argmax(keep)) - 1, 0)
    t, x, cpl = t[i0:], x[i0:], cpl[i0:]
    factor = float(params.b) if include_b else 1.0
    xn = x[:, -1]
    dxn = np.array([cascade_rhs(xi, ai, factor)[-1] for xi, ai in zip(x, cpl)])
    total = _hermite_integral(t, xn, dxn)
    if t[0] < -a:
        # remove the piece on [t0, -a] with the Hermite cubic of the first interval
        h = t[1] - t[0]
        s = (-a - t[0]) / h
        f0, f1, d0, d1 = xn[0], xn[1], dxn[0] * h, dxn[1] * h
        # integral over [0, s] of the cubic Hermite basis combination
        h00 = s - s ** 3 + s ** 4 / 2
        h10 = s ** 2 / 2 - 2 * s ** 3 / 3 + s ** 4 / 4
        h01 = s ** 3 - s ** 4 / 2
        h11 = -s ** 3 / 3 + s ** 4 / 4
        total -= h * (h00 * f0 + h10 * d0 + h01 * f1 + h11 * d1)
    n = traj.n
    window = cpl[:, :max(n, 1)] * factor
    dmin = float(np.min(window))
    dmax = float(np.max(window))
    upper = a / dmin if dmin > 0 else math.inf
    lower = a / dmax if dmax > 0 else 0.0
    return {
        "a": a,
        "integral": total,
        "upper_bound": upper,
        "lower_bound": lower,
        "delta_min": dmin,
        "delta_max": dmax,
        "upper_pass": bool(total <= upper * (1 + rel_slack)),
        "lower_pass": bool(total >= lower * (1 - rel_slack)),
        "rel_slack": rel_slack,
    }


def ratio_monotonicity(traj: Trajectory, rel_slack=1e-10) -> dict:
    """Worst relative decrease of ``x_n'/x_k'`` (``n' > k'``) along increasing t."""
    order = np.argsort(traj.t)
    lx = np.log(traj.x[order])
    worst = 0.0
    where = None
    n1 = lx.shape[1]
    for k in range(n1 - 1):
        lr = lx[:, k + 1:] - lx[:, [k]]
        drop = -np.diff(lr, axis=0)
        m = float(np.max(drop)) if drop.size else 0.0
        if m > worst:
            worst = m
            i, j = np.unravel_index(int(np.argmax(drop)), drop.shape)
            where = {"k": k, "n": int(k + 1 + j), "t": float(traj.t[order][i])}
    # log-ratio drop d corresponds to a relative decrease 1 - exp(-d)
    rel = -math.expm1(-worst) if worst > 0 else 0.0
    return {"worst_violation": rel, "at": where, "pass": bool(rel <= rel_slack),
            "negative_couplings": bool(np.any(traj.a < 0))}


def coupling_coefficients(atlas) -> np.ndarray:
    """``a_j = d^2 H W_j (0)`` for every profile of the atlas (far-field kernel)."""
    from .singular_integral import coupling_from_profiles

    return coupling_from_profiles(atlas.grid, atlas.W)
