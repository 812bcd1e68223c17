"""Periodic pseudo-spectral solver for ``B_t = -2bJB_x + b H(B_xx) B`` with ``B_x = HJ``."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, OverflowBreakdown
from .fields import Grid, SampledField
from .params import check_real


@dataclass(frozen=True, eq=False)
class SpectralState:
    """rfft spectrum of B on a periodic grid, plus time and optional dissipation."""

    grid: Grid
    b_hat: np.ndarray
    t: float = 0.0
    mu: float = 0.0
    alpha: float = 2.0

    def __post_init__(self):
        self.grid.require_power_of_two()
        if self.b_hat.shape != (self.grid.n_points // 2 + 1,):
            raise ConfigurationError("spectrum length must be n_points // 2 + 1")
        if self.mu < 0 or self.alpha <= 0:
            raise ConfigurationError("mu >= 0 and alpha > 0 required")

    @classmethod
    def from_values(cls, grid: Grid, values, t=0.0, mu=0.0, alpha=2.0, dealias=True):
        spec = np.fft.rfft(np.asarray(values, dtype=float))
        if dealias:
            spec = spec * dealias_mask(grid.n_points)
        return cls(grid, spec, t, mu, alpha)

    @property
    def k(self):
        return 2 * np.pi * np.fft.rfftfreq(self.grid.n_points, d=self.grid.h)

    def values(self):
        return np.fft.irfft(self.b_hat, n=self.grid.n_points)

    def field(self) -> SampledField:
        return SampledField(self.grid, self.values())

    def derivative(self, m):
        return np.fft.irfft((1j * self.k) ** m * self.b_hat, n=self.grid.n_points)


def dealias_mask(n):
    m = np.ones(n // 2 + 1)
    m[np.arange(n // 2 + 1) > n // 3] = 0.0
    return m


def _hilbert_r(spec):
    """Hilbert multiplier ``-i sgn(k)`` on an rfft spectrum (zero and Nyquist modes dropped)."""
    out = -1j * spec
    out[0] = 0.0
    if spec.size > 1:
        out[-1] = 0.0
    return out


def j_from_b(B: SampledField, check=True) -> SampledField:
    """``J = -H(B_x)`` (zero mean); verifies ``HJ = B_x`` spectrally."""
    g = B.grid
    g.require_power_of_two()
    k = 2 * np.pi * np.fft.rfftfreq(g.n_points, d=g.h)
    bx = 1j * k * np.fft.rfft(B.values)
    if g.n_points % 2 == 0:
        bx[-1] = 0.0
    jh = -_hilbert_r(bx)
    if check:
        resid = np.max(np.abs(_hilbert_r(jh) - bx))
        scale = max(np.max(np.abs(bx)), 1e-300)
        if resid > 1e-10 * scale:
            raise ConfigurationError(f"H J = B_x check failed ({resid / scale:.3g})")
    return SampledField(g, np.fft.irfft(jh, n=g.n_points))


def nonlinear_terms(values, h, b):
    """Transport ``-2bJB_x`` and stretching ``b H(B_xx) B`` on a periodic grid (no dealiasing)."""
    n = values.size
    k = 2 * np.pi * np.fft.rfftfreq(n, d=h)
    spec = np.fft.rfft(values)
    bx_hat = 1j * k * spec
    if n % 2 == 0:
        bx_hat[-1] = 0.0
    J = np.fft.irfft(-_hilbert_r(bx_hat), n=n)
    Bx = np.fft.irfft(bx_hat, n=n)
    HBxx = np.fft.irfft(_hilbert_r(-(k ** 2) * spec), n=n)
    return -2 * b * J * Bx, b * HBxx * values


def rhs_eval(state: SpectralState, b=1.0, nonlinear=True, dissipation=True) -> np.ndarray:
    """Spectrum of ``-2bJB_x + b H(B_xx) B - mu |k|^alpha B``, products dealiased by 2/3."""
    n = state.grid.n_points
    mask = dealias_mask(n)
    out = np.zeros_like(state.b_hat)
    if nonlinear:
        spec = state.b_hat * mask
        t1, t2 = nonlinear_terms(np.fft.irfft(spec, n=n), state.grid.h, b)
        out = np.fft.rfft(t1 + t2) * mask
    if dissipation and state.mu > 0:
        out = out - state.mu * np.abs(state.k) ** state.alpha * state.b_hat
    if not np.all(np.isfinite(out)):
        raise OverflowBreakdown(f"non-finite spectrum at t = {state.t:.6g}", t=state.t)
    return out


@dataclass
class DirectRun:
    states: list
    stop_reason: str
    mean_drift: float
    steps: int
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> SpectralState:
        return self.states[-1]


def stable_dt(state: SpectralState, b=1.0, cfl=0.5, safety=0.5):
    """Step bound from transport speed and the stretching term's ``|k|^2`` response."""
    n = state.grid.n_points
    kmax = 2 * np.pi / state.grid.h * (n // 3) / n
    B = state.values()
    J = j_from_b(SampledField(state.grid, B), check=False).values
    lims = []
    vmax = 2 * abs(b) * float(np.max(np.abs(J)))
    if vmax > 0:
        lims.append(cfl * state.grid.h / vmax)
    bmax = abs(b) * float(np.max(np.abs(B)))
    if bmax > 0:
        lims.append(safety * 2.8 / (bmax * kmax ** 2))
    return min(lims) if lims else np.inf


def integrate(state: SpectralState, t_end: float, b=1.0, dt=None, checkpoints=None,
              nonlinear=True, blowup_factor=0.1, max_steps=1_000_000) -> DirectRun:
    """Integrating-factor RK4 from ``state.t`` to ``t_end``.

    The dissipation ``mu |k|^alpha`` is integrated exactly.  The run stops
    early (``stop_reason = 'blowup'``) once ``max|B_xxx| * dt`` exceeds
    ``blowup_factor``, returning the partial trajectory.
    """
    t_end = check_real("t_end", t_end)
    direction = 1.0 if t_end >= state.t else -1.0
    if direction < 0 and state.mu > 0:
        raise ConfigurationError("backward integration with dissipation is ill-posed")
    n = state.grid.n_points
    mask = dealias_mask(n)
    lin = -state.mu * np.abs(state.k) ** state.alpha
    marks = [] if checkpoints is None else sorted(
        (c for c in checkpoints if (c - state.t) * direction > 0), key=lambda c: direction * c)
    marks = list(marks) + [t_end]
    mean0 = float(state.b_hat[0].real) / n
    states = [state]
    steps = 0
    reason = "completed"
    s = state
    mi = 0
    while mi < len(marks):
        h = stable_dt(s, b) if nonlinear else np.inf
        if dt is not None:
            h = min(h, abs(dt))
        if not np.isfinite(h):
            h = abs(marks[mi] - s.t)
        remaining = marks[mi] - s.t
        landed = h >= abs(remaining)
        step = remaining if landed else direction * h
        d3 = float(np.max(np.abs(s.derivative(3))))
        if d3 * abs(step) > blowup_factor and nonlinear:
            reason = "blowup"
            break
        E = np.exp(lin * step / 2)
        E2 = E * E

        def N(spec, t):
            return rhs_eval(replace(s, b_hat=spec, t=t), b, nonlinear, dissipation=False)

        u = s.b_hat
        k1 = N(u, s.t)
        k2 = N(E * (u + step / 2 * k1), s.t + step / 2)
        k3 = N(E * u + step / 2 * k2, s.t + step / 2)
        k4 = N(E2 * u + step * E * k3, s.t + step)
        new = E2 * u + step / 6 * (E2 * k1 + 2 * E * (k2 + k3) + k4)
        new = new * mask
        if not np.all(np.isfinite(new)):
            raise OverflowBreakdown(f"non-finite state at t = {s.t:.6g}", t=s.t)
        t_new = marks[mi] if landed else s.t + step
        s = replace(s, b_hat=new, t=float(t_new))
        steps += 1
        if landed:
            states.append(s)
            mi += 1
        if steps > max_steps:
            reason = "max_steps"
            break
    if states[-1] is not s:
        states.append(s)
    drift = abs(float(s.b_hat[0].real) / n - mean0)
    return DirectRun(states, reason, drift, steps)


def periodic_embedding(atlas, length=16.0, n_points=2 ** 17):
    """Sample the assembled ``B_n`` on a centred periodic grid."""
    from .assembly import evaluate

    g = Grid.periodic(length, n_points, centered=True)
    return g, evaluate(atlas, g.points, 0, "spectral")


def crosscheck(atlas, tau: float, length=16.0, n_points=2 ** 17, profile_dt=None) -> dict:
    """Evolve assembled data by both solvers over ``[-tau, 0]`` and compare.

    The cascade side steps the profiles; the direct side integrates the
    periodic embedding backward.  Increments ``B(-tau) - B(0)`` are compared
    in relative L^2, since B itself barely moves over a short window.
    """
    from .assembly import evaluate
    from .profiles import dispersive_limit, step_profiles

    p = atlas.params
    g, B0 = periodic_embedding(atlas, length, n_points)
    st = SpectralState.from_values(g, B0)
    run = integrate(st, atlas.t - tau, b=p.b)
    if run.stop_reason != "completed":
        raise OverflowBreakdown(f"direct solver stopped early ({run.stop_reason})",
                                t=run.final.t)
    Bd = run.final.values()
    dt = -0.5 * dispersive_limit(atlas) if profile_dt is None else -abs(profile_dt)
    nsteps = int(np.ceil(tau / abs(dt)))
    dt = -tau / nsteps
    at = atlas
    for _ in range(nsteps):
        at = step_profiles(at, dt)
    Bc = evaluate(at, g.points, 0, "spectral")
    dd = Bd - B0
    dc = Bc - B0
    rel_inc = float(np.linalg.norm(dd - dc) / max(np.linalg.norm(dc), 1e-300))
    rel_B = float(np.linalg.norm(Bd - Bc) / max(np.linalg.norm(Bc), 1e-300))
    image = float(np.max(np.abs(B0[np.abs(g.points) > length / 2 - 1])))
    return {"tau": tau, "rel_l2_increment": rel_inc, "rel_l2_state": rel_B,
            "direct_steps": run.steps, "profile_steps": nsteps,
            "mean_drift": run.mean_drift, "edge_amplitude": image,
            "direct": run, "cascade": at}
