"""Seed profile, profile evolution and the bootstrap / energy monitors.

Each profile obeys the transport-stretching law

    W_t = u W_xi + sigma W,
    u     = (2b / s_k) d_x H B_n(xi s_k) + xi rho_k,
    sigma = b d_x^2 H B_n(xi s_k) - c rho_k,

with ``rho_k = x_k'/x_k`` and ``s_k = x_k (r/A)^k``.  Profiles are stored as
seed plus deviation ``D = W - phi`` on the positive half line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .atlas import BubbleAtlas, initial_atlas
from .cascade_ode import cascade_rates, coupling_coefficients
from .errors import (CascadeDegeneracyError, ConfigurationError, ExtrapolationError,
                     ResolutionError, StepSizeError)
from .fields import (Grid, SampledField, fd5_derivative, homogeneous_sobolev_norm,
                     spectral_derivative)
from .params import ModelParams, check_real
from .singular_integral import coupling_from_profiles, interaction_field

N_BOUNDS = 10
# (order N, side, exponent pattern) of the ten interaction bounds
BOUND_TABLE = (
    (1, "below_k", "x_lam"),
    (2, "below_k", "one"),
    (3, "below_k", "A"),
    (4, "below_k", "A_over_r"),
    (5, "below_k", "A_over_r2_over_x"),
    (5, "above_k", "A_over_r2_over_x"),
    (4, "above_k", "A_over_r"),
    (3, "above_k", "A"),
    (2, "above_k", "one"),
    (1, "above_k", "Ar"),
)


# ---------------------------------------------------------------------------
# seed

@dataclass(frozen=True, eq=False)
class SeedProfile:
    """Odd flat bump ``phi`` on the positive half of the reference grid."""

    field: SampledField
    r: float
    orientation: int
    delta0: float
    margin: float

    @property
    def values(self):
        return self.field.values

    @property
    def grid(self):
        return self.field.grid

    @property
    def dphi(self):
        return _cached(self, "_dphi", lambda: fd5_derivative(self.values, self.grid.h, 1))

    def hdot4(self):
        return _cached(self, "_h4", lambda: homogeneous_sobolev_norm(self.field, 4))


def _cached(obj, name, fn):
    d = obj.__dict__
    if name not in d:
        object.__setattr__(obj, name, fn())
    return d[name]


def bump(s, r):
    """``exp(1 - r^2/(r^2 - s^2))`` on ``|s| < r`` (peak value 1), else 0."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < r
    out = np.zeros_like(s)
    q = r * r - s[inside] ** 2
    out[inside] = np.exp(1.0 - r * r / q)
    return out


def make_seed_profile(r: float, points: int = 512, margin=None, orientation=-1) -> SeedProfile:
    """``phi(x) = orientation * sgn(x) * bump(|x| - 1)`` sampled for ``x > 0``.

    The grid spans ``[1 - 2r - margin, 1 + 2r + margin]`` (margin defaults to
    r); the negative half follows from oddness.  ``orientation = -1`` makes
    ``H phi''(0) > 0`` under the ``1/(x-y)`` kernel convention.
    """
    r = check_real("r", r)
    if not 0 < r < 0.125:
        raise ConfigurationError(f"0 < r < 1/8 violated (r = {r})")
    m = r if margin is None else check_real("margin", margin, positive=True)
    if 1 - 2 * r - m <= 0:
        raise ConfigurationError(f"0 < margin < 1 - 2r violated (margin = {m})")
    grid = Grid(1 - 2 * r - m, 1 + 2 * r + m, points)
    grid.require_power_of_two()
    across = 2 * r / grid.h
    if across < 16:
        raise ResolutionError(f"only {across:.1f} grid points across the seed support")
    vals = orientation * bump(grid.points - 1.0, r)
    f = SampledField(grid, vals, support=(1 - r, 1 + r), parity="odd", half_line=True)
    delta0 = float(coupling_from_profiles(grid, vals[None, :])[0])
    if not delta0 > 0:
        raise CascadeDegeneracyError(f"H phi''(0) = {delta0:.3g} is not positive; "
                                     "orientation does not produce positive couplings")
    return SeedProfile(f, r, orientation, delta0, m)


# ---------------------------------------------------------------------------
# coefficients and right-hand side

def growth_rates(atlas: BubbleAtlas) -> np.ndarray:
    """``rho_k = x_k'/x_k`` from the atlas couplings."""
    return cascade_rates(atlas.x, atlas.a, atlas.params.ode_factor)


def coefficient_fields(atlas: BubbleAtlas, k: int, rho=None):
    """Transport ``u``, stretching ``sigma`` and the two interaction fields for bubble k."""
    if not 0 <= k <= atlas.n:
        raise ExtrapolationError(f"bubble {k} outside the atlas range 0..{atlas.n}")
    p = atlas.params
    if rho is None:
        rho = growth_rates(atlas)
    xi = atlas.grid.points
    U1 = interaction_field(atlas, k, 1).values
    U2 = interaction_field(atlas, k, 2).values
    s = atlas.scale[k]
    u = 2 * p.b / s * U1 + xi * rho[k]
    sigma = p.b * U2 - atlas.exponents.c * rho[k]
    return u, sigma, U1, U2


def _dxi(values, h, scheme):
    if scheme == "fd5":
        return fd5_derivative(values, h, 1)
    if scheme == "spectral":
        return spectral_derivative(values, h, 1)
    raise ConfigurationError(f"unknown derivative scheme {scheme!r}")


def profile_rhs(atlas: BubbleAtlas, k: int, scheme="fd5") -> SampledField:
    """``dW_k/dt`` (equal to ``dD_k/dt`` since the seed is fixed)."""
    u, sigma, _, _ = coefficient_fields(atlas, k)
    h = atlas.grid.h
    seed = atlas.seed
    dphi = seed.dphi if scheme == "fd5" else _dxi(seed.values, h, scheme)
    dW = dphi + _dxi(atlas.D[k], h, scheme)
    return SampledField(atlas.grid, u * dW + sigma * atlas.W[k], parity="odd", half_line=True)


def _rhs_all(atlas: BubbleAtlas, scheme):
    rho = growth_rates(atlas)
    h = atlas.grid.h
    dphi = atlas.seed.dphi if scheme == "fd5" else _dxi(atlas.seed.values, h, scheme)
    dD = np.empty_like(atlas.D)
    umax = 0.0
    for k in range(atlas.n + 1):
        u, sigma, _, _ = coefficient_fields(atlas, k, rho)
        dW = dphi + _dxi(atlas.D[k], h, scheme)
        dD[k] = u * dW + sigma * atlas.W[k]
        umax = max(umax, float(np.max(np.abs(u))))
    return atlas.x * rho, dD, umax


def dispersive_limit(atlas: BubbleAtlas) -> float:
    """Largest stable ``|dt|`` for the stretching term's second-order response.

    Linearising ``b d^2 H B * W`` around bubble k gives the multiplier
    ``i sgn(xi) xi^2`` times ``b x_k^(c-2) (r/A)^((d-2)k) max|W_k|``; explicit
    RK4 is stable on the imaginary axis up to about 2.8.
    """
    kmax = np.pi / atlas.grid.h
    amp = np.exp(atlas.log_amplitude(2)) * np.max(np.abs(atlas.W), axis=1)
    return 2.8 / (abs(atlas.params.b) * float(np.max(amp)) * kmax ** 2)


def step_profiles(atlas: BubbleAtlas, dt: float, refresh_couplings=True, scheme="fd5",
                  cfl=0.5) -> BubbleAtlas:
    """One RK4 step of ``(x, D)`` with couplings frozen over the step.

    Raises :class:`StepSizeError` if ``max|u| |dt| > cfl * h`` for any bubble
    or if ``|dt|`` exceeds the dispersive limit of the stretching term.
    """
    if dt == 0:
        raise StepSizeError("dt must be nonzero")
    if refresh_couplings:
        atlas = atlas.with_state(a=coupling_coefficients(atlas))
    h = atlas.grid.h
    kx1, kD1, umax = _rhs_all(atlas, scheme)
    if umax * abs(dt) > cfl * h:
        raise StepSizeError(f"CFL violated: max|u| |dt| = {umax * abs(dt):.3g} > {cfl} h")
    lim = dispersive_limit(atlas)
    if abs(dt) > lim:
        raise StepSizeError(f"|dt| = {abs(dt):.3g} above the dispersive limit {lim:.3g}")
    x0, D0 = atlas.x, atlas.D

    def stage(fx, fD, c):
        return atlas.with_state(x=x0 + c * dt * fx, D=D0 + c * dt * fD)

    kx2, kD2, _ = _rhs_all(stage(kx1, kD1, 0.5), scheme)
    kx3, kD3, _ = _rhs_all(stage(kx2, kD2, 0.5), scheme)
    kx4, kD4, _ = _rhs_all(stage(kx3, kD3, 1.0), scheme)
    x = x0 + dt / 6 * (kx1 + 2 * kx2 + 2 * kx3 + kx4)
    D = D0 + dt / 6 * (kD1 + 2 * kD2 + 2 * kD3 + kD4)
    new = atlas.with_state(t=atlas.t + dt, x=x, D=D)
    new.meta["support_ok"] = bool(support_check(new)["pass"])
    return new


# ---------------------------------------------------------------------------
# monitors

def support_check(atlas: BubbleAtlas, rel_tol=1e-12) -> dict:
    """Every profile must vanish outside ``[1-2r, 1+2r]`` (relative to its max)."""
    r = atlas.params.r
    xi = atlas.grid.points
    outside = (xi < 1 - 2 * r) | (xi > 1 + 2 * r)
    W = atlas.W
    scale = np.max(np.abs(W), axis=1)
    leak = np.max(np.abs(W[:, outside]), axis=1) / scale if outside.any() else np.zeros(len(W))
    return {"leak": leak, "pass": bool(np.all(leak <= rel_tol))}


def bootstrap_monitor(atlas: BubbleAtlas, seed: SeedProfile | None = None, epsilon=None) -> dict:
    """Hdot^4 distances to the seed, support windows and the L^1 consequence."""
    seed = atlas.seed if seed is None else seed
    eps = atlas.params.epsilon if epsilon is None else epsilon
    r = atlas.params.r
    h4 = np.empty(atlas.n + 1)
    l1 = np.empty(atlas.n + 1)
    d4l1 = np.empty(atlas.n + 1)
    own = seed is atlas.seed
    for k in range(atlas.n + 1):
        # the stored deviation avoids cancelling ~10 digits in W - phi
        dev = atlas.D[k] if own else atlas.W[k] - seed.values
        Dk = SampledField(atlas.grid, dev, parity="odd", half_line=True)
        h4[k] = homogeneous_sobolev_norm(Dk, 4)
        l1[k] = Dk.l1_norm()
        d4l1[k] = 2 * Dk.h * np.sum(np.abs(spectral_derivative(Dk.values, Dk.h, 4)))
    literal = 512 * r ** 4 * math.sqrt(2 * r) * eps
    chain = 512 * r ** 4 * math.sqrt(2 * r) * h4
    poincare = (4 * r) ** 4 * d4l1
    sup = support_check(atlas)
    return {
        "t": atlas.t,
        "hdot4": h4,
        "hdot4_pass": bool(np.all(h4 <= eps)),
        "support_leak": sup["leak"],
        "support_pass": sup["pass"],
        "l1": l1,
        "l1_literal_bound": literal,
        "l1_literal_pass": bool(np.all(l1 <= literal * (1 + 1e-9))),
        "l1_chain_bound": chain,
        "l1_poincare_bound": poincare,
        "l1_chain_pass": bool(np.all(l1 <= chain * (1 + 1e-9) + 1e-300)),
        "pass": bool(np.all(h4 <= eps) and sup["pass"]),
    }


def _d4(v, h):
    return spectral_derivative(v, h, 4)


def energy_terms(atlas: BubbleAtlas, k: int, coeffs=None, scheme="fd5") -> np.ndarray:
    """``E_1 .. E_8`` for bubble k, each ``int d^4 D * d^4(term_i)`` over the line.

    The eight terms split ``dD/dt``: transport by ``(2b/s) U1`` of D and of
    phi, dilation ``xi rho`` of D and of phi, stretching ``b U2`` of D and of
    phi, and the amplitude ``-c rho`` of D and of phi.  Then
    ``d/dt ||D||^2_{Hdot^4} = 2 sum E_i``.  First derivatives use ``scheme``
    (the one driving the dynamics) so the identity holds for the discrete flow.
    """
    p = atlas.params
    h = atlas.grid.h
    xi = atlas.grid.points
    rho = growth_rates(atlas)[k]
    if coeffs is None:
        _, _, U1, U2 = coefficient_fields(atlas, k)
    else:
        U1, U2 = coeffs
    D = atlas.D[k]
    phi = atlas.seed.values
    dD = _dxi(D, h, scheme)
    dphi = atlas.seed.dphi if scheme == "fd5" else _dxi(phi, h, scheme)
    T = 2 * p.b / atlas.scale[k] * U1
    c = atlas.exponents.c
    terms = (T * dD, T * dphi, xi * rho * dD, xi * rho * dphi,
             p.b * U2 * D, p.b * U2 * phi, -c * rho * D, -c * rho * phi)
    d4D = _d4(D, h)
    out = np.array([2 * h * np.sum(d4D * _d4(q, h)) for q in terms])
    return out


ENERGY_POWERS = np.array([2, 1, 2, 1, 2, 1, 2, 1])


def energy_identity_check(W: SampledField, N: int, rho: float, dt: float = 1e-4,
                          c: float = 4.0) -> dict:
    """Measured ``(1/2) d/dt ||W||^2_{Hdot^N}`` under the pure scaling flow.

    The decoupled flow ``W_t = rho xi W_xi - c rho W`` has the exact solution
    ``exp(-c rho t) W0(xi exp(rho t))``, giving
    ``(1/2) d/dt ||W||^2 = (N - 1/2 - c) rho ||W||^2``.  The derivative is
    measured by a centred difference across one RK4 step each way.
    """
    h = W.h
    xi = W.x

    def rhs(v):
        return rho * xi * spectral_derivative(v, h, 1) - c * rho * v

    def rk4(v, d):
        k1 = rhs(v)
        k2 = rhs(v + d / 2 * k1)
        k3 = rhs(v + d / 2 * k2)
        k4 = rhs(v + d * k3)
        return v + d / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def norm2(v):
        return homogeneous_sobolev_norm(W.with_values(v), N) ** 2

    n0 = norm2(W.values)
    measured = (norm2(rk4(W.values, dt)) - norm2(rk4(W.values, -dt))) / (4 * dt)
    general = (N - 0.5 - c) * rho * n0
    literal = -(0.5 + c) * rho * n0
    scale = max(abs(general), abs(measured), 1e-300)
    return {
        "measured": measured,
        "predicted": general,
        "residual": abs(measured - general) / scale if scale > 1e-300 else 0.0,
        "literal_prediction": literal,
        "literal_residual": abs(measured - literal) / max(abs(literal), abs(measured), 1e-300),
    }


def _bound_scale(pattern, A, r, k, xk):
    return {
        "x_lam": xk * (r / A) ** k,
        "one": 1.0,
        "A": A ** k,
        "A_over_r": (A / r) ** k,
        "A_over_r2_over_x": (A / r) ** (2 * k) / xk,
        "Ar": (A * r) ** k,
    }[pattern]


def interaction_quotients(atlas: BubbleAtlas) -> np.ndarray:
    """``max |d^N H B_-/+| / scale_i(k)`` over bubble k's window, shape ``(10, n+1)``.

    Entries where the sum is empty (k = 0 for B_-, k = n for B_+) are NaN.
    """
    p = atlas.params
    r = p.r
    xi = atlas.grid.points
    win = (xi >= 1 - 2 * r) & (xi <= 1 + 2 * r)
    Q = np.full((N_BOUNDS, atlas.n + 1), np.nan)
    for k in range(atlas.n + 1):
        for i, (N, side, pat) in enumerate(BOUND_TABLE):
            if (side == "below_k" and k == 0) or (side == "above_k" and k == atlas.n):
                continue
            v = interaction_field(atlas, k, N, side).values[win]
            Q[i, k] = float(np.max(np.abs(v))) / _bound_scale(pat, p.A, r, k, atlas.x[k])
    return Q


def calibrate_interaction_bounds(atlas: BubbleAtlas) -> np.ndarray:
    """Constants ``C_1..C_10`` as the maximum quotient over k on the calibration atlas."""
    Q = interaction_quotients(atlas)
    with np.errstate(invalid="ignore"):
        return np.nanmax(np.where(np.isnan(Q), -np.inf, Q), axis=1)


# ---------------------------------------------------------------------------
# endpoint tracking

def support_tracker(run_times, u_fields, grid: Grid, r: float, endpoints=None) -> dict:
    """Follow ``d xi/dt = -u(xi)`` from the support endpoints through stored coefficients.

    ``u_fields`` has shape ``(m, n+1, P)`` (transport field per checkpoint and
    bubble).  ``u`` is odd, so the negative endpoints mirror the positive ones.
    """
    t = np.asarray(run_times, dtype=float)
    U = np.asarray(u_fields, dtype=float)
    if endpoints is None:
        endpoints = (1 - r, 1 + r)
    xi = grid.points
    n1 = U.shape[1]
    disp = np.zeros((n1, len(endpoints)))
    for k in range(n1):
        for e, x0 in enumerate(endpoints):
            pos = x0
            for i in range(len(t) - 1):
                dt = t[i + 1] - t[i]
                v0 = np.interp(pos, xi, U[i, k])
                pred = pos - dt * v0
                v1 = np.interp(pred, xi, U[i + 1, k])
                pos = pos - dt * 0.5 * (v0 + v1)
            disp[k, e] = abs(pos - x0)
    worst = float(disp.max()) if disp.size else 0.0
    return {"displacement": disp, "max_displacement": worst, "limit": r,
            "pass": bool(worst <= r)}


# ---------------------------------------------------------------------------
# driver

@dataclass
class ProfileRun:
    """Checkpointed coupled run on ``[t_end, 0]`` with all monitors."""

    params: ModelParams
    times: np.ndarray
    atlases: list
    hdot4: np.ndarray
    energies: np.ndarray
    energy_norm: np.ndarray
    quotients: np.ndarray
    constants: np.ndarray
    u_fields: np.ndarray
    support_ok: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> BubbleAtlas:
        return self.atlases[-1]


def _all_coefficients(atlas):
    rho = growth_rates(atlas)
    out = [coefficient_fields(atlas, k, rho) for k in range(atlas.n + 1)]
    return out


def evolve(params: ModelParams, T: float, steps: int = 40, seed=None, monitors=True,
           scheme="fd5") -> ProfileRun:
    """Integrate the coupled system from 0 back to ``-T`` in ``steps`` equal steps."""
    T = check_real("T", T, positive=True)
    atlas = initial_atlas(params, seed)
    constants = calibrate_interaction_bounds(atlas) if monitors else np.full(N_BOUNDS, np.nan)
    dt = -T / steps
    times, atlases, h4, En, Enorm, Q, Uf, sup = [], [], [], [], [], [], [], []

    def record(at):
        times.append(at.t)
        atlases.append(at)
        coeffs = _all_coefficients(at)
        Uf.append(np.array([c[0] for c in coeffs]))
        sup.append(support_check(at)["pass"])
        if monitors:
            h4.append(bootstrap_monitor(at)["hdot4"])
            En.append(np.array([energy_terms(at, k, (c[2], c[3]), scheme) for k, c in enumerate(coeffs)]))
            Enorm.append(np.array([2 * at.grid.h * np.sum(_d4(at.D[k], at.grid.h) ** 2)
                                   for k in range(at.n + 1)]))
            Q.append(interaction_quotients(at))

    record(atlas)
    for _ in range(steps):
        atlas = step_profiles(atlas, dt, scheme=scheme)
        record(atlas)
    arr = (lambda v: np.array(v) if v else np.zeros((0,)))
    return ProfileRun(params, np.array(times), atlases, arr(h4), arr(En), arr(Enorm), arr(Q),
                      constants, np.array(Uf), np.array(sup), {"T": T, "steps": steps})


def bootstrap_holds(run: ProfileRun, epsilon=None) -> bool:
    eps = run.params.epsilon if epsilon is None else epsilon
    trk = support_tracker(run.times, run.u_fields, run.final.grid, run.params.r)
    return bool(np.all(run.hdot4 <= eps) and np.all(run.support_ok) and trk["pass"])


def energy_shape(run: ProfileRun) -> dict:
    """Growth-shape monitors of a coupled run (t = 0 excluded, where everything vanishes).

    ``K = max sqrt(E)/|t|`` over the run and its spread ``max/min``; for each of
    the eight energy terms the ratio ``|E_i| / ||D||^p_i`` is tracked per bubble
    and ``worst_factor`` is its largest max/min over time.
    """
    abs_t = np.abs(run.times[1:])
    root = np.sqrt(run.energy_norm[1:].max(axis=1))
    q = root / abs_t
    E = run.energies[1:]
    nrm = np.sqrt(run.energy_norm[1:])
    factors = np.ones(8)
    for i in range(8):
        with np.errstate(divide="ignore", invalid="ignore"):
            R = np.abs(E[:, :, i]) / nrm ** ENERGY_POWERS[i]
        R = R[:, np.all(R > 0, axis=0)]
        if R.size:
            factors[i] = float(np.max(R.max(axis=0) / R.min(axis=0)))
    return {"K": float(q.max()), "spread": float(q.max() / q.min()),
            "factors": factors, "worst_factor": float(factors.max())}


def initial_growth(params: ModelParams, seed=None) -> float:
    """``max_k || dD_k/dt ||_{Hdot^4}`` at t = 0 (sets the lifespan scale)."""
    atlas = initial_atlas(params, seed)
    atlas = atlas.with_state(a=coupling_coefficients(atlas))
    _, dD, _ = _rhs_all(atlas, "fd5")
    g = atlas.grid
    return max(homogeneous_sobolev_norm(SampledField(g, v, parity="odd", half_line=True), 4)
               for v in dD)


def find_lifespan(params: ModelParams, seed=None, steps=8, iters=12, safety=0.9) -> dict:
    """Largest ``T`` (bisection) for which the bootstrap holds on ``[-T, 0]``.

    The bracket starts from ``epsilon / max ||dD/dt||_{Hdot^4}`` at t = 0; the
    returned lifespan is ``safety`` times the bisected value.
    """
    g0 = initial_growth(params, seed)
    guess = params.epsilon / g0
    lo, hi = 0.0, guess
    while True:
        run = _try_evolve(params, hi, steps, seed)
        if not _quick_ok(run, params):
            break
        lo, hi = hi, 2 * hi
        if hi > 1e6 * guess:
            break
    for _ in range(iters):
        mid = 0.5 * (lo + hi) if lo > 0 else 0.5 * hi
        run = _try_evolve(params, mid, steps, seed)
        if _quick_ok(run, params):
            lo = mid
        else:
            hi = mid
    if lo == 0:
        raise StepSizeError("bootstrap fails for every bracketed T")
    return {"T_max": lo, "T": safety * lo, "T_fail": hi, "growth0": g0, "guess": guess}


def _try_evolve(params, T, steps, seed):
    try:
        return evolve(params, T, steps=steps, seed=seed, monitors=False)
    except StepSizeError:
        return None


def _quick_ok(run, params):
    if run is None:
        return False
    h4 = np.array([bootstrap_monitor(a)["hdot4"] for a in run.atlases])
    run.hdot4 = h4
    return bootstrap_holds(run, params.epsilon)
