"""Hilbert-transform machinery.

Convention: ``Hf(x) = (1/pi) p.v. int f(y) / (x - y) dy``, so ``H cos = sin``
and ``H^2 = -I`` on mean-zero data.  Derivatives of the transform use the
kernel form ``d^N/dx^N Hf(x) = ((-1)^N N!/pi) int f(y) / (x - y)^(N+1) dy``.

Three evaluation paths:

* periodic grids: Fourier multiplier ``-i sgn(k)``;
* points inside (or near) a compact support: odd-pair principal-value
  quadrature on ``d^N f`` (pairs ``x -/+ m h`` with ``m`` odd, so the singular
  point is never sampled);
* points far from the support: the regular kernel, either summed directly or
  through per-bubble power series in the moments of the profile.
"""
from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import comb

from .errors import (CascadeDegeneracyError, ConfigurationError, IllConditionedEvaluationWarning,
                     InvalidFieldError, UnsupportedOrderError)
from .fields import Grid, SampledField, fourier_shift, spectral_derivative

MAX_ORDER = 5
# kernel path only when the point is this many grid spacings from the support
FAR_SPACINGS = 8
SERIES_TOL = 1e-18
SERIES_MAX_RATIO = 0.5


def _check_order(N):
    if int(N) != N or not 0 <= N <= MAX_ORDER:
        raise UnsupportedOrderError(f"derivative order must be in 0..{MAX_ORDER}, got {N}")
    return int(N)


def _flip(parity, order):
    if parity == "none" or order % 2 == 0:
        return parity
    return "even" if parity == "odd" else "odd"


# ---------------------------------------------------------------------------
# periodic path

def hilbert_multiplier(n, h=1.0):
    k = np.fft.fftfreq(n, d=h)
    m = -1j * np.sign(k)
    m[0] = 0.0
    if n % 2 == 0:
        m[n // 2] = 0.0
    return m


def hilbert_periodic(f: SampledField) -> SampledField:
    """Hilbert transform on a periodic power-of-two grid."""
    f.grid.require_power_of_two()
    if not np.all(np.isfinite(f.values)):
        raise InvalidFieldError("field contains NaN or Inf")
    spec = np.fft.fft(f.values) * hilbert_multiplier(f.grid.n_points, f.h)
    return f.with_values(np.fft.ifft(spec).real, parity=_flip(f.parity, 1), support=None)


# ---------------------------------------------------------------------------
# principal-value path

@lru_cache(maxsize=32)
def _odd_reciprocal_kernel(n):
    m = np.arange(-(n - 1), n)
    ker = np.zeros(2 * n - 1)
    odd = (m % 2) != 0
    ker[odd] = 1.0 / m[odd]
    return ker


def pv_hilbert_grid(values):
    """``(1/pi) p.v. int g(y)/(x_i - y) dy`` at every grid node.

    The integrand is paired as ``(g(x - u) - g(x + u)) / u``, which is even
    and smooth in ``u``; sampling it at ``u = m h`` with odd ``m`` (weight
    ``2h``) is a midpoint rule and spectrally accurate for smooth compact g.
    Samples outside the grid are zero.
    """
    g = np.asarray(values, dtype=float)
    n = g.size
    full = fftconvolve(g, _odd_reciprocal_kernel(n))
    return (2.0 / np.pi) * full[n - 1: 2 * n - 1]


def _pv_at_node(g, i):
    n = g.size
    m = np.arange(1, n + 1, 2)
    lo = i - m
    hi = i + m
    left = np.where(lo >= 0, g[np.clip(lo, 0, n - 1)], 0.0)
    right = np.where(hi < n, g[np.clip(hi, 0, n - 1)], 0.0)
    return (2.0 / np.pi) * float(np.sum((left - right) / m))


# ---------------------------------------------------------------------------
# regular kernels

def paired_kernel(zeta, y, m, p):
    """``(zeta - y)^-m + p (zeta + y)^-m`` for ``y > 0`` without cancellation.

    Writing it as ``2 sum_i C(m,i) zeta^(m-i) y^i / (zeta^2 - y^2)^m`` over
    ``i`` odd (``p = -1``) or even (``p = +1``) keeps every term of one sign,
    which matters when ``zeta`` is many orders of magnitude from ``y``.
    """
    zeta = np.asarray(zeta, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.maximum(np.abs(zeta), y)
    zs = zeta / s
    ys = y / s
    start = 1 if p < 0 else 0
    num = np.zeros(np.broadcast(zs, ys).shape)
    for i in range(start, m + 1, 2):
        num = num + comb(m, i) * zs ** (m - i) * ys ** i
    den = ((zs - ys) * (zs + ys)) ** m
    return 2.0 * num / den / s ** m


def _line_samples(f: SampledField):
    """Support samples ``(y, weight)`` of ``f`` on the full line (no mirroring)."""
    nz = np.flatnonzero(f.values)
    return f.x[nz], f.values[nz] * f.h


def kernel_derivative(f: SampledField, x, N):
    """Regular-kernel quadrature of ``d^N H f`` at points away from the support."""
    N = _check_order(N)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pref = (-1) ** N * math.factorial(N) / np.pi
    y, w = _line_samples(f)
    if y.size == 0:
        return np.zeros_like(x)
    if f.half_line:
        ker = paired_kernel(x[:, None], y[None, :], N + 1, f.parity_sign)
    else:
        ker = (x[:, None] - y[None, :]) ** (-(N + 1))
    return pref * ker @ w


def _support_distance(f: SampledField, x):
    y, _ = _line_samples(f)
    if y.size == 0:
        return np.full(np.shape(x), np.inf)
    lo, hi = y.min(), y.max()
    x = np.asarray(x, dtype=float)
    if f.half_line:
        ax = np.abs(x)
        return np.where(ax < lo, lo - ax, np.where(ax > hi, ax - hi, 0.0))
    return np.where(x < lo, lo - x, np.where(x > hi, x - hi, 0.0))


def _pv_point(f: SampledField, x, N, refine=1):
    """Principal-value evaluation of ``d^N H f`` at one point near the support."""
    g = spectral_derivative(f.values, f.h, N)
    h = f.h
    x0 = f.grid.x_min
    pad = 16
    gp = np.pad(g, pad)
    x0 = x0 - pad * h
    for _ in range(refine - 1):
        mid = fourier_shift(gp, h, h / 2)
        gp = np.column_stack([gp, mid]).ravel()
        h = h / 2
    ax = abs(x) if f.half_line else x
    u = (ax - x0) / h
    i0 = int(round(u))
    if not 0 <= i0 < gp.size:
        raise ConfigurationError("principal-value point lies outside the padded grid")
    frac = u - i0
    if abs(frac) > 1e-12:
        gp = fourier_shift(gp, h, frac * h)
    val = _pv_at_node(gp, i0)
    if f.half_line:
        pg = f.parity_sign * (-1) ** N
        ys = x0 + h * np.arange(gp.size) + frac * h
        val += pg * float(np.sum(gp * h / (ax + ys))) / np.pi
        # ``d^N Hf`` has parity opposite to f shifted by N
        out_parity = -f.parity_sign * (-1) ** N
        if x < 0:
            val *= out_parity
    return val


def hilbert_derivative_at(f: SampledField, x, N=0, richardson=False):
    """``d^N/dx^N (Hf)`` at the point(s) ``x``.

    Far from the support (at least ``FAR_SPACINGS`` grid spacings) the regular
    kernel is summed; otherwise the odd-pair principal-value stencil is applied
    to ``d^N f``.  A point exactly on a support endpoint triggers
    :class:`IllConditionedEvaluationWarning` and a Richardson combination of
    the ``h`` and ``h/2`` evaluations.
    """
    N = _check_order(N)
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(xs)
    if not np.any(f.values):
        return float(out[0]) if scalar else out
    dist = _support_distance(f, xs)
    far = dist >= FAR_SPACINGS * f.h
    if np.any(far):
        out[far] = kernel_derivative(f, xs[far], N)
    ends = None
    if f.support is not None:
        ends = np.array(f.support, dtype=float)
    for i in np.flatnonzero(~far):
        xi = xs[i]
        on_end = ends is not None and np.any(np.isclose(abs(xi) if f.half_line else xi, ends,
                                                        rtol=0, atol=1e-12 * f.grid.length))
        if on_end or richardson:
            if on_end:
                warnings.warn(f"evaluation at support endpoint x = {xi}; using Richardson "
                              "combination of h and h/2", IllConditionedEvaluationWarning,
                              stacklevel=2)
            coarse = _pv_point(f, xi, N)
            fine = _pv_point(f, xi, N, refine=2)
            out[i] = (4 * fine - coarse) / 3
        else:
            out[i] = _pv_point(f, xi, N)
    return float(out[0]) if scalar else out


def self_hilbert_on_grid(f: SampledField, N):
    """``d^N H f`` at the nodes of f's own grid (principal-value path)."""
    N = _check_order(N)
    g = spectral_derivative(f.values, f.h, N)
    val = pv_hilbert_grid(g)
    if f.half_line:
        pg = f.parity_sign * (-1) ** N
        x = f.x
        val = val + pg * (1.0 / (x[:, None] + x[None, :])) @ (g * f.h) / np.pi
    return val


# ---------------------------------------------------------------------------
# per-bubble series (moments of the profile)

def series_terms(m, ratio, tol=SERIES_TOL, cap=400):
    """Number of terms so that ``C(m+q-1, q) ratio^q < tol`` past the cut."""
    if ratio <= 0:
        return 1
    q = 0
    while q < cap:
        if comb(m + q - 1, q) * ratio ** q < tol:
            return q
        q += 1
    raise CascadeDegeneracyError(f"series ratio {ratio:.3g} too close to 1")


class BubbleSources:
    """Moment tables for a stack of half-line profiles sharing one grid.

    ``values`` has shape ``(n_bubbles, n_points)``; rows are the positive-side
    samples of profiles with parity ``parity``.
    """

    def __init__(self, grid, values, parity="odd"):
        self.grid = grid
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        self.p = {"odd": -1, "even": 1}[parity]
        self.y = grid.points
        self.w = self.values * grid.h
        self.y_min = grid.x_min
        self.y_max = grid.x_max
        self._inner = {}
        self._outer = {}

    def inner_moments(self, qmax):
        """``M_q = int W(y) y^-q dy`` for ``q = 0..qmax``."""
        if qmax not in self._inner:
            pw = (1.0 / self.y)[None, :] ** np.arange(qmax + 1)[:, None]
            self._inner[qmax] = self.w @ pw.T
        return self._inner[qmax]

    def outer_moments(self, qmax):
        """``P_q = int W(y) y^q dy`` for ``q = 0..qmax``."""
        if qmax not in self._outer:
            pw = self.y[None, :] ** np.arange(qmax + 1)[:, None]
            self._outer[qmax] = self.w @ pw.T
        return self._outer[qmax]

    def near(self, j, zeta, N):
        """``d^N H W_j(zeta)`` for ``|zeta|`` below the support (Taylor series)."""
        m = N + 1
        zeta = np.asarray(zeta, dtype=float)
        ratio = float(np.max(np.abs(zeta))) / self.y_min
        if ratio >= SERIES_MAX_RATIO:
            return self.direct(j, zeta, N)
        nq = series_terms(m, ratio)
        M = self.inner_moments(m + nq)[j]
        q = np.arange(nq + 1)
        coef = comb(m + q - 1, q) * ((-1.0) ** m + self.p * (-1.0) ** q) * M[m + q]
        acc = np.zeros_like(zeta)
        for c in coef[::-1]:
            acc = acc * zeta + c
        return (-1) ** N * math.factorial(N) / np.pi * acc

    def far(self, j, zeta, N):
        """``d^N H W_j(zeta)`` for ``|zeta|`` beyond the support (Laurent series)."""
        m = N + 1
        zeta = np.asarray(zeta, dtype=float)
        ratio = self.y_max / float(np.min(np.abs(zeta)))
        if ratio >= SERIES_MAX_RATIO:
            return self.direct(j, zeta, N)
        nq = series_terms(m, ratio)
        P = self.outer_moments(nq)[j]
        q = np.arange(nq + 1)
        coef = comb(m + q - 1, q) * (1.0 + self.p * (-1.0) ** q) * P[q]
        inv = 1.0 / zeta
        acc = np.zeros_like(zeta)
        for c in coef[::-1]:
            acc = acc * inv + c
        return (-1) ** N * math.factorial(N) / np.pi * acc * inv ** m

    def direct(self, j, zeta, N):
        zeta = np.asarray(zeta, dtype=float)
        ker = paired_kernel(zeta[:, None], self.y[None, :], N + 1, self.p)
        return (-1) ** N * math.factorial(N) / np.pi * ker @ self.w[j]

    def evaluate(self, j, zeta, N, method="auto"):
        zeta = np.asarray(zeta, dtype=float)
        if method == "direct":
            return self.direct(j, zeta, N)
        az = np.abs(zeta)
        nz = np.flatnonzero(self.values[j])
        if nz.size:
            lo, hi = self.y[nz[0]], self.y[nz[-1]]
            if np.any((az >= lo) & (az <= hi)):
                raise CascadeDegeneracyError(
                    "target points fall inside a source bubble's support; supports must nest")
        if np.all(az < self.y_min):
            return self.near(j, zeta, N)
        if np.all(az > self.y_max):
            return self.far(j, zeta, N)
        return self.direct(j, zeta, N)


def coupling_from_profiles(grid, values, parity="odd"):
    """``d^2 H W_j(0)`` for every profile row (far-field kernel at the origin)."""
    if grid.x_min <= 0:
        raise CascadeDegeneracyError("profile support touches the origin")
    src = BubbleSources(grid, values, parity)
    M = src.inner_moments(3)[:, 3]
    # zeta = 0 keeps only q = 0: (2/pi) * ((-1)^3 + p) * M_3
    return (2.0 / np.pi) * ((-1.0) ** 3 + src.p) * M


def amplitude_factor(x, lam_log, c, d, N):
    """``x^(c-N) * lambda^(d-N)`` with ``lambda = exp(lam_log)``, computed in logs."""
    x = np.asarray(x, dtype=float)
    return np.exp((c - N) * np.log(x) + (d - N) * np.asarray(lam_log))


def bubble_hilbert(grid, W, x, lam_log, c, d, k, N, sign="all", method="auto", sources=None):
    """``d^N H B_*`` at the physical points of bubble k's reference grid.

    ``W`` holds the positive-side profiles, ``x`` the scaling factors and
    ``lam_log[j] = j*log(r/A)``.  ``sign`` picks the sum over ``j < k``
    (``below_k``), ``j > k`` (``above_k``) or all bubbles including k.
    """
    N = _check_order(N)
    if sign not in ("all", "below_k", "above_k"):
        raise ConfigurationError(f"unknown sign {sign!r}")
    n1 = W.shape[0]
    if not 0 <= k < n1:
        raise ConfigurationError(f"bubble index {k} out of range 0..{n1 - 1}")
    src = sources if sources is not None else BubbleSources(grid, W)
    xi = grid.points
    logs = np.log(x) + lam_log
    out = np.zeros(grid.n_points)
    if sign == "below_k":
        js = range(k)
    elif sign == "above_k":
        js = range(k + 1, n1)
    else:
        js = [j for j in range(n1) if j != k]
    for j in js:
        zeta = xi * np.exp(logs[k] - logs[j])
        out += amplitude_factor(x[j], lam_log[j], c, d, N) * src.evaluate(j, zeta, N, method)
    if sign == "all":
        self_field = SampledField(grid, W[k], parity="odd", half_line=True)
        out += amplitude_factor(x[k], lam_log[k], c, d, N) * self_hilbert_on_grid(self_field, N)
    return out


def interaction_field(atlas, k, N, sign="all", method="auto") -> SampledField:
    """``d^N H B_*`` on bubble k's reference grid (physical point ``xi * s_k``)."""
    N = _check_order(N)
    if N < 1:
        raise UnsupportedOrderError("interaction_field takes N in 1..5")
    if k > atlas.n:
        raise ConfigurationError(f"bubble index {k} exceeds n = {atlas.n}")
    vals = bubble_hilbert(atlas.grid, atlas.W, atlas.x, atlas.lam_log, atlas.exponents.c,
                          atlas.exponents.d, k, N, sign, method, sources=atlas.sources)
    parity = "even" if N % 2 == 0 else "odd"
    return SampledField(atlas.grid, vals, parity=parity, half_line=True)


# ---------------------------------------------------------------------------
# analytic battery

def periodized_lorentzian(x, L):
    """Periodised pair ``sum_n 1/(1+(x+nL)^2)`` and its transform, from ``(pi/L) cot(pi(x+i)/L)``."""
    q = 2 * np.pi / L
    den = np.cosh(q) - np.cos(q * x)
    return np.pi / L * np.sinh(q) / den, np.pi / L * np.sin(q * x) / den


def analytic_battery(n_points=4096, rng=0) -> dict:
    """Closed-form checks of every transform path; each entry has ``error`` and ``pass``.

    Periodic cases use relative max error against the exact pair; the
    point-mass case is the far kernel on a width-1e-3 Gaussian at distance 1.
    """
    out = {}
    g = Grid.periodic(2 * np.pi, n_points, centered=False)
    x = g.points
    for name, f, hf in (("cos_to_sin", np.cos(x), np.sin(x)),
                        ("sin_to_minus_cos", np.sin(x), -np.cos(x))):
        err = np.max(np.abs(hilbert_periodic(SampledField(g, f)).values - hf)) / np.max(np.abs(hf))
        out[name] = {"error": float(err), "tol": 1e-6}
    L = 200.0
    gl = Grid.periodic(L, n_points, centered=True)
    f, hf = periodized_lorentzian(gl.points, L)
    err = np.max(np.abs(hilbert_periodic(SampledField(gl, f)).values - hf)) / np.max(np.abs(hf))
    out["lorentzian_periodic"] = {"error": float(err), "tol": 1e-6}
    gt = Grid(-50.0, 50.0, n_points)
    ft = SampledField(gt, 1.0 / (1.0 + gt.points ** 2))
    err = abs(float(hilbert_derivative_at(ft, 3.0, 0)) - 0.3) / 0.3
    out["lorentzian_truncated"] = {"error": err, "tol": 1e-3}
    gen = np.random.default_rng(rng)
    spec = np.zeros(n_points // 2 + 1, complex)
    spec[1:65] = gen.normal(size=64) + 1j * gen.normal(size=64)
    u = np.fft.irfft(spec, n=n_points)
    fu = SampledField(g, u)
    hh = hilbert_periodic(hilbert_periodic(fu)).values
    out["anti_involution"] = {"error": float(np.max(np.abs(hh + u)) / np.max(np.abs(u))),
                              "tol": 1e-8}
    w = 1e-3
    gp = Grid(1 - 10 * w, 1 + 10 * w, 512)
    mass = np.exp(-(gp.points - 1) ** 2 / (2 * w * w)) / (w * np.sqrt(2 * np.pi))
    val = float(hilbert_derivative_at(SampledField(gp, mass), 0.0, 2))
    out["point_mass_N2"] = {"error": abs(val + 2 / np.pi), "value": val, "tol": 1e-3}
    for v in out.values():
        v["pass"] = bool(v["error"] <= v["tol"])
    return out
