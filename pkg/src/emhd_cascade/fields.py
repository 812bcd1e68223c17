"""Uniform 1D grids, sampled fields, derivatives and the CSV field format."""
from __future__ import annotations

import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidFieldError, UnsupportedOrderError
from .params import is_power_of_two

PARITIES = ("odd", "even", "none")


@dataclass(frozen=True)
class Grid:
    """Points ``x_min + i*h`` for ``i = 0 .. n_points-1`` with ``h = (x_max-x_min)/n_points``."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 8:
            raise ConfigurationError(f"n_points >= 8 violated (n_points = {self.n_points})")
        if not self.x_max > self.x_min:
            raise ConfigurationError("x_max > x_min violated")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.n_points)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def is_symmetric(self) -> bool:
        return bool(np.isclose(self.x_min, -self.x_max, atol=1e-14 * self.length))

    def require_power_of_two(self):
        if not is_power_of_two(self.n_points):
            raise ConfigurationError(
                f"spectral path needs a power-of-two grid (n_points = {self.n_points})")

    def index_of(self, x) -> np.ndarray:
        """Fractional grid index of ``x``."""
        return (np.asarray(x, dtype=float) - self.x_min) / self.h

    @classmethod
    def periodic(cls, length: float, n_points: int, centered: bool = True) -> "Grid":
        lo = -length / 2 if centered else 0.0
        return cls(lo, lo + length, n_points)


@dataclass(frozen=True, eq=False)
class SampledField:
    """Real samples of a function on a uniform grid.

    ``half_line=True`` marks a field stored only for ``x > 0``; the values on
    the negative axis follow from ``parity``.  Bubble profiles use this layout.
    """

    grid: Grid
    values: np.ndarray
    support: tuple | None = None
    parity: str = "none"
    half_line: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise InvalidFieldError(
                f"values must have shape ({self.grid.n_points},), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidFieldError("field contains NaN or Inf")
        if self.parity not in PARITIES:
            raise InvalidFieldError(f"parity must be one of {PARITIES}")
        if self.half_line and (self.parity == "none" or self.grid.x_min <= 0):
            raise InvalidFieldError("half-line fields need parity odd/even and x_min > 0")
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def parity_sign(self) -> int:
        return {"odd": -1, "even": 1, "none": 0}[self.parity]

    def with_values(self, values, parity=None, support=...) -> "SampledField":
        kw = {"values": np.asarray(values, dtype=float)}
        if parity is not None:
            kw["parity"] = parity
        if support is not ...:
            kw["support"] = support
        return replace(self, **kw)

    def support_interval(self) -> tuple[float, float]:
        """Positive-side support for half-line fields, else the full support."""
        if self.support is not None:
            lo, hi = self.support
            return float(lo), float(hi)
        nz = np.flatnonzero(self.values)
        if nz.size == 0:
            return (float("nan"), float("nan"))
        return float(self.x[nz[0]]), float(self.x[nz[-1]])

    def derivative(self, order: int, method: str = "spectral") -> "SampledField":
        if method == "spectral":
            dv = spectral_derivative(self.values, self.h, order)
        elif method == "fd5":
            dv = fd5_derivative(self.values, self.h, order)
        else:
            raise ConfigurationError(f"unknown derivative method {method!r}")
        parity = self.parity
        if parity != "none" and order % 2:
            parity = "even" if parity == "odd" else "odd"
        return replace(self, values=dv, parity=parity)

    def l2_norm(self) -> float:
        w = 2.0 if self.half_line else 1.0
        return float(np.sqrt(w * self.h * np.sum(self.values ** 2)))

    def l1_norm(self) -> float:
        w = 2.0 if self.half_line else 1.0
        return float(w * self.h * np.sum(np.abs(self.values)))

    def check_parity(self, atol=1e-12) -> float:
        """Max parity defect on a symmetric grid (point ``i`` pairs with ``N - i``)."""
        if self.parity == "none" or self.half_line:
            return 0.0
        if not self.grid.is_symmetric:
            raise InvalidFieldError("parity check needs a symmetric grid")
        v = self.values
        mirrored = v[1:][::-1]
        return float(np.max(np.abs(v[1:] - self.parity_sign * mirrored)))


# ---------------------------------------------------------------------------
# derivatives

_FD5 = {
    1: (np.array([1, -8, 0, 8, -1]) / 12.0),
    2: (np.array([-1, 16, -30, 16, -1]) / 12.0),
    3: (np.array([-1, 2, 0, -2, 1]) / 2.0),
    4: (np.array([1, -4, 6, -4, 1]) / 1.0),
}


def fd5_derivative(values, h, order):
    """Five-point centered difference with zero extension beyond the grid."""
    if order == 0:
        return np.array(values, dtype=float)
    if order not in _FD5:
        raise UnsupportedOrderError(f"fd5 supports orders 1..4, got {order}")
    v = np.pad(np.asarray(values, dtype=float), 2)
    c = _FD5[order]
    n = len(values)
    out = sum(c[i] * v[i:i + n] for i in range(5))
    return out / h ** order


def padded_size(n, pad=2):
    m = 1
    while m < pad * n:
        m *= 2
    return m


def wavenumbers(n, h):
    return 2 * np.pi * np.fft.fftfreq(n, d=h)


def spectral_derivative(values, h, order, pad=2):
    """Fourier derivative of a compactly supported field (zero-padded box)."""
    if order == 0:
        return np.array(values, dtype=float)
    n = len(values)
    m = padded_size(n, pad)
    spec = np.fft.rfft(values, n=m)
    k = 2 * np.pi * np.fft.rfftfreq(m, d=h)
    spec = spec * (1j * k) ** order
    if m % 2 == 0 and order % 2:
        spec[-1] = 0.0
    return np.fft.irfft(spec, n=m)[:n]


def fourier_shift(values, h, shift, pad=2):
    """Samples of the band-limited interpolant at ``x_i + shift``."""
    n = len(values)
    m = padded_size(n, pad)
    spec = np.fft.rfft(values, n=m)
    k = 2 * np.pi * np.fft.rfftfreq(m, d=h)
    spec = spec * np.exp(1j * k * shift)
    if m % 2 == 0:
        spec[-1] = spec[-1].real * np.cos(k[-1] * shift)
    return np.fft.irfft(spec, n=m)[:n]


def odd_extension_spectrum(values, grid, pad=4):
    """``(k, |F|^2)`` of the odd extension of a half-line field.

    Uses ``F_full(k) = F_half(k) - F_half(-k) = 2i Im F_half(k)`` so no
    symmetric grid is needed.
    """
    n = len(values)
    m = padded_size(n, pad)
    spec = np.fft.fft(values, n=m) * grid.h
    k = wavenumbers(m, grid.h)
    spec = spec * np.exp(-1j * k * grid.x_min)
    power = 4.0 * spec.imag ** 2
    return k, power, 2 * np.pi / (m * grid.h)


def homogeneous_sobolev_norm(field: SampledField, m: float) -> float:
    """``|| |D|^m f ||_{L^2}`` via spectral weights (``m`` may be fractional)."""
    if field.half_line:
        if field.parity != "odd":
            raise InvalidFieldError("half-line spectral norm implemented for odd fields")
        k, power, dk = odd_extension_spectrum(field.values, field.grid)
    else:
        n = field.grid.n_points
        mm = padded_size(n, 4)
        spec = np.fft.fft(field.values, n=mm) * field.h
        k = wavenumbers(mm, field.h)
        power = np.abs(spec) ** 2
        dk = 2 * np.pi / (mm * field.h)
    weight = np.abs(k) ** (2 * m) if m > 0 else np.ones_like(k)
    return float(np.sqrt(np.sum(weight * power) * dk / (2 * np.pi)))


# ---------------------------------------------------------------------------
# CSV format: comment header with grid metadata, then ``x,value`` rows.

def field_to_csv(field: SampledField) -> str:
    buf = io.StringIO()
    g = field.grid
    buf.write(f"# x_min={float(g.x_min)!r}\n# x_max={float(g.x_max)!r}\n# n_points={g.n_points}\n")
    buf.write(f"# parity={field.parity}\n# half_line={int(field.half_line)}\n")
    if field.support is not None:
        buf.write(f"# support={float(field.support[0])!r},{float(field.support[1])!r}\n")
    buf.write("x,value\n")
    for xi, vi in zip(field.x, field.values):
        buf.write(f"{float(xi)!r},{float(vi)!r}\n")
    return buf.getvalue()


def write_field_csv(path, field: SampledField):
    Path(path).write_text(field_to_csv(field))


def read_field_csv(path) -> SampledField:
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        elif line and not line.startswith("x,"):
            rows.append(float(line.split(",")[1]))
    grid = Grid(float(meta["x_min"]), float(meta["x_max"]), int(meta["n_points"]))
    support = None
    if "support" in meta:
        lo, hi = meta["support"].split(",")
        support = (float(lo), float(hi))
    return SampledField(grid, np.array(rows), support=support, parity=meta.get("parity", "none"),
                        half_line=bool(int(meta.get("half_line", "0"))))
