"""Parameter records and their validation.

Every constant of the construction lives in :class:`ModelParams`.  Validation
names the violated inequality so configuration errors are actionable.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigurationError

MAX_BUBBLES = 64


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def check_real(name, value, *, positive=False, finite=True):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a real number, got {value!r}") from None
    if finite and not math.isfinite(value):
        raise ConfigurationError(f"{name} must be finite, got {value!r}")
    if positive and value <= 0:
        raise ConfigurationError(f"{name} > 0 violated ({name} = {value})")
    return value


def check_int(name, value, *, minimum=None, maximum=None):
    if isinstance(value, bool) or int(value) != value:
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"{name} >= {minimum} violated ({name} = {value})")
    if maximum is not None and value > maximum:
        raise ConfigurationError(f"{name} <= {maximum} violated ({name} = {value})")
    return value


def _check_cascade_geometry(A, r):
    if not A > 1:
        raise ConfigurationError(
            f"A > 1 violated (A = {A}); the cascade only blows up for A > 1")
    if not 0 < r < 0.125:
        raise ConfigurationError(f"0 < r < 1/8 violated (r = {r})")
    if A * r >= 1:
        raise ConfigurationError(f"A*r < 1 violated (A*r = {A * r:.6g})")
    if A * math.sqrt(r) >= 1:
        raise ConfigurationError(f"A*r^(1/2) < 1 violated (A*r^(1/2) = {A * math.sqrt(r):.6g})")


@dataclass(frozen=True)
class ProfileExponents:
    """Amplitude exponent ``c`` and prefactor exponent ``d`` of the bubble ansatz."""

    c: float = 4.0
    d: float = 3.0


@dataclass(frozen=True)
class CascadeParams:
    A: float = 2.0
    r: float = 0.05
    n: int = 30
    delta: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        A = check_real("A", self.A)
        r = check_real("r", self.r)
        _check_cascade_geometry(A, r)
        check_int("n", self.n, minimum=0, maximum=MAX_BUBBLES)
        check_real("delta", self.delta, positive=True)
        if check_real("b", self.b) == 0:
            raise ConfigurationError("b != 0 violated")


@dataclass(frozen=True)
class ModelParams:
    """All constants of the construction in one validated record.

    ``points_per_bubble`` is the size of each profile's reference grid, which
    spans ``[1 - 2r - margin, 1 + 2r + margin]`` (the negative half follows by
    oddness).  ``margin`` defaults to ``r``.
    """

    b: float = 1.0
    A: float = 2.0
    r: float = 0.05
    n: int = 12
    epsilon: float = 0.1
    c: float = 4.0
    d: float = 3.0
    T: float | None = None
    mu: float = 0.0
    alpha: float = 2.0
    include_b_in_ode: bool = True
    points_per_bubble: int = 512
    margin: float | None = None

    def __post_init__(self):
        A = check_real("A", self.A)
        r = check_real("r", self.r)
        _check_cascade_geometry(A, r)
        if check_real("b", self.b) == 0:
            raise ConfigurationError("b != 0 violated")
        check_int("n", self.n, minimum=0, maximum=MAX_BUBBLES)
        check_real("epsilon", self.epsilon, positive=True)
        if check_real("c", self.c) <= -0.5:
            raise ConfigurationError(f"c > -1/2 violated (c = {self.c})")
        check_real("d", self.d)
        if self.T is not None:
            check_real("T", self.T, positive=True)
        if check_real("mu", self.mu) < 0:
            raise ConfigurationError(f"mu >= 0 violated (mu = {self.mu})")
        check_real("alpha", self.alpha, positive=True)
        p = check_int("points_per_bubble", self.points_per_bubble, minimum=8)
        if not is_power_of_two(p):
            raise ConfigurationError(f"points_per_bubble must be a power of two (got {p})")
        m = self.margin_value
        if not 0 < m or 1 - 2 * r - m <= 0:
            raise ConfigurationError(f"0 < margin < 1 - 2r violated (margin = {m})")

    @property
    def margin_value(self) -> float:
        return float(self.r if self.margin is None else self.margin)

    @property
    def exponents(self) -> ProfileExponents:
        return ProfileExponents(self.c, self.d)

    @property
    def ode_factor(self) -> float:
        """Multiplier of the scaling-factor ODE (``b`` or 1)."""
        return float(self.b) if self.include_b_in_ode else 1.0

    def cascade_params(self, delta=1.0) -> CascadeParams:
        return CascadeParams(A=self.A, r=self.r, n=self.n, delta=delta, b=self.b)

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown model parameters: {sorted(unknown)}")
        return cls(**data)
