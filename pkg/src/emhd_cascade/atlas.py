"""The multi-scale solution record: seed, scaling factors, couplings and profile deviations."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .cascade_ode import CascadeState
from .errors import CascadeDegeneracyError, InvalidFieldError
from .fields import SampledField
from .params import ModelParams
from .singular_integral import BubbleSources


@dataclass(eq=False)
class BubbleAtlas:
    """Bubbles ``B_k(x) = x_k^c (r/A)^(dk) W_k(x / s_k)`` with ``s_k = x_k (r/A)^k``.

    Profiles are stored as ``W_k = phi + D[k]`` on the positive half of the
    seed's reference grid; keeping the deviation separate avoids cancellation
    when ``W_k`` stays within a tiny relative distance of the seed.
    """

    params: ModelParams
    seed: "object"
    t: float
    x: np.ndarray
    a: np.ndarray
    D: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n1 = self.params.n + 1
        self.x = np.asarray(self.x, dtype=float).reshape(n1)
        self.a = np.asarray(self.a, dtype=float).reshape(n1)
        self.D = np.asarray(self.D, dtype=float).reshape(n1, self.grid.n_points)
        if np.any(self.x <= 0) or not np.all(np.isfinite(self.x)):
            raise InvalidFieldError("scaling factors must be positive and finite")
        if not np.all(np.isfinite(self.D)):
            raise InvalidFieldError("profile deviation contains NaN or Inf")

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def grid(self):
        return self.seed.field.grid

    @property
    def exponents(self):
        return self.params.exponents

    @cached_property
    def W(self) -> np.ndarray:
        return self.seed.values[None, :] + self.D

    @cached_property
    def sources(self) -> BubbleSources:
        return BubbleSources(self.grid, self.W, "odd")

    @property
    def lam_log(self) -> np.ndarray:
        return np.arange(self.n + 1) * np.log(self.params.r / self.params.A)

    @property
    def log_scale(self) -> np.ndarray:
        """``log s_k`` with ``s_k = x_k (r/A)^k``."""
        return np.log(self.x) + self.lam_log

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def log_amplitude(self, N=0) -> np.ndarray:
        """``log(x_k^(c-N) (r/A)^((d-N)k))``."""
        e = self.exponents
        return (e.c - N) * np.log(self.x) + (e.d - N) * self.lam_log

    @property
    def cascade(self) -> CascadeState:
        return CascadeState(self.t, self.x, self.a)

    @property
    def profiles(self) -> list:
        return [SampledField(self.grid, w, support=self.seed.field.support, parity="odd",
                             half_line=True) for w in self.W]

    def deviation(self, k) -> SampledField:
        return SampledField(self.grid, self.D[k], parity="odd", half_line=True)

    def with_state(self, t=None, x=None, a=None, D=None, **meta) -> "BubbleAtlas":
        m = dict(self.meta)
        m.update(meta)
        return replace(self, t=self.t if t is None else float(t),
                       x=self.x if x is None else x, a=self.a if a is None else a,
                       D=self.D if D is None else D, meta=m)

    def check_nesting(self):
        """Rescaled windows of neighbours must stay inside ``[0, 1-2r]`` / ``[1+2r, inf)``."""
        r = self.params.r
        ls = self.log_scale
        lo, hi = np.log(1 - 2 * r), np.log(1 + 2 * r)
        for k in range(self.n):
            ratio = ls[k + 1] - ls[k]
            if hi + ratio > lo:
                raise CascadeDegeneracyError(
                    f"bubbles {k} and {k + 1} overlap: scale ratio {np.exp(ratio):.4g}")
        return True


def initial_atlas(params: ModelParams, seed=None) -> BubbleAtlas:
    """Atlas at t = 0: ``W_k = phi``, ``x_k = A^k``, couplings ``a_j = H phi''(0)``."""
    if seed is None:
        from .profiles import make_seed_profile

        seed = make_seed_profile(params.r, params.points_per_bubble, params.margin)
    n1 = params.n + 1
    x = float(params.A) ** np.arange(n1)
    a = np.full(n1, seed.delta0)
    return BubbleAtlas(params, seed, 0.0, x, a, np.zeros((n1, seed.field.grid.n_points)))
