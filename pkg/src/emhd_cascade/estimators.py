"""scikit-learn style front ends over the numerical kernels.

Each class keeps its constructor arguments verbatim (so ``get_params`` and
``clone`` work) and stores fitted state in trailing-underscore attributes.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fields import Grid, SampledField
from .params import CascadeParams, ModelParams


class HilbertTransformer(TransformerMixin, BaseEstimator):
    """Row-wise periodic Hilbert transform of samples on ``[0, length)``.

    ``inverse_transform`` uses ``H^-1 = -H`` on mean-zero data.
    """

    def __init__(self, length=2 * np.pi):
        self.length = length

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        Grid.periodic(self.length, X.shape[1], centered=False).require_power_of_two()
        self.n_features_in_ = X.shape[1]
        return self

    def _apply(self, X, sign):
        from .singular_integral import hilbert_periodic

        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} samples per row, got {X.shape[1]}")
        g = Grid.periodic(self.length, X.shape[1], centered=False)
        return np.array([sign * hilbert_periodic(SampledField(g, row)).values for row in X])

    def transform(self, X):
        return self._apply(X, 1.0)

    def inverse_transform(self, X):
        return self._apply(X, -1.0)


class CascadeODEEstimator(BaseEstimator):
    """Constant-coupling scaling-factor ODE.

    ``fit`` integrates from t = 0 back to ``-a`` (the root of
    ``a = A(1 - e^-a)``) and runs the two lemma checks; ``predict`` returns
    ``x_k(t)`` for a column of times in ``[-a, 0]``.
    """

    def __init__(self, A=2.0, n=30, delta=1.0, b=1.0, r=None, rtol=1e-10, per_decade=20,
                 t_min_abs=2.0 ** -30):
        self.A = A
        self.r = r
        self.n = n
        self.delta = delta
        self.b = b
        self.rtol = rtol
        self.per_decade = per_decade
        self.t_min_abs = t_min_abs

    def _params(self):
        # r does not enter the ODE; the default only has to satisfy the geometry checks
        r = min(0.1, 0.9 / self.A ** 2) if self.r is None else self.r
        return CascadeParams(A=self.A, r=r, n=self.n,
                             delta=self.delta, b=self.b)

    def fit(self, X=None, y=None):
        from .cascade_ode import integrate, ratio_monotonicity, solve_root, verify_integral_bound

        p = self._params()
        self.root_ = solve_root(p.A)
        self.trajectory_ = integrate(p, -self.root_, rtol=self.rtol, per_decade=self.per_decade,
                                     t_min_abs=self.t_min_abs)
        self.monotonicity_ = ratio_monotonicity(self.trajectory_)
        self.integral_bound_ = verify_integral_bound(self.trajectory_, p)
        return self

    def predict(self, X):
        from .cascade_ode import integrate

        check_is_fitted(self, "trajectory_")
        t = check_array(X, dtype=float, ensure_2d=False).reshape(-1)
        if np.any(t > 0) or np.any(t < -self.root_ * (1 + 1e-12)):
            raise ValueError(f"times must lie in [-a, 0] with a = {self.root_:.6g}")
        out = np.empty((t.size, self.n + 1))
        zero = t == 0
        out[zero] = float(self.A) ** np.arange(self.n + 1)
        if np.any(~zero):
            q = np.unique(t[~zero])
            tr = integrate(self._params(), float(q.min()), rtol=self.rtol, checkpoints=q)
            ct, cx, _ = tr.checkpoints()
            for i in np.flatnonzero(~zero):
                out[i] = cx[int(np.argmin(np.abs(ct - t[i])))]
        return out

    def score(self, X, y=None):
        """Rate-fit slope magnitude closeness: ``1 - |slope + 1|``."""
        from .diagnostics import blowup_rate_fit

        t = check_array(X, dtype=float, ensure_2d=False).reshape(-1)
        M = self.predict(t).max(axis=1)
        keep = t < 0
        return 1.0 - abs(blowup_rate_fit(-t[keep], M[keep], min_decades=0)["slope"] + 1.0)


class PowerLawRateFit(RegressorMixin, BaseEstimator):
    """Least-squares power law ``M = C |t|^slope`` with the two-sided band ratio."""

    def __init__(self, window=None, min_decades=2.0):
        self.window = window
        self.min_decades = min_decades

    def fit(self, X, y):
        from .diagnostics import blowup_rate_fit

        t = check_array(X, dtype=float, ensure_2d=False).reshape(-1)
        M = check_array(y, dtype=float, ensure_2d=False).reshape(-1)
        if t.size != M.size:
            raise ValueError("X and y lengths differ")
        res = blowup_rate_fit(np.abs(t), M, self.window, self.min_decades)
        self.slope_ = res["slope"]
        self.intercept_ = res["intercept"]
        self.band_ratio_ = res["band_ratio"]
        self.r2_ = res["r2"]
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        t = np.abs(check_array(X, dtype=float, ensure_2d=False).reshape(-1))
        return np.exp(self.intercept_) * t ** self.slope_

    def score(self, X, y, sample_weight=None):
        """R^2 in log space, where the fit is made."""
        from sklearn.metrics import r2_score

        M = check_array(y, dtype=float, ensure_2d=False).reshape(-1)
        return r2_score(np.log(M), np.log(self.predict(X)), sample_weight=sample_weight)


class BubbleCascade(BaseEstimator):
    """Coupled bubble construction on ``[-T, 0]``.

    ``fit`` finds the bootstrap lifespan when ``T`` is None, then runs the
    coupled profile evolution.  ``predict`` evaluates ``d^m B`` of the final
    atlas at physical points.
    """

    def __init__(self, b=1.0, A=2.0, r=0.05, n=12, epsilon=0.1, points_per_bubble=512, T=None,
                 steps=40, monitors=True, m=0):
        self.b = b
        self.A = A
        self.r = r
        self.n = n
        self.epsilon = epsilon
        self.points_per_bubble = points_per_bubble
        self.T = T
        self.steps = steps
        self.monitors = monitors
        self.m = m

    def fit(self, X=None, y=None):
        from .profiles import bootstrap_holds, evolve, find_lifespan, make_seed_profile

        p = ModelParams(b=self.b, A=self.A, r=self.r, n=self.n, epsilon=self.epsilon,
                        points_per_bubble=self.points_per_bubble)
        seed = make_seed_profile(p.r, p.points_per_bubble, p.margin)
        if self.T is None:
            self.lifespan_ = find_lifespan(p, seed)
            T = self.lifespan_["T"]
        else:
            self.lifespan_ = None
            T = float(self.T)
        self.params_ = p
        self.seed_ = seed
        self.run_ = evolve(p, T, steps=self.steps, seed=seed, monitors=self.monitors)
        self.atlas_ = self.run_.final
        self.T_ = T
        self.bootstrap_ok_ = bootstrap_holds(self.run_) if self.monitors else None
        return self

    def predict(self, X):
        from .assembly import evaluate

        check_is_fitted(self, "atlas_")
        x = check_array(X, dtype=float, ensure_2d=False).reshape(-1)
        return evaluate(self.atlas_, x, self.m, "spectral")
