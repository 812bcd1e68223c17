"""SVG figures for run reports (headless Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def rate_fit_plot(abs_t, M, fit: dict, path):
    """log-log ``max|d^3 B|`` against ``|t|`` with the fitted line."""
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(abs_t, M, ".", ms=3, label="measured")
    lo, hi = fit["window"]
    tt = np.geomspace(lo, hi, 50)
    ax.loglog(tt, np.exp(fit["intercept"]) * tt ** fit["slope"], "-",
              label=f"slope {fit['slope']:.4f}")
    ax.set_xlabel("|t|")
    ax.set_ylabel("max |d^3 B|")
    ax.legend()
    return _save(fig, path)


def holder_plot(holder: dict, path):
    """Local exponents between neighbouring bubble scales against the prediction."""
    fig, ax = plt.subplots(figsize=(5, 4))
    s = np.asarray(holder["local_exponents"])
    ax.plot(np.arange(s.size), s, "o-", ms=3, label="local exponent")
    ax.axhline(holder["s_predicted"], color="k", lw=0.8, label="predicted")
    ax.axhline(0.5 * holder["s_predicted"], color="r", lw=0.8, ls="--", label="half prediction")
    ax.set_xlabel("bubble k")
    ax.set_ylabel("s")
    ax.legend()
    return _save(fig, path)


def profile_overlay_plot(y, rows, times, path, weight_power=1):
    """Rescaled, normalised snapshots on a common log grid."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for v, t in zip(rows, times):
        ax.semilogx(y, v, lw=0.7, label=f"t = {t:.3g}")
    ax.set_xlabel("y")
    ax.set_ylabel(f"rescaled B (weight power {weight_power})")
    if len(times) <= 12:
        ax.legend(fontsize=6)
    return _save(fig, path)


def monitor_plot(times, hdot4, epsilon, path):
    """Per-bubble ``Hdot^4`` distance to the seed along a coupled run."""
    fig, ax = plt.subplots(figsize=(5, 4))
    h = np.asarray(hdot4)
    for k in range(h.shape[1]):
        ax.plot(times, h[:, k], lw=0.7)
    ax.axhline(epsilon, color="r", ls="--", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("||W_k - phi||")
    return _save(fig, path)
