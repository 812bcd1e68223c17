"""EMHD bubble-cascade lab."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .assembly import (evaluate, load_atlas, model_residual, save_atlas, sobolev_norm,
                       tail_report, truncate)
from .atlas import BubbleAtlas, initial_atlas
from .cascade_ode import (CascadeState, Trajectory, integrate, ratio_monotonicity, solve_root,
                          step_cascade, verify_integral_bound)
from .diagnostics import (DiagnosticsReport, blowup_rate_fit, holder_estimate,
                          selfsim_feasibility, selfsim_probe)
from .errors import *  # noqa: F401,F403
from .estimators import BubbleCascade, CascadeODEEstimator, HilbertTransformer, PowerLawRateFit
from .fields import Grid, SampledField
from .params import CascadeParams, ModelParams
from .profiles import evolve, find_lifespan, make_seed_profile, step_profiles
from .singular_integral import hilbert_derivative_at, hilbert_periodic, interaction_field

__all__ = [
    "BubbleAtlas", "BubbleCascade", "CascadeODEEstimator", "CascadeParams", "CascadeState",
    "DiagnosticsReport", "Grid", "HilbertTransformer", "ModelParams", "PowerLawRateFit",
    "SampledField", "Trajectory", "blowup_rate_fit", "evaluate", "evolve", "find_lifespan",
    "hilbert_derivative_at", "hilbert_periodic", "holder_estimate", "initial_atlas", "integrate",
    "interaction_field", "load_atlas", "make_seed_profile", "model_residual",
    "ratio_monotonicity", "save_atlas", "selfsim_feasibility", "selfsim_probe", "sobolev_norm",
    "solve_root", "step_cascade", "step_profiles", "tail_report", "truncate",
    "verify_integral_bound",
]
