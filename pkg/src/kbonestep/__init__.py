"""Small-noise parameter estimation for partially observed linear diffusions.

Library layout:

* ``expr`` / ``model`` — coefficient grammar, model definition, noise-free
  limit system and cumulative Fisher information
* ``simulate`` — reproducible sample-path generation
* ``kbfilter`` — rescaled-variance filtering (mean, variance, gain, and the
  parameter-derivative filter)
* ``prelim`` — rough estimation on a shrinking learning interval
* ``onestep`` — one-step score correction, its causal process form, adaptive
  filtering, and the efficient conditional-mean estimator
* ``fisher`` — information queries and the mean-square efficiency floor
* ``mc`` — Monte Carlo replication engine and statistics
* ``cli`` — command-line front end
"""

from importlib import resources as _resources

from .errors import (DegenerateModelError, InputError, IntegrationError,
                     KbError, ModelAssumptionError, SingularInformationError,
                     StatisticalFailure)
from .expr import parse_sexpr, to_sexpr
from .fisher import EfficiencyBound, fisher_between, fisher_full, fisher_tail, \
    mse_lower_bound
from .kbfilter import FilterOutput, run_filter, solve_riccati, solve_riccati_dot
from .mc import (McConfig, McReport, delta_sweep, normality_check,
                 prelim_mse_curve, rate_fit, run_replications)
from .model import (CaseTag, DeterministicLimit, ModelSpec, TimeGrid,
                    eval_coeff, fisher_window, limit_system, load_model,
                    model_from_dict, model_to_dict)
from .onestep import (AdaptiveFilterOutput, EstimatorProcess, MStarResult,
                      OneStepResult, adaptive_filter, m_star, one_step_mle,
                      one_step_process, robust_integral_G)
from .prelim import (Branch, PrelimResult, estimate_example1,
                     estimate_example2, estimate_generic, learning_interval)
from .simulate import Trajectory, moment_scaling_probe, simulate_path

__version__ = "0.1.0"


def bundled_model_path(name: str):
    """Filesystem path of a packaged model file, e.g. ``ex1`` or ``ex2``."""
    fname = name if name.endswith(".json") else f"{name}.json"
    ref = _resources.files(__name__) / "models" / fname
    if not ref.is_file():
        raise InputError(f"no bundled model named {name!r}")
    return ref


def bundled_model(name: str) -> ModelSpec:
    """Load a packaged model by name (``ex1`` or ``ex2``)."""
    return load_model(bundled_model_path(name))
