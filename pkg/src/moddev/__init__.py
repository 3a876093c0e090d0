"""Moderate deviations for additive functionals of ergodic diffusions.

Correctors from the Poisson equation, the asymptotic covariance ``Q``,
rate functions, path simulation and Monte-Carlo tail curves.
"""

from .linalg import NotHurwitzError, controllability_gramian, pseudo_inverse, solve_lyapunov
from .models import DiffusionScenario, available_scenarios, builtin_scenario, check_assumptions
from .corrector import (Corrector, closed_form_corrector, compute_Q_green_kubo,
                        compute_Q_stationary, corrector_linear_gaussian, q_closed_form_quadratic)
from .sim import PathEnsemble, SimConfig, simulate_batch
from .mdp import (MdpCurve, RateFunction, contract_rate, empirical_rate_curve,
                  gaussian_exact_rate, rate_J, rate_J_regularized)
from .estimator import estimator_mdp_experiment, theta_hat

__all__ = [
    "NotHurwitzError", "controllability_gramian", "pseudo_inverse", "solve_lyapunov",
    "DiffusionScenario", "available_scenarios", "builtin_scenario", "check_assumptions",
    "Corrector", "closed_form_corrector", "compute_Q_green_kubo", "compute_Q_stationary",
    "corrector_linear_gaussian", "q_closed_form_quadratic",
    "PathEnsemble", "SimConfig", "simulate_batch",
    "MdpCurve", "RateFunction", "contract_rate", "empirical_rate_curve", "gaussian_exact_rate",
    "rate_J", "rate_J_regularized", "estimator_mdp_experiment", "theta_hat",
]

__version__ = "0.1.0"
