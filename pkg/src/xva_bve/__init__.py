"""CVA pricing with Marshall-Olkin (bivariate exponential) default coupling.

Default times are built by the Cox construction from a common-shock
exponential pair, so both parties can default at the same instant. The
contract value is obtained by regression Monte Carlo and by a semilinear PDE
scheme, for both the coupled drift and the conditional-independence baseline.
"""

__version__ = "0.1.0"

from .bsde import (BackwardSolution, DriftKind, RegressionBasis, continuous_payout_check,  # noqa: E402
                   drift_bfp, drift_new, estimate_m_sum, lando_identity_check, solve_bsde_mc)
from .bve import BveParams, BveSample, BveSamples, atom_probability, decompose, sample, survival  # noqa: E402
from .cashflows import (ContractTerms, StateSnapshot, closeout_theta, funding_A,  # noqa: E402
                        theta_tilde)
from .cox import (DefaultScenario, HazardPaths, IntensityModel, compensator_diagnostic,  # noqa: E402
                  d_inv_G, default_times, hazard_lambda, k_process, survival_G)
from .engine import (ComparisonReport, RunConfig, compare_drifts, load_config,  # noqa: E402
                     orthogonality_diagnostic, run_scenario, validate_assumptions)
from .errors import (ConfigError, ConvergenceError, DomainError, ModelError,  # noqa: E402
                     OutputError, XvaError)
from .paths import MarketModel, PathBundle, discount, simulate_paths, uniform_grid  # noqa: E402
from .pde import PdeGrid, ValueSurface, solve_pde, z_from_surface  # noqa: E402
from .registry import parse_function  # noqa: E402

__all__ = [
    "BackwardSolution", "DriftKind", "RegressionBasis", "continuous_payout_check", "drift_bfp",
    "drift_new", "estimate_m_sum", "lando_identity_check", "solve_bsde_mc", "BveParams",
    "BveSample", "BveSamples", "atom_probability", "decompose", "sample", "survival",
    "ContractTerms", "StateSnapshot", "closeout_theta", "funding_A", "theta_tilde",
    "DefaultScenario", "HazardPaths", "IntensityModel", "compensator_diagnostic", "d_inv_G",
    "default_times", "hazard_lambda", "k_process", "survival_G", "ComparisonReport", "RunConfig",
    "compare_drifts", "load_config", "orthogonality_diagnostic", "run_scenario",
    "validate_assumptions", "ConfigError", "ConvergenceError", "DomainError", "ModelError",
    "OutputError", "XvaError", "MarketModel", "PathBundle", "discount", "simulate_paths",
    "uniform_grid", "PdeGrid", "ValueSurface", "solve_pde", "z_from_surface", "parse_function",
]
