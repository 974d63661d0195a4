"""Learning and online estimation of coupled disturbances.

The package separates a disturbance delta(x, d) into constant
coefficients and known Chebyshev tensor structures, identifies the
coefficients by regularized least squares on trajectory data, and
estimates the disturbance online with a higher-order observer whose
error dynamics carry prescribed eigenvalues.
"""

from .basis import (BasisConfig, StructureMatrices, cheb_eval, cheb_series,
                    flat_to_multi, multi_to_flat, structure_matrices)
from .errors import ConfigError, CoupledDoError, DataError, NumericalError
from .learner import (FitReport, SeparatedModel, SweepCell, SweepConfig,
                      TrajectoryDataset, evaluate, fit_rls, rng_stream,
                      split_dataset, sweep, synthesize_dataset,
                      targets_from_trajectory)
from .observer import FirstOrderDo, Hodo, UnobservableError, ackermann_gain
from .sim import (Plant, ScenarioConfig, ScenarioResult, disturbance,
                  disturbance_box, generate_training_run,
                  newton_velocity_channel, pd_control, registered_disturbances,
                  rk4_step, run_scenario)

__version__ = "0.1.0"

__all__ = [
    "BasisConfig", "StructureMatrices", "cheb_eval", "cheb_series",
    "flat_to_multi", "multi_to_flat", "structure_matrices",
    "ConfigError", "CoupledDoError", "DataError", "NumericalError",
    "FitReport", "SeparatedModel", "SweepCell", "SweepConfig",
    "TrajectoryDataset", "evaluate", "fit_rls", "rng_stream",
    "split_dataset", "sweep", "synthesize_dataset", "targets_from_trajectory",
    "FirstOrderDo", "Hodo", "UnobservableError", "ackermann_gain",
    "Plant", "ScenarioConfig", "ScenarioResult", "disturbance",
    "disturbance_box", "generate_training_run", "newton_velocity_channel",
    "pd_control", "registered_disturbances", "rk4_step", "run_scenario",
    "__version__",
]
