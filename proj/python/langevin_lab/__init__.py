"""Python bindings for the langevin-lab C++ core."""

from ._core import (
    Dataset,
    DataError,
    Dynamics,
    Mirror,
    NumericError,
    Potential,
    accuracy,
    arctan_mirror,
    blr_experiment,
    compare_rates,
    diagonal_gaussian,
    double_well,
    dynamics,
    gaussian,
    load_wdbc,
    lyapunov_bound,
    map_estimate,
    quartic_mirror,
    run_ensemble,
    shift_rate,
    split,
    synthetic_blr,
)

VARIANTS = ("overdamped", "underdamped", "nonreversible", "mirror", "highorder", "hfhr")

__all__ = [
    "Dataset",
    "DataError",
    "Dynamics",
    "Mirror",
    "NumericError",
    "Potential",
    "VARIANTS",
    "accuracy",
    "arctan_mirror",
    "blr_experiment",
    "compare_rates",
    "diagonal_gaussian",
    "double_well",
    "dynamics",
    "gaussian",
    "load_wdbc",
    "lyapunov_bound",
    "map_estimate",
    "quartic_mirror",
    "run_ensemble",
    "shift_rate",
    "split",
    "synthetic_blr",
]
