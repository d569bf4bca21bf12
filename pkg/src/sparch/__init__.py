"""Simulation and quasi-maximum-likelihood fitting of spatial ARCH random fields."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .diagnostics import (
    MoranTest,
    information_criteria,
    moran_scatter_data,
    morans_i,
    qq_data,
)
from .estimate import (
    ConvergenceError,
    FitResult,
    OptimizerConfig,
    RankDeficiencyError,
    design_matrix,
    fit_sarsparch,
    fit_sparch,
    numerical_hessian,
    stepwise_bic,
    update_model,
)
from .io import Dataset, load_dataset, load_weights, save_weights
from .likelihood import Parameters, loglik_sarsparch, loglik_sparch
from .simulate import RegularityError, SimulationSpec, simulate
from .weights import (
    LatticeSpec,
    WeightsMatrix,
    build_lattice_contiguity,
    is_strictly_triangularizable,
    lattice,
    row_standardize,
    truncation_bound,
)

__all__ = [
    "BACKEND",
    "ConvergenceError",
    "Dataset",
    "FitResult",
    "LatticeSpec",
    "MoranTest",
    "OptimizerConfig",
    "Parameters",
    "RankDeficiencyError",
    "RegularityError",
    "SimulationSpec",
    "WeightsMatrix",
    "build_lattice_contiguity",
    "design_matrix",
    "fit_sarsparch",
    "fit_sparch",
    "information_criteria",
    "is_strictly_triangularizable",
    "lattice",
    "load_dataset",
    "load_weights",
    "loglik_sarsparch",
    "loglik_sparch",
    "moran_scatter_data",
    "morans_i",
    "numerical_hessian",
    "qq_data",
    "row_standardize",
    "save_weights",
    "simulate",
    "stepwise_bic",
    "truncation_bound",
    "update_model",
]
