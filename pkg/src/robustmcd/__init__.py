"""Minimum covariance determinant estimator, functional and asymptotics."""

from ._accel import backend
from .asymptotics import (
    CltReport,
    ScoreValue,
    clt_covariance,
    influence,
    lambda_jacobian,
    lambda_map,
    psi,
    psi_matrix,
    solve_theta0,
)
from .distributions import (
    PopulationSpec,
    QuadratureGrid,
    contaminate,
    custom_atoms,
    discretize,
    gaussian,
    mixture,
    point_mass,
    sample,
    student_t,
    uniform_ball,
)
from .estimator import certify_estimator, cstep_mcd, exact_mcd, greedy_delete, subsample_moments
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    run_clt,
    run_consistency,
    run_contamination,
    run_influence,
    run_von_mises,
)
from .functional import certify_functional, exact_functional_mcd, functional_mcd, population_mcd
from .linalg import NotPositiveDefiniteError, det_trace_test, mahalanobis_sq, unvech, vech
from .model import (
    CertificateReport,
    Dataset,
    DegenerateDataError,
    Ellipsoid,
    McdFit,
    Theta,
    TrimmingWeights,
    WeightedMeasure,
    affine_map,
    radius,
    read_csv,
    subsample_size,
    trimmed_moments,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
