"""Gradient methods built on local polynomial interpolation of per-sample gradients."""

from ._accel import backend_name
from .errors import (
    ConfigError,
    DegenerateCurvature,
    DomainViolation,
    GridSizeOverflow,
    InnerStall,
    LpiGradError,
    MissingValue,
    NonFinite,
    SingularMoment,
)
from .lpi_core import (
    Grid,
    InterpolationConfig,
    MultiIndexSet,
    WeightSet,
    WeightTable,
    basis_vector,
    batch_weights,
    enumerate_multi_indices,
    grid_points,
    interpolate,
    interpolation_weights,
    kernel_eval,
    moment_matrix,
)
from .oracles import (
    Dataset,
    ExactGradient,
    LPIGradient,
    OracleCallCounter,
    SampleGradientOracle,
    exact_full_gradient,
    grid_size_for_accuracy,
    lpi_gradient,
    minibatch_gradient,
    sup_norm_error,
)
from .optimizers import *  # noqa: F401,F403
from .problems import (
    LinearRegressionProblem,
    PolyGradientProblem,
    generate_linear_regression,
    random_poly_gradient_problem,
)

__version__ = "0.1.0"
