"""Optimization loops, schedules and traces."""

from .runs import (
    SandwichReport,
    catalyst_run,
    fgm_run,
    gd_run,
    inexact_sandwich_check,
    lpi_gd_run,
    sgd_run,
)
from .schedules import (
    FgmState,
    SmoothnessConstants,
    catalyst_alpha_next,
    catalyst_beta,
    catalyst_epsilon_schedule,
    fgm_coefficients,
    fgm_delta_requirement,
    fgm_iteration_count,
    fgm_y_step,
    fgm_z_step,
    inexact_oracle_params,
    inner_stop_check,
    lpi_delta_schedule,
    lpi_iteration_count,
)
from .trace import Trace, TraceRecord
