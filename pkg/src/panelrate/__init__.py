"""Nonparametric rate estimation and testing for panel count data with
several modes of recurrence."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    PanelCountDataset,
    SubjectRecord,
    TimeGrid,
    load,
    load_warranty,
    read_csv,
    risk_set_size,
    time_grid,
    validate,
    write_csv,
)
from .estimation import (  # noqa: E402
    default_bandwidth,
    empirical_cause_rate,
    empirical_overall_rate,
    estimate,
    smooth,
    step_estimate,
)
from .inference import TestResult, Weight, run_test  # noqa: E402
from .simulation import BivPoissonParams, SimDesign, power_study  # noqa: E402
