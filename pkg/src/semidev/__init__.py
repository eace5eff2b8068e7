"""Stochastic subgradient optimization of mean-semideviation risk measures."""

from .geometry import Ball, Box, ConvexSet, Halfspace, Interval, Simplex, WholeSpace, project
from .problems import (NewsvendorParams, Problem, check_kappa_condition, newsvendor,
                       newsvendor_closed_form, quadratic_1d, streams)
from .regularizers import (CdfSpec, RiskRegularizer, entropic, extract_cdf, from_cdf,
                           gaussian_antiderivative, newsvendor_piecewise, positive_part,
                           slack_adjust, validate_axioms)
from .solver import (ConfigError, NonFiniteError, RunRecord, SolverConfig, monitor_boundedness,
                     projected_sgd, run, smoothed_iterate, step)

__version__ = "0.1.0"
