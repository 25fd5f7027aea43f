"""Simulator and analysis toolkit for GradSkip-style local training."""

from .analysis import (
    expected_local_steps,
    gradient_ratio,
    gradskip_rate,
    gradskip_stepsize_bound,
    lyapunov,
    one_step_expectation_oracle,
    optimal_compute_times,
    optimal_parameters,
    plus_rate,
    plus_stepsize_bound,
    waiting_time,
)
from .compressors import CompressorSpec, compress, variance_matrix, verify_variance_bound
from .data_io import OutlierProfile, parse_libsvm, partition, read_libsvm, synthesize_heterogeneous
from .errors import (
    GradSkipError,
    ParameterError,
    ConfigError,
    StateError,
    ConstantsError,
    RateInvalidError,
    OracleFailure,
    OracleCheckError,
    EnumerationSizeError,
    ParseError,
    GenerationError,
    AggregationError,
)
from .experiment import emit_summary, load_config, run_experiment, verify_suite
from .methods import RunConfig, Trace, preset_config, run, run_gradskip, run_gradskip_plus
from .numerics import RngStream, flip, make_stream, sample_geometric, weighted_norm_sq
from .problems import (
    LiftedObjective,
    LogisticObjective,
    QuadraticObjective,
    lift,
    reference_minimizer,
)
from .regularizers import Regularizer, prox

__version__ = "0.1.0"

__all__ = [
    "AggregationError",
    "CompressorSpec",
    "ConfigError",
    "ConstantsError",
    "EnumerationSizeError",
    "GenerationError",
    "GradSkipError",
    "LiftedObjective",
    "LogisticObjective",
    "OracleCheckError",
    "OracleFailure",
    "OutlierProfile",
    "ParameterError",
    "ParseError",
    "QuadraticObjective",
    "RateInvalidError",
    "Regularizer",
    "RngStream",
    "RunConfig",
    "StateError",
    "Trace",
    "compress",
    "emit_summary",
    "expected_local_steps",
    "flip",
    "gradient_ratio",
    "gradskip_rate",
    "gradskip_stepsize_bound",
    "lift",
    "load_config",
    "lyapunov",
    "make_stream",
    "one_step_expectation_oracle",
    "optimal_compute_times",
    "optimal_parameters",
    "parse_libsvm",
    "partition",
    "plus_rate",
    "plus_stepsize_bound",
    "preset_config",
    "prox",
    "read_libsvm",
    "reference_minimizer",
    "run",
    "run_experiment",
    "run_gradskip",
    "run_gradskip_plus",
    "sample_geometric",
    "synthesize_heterogeneous",
    "variance_matrix",
    "verify_suite",
    "verify_variance_bound",
    "waiting_time",
    "weighted_norm_sq",
]
