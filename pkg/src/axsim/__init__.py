"""Bit-exact simulation of approximate 8-bit multipliers in CNN inference.

The package models three families of approximate unsigned 8x8 multipliers
(perforated, recursive, truncated), a cheap control-variate correction
that cancels most of their accumulated dot-product error, the systolic
MAC array that would host them, and a quantized inference engine that
runs real networks over any of it: all integer-exact, so every simulated
value is the value the hardware would produce.
"""

from .inference import (
    ArgmaxLayer,
    AvgPool2dLayer,
    Conv2dLayer,
    DenseLayer,
    EvalReport,
    FlattenLayer,
    ForwardResult,
    MaxPool2dLayer,
    QuantizedModel,
    QuantParams,
    QuantizedTensor,
    ReluLayer,
    evaluate,
    forward,
    isolated_layer_mse,
    load_model,
)
from .modelfile import (
    FORMAT_VERSION,
    ModelFormatError,
    read_dataset,
    read_images,
    read_labels,
    read_model_container,
    write_images,
    write_labels,
    write_model_container,
)
from .multipliers import (
    AxMultConfig,
    MultKind,
    UProduct,
    error_bound,
    mult_error,
    mult_error_array,
    multiply_approx,
    multiply_approx_array,
    multiply_exact,
    multiply_exact_array,
    x_value,
    x_value_array,
)
from .rounding import rhe_div, rhe_div_pow2, rhe_fraction
from .stats import (
    RNG_ALGORITHM,
    ConvErrorMoments,
    ErrorStats,
    OperandDistribution,
    closed_form_var_perforated,
    collect_conv_moments,
    conv_error_stats,
    exact_mult_error_stats,
    expected_x,
    make_rng,
    mult_error_stats,
)
from .systolic import (
    SUPPORTED_SIZES,
    EquivalenceReport,
    MacArrayConfig,
    SimulatorFault,
    equivalence_check,
    run_tile,
)
from .variates import (
    Filter,
    FilterConstants,
    control_variate,
    conv_error,
    corrected_dot,
    derive_constants,
    w_hat,
)

__version__ = "0.1.0"

__all__ = [
    "ArgmaxLayer",
    "AvgPool2dLayer",
    "AxMultConfig",
    "Conv2dLayer",
    "ConvErrorMoments",
    "DenseLayer",
    "ErrorStats",
    "EquivalenceReport",
    "EvalReport",
    "FORMAT_VERSION",
    "Filter",
    "FilterConstants",
    "FlattenLayer",
    "ForwardResult",
    "MacArrayConfig",
    "MaxPool2dLayer",
    "ReluLayer",
    "ModelFormatError",
    "MultKind",
    "OperandDistribution",
    "QuantParams",
    "QuantizedModel",
    "QuantizedTensor",
    "RNG_ALGORITHM",
    "SUPPORTED_SIZES",
    "SimulatorFault",
    "UProduct",
    "closed_form_var_perforated",
    "collect_conv_moments",
    "control_variate",
    "conv_error",
    "conv_error_stats",
    "corrected_dot",
    "derive_constants",
    "equivalence_check",
    "error_bound",
    "evaluate",
    "exact_mult_error_stats",
    "expected_x",
    "forward",
    "isolated_layer_mse",
    "load_model",
    "make_rng",
    "mult_error",
    "mult_error_array",
    "mult_error_stats",
    "multiply_approx",
    "multiply_approx_array",
    "multiply_exact",
    "multiply_exact_array",
    "read_dataset",
    "read_images",
    "read_labels",
    "read_model_container",
    "rhe_div",
    "rhe_div_pow2",
    "rhe_fraction",
    "run_tile",
    "w_hat",
    "write_images",
    "write_labels",
    "write_model_container",
    "x_value",
    "x_value_array",
]
