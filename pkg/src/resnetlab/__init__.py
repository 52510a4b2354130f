"""Deep ResNets as matrix products: convolution lowering, piecewise-affine
evaluation and convergence diagnostics for synthetic weight sequences."""
from resnetlab.activation import (
    AffinePiece,
    PatternTrace,
    accumulate_piece,
    activation_matrix,
    activation_pattern,
    explicit_eval,
    trace_forward,
)
from resnetlab.conv import (
    conv1d_direct,
    conv2d_direct,
    conv_mc_direct,
    toeplitz_1d,
    toeplitz_2d,
    toeplitz_mc,
)
from resnetlab.diagnostics import (
    DiagnosticsReport,
    NormSequence,
    cauchy_tail_test,
    diagnose,
    filter_norm_bound,
    norm_sequence,
    partial_sum_biases,
    partial_sum_weights,
    product_bound,
    tail_bound,
)
from resnetlab.generator import ConfigError, GeneratorConfig, generate, perturb_identity
from resnetlab.model import (
    ConvBlockWeights,
    DenseNetWeights,
    NetworkSpec,
    ResidualBlockWeights,
    ResNetWeights,
    forward_block,
    forward_network,
    forward_resnet,
    lower_to_matrix,
)
from resnetlab.serialize import WeightFileError
from resnetlab.tensor import matrix_norm, norm_induced, relu, vec, vec_stack

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
