"""Bayesian structure learning for count data.

Pairwise Markov random field with bounded ``arctan(x)**theta`` edge
potentials, Dirichlet-process random effects per node, and pseudo-posterior
MCMC.
"""
__version__ = "0.1.0"

from .datagen import (
    CopulaSpec,
    TinyMRFSpec,
    evaluate_estimate,
    exact_joint_pmf,
    generate_copula_counts,
    random_sparse_precision,
    sample_tiny_mrf,
)
from .errors import (
    CongaError,
    GenerationError,
    InputError,
    InsufficientDataError,
    NumericError,
    ParameterError,
    ParseError,
    ShapeError,
    TruncationError,
)
from .model import (
    EdgeWeights,
    ModelParams,
    conditional_log_pmf,
    edge_transform,
    log_pseudo_likelihood,
    normalizing_constant_bounds,
    truncation_error_bound,
)
from .posterior import (
    EdgeDifference,
    GraphEstimate,
    PosteriorSamples,
    degree_ranking,
    edge_decision,
    graph_difference,
    significance_score,
)
from .sampler import CongaSampler, PriorConfig, SamplerConfig, resume_chain, run_chain
from .theta import ThetaSearchConfig, ThetaSelection, covariance_discrepancy, select_theta

__all__ = [
    "CongaError", "CongaSampler", "CopulaSpec", "EdgeDifference", "EdgeWeights",
    "GenerationError", "GraphEstimate", "InputError", "InsufficientDataError",
    "ModelParams", "NumericError", "ParameterError", "ParseError", "PosteriorSamples",
    "PriorConfig", "SamplerConfig", "ShapeError", "ThetaSearchConfig", "ThetaSelection",
    "TinyMRFSpec", "TruncationError", "conditional_log_pmf", "covariance_discrepancy",
    "degree_ranking", "edge_decision", "edge_transform", "evaluate_estimate",
    "exact_joint_pmf", "generate_copula_counts", "graph_difference",
    "log_pseudo_likelihood", "normalizing_constant_bounds", "random_sparse_precision",
    "resume_chain", "run_chain", "sample_tiny_mrf", "select_theta", "significance_score",
    "truncation_error_bound",
]
