"""Norm-constrained ReLU networks, label-noise-robust losses and mixing-data risk bounds."""

__version__ = "0.1.0"

from .netcore import (
    NormBudget,
    ReluLayer,
    ReluNetwork,
    compose,
    evaluate,
    linear_combination,
    norm_budget,
    parallel_pair,
    rebalance,
    softmax,
)
from .approx import (
    ApproxReport,
    Chart,
    InfeasibleBuild,
    TargetFunction,
    build_approximant,
    build_chart_approximant,
    named_target,
    partition_sum,
    product_network,
)
from .losses import LossSpec, SimplexLabel, lipschitz_audit, loss, symmetry_constant
from .noise import LabeledDataset, NoiseChannel, corrupt, exact_noisy_empirical_risk, tolerance_check
from .mixing import BlockScheme, MixingChain, beta_coefficients, block_swap_gap, sample_path
from .risk import (
    ExperimentConfig,
    RademacherEstimate,
    RiskReport,
    TrainConfig,
    TruthModel,
    excess_risk_experiment,
    rademacher_estimate,
    statistical_gap,
    train_erm,
)
