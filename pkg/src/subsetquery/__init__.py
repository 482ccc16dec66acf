"""Multiclass learning from random label-subset membership queries.

A query reveals, for a latent labeled example, only whether the true
label lies in a uniformly drawn size-m subset of the k classes.  This
package generates such query-response data, recovers the supervised risk
from it exactly, trains predictors with unbiased and corrected empirical
objectives, and verifies every distributional identity by enumeration
and Monte Carlo at desk scale.
"""

from .bounds import (
    BiasCheckReport,
    BoundInputs,
    corrected_bias_bound,
    deviation_bound,
    empirical_bias_check,
    excess_risk_bound,
    unconditional_adjustment,
)
from .data import (
    GaussianMixtureSpec,
    LabeledDataset,
    Provenance,
    QueryResponseDataset,
    desk_mixture_spec,
    generate_mixture,
    load_csv,
    load_idx,
    load_weak,
    orthonormal_means,
    save_csv,
    save_weak,
    triangle_mixture_spec,
    weakify,
)
from .losses import ClasswiseLoss, parse_loss
from .model import (
    GradientBuffer,
    Scorer,
    backward,
    forward,
    init_scorer,
    load_checkpoint,
    predict_labels,
    save_checkpoint,
    softmax,
)
from .queries import (
    LabelSpace,
    LabelSubset,
    QueryConfig,
    enumerate_in_out,
    enumerate_subsets,
    group_proportion,
    membership_matrix,
    respond,
    sample_subset,
)
from .risk import (
    Correction,
    DiscreteJoint,
    RiskEstimate,
    apply_correction,
    conditional_subset_laws,
    correction_slope,
    estimate_risk,
    groupwise_means,
    joint_recovery_residual,
    mae_conditional_mean,
    parse_correction,
    risk_identity_check,
    supervised_risk,
)
from .rng import derive_seed, make_rng, spawn_rng
from .trainer import (
    EpochMetrics,
    ModelSpec,
    SweepRow,
    TrainConfig,
    batch_gradient,
    evaluate,
    metrics_csv_lines,
    stepped_lr,
    sweep,
    train,
)
from .verify import run_full_verification, run_identity_battery, run_unbiasedness_check

__version__ = "0.1.0"
