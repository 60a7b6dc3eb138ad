"""Numerical toolkit for coding over a noisy channel assisted by a noisy shared state."""

__version__ = "0.1.0"

from .capacity import (
    CapacityEstimate,
    Preparation,
    blocked_capacity,
    build_omega,
    cc_cost,
    father_rates,
    joint_and_separate,
    mother_rates,
    objective,
    one_shot_capacity,
    separate_strategy_rate,
)
from .channels import (
    IsometricExtension,
    KrausChannel,
    apply,
    complementary,
    depolarizing_channel,
    dephasing_channel,
    erasure_channel,
    identity_channel,
    isometric_extension,
)
from .measures import PartitionSpec, coherent_information, conditional_entropy, mutual_information
from .optimize import OptimizerConfig
from .states import (
    DimensionCapExceeded,
    InvalidStateError,
    LabeledState,
    maximally_entangled,
    maximally_mixed,
    partial_trace,
    purify,
    tensor,
    trace_distance,
    von_neumann_entropy,
)
