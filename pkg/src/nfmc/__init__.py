"""Flow-assisted MCMC: local Langevin moves, flow-proposed resampling moves,
concurrent forward-KL flow training, and importance-sampling evidence
estimation, all on plain numpy.
"""

__version__ = "0.1.0"

from .estimators import (
    EvidenceEstimate,
    ModeIndicator,
    WeightedSamples,
    evidence_estimate,
    importance_weights,
    log_evidence_difference,
    mode_log_mass,
)
from .flow import CouplingLayer, RealNvpFlow, build_realnvp
from .nn import AdamState, MlpConfig, MlpParams, adam_step, mlp_backward, mlp_forward, mlp_init
from .samplers import (
    MALA,
    ULA,
    KernelStats,
    WalkerEnsemble,
    langevin_step,
    log_nf_acceptance,
    nf_acceptance,
    nf_mh_step,
)
from .targets import (
    GaussianMixtureTarget,
    GaussianTarget,
    RadialVelocityTarget,
    RvDataset,
    RvPriorConfig,
    TargetPosterior,
    joker_initialize,
    rv_generate_observations,
    rv_model,
)
from .trainer import (
    LANGEVIN_KERNEL,
    MIXED_KERNEL,
    NF_KERNEL,
    IterationRecord,
    NonFiniteLossError,
    RunMetrics,
    TrainConfig,
    acceptance_rate_window,
    sample_train,
)
from .whitening import (
    WhiteningTransform,
    build_whitening,
    empirical_moments,
    symmetric_eig,
    whitened_target,
)

__all__ = [
    "__version__",
    "AdamState",
    "CouplingLayer",
    "EvidenceEstimate",
    "GaussianMixtureTarget",
    "GaussianTarget",
    "IterationRecord",
    "KernelStats",
    "LANGEVIN_KERNEL",
    "MALA",
    "MIXED_KERNEL",
    "NF_KERNEL",
    "MlpConfig",
    "MlpParams",
    "ModeIndicator",
    "NonFiniteLossError",
    "RadialVelocityTarget",
    "RealNvpFlow",
    "RunMetrics",
    "RvDataset",
    "RvPriorConfig",
    "TargetPosterior",
    "TrainConfig",
    "ULA",
    "WalkerEnsemble",
    "WeightedSamples",
    "WhiteningTransform",
    "acceptance_rate_window",
    "adam_step",
    "build_realnvp",
    "build_whitening",
    "empirical_moments",
    "evidence_estimate",
    "importance_weights",
    "joker_initialize",
    "langevin_step",
    "log_evidence_difference",
    "log_nf_acceptance",
    "mlp_backward",
    "mlp_forward",
    "mlp_init",
    "mode_log_mass",
    "nf_acceptance",
    "nf_mh_step",
    "rv_generate_observations",
    "rv_model",
    "sample_train",
    "symmetric_eig",
    "whitened_target",
]
