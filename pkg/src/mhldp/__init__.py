"""Metropolis-Hastings kernels on exponential-power targets, Lyapunov-condition
probes for the empirical-measure LDP, and rate functions on finite chains."""

from .exceptions import (
    CoverageError,
    DivergentIntegralError,
    DomainError,
    InfeasibleError,
    PreconditionError,
    QuadratureError,
    SizeError,
)
from .grid import GridSpec
from .kernel import (
    ChainTrace,
    EmpiricalMeasure,
    MhKernel,
    QuadratureConfig,
    acceptance_density,
    acceptance_density_via_g,
    acceptance_mass,
    acceptance_mass_via_g,
    empirical_measure,
    hastings_ratio,
    kernel_from_config,
    rejection_prob,
    simulate,
)
from .model import (
    GaussianIncrement,
    IndependentProposal,
    MalaProposal,
    RandomWalkProposal,
    TargetSpec,
    UniformBallIncrement,
    grad_log_target,
    log_target_unnorm,
    proposal_logpdf,
    proposal_sample,
)

from .lyapunov import (
    LimitProbeReport,
    LyapunovCandidate,
    ProbeThresholds,
    RegimeVerdict,
    classify_regime,
    cross_validate,
    evaluate_F_U,
    exp_integral,
    half_space_acceptance,
    probe_limits,
)
from .rate import (
    Coupling,
    GridChain,
    HalfSpaceEvent,
    RateResult,
    discretize,
    exact_ln_probability,
    ldp_slope_experiment,
    rate_function,
    relative_entropy,
    stationary_distribution,
)
from .ergodicity import (
    DriftCertificate,
    TvDecayReport,
    check_drift,
    check_minorization,
    drift_implies_property_a,
    tv_decay,
    tv_distance,
)

__version__ = "0.1.0"
