"""Invert reef drill cores for coralgal growth thresholds.

A forward stratigraphic model grows a 1-D synthetic core from coupled
assemblage population dynamics under depth, water-energy, and sediment
controls; MCMC samplers recover the controlling parameters from logged
core compositions.
"""

from .forward import (
    AssemblageSpec,
    BoundaryConditions,
    CoreRecord,
    Curve,
    GLVParams,
    SimulationConfig,
    ThresholdCurve,
    default_assemblages,
    default_boundary,
    default_glv,
    environment_factor,
    eval_threshold,
    expand_aim,
    glv_derivative,
    simulate,
)
from .observation import (
    UNKNOWN,
    CategoryMismatch,
    LengthMismatch,
    ObservedCore,
    floored_proportions,
    log_likelihood,
    misclassification_score,
)
from .ode import NonFiniteState, StepUnderflow, integrate, rkf45_step
from .parameters import (
    AdaptiveWalk,
    ConstrainedWalk,
    ParameterSpace,
    StepSizes,
    log_prior,
    propose_constrained,
    sample_prior,
)
from .runconfig import ConfigError, ReefPosterior, RunConfig, default_config, load_config
from .samplers import (
    ChainState,
    PTRun,
    SampleRun,
    TemperatureLadder,
    mh_accept_prob,
    run_parallel_tempering,
    run_single_chain,
    swap_accept_prob,
)

__version__ = "0.1.0"
