"""Quasi-stationary analysis of finite absorbed Markov chains.

Core objects: a killed transition kernel (:class:`SubStochasticKernel`),
its spectral triple (quasi-stationary law alpha, survival eigenvalue rho,
survival capacity eta, tilted invariant law beta), the conditioned-forever
chain obtained by h-transform, exact conditional time-averages, seeded
Monte Carlo estimation, and empirical certificates for the exponential
convergence bounds tying all of these together.
"""

from .converse import (
    ContractionReport,
    HypothesisReport,
    certify_converse,
    dobrushin_coeff,
    hypothesis_check,
)
from .ergodic import (
    SamplingPlan,
    conditional_functional,
    envelope_grid_minimizer,
    optimal_t0,
    verify_ergodic_theorem,
    verify_general_bound,
)
from .estimator import (
    ExtinctionError,
    SweepRow,
    TradeoffPrediction,
    TrajectoryBatch,
    estimate_beta,
    predict_tradeoff,
    simulate,
    sweep_error_vs_N,
)
from .kernels import (
    Distribution,
    Generator,
    HorizonTooLarge,
    SubStochasticKernel,
    as_distribution,
    bridge_marginals,
    conditioned_evolve,
    conditioned_marginal_given_T,
    log_survival_vector,
    read_kernel,
    survival_probability,
    survival_vector,
    tv_distance,
    uniformize,
    write_kernel,
)
from .models import ModelSpec, build, condition_quality
from .qprocess import (
    BoundReport,
    QKernel,
    build_q_kernel,
    fitted_rates,
    q_mixing_report,
    verify_eta_bound,
    verify_qproc_approx,
)
from .spectral import (
    DecayFit,
    MinorizationCert,
    MinorizationRefused,
    PowerIterationError,
    SpectralTriple,
    certify_minorization,
    compute_spectral,
    conditioned_tv_rate,
    fit_decay,
    generator_decay_rate,
    physical_rate,
)

__version__ = "0.1.0"
