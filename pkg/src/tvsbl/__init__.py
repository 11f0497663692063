"""Total-variation regularization by synthesis, with sparse Bayesian learning.

The TV operator ``D`` is turned into a synthesis dictionary through its
pseudoinverse; the constant that ``D^+ D`` removes is restored by a shift
strategy. On that dictionary the package provides MAP (l1) estimators and
sparse Bayesian learning, plus phantoms, seeded noise and an experiment
harness.
"""
from .errors import (
    ConfigError,
    InfeasibleError,
    InvalidDimensionError,
    InvalidStrategyError,
    NumericalError,
    NumericalRankError,
    TooSmallError,
    TvsblError,
    UndefinedMetricError,
)
from .linops import (
    BandedOperator,
    KnownMean,
    NoisyDataMean,
    SynthesisOperator,
    ZeroRegion,
    ZerothFourierCoefficient,
    build_tv_1d,
    build_tv_2d,
    estimate_shift,
    mean_adjust,
    pseudoinverse,
)
from .map_solvers import (
    MapProblem,
    MapSolution,
    SolverOptions,
    default_lambda_grid,
    lambda_sweep,
    laplace_map_lambda,
    solve_analysis_tv,
    solve_synthesis_l1,
)
from .model import SynthesisModel
from .noise_metrics import NoisyObservation, add_noise, relative_error, snr
from .phantoms import Phantom1D, Phantom2D, piecewise_constant, shepp_logan_2d, shepp_logan_slice
from .sbl import (
    Restoration,
    SblConfig,
    SblHyperparams,
    SblPosterior,
    marginal_log_likelihood,
    posterior_moments,
    sbl_em,
    sbl_fast,
    sbl_solve,
    synthesize,
    update_hyperparams,
)

__version__ = "0.1.0"
