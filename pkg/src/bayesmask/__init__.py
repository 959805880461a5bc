"""Sparse linear regression by Bayesian masking, with Lasso/ARD baselines."""
__version__ = "0.1.0"

from .errors import (
    BayesMaskError,
    ConvergenceError,
    DegenerateNoiseError,
    EmptyModelError,
    ModelDomainError,
    SingularSystemError,
)
from .model import (
    BMState,
    Dataset,
    FicTerms,
    FitResult,
    IterationRecord,
    bernoulli_second_moment,
    fic_lower_bound,
    fic_terms,
    grad_beta_pi,
)
from .solvers import (
    EG,
    EM,
    HYBRID,
    SolverConfig,
    fab_e_step,
    fab_g_step,
    fab_m_step,
    fit,
    learning_coefficient,
    prune,
)

from .baselines import (
    BaselineEstimate,
    ard_1d,
    ard_fit,
    lasso_1d,
    lasso_cd,
    lasso_cv,
    least_squares,
)
from .analysis import SelectionScore, binomial_ci, fab_1d_estimator, fab_bias, score_selection
from .experiments import (
    ExperimentSpec,
    TrajectoryRecord,
    gen_toy,
    gen_uniform,
    load_dataset,
    run_comparison,
    run_convergence_race,
    run_trajectories,
    save_dataset,
)
