"""Feature-level selection with group knockoffs.

Pipeline: cluster correlated features into groups, sample Gaussian group
knockoffs, score features against their knockoff copies, and run an
FDR-controlling filter on the resulting statistics.
"""

from .errors import FvgError, NumericalError, ValidationError
from .filters import (
    BudgetVector,
    EvalueVector,
    budgets,
    ebh_select,
    evalue_filter,
    evalues,
    fvg_filter,
    fvg_multiple,
    group_filter,
    knockoff_plus,
    naive_fvg,
)
from .grouping import CorrelationMatrix, cluster_average_linkage, correlation_from_data
from .knockoffs import (
    GaussianModel,
    SMatrix,
    build_s_equi,
    exchangeability_diagnostic,
    sample_knockoffs,
    sample_multiple_knockoffs,
    validate_s,
)
from .lasso import LassoFit, kkt_residual, lasso_cv, lasso_fit, lasso_residuals
from .metrics import GroundTruth, catching_sets, fdp_power, purity
from .scores import (
    LambdaRule,
    compute_g,
    kappa_tau,
    multi_scores,
    scores_combined,
    scores_joint_lasso,
    scores_marginal,
    scores_residual_corr,
    scores_separate_lasso,
    w_statistics,
)
from .simulate import ExperimentConfig, ExperimentResult, gen_synthetic, run_experiment
from .structures import (
    Dataset,
    GroupStructure,
    KappaTauTable,
    RejectionSet,
    ScorePair,
    ScoreTable,
    WTable,
    align_kappa_tau,
    align_w,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
