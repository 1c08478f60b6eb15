"""Globally optimal Bayesian-network classifier structures.

Learns structures that maximize a hinge-capped probabilistic margin (full or
one-vs-all binary variant) or a generative MDL score, by exact mixed-integer
optimization with compact order-based acyclicity constraints and an any-time
branch-and-bound engine.
"""

from .catalog import (
    GENERATIVE,
    MARGIN,
    ParentSetCatalog,
    Structure,
    enumerate_parent_sets,
    selection_vector,
    structure_from_choices,
    structure_from_selection,
)
from .classifier import (
    BnClassifier,
    EvalReport,
    evaluate,
    naive_bayes_structure,
    structure_to_dot,
)
from .coefficients import (
    DEFAULT_P_GRID,
    MDL,
    SBM,
    SM,
    CoefficientBank,
    build_mdl,
    build_sbm,
    build_sm,
    gamma_from_p,
    gamma_grid,
    sample_margins,
    score_structure,
)
from .data import (
    CLASS_INDEX,
    Codebook,
    Dataset,
    FoldPlan,
    discretize_quantile,
    load_csv,
    load_csv_with_codebook,
    make_folds,
    write_csv,
)
from .errors import DataError, MarginBnError, ModelError, SolverError
from .estimation import OvaParamTable, ParamTable, fit, fit_ova, log_joint
from .milp import (
    MilpModel,
    build_model,
    certificate_from_dag,
    check_order_certificate,
    order_system_feasible,
    write_mps,
)
from .pipeline import (
    LearnConfig,
    LearnOutcome,
    SelectionGrid,
    cross_validate,
    learn_classifier,
    select_model,
)
from .solver import (
    LpSolution,
    SolveConfig,
    SolveResult,
    branch_and_bound,
    compute_gap_percent,
    round_incumbent,
    solve_lp,
)

__version__ = "0.1.0"
