"""End-to-end learning runs: catalog, parameters, coefficients, solve, classify.

Model selection follows a fixed protocol: candidate (margin cap, parent
limit) pairs are scored on inner validation data (a stratified 20% holdout
when the training split exceeds 1000 samples, an inner 5-fold otherwise),
ties break toward fewer parents and then the smaller cap, and the winner is
refit on the whole training split.  Fold test data never reaches fitting or
selection.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .catalog import MARGIN, ParentSetCatalog, enumerate_parent_sets
from .classifier import BnClassifier, EvalReport, binomial_ci95, evaluate
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
)
from .data import Dataset, FoldPlan, make_folds
from .errors import ModelError
from .estimation import fit, fit_ova
from .milp import MilpModel, build_model
from .solver import SolveConfig, SolveResult, branch_and_bound

log = logging.getLogger(__name__)

INNER_HOLDOUT_THRESHOLD = 1000
INNER_FOLDS = 5


@dataclass(frozen=True)
class LearnConfig:
    """Controls for a single learning run or one cross-validation arm."""

    score: str = SM
    gamma: float | None = None
    p: float | None = 0.9
    max_parents: int = 2
    delta: float = 1.0
    catalog_mode: str = MARGIN
    laplace: bool = True
    solver: SolveConfig = field(default_factory=SolveConfig)

    def resolved_gamma(self) -> float | None:
        if self.score == MDL:
            return None
        if self.gamma is not None:
            return float(self.gamma)
        if self.p is None:
            raise ModelError("margin scores need either gamma or p")
        return gamma_from_p(self.p)


@dataclass
class LearnOutcome:
    classifier: BnClassifier
    solve: SolveResult
    catalog: ParentSetCatalog
    bank: CoefficientBank
    model: MilpModel


def build_bank(ds: Dataset, catalog: ParentSetCatalog, config: LearnConfig) -> CoefficientBank:
    if config.score == SM:
        params = fit(ds, catalog, laplace=config.laplace)
        return build_sm(ds, catalog, params, config.resolved_gamma())
    if config.score == SBM:
        ova = fit_ova(ds, catalog, laplace=config.laplace)
        return build_sbm(ds, catalog, ova, config.resolved_gamma())
    if config.score == MDL:
        return build_mdl(ds, catalog)
    raise ModelError(f"unknown score {config.score!r}")


def learn_classifier(ds: Dataset, config: LearnConfig) -> LearnOutcome:
    """Learn a structure for the configured score and wrap it as a classifier.

    The deployed classifier always uses the original smoothed parameters,
    whatever score drove the structure search.
    """
    catalog = enumerate_parent_sets(ds.num_vars, config.max_parents, config.catalog_mode)
    bank = build_bank(ds, catalog, config)
    model = build_model(bank, delta=config.delta)
    result = branch_and_bound(model, config.solver)
    if result.structure is None:
        raise ModelError(f"solver returned no structure (status {result.status})")
    params = fit(ds, catalog, laplace=True)
    clf = BnClassifier.from_params(params, result.structure, ds.names, ds.codebook)
    return LearnOutcome(clf, result, catalog, bank, model)


# ---------------------------------------------------------------------------
# Model selection and cross-validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionGrid:
    """Candidate (p, max_parents) pairs; mdl runs ignore p."""

    p_values: tuple[float, ...] = DEFAULT_P_GRID
    max_parents_values: tuple[int, ...] = (1, 2)

    def candidates(self, score: str):
        if score == MDL:
            return [(None, k) for k in self.max_parents_values]
        return [(p, k) for k in self.max_parents_values for p in self.p_values]


def _holdout_split(train: Dataset, seed: int):
    plan = make_folds(train, INNER_FOLDS, seed)
    return [(plan.train_indices(0), plan.test_indices(0))]


def _inner_cv_split(train: Dataset, seed: int):
    plan = make_folds(train, INNER_FOLDS, seed)
    return [(plan.train_indices(f), plan.test_indices(f)) for f in range(INNER_FOLDS)]


def select_model(train: Dataset, config: LearnConfig, grid: SelectionGrid, seed: int):
    """Pick (p, max_parents) by inner-validation accuracy.

    Candidates are visited with smaller parent limits and smaller caps first,
    and only strictly better accuracy displaces the incumbent, which encodes
    the tie-breaking rule.
    """
    candidates = grid.candidates(config.score)
    if len(candidates) == 1:
        return candidates[0], None
    if train.num_samples > INNER_HOLDOUT_THRESHOLD:
        splits = _holdout_split(train, seed)
    else:
        splits = _inner_cv_split(train, seed)
    best = None
    best_acc = -1.0
    for p, k in candidates:
        correct = 0
        total = 0
        for fit_idx, val_idx in splits:
            sub_cfg = replace(config, p=p, gamma=None, max_parents=k)
            outcome = learn_classifier(train.subset(fit_idx), sub_cfg)
            rep = evaluate(outcome.classifier, train.subset(val_idx))
            correct += rep.n_correct
            total += rep.n_test
        acc = correct / total
        if acc > best_acc:
            best_acc = acc
            best = (p, k)
    return best, best_acc


def cross_validate(ds: Dataset, folds: FoldPlan, config: LearnConfig,
                   grid: SelectionGrid | None = None) -> EvalReport:
    """Outer cross-validation with per-fold inner model selection.

    Returns the pooled accuracy (weighted by fold size) plus per-fold
    accuracies and the selected hyperparameters of each fold.
    """
    grid = grid or SelectionGrid()
    n_correct = 0
    n_total = 0
    per_fold: list[float] = []
    fold_sizes: list[int] = []
    selections: list[dict] = []
    all_margins: list[float] = []
    sp_c = ds.class_cardinality
    confusion = np.zeros((sp_c, sp_c), dtype=np.int64)
    unseen = 0
    for f in range(folds.k):
        train = ds.subset(folds.train_indices(f))
        test = ds.subset(folds.test_indices(f))
        (p, k), inner_acc = select_model(train, config, grid, seed=folds.seed + f)
        chosen = replace(config, p=p, gamma=None, max_parents=k)
        outcome = learn_classifier(train, chosen)
        rep = evaluate(outcome.classifier, test)
        n_correct += rep.n_correct
        n_total += rep.n_test
        per_fold.append(rep.accuracy)
        fold_sizes.append(rep.n_test)
        all_margins.extend(rep.margins)
        unseen += rep.unseen_label_errors
        side = len(rep.confusion)
        confusion[:side, :side] += np.asarray(rep.confusion, dtype=np.int64)
        selections.append(
            {
                "fold": f,
                "p": p,
                "max_parents": k,
                "inner_accuracy": inner_acc,
                "solver_status": outcome.solve.status,
                "gap_percent": outcome.solve.gap_percent,
            }
        )
        log.info("fold %d: accuracy=%.4f selected p=%s K=%s", f, rep.accuracy, p, k)
    accuracy = n_correct / n_total
    return EvalReport(
        accuracy=accuracy,
        ci95=binomial_ci95(accuracy, n_total),
        n_test=n_total,
        n_correct=n_correct,
        confusion=confusion.tolist(),
        margins=all_margins,
        unseen_label_errors=unseen,
        per_fold=per_fold,
        fold_sizes=fold_sizes,
        selections=selections,
    )
