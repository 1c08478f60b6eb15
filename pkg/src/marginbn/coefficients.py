"""Linear-objective coefficients for the margin and MDL scores.

For a fixed parameter table, each sample's log-margin against a competing
class is linear in the stacked parent-set selection vector: entry (i, k)
carries the log-probability difference between the observed sample and the
sample with its class value swapped.  Candidates that neither belong to the
class variable nor contain it contribute exactly zero, which is why margin
catalogs may drop them.

The generative path stores one decomposable local score per candidate:
log-likelihood minus the usual MDL complexity penalty, both in base 2.
"""

import math
from dataclasses import dataclass

import numpy as np

from .catalog import ParentSetCatalog
from .data import CLASS_INDEX, Dataset
from .errors import ModelError
from .estimation import (
    OvaParamTable,
    ParamTable,
    _count_matrix,
    parent_config_codes,
)

SM = "sm"
SBM = "sbm"
MDL = "mdl"

DEFAULT_P_GRID = (0.501, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999)


def gamma_from_p(p: float) -> float:
    """Desired log-margin for a target posterior ratio p: log(p / (1-p))."""
    if not 0.5 < p < 1.0:
        raise ModelError(f"p must lie in (0.5, 1), got {p}")
    return math.log(p / (1.0 - p))


def gamma_grid(p_values=DEFAULT_P_GRID) -> tuple[float, ...]:
    return tuple(gamma_from_p(p) for p in p_values)


@dataclass
class CoefficientBank:
    """Dense coefficient rows (margin modes) or local scores (mdl).

    sm: one row per (sample, competing class), sample-major with competing
    classes ascending.  sbm: one row per sample.  mdl: ``local_scores`` only.
    ``gamma`` pins the hinge cap the bank was built for.
    """

    mode: str
    catalog: ParentSetCatalog
    num_samples: int
    class_cardinality: int
    gamma: float | None
    rows: np.ndarray | None
    row_samples: np.ndarray | None
    row_classes: np.ndarray | None
    local_scores: np.ndarray | None
    true_classes: np.ndarray | None

    @property
    def num_rows(self) -> int:
        return 0 if self.rows is None else self.rows.shape[0]

    def row_index(self, m: int, c: int) -> int:
        """Row of sample m against competing class c (sm banks only)."""
        if self.mode != SM:
            raise ModelError(f"row_index is only defined for sm banks, not {self.mode!r}")
        cm = int(self.true_classes[m])
        if c == cm:
            raise ModelError(f"sample {m}: class {c} is its own class, no margin row")
        if not 1 <= c <= self.class_cardinality:
            raise ModelError(f"class {c} out of range")
        rank = c - 1 if c < cm else c - 2
        return m * (self.class_cardinality - 1) + rank

    def selection_columns(self, structure_or_choices) -> np.ndarray:
        choices = getattr(structure_or_choices, "selection", structure_or_choices)
        if len(choices) != self.catalog.num_vars:
            raise ModelError("need one candidate choice per variable")
        return np.array(
            [self.catalog.flat(i, int(k)) for i, k in enumerate(choices)], dtype=np.int64
        )

    def dump(self, path) -> None:
        """Binary dump of the bank for solver debugging."""
        np.savez_compressed(
            path,
            mode=self.mode,
            gamma=np.float64(np.nan if self.gamma is None else self.gamma),
            rows=self.rows if self.rows is not None else np.empty((0, 0)),
            local_scores=self.local_scores if self.local_scores is not None else np.empty(0),
        )


def _margin_row_layout(true_classes: np.ndarray, sp_c: int):
    """Row bookkeeping for sm banks: sample-major, competing classes ascending."""
    m_total = len(true_classes)
    per = sp_c - 1
    row_samples = np.repeat(np.arange(m_total), per)
    row_classes = np.empty(m_total * per, dtype=np.int64)
    for m, cm in enumerate(true_classes):
        competitors = [c for c in range(1, sp_c + 1) if c != cm]
        row_classes[m * per : (m + 1) * per] = competitors
    return row_samples, row_classes


def build_sm(ds: Dataset, catalog: ParentSetCatalog, params: ParamTable, gamma: float) -> CoefficientBank:
    """Soft-margin coefficients: rows over (sample, competing class).

    Entry (i, k) of row (m, c) is the log-parameter of the observed sample
    minus the log-parameter of the sample with its class value replaced by c.
    """
    if params.catalog is not catalog and params.catalog.parent_sets != catalog.parent_sets:
        raise ModelError("parameter table was fitted on a different catalog")
    samples = ds.samples
    cls = ds.class_values
    sp_c = ds.class_cardinality
    m_total = ds.num_samples
    per = sp_c - 1
    rows = np.zeros((m_total * per, catalog.total_positions), dtype=np.float64)
    row_samples, row_classes = _margin_row_layout(cls, sp_c)

    # Row positions for competing class c: rank shifts by one past the true class.
    def rows_for(c: int, mask: np.ndarray) -> np.ndarray:
        rank = np.where(cls[mask] > c, c - 1, c - 2)
        return np.flatnonzero(mask) * per + rank

    for i in range(catalog.num_vars):
        child = samples[:, i] - 1
        for k, parents in enumerate(catalog.parent_sets[i]):
            if i != CLASS_INDEX and CLASS_INDEX not in parents:
                continue  # class swap cannot change these indicators
            col = catalog.flat(i, k)
            logt = params.log_theta(i, k)
            h = parent_config_codes(samples, parents, ds.cardinalities)
            if i == CLASS_INDEX:
                base = logt[h, child]
                for c in range(1, sp_c + 1):
                    mask = cls != c
                    if not mask.any():
                        continue
                    vals = base[mask] - logt[h[mask], c - 1]
                    rows[rows_for(c, mask), col] = vals
            else:
                stride = _class_stride(parents, ds.cardinalities)
                base = logt[h, child]
                h_wo = h - (cls - 1) * stride
                for c in range(1, sp_c + 1):
                    mask = cls != c
                    if not mask.any():
                        continue
                    h_c = h_wo[mask] + (c - 1) * stride
                    vals = base[mask] - logt[h_c, child[mask]]
                    rows[rows_for(c, mask), col] = vals
    return CoefficientBank(
        SM, catalog, m_total, sp_c, float(gamma), rows, row_samples, row_classes, None, cls.copy()
    )


def _class_stride(parents: tuple[int, ...], cardinalities) -> int:
    """Mixed-radix stride of the class variable inside a parent tuple."""
    stride = 1
    for p in reversed(parents):
        if p == CLASS_INDEX:
            return stride
        stride *= cardinalities[p]
    raise ModelError("parent set does not contain the class variable")


def build_sbm(ds: Dataset, catalog: ParentSetCatalog, ova: OvaParamTable, gamma: float) -> CoefficientBank:
    """Binary-margin coefficients: one row per sample.

    Row m scores, under the one-vs-all family of m's own class, the sample
    relabeled to class state 1 against the same sample relabeled to state 2.
    """
    samples = ds.samples
    cls = ds.class_values
    sp_c = ds.class_cardinality
    rows = np.zeros((ds.num_samples, catalog.total_positions), dtype=np.float64)

    for c in range(1, sp_c + 1):
        mask = cls == c
        if not mask.any():
            continue
        idx = np.flatnonzero(mask)
        table = ova.table_for(c)
        cards = table.cardinalities
        # The one-vs-all tables live in a relabeled space where this class is
        # state 1; parent codes must be taken there.
        sub = samples[idx].copy()
        sub[:, CLASS_INDEX] = 1
        for i in range(catalog.num_vars):
            child = sub[:, i] - 1
            for k, parents in enumerate(catalog.parent_sets[i]):
                if i != CLASS_INDEX and CLASS_INDEX not in parents:
                    continue
                col = catalog.flat(i, k)
                logt = table.log_theta(i, k)
                h1 = parent_config_codes(sub, parents, cards)
                if i == CLASS_INDEX:
                    rows[idx, col] = logt[h1, 0] - logt[h1, 1]
                else:
                    stride = _class_stride(parents, cards)
                    h2 = h1 + stride
                    rows[idx, col] = logt[h1, child] - logt[h2, child]
    row_samples = np.arange(ds.num_samples)
    return CoefficientBank(
        SBM, catalog, ds.num_samples, sp_c, float(gamma), rows, row_samples, None, None, cls.copy()
    )


def build_mdl(ds: Dataset, catalog: ParentSetCatalog) -> CoefficientBank:
    """Per-candidate MDL local scores: base-2 log-likelihood from raw counts
    (0 log 0 = 0) minus (log2 M)/2 times the free-parameter count."""
    counts = _count_matrix(ds.samples, ds.cardinalities, catalog, False, ds.num_samples)
    penalty_unit = math.log2(ds.num_samples) / 2.0
    scores = np.empty(catalog.total_positions, dtype=np.float64)
    for i in range(catalog.num_vars):
        sp = ds.cardinalities[i]
        for k, parents in enumerate(catalog.parent_sets[i]):
            table = counts.counts[i][k]
            totals = table.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                ll_terms = table * (np.log2(table) - np.log2(totals))
            ll = float(np.where(table > 0, ll_terms, 0.0).sum())
            num_params = table.shape[0] * (sp - 1)
            scores[catalog.flat(i, k)] = ll - penalty_unit * num_params
    return CoefficientBank(
        MDL, catalog, ds.num_samples, ds.class_cardinality, None, None, None, None, scores, None
    )


def sample_margins(bank: CoefficientBank, structure_or_choices) -> np.ndarray:
    """Uncapped per-sample log-margins for a fixed structure."""
    if bank.mode == MDL:
        raise ModelError("mdl banks have no per-sample margins")
    cols = bank.selection_columns(structure_or_choices)
    vals = bank.rows[:, cols].sum(axis=1)
    if bank.mode == SBM:
        return vals
    per = bank.class_cardinality - 1
    return np.minimum.reduceat(vals, np.arange(0, len(vals), per))


def score_structure(bank: CoefficientBank, structure_or_choices) -> float:
    """Score a fixed structure: hinge-capped margin sums for sm/sbm, the
    summed local scores for mdl."""
    if bank.mode == MDL:
        cols = bank.selection_columns(structure_or_choices)
        return float(bank.local_scores[cols].sum())
    margins = sample_margins(bank, structure_or_choices)
    return float(np.minimum(margins, bank.gamma).sum())
