"""Sufficient statistics and smoothed ML parameters per candidate parent set.

Counts are kept as exact integers for every (variable, candidate parent set)
pair; probabilities and their logs are derived lazily in floating point.
Parent configurations are coded in mixed radix over the parent values in
catalog order (first parent most significant), giving O(1) table lookup.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .catalog import ParentSetCatalog, Structure
from .data import CLASS_INDEX, Dataset
from .errors import ModelError

log = logging.getLogger(__name__)


def parent_state_count(parents: tuple[int, ...], cardinalities) -> int:
    out = 1
    for p in parents:
        out *= cardinalities[p]
    return out


def parent_config_codes(samples: np.ndarray, parents: tuple[int, ...], cardinalities) -> np.ndarray:
    """Mixed-radix code of each sample's parent configuration (0-based)."""
    codes = np.zeros(samples.shape[0], dtype=np.int64)
    for p in parents:
        codes = codes * cardinalities[p] + (samples[:, p] - 1)
    return codes


@dataclass
class ParamTable:
    """Counts and conditional distributions for every catalog candidate.

    ``counts[i][k]`` has shape (#parent configs, sp(X_i)); rows are parent
    configurations, columns are child states.  With Laplace smoothing each
    probability is (n+1)/(n_h + sp); without it, unseen parent configurations
    fall back to the uniform distribution (the smoothing limit), keeping logs
    finite where possible.
    """

    catalog: ParentSetCatalog
    cardinalities: tuple[int, ...]
    laplace: bool
    num_samples: int
    counts: list[list[np.ndarray]]
    _theta_cache: dict = field(default_factory=dict, repr=False)
    _log_theta_cache: dict = field(default_factory=dict, repr=False)

    def theta(self, i: int, k: int) -> np.ndarray:
        key = (i, k)
        got = self._theta_cache.get(key)
        if got is None:
            counts = self.counts[i][k]
            sp = self.cardinalities[i]
            if self.laplace:
                got = (counts + 1.0) / (counts.sum(axis=1, keepdims=True) + sp)
            else:
                totals = counts.sum(axis=1, keepdims=True)
                with np.errstate(invalid="ignore"):
                    got = counts / totals
                got[totals[:, 0] == 0] = 1.0 / sp
            self._theta_cache[key] = got
        return got

    def log_theta(self, i: int, k: int) -> np.ndarray:
        key = (i, k)
        got = self._log_theta_cache.get(key)
        if got is None:
            with np.errstate(divide="ignore"):
                got = np.log(self.theta(i, k))
            self._log_theta_cache[key] = got
        return got


def _count_matrix(samples, cardinalities, catalog, laplace, num_samples) -> ParamTable:
    counts: list[list[np.ndarray]] = []
    for i in range(catalog.num_vars):
        sp = cardinalities[i]
        child = samples[:, i] - 1
        per_var = []
        for parents in catalog.parent_sets[i]:
            h = parent_config_codes(samples, parents, cardinalities)
            num_h = parent_state_count(parents, cardinalities)
            flat = np.bincount(h * sp + child, minlength=num_h * sp)
            per_var.append(flat.reshape(num_h, sp))
        counts.append(per_var)
    return ParamTable(catalog, tuple(cardinalities), laplace, num_samples, counts)


def fit(ds: Dataset, catalog: ParentSetCatalog, laplace: bool = True) -> ParamTable:
    """Count sufficient statistics and expose (smoothed) ML parameters."""
    if catalog.num_vars != ds.num_vars:
        raise ModelError("catalog and dataset disagree on the number of variables")
    return _count_matrix(ds.samples, ds.cardinalities, catalog, laplace, ds.num_samples)


@dataclass
class OvaParamTable:
    """One two-class parameter family per class value.

    ``tables[c-1]`` re-interprets class value c as state 1 and every other
    class as state 2, so each table is a ParamTable over cardinalities
    (2, sp(X_2), ..., sp(X_N)).  Summed over all c this needs about twice the
    base table's storage, since each table's class axis collapses to 2.
    """

    class_cardinality: int
    tables: tuple[ParamTable, ...]

    def table_for(self, c: int) -> ParamTable:
        return self.tables[c - 1]


def fit_ova(ds: Dataset, catalog: ParentSetCatalog, laplace: bool = True) -> OvaParamTable:
    """Fit the one-vs-all families: for each class value c, refit with class
    column mapped c -> 1, everything else -> 2."""
    if catalog.num_vars != ds.num_vars:
        raise ModelError("catalog and dataset disagree on the number of variables")
    sp_c = ds.class_cardinality
    cards = (2,) + tuple(ds.cardinalities[1:])
    tables = []
    for c in range(1, sp_c + 1):
        relabeled = ds.samples.copy()
        relabeled[:, CLASS_INDEX] = np.where(ds.class_values == c, 1, 2)
        tables.append(_count_matrix(relabeled, cards, catalog, laplace, ds.num_samples))
    return OvaParamTable(sp_c, tuple(tables))


def log_joint(params: ParamTable, structure: Structure, x) -> float:
    """Log joint probability of one full state under the selected structure.

    Returns -inf (with a debug diagnostic) when an unsmoothed zero parameter
    is hit.
    """
    x = np.asarray(x, dtype=np.int64).reshape(1, -1)
    total = 0.0
    for i, k in enumerate(structure.selection):
        parents = params.catalog.parent_sets[i][k]
        h = int(parent_config_codes(x, parents, params.cardinalities)[0])
        val = params.log_theta(i, k)[h, x[0, i] - 1]
        if val == -np.inf:
            log.debug(
                "zero parameter: variable %d state %d given parents %s config %d",
                i, int(x[0, i]), parents, h,
            )
            return float("-inf")
        total += float(val)
    return total


def log_joint_batch(params: ParamTable, structure: Structure, samples: np.ndarray) -> np.ndarray:
    """Vectorized log_joint over the rows of a sample matrix."""
    samples = np.asarray(samples, dtype=np.int64)
    total = np.zeros(samples.shape[0], dtype=np.float64)
    for i, k in enumerate(structure.selection):
        parents = params.catalog.parent_sets[i][k]
        h = parent_config_codes(samples, parents, params.cardinalities)
        total += params.log_theta(i, k)[h, samples[:, i] - 1]
    return total
