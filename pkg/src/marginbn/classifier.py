"""Deployable classifiers from learned structures, plus evaluation reports.

A classifier keeps only the conditional tables its structure actually selects
(always the original smoothed parameters, never the one-vs-all families) and
predicts by maximizing the log joint over class values, breaking ties toward
the smallest class.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import ParentSetCatalog, Structure, structure_from_choices
from .data import CLASS_INDEX, Codebook, Dataset
from .errors import DataError, ModelError
from .estimation import ParamTable, parent_config_codes


@dataclass(frozen=True)
class BnClassifier:
    """An acyclic structure with its selected conditional tables."""

    structure: Structure
    cardinalities: tuple[int, ...]
    names: tuple[str, ...]
    tables: tuple[np.ndarray, ...]  # per variable: (#parent configs, sp) probabilities
    codebook: Codebook | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.structure.is_acyclic:
            raise ModelError("classifier structure must be acyclic")
        for i, table in enumerate(self.tables):
            if table.shape[1] != self.cardinalities[i]:
                raise ModelError(f"variable {i}: table width does not match cardinality")

    @property
    def num_vars(self) -> int:
        return len(self.cardinalities)

    @property
    def class_cardinality(self) -> int:
        return self.cardinalities[CLASS_INDEX]

    @classmethod
    def from_params(cls, params: ParamTable, structure: Structure,
                    names=None, codebook=None) -> "BnClassifier":
        """Extract the selected tables from a full parameter table."""
        tables = []
        for i, k in enumerate(structure.selection):
            tables.append(params.theta(i, k).copy())
        n = len(structure.selection)
        names = tuple(names) if names is not None else ("class",) + tuple(
            f"x{j + 1}" for j in range(1, n)
        )
        return cls(structure, tuple(params.cardinalities), names, tuple(tables), codebook)

    # -- scoring -------------------------------------------------------------

    def class_log_joints(self, features) -> np.ndarray:
        """Log joint of (c, features) for every class value c (batched)."""
        feats = np.asarray(features, dtype=np.int64)
        if feats.ndim == 1:
            feats = feats.reshape(1, -1)
        if feats.shape[1] != self.num_vars - 1:
            raise ModelError(f"expected {self.num_vars - 1} feature values")
        for j in range(feats.shape[1]):
            col = feats[:, j]
            if col.min() < 1 or col.max() > self.cardinalities[j + 1]:
                raise DataError(f"feature {self.names[j + 1]!r} has out-of-range values")
        sp_c = self.class_cardinality
        full = np.empty((feats.shape[0], self.num_vars), dtype=np.int64)
        full[:, 1:] = feats
        scores = np.empty((feats.shape[0], sp_c))
        with np.errstate(divide="ignore"):
            log_tables = [np.log(t) for t in self.tables]
        for c in range(1, sp_c + 1):
            full[:, CLASS_INDEX] = c
            total = np.zeros(feats.shape[0])
            for i, parents in enumerate(self.structure.parent_sets):
                h = parent_config_codes(full, parents, self.cardinalities)
                total += log_tables[i][h, full[:, i] - 1]
            scores[:, c - 1] = total
        return scores

    def predict(self, features) -> int:
        """Most probable class for one feature vector (smallest wins ties)."""
        scores = self.class_log_joints(np.asarray(features).reshape(1, -1))[0]
        return int(np.argmax(scores)) + 1  # argmax takes the first maximum

    def predict_batch(self, features) -> np.ndarray:
        scores = self.class_log_joints(features)
        return np.argmax(scores, axis=1).astype(np.int64) + 1

    def margin(self, sample) -> float:
        """Log-margin of one labeled sample: log joint of its own class minus
        the best competing class.  Positive means correctly classified."""
        sample = np.asarray(sample, dtype=np.int64)
        true = int(sample[CLASS_INDEX])
        if not 1 <= true <= self.class_cardinality:
            raise DataError(f"class value {true} out of range")
        scores = self.class_log_joints(sample[1:].reshape(1, -1))[0]
        rivals = np.delete(scores, true - 1)
        return float(scores[true - 1] - rivals.max())

    def margins_batch(self, samples) -> np.ndarray:
        samples = np.asarray(samples, dtype=np.int64)
        scores = self.class_log_joints(samples[:, 1:])
        own = scores[np.arange(len(samples)), samples[:, CLASS_INDEX] - 1]
        masked = scores.copy()
        masked[np.arange(len(samples)), samples[:, CLASS_INDEX] - 1] = -np.inf
        return own - masked.max(axis=1)

    # -- persistence ----------------------------------------------------------

    def to_bundle(self) -> dict:
        return {
            "names": list(self.names),
            "cardinalities": list(self.cardinalities),
            "structure": self.structure.to_json(),
            "tables": [t.tolist() for t in self.tables],
            "codebook": None if self.codebook is None else self.codebook.to_json(),
        }

    @classmethod
    def from_bundle(cls, obj: dict) -> "BnClassifier":
        parent_sets = tuple(tuple(int(p) for p in s) for s in obj["structure"]["parent_sets"])
        structure = Structure(tuple(int(k) for k in obj["structure"]["selection"]), parent_sets)
        tables = tuple(np.asarray(t, dtype=np.float64) for t in obj["tables"])
        codebook = None if obj.get("codebook") is None else Codebook.from_json(obj["codebook"])
        return cls(structure, tuple(int(c) for c in obj["cardinalities"]),
                   tuple(obj["names"]), tables, codebook)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_bundle(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "BnClassifier":
        with open(path, encoding="utf-8") as fh:
            return cls.from_bundle(json.load(fh))


def naive_bayes_structure(catalog: ParentSetCatalog) -> Structure:
    """The star structure: empty parents for the class, {class} for features."""
    choices = [0]
    for i in range(1, catalog.num_vars):
        k = catalog.candidate_index(i, (CLASS_INDEX,))
        if k < 0:
            raise ModelError(
                f"catalog has no {{class}} parent set for variable {i}; need max_parents >= 1"
            )
        choices.append(k)
    return structure_from_choices(catalog, choices)


def structure_to_dot(structure: Structure, names) -> str:
    """GraphViz digraph with one node per variable and one edge per parent."""
    lines = ["digraph bn {"]
    for name in names:
        lines.append(f'  "{name}";')
    for p, c in structure.edges():
        lines.append(f'  "{names[p]}" -> "{names[c]}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass
class EvalReport:
    """Classification quality on held-out data."""

    accuracy: float
    ci95: float
    n_test: int
    n_correct: int
    confusion: list[list[int]]
    margins: list[float]
    unseen_label_errors: int = 0
    per_fold: list[float] | None = None
    fold_sizes: list[int] | None = None
    selections: list[dict] | None = None

    def to_json(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "ci95": self.ci95,
            "n_test": self.n_test,
            "n_correct": self.n_correct,
            "confusion": self.confusion,
            "margins": self.margins,
            "unseen_label_errors": self.unseen_label_errors,
        }
        if self.per_fold is not None:
            out["per_fold"] = self.per_fold
            out["fold_sizes"] = self.fold_sizes
        if self.selections is not None:
            out["selections"] = self.selections
        return out


def binomial_ci95(accuracy: float, n: int) -> float:
    """Normal-approximation half width: 1.96 * sqrt(acc * (1-acc) / n)."""
    return 1.96 * math.sqrt(accuracy * (1.0 - accuracy) / n)


def evaluate(clf: BnClassifier, test: Dataset) -> EvalReport:
    """Accuracy with a 95% confidence half-width, confusion counts, and
    per-sample log-margins.

    Test labels the classifier never saw count as errors and are flagged;
    zero margins also count as errors (ties are resolved pessimistically
    here, deterministically in predict).
    """
    sp_c = clf.class_cardinality
    labels = test.class_values
    known = labels <= sp_c
    predictions = clf.predict_batch(test.samples[:, 1:])
    n = test.num_samples
    size = max(sp_c, int(labels.max()))
    confusion = np.zeros((size, size), dtype=np.int64)
    for t, p in zip(labels, predictions):
        confusion[t - 1, p - 1] += 1
    margins = np.full(n, -np.inf)
    if known.any():
        margins[known] = clf.margins_batch(test.samples[known])
    # Exact zero margins count as errors: a tie is not a classification.
    correct = int(np.count_nonzero((predictions == labels) & known & (margins > 0)))
    accuracy = correct / n
    return EvalReport(
        accuracy=accuracy,
        ci95=binomial_ci95(accuracy, n),
        n_test=n,
        n_correct=correct,
        confusion=confusion.tolist(),
        margins=[float(v) for v in margins],
        unseen_label_errors=int(np.count_nonzero(~known)),
    )
