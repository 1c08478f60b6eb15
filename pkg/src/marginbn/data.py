"""Loading, validation, discretization, and fold partitioning of discrete datasets.

Conventions used throughout the package:

* Variables are indexed 0..N-1 and the class variable is always column 0
  (``load_csv`` can permute an arbitrary class column to the front).
* States are coded 1..sp(X_i) per variable, exactly as they appear in the
  CSV files this package reads and writes.
"""

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

CLASS_INDEX = 0

_MISSING_TOKENS = {"", "?"}


@dataclass(frozen=True)
class Dataset:
    """An immutable discrete classification dataset.

    samples holds one row per observation with values in 1..sp per column;
    column 0 is the class variable. ``codebook`` records how raw file values
    were encoded and is ignored by equality comparisons.
    """

    samples: np.ndarray
    cardinalities: tuple[int, ...]
    names: tuple[str, ...]
    codebook: "Codebook | None" = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.int64)
        object.__setattr__(self, "samples", samples)
        samples.setflags(write=False)
        if samples.ndim != 2:
            raise DataError("samples must be a 2-D array")
        m, n = samples.shape
        if n < 2:
            raise DataError(f"need at least 2 variables (class + 1 feature), got {n}")
        if m < 1:
            raise DataError("dataset has no rows")
        if len(self.cardinalities) != n or len(self.names) != n:
            raise DataError("cardinalities/names length must match the number of columns")
        for i, sp in enumerate(self.cardinalities):
            if sp < 2:
                raise DataError(f"variable {self.names[i]!r} has cardinality {sp}; need >= 2")
            col = samples[:, i]
            if col.min() < 1 or col.max() > sp:
                bad = int(np.argmax((col < 1) | (col > sp)))
                raise DataError(
                    f"value {col[bad]} in row {bad}, column {self.names[i]!r} "
                    f"outside 1..{sp}"
                )
        present = np.unique(samples[:, CLASS_INDEX])
        if len(present) != self.cardinalities[CLASS_INDEX]:
            missing = sorted(set(range(1, self.cardinalities[CLASS_INDEX] + 1)) - set(present.tolist()))
            raise DataError(f"class value(s) {missing} never occur in the data")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.cardinalities == other.cardinalities
            and self.names == other.names
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_vars(self) -> int:
        return self.samples.shape[1]

    @property
    def class_cardinality(self) -> int:
        return self.cardinalities[CLASS_INDEX]

    @property
    def class_values(self) -> np.ndarray:
        return self.samples[:, CLASS_INDEX]

    def subset(self, indices) -> "Dataset":
        """Row subset with unchanged cardinalities (class coverage re-checked)."""
        rows = np.asarray(indices, dtype=np.int64)
        return Dataset(self.samples[rows].copy(), self.cardinalities, self.names, self.codebook)


@dataclass(frozen=True)
class ColumnCodec:
    """How one raw CSV column maps to the 1..sp integer code space.

    kind is one of:

    * ``integer``: values >= 1 taken literally; ``offset`` is added first
      (offset 1 encodes a 0-based source column).
    * ``categorical``: ``labels[v-1]`` is the raw token for code v,
      in first-appearance order.
    * ``quantile``: ``cuts`` are ascending cut points; code v means the raw
      value is <= cuts[v-1] (and above cuts[v-2]), last bin is everything above.
    """

    name: str
    kind: str
    cardinality: int
    labels: tuple[str, ...] | None = None
    cuts: tuple[float, ...] | None = None
    offset: int = 0

    def encode(self, tokens: list[str], row_offset: int, extend: bool = False):
        """Encode raw tokens; ``extend`` admits unseen categorical labels as new codes."""
        if self.kind == "integer":
            out = np.empty(len(tokens), dtype=np.int64)
            for r, tok in enumerate(tokens):
                try:
                    out[r] = int(tok) + self.offset
                except ValueError:
                    raise DataError(
                        f"row {row_offset + r}, column {self.name!r}: "
                        f"expected an integer, got {tok!r}"
                    ) from None
            return out, self
        if self.kind == "categorical":
            table = {lab: v + 1 for v, lab in enumerate(self.labels)}
            extra: list[str] = []
            out = np.empty(len(tokens), dtype=np.int64)
            for r, tok in enumerate(tokens):
                code = table.get(tok)
                if code is None:
                    if not extend:
                        raise DataError(
                            f"row {row_offset + r}, column {self.name!r}: "
                            f"unseen label {tok!r}"
                        )
                    table[tok] = code = len(table) + 1
                    extra.append(tok)
                out[r] = code
            codec = self
            if extra:
                codec = ColumnCodec(
                    self.name, "categorical", len(table), self.labels + tuple(extra)
                )
            return out, codec
        if self.kind == "quantile":
            vals = np.empty(len(tokens), dtype=np.float64)
            for r, tok in enumerate(tokens):
                try:
                    vals[r] = float(tok)
                except ValueError:
                    raise DataError(
                        f"row {row_offset + r}, column {self.name!r}: "
                        f"expected a number, got {tok!r}"
                    ) from None
            return apply_cuts(vals, self.cuts), self
        raise DataError(f"unknown column kind {self.kind!r}")


@dataclass(frozen=True)
class Codebook:
    """Per-column encoding record, persisted with models so runs are auditable."""

    columns: tuple[ColumnCodec, ...]

    def to_json(self) -> dict:
        cols = []
        for c in self.columns:
            entry = {"name": c.name, "kind": c.kind, "cardinality": c.cardinality}
            if c.labels is not None:
                entry["labels"] = list(c.labels)
            if c.cuts is not None:
                entry["cuts"] = list(c.cuts)
            if c.offset:
                entry["offset"] = c.offset
            cols.append(entry)
        return {"columns": cols}

    @classmethod
    def from_json(cls, obj: dict) -> "Codebook":
        cols = []
        for entry in obj["columns"]:
            cols.append(
                ColumnCodec(
                    name=entry["name"],
                    kind=entry["kind"],
                    cardinality=int(entry["cardinality"]),
                    labels=tuple(entry["labels"]) if "labels" in entry else None,
                    cuts=tuple(entry["cuts"]) if "cuts" in entry else None,
                    offset=int(entry.get("offset", 0)),
                )
            )
        return cls(tuple(cols))

    def encode_table(self, header, rows, extend_class: bool = False) -> Dataset:
        """Encode a raw table with this codebook (used for held-out test files)."""
        if len(self.columns) != len(rows[0]):
            raise DataError(
                f"expected {len(self.columns)} columns, file has {len(rows[0])}"
            )
        row_offset = 2 if header else 1
        cols = []
        codecs = []
        for j, codec in enumerate(self.columns):
            tokens = [row[j] for row in rows]
            extend = extend_class and j == CLASS_INDEX
            coded, codec2 = codec.encode(tokens, row_offset, extend=extend)
            cols.append(coded)
            codecs.append(codec2)
        samples = np.stack(cols, axis=1)
        # Only the class column may pick up codes beyond the training range;
        # out-of-range feature values trip Dataset validation below.
        cards = tuple(
            max(c.cardinality, int(samples[:, j].max())) if j == CLASS_INDEX else c.cardinality
            for j, c in enumerate(codecs)
        )
        names = tuple(c.name for c in codecs)
        return Dataset(samples, cards, names, Codebook(tuple(codecs)))


# ---------------------------------------------------------------------------
# CSV reading / writing
# ---------------------------------------------------------------------------


def _read_raw(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[cell.strip() for cell in row] for row in csv.reader(fh) if row]
    if not rows:
        raise DataError(f"{path}: empty file")
    width = len(rows[0])
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {r + 1} has {len(row)} cells, expected {width}")
    if header is None:
        header = any(not _is_number(tok) for tok in rows[0])
    names = None
    if header:
        names = rows[0]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: no data rows after header")
    return names, rows


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _is_int(tok: str) -> bool:
    try:
        int(tok)
        return True
    except ValueError:
        return False


def _build_codec(name, tokens, bins):
    """Classify a raw column and build its codec plus encoded values."""
    if all(_is_int(t) for t in tokens):
        vals = np.array([int(t) for t in tokens], dtype=np.int64)
        if vals.min() < 0:
            labels = _first_appearance(tokens)
            return _categorical(name, tokens, labels)
        offset = 1 if vals.min() == 0 else 0
        coded = vals + offset
        return coded, ColumnCodec(name, "integer", int(coded.max()), offset=offset)
    if all(_is_number(t) for t in tokens):
        if bins is None:
            raise DataError(
                f"column {name!r} looks continuous; pass a bin count to discretize it"
            )
        vals = np.array([float(t) for t in tokens], dtype=np.float64)
        coded, cuts = discretize_quantile(vals, bins)
        return coded, ColumnCodec(name, "quantile", int(coded.max()), cuts=tuple(cuts))
    labels = _first_appearance(tokens)
    return _categorical(name, tokens, labels)


def _first_appearance(tokens):
    labels = []
    seen = set()
    for t in tokens:
        if t not in seen:
            seen.add(t)
            labels.append(t)
    return labels


def _categorical(name, tokens, labels):
    table = {lab: v + 1 for v, lab in enumerate(labels)}
    coded = np.array([table[t] for t in tokens], dtype=np.int64)
    return coded, ColumnCodec(name, "categorical", len(labels), labels=tuple(labels))


def load_csv(path, schema=None, bins=None, class_column=None, header=None) -> Dataset:
    """Load a discrete classification dataset from a CSV file.

    The first column is the class unless ``class_column`` (a name or 0-based
    index) says otherwise, in which case that column is permuted to the front.
    Integer columns with values >= 1 are taken literally; integer columns
    starting at 0 are shifted up by one; any other non-numeric column is
    mapped to 1..sp by first appearance.  Purely continuous columns are
    quantile-discretized when ``bins`` is given and rejected otherwise.
    Rows with missing cells ("" or "?") are rejected with a report.

    ``schema`` optionally maps column name or index to an explicit
    cardinality, overriding the inferred one (values above it are an error).
    """
    names, rows = _read_raw(path, header)
    n = len(rows[0])
    if names is None:
        names = ["class"] + [f"x{j + 1}" for j in range(1, n)]

    if class_column is not None:
        if isinstance(class_column, str):
            try:
                cls = names.index(class_column)
            except ValueError:
                raise DataError(f"no column named {class_column!r}") from None
        else:
            cls = int(class_column)
            if not 0 <= cls < n:
                raise DataError(f"class column index {cls} out of range")
        if cls != 0:
            order = [cls] + [j for j in range(n) if j != cls]
            names = [names[j] for j in order]
            rows = [[row[j] for j in order] for row in rows]

    missing = [r for r, row in enumerate(rows) if any(c in _MISSING_TOKENS for c in row)]
    if missing:
        shown = ", ".join(str(r + 1) for r in missing[:5])
        raise DataError(
            f"{path}: {len(missing)} row(s) with missing cells rejected "
            f"(data rows {shown}{'...' if len(missing) > 5 else ''})"
        )

    declared = _resolve_schema(schema, names)
    cols, codecs, cards = [], [], []
    for j in range(n):
        tokens = [row[j] for row in rows]
        coded, codec = _build_codec(names[j], tokens, bins)
        sp = codec.cardinality
        if declared.get(j) is not None:
            if sp > declared[j]:
                raise DataError(
                    f"column {names[j]!r}: observed cardinality {sp} exceeds "
                    f"declared {declared[j]}"
                )
            sp = declared[j]
            codec = ColumnCodec(codec.name, codec.kind, sp, codec.labels, codec.cuts, codec.offset)
        cols.append(coded)
        codecs.append(codec)
        cards.append(sp)

    samples = np.stack(cols, axis=1)
    return Dataset(samples, tuple(cards), tuple(names), Codebook(tuple(codecs)))


def load_csv_with_codebook(path, codebook: Codebook, header=None, extend_class=False) -> Dataset:
    """Load a CSV using an existing codebook (e.g. score a held-out test file
    with the encodings learned at training time)."""
    names, rows = _read_raw(path, header)
    missing = [r for r, row in enumerate(rows) if any(c in _MISSING_TOKENS for c in row)]
    if missing:
        raise DataError(f"{path}: {len(missing)} row(s) with missing cells rejected")
    return codebook.encode_table(names is not None, rows, extend_class=extend_class)


def _resolve_schema(schema, names):
    if schema is None:
        return {}
    if isinstance(schema, (list, tuple)):
        if len(schema) != len(names):
            raise DataError("schema sequence length must match the column count")
        return {j: int(sp) for j, sp in enumerate(schema) if sp is not None}
    out = {}
    for key, sp in schema.items():
        if isinstance(key, str):
            if key not in names:
                raise DataError(f"schema names unknown column {key!r}")
            out[names.index(key)] = int(sp)
        else:
            out[int(key)] = int(sp)
    return out


def write_csv(ds: Dataset, path, header: bool = True) -> None:
    """Write the integer-coded dataset back to CSV (reload recovers it as long
    as every variable attains its maximal value, otherwise pass the schema)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(ds.names)
        writer.writerows(ds.samples.tolist())


# ---------------------------------------------------------------------------
# Quantile discretization
# ---------------------------------------------------------------------------


def quantile_cuts(values: np.ndarray, bins: int) -> np.ndarray:
    """Ascending, deduplicated empirical-quantile cut points for ``bins`` bins."""
    if bins < 2:
        raise DataError(f"need at least 2 bins, got {bins}")
    qs = np.arange(1, bins) / bins
    cuts = np.unique(np.quantile(np.asarray(values, dtype=np.float64), qs))
    return cuts


def apply_cuts(values: np.ndarray, cuts) -> np.ndarray:
    """Bin values against cut points; value v lands in the first bin with v <= cut."""
    cuts = np.asarray(cuts, dtype=np.float64)
    return (np.searchsorted(cuts, np.asarray(values, dtype=np.float64), side="left") + 1).astype(
        np.int64
    )


def discretize_quantile(values, bins: int):
    """Quantile-discretize a numeric column into at most ``bins`` levels.

    Returns ``(codes, cuts)`` where codes are 1..B' (B' <= bins after merging
    tied cut points and dropping empty bins).  A constant column yields a
    single level with a warning; callers must drop such variables since every
    variable needs at least two states.
    """
    values = np.asarray(values, dtype=np.float64)
    cuts = quantile_cuts(values, bins)
    # Cuts equal to the maximum produce an empty top bin; drop them up front.
    cuts = cuts[cuts < values.max()] if values.size else cuts
    if cuts.size == 0:
        warnings.warn("constant column: quantile discretization yields a single level")
        return np.ones(values.shape, dtype=np.int64), np.empty(0, dtype=np.float64)
    codes = apply_cuts(values, cuts)
    # Relabel to a contiguous 1..B' range in case some interior bin is empty.
    present = np.unique(codes)
    if present.size != codes.max():
        remap = {old: new + 1 for new, old in enumerate(present.tolist())}
        codes = np.array([remap[v] for v in codes.tolist()], dtype=np.int64)
        cuts = cuts[[p - 1 for p in present.tolist() if p - 1 < cuts.size]]
    return codes, cuts


# ---------------------------------------------------------------------------
# Cross-validation folds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    """Stratified k-fold assignment, deterministic in (dataset, k, seed)."""

    assignments: np.ndarray
    k: int
    seed: int

    def __post_init__(self):
        arr = np.asarray(self.assignments, dtype=np.int64)
        object.__setattr__(self, "assignments", arr)
        arr.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, FoldPlan):
            return NotImplemented
        return (
            self.k == other.k
            and self.seed == other.seed
            and np.array_equal(self.assignments, other.assignments)
        )

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def to_json(self) -> dict:
        return {"k": self.k, "seed": self.seed, "assignments": self.assignments.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "FoldPlan":
        return cls(np.asarray(obj["assignments"], dtype=np.int64), int(obj["k"]), int(obj["seed"]))


def make_folds(ds: Dataset, k: int, seed: int) -> FoldPlan:
    """Stratified k-fold split: per-class and global fold sizes differ by <= 1.

    Shuffled class index lists are concatenated (classes in value order) and
    dealt cyclically over the folds, which balances both the per-class counts
    and the total fold sizes.
    """
    if k < 2:
        raise DataError(f"need at least 2 folds, got {k}")
    if k > ds.num_samples:
        raise DataError(f"cannot make {k} folds from {ds.num_samples} samples")
    rng = np.random.default_rng(seed)
    assignments = np.empty(ds.num_samples, dtype=np.int64)
    cursor = 0
    for c in range(1, ds.class_cardinality + 1):
        idx = np.flatnonzero(ds.class_values == c)
        if len(idx) < k:
            warnings.warn(
                f"class {c} has only {len(idx)} samples; folds cannot all contain it"
            )
        rng.shuffle(idx)
        for i in idx:
            assignments[i] = cursor % k
            cursor += 1
    return FoldPlan(assignments, k, seed)
