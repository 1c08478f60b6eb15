"""Candidate parent-set catalogs and structures selected from them.

A catalog fixes, for each variable, the ordered list of candidate parent sets
the optimizer may choose from.  A structure picks exactly one candidate per
variable; the stacked 0/1 selection vector over all candidates is the integer
variable block of the MILP.
"""

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .data import CLASS_INDEX
from .errors import ModelError

MARGIN = "margin"
GENERATIVE = "generative"


@dataclass(frozen=True)
class ParentSetCatalog:
    """Per-variable candidate parent sets, in a deterministic (size, lex) order.

    ``parent_sets[i][k]`` is the k-th candidate for variable i, a sorted tuple
    of variable indices; candidate 0 is always the empty set.  ``offsets``
    maps variable blocks into the stacked selection vector.
    """

    num_vars: int
    max_parents: int
    mode: str
    parent_sets: tuple[tuple[tuple[int, ...], ...], ...]
    class_index: int = CLASS_INDEX
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        offs = [0]
        for sets in self.parent_sets:
            offs.append(offs[-1] + len(sets))
        object.__setattr__(self, "offsets", tuple(offs))

    @property
    def total_positions(self) -> int:
        return self.offsets[-1]

    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.parent_sets)

    def num_candidates(self, i: int) -> int:
        return len(self.parent_sets[i])

    def flat(self, i: int, k: int) -> int:
        return self.offsets[i] + k

    def unflat(self, pos: int) -> tuple[int, int]:
        i = int(np.searchsorted(self.offsets, pos, side="right")) - 1
        return i, pos - self.offsets[i]

    def block_slice(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    def candidate_index(self, i: int, parents: tuple[int, ...]) -> int:
        """Position of a parent set within variable i's block (-1 if absent)."""
        key = tuple(sorted(parents))
        try:
            return self.parent_sets[i].index(key)
        except ValueError:
            return -1

    def to_json(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "max_parents": self.max_parents,
            "mode": self.mode,
            "class_index": self.class_index,
            "parent_sets": [[list(s) for s in sets] for sets in self.parent_sets],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ParentSetCatalog":
        sets = tuple(
            tuple(tuple(int(p) for p in s) for s in var_sets)
            for var_sets in obj["parent_sets"]
        )
        return cls(int(obj["num_vars"]), int(obj["max_parents"]), obj["mode"], sets)


def enumerate_parent_sets(num_vars: int, max_parents: int, mode: str = MARGIN) -> ParentSetCatalog:
    """Enumerate candidate parent sets for every variable.

    Generative mode admits every subset of the other variables up to the
    parent limit.  Margin mode restricts non-class variables to the empty set
    plus sets containing the class variable: any other choice leaves every
    margin score unchanged, so nothing is lost.
    """
    if num_vars < 2:
        raise ModelError(f"need at least 2 variables, got {num_vars}")
    if max_parents < 0:
        raise ModelError(f"max_parents must be >= 0, got {max_parents}")
    if max_parents > num_vars - 1:
        max_parents = num_vars - 1
    if mode not in (MARGIN, GENERATIVE):
        raise ModelError(f"unknown catalog mode {mode!r}")

    all_sets = []
    for i in range(num_vars):
        others = [v for v in range(num_vars) if v != i]
        sets: list[tuple[int, ...]] = []
        for size in range(max_parents + 1):
            for combo in combinations(others, size):
                if (
                    mode == MARGIN
                    and i != CLASS_INDEX
                    and size > 0
                    and CLASS_INDEX not in combo
                ):
                    continue
                sets.append(combo)
        all_sets.append(tuple(sets))
    return ParentSetCatalog(num_vars, max_parents, mode, tuple(all_sets))


def expected_block_size(num_vars: int, max_parents: int, mode: str, i: int) -> int:
    """Closed-form count of candidates for variable i (cross-check for tests)."""
    n, k = num_vars, max_parents
    if mode == GENERATIVE or i == CLASS_INDEX:
        return sum(comb(n - 1, s) for s in range(min(k, n - 1) + 1))
    return 1 + sum(comb(n - 2, s) for s in range(min(k, n - 1)))


@dataclass(frozen=True)
class Structure:
    """One parent set chosen per variable, with derived acyclicity facts."""

    selection: tuple[int, ...]
    parent_sets: tuple[tuple[int, ...], ...]
    topological_order: tuple[int, ...] | None = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "topological_order", _topological_order(self.parent_sets))

    @property
    def num_vars(self) -> int:
        return len(self.selection)

    @property
    def is_acyclic(self) -> bool:
        return self.topological_order is not None

    def edges(self):
        """Directed edges (parent, child)."""
        for child, parents in enumerate(self.parent_sets):
            for p in parents:
                yield p, child

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.num_vars, self.num_vars), dtype=bool)
        for p, c in self.edges():
            adj[p, c] = True
        return adj

    def to_json(self) -> dict:
        return {
            "selection": list(self.selection),
            "parent_sets": [list(s) for s in self.parent_sets],
            "acyclic": self.is_acyclic,
        }


def _topological_order(parent_sets) -> tuple[int, ...] | None:
    """Kahn's algorithm with smallest-index tie-breaking; None when cyclic."""
    n = len(parent_sets)
    indegree = [len(p) for p in parent_sets]
    children: list[list[int]] = [[] for _ in range(n)]
    for child, parents in enumerate(parent_sets):
        for p in parents:
            children[p].append(child)
    ready = sorted(i for i in range(n) if indegree[i] == 0)
    order: list[int] = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        changed = False
        for c in children[v]:
            indegree[c] -= 1
            if indegree[c] == 0:
                ready.append(c)
                changed = True
        if changed:
            ready.sort()
    return tuple(order) if len(order) == n else None


def structure_from_choices(catalog: ParentSetCatalog, choices) -> Structure:
    """Structure from one candidate index per variable."""
    choices = tuple(int(k) for k in choices)
    if len(choices) != catalog.num_vars:
        raise ModelError("need one parent-set choice per variable")
    sets = []
    for i, k in enumerate(choices):
        if not 0 <= k < catalog.num_candidates(i):
            raise ModelError(f"variable {i}: candidate index {k} out of range")
        sets.append(catalog.parent_sets[i][k])
    return Structure(choices, tuple(sets))


def structure_from_selection(catalog: ParentSetCatalog, selection) -> Structure:
    """Structure from a stacked 0/1 selection vector (one 1 per variable block)."""
    vec = np.asarray(selection)
    if vec.shape != (catalog.total_positions,):
        raise ModelError(
            f"selection vector has shape {vec.shape}, expected ({catalog.total_positions},)"
        )
    choices = []
    for i in range(catalog.num_vars):
        block = vec[catalog.block_slice(i)]
        ones = np.flatnonzero(block == 1)
        if len(ones) != 1 or not np.all((block == 0) | (block == 1)):
            raise ModelError(f"variable {i}: block must contain exactly one 1")
        choices.append(int(ones[0]))
    return structure_from_choices(catalog, choices)


def selection_vector(catalog: ParentSetCatalog, structure_or_choices) -> np.ndarray:
    """Stacked one-hot vector encoding the given structure."""
    choices = getattr(structure_or_choices, "selection", structure_or_choices)
    vec = np.zeros(catalog.total_positions, dtype=np.int64)
    for i, k in enumerate(choices):
        vec[catalog.flat(i, int(k))] = 1
    return vec
