"""Mixed-integer linear model assembly and acyclicity order certificates.

The model maximizes either the hinge-capped margin sum (one continuous margin
variable per sample, bounded above by the cap) or a decomposable local-score
objective, over the stacked 0/1 parent-set selection vector.  Acyclicity is
enforced by one continuous order variable per BN variable in [0, delta] and
the pairwise rows

    (1 - a[i,j]) * 2*delta + o[j] - o[i] >= delta / N    for all i != j,

where a[i,j] is the (selection-dependent) indicator of edge i -> j.  A binary
selection satisfies these rows for some order values exactly when it encodes
a DAG, so only N^2 - N rows are needed instead of exponentially many cluster
constraints.  The rows are stored with the edge indicators pre-expanded onto
the selection columns, so the LP sees a single static matrix.

Column layout: [selection block | margin variables | order variables].
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .catalog import ParentSetCatalog, Structure
from .coefficients import MDL, SM, CoefficientBank, score_structure
from .errors import ModelError


@dataclass
class MilpModel:
    """Dense maximize-form model: A_ub x <= b_ub, A_eq x = b_eq, bounds."""

    bank: CoefficientBank
    catalog: ParentSetCatalog
    mode: str
    gamma: float | None
    delta: float
    objective: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer_mask: np.ndarray
    ub_labels: list[str] = field(repr=False)
    eq_labels: list[str] = field(repr=False)
    col_labels: list[str] = field(repr=False)

    @property
    def num_columns(self) -> int:
        return self.objective.shape[0]

    @property
    def selection_count(self) -> int:
        return self.catalog.total_positions

    @property
    def margin_var_count(self) -> int:
        return 0 if self.mode == MDL else self.bank.num_samples

    @property
    def selection_slice(self) -> slice:
        return slice(0, self.selection_count)

    @property
    def margin_slice(self) -> slice:
        return slice(self.selection_count, self.selection_count + self.margin_var_count)

    @property
    def order_slice(self) -> slice:
        return slice(self.selection_count + self.margin_var_count, self.num_columns)

    @property
    def margin_row_count(self) -> int:
        return self.bank.num_rows

    def structure_objective(self, structure_or_choices) -> float:
        """Exact model objective of a binary selection (margin variables at
        their optimal values)."""
        return score_structure(self.bank, structure_or_choices)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint/bound violation of a candidate point (tests)."""
        worst = 0.0
        if self.A_ub.size:
            worst = max(worst, float((self.A_ub @ x - self.b_ub).max()))
        if self.A_eq.size:
            worst = max(worst, float(np.abs(self.A_eq @ x - self.b_eq).max()))
        worst = max(worst, float((self.lower - x).max()), float((x - self.upper).max()))
        return worst


def build_model(bank: CoefficientBank, delta: float = 1.0, gamma: float | None = None) -> MilpModel:
    """Assemble the model for a coefficient bank.

    ``gamma`` defaults to the cap the bank was built with; passing a
    different value is rejected so a bank is never paired with a foreign
    hinge.  ``delta`` is the order-variable range; any positive value yields
    the same feasible selections.
    """
    if delta <= 0:
        raise ModelError(f"delta must be positive, got {delta}")
    if gamma is None:
        gamma = bank.gamma
    elif bank.gamma is not None and gamma != bank.gamma:
        raise ModelError(f"bank was built for gamma={bank.gamma}, got {gamma}")
    catalog = bank.catalog
    n = catalog.num_vars
    p = catalog.total_positions
    m_vars = 0 if bank.mode == MDL else bank.num_samples
    cols = p + m_vars + n
    order_off = p + m_vars

    col_labels = [
        f"ps{i}_{k}" for i in range(n) for k in range(catalog.num_candidates(i))
    ]
    col_labels += [f"mv{m}" for m in range(m_vars)]
    col_labels += [f"ov{i}" for i in range(n)]

    # --- objective ---------------------------------------------------------
    objective = np.zeros(cols)
    if bank.mode == MDL:
        objective[:p] = bank.local_scores
    else:
        objective[p : p + m_vars] = 1.0

    # --- inequality rows: margin rows then order rows ----------------------
    margin_rows = bank.num_rows
    order_rows = n * n - n
    A_ub = np.zeros((margin_rows + order_rows, cols))
    b_ub = np.zeros(margin_rows + order_rows)
    ub_labels: list[str] = []
    if margin_rows:
        A_ub[:margin_rows, :p] = -bank.rows
        A_ub[np.arange(margin_rows), p + bank.row_samples] = 1.0
        if bank.mode == SM:
            ub_labels += [
                f"mar{m}_{c}" for m, c in zip(bank.row_samples, bank.row_classes)
            ]
        else:
            ub_labels += [f"mar{m}" for m in bank.row_samples]

    r = margin_rows
    rhs = 2.0 * delta - delta / n
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for k, parents in enumerate(catalog.parent_sets[j]):
                if i in parents:
                    A_ub[r, catalog.flat(j, k)] = 2.0 * delta
            A_ub[r, order_off + i] = 1.0
            A_ub[r, order_off + j] = -1.0
            b_ub[r] = rhs
            ub_labels.append(f"ord{i}_{j}")
            r += 1

    # --- equality rows: one selection per variable --------------------------
    A_eq = np.zeros((n, cols))
    for i in range(n):
        A_eq[i, catalog.block_slice(i)] = 1.0
    b_eq = np.ones(n)
    eq_labels = [f"sel{i}" for i in range(n)]

    # --- bounds -------------------------------------------------------------
    lower = np.zeros(cols)
    upper = np.empty(cols)
    upper[:p] = 1.0
    if m_vars:
        # Finite floor keeps the relaxation bounded before margin rows bind;
        # the maximization never rests on it.
        floor = min(0.0, float(np.minimum(bank.rows, 0.0).sum(axis=1).min()))
        lower[p : p + m_vars] = floor
        upper[p : p + m_vars] = gamma
    upper[order_off:] = delta

    integer_mask = np.zeros(cols, dtype=bool)
    integer_mask[:p] = True

    return MilpModel(
        bank, catalog, bank.mode, gamma, delta, objective,
        A_ub, b_ub, A_eq, b_eq, lower, upper, integer_mask,
        ub_labels, eq_labels, col_labels,
    )


# ---------------------------------------------------------------------------
# Order certificates (acyclicity)
# ---------------------------------------------------------------------------


def check_order_certificate(structure: Structure, order_values, delta: float, tol: float = 1e-9) -> bool:
    """True iff the order values satisfy every pairwise order row for this
    selection (within tol)."""
    o = np.asarray(order_values, dtype=np.float64)
    n = structure.num_vars
    if o.shape != (n,):
        raise ModelError(f"need {n} order values, got shape {o.shape}")
    adj = structure.adjacency()
    need = delta / n
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            slack = (0.0 if adj[i, j] else 2.0 * delta) + o[j] - o[i]
            if slack < need - tol:
                return False
    return True


def certificate_from_dag(structure: Structure, delta: float) -> np.ndarray:
    """Order values witnessing acyclicity: position in a topological order,
    scaled by delta/N."""
    if not structure.is_acyclic:
        raise ModelError("cyclic structure admits no order certificate")
    n = structure.num_vars
    o = np.empty(n)
    for pos, v in enumerate(structure.topological_order):
        o[v] = pos * delta / n
    return o


def order_system_feasible(structure: Structure, delta: float = 1.0) -> bool:
    """LP feasibility of the full order-row system with the selection fixed.

    Complements ``certificate_from_dag``: cyclic selections must come back
    infeasible.
    """
    n = structure.num_vars
    adj = structure.adjacency()
    rows = []
    rhs = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            row = np.zeros(n)
            row[i] = 1.0
            row[j] = -1.0
            rows.append(row)
            rhs.append((0.0 if adj[i, j] else 2.0 * delta) - delta / n)
    res = linprog(
        c=np.zeros(n),
        A_ub=np.asarray(rows),
        b_ub=np.asarray(rhs),
        bounds=[(0.0, delta)] * n,
        method="highs",
    )
    if res.status == 0:
        return True
    if res.status == 2:
        return False
    raise ModelError(f"order-system feasibility LP failed: {res.message}")


# ---------------------------------------------------------------------------
# MPS export
# ---------------------------------------------------------------------------


def write_mps(model: MilpModel, path, name: str = "MARGINBN") -> None:
    """Write the model in free MPS format (OBJSENSE MAX, integrality markers
    around the selection block) for cross-checking with external solvers."""
    lines = [f"NAME          {name}", "OBJSENSE", "    MAX", "ROWS", " N  OBJ"]
    for label in model.ub_labels:
        lines.append(f" L  {label}")
    for label in model.eq_labels:
        lines.append(f" E  {label}")

    def col_entries(col: int) -> list[tuple[str, float]]:
        entries = []
        if model.objective[col] != 0.0:
            entries.append(("OBJ", model.objective[col]))
        for r in np.flatnonzero(model.A_ub[:, col]):
            entries.append((model.ub_labels[r], model.A_ub[r, col]))
        for r in np.flatnonzero(model.A_eq[:, col]):
            entries.append((model.eq_labels[r], model.A_eq[r, col]))
        return entries

    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for col in range(model.num_columns):
        want_int = bool(model.integer_mask[col])
        if want_int != in_int:
            state = "INTORG" if want_int else "INTEND"
            lines.append(f"    MARK{marker:04d}  'MARKER'                 '{state}'")
            marker += 1
            in_int = want_int
        cname = model.col_labels[col]
        for rname, val in col_entries(col):
            lines.append(f"    {cname}  {rname}  {val:.17g}")
    if in_int:
        lines.append(f"    MARK{marker:04d}  'MARKER'                 'INTEND'")

    lines.append("RHS")
    for label, val in zip(model.ub_labels, model.b_ub):
        if val != 0.0:
            lines.append(f"    RHS  {label}  {val:.17g}")
    for label, val in zip(model.eq_labels, model.b_eq):
        if val != 0.0:
            lines.append(f"    RHS  {label}  {val:.17g}")

    lines.append("BOUNDS")
    for col in range(model.num_columns):
        cname = model.col_labels[col]
        lo, up = model.lower[col], model.upper[col]
        if lo != 0.0:
            lines.append(f" LO BND  {cname}  {lo:.17g}")
        lines.append(f" UP BND  {cname}  {up:.17g}")
    lines.append("ENDATA")

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
