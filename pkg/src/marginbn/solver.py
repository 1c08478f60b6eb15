"""Any-time branch-and-bound over the LP relaxation of a selection model.

Each node fixes a subset of the binary selection entries and bounds the
subtree by its LP relaxation (solved with HiGHS through scipy).  Because the
order rows live inside the relaxation, any LP-feasible integral selection is
automatically acyclic, so no cycle-elimination pass is ever needed; a
rounding heuristic with cycle repair keeps an incumbent available from the
root onward.  The solver can be interrupted at any time and reports the best
incumbent together with a worst-case bound and the relative gap
100 * (upper - incumbent) / upper.
"""

import heapq
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .catalog import ParentSetCatalog, Structure, structure_from_choices
from .errors import SolverError
from .milp import MilpModel

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE_TIMEOUT = "feasible-timeout"
NO_INCUMBENT = "no-incumbent"
INFEASIBLE = "infeasible"

_OBJ_TOL = 1e-9


def _obj_tol(ref: float) -> float:
    return _OBJ_TOL * max(1.0, abs(ref))


@dataclass
class LpSolution:
    """Optimal basic solution of one relaxation (objective in maximize sense)."""

    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float
    x: np.ndarray | None


def solve_lp(model: MilpModel, fixings=None) -> LpSolution:
    """Solve the LP relaxation, optionally with selection entries fixed to 0/1.

    Infeasible relaxations are a prune signal, not an error; genuine backend
    failures raise so a wrong answer is never returned silently.
    """
    lower = model.lower
    upper = model.upper
    if fixings:
        lower = lower.copy()
        upper = upper.copy()
        for pos, val in fixings.items():
            lower[pos] = upper[pos] = float(val)
    res = linprog(
        c=-model.objective,
        A_ub=model.A_ub if model.A_ub.size else None,
        b_ub=model.b_ub if model.A_ub.size else None,
        A_eq=model.A_eq,
        b_eq=model.b_eq,
        bounds=np.column_stack([lower, upper]),
        method="highs",
    )
    if res.status == 0:
        return LpSolution("optimal", -float(res.fun), np.asarray(res.x))
    if res.status == 2:
        return LpSolution("infeasible", -math.inf, None)
    if res.status == 3:
        return LpSolution("unbounded", math.inf, None)
    raise SolverError(f"LP backend failure (status {res.status}): {res.message}")


def round_incumbent(lp: LpSolution, catalog: ParentSetCatalog) -> Structure | None:
    """Round a (possibly fractional) LP point to a DAG.

    Takes each variable's highest-valued candidate, accepts variables in
    descending confidence, and demotes to the empty set any choice that would
    close a cycle; the result is always a valid DAG.
    """
    if lp.status != "optimal":
        return None
    n = catalog.num_vars
    picks = np.empty(n, dtype=np.int64)
    confidence = np.empty(n)
    vec = lp.x[: catalog.total_positions]
    for i in range(n):
        block = vec[catalog.block_slice(i)]
        picks[i] = int(np.argmax(block))
        confidence[i] = block[picks[i]]
    order = sorted(range(n), key=lambda i: (-confidence[i], i))

    children: list[list[int]] = [[] for _ in range(n)]
    chosen = [0] * n
    for i in order:
        parents = catalog.parent_sets[i][picks[i]]
        if parents and _reaches_any(children, i, set(parents)):
            continue  # would close a cycle; keep the empty set
        chosen[i] = int(picks[i])
        for p in parents:
            children[p].append(i)
    return structure_from_choices(catalog, chosen)


def _reaches_any(children, start, targets) -> bool:
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        if v in targets:
            return True
        for c in children[v]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


@dataclass
class SolveConfig:
    """Branch-and-bound controls.

    gap_tol_percent is the relative-gap stopping tolerance in percent.
    heuristic_interval runs the rounding heuristic every so many explored
    nodes (0 disables it).  threads > 1 solves sibling relaxations in a
    thread pool; single-threaded runs are fully deterministic.
    """

    time_limit: float = 7200.0
    gap_tol_percent: float = 1e-6
    node_order: str = "best"  # "best" | "depth"
    branch_rule: str = "most-fractional"
    int_tol: float = 1e-6
    heuristic_interval: int = 1
    log_interval: int = 0
    threads: int = 1
    trace: bool = False


@dataclass
class SolveResult:
    """Outcome of a solve: incumbent, bound, gap, and search statistics."""

    status: str
    structure: Structure | None
    objective: float | None
    upper_bound: float
    gap_percent: float
    nodes_explored: int
    wall_time: float
    trace: list = field(default_factory=list, repr=False)
    progress: list = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "structure": None if self.structure is None else self.structure.to_json(),
            "objective": _num(self.objective),
            "upper_bound": _num(self.upper_bound),
            "gap_percent": _num(self.gap_percent),
            "nodes_explored": self.nodes_explored,
            "wall_time": self.wall_time,
        }


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def compute_gap_percent(objective: float | None, upper_bound: float) -> float:
    """Worst-case sub-optimality gap, in percent.

    Convention: no incumbent means an infinite gap; a closed bound means 0;
    the relative formula applies only while the bound is positive, since it
    breaks down at non-positive bounds (there we also report infinity).
    """
    if objective is None:
        return math.inf
    if upper_bound - objective <= _obj_tol(upper_bound):
        return 0.0
    if upper_bound > 0:
        return 100.0 * (upper_bound - objective) / upper_bound
    return math.inf


@dataclass
class _Node:
    seq: int
    bound: float
    x: np.ndarray
    fixings: dict
    depth: int

    def __lt__(self, other):  # heap tie-breaking: older nodes first
        return self.seq < other.seq


class _Search:
    """Mutable state of one branch-and-bound run."""

    def __init__(self, model: MilpModel, config: SolveConfig):
        self.model = model
        self.config = config
        self.catalog = model.catalog
        self.best_z: float = -math.inf
        self.best_structure: Structure | None = None
        self.explored = 0
        self.seq = 0
        self.start = time.perf_counter()
        self.upper_reported = math.inf
        self.heap: list[tuple[float, _Node]] = []
        self.stack: list[_Node] = []
        self.trace: list[dict] = []
        self.progress: list[dict] = []

    # -- node pool ----------------------------------------------------------

    def push(self, node: _Node) -> None:
        if self.config.node_order == "depth":
            self.stack.append(node)
        else:
            heapq.heappush(self.heap, (-node.bound, node))

    def pop(self) -> _Node:
        if self.config.node_order == "depth":
            return self.stack.pop()
        return heapq.heappop(self.heap)[1]

    def has_open(self) -> bool:
        return bool(self.heap or self.stack)

    def open_count(self) -> int:
        return len(self.heap) + len(self.stack)

    def open_max_bound(self) -> float:
        if self.config.node_order == "depth":
            return max((n.bound for n in self.stack), default=-math.inf)
        return -self.heap[0][0] if self.heap else -math.inf

    # -- incumbents and bounds ----------------------------------------------

    def offer_structure(self, structure: Structure | None) -> None:
        if structure is None:
            return
        z = self.model.structure_objective(structure)
        if z > self.best_z:
            self.best_z = z
            self.best_structure = structure

    def current_upper(self) -> float:
        live = max(self.best_z, self.open_max_bound())
        # Reported bound is monotone even against LP noise.
        self.upper_reported = max(self.best_z, min(self.upper_reported, live))
        return self.upper_reported

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def record(self, parent_bound: float, bound: float) -> None:
        if self.config.trace:
            self.trace.append(
                {
                    "node": self.explored,
                    "parent_bound": parent_bound,
                    "bound": bound,
                    "incumbent": self.best_z,
                    "time": self.elapsed(),
                }
            )

    def snapshot(self) -> None:
        """Per-iteration any-time record: incumbent and reported bound."""
        if self.config.trace:
            self.progress.append(
                {
                    "incumbent": self.best_z,
                    "upper": self.current_upper(),
                    "time": self.elapsed(),
                }
            )

    # -- node processing ----------------------------------------------------

    def fractional_entry(self, x: np.ndarray) -> int | None:
        vec = x[: self.catalog.total_positions]
        dist = np.abs(vec - np.round(vec))
        pick = int(np.argmax(dist))  # most fractional, lowest index on ties
        return pick if dist[pick] > self.config.int_tol else None

    def integral_structure(self, x: np.ndarray) -> Structure:
        choices = [
            int(np.argmax(x[self.catalog.block_slice(i)]))
            for i in range(self.catalog.num_vars)
        ]
        return structure_from_choices(self.catalog, choices)

    def child_fixings(self, node: _Node, pos: int, val: int) -> dict:
        fix = dict(node.fixings)
        fix[pos] = val
        if val == 1:
            # One selection per variable: siblings drop to zero immediately.
            i, _ = self.catalog.unflat(pos)
            for other in range(self.catalog.offsets[i], self.catalog.offsets[i + 1]):
                if other != pos:
                    fix[other] = 0
        return fix

    def absorb(self, lp: LpSolution, parent_bound: float, fixings: dict, depth: int) -> None:
        """Account one solved relaxation: prune, take incumbent, or enqueue."""
        self.explored += 1
        self.record(parent_bound, lp.objective)
        if lp.status != "optimal":
            return
        frac = self.fractional_entry(lp.x)
        if frac is None:
            self.offer_structure(self.integral_structure(lp.x))
            return
        if self.config.heuristic_interval and (
            self.explored % self.config.heuristic_interval == 0
        ):
            self.offer_structure(round_incumbent(lp, self.catalog))
        if lp.objective > self.best_z + _obj_tol(lp.objective):
            self.seq += 1
            self.push(_Node(self.seq, lp.objective, lp.x, fixings, depth))

    def maybe_log(self) -> None:
        cfg = self.config
        if cfg.log_interval and self.explored % cfg.log_interval == 0:
            upper = self.current_upper()
            gap = compute_gap_percent(
                None if self.best_structure is None else self.best_z, upper
            )
            log.info(
                "node=%d z=%.8g zbar=%.8g gap=%.4g%% open=%d t=%.2f",
                self.explored, self.best_z, upper, gap, self.open_count(), self.elapsed(),
            )


def branch_and_bound(model: MilpModel, config: SolveConfig | None = None) -> SolveResult:
    """Maximize the model exactly, or return the best incumbent plus bound at
    the time limit."""
    config = config or SolveConfig()
    if config.node_order not in ("best", "depth"):
        raise SolverError(f"unknown node order {config.node_order!r}")
    if config.branch_rule != "most-fractional":
        raise SolverError(f"unknown branch rule {config.branch_rule!r}")
    search = _Search(model, config)
    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None

    try:
        root = solve_lp(model)
        search.absorb(root, parent_bound=math.inf, fixings={}, depth=0)
        if root.status == "infeasible":
            return _finish(search, INFEASIBLE)
        if root.status == "unbounded":
            raise SolverError("relaxation unbounded; model bounds are broken")
        # Root heuristic guarantees an any-time incumbent from the start.
        if config.heuristic_interval and search.best_structure is None:
            search.offer_structure(round_incumbent(root, model.catalog))
        search.snapshot()

        while search.has_open():
            if search.elapsed() >= config.time_limit:
                return _finish(
                    search,
                    FEASIBLE_TIMEOUT if search.best_structure is not None else NO_INCUMBENT,
                )
            batch = [search.pop()]
            if pool is not None:
                while search.has_open() and len(batch) < config.threads:
                    batch.append(search.pop())
            batch = [
                n for n in batch if n.bound > search.best_z + _obj_tol(n.bound)
            ]
            jobs = []
            for node in batch:
                pos = search.fractional_entry(node.x)
                if pos is None:
                    search.offer_structure(search.integral_structure(node.x))
                    continue
                for val in (1, 0):
                    jobs.append((node, search.child_fixings(node, pos, val)))
            if pool is not None:
                sols = list(pool.map(lambda j: solve_lp(model, j[1]), jobs))
            else:
                sols = [solve_lp(model, fix) for _, fix in jobs]
            for (node, fix), lp in zip(jobs, sols):
                search.absorb(lp, node.bound, fix, node.depth + 1)
            search.snapshot()
            search.maybe_log()
            if search.best_structure is not None and _gap_closed(search, config):
                return _finish(search, OPTIMAL)
        return _finish(search, OPTIMAL if search.best_structure is not None else INFEASIBLE)
    finally:
        if pool is not None:
            pool.shutdown()


def _gap_closed(search: _Search, config: SolveConfig) -> bool:
    upper = search.current_upper()
    slack = upper - search.best_z
    if slack <= _obj_tol(upper):
        return True
    if upper > 0 and 100.0 * slack / upper <= config.gap_tol_percent:
        return True
    return False


def _finish(search: _Search, status: str) -> SolveResult:
    if status == OPTIMAL and not search.has_open():
        # Exhausted search: the bound is the incumbent itself.
        search.upper_reported = search.best_z
        upper = search.best_z
    else:
        upper = search.current_upper()
    has_incumbent = search.best_structure is not None
    objective = search.best_z if has_incumbent else None
    if status == INFEASIBLE:
        upper = -math.inf
    gap = compute_gap_percent(objective, upper)
    result = SolveResult(
        status=status,
        structure=search.best_structure,
        objective=objective,
        upper_bound=upper,
        gap_percent=gap,
        nodes_explored=search.explored,
        wall_time=search.elapsed(),
        trace=search.trace,
        progress=search.progress,
    )
    log.debug(
        "finished status=%s z=%s zbar=%s nodes=%d t=%.2f",
        status, result.objective, result.upper_bound, result.nodes_explored, result.wall_time,
    )
    return result
