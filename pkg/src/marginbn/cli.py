"""Command-line entry point for reproducible learning and evaluation runs.

Commands:

* ``learn``          solve for one structure and write a model bundle
* ``evaluate``       score a saved model bundle on a test CSV
* ``cross-validate`` k-fold protocol with inner model selection
* ``export-milp``    write the assembled model in MPS format, no solving

Every run writes its resolved configuration next to the results so outputs
are reproducible; exit code 0 covers success including feasible timeouts,
2 means the time limit passed without any incumbent, 1 is a usage or data
error.  The environment variable MARGINBN_LOG sets the log level.
"""

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .classifier import BnClassifier, evaluate, structure_to_dot
from .coefficients import DEFAULT_P_GRID, MDL, SBM, SM, gamma_from_p
from .data import load_csv, load_csv_with_codebook, make_folds
from .errors import MarginBnError
from .milp import build_model, write_mps
from .pipeline import LearnConfig, SelectionGrid, build_bank, cross_validate, learn_classifier
from .solver import NO_INCUMBENT, SolveConfig

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_INCUMBENT = 2


def _sanitize(obj):
    """Make nested results JSON-safe (non-finite floats become strings)."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_sanitize(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("data", help="input CSV (first column is the class unless --class-column)")
    parser.add_argument("--score", choices=[SM, SBM, MDL], default=SM)
    parser.add_argument("--gamma-p", type=float, default=None,
                        help="margin cap as a probability p, cap = log(p/(1-p)) (default 0.9)")
    parser.add_argument("--gamma", type=float, default=None, help="raw margin cap override")
    parser.add_argument("--max-parents", type=int, default=2)
    parser.add_argument("--delta", type=float, default=1.0, help="order-variable range")
    parser.add_argument("--bins", type=int, default=3,
                        help="quantile bins for continuous columns (default 3)")
    parser.add_argument("--class-column", default=None,
                        help="name or 0-based index of the class column")
    parser.add_argument("--schema", default=None,
                        help="JSON object mapping column name/index to cardinality")
    parser.add_argument("--time-limit", type=float, default=7200.0)
    parser.add_argument("--gap-tol", type=float, default=1e-6, help="stopping gap in percent")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default="marginbn-out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marginbn",
        description="Exact margin/MDL structure learning for Bayesian-network classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_learn = sub.add_parser("learn", help="learn one structure and save the model")
    _add_common(p_learn)

    p_eval = sub.add_parser("evaluate", help="score a saved model on a test CSV")
    p_eval.add_argument("data", help="test CSV")
    p_eval.add_argument("--model", required=True, help="model bundle JSON from learn")
    p_eval.add_argument("--out", default="marginbn-out")

    p_cv = sub.add_parser("cross-validate", help="k-fold evaluation with model selection")
    _add_common(p_cv)
    p_cv.add_argument("--folds", type=int, default=5)
    p_cv.add_argument("--gamma-p-grid", default=None,
                      help="comma-separated p grid (default the built-in grid)")
    p_cv.add_argument("--max-parents-grid", default=None,
                      help="comma-separated parent limits (default 1,2)")

    p_export = sub.add_parser("export-milp", help="write the model in MPS format")
    _add_common(p_export)
    return parser


def _learn_config(args) -> LearnConfig:
    if args.time_limit <= 0:
        raise MarginBnError("--time-limit must be positive")
    if args.max_parents < 0:
        raise MarginBnError("--max-parents must be >= 0")
    gamma = args.gamma
    p = args.gamma_p
    if args.score == MDL:
        if gamma is not None or p is not None:
            log.warning("score=mdl ignores --gamma/--gamma-p")
        gamma, p = None, None
    elif gamma is None and p is None:
        p = 0.9
    solver = SolveConfig(
        time_limit=args.time_limit,
        gap_tol_percent=args.gap_tol,
        threads=args.threads,
    )
    return LearnConfig(
        score=args.score,
        gamma=gamma,
        p=p,
        max_parents=args.max_parents,
        delta=args.delta,
        solver=solver,
    )


def _load_dataset(args):
    schema = None
    if args.schema:
        raw = json.loads(args.schema)
        schema = {int(k) if k.lstrip("-").isdigit() else k: int(v) for k, v in raw.items()}
    class_column = args.class_column
    if class_column is not None and class_column.lstrip("-").isdigit():
        class_column = int(class_column)
    return load_csv(args.data, schema=schema, bins=args.bins, class_column=class_column)


def _resolved_config(args, config: LearnConfig) -> dict:
    out = {
        "command": args.command,
        "data": os.path.abspath(args.data),
        "score": config.score,
        "gamma": config.resolved_gamma(),
        "p": config.p,
        "max_parents": config.max_parents,
        "delta": config.delta,
        "bins": args.bins,
        "seed": args.seed,
        "solver": asdict(config.solver),
    }
    return out


def _summary_lines(result) -> list[str]:
    gap = result.gap_percent
    gap_str = "inf" if math.isinf(gap) else f"{gap:.2f}"
    return [
        f"status={result.status} gap={gap_str}% "
        f"z={result.objective} zbar={result.upper_bound} "
        f"nodes={result.nodes_explored} time={result.wall_time:.2f}s"
    ]


def cmd_learn(args) -> int:
    config = _learn_config(args)
    ds = _load_dataset(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "run_config.json", _resolved_config(args, config))
    outcome = learn_classifier(ds, config)
    result = outcome.solve
    _write_json(out / "solve_result.json", result.to_json())
    outcome.classifier.save(out / "model.json")
    (out / "structure.dot").write_text(
        structure_to_dot(outcome.classifier.structure, ds.names), encoding="utf-8"
    )
    train_report = evaluate(outcome.classifier, ds)
    lines = _summary_lines(result)
    lines.append(
        f"training accuracy={train_report.accuracy:.4f} ci95={train_report.ci95:.4f}"
    )
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_NO_INCUMBENT if result.status == NO_INCUMBENT else EXIT_OK


def cmd_evaluate(args) -> int:
    clf = BnClassifier.load(args.model)
    if clf.codebook is not None:
        ds = load_csv_with_codebook(args.data, clf.codebook, extend_class=True)
    else:
        ds = load_csv(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = evaluate(clf, ds)
    _write_json(out / "eval_report.json", report.to_json())
    line = (
        f"accuracy={report.accuracy:.4f} ci95={report.ci95:.4f} "
        f"n={report.n_test} unseen_labels={report.unseen_label_errors}"
    )
    (out / "summary.txt").write_text(line + "\n", encoding="utf-8")
    print(line)
    return EXIT_OK


def cmd_cross_validate(args) -> int:
    config = _learn_config(args)
    ds = _load_dataset(args)
    if args.folds < 2:
        raise MarginBnError("--folds must be >= 2")
    grid_kwargs = {}
    if args.gamma_p_grid:
        grid_kwargs["p_values"] = tuple(float(v) for v in args.gamma_p_grid.split(","))
    elif config.p is not None and args.gamma_p is not None:
        grid_kwargs["p_values"] = (config.p,)
    if args.max_parents_grid:
        grid_kwargs["max_parents_values"] = tuple(
            int(v) for v in args.max_parents_grid.split(",")
        )
    grid = SelectionGrid(**grid_kwargs) if grid_kwargs else SelectionGrid()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = _resolved_config(args, config)
    resolved["folds"] = args.folds
    resolved["p_grid"] = list(grid.p_values)
    resolved["max_parents_grid"] = list(grid.max_parents_values)
    _write_json(out / "run_config.json", resolved)
    plan = make_folds(ds, args.folds, args.seed)
    _write_json(out / "folds.json", plan.to_json())
    report = cross_validate(ds, plan, config, grid)
    _write_json(out / "eval_report.json", report.to_json())
    lines = [
        f"pooled accuracy={report.accuracy:.4f} ci95={report.ci95:.4f} n={report.n_test}"
    ]
    for f, (acc, size) in enumerate(zip(report.per_fold, report.fold_sizes)):
        sel = report.selections[f]
        lines.append(
            f"fold {f}: accuracy={acc:.4f} n={size} p={sel['p']} K={sel['max_parents']}"
        )
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def cmd_export_milp(args) -> int:
    from .catalog import enumerate_parent_sets

    config = _learn_config(args)
    ds = _load_dataset(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "run_config.json", _resolved_config(args, config))
    catalog = enumerate_parent_sets(ds.num_vars, config.max_parents, config.catalog_mode)
    bank = build_bank(ds, catalog, config)
    model = build_model(bank, delta=config.delta)
    path = out / "model.mps"
    write_mps(model, path)
    print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "learn": cmd_learn,
    "evaluate": cmd_evaluate,
    "cross-validate": cmd_cross_validate,
    "export-milp": cmd_export_milp,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MARGINBN_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except MarginBnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
