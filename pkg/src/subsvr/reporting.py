"""Outer-fold evaluation and critical-subspace reporting.

A second 5-fold layer holds out test data the search never sees: each fold
runs the full grid search on its learning portion, and the held-out RMSEs
(original units) summarize prediction quality.  Variables appearing in the
accepted subspaces of every fold form the common (important) variable set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, normalize
from .ensemble import EnsembleModel
from .errors import InputError
from .gcv import GcvVariant, GridSearchResult, HyperGrid, grid_search
from .search import SearchConfig, make_fold_split
from .svr import SvrConfig


@dataclass
class FoldReport:
    fold_id: int
    test_rmse: float
    accepted_subspaces: list[tuple[int, ...]]
    optimal_epsilon: float
    optimal_cost: float

    @property
    def optimal_hyperparameters(self) -> tuple[float, float]:
        return (self.optimal_epsilon, self.optimal_cost)

    @property
    def variable_set(self) -> set[int]:
        out: set[int] = set()
        for indices in self.accepted_subspaces:
            out.update(indices)
        return out


@dataclass
class VariableReport:
    per_fold_variable_sets: list[set[int]]
    common_variables: set[int]
    subspace_frequency: dict[int, int]


@dataclass
class EvaluationReport:
    folds: list[FoldReport]
    mean_rmse: float
    sd_rmse: float
    variables: VariableReport
    labels: list[str]
    grid_tables: list[list[dict]] = field(default_factory=list)


def extract_common_variables(folds: list[FoldReport]) -> VariableReport:
    """Per-fold accepted-variable unions, their intersection, and how many
    accepted subspaces (over all folds) each variable appears in."""
    if not folds:
        raise InputError("need at least one fold report")
    per_fold = [f.variable_set for f in folds]
    common = set(per_fold[0])
    for s in per_fold[1:]:
        common &= s
    freq: dict[int, int] = {}
    for f in folds:
        for indices in f.accepted_subspaces:
            for i in set(indices):
                freq[i] = freq.get(i, 0) + 1
    return VariableReport(
        per_fold_variable_sets=per_fold, common_variables=common, subspace_frequency=freq
    )


def outer_evaluate(
    data: Dataset,
    config: SearchConfig,
    grid: HyperGrid,
    svr_base: SvrConfig,
    variant: GcvVariant = GcvVariant(),
    threads: int = 1,
) -> EvaluationReport:
    """Grid-search and refit on each outer learning portion, score on the
    held-out fold, and summarize RMSEs (mean and sample sd, original units)."""
    if data.normalized:
        raise InputError("outer_evaluate expects raw (unnormalized) data")
    if data.n < 2 * config.folds:
        raise InputError(f"need at least {2 * config.folds} rows for outer evaluation, got {data.n}")

    root = np.random.SeedSequence(config.seed)
    children = root.spawn(config.folds + 1)
    outer_split = make_fold_split(data.n, config.folds, np.random.default_rng(children[0]))

    folds: list[FoldReport] = []
    tables: list[list[dict]] = []
    rmses = np.empty(config.folds)
    for q in range(config.folds):
        learn_rows, test_rows = outer_split.fold_rows(q)
        assert np.intersect1d(learn_rows, test_rows).size == 0
        learn = normalize(data.subset(learn_rows))
        test = data.subset(test_rows)
        fold_seed = int(children[q + 1].generate_state(1, dtype=np.uint64)[0])
        fold_cfg = SearchConfig(
            subspace_dim=config.subspace_dim,
            selection_threshold=config.selection_threshold,
            termination_threshold=config.termination_threshold,
            max_iterations=config.max_iterations,
            folds=config.folds,
            seed=fold_seed,
            patience=config.patience,
        )
        result: GridSearchResult = grid_search(learn, grid, fold_cfg, svr_base, variant, threads)
        model = result.best_model
        pred = model.predict(test.X)
        rmse = float(np.sqrt(np.mean((test.y - pred) ** 2)))
        rmses[q] = rmse
        folds.append(
            FoldReport(
                fold_id=q,
                test_rmse=rmse,
                accepted_subspaces=[sub.indices for sub in model.subspaces],
                optimal_epsilon=result.best.epsilon,
                optimal_cost=result.best.cost,
            )
        )
        tables.append(result.table_rows())

    mean = float(rmses.mean())
    sd = float(rmses.std(ddof=1)) if config.folds > 1 else 0.0
    return EvaluationReport(
        folds=folds,
        mean_rmse=mean,
        sd_rmse=sd,
        variables=extract_common_variables(folds),
        labels=list(data.labels),
        grid_tables=tables,
    )


def critical_subspace_rows(
    model: EnsembleModel, labels: list[str], common: set[int] | None = None
) -> list[dict]:
    """One row per accepted subspace, flagging members of the common set."""
    if len(labels) != model.p:
        raise InputError(f"{len(labels)} labels for p={model.p} predictors")
    rows = []
    for rank, sub in enumerate(model.subspaces, start=1):
        members = [labels[i] for i in sub.indices]
        flagged = sorted(
            (labels[i] for i in sub.indices if common is not None and i in common),
            key=members.index,
        )
        rows.append(
            {
                "rank": rank,
                "indices": list(sub.indices),
                "variables": members,
                "common_members": flagged,
            }
        )
    return rows


def format_critical_subspaces(
    model: EnsembleModel, labels: list[str], common: set[int] | None = None
) -> str:
    """Aligned text table of the accepted subspaces in acceptance order."""
    rows = critical_subspace_rows(model, labels, common)
    if not rows:
        return "(no subspaces accepted; constant model)\n"
    var_width = max(len(", ".join(r["variables"])) for r in rows)
    lines = [f"{'#':>3}  {'subspace':<{var_width}}  common members"]
    for r in rows:
        vars_txt = ", ".join(r["variables"])
        common_txt = ", ".join(r["common_members"]) if r["common_members"] else "-"
        lines.append(f"{r['rank']:>3}  {vars_txt:<{var_width}}  {common_txt}")
    return "\n".join(lines) + "\n"


def evaluation_to_dict(report: EvaluationReport) -> dict:
    return {
        "version": 1,
        "mean_rmse": report.mean_rmse,
        "sd_rmse": report.sd_rmse,
        "folds": [
            {
                "fold_id": f.fold_id,
                "test_rmse": f.test_rmse,
                "optimal_epsilon": f.optimal_epsilon,
                "optimal_cost": f.optimal_cost,
                "accepted_subspaces": [list(s) for s in f.accepted_subspaces],
                "variables": sorted(report.labels[i] for i in f.variable_set),
            }
            for f in report.folds
        ],
        "common_variables": sorted(report.labels[i] for i in report.variables.common_variables),
        "common_variable_indices": sorted(report.variables.common_variables),
        "subspace_frequency": {
            report.labels[i]: c for i, c in sorted(report.variables.subspace_frequency.items())
        },
        "grid_tables": report.grid_tables,
    }


def format_evaluation(report: EvaluationReport) -> str:
    """Human-readable summary: per-fold table, RMSE stats, variable report."""
    lines = []
    lines.append("Outer fold evaluation")
    lines.append(f"{'fold':>4}  {'test RMSE':>12}  {'epsilon':>8}  {'cost':>6}  subspaces")
    for f in report.folds:
        subs = "; ".join(",".join(report.labels[i] for i in s) for s in f.accepted_subspaces)
        lines.append(
            f"{f.fold_id:>4}  {f.test_rmse:>12.6f}  {f.optimal_epsilon:>8g}  {f.optimal_cost:>6g}  {subs or '-'}"
        )
    lines.append("")
    lines.append(f"mean RMSE: {report.mean_rmse:.6f}")
    lines.append(f"sd RMSE:   {report.sd_rmse:.6f}")
    lines.append("")
    common = sorted(report.labels[i] for i in report.variables.common_variables)
    lines.append(f"common variables (in every fold): {', '.join(common) if common else '-'}")
    freq = report.variables.subspace_frequency
    if freq:
        lines.append("subspace membership counts:")
        for i, c in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0])):
            lines.append(f"  {report.labels[i]:<12} {c}")
    return "\n".join(lines) + "\n"
