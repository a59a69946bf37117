"""Hyperparameter selection by generalized cross-validation.

The grid search runs a full subspace search per (epsilon, cost) cell, refits
the accepted subspaces on all learning data, and scores the result with GCV.
Effective degrees of freedom come from the squared-loss ridge smoothers of the
accepted subspaces with lambda = 1/cost: variant A1 applies the stagewise
recursion S_j = S'_j (I - sum_{l<j} S_l) exactly, variant A2 simply sums
trace(S'_j).  A1 is the default: the A2 sum ignores the overlap between
stages, so with many accepted subspaces it drifts past n and stops
discriminating, while the recursion stays bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .ensemble import EnsembleModel, finalize
from .errors import InputError, NumericError
from .kernels import KernelSpec
from .search import SearchConfig, SearchResult, SearchTrace, run_search
from .svr import SvrConfig, ridge_smoother

VARIANT_A1 = "A1"
VARIANT_A2 = "A2"


@dataclass(frozen=True)
class GcvVariant:
    mode: str = VARIANT_A1

    def __post_init__(self):
        if self.mode not in (VARIANT_A1, VARIANT_A2):
            raise InputError(f"GCV variant must be A1 or A2, got {self.mode!r}")


@dataclass(frozen=True)
class HyperGrid:
    """Candidate (epsilon, cost) levels; the paper-grid default is 3 x 3."""

    epsilons: tuple[float, ...] = (0.01, 0.1, 0.5)
    costs: tuple[float, ...] = (1.0, 2.0, 5.0)

    def __post_init__(self):
        if not self.epsilons or not self.costs:
            raise InputError("hyperparameter grid must have at least one level per axis")
        if len(set(self.epsilons)) != len(self.epsilons):
            raise InputError("epsilon levels must be distinct")
        if len(set(self.costs)) != len(self.costs):
            raise InputError("cost levels must be distinct")
        if any(e < 0 for e in self.epsilons):
            raise InputError("epsilon levels must be >= 0")
        if any(c <= 0 for c in self.costs):
            raise InputError("cost levels must be > 0")

    def cells(self) -> list[tuple[float, float]]:
        return [(e, c) for e in self.epsilons for c in self.costs]


def smoother_matrices(
    data: Dataset, accepted_indices: list[tuple[int, ...]], kernel: KernelSpec, lam: float
) -> list[np.ndarray]:
    """Stagewise smoothers S_j = S'_j (I - sum_{l<j} S_l) for the accepted
    subspaces, in order (the exact squared-loss recursion)."""
    n = data.n
    eye = np.eye(n)
    running = np.zeros((n, n))
    out = []
    for indices in accepted_indices:
        s_prime = ridge_smoother(data.X[:, list(indices)], kernel, lam)
        s_j = s_prime @ (eye - running)
        running = running + s_j
        out.append(s_j)
    return out


def smoother_traces(
    data: Dataset,
    accepted_indices: list[tuple[int, ...]],
    kernel: KernelSpec,
    lam: float,
    variant: GcvVariant,
) -> float:
    """Total effective degrees of freedom trace(S) under the chosen variant."""
    if not accepted_indices:
        return 0.0
    if variant.mode == VARIANT_A1:
        return float(sum(np.trace(s) for s in smoother_matrices(data, accepted_indices, kernel, lam)))
    total = 0.0
    for indices in accepted_indices:
        s_prime = ridge_smoother(data.X[:, list(indices)], kernel, lam)
        total += float(np.trace(s_prime))
    return total


def gcv_score(y: np.ndarray, fitted: np.ndarray, trace_total: float) -> float:
    """GCV = (1/n) sum [(y_i - yhat_i) / (1 - trace/n)]^2."""
    y = np.asarray(y, dtype=np.float64).ravel()
    fitted = np.asarray(fitted, dtype=np.float64).ravel()
    if y.shape != fitted.shape:
        raise InputError(f"fitted length {fitted.shape[0]} != y length {y.shape[0]}")
    n = y.shape[0]
    if trace_total >= n:
        raise NumericError(f"smoother trace {trace_total} saturates n={n}")
    denom = 1.0 - trace_total / n
    return float(np.mean(((y - fitted) / denom) ** 2))


@dataclass
class GridCell:
    epsilon: float
    cost: float
    variant: str
    trace_total: float
    gcv: float
    n_subspaces: int
    cv_star_final: float
    model: EnsembleModel
    search: SearchResult


@dataclass
class GridSearchResult:
    cells: list[GridCell]
    best_index: int

    @property
    def best(self) -> GridCell:
        return self.cells[self.best_index]

    @property
    def best_model(self) -> EnsembleModel:
        return self.best.model

    def table_rows(self) -> list[dict]:
        return [
            {
                "epsilon": c.epsilon,
                "cost": c.cost,
                "variant": c.variant,
                "trace": c.trace_total,
                "gcv": c.gcv,
                "n_subspaces": c.n_subspaces,
                "cv_star_final": c.cv_star_final,
            }
            for c in self.cells
        ]


def _run_cell(
    data: Dataset,
    epsilon: float,
    cost: float,
    search_cfg: SearchConfig,
    svr_base: SvrConfig,
    variant: GcvVariant,
) -> GridCell:
    svr = SvrConfig(
        epsilon=epsilon,
        cost=cost,
        kernel=svr_base.kernel,
        tolerance=svr_base.tolerance,
        max_passes=svr_base.max_passes,
    )
    result = run_search(data, search_cfg, svr)
    model = finalize(data, result.accepted, svr, search_cfg)
    indices = [sub.indices for sub in result.accepted]
    trace_total = smoother_traces(data, indices, svr.kernel, 1.0 / cost, variant)
    try:
        score = gcv_score(data.y, model.fitted_norm, trace_total)
    except NumericError:
        # saturated smoother (trace >= n): maximally overfit, never the winner
        score = float("inf")
    return GridCell(
        epsilon=epsilon,
        cost=cost,
        variant=variant.mode,
        trace_total=trace_total,
        gcv=score,
        n_subspaces=len(indices),
        cv_star_final=result.cv_star,
        model=model,
        search=result,
    )


def grid_search(
    data: Dataset,
    grid: HyperGrid,
    search_cfg: SearchConfig,
    svr_base: SvrConfig,
    variant: GcvVariant = GcvVariant(),
    threads: int = 1,
) -> GridSearchResult:
    """Evaluate every grid cell with an identical search seed and pick the
    GCV minimizer (ties broken by smaller cost, then smaller epsilon).

    Cells are independent; with threads > 1 they are evaluated in worker
    processes and reassembled in grid order, so results do not depend on the
    worker count.
    """
    cells_spec = grid.cells()
    if threads > 1 and len(cells_spec) > 1:
        from .parallel import run_cells_parallel

        cells = run_cells_parallel(data, cells_spec, search_cfg, svr_base, variant, threads)
    else:
        cells = [
            _run_cell(data, eps, cost, search_cfg, svr_base, variant) for eps, cost in cells_spec
        ]
    best_index = min(
        range(len(cells)), key=lambda i: (cells[i].gcv, cells[i].cost, cells[i].epsilon)
    )
    return GridSearchResult(cells=cells, best_index=best_index)
