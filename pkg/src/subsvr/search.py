"""Randomized subspace generation, cross-validated scoring, and the
accept/reject search loop.

The search draws k-variable subsets uniformly, fits one submodel per training
fold against the current fold residuals, and keeps the subset when the
cross-validated RMSE improves by more than the selection threshold.  The
running best score CV* only ever moves on acceptance, so improvement is
always measured against the model as accepted so far.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import InputError, NumericError
from .svr import SvrConfig, SvrModel, svr_fit, svr_predict

ACCEPTED = "accepted"
REJECTED = "rejected"
TERMINATED = "terminated"


@dataclass(frozen=True)
class Subspace:
    """k distinct predictor column indices, in draw order."""

    indices: tuple[int, ...]
    iteration_drawn: int = 0


@dataclass(frozen=True)
class SearchConfig:
    """Search settings.

    selection_threshold (eta) and termination_threshold (tau) are fractions;
    a draw improving CV* by more than eta is accepted.  The search stops once
    `patience` draws since the last acceptance came in below tau, so tau
    keeps its role as the negligible-progress signal without making
    termination hinge on one lucky draw.  patience=1 is the literal
    stop-on-first-sub-tau rule.
    """

    subspace_dim: int = 3
    selection_threshold: float = 0.01
    termination_threshold: float = 0.00001
    max_iterations: int = 10000
    folds: int = 5
    seed: int = 0
    patience: int = 45

    def __post_init__(self):
        if self.subspace_dim < 1:
            raise InputError(f"subspace_dim must be >= 1, got {self.subspace_dim}")
        if not 0 < self.termination_threshold < self.selection_threshold:
            raise InputError(
                "thresholds must satisfy 0 < tau < eta, got "
                f"tau={self.termination_threshold}, eta={self.selection_threshold}"
            )
        if self.max_iterations < 1:
            raise InputError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.folds < 2:
            raise InputError(f"folds must be >= 2, got {self.folds}")
        if self.patience < 1:
            raise InputError(f"patience must be >= 1, got {self.patience}")

    def to_dict(self) -> dict:
        return {
            "subspace_dim": self.subspace_dim,
            "selection_threshold": self.selection_threshold,
            "termination_threshold": self.termination_threshold,
            "max_iterations": self.max_iterations,
            "folds": self.folds,
            "seed": self.seed,
            "patience": self.patience,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        return cls(
            subspace_dim=int(d["subspace_dim"]),
            selection_threshold=float(d["selection_threshold"]),
            termination_threshold=float(d["termination_threshold"]),
            max_iterations=int(d["max_iterations"]),
            folds=int(d["folds"]),
            seed=int(d["seed"]),
            patience=int(d.get("patience", 45)),
        )


@dataclass(frozen=True)
class FoldSplit:
    """Fold id per row; folds are nonempty and sizes differ by at most one."""

    assignments: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignments)
        counts = np.bincount(a)
        if (counts == 0).any():
            raise InputError("every fold must be nonempty")
        if counts.max() - counts.min() > 1:
            raise InputError("fold sizes may differ by at most one")

    @property
    def n_folds(self) -> int:
        return int(self.assignments.max()) + 1

    def fold_rows(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(training rows, validation rows) for one fold."""
        val = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, val


def make_fold_split(n: int, folds: int, rng: np.random.Generator) -> FoldSplit:
    """Assign rows to folds by seeded shuffle then round-robin."""
    if n < folds:
        raise InputError(f"cannot split {n} rows into {folds} folds")
    assignments = np.empty(n, dtype=np.int64)
    perm = rng.permutation(n)
    for pos, row in enumerate(perm):
        assignments[row] = pos % folds
    return FoldSplit(assignments=assignments)


@dataclass
class TraceRecord:
    iteration: int
    indices: tuple[int, ...]
    cv: float
    delta_e: float
    decision: str


@dataclass
class SearchTrace:
    """Per-iteration audit log plus the CV* value after each iteration."""

    records: list[TraceRecord] = field(default_factory=list)
    best_cv_history: list[float] = field(default_factory=list)
    cv0: float = float("nan")
    stop_reason: str = ""


@dataclass
class AcceptedSubspace:
    """An accepted subspace with the per-fold submodels it was scored with."""

    indices: tuple[int, ...]
    iteration: int
    fold_models: list[SvrModel]


@dataclass
class SearchResult:
    accepted: list[AcceptedSubspace]
    trace: SearchTrace

    @property
    def cv_star(self) -> float:
        return self.trace.best_cv_history[-1] if self.trace.best_cv_history else self.trace.cv0


@dataclass
class FoldState:
    """Running residuals per fold: training-row targets for the next fit and
    validation-row residuals the candidate prediction is subtracted from."""

    train_residuals: list[np.ndarray]
    val_residuals: list[np.ndarray]


def draw_subspace(rng: np.random.Generator, p: int, k: int, iteration: int = 0) -> Subspace:
    """Uniformly sample k distinct column indices out of p, without replacement."""
    if not 1 <= k <= p:
        raise InputError(f"cannot draw {k} distinct indices out of {p}")
    idx = rng.choice(p, size=k, replace=False)
    return Subspace(indices=tuple(int(i) for i in idx), iteration_drawn=iteration)


def constant_model_cv(y: np.ndarray, split: FoldSplit) -> tuple[float, list[float]]:
    """CV score of the constant model: per-fold training means predicting the
    corresponding validation folds.  Returns (CV0, per-fold training means)."""
    rmses = []
    means = []
    for q in range(split.n_folds):
        train, val = split.fold_rows(q)
        if train.shape[0] < 2:
            raise InputError(f"fold {q} leaves fewer than 2 training rows")
        mean_q = float(y[train].mean())
        means.append(mean_q)
        rmses.append(float(np.sqrt(np.mean((y[val] - mean_q) ** 2))))
    return float(np.mean(rmses)), means


def delta_e(cv_star: float, cv_t: float) -> float:
    """Fractional error reduction (CV* - CV_t) / CV* of a candidate."""
    if not cv_star > 0:
        raise NumericError(f"delta_e undefined for CV* = {cv_star} (degenerate perfect fit)")
    return (cv_star - cv_t) / cv_star


def _evaluate_candidate(
    indices: tuple[int, ...],
    state: FoldState,
    data: Dataset,
    split: FoldSplit,
    svr: SvrConfig,
    fold_rows: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> tuple[float, list[SvrModel], list[np.ndarray], list[np.ndarray]]:
    """Fit the candidate per fold against current residuals and score it.

    Returns (CV_t, fold models, training predictions, validation predictions).
    """
    Z = data.X[:, list(indices)]
    if fold_rows is None:
        fold_rows = [split.fold_rows(q) for q in range(split.n_folds)]
    models = []
    train_preds = []
    val_preds = []
    rmses = np.empty(split.n_folds)
    for q, (train, val) in enumerate(fold_rows):
        if train.shape[0] < 2:
            raise InputError(f"fold {q} leaves fewer than 2 training rows")
        model = svr_fit(Z[train], state.train_residuals[q], svr)
        pred_val = svr_predict(model, Z[val])
        models.append(model)
        train_preds.append(model.train_fitted)
        val_preds.append(pred_val)
        rmses[q] = np.sqrt(np.mean((state.val_residuals[q] - pred_val) ** 2))
    return float(rmses.mean()), models, train_preds, val_preds


def cv_score(
    candidate: Subspace,
    state: FoldState,
    data: Dataset,
    split: FoldSplit,
    svr: SvrConfig,
) -> float:
    """Cross-validated RMSE of the ensemble extended by `candidate`."""
    return _evaluate_candidate(candidate.indices, state, data, split, svr)[0]


def initial_fold_state(y: np.ndarray, split: FoldSplit, fold_means: list[float]) -> FoldState:
    train_res = []
    val_res = []
    for q in range(split.n_folds):
        train, val = split.fold_rows(q)
        train_res.append(y[train] - fold_means[q])
        val_res.append(y[val] - fold_means[q])
    return FoldState(train_residuals=train_res, val_residuals=val_res)


def run_search(data: Dataset, config: SearchConfig, svr: SvrConfig) -> SearchResult:
    """Randomized subspace search over a normalized learning dataset.

    Implements draw / 5-fold score / three-way branch: accept when the error
    reduction exceeds eta, stop after `patience` consecutive draws below tau,
    otherwise keep drawing up to max_iterations.  A degenerate CV* of zero
    (perfectly fit response) stops the search since no further reduction is
    measurable.
    """
    if not data.normalized:
        raise InputError("run_search expects a normalized dataset")
    if data.n < config.folds:
        raise InputError(f"need at least {config.folds} rows, got {data.n}")
    if config.subspace_dim > data.p:
        raise InputError(f"subspace_dim {config.subspace_dim} exceeds p={data.p}")

    root = np.random.SeedSequence(config.seed)
    split_seq, draw_seq = root.spawn(2)
    split = make_fold_split(data.n, config.folds, np.random.default_rng(split_seq))
    draw_rng = np.random.default_rng(draw_seq)

    cv0, fold_means = constant_model_cv(data.y, split)
    state = initial_fold_state(data.y, split, fold_means)

    trace = SearchTrace(cv0=cv0)
    accepted: list[AcceptedSubspace] = []
    cv_star = cv0
    below_tau_count = 0  # sub-tau draws since the last acceptance
    trace.stop_reason = "max_iterations"

    if cv_star <= 0.0:
        trace.stop_reason = "perfect_fit"
        return SearchResult(accepted=accepted, trace=trace)

    fold_rows = [split.fold_rows(q) for q in range(split.n_folds)]
    for t in range(1, config.max_iterations + 1):
        sub = draw_subspace(draw_rng, data.p, config.subspace_dim, iteration=t)
        cv_t, models, train_preds, val_preds = _evaluate_candidate(
            sub.indices, state, data, split, svr, fold_rows
        )
        de = delta_e(cv_star, cv_t)

        if de > config.selection_threshold:
            decision = ACCEPTED
            below_tau_count = 0
            cv_star = cv_t
            accepted.append(AcceptedSubspace(indices=sub.indices, iteration=t, fold_models=models))
            for q in range(split.n_folds):
                state.train_residuals[q] = state.train_residuals[q] - train_preds[q]
                state.val_residuals[q] = state.val_residuals[q] - val_preds[q]
        elif de < config.termination_threshold:
            below_tau_count += 1
            decision = TERMINATED if below_tau_count >= config.patience else REJECTED
        else:
            decision = REJECTED

        trace.records.append(
            TraceRecord(iteration=t, indices=sub.indices, cv=cv_t, delta_e=de, decision=decision)
        )
        trace.best_cv_history.append(cv_star)

        if decision == TERMINATED:
            trace.stop_reason = "below_tau"
            break
        if cv_star <= 0.0:
            trace.stop_reason = "perfect_fit"
            break

    return SearchResult(accepted=accepted, trace=trace)


def recompute_fold_residuals(
    data: Dataset, split: FoldSplit, fold_means: list[float], accepted: list[AcceptedSubspace]
) -> FoldState:
    """Rebuild the per-fold residual state from scratch (consistency checks)."""
    state = initial_fold_state(data.y, split, fold_means)
    for sub in accepted:
        Z = data.X[:, list(sub.indices)]
        for q in range(split.n_folds):
            train, val = split.fold_rows(q)
            model = sub.fold_models[q]
            state.train_residuals[q] = state.train_residuals[q] - svr_predict(model, Z[train])
            state.val_residuals[q] = state.val_residuals[q] - svr_predict(model, Z[val])
    return state
