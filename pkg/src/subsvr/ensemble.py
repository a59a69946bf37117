"""Full additive model: sequential refit of the accepted subspaces on the
whole learning set, prediction in original units, and model-file round trip.

Submodels are refit forward-stagewise (each one against the residual of the
ones before it, never revisited), so subspace order is part of the model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset, NormalizationStats
from .errors import InputError
from .kernels import KernelSpec
from .search import AcceptedSubspace, SearchConfig
from .svr import SvrConfig, SvrModel, svr_fit, svr_predict

MODEL_FILE_VERSION = 1


@dataclass
class FittedSubspace:
    indices: tuple[int, ...]
    model: SvrModel


@dataclass
class EnsembleModel:
    """Accepted subspaces with their full-data fits plus everything needed to
    map raw inputs to original-unit predictions."""

    subspaces: list[FittedSubspace]
    baseline_norm: float
    normalization: NormalizationStats
    labels: list[str]
    p: int
    search_config: SearchConfig
    svr_config: SvrConfig
    fitted_norm: np.ndarray | None = None  # training fitted values, not serialized

    @property
    def baseline(self) -> float:
        """Constant term in original units (the learning-set response mean)."""
        return float(self.normalization.denormalize_y(self.baseline_norm))

    @property
    def seed(self) -> int:
        return self.search_config.seed

    def _check_rows(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.p:
            raise InputError(f"expected p={self.p} columns, got {X.shape[1]}")
        if X.size and not np.isfinite(X).all():
            raise InputError("prediction input contains non-finite values")
        return X

    def _component_matrix(self, X_raw) -> np.ndarray:
        """Per-subspace contributions in original units, shape (m, J)."""
        X = self._check_rows(X_raw)
        Z = self.normalization.transform_x(X)
        out = np.empty((X.shape[0], len(self.subspaces)))
        for j, sub in enumerate(self.subspaces):
            out[:, j] = self.normalization.y_sd * svr_predict(sub.model, Z[:, list(sub.indices)])
        return out

    def predict(self, X_raw) -> np.ndarray:
        """Original-unit predictions for raw (unnormalized) input rows."""
        X = self._check_rows(X_raw)
        Z = self.normalization.transform_x(X)
        acc = np.full(X.shape[0], self.baseline_norm)
        for sub in self.subspaces:
            acc = acc + svr_predict(sub.model, Z[:, list(sub.indices)])
        return self.normalization.denormalize_y(acc)

    def decompose(self, x_raw) -> list[tuple[tuple[int, ...], float]]:
        """Per-subspace contributions for one row; they sum to predict - baseline."""
        contribs = self._component_matrix(np.asarray(x_raw, dtype=np.float64)[None, :])[0]
        return [(sub.indices, float(c)) for sub, c in zip(self.subspaces, contribs)]


def finalize(data: Dataset, accepted: list[AcceptedSubspace | FittedSubspace],
             svr: SvrConfig, search_config: SearchConfig) -> EnsembleModel:
    """Refit the accepted subspaces, in order, on the full learning dataset."""
    if not data.normalized or data.stats is None:
        raise InputError("finalize expects a normalized dataset")
    baseline_norm = float(data.y.mean())
    residual = data.y - baseline_norm
    fitted = []
    for sub in accepted:
        Z = data.X[:, list(sub.indices)]
        model = svr_fit(Z, residual, svr)
        residual = residual - svr_predict(model, Z)
        fitted.append(FittedSubspace(indices=tuple(sub.indices), model=model))
    return EnsembleModel(
        subspaces=fitted,
        baseline_norm=baseline_norm,
        normalization=data.stats,
        labels=list(data.labels),
        p=data.p,
        search_config=search_config,
        svr_config=svr,
        fitted_norm=data.y - residual,
    )


def model_to_dict(model: EnsembleModel) -> dict:
    return {
        "version": MODEL_FILE_VERSION,
        "p": model.p,
        "baseline": model.baseline,
        "baseline_normalized": model.baseline_norm,
        "normalization": model.normalization.to_dict(),
        "labels": list(model.labels),
        "subspaces": [
            {
                "indices": list(sub.indices),
                "alphas": sub.model.alphas.tolist(),
                "points": sub.model.points.tolist(),
                "intercept": sub.model.intercept,
            }
            for sub in model.subspaces
        ],
        "svr_config": model.svr_config.to_dict(),
        "search_config": model.search_config.to_dict(),
        "seed": model.seed,
    }


def model_from_dict(d: dict) -> EnsembleModel:
    if d.get("version") != MODEL_FILE_VERSION:
        raise InputError(f"unsupported model file version {d.get('version')!r}")
    svr_config = SvrConfig.from_dict(d["svr_config"])
    kernel = svr_config.kernel
    subspaces = []
    for sub in d["subspaces"]:
        points = np.asarray(sub["points"], dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(len(sub["alphas"]), -1)
        subspaces.append(
            FittedSubspace(
                indices=tuple(int(i) for i in sub["indices"]),
                model=SvrModel(
                    alphas=np.asarray(sub["alphas"], dtype=np.float64),
                    points=points,
                    intercept=float(sub["intercept"]),
                    kernel=kernel,
                    training_dimension=points.shape[1] if points.size else len(sub["indices"]),
                ),
            )
        )
    return EnsembleModel(
        subspaces=subspaces,
        baseline_norm=float(d["baseline_normalized"]),
        normalization=NormalizationStats.from_dict(d["normalization"]),
        labels=list(d["labels"]),
        p=int(d["p"]),
        search_config=SearchConfig.from_dict(d["search_config"]),
        svr_config=svr_config,
    )


def save_model(model: EnsembleModel, path, header_comment: str | None = None):
    """Write the model as commented JSON; floats round-trip bit-for-bit."""
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        json.dump(model_to_dict(model), fh, indent=1, allow_nan=False)
        fh.write("\n")


def load_model(path) -> EnsembleModel:
    with open(path, "r", encoding="utf-8") as fh:
        text = "".join(line for line in fh if not line.lstrip().startswith("#"))
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not a valid model file: {exc}") from exc
    return model_from_dict(payload)
