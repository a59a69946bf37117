"""Dataset ingestion, z-score normalization, and synthetic data generation.

The synthetic generator exists because recovery tests need a ground truth:
predictors are drawn by Latin hypercube sampling on [0, 1]^p and the response
is a sum of small-subset terms (linear, product, or monomial) plus Gaussian
noise.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

_TERM_KINDS = ("linear", "product", "poly")


@dataclass
class NormalizationStats:
    """Per-column (mean, sample sd) for predictors plus the response pair."""

    x_mean: np.ndarray
    x_sd: np.ndarray
    y_mean: float
    y_sd: float

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_sd": self.x_sd.tolist(),
            "y_mean": self.y_mean,
            "y_sd": self.y_sd,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(
            x_mean=np.asarray(d["x_mean"], dtype=np.float64),
            x_sd=np.asarray(d["x_sd"], dtype=np.float64),
            y_mean=float(d["y_mean"]),
            y_sd=float(d["y_sd"]),
        )

    def transform_x(self, X: np.ndarray) -> np.ndarray:
        sd = np.where(self.x_sd > 0, self.x_sd, 1.0)
        Z = (X - self.x_mean) / sd
        return np.where(self.x_sd > 0, Z, 0.0)

    def denormalize_y(self, y_norm: np.ndarray | float):
        return self.y_mean + self.y_sd * y_norm


@dataclass
class Dataset:
    """An n x p predictor matrix with response vector and column labels."""

    X: np.ndarray
    y: np.ndarray
    labels: list[str]
    normalized: bool = False
    stats: NormalizationStats | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim != 2:
            raise InputError(f"X must be 2-d, got ndim={self.X.ndim}")
        n, p = self.X.shape
        if n < 1 or p < 1:
            raise InputError(f"dataset must have n >= 1 and p >= 1, got {n} x {p}")
        if self.y.shape[0] != n:
            raise InputError(f"response length {self.y.shape[0]} != {n} rows")
        if len(self.labels) != p:
            raise InputError(f"{len(self.labels)} labels for {p} columns")
        if len(set(self.labels)) != p:
            raise InputError("column labels must be distinct")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise InputError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], list(self.labels), self.normalized, self.stats)


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"non-numeric value {text!r} at row {row}, column {col}") from None


def _read_rows(path) -> list[list[str]]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for raw in csv.reader(fh):
            if not raw or all(cell.strip() == "" for cell in raw):
                continue  # tolerate blank (trailing) lines
            if raw[0].lstrip().startswith("#"):
                continue  # tool-emitted comment/banner lines
            rows.append([cell.strip() for cell in raw])
    return rows


def load_csv(path, has_header: bool = True, response_column: str | int = -1) -> Dataset:
    """Load a rectangular numeric CSV into an unnormalized Dataset.

    `response_column` selects the response by header name or 0-based index
    (negative indices count from the right).
    """
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: no data rows")
    if has_header:
        header = rows[0]
        body = rows[1:]
    else:
        header = [f"x{i + 1}" for i in range(len(rows[0]))]
        body = rows
    if not body:
        raise InputError(f"{path}: header only, no data rows")
    width = len(header)
    if width < 2:
        raise InputError(f"{path}: need at least one predictor and one response column")

    if isinstance(response_column, str):
        try:
            response_column = int(response_column)
        except ValueError:
            pass
    if isinstance(response_column, int):
        ridx = response_column if response_column >= 0 else width + response_column
        if not 0 <= ridx < width:
            raise InputError(f"{path}: response column index {response_column} out of range for width {width}")
    else:
        if response_column not in header:
            raise InputError(f"{path}: response column {response_column!r} not found in header")
        ridx = header.index(response_column)

    data = np.empty((len(body), width))
    for i, row in enumerate(body):
        if len(row) != width:
            raise InputError(f"{path}: ragged row {i + (2 if has_header else 1)} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            data[i, j] = _parse_cell(cell, i + (2 if has_header else 1), j + 1)

    keep = [j for j in range(width) if j != ridx]
    labels = [header[j] for j in keep]
    return Dataset(X=data[:, keep], y=data[:, ridx], labels=labels)


def load_feature_csv(path, p: int, has_header: bool = True, response_column: str | int = -1) -> np.ndarray:
    """Load a feature table for prediction; zero rows are allowed.

    Accepts either exactly p columns, or p+1 columns from which the response
    column is dropped (so a training file can be fed back for prediction).
    """
    rows = _read_rows(path)
    if not rows:
        return np.zeros((0, p))
    header = rows[0] if has_header else None
    body = rows[1:] if has_header else rows
    width = len(rows[0])
    if width == p:
        keep = list(range(width))
    elif width == p + 1:
        if isinstance(response_column, str) and header is not None and response_column in header:
            ridx = header.index(response_column)
        else:
            try:
                ridx = int(response_column)
            except (TypeError, ValueError):
                ridx = -1
            ridx = ridx if ridx >= 0 else width + ridx
        keep = [j for j in range(width) if j != ridx]
    else:
        raise InputError(f"{path}: expected p={p} feature columns (or p+1 with a response), got {width}")
    if not body:
        return np.zeros((0, p))
    out = np.empty((len(body), p))
    for i, row in enumerate(body):
        if len(row) != width:
            raise InputError(f"{path}: ragged row {i + (2 if has_header else 1)} has {len(row)} cells, expected {width}")
        for j, col in enumerate(keep):
            out[i, j] = _parse_cell(row[col], i + (2 if has_header else 1), col + 1)
    return out


def write_csv(path, X: np.ndarray, y: np.ndarray | None, labels: list[str], header_comment: str | None = None):
    """Write a dataset (or feature table when y is None) with full-precision floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(labels + (["y"] if y is not None else []))
        for i in range(X.shape[0]):
            row = [repr(float(v)) for v in X[i]]
            if y is not None:
                row.append(repr(float(y[i])))
            writer.writerow(row)


def _column_stats(v: np.ndarray) -> tuple[float, float]:
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if v.shape[0] > 1 else 0.0
    return mean, sd


def normalize(data: Dataset) -> Dataset:
    """Z-score every predictor column and the response (sample sd).

    Constant columns are centered and left at zero with a warning; the stats
    are stored so predictions can be mapped back to original units.
    """
    if data.normalized:
        raise InputError("dataset is already normalized")
    x_mean = np.empty(data.p)
    x_sd = np.empty(data.p)
    Xn = np.empty_like(data.X)
    for j in range(data.p):
        m, s = _column_stats(data.X[:, j])
        x_mean[j] = m
        x_sd[j] = s
        if s > 0:
            Xn[:, j] = (data.X[:, j] - m) / s
        else:
            warnings.warn(f"predictor column {data.labels[j]!r} is constant; normalized to zero")
            Xn[:, j] = 0.0
    y_mean, y_sd = _column_stats(data.y)
    if y_sd > 0:
        yn = (data.y - y_mean) / y_sd
    else:
        warnings.warn("response is constant; normalized to zero")
        yn = np.zeros_like(data.y)
    stats = NormalizationStats(x_mean=x_mean, x_sd=x_sd, y_mean=y_mean, y_sd=y_sd)
    return Dataset(X=Xn, y=yn, labels=list(data.labels), normalized=True, stats=stats)


@dataclass(frozen=True)
class SynthTerm:
    """One additive ground-truth term over a small index set.

    linear: coef * x_i; product: coef * prod(x_i); poly: coef * x_i**degree.
    """

    kind: str
    indices: tuple[int, ...]
    coef: float = 1.0
    degree: int = 2

    def __post_init__(self):
        if self.kind not in _TERM_KINDS:
            raise InputError(f"unknown term kind {self.kind!r}; expected one of {_TERM_KINDS}")
        if self.kind in ("linear", "poly") and len(self.indices) != 1:
            raise InputError(f"{self.kind} terms take exactly one index, got {self.indices}")
        if not self.indices:
            raise InputError("term needs at least one index")

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return self.coef * X[:, self.indices[0]]
        if self.kind == "product":
            return self.coef * np.prod(X[:, list(self.indices)], axis=1)
        return self.coef * X[:, self.indices[0]] ** self.degree

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "indices": list(self.indices), "coef": self.coef}
        if self.kind == "poly":
            d["degree"] = self.degree
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthTerm":
        return cls(
            kind=d["kind"],
            indices=tuple(int(i) for i in d["indices"]),
            coef=float(d.get("coef", 1.0)),
            degree=int(d.get("degree", 2)),
        )


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic dataset: size, ground-truth terms, noise, seed."""

    n: int
    p: int
    terms: tuple[SynthTerm, ...]
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise InputError(f"synthetic spec needs n >= 1 and p >= 1, got n={self.n}, p={self.p}")
        if self.noise_sd < 0:
            raise InputError(f"noise_sd must be >= 0, got {self.noise_sd}")
        for t in self.terms:
            if any(not 0 <= i < self.p for i in t.indices):
                raise InputError(f"term indices {t.indices} out of range for p={self.p}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "terms": [t.to_dict() for t in self.terms],
            "noise_sd": self.noise_sd,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(
            n=int(d["n"]),
            p=int(d["p"]),
            terms=tuple(SynthTerm.from_dict(t) for t in d["terms"]),
            noise_sd=float(d.get("noise_sd", 0.0)),
            seed=int(d.get("seed", 0)),
        )


def latin_hypercube(rng: np.random.Generator, n: int, p: int) -> np.ndarray:
    """n x p design on [0, 1]^p with exactly one point per 1/n stratum per column."""
    X = np.empty((n, p))
    for j in range(p):
        cells = rng.permutation(n)
        X[:, j] = (cells + rng.random(n)) / n
    return X


def generate_synthetic(spec: SynthSpec) -> tuple[Dataset, list[set[int]]]:
    """Build (dataset, ground-truth index sets) deterministically from the seed."""
    rng = np.random.default_rng(spec.seed)
    X = latin_hypercube(rng, spec.n, spec.p)
    y = np.zeros(spec.n)
    for term in spec.terms:
        y = y + term.evaluate(X)
    if spec.noise_sd > 0:
        y = y + rng.normal(0.0, spec.noise_sd, size=spec.n)
    labels = [f"x{j + 1}" for j in range(spec.p)]
    truth = [set(term.indices) for term in spec.terms]
    return Dataset(X=X, y=y, labels=labels), truth
