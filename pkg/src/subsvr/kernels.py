"""Kernel functions and Gram-matrix construction.

Shared by the SVR solver (dual objective) and the ridge smoothers used for
effective-degrees-of-freedom accounting.  All kernels operate on the
low-dimensional subspace projections, so matrices stay small and dense.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

LINEAR = "linear"
POLYNOMIAL = "polynomial"
RBF = "rbf"

_FAMILIES = (LINEAR, POLYNOMIAL, RBF)


@dataclass(frozen=True)
class KernelSpec:
    """Configuration of one kernel family.

    gamma is the inner-product scale (polynomial), offset and degree complete
    the polynomial form (gamma*<u,v> + offset)**degree, and bandwidth is the
    RBF length scale in exp(-||u-v||^2 / (2*bandwidth^2)).
    """

    family: str = POLYNOMIAL
    gamma: float = 1.0
    offset: float = 0.0
    degree: int = 1
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}; expected one of {_FAMILIES}")
        if not self.gamma > 0:
            raise InputError(f"kernel gamma must be > 0, got {self.gamma}")
        if self.family == POLYNOMIAL and self.degree < 1:
            raise InputError(f"polynomial degree must be >= 1, got {self.degree}")
        if self.family == RBF and not self.bandwidth > 0:
            raise InputError(f"rbf bandwidth must be > 0, got {self.bandwidth}")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "gamma": self.gamma,
            "offset": self.offset,
            "degree": self.degree,
            "bandwidth": self.bandwidth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(
            family=d["family"],
            gamma=float(d["gamma"]),
            offset=float(d["offset"]),
            degree=int(d["degree"]),
            bandwidth=float(d["bandwidth"]),
        )


def default_kernel(subspace_dim: int) -> KernelSpec:
    """Polynomial kernel with gamma = 1/k, offset 1, degree 2.

    Degree 2 is the smallest setting whose submodels can represent the
    pairwise interactions subspace selection is meant to surface; degree 1
    (an exactly linear model class) remains available by configuration.
    """
    if subspace_dim < 1:
        raise InputError(f"subspace_dim must be >= 1, got {subspace_dim}")
    return KernelSpec(family=POLYNOMIAL, gamma=1.0 / subspace_dim, offset=1.0, degree=2)


def _as_2d(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2:
        raise InputError(f"expected a 2-d point array, got ndim={Z.ndim}")
    return Z


def kernel_cross(spec: KernelSpec, A, B) -> np.ndarray:
    """Cross-kernel matrix with entry (i, j) = K(A[i], B[j])."""
    A = _as_2d(A)
    B = _as_2d(B)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"kernel dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.family == LINEAR:
        return A @ B.T
    if spec.family == POLYNOMIAL:
        base = spec.gamma * (A @ B.T) + spec.offset
        if spec.degree == 1:
            return base
        return base ** spec.degree
    # rbf
    a2 = np.sum(A * A, axis=1)[:, None]
    b2 = np.sum(B * B, axis=1)[None, :]
    d2 = np.maximum(a2 + b2 - 2.0 * (A @ B.T), 0.0)
    return np.exp(-d2 / (2.0 * spec.bandwidth**2))


def kernel_eval(spec: KernelSpec, u, v) -> float:
    """Scalar kernel value K(u, v) for two points of equal dimension."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise InputError(f"kernel_eval dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    return float(kernel_cross(spec, u[None, :], v[None, :])[0, 0])


def kernel_matrix(spec: KernelSpec, Z) -> np.ndarray:
    """Symmetric Gram matrix of the rows of Z (n x k) under `spec`."""
    Z = _as_2d(Z)
    if Z.shape[0] < 1:
        raise InputError("kernel_matrix needs at least one row")
    return kernel_cross(spec, Z, Z)
