"""
Core domain types for the unconstrained LASSO

    minimize ||A x - y||_2^2 + lambda ||x||_1      (no factor 1/2)

LassoInstance holds (y, A, lambda), SupportSet is the 1-based index set of a
minimizer and NormBundle carries the norms used by the condition bounds.
"""

import logging
from functools import cached_property
from typing import Iterable, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from app.exceptions import DimensionError, DomainError, InvalidInstanceError

logger = logging.getLogger(__name__)

# Dense SVD below this size, power iteration above it
DENSE_NORM_LIMIT = 512
POWER_ITERATION_RTOL = 1e-10
POWER_ITERATION_MAX_ITER = 10_000


class SupportSet(BaseModel):
    """Sorted 1-based index set, possibly empty."""

    model_config = ConfigDict(frozen=True)

    indices: Tuple[int, ...] = Field(default=(), description="Strictly increasing 1-based indices")

    @field_validator("indices", mode="before")
    @classmethod
    def _coerce(cls, value):
        return tuple(int(i) for i in value)

    @field_validator("indices")
    @classmethod
    def _strictly_increasing(cls, value):
        if any(i < 1 for i in value):
            raise ValueError("support indices are 1-based and must be >= 1")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("support indices must be strictly increasing")
        return value

    @classmethod
    def of(cls, *indices: int) -> "SupportSet":
        return cls(indices=sorted(set(indices)))

    @classmethod
    def from_zero_based(cls, indices: Iterable[int]) -> "SupportSet":
        return cls(indices=sorted(int(i) + 1 for i in indices))

    def to_zero_based(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64) - 1

    def complement(self, n: int) -> "SupportSet":
        self.check_range(n)
        members = set(self.indices)
        return SupportSet(indices=[i for i in range(1, n + 1) if i not in members])

    def check_range(self, n: int) -> None:
        if self.indices and self.indices[-1] > n:
            raise DimensionError(f"support index {self.indices[-1]} out of range for N={n}")

    def is_empty(self) -> bool:
        return not self.indices

    def to_list(self) -> List[int]:
        return list(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, index: int) -> bool:
        return index in self.indices

    def __str__(self) -> str:
        return "{" + ",".join(str(i) for i in self.indices) + "}"


class NormBundle(BaseModel):
    """Norms of a pair (y, A) that enter the condition bounds."""

    model_config = ConfigDict(frozen=True)

    max_norm: float = Field(..., description="Entrywise max of |y| and |A|")
    trunc2: float = Field(..., description="max{||A||_2, ||y||_2, 1}")
    tr1star: float = Field(..., description="max{sum |A_ij|, sum |y_i|, 1}")
    spectral_A: float = Field(..., description="Spectral norm of A")
    norm_y: float = Field(..., description="Euclidean norm of y")


class LassoInstance(BaseModel):
    """Input triple (y, A, lambda) of the unconstrained LASSO."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, populate_by_name=True)

    y: np.ndarray
    A: np.ndarray
    lam: float = Field(..., alias="lambda", serialization_alias="lambda")

    @field_validator("y", mode="before")
    @classmethod
    def _as_vector(cls, value):
        arr = np.array(value, dtype=float).reshape(-1)
        arr.setflags(write=False)
        return arr

    @field_validator("A", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        arr = np.array(value, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise DimensionError(f"A must be a matrix, got {arr.ndim} dimensions")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_invariants(self):
        m, n = self.A.shape
        if m < 1 or n < 1:
            raise DimensionError(f"A must have m, N >= 1, got shape {self.A.shape}")
        if self.y.shape[0] != m:
            raise DimensionError(f"y has length {self.y.shape[0]} but A has {m} rows")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidInstanceError(f"lambda must be positive and finite, got {self.lam}")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.A))):
            raise InvalidInstanceError("y and A must have finite entries")
        return self

    @field_serializer("y", "A")
    def _serialize_array(self, value: np.ndarray):
        return value.tolist()

    @classmethod
    def from_lists(cls, y, A, lam: float) -> "LassoInstance":
        return cls(y=y, A=A, lam=lam)

    @property
    def m(self) -> int:
        return int(self.A.shape[0])

    @property
    def N(self) -> int:
        return int(self.A.shape[1])

    @cached_property
    def norms(self) -> NormBundle:
        return compute_norms(self)

    def permute_columns(self, perm) -> "LassoInstance":
        """Instance with columns reordered by the 0-based permutation `perm`."""
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.N)):
            raise DimensionError(f"not a permutation of 0..{self.N - 1}")
        return LassoInstance(y=self.y, A=self.A[:, perm], lam=self.lam)


def spectral_norm(A: np.ndarray) -> float:
    """
    Largest singular value of A.

    Dense SVD for matrices with both sides at most DENSE_NORM_LIMIT, power
    iteration on A^T A otherwise.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    if max(A.shape) <= DENSE_NORM_LIMIT:
        return float(np.linalg.norm(A, 2))

    rng = np.random.default_rng(0)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for iteration in range(POWER_ITERATION_MAX_ITER):
        w = A.T @ (A @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        new_estimate = float(np.sqrt(norm_w))
        if abs(new_estimate - estimate) <= POWER_ITERATION_RTOL * new_estimate:
            return new_estimate
        estimate = new_estimate
    logger.warning(f"Power iteration stopped after {POWER_ITERATION_MAX_ITER} iterations for shape {A.shape}")
    return estimate


def max_col_norm(A: np.ndarray) -> float:
    """Largest Euclidean column norm of A."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(A, axis=0)))


def compute_norms(inst: LassoInstance) -> NormBundle:
    """
    Compute the norms of (y, A).

    Args:
        inst: LASSO instance

    Returns:
        NormBundle with max_norm, trunc2 = max{||A||_2, ||y||_2, 1} and
        tr1star = max{sum |A_ij|, sum |y_i|, 1}
    """
    spectral = spectral_norm(inst.A)
    norm_y = float(np.linalg.norm(inst.y))
    max_norm = float(max(np.max(np.abs(inst.A)), np.max(np.abs(inst.y))))
    tr1star = float(max(np.sum(np.abs(inst.A)), np.sum(np.abs(inst.y)), 1.0))
    return NormBundle(
        max_norm=max_norm,
        trunc2=float(max(spectral, norm_y, 1.0)),
        tr1star=tr1star,
        spectral_A=spectral,
        norm_y=norm_y,
    )


def support_from_threshold(x, tau: float) -> SupportSet:
    """Indices i with |x_i| > tau (strict)."""
    if tau < 0:
        raise DomainError(f"tau must be nonnegative, got {tau}")
    x = np.asarray(x, dtype=float).reshape(-1)
    return SupportSet.from_zero_based(np.flatnonzero(np.abs(x) > tau))


def support_equal(first: SupportSet, second: SupportSet) -> bool:
    return first.indices == second.indices
