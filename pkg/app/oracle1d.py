"""
Exact ground truth for single-row instances (m = 1).

With a unique largest |a_i|, attained at i*, the LASSO solution is supported on
{i*} when |a_{i*} y| > lambda/2 and is 0 otherwise. From this rule the stability
support follows in closed form:

* singleton support: stsp = min{delta/2, eps_Z}, where delta is the gap between
  the two largest |a_i| and eps_Z solves (||a||_inf - e)(|y| - e) = lambda/2;
* empty support: stsp solves (||a||_inf + e)(|y| + e) = lambda/2.
"""

import itertools
import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator
from scipy.optimize import bisect

from app.exceptions import DimensionError, DomainError, InvalidInstanceError, TieError
from app.lasso_core import LassoInstance, SupportSet

logger = logging.getLogger(__name__)

BISECT_XTOL = 1e-14


class Instance1D(BaseModel):
    """Single-row instance: scalar y, row a, weight lambda."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, populate_by_name=True)

    y: float
    a: np.ndarray
    lam: float = Field(..., alias="lambda", serialization_alias="lambda")

    @field_validator("a", mode="before")
    @classmethod
    def _as_row(cls, value):
        arr = np.array(value, dtype=float).reshape(-1)
        if arr.size < 1:
            raise DimensionError("a must have at least one entry")
        if not np.all(np.isfinite(arr)):
            raise InvalidInstanceError("a must have finite entries")
        arr.setflags(write=False)
        return arr

    @field_validator("lam")
    @classmethod
    def _positive(cls, value):
        if not (math.isfinite(value) and value > 0):
            raise InvalidInstanceError(f"lambda must be positive and finite, got {value}")
        return value

    @field_serializer("a")
    def _serialize_a(self, value: np.ndarray):
        return value.tolist()

    @property
    def N(self) -> int:
        return int(self.a.shape[0])

    def to_instance(self) -> LassoInstance:
        return LassoInstance(y=[self.y], A=self.a.reshape(1, -1), lam=self.lam)

    @classmethod
    def from_instance(cls, inst: LassoInstance) -> "Instance1D":
        if inst.m != 1:
            raise DimensionError(f"expected a single-row instance, got m={inst.m}")
        return cls(y=float(inst.y[0]), a=inst.A[0], lam=inst.lam)


class GapStat(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta: float = Field(..., ge=0)
    argmax_index: int = Field(..., description="1-based index of the largest |a_i|")


def _unique_argmax(a: np.ndarray) -> int:
    magnitudes = np.abs(a)
    top = int(np.argmax(magnitudes))
    if np.count_nonzero(magnitudes == magnitudes[top]) > 1:
        raise TieError(f"max |a_i| = {magnitudes[top]} is attained more than once")
    return top


def support_1d(inst: Instance1D) -> SupportSet:
    """{i*} if |a_{i*} y| > lambda/2, else the empty set."""
    top = _unique_argmax(inst.a)
    if abs(inst.a[top] * inst.y) > 0.5 * inst.lam:
        return SupportSet.from_zero_based([top])
    return SupportSet()


def solution_1d(inst: Instance1D) -> np.ndarray:
    """Closed-form minimizer: x_{i*} = sgn(a_{i*} y)(|a_{i*} y| - lambda/2)/a_{i*}^2, zero elsewhere."""
    top = _unique_argmax(inst.a)
    x = np.zeros(inst.N)
    corr = inst.a[top] * inst.y
    if abs(corr) > 0.5 * inst.lam:
        x[top] = math.copysign(abs(corr) - 0.5 * inst.lam, corr) / inst.a[top] ** 2
    return x


def delta_gap(a) -> GapStat:
    """Gap between the largest and second largest |a_i|."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size < 2:
        raise DimensionError("delta needs at least two entries")
    magnitudes = np.abs(a)
    top = int(np.argmax(magnitudes))
    second = float(np.max(np.delete(magnitudes, top)))
    return GapStat(delta=float(magnitudes[top] - second), argmax_index=top + 1)


def z_event(inst: Instance1D, eps: float) -> bool:
    """True iff no eps-perturbation admits 0 as a solution: max(||a||-eps,0) max(|y|-eps,0) > lambda/2."""
    if eps < 0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    a_max = float(np.max(np.abs(inst.a)))
    return max(a_max - eps, 0.0) * max(abs(inst.y) - eps, 0.0) > 0.5 * inst.lam


def z_epsilon(inst: Instance1D) -> float:
    """sup{eps : z_event(eps)}, the distance to the zero-solution boundary; 0 when z_event(0) fails."""
    a_max = float(np.max(np.abs(inst.a)))
    y_abs = abs(inst.y)
    half_lam = 0.5 * inst.lam
    if a_max * y_abs <= half_lam:
        return 0.0
    return float(bisect(lambda e: (a_max - e) * (y_abs - e) - half_lam, 0.0, min(a_max, y_abs), xtol=BISECT_XTOL))


def _zero_regime_radius(inst: Instance1D) -> float:
    a_max = float(np.max(np.abs(inst.a)))
    y_abs = abs(inst.y)
    half_lam = 0.5 * inst.lam
    if a_max * y_abs >= half_lam:
        return 0.0
    upper = math.sqrt(half_lam)
    return float(bisect(lambda e: (a_max + e) * (y_abs + e) - half_lam, 0.0, upper, xtol=BISECT_XTOL))


def stsp_1d(inst: Instance1D) -> float:
    """
    Exact stability support of a single-row instance.

    Returns 0 when the solution is a singleton and the largest |a_i| is tied.
    With an empty solution ties do not matter and the zero-regime radius is
    returned.
    """
    a_max = float(np.max(np.abs(inst.a)))
    if a_max * abs(inst.y) <= 0.5 * inst.lam:
        return _zero_regime_radius(inst)
    try:
        _unique_argmax(inst.a)
    except TieError:
        return 0.0
    eps_z = z_epsilon(inst)
    if inst.N == 1:
        return eps_z
    return min(0.5 * delta_gap(inst.a).delta, eps_z)


def condition_1d(inst: Instance1D) -> float:
    """1/stsp_1d, infinite when stsp_1d = 0."""
    stsp = stsp_1d(inst)
    return 1.0 / stsp if stsp > 0 else math.inf


def directed_support_change(inst: Instance1D, radius: float) -> Optional[Instance1D]:
    """
    Explicit perturbation of max-norm `radius` that changes the support.

    Singleton regime: beyond eps_Z shrink |y| and every |a_i| by radius, which
    makes 0 a solution; beyond delta/2 shrink the leading entry and grow the
    runner-up, which hands the support to the runner-up. Empty regime: grow |y|
    and the leading |a_i|. Returns None when radius does not exceed stsp_1d.
    """
    if radius <= stsp_1d(inst):
        return None
    a = np.array(inst.a, dtype=float)
    a_max = float(np.max(np.abs(a)))
    sign_y = 1.0 if inst.y >= 0 else -1.0

    if a_max * abs(inst.y) <= 0.5 * inst.lam:
        top = int(np.argmax(np.abs(a)))
        sign_a = 1.0 if a[top] >= 0 else -1.0
        a[top] = sign_a * (abs(a[top]) + radius)
        return Instance1D(y=sign_y * (abs(inst.y) + radius), a=a, lam=inst.lam)

    if radius > z_epsilon(inst):
        shrunk = np.sign(a) * np.maximum(np.abs(a) - radius, 0.0)
        return Instance1D(y=sign_y * max(abs(inst.y) - radius, 0.0), a=shrunk, lam=inst.lam)

    order = np.argsort(-np.abs(a), kind="stable")
    top, runner_up = int(order[0]), int(order[1])
    a[top] = np.sign(a[top]) * (abs(a[top]) - radius)
    sign_r = 1.0 if a[runner_up] >= 0 else -1.0
    a[runner_up] = sign_r * (abs(a[runner_up]) + radius)
    return Instance1D(y=inst.y, a=a, lam=inst.lam)


def _labels(y: np.ndarray, a: np.ndarray, half_lam: float) -> np.ndarray:
    """Support label per row: argmax index, -1 for the empty support, -2 for a tie."""
    magnitudes = np.abs(a)
    top = np.argmax(magnitudes, axis=1)
    top_vals = magnitudes[np.arange(a.shape[0]), top]
    labels = np.where(np.abs(top_vals * y) > half_lam, top, -1)
    tied = np.count_nonzero(magnitudes == top_vals[:, None], axis=1) > 1
    return np.where(tied & (labels >= 0), -2, labels)


def brute_force_stsp_1d(inst: Instance1D, n_directions: int = 10_000, seed: int = 0,
                        grid_points: int = 64, bisect_steps: int = 60) -> float:
    """
    Search for the support-change radius along many directions.

    Directions are normalized to unit max-norm over (y, a). All directions in
    {-1, 0, 1}^(N+1) are included when they fit in `n_directions`; the rest are
    uniform random. Along each ray the first change is bracketed on a grid and
    refined by bisection. The minimum over rays is returned.
    """
    n = inst.N
    rng = np.random.default_rng(seed)
    directions = []
    if 3 ** (n + 1) - 1 <= n_directions:
        directions.extend(d for d in itertools.product((-1.0, 0.0, 1.0), repeat=n + 1) if any(d))
    n_random = max(n_directions - len(directions), 0)
    random_dirs = rng.uniform(-1.0, 1.0, size=(n_random, n + 1))
    directions = np.vstack([np.array(directions).reshape(-1, n + 1), random_dirs])
    directions /= np.max(np.abs(directions), axis=1, keepdims=True)

    half_lam = 0.5 * inst.lam
    base_y, base_a = float(inst.y), np.asarray(inst.a, dtype=float)
    start = _labels(np.array([base_y]), base_a[None, :], half_lam)[0]
    t_max = max(abs(base_y), float(np.max(np.abs(base_a)))) + math.sqrt(half_lam)

    def labels_at(t: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        y = base_y + t * dirs[:, 0]
        a = base_a[None, :] + t[:, None] * dirs[:, 1:]
        return _labels(y, a, half_lam)

    lower = np.zeros(len(directions))
    upper = np.full(len(directions), np.inf)
    for t in np.linspace(0.0, t_max, grid_points + 1)[1:]:
        pending = np.isinf(upper)
        if not np.any(pending):
            break
        changed = labels_at(np.full(pending.sum(), t), directions[pending]) != start
        idx = np.flatnonzero(pending)
        upper[idx[changed]] = t
        lower[idx[~changed]] = t

    found = np.isfinite(upper)
    if not np.any(found):
        return math.inf
    lo, hi, dirs = lower[found], upper[found], directions[found]
    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        changed = labels_at(mid, dirs) != start
        hi = np.where(changed, mid, hi)
        lo = np.where(changed, lo, mid)
    return float(np.min(hi))
