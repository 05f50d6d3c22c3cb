"""
Reference solver for the unconstrained LASSO

    minimize ||A x - y||_2^2 + lambda ||x||_1.

Cyclic coordinate descent with exact coordinate minimization, cold start at 0,
and a duality-gap certificate. The dual point is the residual r = y - A x
scaled so that ||A^T theta||_inf <= lambda/2, giving

    D(theta) = ||y||^2 - ||y - theta||^2 <= P(x*) <= P(x).

KKT stationarity for this objective reads 2 A^T (A x - y) in -lambda d||x||_1,
so the equicorrelation level is lambda/2.
"""

import logging
import warnings
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np
from numba import njit
from pydantic import BaseModel, ConfigDict, Field, field_serializer

from app.exceptions import DimensionError, DomainError, SolverBudgetError
from app.lasso_core import LassoInstance, SupportSet

logger = logging.getLogger(__name__)

DEFAULT_MAX_SWEEPS = 100_000
# Floor covering cancellation in P - D evaluated in double precision
GAP_ROUNDING_FACTOR = 4.0 * np.finfo(float).eps


class LassoSolution(BaseModel):
    """Minimizer estimate with its certified optimality gap and KKT residual."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x: np.ndarray
    gap_bound: float = Field(..., ge=0, description="Certified bound on objective suboptimality")
    kkt_inf: float = Field(..., ge=0, description="Max KKT violation, see kkt_residuals")
    iterations: int = Field(..., description="Coordinate sweeps performed")
    converged: bool = True
    objective: float = 0.0
    dual_objective: float = 0.0

    @field_serializer("x")
    def _serialize_x(self, value: np.ndarray):
        return value.tolist()


class EquicorrelationSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    indices: SupportSet
    tol: float


@njit(cache=True)
def _soft_threshold(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _cd_sweeps(A, x, r, col_sq, half_lam, coords, n_sweeps):
    """Run up to n_sweeps cyclic passes over `coords`, updating x and r = y - A x in place."""
    m = A.shape[0]
    done = 0
    for _ in range(n_sweeps):
        max_step = 0.0
        for idx in range(coords.shape[0]):
            j = coords[idx]
            if col_sq[j] == 0.0:
                continue
            z = x[j] * col_sq[j]
            for i in range(m):
                z += A[i, j] * r[i]
            new = _soft_threshold(z, half_lam) / col_sq[j]
            step = new - x[j]
            if step != 0.0:
                for i in range(m):
                    r[i] -= A[i, j] * step
                x[j] = new
                if abs(step) > max_step:
                    max_step = abs(step)
        done += 1
        if max_step == 0.0:
            break
    return done


def _check_dims(inst: LassoInstance, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != inst.N:
        raise DimensionError(f"x has length {x.shape[0]} but A has {inst.N} columns")
    return x


def objective(inst: LassoInstance, x) -> float:
    """||A x - y||_2^2 + lambda ||x||_1."""
    x = _check_dims(inst, x)
    residual = inst.A @ x - inst.y
    return float(residual @ residual + inst.lam * np.sum(np.abs(x)))


def duality_gap(inst: LassoInstance, x) -> Tuple[float, float, float]:
    """
    Duality-gap certificate of x in double precision.

    Returns:
        (gap, primal, dual); gap includes a rounding allowance
        GAP_ROUNDING_FACTOR * (||y||^2 + lambda ||x||_1 + 1).
    """
    x = _check_dims(inst, x)
    r = inst.y - inst.A @ x
    corr_max = float(np.max(np.abs(inst.A.T @ r)))
    half_lam = 0.5 * inst.lam
    scale = 1.0 if corr_max <= half_lam else half_lam / corr_max
    theta = scale * r
    l1 = float(np.sum(np.abs(x)))
    y_sq = float(inst.y @ inst.y)
    primal = float(r @ r + inst.lam * l1)
    diff = inst.y - theta
    dual = y_sq - float(diff @ diff)
    gap = max(primal - dual, 0.0) + GAP_ROUNDING_FACTOR * (y_sq + inst.lam * l1 + 1.0)
    return gap, primal, dual


def exact_duality_gap(y_q: Sequence[Fraction], A_q: Sequence[Sequence[Fraction]], lambda_q: Fraction, x) -> Fraction:
    """
    The same certificate in exact rational arithmetic.

    Args:
        y_q: rational right-hand side
        A_q: rational matrix as a sequence of rows
        lambda_q: rational regularization weight
        x: iterate (floats are converted exactly)

    Returns:
        Fraction P(x) - D(theta(x)) for the rational instance
    """
    xq = [Fraction(float(v)) for v in np.asarray(x, dtype=float).reshape(-1)]
    m = len(y_q)
    n = len(xq)
    support = [j for j in range(n) if xq[j] != 0]
    r = [y_q[i] - sum((A_q[i][j] * xq[j] for j in support), Fraction(0)) for i in range(m)]
    corr_max = max(abs(sum((A_q[i][j] * r[i] for i in range(m)), Fraction(0))) for j in range(n))
    half_lam = lambda_q / 2
    scale = Fraction(1) if corr_max <= half_lam else half_lam / corr_max
    l1 = sum((abs(v) for v in xq), Fraction(0))
    primal = sum((ri * ri for ri in r), Fraction(0)) + lambda_q * l1
    y_sq = sum((yi * yi for yi in y_q), Fraction(0))
    diff_sq = sum(((y_q[i] - scale * r[i]) ** 2 for i in range(m)), Fraction(0))
    return primal - (y_sq - diff_sq)


def kkt_residuals(inst: LassoInstance, x) -> Tuple[float, np.ndarray]:
    """
    KKT residuals of x.

    corr_j = A_j^T (A x - y). Optimality means ||corr||_inf <= lambda/2 and
    corr_j = -lambda sgn(x_j)/2 on the support. kkt_inf is the larger of
    max(0, ||corr||_inf - lambda/2) and max_{j in supp} |corr_j + lambda sgn(x_j)/2|.
    """
    x = _check_dims(inst, x)
    corr = inst.A.T @ (inst.A @ x - inst.y)
    half_lam = 0.5 * inst.lam
    off = max(0.0, float(np.max(np.abs(corr))) - half_lam)
    nz = np.flatnonzero(x)
    on = float(np.max(np.abs(corr[nz] + half_lam * np.sign(x[nz])))) if nz.size else 0.0
    return max(off, on), corr


def equicorrelation(inst: LassoInstance, x, tol: float) -> EquicorrelationSet:
    """Indices j with |A_j^T (A x - y)| >= lambda/2 - tol."""
    if tol < 0:
        raise DomainError(f"tol must be nonnegative, got {tol}")
    _, corr = kkt_residuals(inst, x)
    members = np.flatnonzero(np.abs(corr) >= 0.5 * inst.lam - tol)
    return EquicorrelationSet(indices=SupportSet.from_zero_based(members), tol=tol)


def _finish(inst: LassoInstance, x: np.ndarray, iterations: int, converged: bool, gap: float,
            primal: float, dual: float) -> LassoSolution:
    kkt_inf, _ = kkt_residuals(inst, x)
    x = x.copy()
    x.setflags(write=False)
    return LassoSolution(
        x=x,
        gap_bound=gap,
        kkt_inf=kkt_inf,
        iterations=iterations,
        converged=converged,
        objective=primal,
        dual_objective=dual,
    )


def solve(inst: LassoInstance, gap_tol: float, max_sweeps: int = DEFAULT_MAX_SWEEPS,
          check_every: int = 1, raise_on_budget: bool = True) -> LassoSolution:
    """
    Solve the LASSO to a certified duality gap.

    Each round is one full sweep over all coordinates followed by up to
    `check_every` sweeps restricted to the nonzero coordinates. The gap is
    evaluated after every full sweep. Every sweep counts towards `max_sweeps`.

    Args:
        inst: LASSO instance
        gap_tol: target bound on the duality gap
        max_sweeps: sweep budget
        check_every: restricted sweeps between two full sweeps
        raise_on_budget: raise SolverBudgetError when the budget runs out;
            otherwise return the last iterate with converged=False

    Returns:
        LassoSolution with gap_bound <= gap_tol when converged
    """
    if not gap_tol > 0:
        raise DomainError(f"gap_tol must be positive, got {gap_tol}")
    if check_every < 0:
        raise DomainError(f"check_every must be nonnegative, got {check_every}")

    n = inst.N
    x = np.zeros(n)
    if not np.any(inst.A):
        gap, primal, dual = duality_gap(inst, x)
        return _finish(inst, x, 0, True, 0.0, primal, dual)

    A = np.asfortranarray(inst.A, dtype=float)
    col_sq = np.einsum("ij,ij->j", A, A)
    half_lam = 0.5 * inst.lam
    all_coords = np.arange(n, dtype=np.int64)
    iterations = 0
    gap, primal, dual = duality_gap(inst, x)

    while iterations < max_sweeps:
        r = inst.y - A @ x
        iterations += _cd_sweeps(A, x, r, col_sq, half_lam, all_coords, 1)
        gap, primal, dual = duality_gap(inst, x)
        if gap <= gap_tol:
            logger.debug(f"Converged after {iterations} sweeps, gap {gap:.3e}")
            return _finish(inst, x, iterations, True, gap, primal, dual)
        active = np.flatnonzero(x).astype(np.int64)
        budget = min(check_every, max_sweeps - iterations)
        if budget > 0 and active.size > 0:
            iterations += _cd_sweeps(A, x, r, col_sq, half_lam, active, budget)

    message = f"Sweep budget {max_sweeps} exhausted with gap {gap:.3e} > {gap_tol:.3e}"
    if raise_on_budget:
        raise SolverBudgetError(message, iterations=iterations, gap=gap)
    logger.warning(message)
    return _finish(inst, x, iterations, False, gap, primal, dual)


def solve_library(inst: LassoInstance, tol: float = 1e-4, max_iter: int = 1000) -> LassoSolution:
    """
    Solve with scikit-learn's coordinate-descent Lasso.

    scikit-learn minimizes (1/(2m)) ||y - A w||^2 + alpha ||w||_1, which has the
    same minimizers as our objective when alpha = lambda / (2m).
    """
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.linear_model import Lasso

    model = Lasso(alpha=inst.lam / (2.0 * inst.m), fit_intercept=False, tol=tol, max_iter=max_iter)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=ConvergenceWarning)
        model.fit(np.asarray(inst.A), np.asarray(inst.y))
    x = np.asarray(model.coef_, dtype=float).reshape(-1)
    n_iter = int(np.max(model.n_iter_)) if np.ndim(model.n_iter_) else int(model.n_iter_)
    gap, primal, dual = duality_gap(inst, x)
    converged = n_iter < max_iter
    if not converged:
        logger.warning(f"Library solver hit max_iter={max_iter}, gap {gap:.3e}")
    return _finish(inst, x, n_iter, converged, gap, primal, dual)


def solve_with(inst: LassoInstance, backend: str = "reference", gap_tol: float = 1e-12,
               max_sweeps: int = DEFAULT_MAX_SWEEPS, check_every: int = 1,
               raise_on_budget: bool = True, library_tol: Optional[float] = None) -> LassoSolution:
    """Dispatch to the reference solver or the scikit-learn backend."""
    if backend == "reference":
        return solve(inst, gap_tol, max_sweeps=max_sweeps, check_every=check_every,
                     raise_on_budget=raise_on_budget)
    if backend == "library":
        return solve_library(inst, tol=library_tol or 1e-4, max_iter=max_sweeps)
    raise DomainError(f"Unknown solver backend '{backend}'")
