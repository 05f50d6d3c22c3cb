"""
Condition estimates for the LASSO support.

sigma1 is the slack of the off-support KKT bound below lambda/2, sigma2 the
smallest eigenvalue of A_S^T A_S and sigma3 the smallest nonzero magnitude of
the minimizer. With sigma = min{sigma1, sigma2^2, sigma3} and
alpha = max{||A||_2, ||y||_2, 1} the stability support satisfies

    stsp(y, A) >= (mN)^(-1/2) min{sigma^2 / q(alpha, sigma), sqrt(sigma)/(6 alpha), alpha}

with q(nu, xi) = 96 nu^5 + 12 nu^3 (1 + lambda sqrt(N)) sqrt(xi) + xi (2 nu^3/lambda + 3 nu).
The reciprocal of the bound is an upper bound on the condition number.
"""

import logging
import math
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import svdvals

from app.exceptions import DomainError, SolverBudgetError, UncertainSupportError
from app.lasso_core import LassoInstance, SupportSet, max_col_norm, support_from_threshold
from app.solver import LassoSolution, solve

logger = logging.getLogger(__name__)

INF = math.inf
# Error transfer constant in eps_x = c sqrt(gap) / sigma_min(A_T)
MARGIN_CONSTANT = 2.0
SINGULAR_RTOL_FACTOR = 4.0
SINGLE_MINIMIZER_NOTE = (
    "numerical sigma-certificate evaluated at one minimizer; "
    "sigma values are upper bounds when the minimizer is not unique"
)


class SigmaCertificate(BaseModel):
    """Numerical sigma-certificate for one instance, with provenance."""

    model_config = ConfigDict(frozen=True)

    sigma1: float
    sigma2: float
    sigma3: float
    sigma: float = Field(..., description="min{sigma1, sigma2^2, sigma3} after margins, clamped at 0")
    alpha: float
    stsp_lb: float
    cond_ub: float
    support_used: SupportSet
    tau: float = 0.0
    gap_bound: float = 0.0
    margin_x: float = 0.0
    margin_residual: float = 0.0
    raw_sigma1: float = 0.0
    raw_sigma3: float = 0.0
    ill_posed: bool = False
    notes: List[str] = Field(default_factory=list)


def _subset(inst: LassoInstance, support: SupportSet) -> np.ndarray:
    support.check_range(inst.N)
    return inst.A[:, support.to_zero_based()]


def sigma1(inst: LassoInstance, x, support: SupportSet) -> float:
    """lambda/2 - ||A_{S^c}^T (A x - y)||_inf, with the norm over an empty set taken as 0."""
    complement = support.complement(inst.N).to_zero_based()
    if complement.size == 0:
        return 0.5 * inst.lam
    x = np.asarray(x, dtype=float).reshape(-1)
    corr = inst.A[:, complement].T @ (inst.A @ x - inst.y)
    return float(0.5 * inst.lam - np.max(np.abs(corr)))


def sigma2(inst: LassoInstance, support: SupportSet) -> float:
    """Smallest eigenvalue of A_S^T A_S; +inf for the empty set, 0 when singular."""
    if support.is_empty():
        return INF
    A_S = _subset(inst, support)
    if A_S.shape[1] > A_S.shape[0]:
        return 0.0
    sv = svdvals(A_S)
    smallest = float(sv[-1])
    if sv[0] == 0.0 or smallest <= SINGULAR_RTOL_FACTOR * max(A_S.shape) * np.finfo(float).eps * sv[0]:
        return 0.0
    return smallest * smallest


def sigma3(inst: LassoInstance, x, support: SupportSet) -> float:
    """min_{i in S} |x_i|; +inf for the empty set."""
    if support.is_empty():
        return INF
    support.check_range(inst.N)
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(np.min(np.abs(x[support.to_zero_based()])))


def q_poly(nu: float, xi: float, lam: float, N: int) -> float:
    """q(nu, xi) = 96 nu^5 + 12 nu^3 (1 + lambda sqrt(N)) sqrt(xi) + xi (2 nu^3 / lambda + 3 nu)."""
    if nu < 1 or xi < 0 or lam <= 0 or N < 1:
        raise DomainError(f"q_poly needs nu >= 1, xi >= 0, lambda > 0, N >= 1; got {nu}, {xi}, {lam}, {N}")
    nu3 = nu ** 3
    return 96.0 * nu ** 5 + 12.0 * nu3 * (1.0 + lam * math.sqrt(N)) * math.sqrt(xi) + xi * (2.0 * nu3 / lam + 3.0 * nu)


def stsp_lower_bound(alpha: float, sigma: float, m: int, N: int, lam: float) -> float:
    """(mN)^(-1/2) min{sigma^2/q(alpha, sigma), sqrt(sigma)/(6 alpha), alpha}; 0 when sigma <= 0."""
    if alpha < 1:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    if not sigma > 0:
        return 0.0
    if math.isinf(sigma):
        raise DomainError("sigma must be finite")
    bound = min(sigma * sigma / q_poly(alpha, sigma, lam, N), math.sqrt(sigma) / (6.0 * alpha), alpha)
    return bound / math.sqrt(m * N)


def _drift_margin(inst: LassoInstance, nonzero: SupportSet, gap: float) -> float:
    """
    eps_x = 2 sqrt(gap)/sigma_min(A_T) over the nonzero coordinates T of the iterate.

    0 for the zero iterate and +inf when A_T is singular.
    """
    if nonzero.is_empty() or gap <= 0:
        return 0.0
    s2 = sigma2(inst, nonzero)
    if s2 == 0.0:
        return INF
    return MARGIN_CONSTANT * math.sqrt(gap) / math.sqrt(s2)


def _crosses_threshold(magnitudes: np.ndarray, tau: float, margin: float) -> np.ndarray:
    """Mask of nonzero |x_i| whose interval [|x_i| - margin, |x_i| + margin] straddles tau."""
    above = magnitudes > tau
    crosses = np.where(above, magnitudes - margin <= tau, magnitudes + margin > tau)
    return crosses & (magnitudes > 0)


def certificate(inst: LassoInstance, sol: LassoSolution, tau: float) -> SigmaCertificate:
    """
    Numerical sigma-certificate of a solved instance.

    The support is read off the thresholded solution. The sigma values are
    evaluated at the thresholded x and then shrunk by margins derived from the
    duality gap: eps_x = 2 sqrt(gap)/sigma_min(A_T), with T the nonzero
    coordinates of x, is subtracted from sigma3, and
    ||A||_2 maxcol(A) (eps_x + ||x - x_thr||_2) plus a rounding term is added
    to the off-support correlation inside sigma1. Exact zeros are never
    ambiguous; a positive sigma1 keeps the minimizer at zero there.

    Raises:
        UncertainSupportError: the eps_x interval around some nonzero |x_i| straddles tau
    """
    x = np.asarray(sol.x, dtype=float).reshape(-1)
    support = support_from_threshold(x, tau)
    s2 = sigma2(inst, support)
    notes = [SINGLE_MINIMIZER_NOTE]
    norms = inst.norms
    alpha = norms.trunc2

    if s2 == 0.0:
        notes.append("A_S is singular: the bound degenerates to stsp_lb = 0")
        logger.warning(f"Singular A_S on support {support}; condition upper bound is infinite")
        return SigmaCertificate(
            sigma1=sigma1(inst, x, support), sigma2=0.0, sigma3=sigma3(inst, x, support), sigma=0.0,
            alpha=alpha, stsp_lb=0.0, cond_ub=INF, support_used=support, tau=tau,
            gap_bound=sol.gap_bound, margin_x=INF, ill_posed=True, notes=notes,
        )

    margin_x = _drift_margin(inst, SupportSet.from_zero_based(np.flatnonzero(x)), sol.gap_bound)
    magnitudes = np.abs(x)
    ambiguous = np.flatnonzero(_crosses_threshold(magnitudes, tau, margin_x))
    if ambiguous.size:
        raise UncertainSupportError(
            f"{ambiguous.size} coordinates within {margin_x:.3e} of tau={tau:.3e}; refusing to certify"
        )

    x_thr = np.where(magnitudes > tau, x, 0.0)
    raw_s1 = sigma1(inst, x_thr, support)
    raw_s3 = sigma3(inst, x_thr, support)
    drift = margin_x + float(np.linalg.norm(x - x_thr))
    rounding = 4.0 * inst.m * np.finfo(float).eps * max_col_norm(inst.A) * (
        norms.norm_y + norms.spectral_A * float(np.linalg.norm(x_thr)))
    margin_residual = norms.spectral_A * max_col_norm(inst.A) * drift + rounding

    s1 = raw_s1 - margin_residual
    s3 = raw_s3 - margin_x if math.isfinite(raw_s3) else INF
    sigma = max(min(s1, s2 * s2 if math.isfinite(s2) else INF, s3), 0.0)
    stsp_lb = stsp_lower_bound(alpha, sigma, inst.m, inst.N, inst.lam)
    cond_ub = 1.0 / stsp_lb if stsp_lb > 0 else INF
    if not math.isfinite(cond_ub):
        notes.append("sigma is 0 after margins: condition upper bound is infinite")
    return SigmaCertificate(
        sigma1=s1, sigma2=s2, sigma3=s3, sigma=sigma, alpha=alpha, stsp_lb=stsp_lb, cond_ub=cond_ub,
        support_used=support, tau=tau, gap_bound=sol.gap_bound, margin_x=margin_x,
        margin_residual=margin_residual, raw_sigma1=raw_s1, raw_sigma3=raw_s3,
        ill_posed=not math.isfinite(cond_ub), notes=notes,
    )


def condition_estimate(inst: LassoInstance, gap_tol: float = 1e-12, tau: float = 1e-9,
                       max_sweeps: int = 100_000) -> Tuple[LassoSolution, SigmaCertificate]:
    """Solve and certify in one call."""
    sol = solve(inst, gap_tol, max_sweeps=max_sweeps)
    return sol, certificate(inst, sol, tau)


def _perturb(inst: LassoInstance, radius: float, rng: np.random.Generator, corner: bool) -> LassoInstance:
    if corner:
        dy = radius * rng.choice([-1.0, 1.0], size=inst.y.shape)
        dA = radius * rng.choice([-1.0, 1.0], size=inst.A.shape)
    else:
        dy = rng.uniform(-radius, radius, size=inst.y.shape)
        dA = rng.uniform(-radius, radius, size=inst.A.shape)
    return LassoInstance(y=inst.y + dy, A=inst.A + dA, lam=inst.lam)


class PerturbationSearch(NamedTuple):
    found_change: bool
    cond_lb: float
    n_skipped: int = 0


def probe_condition_lb(inst: LassoInstance, radius: float, n_samples: int, seed: int,
                       tau: float = 1e-9, gap_tol: float = 1e-12, max_sweeps: int = 20_000,
                       reference: Optional[SupportSet] = None) -> PerturbationSearch:
    """
    Look for a support change among random perturbations of max-norm at most `radius`.

    Half of the samples are corners of the perturbation box, half are uniform
    inside it. Samples whose solve does not converge within `max_sweeps` are
    skipped and counted.

    Returns:
        (found_change, cond_lb, n_skipped) where cond_lb = 1/radius when a change
        was found and 0 otherwise
    """
    if not radius > 0:
        raise DomainError(f"radius must be positive, got {radius}")
    if n_samples <= 0:
        return PerturbationSearch(False, 0.0)
    if reference is None:
        reference = support_from_threshold(solve(inst, gap_tol, max_sweeps=max_sweeps).x, tau)
    rng = np.random.default_rng(seed)
    skipped = 0
    for k in range(n_samples):
        perturbed = _perturb(inst, radius, rng, corner=(k % 2 == 0))
        try:
            sol = solve(perturbed, gap_tol, max_sweeps=max_sweeps)
        except SolverBudgetError as e:
            skipped += 1
            logger.debug(f"Skipping perturbation {k}: {e}")
            continue
        if support_from_threshold(sol.x, tau) != reference:
            logger.info(f"Support change found at radius {radius:.3e} after {k + 1} samples ({skipped} skipped)")
            return PerturbationSearch(True, 1.0 / radius, skipped)
    if skipped:
        logger.info(f"{skipped} of {n_samples} perturbations skipped on solver budget at radius {radius:.3e}")
    return PerturbationSearch(False, 0.0, skipped)
