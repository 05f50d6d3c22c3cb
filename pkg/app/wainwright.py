"""
Gaussian-ensemble parameters and hypothesis checks.

Setup: rows of A are i.i.d. N(0, Sigma), y = A v + w with w ~ N(0, eta^2 I_m),
S = supp(v), s = |S|. From Sigma and S we compute

    C_min, C_max       extreme eigenvalues of Sigma_SS
    gamma              1 - ||Sigma_{S^c S} Sigma_SS^{-1}||_inf   (max abs row sum)
    rho_l, rho_u       of the Schur complement Sigma_{S^c|S}
    theta_l, theta_u   rho_l/(C_max (2 - gamma^2)), rho_u/(C_min gamma^2)
    phi_N              lambda^2 / (8 eta^2 ln N C_min theta_u m)

and the high-probability condition bound
K_hat = sqrt(mN) max{q(alpha_hat, sigma_hat)/sigma_hat^2, 6 alpha_hat/sqrt(sigma_hat), 1}.

The universal constants c3 and c_bar are not known; their defaults
(c3 = 1, c_bar = max{c3, 1}) are assumptions, and every verdict that depends on
them says so.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from app.condition import certificate, q_poly
from app.exceptions import (
    DimensionError,
    DomainError,
    NonpositiveSigmaHatError,
    SingularSigmaSSError,
    SolverBudgetError,
    UncertainSupportError,
)
from app.lasso_core import LassoInstance, SupportSet, spectral_norm, support_from_threshold
from app.solver import solve

logger = logging.getLogger(__name__)

EPS_GRID_POINTS = 512
EIGEN_FLOOR = 1e-12
CAP_CONSTANT = 542062.0
CONSTANTS_NOTE = "constants assumed: c3 and c_bar are unknown universal constants"


class EnsembleSpec(BaseModel):
    """Gaussian design specification. Sigma = None means Sigma = I_N."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, populate_by_name=True)

    Sigma: Optional[np.ndarray] = None
    v: np.ndarray
    eta: float = Field(0.0, ge=0)
    m: int = Field(..., ge=1)
    lam: float = Field(..., gt=0, alias="lambda", serialization_alias="lambda")
    c3: float = Field(1.0, gt=0)
    c_bar: Optional[float] = None

    @field_validator("v", mode="before")
    @classmethod
    def _as_vector(cls, value):
        arr = np.array(value, dtype=float).reshape(-1)
        arr.setflags(write=False)
        return arr

    @field_validator("Sigma", mode="before")
    @classmethod
    def _as_covariance(cls, value):
        if value is None or (isinstance(value, str) and value.lower() == "identity"):
            return None
        arr = np.array(value, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"Sigma must be square, got shape {arr.shape}")
        if not np.allclose(arr, arr.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(arr))))):
            raise DomainError("Sigma must be symmetric")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.Sigma is not None and self.Sigma.shape[0] != self.v.shape[0]:
            raise DimensionError(f"Sigma is {self.Sigma.shape} but v has length {self.v.shape[0]}")
        return self

    @field_serializer("v")
    def _serialize_v(self, value):
        return value.tolist()

    @field_serializer("Sigma")
    def _serialize_sigma(self, value):
        return "identity" if value is None else value.tolist()

    @property
    def N(self) -> int:
        return int(self.v.shape[0])

    @property
    def support(self) -> SupportSet:
        return SupportSet.from_zero_based(np.flatnonzero(self.v))

    @property
    def s(self) -> int:
        return int(np.count_nonzero(self.v))

    @property
    def c_bar_value(self) -> float:
        return self.c_bar if self.c_bar is not None else max(self.c3, 1.0)

    @property
    def is_isotropic(self) -> bool:
        return self.Sigma is None or bool(np.array_equal(self.Sigma, np.eye(self.N)))


class CovarianceStructure(BaseModel):
    """Structural parameters that depend on Sigma and S only."""

    model_config = ConfigDict(frozen=True)

    c_min: float
    c_max: float
    gamma: float
    rho_l: float
    rho_u: float
    theta_l: float
    theta_u: float
    rho_l_defined: bool = True


class WainwrightParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    c_min: float
    c_max: float
    gamma: float
    rho_l: float
    rho_u: float
    theta_l: float
    theta_u: float
    phi_N: float
    g_lambda: float
    sigma_hat: Optional[float] = None
    alpha_hat: Optional[float] = None
    k_hat: Optional[float] = None
    a0_ok: Optional[bool] = None
    ai_ok: Optional[bool] = None
    aii_ok: Optional[bool] = None
    recovery_ok: Optional[bool] = None
    epsilon_used: Optional[float] = None
    epsilon_threshold: Optional[float] = None
    epsilon_rule: str = "general"
    rho_l_defined: bool = True
    phi_infinite: bool = False
    c3: float = 1.0
    notes: List[str] = Field(default_factory=list)


class SimpleHypotheses(BaseModel):
    """Verdicts for the isotropic, noiseless sufficient conditions."""

    model_config = ConfigDict(frozen=True)

    side_ok: bool
    i_ok: bool
    ii_ok: bool
    iii_ok: bool
    isotropic_ok: bool
    noiseless_ok: bool
    epsilon_used: Optional[float] = None
    epsilon_window_empty: bool = False
    c_bar: float
    k_hat: Optional[float] = None
    k_cap: float
    notes: List[str] = Field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return all((self.side_ok, self.i_ok, self.ii_ok, self.iii_ok, self.isotropic_ok, self.noiseless_ok))


def submatrix(Sigma, G: SupportSet, H: SupportSet) -> np.ndarray:
    """Restriction of Sigma to rows G and columns H (1-based index sets)."""
    Sigma = np.asarray(Sigma, dtype=float)
    G.check_range(Sigma.shape[0])
    H.check_range(Sigma.shape[1])
    return Sigma[np.ix_(G.to_zero_based(), H.to_zero_based())]


def _rho_values(M: np.ndarray) -> Tuple[float, float, bool]:
    diag = np.diag(M)
    rho_u = float(np.max(diag))
    if M.shape[0] < 2:
        return math.inf, rho_u, False
    pair = (diag[:, None] + diag[None, :] - 2.0 * M) / 2.0
    np.fill_diagonal(pair, np.inf)
    return float(np.min(pair)), rho_u, True


def structure(spec: EnsembleSpec) -> CovarianceStructure:
    """C_min, C_max, gamma, rho's and theta's for (Sigma, S)."""
    if spec.s == 0:
        raise DomainError("v = 0: the support S is empty")
    n_off = spec.N - spec.s
    if spec.Sigma is None:
        defined = n_off >= 2
        rho_l = 1.0 if defined else math.inf
        return CovarianceStructure(c_min=1.0, c_max=1.0, gamma=1.0, rho_l=rho_l, rho_u=1.0 if n_off else 0.0,
                                   theta_l=rho_l, theta_u=1.0 if n_off else 0.0, rho_l_defined=defined)

    support = spec.support
    complement = support.complement(spec.N)
    sigma_ss = submatrix(spec.Sigma, support, support)
    eigs = np.linalg.eigvalsh(sigma_ss)
    c_min, c_max = float(eigs[0]), float(eigs[-1])
    if c_min <= EIGEN_FLOOR * max(c_max, 0.0) or c_min <= 0.0:
        raise SingularSigmaSSError(f"Sigma_SS is singular (eigenvalues {c_min:.3e}..{c_max:.3e})")

    if complement.is_empty():
        return CovarianceStructure(c_min=c_min, c_max=c_max, gamma=1.0, rho_l=math.inf, rho_u=0.0,
                                   theta_l=math.inf, theta_u=0.0, rho_l_defined=False)

    sigma_cs = submatrix(spec.Sigma, complement, support)
    sigma_cc = submatrix(spec.Sigma, complement, complement)
    mixing = np.linalg.solve(sigma_ss, sigma_cs.T).T
    gamma = float(1.0 - np.max(np.sum(np.abs(mixing), axis=1)))
    schur = sigma_cc - mixing @ sigma_cs.T
    rho_l, rho_u, defined = _rho_values(schur)
    theta_l = rho_l / (c_max * (2.0 - gamma ** 2)) if math.isfinite(rho_l) else math.inf
    theta_u = rho_u / (c_min * gamma ** 2) if gamma != 0 else math.inf
    return CovarianceStructure(c_min=c_min, c_max=c_max, gamma=gamma, rho_l=rho_l, rho_u=rho_u,
                               theta_l=theta_l, theta_u=theta_u, rho_l_defined=defined)


def phi_formula(lam: float, eta: float, N: int, c_min: float, theta_u: float, m: int) -> float:
    """+inf when eta = 0 or when S^c is empty (theta_u = 0)."""
    if N < 2:
        raise DomainError(f"phi_N needs N >= 2, got {N}")
    if eta == 0 or theta_u == 0:
        return math.inf
    return lam ** 2 / (8.0 * eta ** 2 * math.log(N) * c_min * theta_u * m)


def phi_n(spec: EnsembleSpec) -> float:
    """lambda^2 / (8 eta^2 ln(N) C_min theta_u m); +inf in the noiseless case."""
    st = structure(spec)
    return phi_formula(spec.lam, spec.eta, spec.N, st.c_min, st.theta_u, spec.m)


def m_bar_formula(eps: float, s: int, m: int, ln_n: float, phi: float, c_min: float, theta_u: float) -> float:
    """(1 + eps)/(C_min theta_u m) (s theta_u + m/(2 ln(N) phi_N)); the second term vanishes for phi_N = inf."""
    if not phi > 0 or ln_n <= 0:
        raise DomainError(f"m_bar needs phi_N > 0 and ln N > 0, got {phi}, {ln_n}")
    base = s / (c_min * m)
    if math.isinf(phi):
        return (1.0 + eps) * base
    return (1.0 + eps) * (base + 1.0 / (2.0 * ln_n * phi * c_min * theta_u))


def m_bar(spec: EnsembleSpec, eps: float) -> float:
    st = structure(spec)
    phi = phi_formula(spec.lam, spec.eta, spec.N, st.c_min, st.theta_u, spec.m)
    return m_bar_formula(eps, spec.s, spec.m, math.log(spec.N), phi, st.c_min, st.theta_u)


def inverse_sqrt_inf_norm(Sigma: Optional[np.ndarray]) -> float:
    """||Sigma^{-1/2}||_inf via the symmetric eigendecomposition."""
    if Sigma is None:
        return 1.0
    eigvals, eigvecs = np.linalg.eigh(Sigma)
    if eigvals[0] < EIGEN_FLOOR * eigvals[-1] or eigvals[0] <= 0:
        raise DomainError(f"Sigma is numerically singular (min eigenvalue {eigvals[0]:.3e})")
    inv_sqrt = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    return float(np.max(np.sum(np.abs(inv_sqrt), axis=1)))


def g_lambda(spec: EnsembleSpec) -> float:
    """c3 lambda ||Sigma^{-1/2}||_inf^2 / (2m) + 20 sqrt(eta^2 ln(s) / (C_min m))."""
    if spec.s == 0:
        raise DomainError("g(lambda) is undefined for v = 0")
    st = structure(spec)
    norm = inverse_sqrt_inf_norm(spec.Sigma)
    return spec.c3 * spec.lam * norm ** 2 / (2.0 * spec.m) + 20.0 * math.sqrt(
        spec.eta ** 2 * math.log(spec.s) / (st.c_min * spec.m))


def epsilon_window(spec: EnsembleSpec, c_min: float, rule: str = "general") -> Tuple[float, np.ndarray]:
    """
    Lower threshold and scan grid for epsilon in (threshold, 1/2).

    rule "general" uses max{8 C_min sqrt(s/m), sqrt(s/m)}, rule "simple" uses 8 sqrt(s/m).
    """
    ratio = math.sqrt(spec.s / spec.m)
    if rule == "general":
        threshold = max(8.0 * c_min * ratio, ratio)
    elif rule == "simple":
        threshold = 8.0 * ratio
    else:
        raise DomainError(f"Unknown epsilon rule '{rule}'")
    if threshold >= 0.5:
        return threshold, np.empty(0)
    return threshold, np.linspace(threshold, 0.5, EPS_GRID_POINTS + 2)[1:-1]


def _sigma_norm2(spec: EnsembleSpec) -> float:
    if spec.Sigma is None:
        return 1.0
    return float(np.linalg.eigvalsh(spec.Sigma)[-1])


def k_hat_formula(sigma_hat: float, alpha_hat: float, m: int, N: int, lam: float) -> float:
    """sqrt(mN) max{q(alpha, sigma)/sigma^2, 6 alpha/sqrt(sigma), 1}."""
    if not sigma_hat > 0:
        raise NonpositiveSigmaHatError(f"sigma_hat must be positive, got {sigma_hat}")
    return math.sqrt(m * N) * max(q_poly(alpha_hat, sigma_hat, lam, N) / sigma_hat ** 2,
                                  6.0 * alpha_hat / math.sqrt(sigma_hat), 1.0)


def k_hat(spec: EnsembleSpec) -> Tuple[float, float, float]:
    """
    (sigma_hat, alpha_hat, K_hat) of the high-probability condition bound.

    Raises:
        NonpositiveSigmaHatError: min |v_S| - g(lambda) <= 0
    """
    st = structure(spec)
    s, m, N = spec.s, spec.m, spec.N
    v_min = float(np.min(np.abs(spec.v[spec.v != 0])))
    sigma_hat = min(st.c_min ** 2 / (4.0 * (math.sqrt(s) + math.sqrt(m)) ** 4), spec.lam / 2.0, v_min - g_lambda(spec))
    if not sigma_hat > 0:
        raise NonpositiveSigmaHatError(f"sigma_hat = {sigma_hat:.3e} <= 0; assumption on min |v_S| fails")
    alpha_hat = max(1.0, math.sqrt(2.0 * m) * (spec.eta + st.c_max * float(np.linalg.norm(spec.v))),
                    math.sqrt(_sigma_norm2(spec)) * (3.0 * math.sqrt(m) + 6.0 * math.sqrt(N)))
    return sigma_hat, alpha_hat, k_hat_formula(sigma_hat, alpha_hat, m, N, spec.lam)


def params(spec: EnsembleSpec) -> WainwrightParams:
    """All parameters; verdict fields are left unset (see check_assumptions)."""
    st = structure(spec)
    phi = phi_formula(spec.lam, spec.eta, spec.N, st.c_min, st.theta_u, spec.m)
    g = g_lambda(spec)
    notes = [CONSTANTS_NOTE]
    if spec.s == spec.N:
        notes.append("S^c is empty: off-support parameters are vacuous and phi_N = +inf")
    elif not st.rho_l_defined:
        notes.append("rho_l is a minimum over an empty set of pairs: reported as +inf")
    try:
        sigma_hat, alpha_hat, k = k_hat(spec)
    except NonpositiveSigmaHatError as e:
        logger.info(f"K_hat not computed: {e}")
        sigma_hat = alpha_hat = k = None
        notes.append("K_hat not computed: sigma_hat <= 0")
    return WainwrightParams(
        c_min=st.c_min, c_max=st.c_max, gamma=st.gamma, rho_l=st.rho_l, rho_u=st.rho_u,
        theta_l=st.theta_l, theta_u=st.theta_u, phi_N=phi, g_lambda=g,
        sigma_hat=sigma_hat, alpha_hat=alpha_hat, k_hat=k, rho_l_defined=st.rho_l_defined,
        phi_infinite=math.isinf(phi), c3=spec.c3, notes=notes,
    )


def _first_witness(grid: np.ndarray, holds) -> Optional[float]:
    for eps in grid:
        if holds(float(eps)):
            return float(eps)
    return None


def check_recovery_condition(spec: EnsembleSpec, rule: str = "general") -> Tuple[bool, Optional[float]]:
    """
    The classical recovery condition

        m / (2 s ln(N - s)) > (1 + eps) theta_u (1 + 4 m^2 eta^2 C_min / (lambda^2 s))

    for some eps in the window, together with phi_N >= 2 and gamma > 0.
    """
    st = structure(spec)
    s, m, N = spec.s, spec.m, spec.N
    if N - s < 2:
        return False, None
    phi = phi_formula(spec.lam, spec.eta, N, st.c_min, st.theta_u, m)
    if st.gamma <= 0 or phi < 2:
        return False, None
    _, grid = epsilon_window(spec, st.c_min, rule)
    lhs = m / (2.0 * s * math.log(N - s))
    noise = 1.0 + 4.0 * m ** 2 * spec.eta ** 2 * st.c_min / (spec.lam ** 2 * s)
    witness = _first_witness(grid, lambda eps: lhs > (1.0 + eps) * st.theta_u * noise)
    return witness is not None, witness


def check_assumptions(spec: EnsembleSpec, rule: str = "general") -> WainwrightParams:
    """
    Verdicts for (a0) gamma > 0, (ai) the measurement bound for some eps in the
    window, and (aii) g(lambda) < min |v_S|. Failed checks are verdicts.

    The scan picks the smallest eps on the grid that satisfies (ai); the left
    side of (ai) decreases in eps, so that is the witness with the most slack.
    """
    base = params(spec)
    s, m, N = spec.s, spec.m, spec.N
    threshold, grid = epsilon_window(spec, base.c_min, rule)
    notes = list(base.notes)
    if grid.size == 0:
        notes.append(f"epsilon window ({threshold:.4g}, 1/2) is empty")

    if N - s >= 2:
        rhs = 12.0 * s * math.log(N - s) * base.theta_u
        if math.isinf(base.phi_N):
            six_over_phi = 0.0
        else:
            six_over_phi = 6.0 / base.phi_N if base.phi_N > 0 else math.inf
        witness = _first_witness(grid, lambda eps: m * (1.0 / (1.0 + eps) - six_over_phi) > rhs)
    else:
        witness = None
        notes.append("ln(N - s) <= 0: the measurement bound is not meaningful")
    v_min = float(np.min(np.abs(spec.v[spec.v != 0])))
    recovery_ok, _ = check_recovery_condition(spec, rule)

    result = base.model_copy(update={
        "a0_ok": base.gamma > 0,
        "ai_ok": witness is not None,
        "aii_ok": base.g_lambda < v_min,
        "recovery_ok": recovery_ok,
        "epsilon_used": witness,
        "epsilon_threshold": threshold,
        "epsilon_rule": rule,
        "notes": notes,
    })
    logger.info(f"Assumptions: a0={result.a0_ok} ai={result.ai_ok} aii={result.aii_ok} (eps={witness})")
    return result


def k_cap(spec: EnsembleSpec) -> float:
    """542062 N^7.5 max{1, ||v||_2}^5."""
    return CAP_CONSTANT * spec.N ** 7.5 * max(1.0, float(np.linalg.norm(spec.v))) ** 5


def check_simple(spec: EnsembleSpec) -> SimpleHypotheses:
    """
    Verdicts for the isotropic noiseless conditions:
    side conditions ln(N/2) <= s <= N/8 and m <= N/9,
    (i) m > (1 + eps) 12 s ln(N - s) for some eps in (8 sqrt(s/m), 1/2),
    (ii) c_bar lambda < 2 m min |v_S| - 1/N^2,
    (iii) lambda >= 2/N^2.
    """
    s, m, N = spec.s, spec.m, spec.N
    c_bar = spec.c_bar_value
    notes = [CONSTANTS_NOTE]
    side_ok = math.log(N / 2.0) <= s <= N / 8.0 and m <= N / 9.0
    threshold, grid = epsilon_window(spec, 1.0, "simple")
    if N - s >= 2:
        witness = _first_witness(grid, lambda eps: m > (1.0 + eps) * 12.0 * s * math.log(N - s))
    else:
        witness = None
    if grid.size == 0:
        notes.append(f"epsilon window ({threshold:.4g}, 1/2) is empty")
    v_min = float(np.min(np.abs(spec.v[spec.v != 0]))) if s else 0.0
    ii_ok = c_bar * spec.lam < 2.0 * m * v_min - 1.0 / N ** 2
    iii_ok = spec.lam >= 2.0 / N ** 2
    noiseless_ok = spec.eta == 0
    if not noiseless_ok:
        notes.append("eta > 0: these conditions cover the noiseless case only")

    k_value = None
    try:
        k_value = k_hat(spec)[2]
    except NonpositiveSigmaHatError:
        notes.append("K_hat not computed: sigma_hat <= 0")
    return SimpleHypotheses(
        side_ok=side_ok, i_ok=witness is not None, ii_ok=ii_ok, iii_ok=iii_ok,
        isotropic_ok=spec.is_isotropic, noiseless_ok=noiseless_ok, epsilon_used=witness,
        epsilon_window_empty=grid.size == 0, c_bar=c_bar, k_hat=k_value, k_cap=k_cap(spec), notes=notes,
    )


def digits_bound(spec: EnsembleSpec) -> int:
    """ceil(log2(K_hat max{1, ||v||_2})), the digit count a trustworthy selector needs in this regime."""
    _, _, k = k_hat(spec)
    return int(math.ceil(math.log2(k * max(1.0, float(np.linalg.norm(spec.v))))))


def draw_instance(spec: EnsembleSpec, seed: int, trial: int = 0) -> LassoInstance:
    """y = A v + w with rows of A ~ N(0, Sigma) and w ~ N(0, eta^2 I_m)."""
    from app.ensembles import gaussian_rows, trial_generator

    rng = trial_generator(seed, trial)
    A = gaussian_rows(rng, spec.m, spec.N, spec.Sigma)
    w = spec.eta * rng.standard_normal(spec.m) if spec.eta > 0 else np.zeros(spec.m)
    return LassoInstance(y=A @ spec.v + w, A=A, lam=spec.lam)


def norm_tail_fraction(spec: EnsembleSpec, draws: int, seed: int) -> Tuple[float, float, float]:
    """
    Empirical P(||A||_2 >= ||Sigma||_2^{1/2} (3 sqrt(m) + 6 sqrt(N))).

    Returns:
        (fraction, Monte Carlo standard error, threshold)
    """
    from app.ensembles import gaussian_rows, trial_generator

    threshold = math.sqrt(_sigma_norm2(spec)) * (3.0 * math.sqrt(spec.m) + 6.0 * math.sqrt(spec.N))
    if draws <= 0:
        return 0.0, 0.0, threshold
    hits = 0
    for trial in range(draws):
        A = gaussian_rows(trial_generator(seed, trial), spec.m, spec.N, spec.Sigma)
        hits += spectral_norm(A) >= threshold
    fraction = hits / draws
    return fraction, math.sqrt(fraction * (1.0 - fraction) / draws), threshold


class ConditionTail(BaseModel):
    model_config = ConfigDict(frozen=True)

    draws: int
    evaluated: int
    refused: int = 0
    k_hat: float
    fraction_cond_above_k_hat: float
    recovery_rate: float


def empirical_condition_tail(spec: EnsembleSpec, draws: int, seed: int, gap_tol: float = 1e-12,
                             tau: float = 1e-9, max_sweeps: int = 100_000) -> ConditionTail:
    """
    Fraction of draws whose certified condition upper bound reaches K_hat, and
    the fraction whose solved support equals supp(v). Draws where the solver
    runs out of budget or the support is ambiguous count as exceeding K_hat;
    the ambiguous ones are also reported in `refused`.
    """
    _, _, k = k_hat(spec)
    above = recovered = evaluated = refused = 0
    for trial in range(draws):
        inst = draw_instance(spec, seed, trial)
        try:
            sol = solve(inst, gap_tol, max_sweeps=max_sweeps)
        except SolverBudgetError:
            above += 1
            continue
        evaluated += 1
        recovered += support_from_threshold(sol.x, tau) == spec.support
        try:
            cert = certificate(inst, sol, tau)
            above += cert.cond_ub >= k
        except UncertainSupportError as e:
            logger.debug(f"Draw {trial} refused: {e}")
            refused += 1
            above += 1
    return ConditionTail(
        draws=draws, evaluated=evaluated, refused=refused, k_hat=k,
        fraction_cond_above_k_hat=above / draws if draws else 0.0,
        recovery_rate=recovered / draws if draws else 0.0,
    )
